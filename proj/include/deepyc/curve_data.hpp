#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "deepyc/curve_types.hpp"
#include "deepyc/nelson_siegel.hpp"

namespace deepyc {

enum class PanelLayout { Long, Wide };

struct LoadOptions {
    /// Multiplier applied to every parsed rate; pass 0.01 for files in percent.
    double rate_scale = 1.0;
    /// Force a layout instead of detecting it from the header.
    std::optional<PanelLayout> layout;
};

/// Loads a panel from CSV.
///
/// Long layout: header `family,date,tenor,rate`. Wide layout: header
/// `family,date,<t1>,<t2>,...` with tenor values as column names. Lines
/// starting with '#' are ignored. The result is fully dense: any (family,
/// date) missing a tenor of the grid is an error naming family, date and
/// tenor. Duplicate observations and malformed rows are errors carrying the
/// offending line number.
YieldPanel load_panel(const std::string& path, const LoadOptions& opts = {});

/// Writes a panel in either layout; round-trips through load_panel.
void save_panel(const YieldPanel& panel, const std::string& path,
                PanelLayout layout = PanelLayout::Long,
                const std::vector<std::string>& header_comments = {});

/// Partitions by date: first panel holds dates <= t0, second the rest.
/// Throws DataError when either side would be empty.
std::pair<YieldPanel, YieldPanel> split(const YieldPanel& panel, const SplitSpec& spec);

/// All (family, as_of) windows with a complete (L+1)-row history and a
/// next-date target. Requires at least L+2 dates; yields
/// n_families * (n_dates - L - 1) samples.
std::vector<WindowSample> make_windows(const YieldPanel& panel, int lookback);

/// Factor dynamics for the synthetic generator: independent AR(1) per factor.
struct ArPathSpec {
    Eigen::VectorXd psi0;   // per-factor intercepts
    Eigen::VectorXd psi1;   // per-factor slopes, each |psi1| < 1
    Eigen::VectorXd sigma;  // per-factor innovation standard deviations
};

/// First-order VAR factor dynamics with spectral radius of A below 1.
struct VarPathSpec {
    Eigen::VectorXd a0;
    Eigen::MatrixXd A;
    Eigen::MatrixXd E;  // innovation covariance, symmetric PSD
};

/// Specification of a synthetic panel whose curves follow the NS/NSS equation
/// exactly up to injected measurement noise.
struct GeneratorSpec {
    CurveModel model = CurveModel::NS;
    Eigen::VectorXd lambdas;              // 1 decay for NS, 2 for NSS
    std::vector<std::string> families;
    std::vector<double> tenors;
    std::string tenor_unit = "months";
    int n_dates = 0;
    Eigen::VectorXd beta_start;           // factor vector at the first date
    std::variant<ArPathSpec, VarPathSpec> dynamics;
    double sigma_eps = 0.0;               // per-point measurement noise sd
    std::string start_month = "2015-12";  // first YYYY-MM date label
};

/// Deterministic synthetic panel: same spec and seed give bit-identical
/// output. Rejects non-stationary dynamics (|psi1| >= 1, spectral radius of
/// A >= 1).
YieldPanel synth_panel(const GeneratorSpec& spec, std::uint64_t seed);

/// Generator spec (de)serialization; JSON schema documented in the README.
GeneratorSpec load_generator_spec(const std::string& path);

}  // namespace deepyc
