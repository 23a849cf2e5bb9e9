#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace deepyc {

/// Ordered time-to-maturity axis shared by every curve in a panel.
struct TenorGrid {
    Eigen::VectorXd tenors;       // strictly increasing, all positive
    std::string unit = "months";
};

/// Validates and builds a grid; throws DataError on empty / non-positive /
/// non-increasing tenors.
TenorGrid make_tenor_grid(const std::vector<double>& tenors, std::string unit = "months");

bool same_grid(const TenorGrid& a, const TenorGrid& b, double tol = 1e-12);
std::string grid_to_string(const TenorGrid& g);

/// One labeled curve series (a country or a rating bucket).
struct CurveFamily {
    std::string id;
    int index = 0;  // position within the owning panel's family set
};

/// Dense multi-family panel of spot rates.
///
/// rates[f] is a dates-by-tenors matrix for family f; all families share the
/// same date axis and tenor grid. Dates are opaque ordered labels (ISO-style
/// strings sort correctly); no calendar arithmetic is performed. Instances
/// are immutable after construction and safe to share across threads.
struct YieldPanel {
    std::vector<CurveFamily> families;
    TenorGrid grid;
    std::vector<std::string> dates;
    std::vector<Eigen::MatrixXd> rates;

    int n_families() const { return static_cast<int>(families.size()); }
    int n_dates() const { return static_cast<int>(dates.size()); }
    int n_tenors() const { return static_cast<int>(grid.tenors.size()); }

    /// Index of a family id, or -1 when absent.
    int family_index(const std::string& id) const;
    /// Index of a date label, or -1 when absent.
    int date_index(const std::string& date) const;

    /// Checks dimension consistency, finite rates, unique family ids and
    /// strictly increasing dates. Throws DataError on violation.
    void validate() const;
};

/// One training instance: an (L+1) x M look-back block ending at `as_of`,
/// with the next date's curve as target.
struct WindowSample {
    CurveFamily family;
    Eigen::MatrixXd history;  // rows are dates as_of-L .. as_of
    Eigen::VectorXd target;   // curve at the date after as_of
    std::string as_of;
};

/// Learning/testing partition point; the boundary date goes to the learning side.
struct SplitSpec {
    std::string t0;
};

}  // namespace deepyc
