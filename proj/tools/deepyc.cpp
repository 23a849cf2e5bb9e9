#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deepyc/curve_data.hpp"
#include "deepyc/errors.hpp"
#include "deepyc/pipeline.hpp"
#include "deepyc/serialize.hpp"

namespace {

using namespace deepyc;

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 1;
    if (dynamic_cast<const DataError*>(&e)) return 2;
    if (dynamic_cast<const NumericError*>(&e)) return 3;
    return 3;
}

PanelLayout layout_from_string(const std::string& s) {
    if (s == "long") return PanelLayout::Long;
    if (s == "wide") return PanelLayout::Wide;
    throw ConfigError("unknown layout '" + s + "' (expected long or wide)");
}

void print_summary(const pipeline::PanelSummary& s) {
    std::cout << "families (" << s.families.size() << "):";
    for (const auto& f : s.families) std::cout << ' ' << f;
    std::cout << "\ndates: " << s.n_dates << " from " << s.first_date << " to "
              << s.last_date << "\ntenor grid: " << s.grid
              << "\ndensity: ok (" << s.n_points << " points)\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-family yield curve calibration, forecasting and evaluation"};
    app.require_subcommand(1);

    // ingest
    std::string in_panel, in_export, in_layout = "long";
    double in_scale = 1.0;
    auto* ingest = app.add_subcommand("ingest", "Load, validate and summarize a panel");
    ingest->add_option("--panel", in_panel, "panel CSV")->required();
    ingest->add_option("--rate-scale", in_scale, "multiplier applied to parsed rates");
    ingest->add_option("--export", in_export, "re-export the normalized panel");
    ingest->add_option("--layout", in_layout, "export layout: long|wide");

    // synth
    std::string sy_spec, sy_out, sy_layout = "long";
    std::uint64_t sy_seed = 1;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic panel");
    synth->add_option("--spec", sy_spec, "generator spec JSON")->required();
    synth->add_option("--seed", sy_seed, "generator seed");
    synth->add_option("--out", sy_out, "output panel CSV")->required();
    synth->add_option("--layout", sy_layout, "output layout: long|wide");

    // fit-benchmark
    std::string fb_panel, fb_t0, fb_model, fb_dynamics, fb_out;
    double fb_scale = 1.0, fb_alpha = 0.95;
    std::vector<double> fb_lambdas, fb_grid;
    auto* bench = app.add_subcommand("fit-benchmark",
                                     "Factor-model benchmark forecast and report");
    bench->add_option("--panel", fb_panel, "panel CSV")->required();
    bench->add_option("--rate-scale", fb_scale, "rate multiplier");
    bench->add_option("--t0", fb_t0, "learning/testing cutoff date")->required();
    bench->add_option("--model", fb_model, "ns|nss")->required();
    bench->add_option("--dynamics", fb_dynamics, "ar|var")->required();
    bench->add_option("--alpha", fb_alpha, "nominal interval coverage");
    bench->add_option("--lambda", fb_lambdas, "decay parameter(s)")->expected(1, 2);
    bench->add_option("--lambda-grid", fb_grid,
                      "candidate decays; picks the pooled-SSE minimizer");
    bench->add_option("--out-dir", fb_out, "output directory")->required();

    // train
    std::string tr_config;
    auto* train = app.add_subcommand("train", "Train an ensemble from a run config");
    train->add_option("--config", tr_config, "run config JSON")->required();

    // forecast
    std::string fc_config;
    bool fc_no_members = false;
    auto* forecast = app.add_subcommand("forecast", "Forecast the testing dates");
    forecast->add_option("--config", fc_config, "run config JSON")->required();
    forecast->add_flag("--no-members", fc_no_members, "write only the ensemble CSV");

    // evaluate
    std::string ev_panel, ev_forecast, ev_out, ev_name;
    double ev_scale = 1.0;
    std::vector<std::string> ev_members;
    auto* evaluate = app.add_subcommand("evaluate", "Score forecasts against a panel");
    evaluate->add_option("--panel", ev_panel, "realized panel CSV")->required();
    evaluate->add_option("--rate-scale", ev_scale, "rate multiplier");
    evaluate->add_option("--forecast", ev_forecast, "forecast CSV")->required();
    evaluate->add_option("--member", ev_members, "member forecast CSVs for the width identity");
    evaluate->add_option("--out", ev_out, "report JSON path")->required();
    evaluate->add_option("--name", ev_name, "model name used in the report");

    // transfer
    std::string tf_config, tf_source;
    auto* transfer = app.add_subcommand("transfer",
                                        "Fine-tune a frozen trunk on a new panel");
    transfer->add_option("--config", tf_config, "run config JSON")->required();
    transfer->add_option("--source", tf_source, "source checkpoint")->required();

    // diagnose
    std::string dg_checkpoint, dg_panel, dg_t0, dg_out;
    double dg_scale = 1.0;
    int dg_components = 4;
    auto* diagnose = app.add_subcommand("diagnose",
                                        "Feature PCA and latent-factor correlations");
    diagnose->add_option("--checkpoint", dg_checkpoint, "model checkpoint")->required();
    diagnose->add_option("--panel", dg_panel, "panel CSV")->required();
    diagnose->add_option("--rate-scale", dg_scale, "rate multiplier");
    diagnose->add_option("--t0", dg_t0, "restrict to the learning sample before t0");
    diagnose->add_option("--components", dg_components, "principal components to keep");
    diagnose->add_option("--out-dir", dg_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*ingest) {
            std::optional<std::string> export_path;
            if (!in_export.empty()) export_path = in_export;
            auto summary = pipeline::run_ingest(in_panel, in_scale, export_path,
                                                layout_from_string(in_layout));
            print_summary(summary);
        } else if (*synth) {
            GeneratorSpec spec = load_generator_spec(sy_spec);
            YieldPanel panel = synth_panel(spec, sy_seed);
            nlohmann::json meta = {{"command", "synth"}, {"spec", sy_spec}, {"seed", sy_seed}};
            save_panel(panel, sy_out, layout_from_string(sy_layout),
                       {"config_hash=" + config_hash(meta)});
            print_summary(pipeline::summarize(panel));
        } else if (*bench) {
            CurveModel model;
            if (fb_model == "ns")
                model = CurveModel::NS;
            else if (fb_model == "nss")
                model = CurveModel::NSS;
            else
                throw ConfigError("unknown model '" + fb_model + "' (expected ns or nss)");
            Eigen::VectorXd lambdas(static_cast<Eigen::Index>(fb_lambdas.size()));
            for (std::size_t i = 0; i < fb_lambdas.size(); ++i)
                lambdas(static_cast<Eigen::Index>(i)) = fb_lambdas[i];
            auto result = pipeline::run_fit_benchmark(
                fb_panel, fb_scale, fb_t0, model,
                pipeline::dynamics_from_string(fb_dynamics), fb_alpha, lambdas, fb_out,
                fb_grid);
            for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
            std::cout << "lambdas:";
            for (Eigen::Index i = 0; i < result.lambdas_used.size(); ++i)
                std::cout << ' ' << result.lambdas_used(i);
            std::cout << '\n'
                      << render_report(result.report) << '\n'
                      << "factors: " << result.factors_path << '\n'
                      << "forecasts: " << result.forecast_path << '\n'
                      << "report: " << result.report_path << '\n';
        } else if (*train) {
            auto cfg = pipeline::load_run_config(tr_config);
            auto out = pipeline::run_train(cfg);
            std::cout << "checkpoints: " << out.checkpoint_paths.size() << " under "
                      << cfg.out_dir << '\n'
                      << "loss history: " << out.loss_history_path << '\n';
        } else if (*forecast) {
            auto cfg = pipeline::load_run_config(fc_config);
            auto out = pipeline::run_forecast(cfg, !fc_no_members);
            std::cout << "ensemble forecast: " << out.ensemble_path << '\n';
            for (const auto& p : out.member_paths) std::cout << "member forecast: " << p << '\n';
        } else if (*evaluate) {
            auto out = pipeline::run_evaluate(ev_panel, ev_scale, ev_forecast, ev_members,
                                              ev_out, ev_name);
            std::cout << render_report(out.report) << '\n';
            if (out.identity)
                std::cout << "mpiw identity: |diff|=" << std::abs(out.identity->difference)
                          << (out.identity->pass ? " (pass)" : " (FAIL)") << '\n';
            std::cout << "report: " << out.report_path << '\n';
        } else if (*transfer) {
            auto cfg = pipeline::load_run_config(tf_config);
            auto out = pipeline::run_transfer(cfg, tf_source);
            std::cout << "checkpoints: " << out.checkpoint_paths.size() << " under "
                      << cfg.out_dir << '\n'
                      << "loss history: " << out.loss_history_path << '\n';
        } else if (*diagnose) {
            auto out = pipeline::run_diagnose(dg_checkpoint, dg_panel, dg_scale, dg_t0,
                                              dg_components, dg_out);
            std::cout << "explained variance ratio:";
            for (Eigen::Index i = 0; i < out.explained_ratio.size(); ++i)
                std::cout << ' ' << out.explained_ratio(i);
            std::cout << '\n'
                      << "pca: " << out.pca_path << '\n'
                      << "correlations: " << out.correlation_path << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return 0;
}
