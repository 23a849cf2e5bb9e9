#include "deepyc/pipeline.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "deepyc/diagnostics.hpp"
#include "deepyc/errors.hpp"
#include "deepyc/factor_dynamics.hpp"
#include "deepyc/serialize.hpp"

namespace deepyc::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& known,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

std::string file_as_string(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory '" + dir + "': " + ec.message());
}

}  // namespace

std::string RunConfig::hash() const {
    // output location and worker count do not change results; keep them out
    // of the hash so reruns into different directories compare byte-identical
    json stripped = canonical;
    stripped.erase("out_dir");
    stripped.erase("jobs");
    return config_hash(stripped);
}

RunConfig run_config_from_json(const json& j) {
    reject_unknown(j, {"data", "split", "model", "train", "seed", "n_members", "jobs",
                       "out_dir"},
                   "run config");
    RunConfig cfg;
    try {
        const json& data = j.at("data");
        reject_unknown(data, {"panel", "rate_scale"}, "data");
        cfg.panel_path = data.at("panel");
        if (data.contains("rate_scale")) cfg.rate_scale = data.at("rate_scale");

        const json& splitj = j.at("split");
        reject_unknown(splitj, {"t0"}, "split");
        cfg.t0 = splitj.at("t0");

        if (j.contains("model")) {
            const json& m = j.at("model");
            reject_unknown(m, {"variant", "lookback", "q_attn", "q_embed", "dropout_keep",
                               "alpha", "gamma"},
                           "model");
            if (m.contains("variant")) cfg.variant = variant_from_string(m.at("variant"));
            if (m.contains("lookback")) cfg.lookback = m.at("lookback");
            if (m.contains("q_attn")) cfg.q_attn = m.at("q_attn");
            if (m.contains("q_embed")) cfg.q_embed = m.at("q_embed");
            if (m.contains("dropout_keep")) cfg.dropout_keep = m.at("dropout_keep");
            if (m.contains("alpha")) cfg.alpha = m.at("alpha");
            if (m.contains("gamma")) cfg.gamma = m.at("gamma");
        }
        if (j.contains("train")) {
            const json& t = j.at("train");
            reject_unknown(t, {"epochs", "batch_size", "lr", "beta1", "beta2", "eps",
                               "shuffle"},
                           "train");
            if (t.contains("epochs")) cfg.train.epochs = t.at("epochs");
            if (t.contains("batch_size")) cfg.train.batch_size = t.at("batch_size");
            if (t.contains("lr")) cfg.train.adam.lr = t.at("lr");
            if (t.contains("beta1")) cfg.train.adam.beta1 = t.at("beta1");
            if (t.contains("beta2")) cfg.train.adam.beta2 = t.at("beta2");
            if (t.contains("eps")) cfg.train.adam.eps = t.at("eps");
            if (t.contains("shuffle")) cfg.train.shuffle = t.at("shuffle");
        }
        if (j.contains("seed")) cfg.train.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("n_members")) cfg.n_members = j.at("n_members");
        if (j.contains("jobs")) cfg.jobs = j.at("jobs");
        cfg.out_dir = j.at("out_dir");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    if (cfg.train.epochs < 1 || cfg.train.batch_size < 1)
        throw ConfigError("run config: epochs and batch_size must be >= 1");
    if (cfg.n_members < 1) throw ConfigError("run config: n_members must be >= 1");
    if (cfg.jobs < 1) throw ConfigError("run config: jobs must be >= 1");
    cfg.canonical = j;
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

void atomic_write_text(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open '" + tmp + "' for writing");
        out << content;
        if (!out) throw DataError("write to '" + tmp + "' failed");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw DataError("cannot rename '" + tmp + "' to '" + path + "'");
}

PanelSummary summarize(const YieldPanel& panel) {
    PanelSummary s;
    for (const auto& f : panel.families) s.families.push_back(f.id);
    s.first_date = panel.dates.front();
    s.last_date = panel.dates.back();
    s.n_dates = panel.n_dates();
    s.grid = grid_to_string(panel.grid);
    s.n_points = static_cast<long>(panel.n_families()) * panel.n_dates() * panel.n_tenors();
    return s;
}

PanelSummary run_ingest(const std::string& panel_path, double rate_scale,
                        const std::optional<std::string>& export_path,
                        PanelLayout export_layout) {
    YieldPanel panel = load_panel(panel_path, {rate_scale, std::nullopt});
    if (export_path) {
        json meta = {{"command", "ingest"}, {"panel", panel_path}, {"rate_scale", rate_scale}};
        save_panel(panel, *export_path, export_layout,
                   {"config_hash=" + config_hash(meta)});
    }
    return summarize(panel);
}

Dynamics dynamics_from_string(const std::string& s) {
    if (s == "ar") return Dynamics::AR;
    if (s == "var") return Dynamics::VAR;
    throw ConfigError("unknown dynamics '" + s + "' (expected ar or var)");
}

namespace {

std::string benchmark_name(CurveModel model, Dynamics dynamics) {
    std::string name = model == CurveModel::NS ? "NS" : "NSS";
    name += dynamics == Dynamics::AR ? "_AR" : "_VAR";
    return name;
}

}  // namespace

BenchmarkResult run_fit_benchmark(const std::string& panel_path, double rate_scale,
                                  const std::string& t0, CurveModel model, Dynamics dynamics,
                                  double alpha, const Eigen::VectorXd& lambdas,
                                  const std::string& out_dir,
                                  const std::vector<double>& lambda_grid) {
    YieldPanel panel = load_panel(panel_path, {rate_scale, std::nullopt});
    auto [learn, test] = split(panel, {t0});

    Eigen::VectorXd decays = lambdas.size() > 0 ? lambdas : default_lambdas(model);
    if (!lambda_grid.empty()) {
        std::vector<Eigen::VectorXd> candidates;
        if (model == CurveModel::NS) {
            for (double l : lambda_grid) {
                Eigen::VectorXd c(1);
                c << l;
                candidates.push_back(c);
            }
        } else {
            for (double l1 : lambda_grid)
                for (double l2 : lambda_grid)
                    if (std::abs(l1 - l2) > 1e-8) {
                        Eigen::VectorXd c(2);
                        c << l1, l2;
                        candidates.push_back(c);
                    }
        }
        if (candidates.empty())
            throw ConfigError("fit-benchmark: decay grid has no admissible candidates");
        decays = search_lambdas(learn, model, candidates);
    }

    // dynamics and noise level come from the learning sample only; factor
    // states at testing-side origins are refit cross-sectionally per date
    const auto learn_factors = fit_panel(learn, decays, model);
    const auto full_factors = fit_panel(panel, decays, model);

    const int cut = learn.n_dates();
    const std::string name = benchmark_name(model, dynamics);

    BenchmarkResult result;
    std::vector<ForecastTriple> forecasts;
    for (int f = 0; f < panel.n_families(); ++f) {
        const auto& lf = learn_factors[static_cast<std::size_t>(f)];
        const auto& ff = full_factors[static_cast<std::size_t>(f)];
        const std::string& family = panel.families[static_cast<std::size_t>(f)].id;

        std::vector<ARModel> ar_models;
        VARModel var_model;
        try {
            if (dynamics == Dynamics::AR) {
                for (Eigen::Index jcol = 0; jcol < lf.values.cols(); ++jcol) {
                    ar_models.push_back(fit_ar(lf.values.col(jcol)));
                    if (!ar_models.back().stationary())
                        result.warnings.push_back("family '" + family + "': |psi1| >= 1 for factor " +
                                                  std::to_string(jcol));
                }
            } else {
                var_model = fit_var(lf.values);
                if (!var_model.stationary())
                    result.warnings.push_back("family '" + family +
                                              "': VAR spectral radius >= 1");
            }
        } catch (const std::runtime_error& e) {
            throw DataError("fit-benchmark: family '" + family + "': " + e.what());
        }

        for (int s = cut; s < panel.n_dates(); ++s) {
            const Eigen::VectorXd state = ff.values.row(s - 1).transpose();
            FactorForecast fc = dynamics == Dynamics::AR
                                    ? forecast_factors(ar_models, state)
                                    : forecast_factors(var_model, state);
            forecasts.push_back(benchmark_forecast(
                fc, decays, model, panel.grid, lf.residual_sd, alpha, family,
                panel.dates[static_cast<std::size_t>(s - 1)]));
        }
    }

    result.report = compute_report(panel, forecasts, name);
    result.lambdas_used = decays;

    ensure_dir(out_dir);
    json meta = {{"command", "fit-benchmark"}, {"panel", panel_path},
                 {"rate_scale", rate_scale}, {"t0", t0},
                 {"model", model == CurveModel::NS ? "ns" : "nss"},
                 {"dynamics", dynamics == Dynamics::AR ? "ar" : "var"},
                 {"alpha", alpha},
                 {"lambdas", std::vector<double>(decays.data(), decays.data() + decays.size())}};
    const std::string hash = config_hash(meta);

    result.factors_path = join_path(out_dir, "factors_" + name + ".csv");
    {
        const std::string tmp = result.factors_path + ".build";
        write_factor_series_csv(learn_factors, tmp, {"config_hash=" + hash});
        atomic_write_text(result.factors_path, file_as_string(tmp));
        fs::remove(tmp);
    }

    result.forecast_path = join_path(out_dir, "benchmark_" + name + ".csv");
    {
        const std::string tmp = result.forecast_path + ".build";
        write_forecast_csv(forecasts, panel.grid, tmp, name, {"config_hash=" + hash});
        atomic_write_text(result.forecast_path, file_as_string(tmp));
        fs::remove(tmp);
    }

    json rep = report_to_json(result.report);
    rep["config_hash"] = hash;
    rep["interval_method"] = "gaussian-analytic";
    rep["warnings"] = result.warnings;
    result.report_path = join_path(out_dir, "report_" + name + ".json");
    atomic_write_text(result.report_path, rep.dump(2) + "\n");
    return result;
}

namespace {

DeepYCConfig model_config_for(const RunConfig& cfg, const YieldPanel& panel) {
    DeepYCConfig mc;
    mc.variant = cfg.variant;
    mc.lookback = cfg.lookback;
    mc.tenors.assign(panel.grid.tenors.data(),
                     panel.grid.tenors.data() + panel.grid.tenors.size());
    mc.tenor_unit = panel.grid.unit;
    for (const auto& f : panel.families) mc.family_ids.push_back(f.id);
    mc.q_attn = cfg.q_attn;
    mc.q_embed = cfg.q_embed;
    mc.dropout_keep = cfg.dropout_keep;
    mc.alpha = cfg.alpha;
    mc.gamma = cfg.gamma;
    mc.trunk_in = mc.n_tenors();
    mc.validate();
    return mc;
}

std::string member_checkpoint_name(int m) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "member_%02d.json", m);
    return buf;
}

std::string loss_history_csv(const std::vector<std::vector<double>>& histories,
                             const std::string& hash) {
    std::ostringstream out;
    out.precision(17);
    out << "# config_hash=" << hash << "\n";
    out << "member,epoch,mean_loss\n";
    for (std::size_t m = 0; m < histories.size(); ++m)
        for (std::size_t e = 0; e < histories[m].size(); ++e)
            out << m << ',' << e + 1 << ',' << histories[m][e] << '\n';
    return out.str();
}

}  // namespace

TrainOutputs run_train(const RunConfig& cfg) {
    YieldPanel panel = load_panel(cfg.panel_path, {cfg.rate_scale, std::nullopt});
    auto [learn, test] = split(panel, {cfg.t0});
    const auto windows = make_windows(learn, cfg.lookback);
    const DeepYCConfig mc = model_config_for(cfg, panel);
    const std::string hash = cfg.hash();

    ensure_dir(cfg.out_dir);
    TrainOutputs out;
    std::vector<std::vector<double>> histories(static_cast<std::size_t>(cfg.n_members));

    // members are independent; train each with its derived seed and record
    // its loss curve
    EnsembleModel ensemble;
    ensemble.members.resize(static_cast<std::size_t>(cfg.n_members));
    {
        std::vector<int> member_ids(static_cast<std::size_t>(cfg.n_members));
        for (int m = 0; m < cfg.n_members; ++m) member_ids[static_cast<std::size_t>(m)] = m;
        auto train_one = [&](int m) {
            TrainSpec spec = cfg.train;
            spec.seed = cfg.train.seed + static_cast<std::uint64_t>(m);
            RngStream init_rng(spec.seed, "init");
            DeepYCModel model = init_model(mc, init_rng);
            histories[static_cast<std::size_t>(m)] = train(model, windows, spec);
            ensemble.members[static_cast<std::size_t>(m)] = std::move(model);
        };
        if (cfg.jobs <= 1) {
            for (int m : member_ids) train_one(m);
        } else {
            std::exception_ptr first_error;
            std::mutex error_mutex;
            std::atomic<int> next{0};
            auto worker = [&] {
                for (;;) {
                    const int m = next.fetch_add(1);
                    if (m >= cfg.n_members) return;
                    try {
                        train_one(m);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(error_mutex);
                        if (!first_error) first_error = std::current_exception();
                    }
                }
            };
            std::vector<std::thread> pool;
            for (int i = 0; i < std::min(cfg.jobs, cfg.n_members); ++i)
                pool.emplace_back(worker);
            for (auto& t : pool) t.join();
            if (first_error) std::rethrow_exception(first_error);
        }
    }

    for (int m = 0; m < cfg.n_members; ++m) {
        const std::string path = join_path(cfg.out_dir, member_checkpoint_name(m));
        const std::string tmp = path + ".build";
        save_checkpoint(ensemble.members[static_cast<std::size_t>(m)], tmp, hash);
        atomic_write_text(path, file_as_string(tmp));
        fs::remove(tmp);
        out.checkpoint_paths.push_back(path);
    }
    out.loss_history_path = join_path(cfg.out_dir, "loss_history.csv");
    atomic_write_text(out.loss_history_path, loss_history_csv(histories, hash));
    return out;
}

namespace {

std::vector<std::string> test_origin_dates(const YieldPanel& panel, const std::string& t0,
                                           int lookback) {
    auto [learn, test] = split(panel, {t0});
    const int cut = learn.n_dates();
    std::vector<std::string> origins;
    // origin s-1 per testing date s that has a realized target in the panel
    for (int s = cut; s < panel.n_dates(); ++s) {
        const int origin = s - 1;
        if (origin < lookback)
            throw DataError("forecast: not enough history before date '" +
                            panel.dates[static_cast<std::size_t>(s)] + "'");
        origins.push_back(panel.dates[static_cast<std::size_t>(origin)]);
    }
    return origins;
}

}  // namespace

ForecastOutputs run_forecast(const RunConfig& cfg, bool per_member) {
    YieldPanel panel = load_panel(cfg.panel_path, {cfg.rate_scale, std::nullopt});
    const auto origins = test_origin_dates(panel, cfg.t0, cfg.lookback);
    const std::string hash = cfg.hash();

    EnsembleModel ensemble;
    for (int m = 0; m < cfg.n_members; ++m) {
        const std::string path = join_path(cfg.out_dir, member_checkpoint_name(m));
        ensemble.members.push_back(load_checkpoint(path));
    }

    ForecastOutputs out;
    std::vector<std::vector<ForecastTriple>> member_forecasts;
    for (int m = 0; m < cfg.n_members; ++m) {
        member_forecasts.push_back(
            predict(ensemble.members[static_cast<std::size_t>(m)], panel, origins));
        if (per_member) {
            char buf[48];
            std::snprintf(buf, sizeof(buf), "forecast_member_%02d.csv", m);
            const std::string path = join_path(cfg.out_dir, buf);
            const std::string tmp = path + ".build";
            write_forecast_csv(member_forecasts.back(), panel.grid, tmp,
                               to_string(cfg.variant) + "_m" + std::to_string(m),
                               {"config_hash=" + hash});
            atomic_write_text(path, file_as_string(tmp));
            fs::remove(tmp);
            out.member_paths.push_back(path);
        }
    }
    const auto ensemble_forecast = average_forecasts(member_forecasts);
    out.ensemble_path = join_path(cfg.out_dir, "forecast_ensemble.csv");
    const std::string tmp = out.ensemble_path + ".build";
    write_forecast_csv(ensemble_forecast, panel.grid, tmp,
                       to_string(cfg.variant) + "_ensemble", {"config_hash=" + hash});
    atomic_write_text(out.ensemble_path, file_as_string(tmp));
    fs::remove(tmp);
    return out;
}

EvaluateOutputs run_evaluate(const std::string& panel_path, double rate_scale,
                             const std::string& forecast_path,
                             const std::vector<std::string>& member_paths,
                             const std::string& report_path, const std::string& model_name) {
    YieldPanel panel = load_panel(panel_path, {rate_scale, std::nullopt});
    const auto forecasts = read_forecast_csv(forecast_path);

    EvaluateOutputs out;
    out.report = compute_report(panel, forecasts, model_name);

    json meta = {{"command", "evaluate"},
                 {"panel", panel_path},
                 {"forecast", forecast_path},
                 {"members", member_paths}};
    json rep = report_to_json(out.report);
    rep["config_hash"] = config_hash(meta);

    if (!member_paths.empty()) {
        std::vector<std::vector<ForecastTriple>> members;
        for (const auto& p : member_paths) members.push_back(read_forecast_csv(p));
        out.identity = check_mpiw_identity(members, forecasts);
        rep["mpiw_identity"] = {{"member_average", out.identity->member_average},
                                {"ensemble", out.identity->ensemble},
                                {"difference", out.identity->difference},
                                {"pass", out.identity->pass}};
    }
    out.report_path = report_path;
    atomic_write_text(report_path, rep.dump(2) + "\n");
    return out;
}

TransferOutputs run_transfer(const RunConfig& cfg, const std::string& source_checkpoint) {
    const DeepYCModel source = load_checkpoint(source_checkpoint);
    YieldPanel panel = load_panel(cfg.panel_path, {cfg.rate_scale, std::nullopt});
    auto [learn, test] = split(panel, {cfg.t0});
    const auto windows = make_windows(learn, source.config.lookback);

    std::vector<std::string> new_families;
    for (const auto& f : panel.families) new_families.push_back(f.id);

    json meta = cfg.canonical;
    meta.erase("out_dir");
    meta.erase("jobs");
    meta["source_checkpoint"] = source_checkpoint;
    const std::string hash = config_hash(meta);

    ensure_dir(cfg.out_dir);
    TransferOutputs out;
    std::vector<std::vector<double>> histories;
    for (int m = 0; m < cfg.n_members; ++m) {
        TrainSpec spec = cfg.train;
        spec.seed = cfg.train.seed + static_cast<std::uint64_t>(m);
        TransferResult result = transfer(source, panel.grid, new_families, windows, spec);
        histories.push_back(result.loss_history);
        const std::string path = join_path(cfg.out_dir, member_checkpoint_name(m));
        const std::string tmp = path + ".build";
        save_checkpoint(result.model, tmp, hash);
        atomic_write_text(path, file_as_string(tmp));
        fs::remove(tmp);
        out.checkpoint_paths.push_back(path);
    }
    out.loss_history_path = join_path(cfg.out_dir, "loss_history.csv");
    atomic_write_text(out.loss_history_path, loss_history_csv(histories, hash));
    return out;
}

DiagnoseOutputs run_diagnose(const std::string& checkpoint_path, const std::string& panel_path,
                             double rate_scale, const std::string& t0, int n_components,
                             const std::string& out_dir) {
    const DeepYCModel model = load_checkpoint(checkpoint_path);
    YieldPanel panel = load_panel(panel_path, {rate_scale, std::nullopt});
    YieldPanel sample = panel;
    if (!t0.empty()) {
        auto [learn, test] = split(panel, {t0});
        sample = learn;
    }
    const auto windows = make_windows(sample, model.config.lookback);
    const FeatureMatrix features = extract_features(model, windows);
    const int k = std::min<int>(n_components, static_cast<int>(features.values.cols()));
    const PCAResult reduced = pca(features.values, k);

    const auto factors = fit_panel(sample, default_lambdas(CurveModel::NSS), CurveModel::NSS);
    const CorrelationTable table = factor_correlation(reduced, features, factors);

    json meta = {{"command", "diagnose"}, {"checkpoint", checkpoint_path},
                 {"panel", panel_path}, {"t0", t0}, {"n_components", n_components}};
    const std::string hash = config_hash(meta);

    ensure_dir(out_dir);
    DiagnoseOutputs out;
    out.explained_ratio = reduced.explained_ratio.head(k);
    out.pca_path = join_path(out_dir, "pca.csv");
    {
        const std::string tmp = out.pca_path + ".build";
        write_pca_csv(reduced, tmp, {"config_hash=" + hash});
        atomic_write_text(out.pca_path, file_as_string(tmp));
        fs::remove(tmp);
    }
    out.correlation_path = join_path(out_dir, "factor_correlation.csv");
    {
        const std::string tmp = out.correlation_path + ".build";
        write_correlation_csv(table, tmp, {"config_hash=" + hash});
        atomic_write_text(out.correlation_path, file_as_string(tmp));
        fs::remove(tmp);
    }
    return out;
}

}  // namespace deepyc::pipeline
