#include "deepyc/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "deepyc/curve_data.hpp"
#include "deepyc/errors.hpp"
#include "deepyc/serialize.hpp"
#include "deepyc/stats.hpp"

namespace deepyc {

using nlohmann::json;

Variant variant_from_string(const std::string& s) {
    if (s == "att") return Variant::Att;
    if (s == "conv") return Variant::Conv;
    if (s == "att_de") return Variant::AttDe;
    throw ConfigError("unknown variant '" + s + "' (expected att, conv or att_de)");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Att: return "att";
        case Variant::Conv: return "conv";
        case Variant::AttDe: return "att_de";
    }
    return "?";
}

int DeepYCConfig::family_index(const std::string& id) const {
    for (std::size_t i = 0; i < family_ids.size(); ++i)
        if (family_ids[i] == id) return static_cast<int>(i);
    return -1;
}

TenorGrid DeepYCConfig::grid() const { return make_tenor_grid(tenors, tenor_unit); }

void DeepYCConfig::validate() const {
    if (lookback < 0) throw ConfigError("config: negative look-back");
    if (tenors.empty()) throw ConfigError("config: empty tenor grid");
    if (family_ids.empty()) throw ConfigError("config: no families");
    std::set<std::string> ids(family_ids.begin(), family_ids.end());
    if (ids.size() != family_ids.size()) throw ConfigError("config: duplicate family ids");
    if (q_embed < 1 || q_attn < 1) throw ConfigError("config: layer widths must be >= 1");
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0))
        throw ConfigError("config: dropout_keep must lie in (0,1]");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("config: alpha must lie in (0,1)");
    if (gamma != 1 && gamma != 2) throw ConfigError("config: gamma must be 1 or 2");
    const int expected_trunk = has_adapter ? trunk_in : n_tenors();
    if (trunk_in != expected_trunk || trunk_in < 1)
        throw ConfigError("config: inconsistent trunk width");
    make_tenor_grid(tenors, tenor_unit);  // grid invariants
}

json DeepYCConfig::to_json() const {
    json j;
    j["variant"] = deepyc::to_string(variant);
    j["lookback"] = lookback;
    j["tenors"] = tenors;
    j["tenor_unit"] = tenor_unit;
    j["family_ids"] = family_ids;
    j["q_embed"] = q_embed;
    j["q_attn"] = q_attn;
    j["dropout_keep"] = dropout_keep;
    j["alpha"] = alpha;
    j["gamma"] = gamma;
    j["act_qkv"] = ad::to_string(act_qkv);
    j["act_central"] = ad::to_string(act_central);
    j["act_gap"] = ad::to_string(act_gap);
    j["trunk_in"] = trunk_in;
    j["has_adapter"] = has_adapter;
    return j;
}

DeepYCConfig DeepYCConfig::from_json(const json& j) {
    DeepYCConfig c;
    c.variant = variant_from_string(j.at("variant"));
    c.lookback = j.at("lookback");
    c.tenors = j.at("tenors").get<std::vector<double>>();
    c.tenor_unit = j.at("tenor_unit");
    c.family_ids = j.at("family_ids").get<std::vector<std::string>>();
    c.q_embed = j.at("q_embed");
    c.q_attn = j.at("q_attn");
    c.dropout_keep = j.at("dropout_keep");
    c.alpha = j.at("alpha");
    c.gamma = j.at("gamma");
    c.act_qkv = ad::activation_from_string(j.at("act_qkv"));
    c.act_central = ad::activation_from_string(j.at("act_central"));
    c.act_gap = ad::activation_from_string(j.at("act_gap"));
    c.trunk_in = j.at("trunk_in");
    c.has_adapter = j.at("has_adapter");
    c.validate();
    return c;
}

namespace {

Eigen::MatrixXd glorot(Eigen::Index rows, Eigen::Index cols, RngStream& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    return m;
}

void add_head(ad::ParamStore& p, const std::string& name, int out_dim,
              const DeepYCConfig& c, RngStream& rng) {
    p.add(name + "/W", glorot(out_dim, c.feature_width(), rng));
    p.add(name + "/U", glorot(out_dim, c.q_embed, rng));
    p.add(name + "/b", Eigen::MatrixXd::Zero(out_dim, 1));
}

bool uses_attention(Variant v) { return v != Variant::Conv; }

std::vector<std::string> head_names(Variant v) {
    if (v == Variant::AttDe) return {"head_center", "head_logvar"};
    return {"head_center", "head_lower", "head_upper"};
}

}  // namespace

std::vector<std::string> trunk_param_names(const DeepYCConfig& config) {
    std::vector<std::string> names = {"att/W_v", "att/b_v"};
    if (uses_attention(config.variant)) {
        names.insert(names.end(), {"att/W_q", "att/b_q", "att/W_k", "att/b_k"});
    }
    std::sort(names.begin(), names.end());
    return names;
}

DeepYCModel init_model(const DeepYCConfig& config, RngStream& rng) {
    config.validate();
    DeepYCModel m;
    m.config = config;
    auto& p = m.params;

    p.add("embed", 0.1 * rng.normal_matrix(config.n_families(), config.q_embed));
    if (config.has_adapter) {
        p.add("adapter/W", glorot(config.trunk_in, config.n_tenors(), rng));
        p.add("adapter/b", Eigen::MatrixXd::Zero(config.trunk_in, 1));
    }
    if (uses_attention(config.variant)) {
        p.add("att/W_q", glorot(config.q_attn, config.trunk_in, rng));
        p.add("att/b_q", Eigen::MatrixXd::Zero(config.q_attn, 1));
        p.add("att/W_k", glorot(config.q_attn, config.trunk_in, rng));
        p.add("att/b_k", Eigen::MatrixXd::Zero(config.q_attn, 1));
    }
    p.add("att/W_v", glorot(config.q_attn, config.trunk_in, rng));
    p.add("att/b_v", Eigen::MatrixXd::Zero(config.q_attn, 1));
    for (const auto& head : head_names(config.variant))
        add_head(p, head, config.n_tenors(), config, rng);
    return m;
}

ForwardGraph build_forward(ad::Tape& tape, const DeepYCModel& model,
                           const Eigen::MatrixXd& history, int family_index, ad::Mode mode,
                           RngStream* dropout_rng) {
    const auto& c = model.config;
    if (history.rows() != c.lookback + 1 || history.cols() != c.n_tenors())
        throw DataError("forward: history must be " + std::to_string(c.lookback + 1) + " x " +
                        std::to_string(c.n_tenors()) + ", got " +
                        std::to_string(history.rows()) + " x " +
                        std::to_string(history.cols()));
    if (family_index < 0 || family_index >= c.n_families())
        throw DataError("forward: family index outside the model's family set");
    if (mode == ad::Mode::Train && c.dropout_keep < 1.0 && !dropout_rng)
        throw ConfigError("forward: train mode needs a dropout stream");

    const auto& p = model.params;
    ForwardGraph g;

    ad::Var rows = tape.constant(history);
    if (c.has_adapter)
        rows = ad::dense_rows(rows, tape.param(p, "adapter/W"), tape.param(p, "adapter/b"),
                              ad::Activation::Linear);

    ad::Var v = ad::dense_rows(rows, tape.param(p, "att/W_v"), tape.param(p, "att/b_v"),
                               c.act_qkv);
    if (uses_attention(c.variant)) {
        ad::Var q = ad::dense_rows(rows, tape.param(p, "att/W_q"), tape.param(p, "att/b_q"),
                                   c.act_qkv);
        ad::Var k = ad::dense_rows(rows, tape.param(p, "att/W_k"), tape.param(p, "att/b_k"),
                                   c.act_qkv);
        g.features = ad::attention(q, k, v);
    } else {
        g.features = v;
    }
    g.flat = ad::flatten_rows(g.features);

    RngStream unused(0, "-");
    g.flat_dropped = ad::dropout(g.flat, c.dropout_keep, mode,
                                 dropout_rng ? *dropout_rng : unused);
    g.embedding = ad::embed_row(tape.param(p, "embed"), family_index);

    auto head = [&](const std::string& name, ad::Activation act) {
        ad::Var affine = ad::add(
            ad::add(ad::matmul(tape.param(p, name + "/U"), g.embedding),
                    ad::matmul(tape.param(p, name + "/W"), g.flat_dropped)),
            tape.param(p, name + "/b"));
        return ad::activation(affine, act);
    };

    g.central = head("head_center", c.act_central);
    if (c.variant == Variant::AttDe) {
        g.log_var = head("head_logvar", ad::Activation::Linear);
    } else {
        g.lower = ad::sub(g.central, head("head_lower", c.act_gap));
        g.upper = ad::add(g.central, head("head_upper", c.act_gap));
    }
    return g;
}

namespace {

int model_family_index(const DeepYCConfig& c, const WindowSample& sample) {
    const int idx = c.family_index(sample.family.id);
    if (idx < 0)
        throw DataError("family '" + sample.family.id + "' is unknown to the model");
    return idx;
}

}  // namespace

ForecastTriple forward(const DeepYCModel& model, const WindowSample& sample, ad::Mode mode,
                       RngStream* dropout_rng) {
    if (model.config.variant == Variant::AttDe) {
        DeForecast de = de_forward(model, sample);
        return de.triple;
    }
    ad::Tape tape;
    ForwardGraph g = build_forward(tape, model, sample.history,
                                   model_family_index(model.config, sample), mode,
                                   dropout_rng);
    ForecastTriple out;
    out.family = sample.family.id;
    out.as_of = sample.as_of;
    out.alpha = model.config.alpha;
    out.lower = g.lower.value().col(0);
    out.central = g.central.value().col(0);
    out.upper = g.upper.value().col(0);
    out.validate();
    return out;
}

DeForecast de_forward(const DeepYCModel& model, const WindowSample& sample) {
    if (model.config.variant != Variant::AttDe)
        throw ConfigError("de_forward: model is not an att_de variant");
    ad::Tape tape;
    ForwardGraph g = build_forward(tape, model, sample.history,
                                   model_family_index(model.config, sample), ad::Mode::Eval,
                                   nullptr);
    const double z = normal_quantile(0.5 * (1.0 + model.config.alpha));
    DeForecast out;
    out.sd = (0.5 * g.log_var.value().col(0)).array().exp();
    out.triple.family = sample.family.id;
    out.triple.as_of = sample.as_of;
    out.triple.alpha = model.config.alpha;
    out.triple.central = g.central.value().col(0);
    out.triple.lower = out.triple.central - z * out.sd;
    out.triple.upper = out.triple.central + z * out.sd;
    out.triple.sd = out.sd;
    out.triple.validate();
    return out;
}

ad::Var build_loss(ad::Tape& tape, const DeepYCModel& model,
                   const std::vector<WindowSample>& batch, ad::Mode mode,
                   RngStream* dropout_rng) {
    if (batch.empty()) throw DataError("loss: empty batch");
    const auto& c = model.config;
    const double level_lo = 0.5 * (1.0 - c.alpha);
    const double level_hi = 0.5 * (1.0 + c.alpha);

    ad::Var total;
    bool first = true;
    for (const auto& sample : batch) {
        ForwardGraph g = build_forward(tape, model, sample.history,
                                       model_family_index(c, sample), mode, dropout_rng);
        ad::Var y = tape.constant(sample.target);
        ad::Var term;
        if (c.variant == Variant::AttDe) {
            // summed heteroscedastic Gaussian criterion
            ad::Var r = ad::sub(y, g.central);
            ad::Var precision =
                ad::activation(ad::scale(g.log_var, -1.0), ad::Activation::Exp);
            term = ad::sum(ad::add(ad::mul(ad::mul(r, r), precision),
                                   ad::scale(g.log_var, 0.5)));
        } else {
            ad::Var lo = ad::sum(ad::pinball_elems(ad::sub(y, g.lower), level_lo));
            ad::Var hi = ad::sum(ad::pinball_elems(ad::sub(y, g.upper), level_hi));
            ad::Var u = ad::sub(y, g.central);
            ad::Var central = c.gamma == 1 ? ad::sum(ad::abs_elems(u))
                                           : ad::sum(ad::mul(u, u));
            term = ad::add(ad::add(lo, central), hi);
        }
        total = first ? term : ad::add(total, term);
        first = false;
    }
    return total;
}

double eval_loss(const DeepYCModel& model, const std::vector<WindowSample>& batch) {
    ad::Tape tape;
    return build_loss(tape, model, batch, ad::Mode::Eval, nullptr).scalar();
}

std::vector<double> train(DeepYCModel& model, const std::vector<WindowSample>& windows,
                          const TrainSpec& spec) {
    if (windows.empty()) throw DataError("train: no window samples");
    if (spec.epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (spec.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    for (const auto& w : windows) model_family_index(model.config, w);

    RngStream shuffle_rng(spec.seed, "shuffle");
    RngStream dropout_rng(spec.seed, "dropout");
    ad::AdamState state;

    const int n = static_cast<int>(windows.size());
    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(spec.epochs));

    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        std::vector<int> order;
        if (spec.shuffle) {
            order = shuffle_rng.permutation(n);
        } else {
            order.resize(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        }

        double epoch_sum = 0.0;
        for (int start = 0; start < n; start += spec.batch_size) {
            const int stop = std::min(n, start + spec.batch_size);
            std::vector<WindowSample> batch;
            batch.reserve(static_cast<std::size_t>(stop - start));
            for (int i = start; i < stop; ++i)
                batch.push_back(windows[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);

            ad::Tape tape;
            ad::Var loss;
            try {
                loss = build_loss(tape, model, batch, ad::Mode::Train, &dropout_rng);
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch + 1) +
                                   ", batch offset " + std::to_string(start) + ": " +
                                   e.what());
            }
            epoch_sum += loss.scalar();
            tape.backward(loss);
            ad::adam_step(model.params, tape.param_gradients(), state, spec.adam);
        }
        history.push_back(epoch_sum / static_cast<double>(n));
    }
    return history;
}

EnsembleModel train_ensemble(const DeepYCConfig& config,
                             const std::vector<WindowSample>& windows, const TrainSpec& spec,
                             int n_members, int jobs) {
    if (n_members < 1) throw ConfigError("train_ensemble: need at least one member");
    EnsembleModel ensemble;
    ensemble.members.resize(static_cast<std::size_t>(n_members));

    auto train_member = [&](int m) {
        TrainSpec member_spec = spec;
        member_spec.seed = spec.seed + static_cast<std::uint64_t>(m);
        RngStream init_rng(member_spec.seed, "init");
        DeepYCModel model = init_model(config, init_rng);
        train(model, windows, member_spec);
        ensemble.members[static_cast<std::size_t>(m)] = std::move(model);
    };

    if (jobs <= 1) {
        for (int m = 0; m < n_members; ++m) train_member(m);
        return ensemble;
    }

    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            const int m = next.fetch_add(1);
            if (m >= n_members) return;
            try {
                train_member(m);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const int threads = std::min(jobs, n_members);
    pool.reserve(static_cast<std::size_t>(threads));
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return ensemble;
}

std::vector<ForecastTriple> predict(const DeepYCModel& model, const YieldPanel& panel,
                                    const std::vector<std::string>& as_of_dates) {
    panel.validate();
    const auto& c = model.config;
    const TenorGrid model_grid = c.grid();
    if (!same_grid(panel.grid, model_grid))
        throw DataError("predict: panel grid " + grid_to_string(panel.grid) +
                        " does not match checkpoint grid " + grid_to_string(model_grid));

    std::vector<ForecastTriple> out;
    out.reserve(panel.families.size() * as_of_dates.size());
    for (const auto& family : panel.families) {
        if (c.family_index(family.id) < 0)
            throw DataError("predict: family '" + family.id +
                            "' is unknown to the checkpoint");
        for (const auto& date : as_of_dates) {
            const int t = panel.date_index(date);
            if (t < 0) throw DataError("predict: date '" + date + "' is not in the panel");
            if (t < c.lookback)
                throw DataError("predict: date '" + date + "' has fewer than " +
                                std::to_string(c.lookback) + " preceding dates");
            WindowSample s;
            s.family = family;
            s.history = panel.rates[static_cast<std::size_t>(family.index)].middleRows(
                t - c.lookback, c.lookback + 1);
            s.as_of = date;
            out.push_back(forward(model, s));
        }
    }
    return out;
}

std::vector<ForecastTriple> predict(const EnsembleModel& ensemble, const YieldPanel& panel,
                                    const std::vector<std::string>& as_of_dates) {
    if (ensemble.members.empty()) throw ConfigError("predict: empty ensemble");
    std::vector<std::vector<ForecastTriple>> member_forecasts;
    member_forecasts.reserve(ensemble.members.size());
    for (const auto& member : ensemble.members)
        member_forecasts.push_back(predict(member, panel, as_of_dates));
    return average_forecasts(member_forecasts);
}

TransferResult transfer(const DeepYCModel& source, const TenorGrid& new_grid,
                        const std::vector<std::string>& new_family_ids,
                        const std::vector<WindowSample>& windows, const TrainSpec& spec) {
    source.config.validate();
    if (source.config.has_adapter)
        throw ConfigError("transfer: chaining transfers is not supported");

    DeepYCConfig config = source.config;
    config.tenors.assign(new_grid.tenors.data(), new_grid.tenors.data() + new_grid.tenors.size());
    config.tenor_unit = new_grid.unit;
    config.family_ids = new_family_ids;
    config.trunk_in = source.config.n_tenors();
    config.has_adapter = true;
    config.validate();

    RngStream init_rng(spec.seed, "init");
    DeepYCModel model = init_model(config, init_rng);
    const auto frozen = trunk_param_names(config);
    for (const auto& name : frozen) {
        model.params.set_value(name, source.params.value(name));
        model.params.set_trainable(name, false);
    }

    TransferResult result;
    result.loss_history = train(model, windows, spec);

    for (const auto& name : frozen) {
        const auto& a = model.params.value(name);
        const auto& b = source.params.value(name);
        if (a.rows() != b.rows() || a.cols() != b.cols() || (a.array() != b.array()).any())
            throw NumericError("transfer: frozen parameter '" + name + "' changed");
    }
    result.model = std::move(model);
    return result;
}

void save_checkpoint(const DeepYCModel& model, const std::string& path,
                     const std::string& config_hash) {
    json j;
    j["format"] = "deepyc-checkpoint";
    j["version"] = 1;
    if (!config_hash.empty()) j["config_hash"] = config_hash;
    j["config"] = model.config.to_json();
    j["params"] = params_to_json(model.params);
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

DeepYCModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("checkpoint '" + path + "' is not valid JSON: " + e.what());
    }
    try {
        if (j.at("format") != "deepyc-checkpoint")
            throw DataError("'" + path + "' is not a checkpoint");
        if (j.at("version") != 1)
            throw DataError("unsupported checkpoint version in '" + path + "'");
        DeepYCModel model;
        model.config = DeepYCConfig::from_json(j.at("config"));
        model.params = params_from_json(j.at("params"));
        return model;
    } catch (const json::exception& e) {
        throw DataError("checkpoint '" + path + "': " + e.what());
    }
}

}  // namespace deepyc
