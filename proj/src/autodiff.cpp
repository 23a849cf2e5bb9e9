#include "deepyc/autodiff.hpp"

#include <cmath>

#include "deepyc/errors.hpp"

namespace deepyc::ad {

Activation activation_from_string(const std::string& name) {
    if (name == "linear") return Activation::Linear;
    if (name == "tanh") return Activation::Tanh;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "softplus") return Activation::Softplus;
    if (name == "relu") return Activation::Relu;
    if (name == "exp") return Activation::Exp;
    throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Linear: return "linear";
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Softplus: return "softplus";
        case Activation::Relu: return "relu";
        case Activation::Exp: return "exp";
    }
    return "?";
}

const Eigen::MatrixXd& Var::value() const {
    if (!tape) throw NumericError("use of an unbound Var");
    return tape->value_of(id);
}

double Var::scalar() const {
    const auto& v = value();
    if (v.size() != 1) throw NumericError("scalar() on a non-scalar node");
    return v(0, 0);
}

void ParamStore::add(const std::string& name, Eigen::MatrixXd value, bool trainable) {
    if (name.empty()) throw ConfigError("parameter name must be non-empty");
    if (!entries_.emplace(name, Entry{std::move(value), trainable}).second)
        throw ConfigError("duplicate parameter '" + name + "'");
}

const Eigen::MatrixXd& ParamStore::value(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second.value;
}

void ParamStore::set_value(const std::string& name, Eigen::MatrixXd value) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
    if (it->second.value.rows() != value.rows() || it->second.value.cols() != value.cols())
        throw ConfigError("shape change for parameter '" + name + "'");
    it->second.value = std::move(value);
}

bool ParamStore::trainable(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second.trainable;
}

void ParamStore::set_trainable(const std::string& name, bool trainable) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
    it->second.trainable = trainable;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, entry] : entries_) out.push_back(name);
    return out;
}

namespace {

void check_finite(const Eigen::MatrixXd& m, const char* op) {
    if (!m.allFinite())
        throw NumericError(std::string("non-finite values produced by '") + op + "'");
}

void check_same_tape(const Var& a, const Var& b) {
    if (a.tape != b.tape || !a.tape)
        throw NumericError("operation on Vars from different tapes");
}

}  // namespace

Var Tape::push(Eigen::MatrixXd value, bool requires_grad, Pull pull) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.pull = std::move(pull);
    if (requires_grad) n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Eigen::MatrixXd value) {
    check_finite(value, "constant");
    return push(std::move(value), false, nullptr);
}

Var Tape::leaf(Eigen::MatrixXd value, bool requires_grad) {
    check_finite(value, "leaf");
    return push(std::move(value), requires_grad, nullptr);
}

Var Tape::param(const ParamStore& store, const std::string& name) {
    // one leaf per name per tape, so gradients from every use accumulate
    auto it = param_ids_.find(name);
    if (it != param_ids_.end()) return {this, it->second};
    Var v = leaf(store.value(name), store.trainable(name));
    param_ids_[name] = v.id;
    return v;
}

void Tape::backward(const Var& loss) {
    if (loss.tape != this) throw NumericError("backward: loss from a different tape");
    if (ran_backward_) throw NumericError("backward: tape already consumed");
    const auto& n = nodes_[static_cast<std::size_t>(loss.id)];
    if (n.value.size() != 1) throw NumericError("backward: loss must be scalar");
    ran_backward_ = true;
    if (!n.requires_grad) return;  // nothing trainable feeds the loss
    nodes_[static_cast<std::size_t>(loss.id)].grad(0, 0) = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        auto& node = nodes_[static_cast<std::size_t>(i)];
        if (node.requires_grad && node.pull) node.pull(*this, i);
    }
}

Eigen::MatrixXd Tape::gradient(const Var& v) const {
    if (v.tape != this) throw NumericError("gradient: Var from a different tape");
    const auto& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.requires_grad) return Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

std::map<std::string, Eigen::MatrixXd> Tape::param_gradients() const {
    std::map<std::string, Eigen::MatrixXd> out;
    for (const auto& [name, id] : param_ids_) {
        const auto& n = nodes_[static_cast<std::size_t>(id)];
        if (n.requires_grad) out.emplace(name, n.grad);
    }
    return out;
}

// ---- primitives ----

Var add(Var a, Var b) {
    check_same_tape(a, b);
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw NumericError("add: shape mismatch");
    Tape& t = *a.tape;
    bool rg = t.needs_grad(a.id) || t.needs_grad(b.id);
    Eigen::MatrixXd v = a.value() + b.value();
    check_finite(v, "add");
    return t.push(std::move(v), rg, [a, b](Tape& tp, int self) {
        const Eigen::MatrixXd& g = tp.grad_of(self);
        if (tp.needs_grad(a.id)) tp.grad_of(a.id) += g;
        if (tp.needs_grad(b.id)) tp.grad_of(b.id) += g;
    });
}

Var sub(Var a, Var b) {
    check_same_tape(a, b);
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw NumericError("sub: shape mismatch");
    Tape& t = *a.tape;
    bool rg = t.needs_grad(a.id) || t.needs_grad(b.id);
    Eigen::MatrixXd v = a.value() - b.value();
    check_finite(v, "sub");
    return t.push(std::move(v), rg, [a, b](Tape& tp, int self) {
        const Eigen::MatrixXd& g = tp.grad_of(self);
        if (tp.needs_grad(a.id)) tp.grad_of(a.id) += g;
        if (tp.needs_grad(b.id)) tp.grad_of(b.id) -= g;
    });
}

Var mul(Var a, Var b) {
    check_same_tape(a, b);
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw NumericError("mul: shape mismatch");
    Tape& t = *a.tape;
    bool rg = t.needs_grad(a.id) || t.needs_grad(b.id);
    Eigen::MatrixXd v = a.value().cwiseProduct(b.value());
    check_finite(v, "mul");
    return t.push(std::move(v), rg, [a, b](Tape& tp, int self) {
        const Eigen::MatrixXd& g = tp.grad_of(self);
        if (tp.needs_grad(a.id)) tp.grad_of(a.id) += g.cwiseProduct(tp.value_of(b.id));
        if (tp.needs_grad(b.id)) tp.grad_of(b.id) += g.cwiseProduct(tp.value_of(a.id));
    });
}

Var matmul(Var a, Var b) {
    check_same_tape(a, b);
    if (a.cols() != b.rows()) throw NumericError("matmul: inner dimensions disagree");
    Tape& t = *a.tape;
    bool rg = t.needs_grad(a.id) || t.needs_grad(b.id);
    Eigen::MatrixXd v = a.value() * b.value();
    check_finite(v, "matmul");
    return t.push(std::move(v), rg, [a, b](Tape& tp, int self) {
        const Eigen::MatrixXd& g = tp.grad_of(self);
        if (tp.needs_grad(a.id)) tp.grad_of(a.id) += g * tp.value_of(b.id).transpose();
        if (tp.needs_grad(b.id)) tp.grad_of(b.id) += tp.value_of(a.id).transpose() * g;
    });
}

Var transpose(Var a) {
    Tape& t = *a.tape;
    Eigen::MatrixXd v = a.value().transpose();
    return t.push(std::move(v), t.needs_grad(a.id), [a](Tape& tp, int self) {
        if (tp.needs_grad(a.id)) tp.grad_of(a.id) += tp.grad_of(self).transpose();
    });
}

Var scale(Var a, double c) {
    if (!std::isfinite(c)) throw NumericError("scale: non-finite factor");
    Tape& t = *a.tape;
    Eigen::MatrixXd v = c * a.value();
    check_finite(v, "scale");
    return t.push(std::move(v), t.needs_grad(a.id), [a, c](Tape& tp, int self) {
        if (tp.needs_grad(a.id)) tp.grad_of(a.id) += c * tp.grad_of(self);
    });
}

Var add_row_broadcast(Var m, Var v) {
    check_same_tape(m, v);
    if (v.cols() != 1 || v.rows() != m.cols())
        throw NumericError("add_row_broadcast: vector length must equal column count");
    Tape& t = *m.tape;
    bool rg = t.needs_grad(m.id) || t.needs_grad(v.id);
    Eigen::MatrixXd out = m.value().rowwise() + v.value().col(0).transpose();
    check_finite(out, "add_row_broadcast");
    return t.push(std::move(out), rg, [m, v](Tape& tp, int self) {
        const Eigen::MatrixXd& g = tp.grad_of(self);
        if (tp.needs_grad(m.id)) tp.grad_of(m.id) += g;
        if (tp.needs_grad(v.id)) tp.grad_of(v.id) += g.colwise().sum().transpose();
    });
}

namespace {

double softplus_stable(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sigmoid_stable(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Var activation(Var x, Activation act) {
    Tape& t = *x.tape;
    Eigen::MatrixXd v;
    switch (act) {
        case Activation::Linear: v = x.value(); break;
        case Activation::Tanh: v = x.value().array().tanh(); break;
        case Activation::Sigmoid: v = x.value().unaryExpr(&sigmoid_stable); break;
        case Activation::Softplus: v = x.value().unaryExpr(&softplus_stable); break;
        case Activation::Relu: v = x.value().cwiseMax(0.0); break;
        case Activation::Exp: v = x.value().array().exp(); break;
    }
    check_finite(v, "activation");
    return t.push(std::move(v), t.needs_grad(x.id), [x, act](Tape& tp, int self) {
        if (!tp.needs_grad(x.id)) return;
        const Eigen::MatrixXd& g = tp.grad_of(self);
        const Eigen::MatrixXd& y = tp.value_of(self);
        const Eigen::MatrixXd& in = tp.value_of(x.id);
        switch (act) {
            case Activation::Linear:
                tp.grad_of(x.id) += g;
                break;
            case Activation::Tanh:
                tp.grad_of(x.id) += (g.array() * (1.0 - y.array().square())).matrix();
                break;
            case Activation::Sigmoid:
                tp.grad_of(x.id) += (g.array() * y.array() * (1.0 - y.array())).matrix();
                break;
            case Activation::Softplus:
                tp.grad_of(x.id) +=
                    (g.array() * in.unaryExpr(&sigmoid_stable).array()).matrix();
                break;
            case Activation::Relu:
                tp.grad_of(x.id) +=
                    (g.array() * (in.array() > 0.0).cast<double>()).matrix();
                break;
            case Activation::Exp:
                tp.grad_of(x.id) += (g.array() * y.array()).matrix();
                break;
        }
    });
}

Var softmax_rows(Var x) {
    Tape& t = *x.tape;
    Eigen::MatrixXd v = x.value();
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        Eigen::ArrayXd row = v.row(i).array();
        row -= row.maxCoeff();
        Eigen::ArrayXd e = row.exp();
        v.row(i) = (e / e.sum()).matrix();
    }
    check_finite(v, "softmax_rows");
    return t.push(std::move(v), t.needs_grad(x.id), [x](Tape& tp, int self) {
        if (!tp.needs_grad(x.id)) return;
        const Eigen::MatrixXd& g = tp.grad_of(self);
        const Eigen::MatrixXd& s = tp.value_of(self);
        Eigen::MatrixXd dx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const double dot = g.row(i).dot(s.row(i));
            dx.row(i) = (s.row(i).array() * (g.row(i).array() - dot)).matrix();
        }
        tp.grad_of(x.id) += dx;
    });
}

Var flatten_rows(Var x) {
    Tape& t = *x.tape;
    const Eigen::Index r = x.rows(), c = x.cols();
    Eigen::MatrixXd v(r * c, 1);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) v(i * c + j, 0) = x.value()(i, j);
    return t.push(std::move(v), t.needs_grad(x.id), [x, r, c](Tape& tp, int self) {
        if (!tp.needs_grad(x.id)) return;
        const Eigen::MatrixXd& g = tp.grad_of(self);
        Eigen::MatrixXd dx(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) dx(i, j) = g(i * c + j, 0);
        tp.grad_of(x.id) += dx;
    });
}

Var embed_row(Var table, int index) {
    Tape& t = *table.tape;
    if (index < 0 || index >= table.rows())
        throw DataError("embed_row: index " + std::to_string(index) +
                        " outside table with " + std::to_string(table.rows()) + " rows");
    Eigen::MatrixXd v = table.value().row(index).transpose();
    return t.push(std::move(v), t.needs_grad(table.id), [table, index](Tape& tp, int self) {
        if (tp.needs_grad(table.id))
            tp.grad_of(table.id).row(index) += tp.grad_of(self).col(0).transpose();
    });
}

Var sum(Var x) {
    Tape& t = *x.tape;
    Eigen::MatrixXd v(1, 1);
    v(0, 0) = x.value().sum();
    check_finite(v, "sum");
    return t.push(std::move(v), t.needs_grad(x.id), [x](Tape& tp, int self) {
        if (tp.needs_grad(x.id))
            tp.grad_of(x.id).array() += tp.grad_of(self)(0, 0);
    });
}

Var mean(Var x) {
    Tape& t = *x.tape;
    const double n = static_cast<double>(x.value().size());
    Eigen::MatrixXd v(1, 1);
    v(0, 0) = x.value().sum() / n;
    check_finite(v, "mean");
    return t.push(std::move(v), t.needs_grad(x.id), [x, n](Tape& tp, int self) {
        if (tp.needs_grad(x.id))
            tp.grad_of(x.id).array() += tp.grad_of(self)(0, 0) / n;
    });
}

// ---- layers ----

namespace {

void check_dense_activation(Activation act) {
    if (act == Activation::Exp)
        throw ConfigError("dense: exp is not an admissible layer activation");
}

}  // namespace

Var dense(Var x, Var W, Var b, Activation act) {
    check_dense_activation(act);
    if (x.cols() != 1 || b.cols() != 1)
        throw NumericError("dense: x and b must be column vectors");
    if (W.cols() != x.rows() || W.rows() != b.rows())
        throw NumericError("dense: shape mismatch");
    return activation(add(matmul(W, x), b), act);
}

Var dense_rows(Var X, Var W, Var b, Activation act) {
    check_dense_activation(act);
    if (b.cols() != 1) throw NumericError("dense_rows: bias must be a column vector");
    if (W.cols() != X.cols() || W.rows() != b.rows())
        throw NumericError("dense_rows: shape mismatch");
    return activation(add_row_broadcast(matmul(X, transpose(W)), b), act);
}

Var attention(Var Q, Var K, Var V) {
    check_same_tape(Q, K);
    check_same_tape(K, V);
    if (Q.cols() != K.cols() || Q.rows() != K.rows() || K.rows() != V.rows())
        throw NumericError("attention: Q, K, V must share the same shape");
    const auto d = static_cast<double>(K.cols());
    if (d < 1) throw NumericError("attention: need at least one feature column");
    Var scores = scale(matmul(Q, transpose(K)), 1.0 / std::sqrt(d));
    return matmul(softmax_rows(scores), V);
}

Var dropout(Var x, double keep_prob, Mode mode, RngStream& rng) {
    if (!(keep_prob >= 0.0 && keep_prob <= 1.0))
        throw ConfigError("dropout: keep probability outside [0,1]");
    Tape& t = *x.tape;
    if (mode == Mode::Eval) return scale(x, keep_prob);
    if (keep_prob == 1.0) return scale(x, 1.0);
    Eigen::MatrixXd mask(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
        for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(i, j) = rng.bernoulli(keep_prob);
    Var m = t.constant(std::move(mask));
    return mul(x, m);
}

// ---- losses ----

Var pinball_elems(Var u, double alpha_level) {
    if (!(alpha_level > 0.0 && alpha_level < 1.0))
        throw ConfigError("pinball: quantile level outside (0,1)");
    Tape& t = *u.tape;
    const double a = alpha_level;
    Eigen::MatrixXd v = u.value().unaryExpr(
        [a](double x) { return x > 0.0 ? a * x : (1.0 - a) * (-x); });
    return t.push(std::move(v), t.needs_grad(u.id), [u, a](Tape& tp, int self) {
        if (!tp.needs_grad(u.id)) return;
        const Eigen::MatrixXd& g = tp.grad_of(self);
        const Eigen::MatrixXd& in = tp.value_of(u.id);
        tp.grad_of(u.id) += (g.array() * in.unaryExpr([a](double x) {
                                             if (x > 0.0) return a;
                                             if (x < 0.0) return a - 1.0;
                                             return 0.0;  // subgradient at the kink
                                         }).array())
                                .matrix();
    });
}

Var abs_elems(Var u) {
    Tape& t = *u.tape;
    Eigen::MatrixXd v = u.value().cwiseAbs();
    return t.push(std::move(v), t.needs_grad(u.id), [u](Tape& tp, int self) {
        if (!tp.needs_grad(u.id)) return;
        const Eigen::MatrixXd& g = tp.grad_of(self);
        const Eigen::MatrixXd& in = tp.value_of(u.id);
        tp.grad_of(u.id) += (g.array() * in.unaryExpr([](double x) {
                                             return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                                         }).array())
                                .matrix();
    });
}

Var pinball_loss(Var u, double alpha_level) { return mean(pinball_elems(u, alpha_level)); }

Var central_loss(Var u, int gamma) {
    if (gamma == 1) return mean(abs_elems(u));
    if (gamma == 2) return mean(mul(u, u));
    throw ConfigError("central_loss: gamma must be 1 or 2");
}

Var gaussian_nll(Var y, Var mu, Var log_var) {
    check_same_tape(y, mu);
    check_same_tape(mu, log_var);
    if (y.rows() != mu.rows() || y.cols() != mu.cols() || y.rows() != log_var.rows() ||
        y.cols() != log_var.cols())
        throw NumericError("gaussian_nll: shape mismatch");
    Var r = sub(y, mu);
    Var scaled_sq = mul(mul(r, r), activation(scale(log_var, -1.0), Activation::Exp));
    return mean(add(scaled_sq, scale(log_var, 0.5)));
}

// ---- optimization ----

void adam_step(ParamStore& params, const std::map<std::string, Eigen::MatrixXd>& grads,
               AdamState& state, const AdamConfig& cfg) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (const auto& [name, g] : grads) {
        if (!params.has(name) || !params.trainable(name)) continue;
        const Eigen::MatrixXd& value = params.value(name);
        if (g.rows() != value.rows() || g.cols() != value.cols())
            throw NumericError("adam_step: gradient shape mismatch for '" + name + "'");
        auto& m = state.m.try_emplace(name, Eigen::MatrixXd::Zero(g.rows(), g.cols()))
                      .first->second;
        auto& v = state.v.try_emplace(name, Eigen::MatrixXd::Zero(g.rows(), g.cols()))
                      .first->second;
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        const Eigen::MatrixXd mhat = m / bc1;
        const Eigen::MatrixXd vhat = v / bc2;
        params.set_value(name, value.array() -
                                   cfg.lr * mhat.array() / (vhat.array().sqrt() + cfg.eps));
    }
}

// ---- gradient verification ----

GradCheckReport grad_check(const std::function<Var(Tape&, const ParamStore&)>& f,
                           ParamStore& params, double h, double tol,
                           const std::function<bool(const std::string&, int, int)>& exclude) {
    if (!(h > 0.0)) throw ConfigError("grad_check: h must be positive");

    Tape tape;
    Var loss = f(tape, params);
    tape.backward(loss);
    const auto ad_grads = tape.param_gradients();

    auto eval = [&](const ParamStore& p) {
        Tape t;
        return f(t, p).scalar();
    };

    GradCheckReport report;
    for (const std::string& name : params.names()) {
        if (!params.trainable(name)) continue;
        auto git = ad_grads.find(name);
        const Eigen::MatrixXd base = params.value(name);
        const Eigen::MatrixXd ad = git != ad_grads.end()
                                       ? git->second
                                       : Eigen::MatrixXd::Zero(base.rows(), base.cols());
        for (Eigen::Index i = 0; i < base.rows(); ++i) {
            for (Eigen::Index j = 0; j < base.cols(); ++j) {
                if (exclude && exclude(name, static_cast<int>(i), static_cast<int>(j))) {
                    ++report.skipped;
                    continue;
                }
                Eigen::MatrixXd bumped = base;
                bumped(i, j) = base(i, j) + h;
                params.set_value(name, bumped);
                const double up = eval(params);
                bumped(i, j) = base(i, j) - h;
                params.set_value(name, bumped);
                const double down = eval(params);
                params.set_value(name, base);

                const double fd = (up - down) / (2.0 * h);
                const double a = ad(i, j);
                const double denom = std::max({1.0, std::abs(a), std::abs(fd)});
                const double rel = std::abs(a - fd) / denom;
                ++report.checked;
                if (rel > report.max_rel_err) {
                    report.max_rel_err = rel;
                    report.worst_param = name;
                }
                if (rel > tol)
                    report.failures.push_back({name, static_cast<int>(i),
                                               static_cast<int>(j), a, fd, rel});
            }
        }
    }
    report.pass = report.failures.empty();
    return report;
}

}  // namespace deepyc::ad
