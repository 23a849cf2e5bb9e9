#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deepyc/random.hpp"

namespace deepyc::ad {

enum class Activation { Linear, Tanh, Sigmoid, Softplus, Relu, Exp };
enum class Mode { Train, Eval };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

class Tape;

/// Handle to a node on a Tape. Values are dense matrices; column vectors are
/// n x 1 and scalars 1 x 1.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Eigen::MatrixXd& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    double scalar() const;
};

/// Named parameter set with per-entry trainable flags. Frozen entries take
/// part in forward passes but receive neither gradients nor updates.
class ParamStore {
public:
    struct Entry {
        Eigen::MatrixXd value;
        bool trainable = true;
    };

    void add(const std::string& name, Eigen::MatrixXd value, bool trainable = true);
    bool has(const std::string& name) const { return entries_.count(name) > 0; }
    const Eigen::MatrixXd& value(const std::string& name) const;
    void set_value(const std::string& name, Eigen::MatrixXd value);
    bool trainable(const std::string& name) const;
    void set_trainable(const std::string& name, bool trainable);
    std::vector<std::string> names() const;
    std::size_t size() const { return entries_.size(); }
    const std::map<std::string, Entry>& entries() const { return entries_; }

private:
    std::map<std::string, Entry> entries_;
};

/// Record of operations for one forward pass; reverse-mode gradients are
/// obtained by replaying it backwards. The record is append-only, so it is
/// acyclic by construction. Confine a Tape to one thread.
class Tape {
public:
    /// Leaf that never receives a gradient.
    Var constant(Eigen::MatrixXd value);
    /// Generic leaf.
    Var leaf(Eigen::MatrixXd value, bool requires_grad = true);
    /// Leaf bound to a named parameter; requires_grad follows the trainable flag.
    Var param(const ParamStore& store, const std::string& name);

    /// Reverse pass from a scalar. May be called once per tape.
    void backward(const Var& loss);

    /// Gradient of a node (valid after backward; zero matrix for nodes that
    /// do not require gradients).
    Eigen::MatrixXd gradient(const Var& v) const;

    /// Gradients of all trainable parameters touched by this tape.
    std::map<std::string, Eigen::MatrixXd> param_gradients() const;

    int size() const { return static_cast<int>(nodes_.size()); }

    // -- low-level interface used by the operation library --
    using Pull = std::function<void(Tape&, int self)>;
    Var push(Eigen::MatrixXd value, bool requires_grad, Pull pull);
    const Eigen::MatrixXd& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    Eigen::MatrixXd& grad_of(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

private:
    struct Node {
        Eigen::MatrixXd value;
        Eigen::MatrixXd grad;
        bool requires_grad = false;
        Pull pull;  // empty for leaves
    };
    std::vector<Node> nodes_;
    std::map<std::string, int> param_ids_;
    bool ran_backward_ = false;
};

// ---- elementwise and linear-algebra primitives ----

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // Hadamard product
Var matmul(Var a, Var b);
Var transpose(Var a);
Var scale(Var a, double c);
/// m (r x c) plus the row-broadcast of a column vector v (c x 1).
Var add_row_broadcast(Var m, Var v);
Var activation(Var x, Activation act);
/// Row-wise softmax with max subtraction; every output row sums to one.
Var softmax_rows(Var x);
/// Row-major flatten to an (r*c) x 1 column vector.
Var flatten_rows(Var x);
/// Row lookup into an embedding table; returns a column vector and routes the
/// gradient into that row only.
Var embed_row(Var table, int index);
Var sum(Var x);
Var mean(Var x);

// ---- layers ----

/// act(W x + b) for a column vector x. act must be one of
/// linear/tanh/sigmoid/softplus/relu.
Var dense(Var x, Var W, Var b, Activation act);
/// Time-distributed dense over the rows of X: act(X W' + 1 b'). Row l of the
/// output depends on row l of the input only.
Var dense_rows(Var X, Var W, Var b, Activation act);
/// Scaled dot-product attention softmax(Q K'/sqrt(d)) V with d fixed to the
/// key width.
Var attention(Var Q, Var K, Var V);
/// keep_prob is the probability an activation is kept. Train mode multiplies
/// by Bernoulli(keep_prob) draws; eval mode scales by keep_prob so that the
/// output matches the training-time expectation.
Var dropout(Var x, double keep_prob, Mode mode, RngStream& rng);

// ---- losses ----

/// Elementwise pinball values: (1-alpha)|u| for u <= 0, alpha|u| for u > 0;
/// subgradient 0 at u = 0.
Var pinball_elems(Var u, double alpha_level);
Var abs_elems(Var u);
/// Mean pinball loss at the given quantile level.
Var pinball_loss(Var u, double alpha_level);
/// Mean of |u| (gamma = 1) or u^2 (gamma = 2).
Var central_loss(Var u, int gamma);
/// Mean of (y-mu)^2 / sigma^2 + log(sigma^2)/2 with sigma^2 = exp(log_var).
Var gaussian_nll(Var y, Var mu, Var log_var);

// ---- optimization ----

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::map<std::string, Eigen::MatrixXd> m;
    std::map<std::string, Eigen::MatrixXd> v;
    long step = 0;
};

/// One bias-corrected Adam update of every trainable parameter that has a
/// gradient. Frozen parameters and parameters absent from `grads` are left
/// untouched.
void adam_step(ParamStore& params, const std::map<std::string, Eigen::MatrixXd>& grads,
               AdamState& state, const AdamConfig& cfg);

// ---- gradient verification ----

struct GradCheckIssue {
    std::string name;
    int row = 0, col = 0;
    double ad = 0, fd = 0, rel_err = 0;
};

struct GradCheckReport {
    bool pass = true;
    double max_rel_err = 0.0;
    int checked = 0;
    int skipped = 0;
    std::string worst_param;
    std::vector<GradCheckIssue> failures;
};

/// Compares reverse-mode gradients of f against central finite differences,
/// element by element. The discrepancy is measured as
/// |ad - fd| / max(1, |ad|, |fd|), i.e. relative for large gradients with an
/// absolute floor near zero. `exclude(name, row, col)` can skip elements,
/// e.g. near the kink of a pinball term.
GradCheckReport grad_check(
    const std::function<Var(Tape&, const ParamStore&)>& f, ParamStore& params, double h,
    double tol,
    const std::function<bool(const std::string&, int, int)>& exclude = nullptr);

}  // namespace deepyc::ad
