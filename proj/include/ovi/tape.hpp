#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "ovi/param_store.hpp"
#include "ovi/real_array.hpp"

namespace ovi {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// tape that produced it is alive.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

    std::span<const double> value() const;
    double scalar() const;
    std::size_t size() const;

    friend bool operator==(const Var& a, const Var& b) noexcept { return a.tape_ == b.tape_ && a.id_ == b.id_; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Floors applied before log-densities.
inline constexpr double kProbFloor = 1e-6;
inline constexpr double kVarFloor = 1e-6;

/// Linear record of executed kernels. Nodes are appended in execution order,
/// so reverse creation order is a valid topological order for backward().
class Tape {
public:
    struct Node;
    /// Backward rule: reads `tape.node(self).grad` and accumulates into inputs.
    using Backward = std::function<void(Tape&, std::size_t self)>;

    struct Node {
        std::string_view kernel;
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;
        std::vector<double> aux;
        std::vector<std::size_t> inputs;
        Backward backward;
        bool requires_grad = false;
        ParamStore* store = nullptr;
        ParamId param;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(std::vector<double> value);
    Var constant(const RealArray& value);
    /// Differentiable leaf whose gradient is read back with grad().
    Var input(const RealArray& value);
    /// Leaf bound to a stored parameter; backward() accumulates into the store.
    Var param(ParamStore& store, ParamId id);
    std::vector<Var> bind(ParamStore& store);

    /// Exact reverse-mode pass from a scalar root. Node gradients are reset
    /// first; parameter gradients are added to their stores' grad arrays.
    void backward(Var root);

    std::span<const double> value(Var v) const { return nodes_.at(v.id()).value; }
    /// Gradient of the last backward() root w.r.t. `v` (zeros when off-path).
    std::vector<double> grad(Var v) const;
    const Shape& shape(Var v) const { return nodes_.at(v.id()).shape; }
    std::size_t node_count() const noexcept { return nodes_.size(); }

    Node& node(std::size_t id) { return nodes_[id]; }
    const Node& node(std::size_t id) const { return nodes_[id]; }
    bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }

    /// Records a kernel output. Throws NumericError naming `kernel` when the
    /// value is not finite.
    Var make(std::string_view kernel, Shape shape, std::vector<double> value, std::vector<Var> inputs,
             Backward backward, std::vector<double> aux = {});

    /// Gradient buffer of an input node, allocated on first use during backward.
    std::vector<double>& grad_buffer(std::size_t id);

private:
    std::vector<Node> nodes_;
    std::map<std::pair<const ParamStore*, std::size_t>, std::size_t> bound_;
};

enum class Activation { tanh, sigmoid, softplus };

Activation parse_activation(std::string_view name);

/// y = x W + bias with x of length n, W of shape [n, m], bias of length m.
Var affine(Var x, Var W, Var bias);
Var activation(Var x, Activation kind);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_constant(Var a, double c);
Var sum(Var a);
/// Sum of scalar Vars, in order.
Var add_n(std::span<const Var> scalars);
Var concat(std::span<const Var> parts);
Var slice(Var a, std::size_t offset, std::size_t length);
Var softmax(Var logits);

/// Σ_i [−½ ln(2π var_i) − (x_i − mu_i)² / (2 var_i)], variance floored at kVarFloor.
Var gaussian_log_prob(Var x, Var mu, Var var);
/// b ln p + (1−b) ln(1−p) with p clamped to [kProbFloor, 1 − kProbFloor].
Var bernoulli_log_prob(int b, Var p);
/// z = mu + sqrt(var) ⊙ eps; eps is a constant noise draw.
Var reparameterize(Var mu, Var var, std::span<const double> eps);

double softplus_value(double x);
double sigmoid_value(double x);
double reparameterize_value(double mu, double var, double eps);

} // namespace ovi
