#include "ovi/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ovi/errors.hpp"

namespace ovi {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void require_same_size(std::string_view kernel, Var a, Var b) {
    if (a.size() != b.size()) {
        throw DimensionError(std::string(kernel) + ": operand sizes differ (" + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()) + ")");
    }
}

void require_same_tape(Var a, Var b) {
    if (a.tape() != b.tape()) throw InputError("kernel operands recorded on different tapes");
}

} // namespace

std::span<const double> Var::value() const { return tape_->value(*this); }

double Var::scalar() const {
    auto v = value();
    if (v.size() != 1) throw DimensionError("Var::scalar on array of size " + std::to_string(v.size()));
    return v[0];
}

std::size_t Var::size() const { return tape_->node(id_).value.size(); }

Var Tape::constant(std::vector<double> value) {
    Node n;
    n.kernel = "constant";
    n.shape = {value.size()};
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(const RealArray& value) {
    Var v = constant(value.data());
    nodes_.back().shape = value.shape();
    return v;
}

Var Tape::input(const RealArray& value) {
    Var v = constant(value);
    nodes_.back().kernel = "input";
    nodes_.back().requires_grad = true;
    return v;
}

Var Tape::param(ParamStore& store, ParamId id) {
    const auto key = std::make_pair(static_cast<const ParamStore*>(&store), id.index);
    if (auto it = bound_.find(key); it != bound_.end()) return Var(this, it->second);
    const auto& entry = store.entry(id);
    Node n;
    n.kernel = "param";
    n.shape = entry.value.shape();
    n.value = entry.value.data();
    n.requires_grad = true;
    n.store = &store;
    n.param = id;
    nodes_.push_back(std::move(n));
    bound_.emplace(key, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
}

std::vector<Var> Tape::bind(ParamStore& store) {
    std::vector<Var> out;
    out.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) out.push_back(param(store, ParamId{i}));
    return out;
}

std::vector<double> Tape::grad(Var v) const {
    const auto& n = nodes_.at(v.id());
    if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
    return n.grad;
}

std::vector<double>& Tape::grad_buffer(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
}

Var Tape::make(std::string_view kernel, Shape shape, std::vector<double> value, std::vector<Var> inputs,
               Backward backward, std::vector<double> aux) {
    for (double x : value) {
        if (!std::isfinite(x)) {
            throw NumericError("kernel '" + std::string(kernel) + "' produced a non-finite value");
        }
    }
    Node n;
    n.kernel = kernel;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.aux = std::move(aux);
    n.inputs.reserve(inputs.size());
    for (const Var& in : inputs) {
        if (in.tape() != this) throw InputError(std::string(kernel) + ": operand from a different tape");
        n.inputs.push_back(in.id());
        n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var root) {
    if (root.tape() != this) throw InputError("backward: root from a different tape");
    const auto& r = nodes_.at(root.id());
    if (r.value.size() != 1) {
        throw DimensionError("backward: objective must be scalar, got size " + std::to_string(r.value.size()));
    }
    if (!std::isfinite(r.value[0])) {
        throw NumericError("backward: objective emitted by kernel '" + std::string(r.kernel) + "' is not finite");
    }
    for (auto& n : nodes_) n.grad.clear();
    if (!r.requires_grad) return;
    grad_buffer(root.id())[0] = 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
        auto& n = nodes_[i];
        if (!n.requires_grad || n.grad.empty()) continue;
        if (n.backward) n.backward(*this, i);
    }
    for (auto& n : nodes_) {
        if (n.store == nullptr || n.grad.empty()) continue;
        auto& g = n.store->grad(n.param).data();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
    }
}

Activation parse_activation(std::string_view name) {
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "softplus") return Activation::softplus;
    throw ConfigError("unknown activation kind '" + std::string(name) + "'");
}

double softplus_value(double x) {
    // log(1 + e^x) without overflow; floored so the output stays strictly positive.
    const double y = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    return std::max(y, std::numeric_limits<double>::min());
}

double sigmoid_value(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double reparameterize_value(double mu, double var, double eps) { return mu + std::sqrt(var) * eps; }

Var affine(Var x, Var W, Var bias) {
    require_same_tape(x, W);
    require_same_tape(x, bias);
    Tape& tape = *x.tape();
    const Shape& ws = tape.shape(W);
    if (ws.size() != 2) throw DimensionError("affine: W must be a matrix, got shape " + shape_string(ws));
    const std::size_t n_in = ws[0];
    const std::size_t n_out = ws[1];
    if (x.size() != n_in) {
        throw DimensionError("affine: x has length " + std::to_string(x.size()) + " but W has " +
                             std::to_string(n_in) + " rows");
    }
    if (bias.size() != n_out) {
        throw DimensionError("affine: bias has length " + std::to_string(bias.size()) + " but W has " +
                             std::to_string(n_out) + " columns");
    }
    auto xv = x.value();
    auto wv = W.value();
    auto bv = bias.value();
    std::vector<double> y(bv.begin(), bv.end());
    for (std::size_t i = 0; i < n_in; ++i) {
        const double xi = xv[i];
        if (xi == 0.0) continue;
        const double* row = wv.data() + i * n_out;
        for (std::size_t j = 0; j < n_out; ++j) y[j] += xi * row[j];
    }
    return tape.make("affine", {n_out}, std::move(y), {x, W, bias}, [n_in, n_out](Tape& t, std::size_t self) {
        const auto& node = t.node(self);
        const std::size_t xi_id = node.inputs[0], w_id = node.inputs[1], b_id = node.inputs[2];
        const std::vector<double>& gy = node.grad;
        if (t.node(b_id).requires_grad) {
            auto& gb = t.grad_buffer(b_id);
            for (std::size_t j = 0; j < n_out; ++j) gb[j] += gy[j];
        }
        const auto& xval = t.node(xi_id).value;
        if (t.node(w_id).requires_grad) {
            auto& gw = t.grad_buffer(w_id);
            for (std::size_t i = 0; i < n_in; ++i) {
                const double xi = xval[i];
                if (xi == 0.0) continue;
                double* row = gw.data() + i * n_out;
                for (std::size_t j = 0; j < n_out; ++j) row[j] += xi * gy[j];
            }
        }
        if (t.node(xi_id).requires_grad) {
            const auto& wval = t.node(w_id).value;
            auto& gx = t.grad_buffer(xi_id);
            for (std::size_t i = 0; i < n_in; ++i) {
                const double* row = wval.data() + i * n_out;
                double acc = 0.0;
                for (std::size_t j = 0; j < n_out; ++j) acc += row[j] * gy[j];
                gx[i] += acc;
            }
        }
    });
}

Var activation(Var x, Activation kind) {
    Tape& tape = *x.tape();
    auto xv = x.value();
    std::vector<double> y(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        switch (kind) {
        case Activation::tanh: y[i] = std::tanh(xv[i]); break;
        case Activation::sigmoid: y[i] = sigmoid_value(xv[i]); break;
        case Activation::softplus: y[i] = softplus_value(xv[i]); break;
        }
    }
    static constexpr std::string_view names[] = {"tanh", "sigmoid", "softplus"};
    return tape.make(names[static_cast<int>(kind)], tape.shape(x), std::move(y), {x},
                     [kind](Tape& t, std::size_t self) {
                         const auto& node = t.node(self);
                         const auto& xin = t.node(node.inputs[0]).value;
                         auto& gx = t.grad_buffer(node.inputs[0]);
                         for (std::size_t i = 0; i < gx.size(); ++i) {
                             double d = 0.0;
                             switch (kind) {
                             case Activation::tanh: d = 1.0 - node.value[i] * node.value[i]; break;
                             case Activation::sigmoid: d = node.value[i] * (1.0 - node.value[i]); break;
                             case Activation::softplus: d = sigmoid_value(xin[i]); break;
                             }
                             gx[i] += d * node.grad[i];
                         }
                     });
}

namespace {

Var binary_elementwise(std::string_view kernel, Var a, Var b, double sign_b) {
    require_same_tape(a, b);
    require_same_size(kernel, a, b);
    auto av = a.value();
    auto bv = b.value();
    std::vector<double> y(av.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + sign_b * bv[i];
    return a.tape()->make(kernel, a.tape()->shape(a), std::move(y), {a, b}, [sign_b](Tape& t, std::size_t self) {
        const auto& node = t.node(self);
        for (int k = 0; k < 2; ++k) {
            const std::size_t in = node.inputs[k];
            if (!t.node(in).requires_grad) continue;
            auto& g = t.grad_buffer(in);
            const double s = k == 0 ? 1.0 : sign_b;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * node.grad[i];
        }
    });
}

} // namespace

Var add(Var a, Var b) { return binary_elementwise("add", a, b, 1.0); }

Var sub(Var a, Var b) { return binary_elementwise("sub", a, b, -1.0); }

Var mul(Var a, Var b) {
    require_same_tape(a, b);
    require_same_size("mul", a, b);
    auto av = a.value();
    auto bv = b.value();
    std::vector<double> y(av.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    return a.tape()->make("mul", a.tape()->shape(a), std::move(y), {a, b}, [](Tape& t, std::size_t self) {
        const auto& node = t.node(self);
        const std::size_t ia = node.inputs[0], ib = node.inputs[1];
        if (t.node(ia).requires_grad) {
            const auto& bval = t.node(ib).value;
            auto& g = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += bval[i] * node.grad[i];
        }
        if (t.node(ib).requires_grad) {
            const auto& aval = t.node(ia).value;
            auto& g = t.grad_buffer(ib);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += aval[i] * node.grad[i];
        }
    });
}

Var scale(Var a, double factor) {
    auto av = a.value();
    std::vector<double> y(av.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = factor * av[i];
    return a.tape()->make("scale", a.tape()->shape(a), std::move(y), {a}, [factor](Tape& t, std::size_t self) {
        const auto& node = t.node(self);
        auto& g = t.grad_buffer(node.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * node.grad[i];
    });
}

Var add_constant(Var a, double c) {
    auto av = a.value();
    std::vector<double> y(av.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + c;
    return a.tape()->make("add_constant", a.tape()->shape(a), std::move(y), {a}, [](Tape& t, std::size_t self) {
        const auto& node = t.node(self);
        auto& g = t.grad_buffer(node.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
    });
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value()) s += v;
    return a.tape()->make("sum", {1}, {s}, {a}, [](Tape& t, std::size_t self) {
        const auto& node = t.node(self);
        auto& g = t.grad_buffer(node.inputs[0]);
        for (double& gi : g) gi += node.grad[0];
    });
}

Var add_n(std::span<const Var> scalars) {
    if (scalars.empty()) throw InputError("add_n: no operands");
    double s = 0.0;
    for (const Var& v : scalars) {
        if (v.size() != 1) throw DimensionError("add_n: operand of size " + std::to_string(v.size()));
        s += v.scalar();
    }
    std::vector<Var> inputs(scalars.begin(), scalars.end());
    return scalars.front().tape()->make("add_n", {1}, {s}, std::move(inputs), [](Tape& t, std::size_t self) {
        const auto& node = t.node(self);
        for (std::size_t in : node.inputs) {
            if (t.node(in).requires_grad) t.grad_buffer(in)[0] += node.grad[0];
        }
    });
}

Var concat(std::span<const Var> parts) {
    if (parts.empty()) throw InputError("concat: no operands");
    std::vector<double> y;
    for (const Var& p : parts) {
        require_same_tape(parts.front(), p);
        auto v = p.value();
        y.insert(y.end(), v.begin(), v.end());
    }
    const std::size_t n = y.size();
    std::vector<Var> inputs(parts.begin(), parts.end());
    return parts.front().tape()->make("concat", {n}, std::move(y), std::move(inputs), [](Tape& t, std::size_t self) {
        const auto& node = t.node(self);
        std::size_t offset = 0;
        for (std::size_t in : node.inputs) {
            const std::size_t len = t.node(in).value.size();
            if (t.node(in).requires_grad) {
                auto& g = t.grad_buffer(in);
                for (std::size_t i = 0; i < len; ++i) g[i] += node.grad[offset + i];
            }
            offset += len;
        }
    });
}

Var slice(Var a, std::size_t offset, std::size_t length) {
    if (offset + length > a.size()) {
        throw DimensionError("slice: range [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                             ") exceeds length " + std::to_string(a.size()));
    }
    auto av = a.value();
    std::vector<double> y(av.begin() + static_cast<std::ptrdiff_t>(offset),
                          av.begin() + static_cast<std::ptrdiff_t>(offset + length));
    return a.tape()->make("slice", {length}, std::move(y), {a}, [offset, length](Tape& t, std::size_t self) {
        const auto& node = t.node(self);
        auto& g = t.grad_buffer(node.inputs[0]);
        for (std::size_t i = 0; i < length; ++i) g[offset + i] += node.grad[i];
    });
}

Var softmax(Var logits) {
    auto lv = logits.value();
    if (lv.empty()) throw DimensionError("softmax: empty input");
    const double mx = *std::max_element(lv.begin(), lv.end());
    std::vector<double> y(lv.size());
    double z = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = std::exp(lv[i] - mx);
        z += y[i];
    }
    for (double& v : y) v /= z;
    return logits.tape()->make("softmax", {y.size()}, std::move(y), {logits}, [](Tape& t, std::size_t self) {
        const auto& node = t.node(self);
        double dot = 0.0;
        for (std::size_t i = 0; i < node.value.size(); ++i) dot += node.value[i] * node.grad[i];
        auto& g = t.grad_buffer(node.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.value[i] * (node.grad[i] - dot);
    });
}

Var gaussian_log_prob(Var x, Var mu, Var var) {
    require_same_tape(x, mu);
    require_same_tape(x, var);
    require_same_size("gaussian_log_prob", x, mu);
    require_same_size("gaussian_log_prob", x, var);
    auto xv = x.value();
    auto mv = mu.value();
    auto vv = var.value();
    double lp = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        if (!(vv[i] > 0.0)) {
            throw DomainError("gaussian_log_prob: nonpositive variance " + std::to_string(vv[i]) + " at index " +
                              std::to_string(i));
        }
        const double v = std::max(vv[i], kVarFloor);
        const double r = xv[i] - mv[i];
        lp += -0.5 * (kLog2Pi + std::log(v)) - r * r / (2.0 * v);
    }
    return x.tape()->make("gaussian_log_prob", {1}, {lp}, {x, mu, var}, [](Tape& t, std::size_t self) {
        const auto& node = t.node(self);
        const double g = node.grad[0];
        const std::size_t ix = node.inputs[0], im = node.inputs[1], iv = node.inputs[2];
        const auto& xval = t.node(ix).value;
        const auto& mval = t.node(im).value;
        const auto& vval = t.node(iv).value;
        const std::size_t n = xval.size();
        std::vector<double>* gx = t.node(ix).requires_grad ? &t.grad_buffer(ix) : nullptr;
        std::vector<double>* gm = t.node(im).requires_grad ? &t.grad_buffer(im) : nullptr;
        std::vector<double>* gv = t.node(iv).requires_grad ? &t.grad_buffer(iv) : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
            const bool floored = vval[i] < kVarFloor;
            const double v = floored ? kVarFloor : vval[i];
            const double r = xval[i] - mval[i];
            if (gx) (*gx)[i] += g * (-r / v);
            if (gm) (*gm)[i] += g * (r / v);
            if (gv && !floored) (*gv)[i] += g * (-0.5 / v + r * r / (2.0 * v * v));
        }
    });
}

Var bernoulli_log_prob(int b, Var p) {
    if (b != 0 && b != 1) throw DomainError("bernoulli_log_prob: outcome " + std::to_string(b) + " not in {0,1}");
    if (p.size() != 1) throw DimensionError("bernoulli_log_prob: probability must be scalar");
    const double raw = p.scalar();
    const bool clamped = raw < kProbFloor || raw > 1.0 - kProbFloor;
    const double pc = std::clamp(raw, kProbFloor, 1.0 - kProbFloor);
    const double lp = b == 1 ? std::log(pc) : std::log1p(-pc);
    return p.tape()->make("bernoulli_log_prob", {1}, {lp}, {p}, [b, pc, clamped](Tape& t, std::size_t self) {
        if (clamped) return;
        const auto& node = t.node(self);
        const double d = b == 1 ? 1.0 / pc : -1.0 / (1.0 - pc);
        t.grad_buffer(node.inputs[0])[0] += d * node.grad[0];
    });
}

Var reparameterize(Var mu, Var var, std::span<const double> eps) {
    require_same_tape(mu, var);
    require_same_size("reparameterize", mu, var);
    if (eps.size() != mu.size()) {
        throw DimensionError("reparameterize: eps has length " + std::to_string(eps.size()) + ", expected " +
                             std::to_string(mu.size()));
    }
    auto mv = mu.value();
    auto vv = var.value();
    std::vector<double> z(mv.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (!(vv[i] > 0.0)) {
            throw DomainError("reparameterize: nonpositive variance " + std::to_string(vv[i]) + " at index " +
                              std::to_string(i));
        }
        z[i] = reparameterize_value(mv[i], vv[i], eps[i]);
    }
    std::vector<double> aux(eps.begin(), eps.end());
    return mu.tape()->make("reparameterize", {z.size()}, std::move(z), {mu, var},
                           [](Tape& t, std::size_t self) {
                               const auto& node = t.node(self);
                               const std::size_t im = node.inputs[0], iv = node.inputs[1];
                               if (t.node(im).requires_grad) {
                                   auto& g = t.grad_buffer(im);
                                   for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
                               }
                               if (t.node(iv).requires_grad) {
                                   const auto& vval = t.node(iv).value;
                                   auto& g = t.grad_buffer(iv);
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       g[i] += node.grad[i] * node.aux[i] * 0.5 / std::sqrt(vval[i]);
                                   }
                               }
                           },
                           std::move(aux));
}

} // namespace ovi
