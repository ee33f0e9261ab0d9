#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ovi/param_store.hpp"

namespace ovi {

/// Central-difference gradient (f(w+h) − f(w−h)) / 2h over every scalar of
/// `stores`, in store order then flat parameter order. `f` must be a
/// deterministic function of the stored values. Values are restored on exit.
std::vector<double> finite_diff_grad(const std::function<double()>& f, std::span<ParamStore* const> stores,
                                     double h = 1e-5);

std::vector<double> finite_diff_grad(const std::function<double()>& f, ParamStore& store, double h = 1e-5);

/// Central-difference gradient of a function of a plain vector.
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> at, double h = 1e-5);

/// |a − b| / max(|a|, |b|, floor); the floor keeps near-zero pairs from
/// reporting huge relative errors.
double relative_error(double a, double b, double floor = 1e-8);
double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8);

} // namespace ovi
