#include "ovi/finite_diff.hpp"

#include <algorithm>
#include <cmath>

#include "ovi/errors.hpp"

namespace ovi {

std::vector<double> finite_diff_grad(const std::function<double()>& f, std::span<ParamStore* const> stores,
                                     double h) {
    std::vector<double> out;
    for (ParamStore* store : stores) {
        for (std::size_t p = 0; p < store->size(); ++p) {
            auto& w = store->entry(p).value.data();
            for (std::size_t k = 0; k < w.size(); ++k) {
                const double saved = w[k];
                w[k] = saved + h;
                const double plus = f();
                w[k] = saved - h;
                const double minus = f();
                w[k] = saved;
                out.push_back((plus - minus) / (2.0 * h));
            }
        }
    }
    return out;
}

std::vector<double> finite_diff_grad(const std::function<double()>& f, ParamStore& store, double h) {
    ParamStore* stores[] = {&store};
    return finite_diff_grad(f, stores, h);
}

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> at, double h) {
    std::vector<double> out(at.size());
    for (std::size_t k = 0; k < at.size(); ++k) {
        const double saved = at[k];
        at[k] = saved + h;
        const double plus = f(at);
        at[k] = saved - h;
        const double minus = f(at);
        at[k] = saved;
        out[k] = (plus - minus) / (2.0 * h);
    }
    return out;
}

double relative_error(double a, double b, double floor) {
    const double denom = std::max({std::abs(a), std::abs(b), floor});
    return std::abs(a - b) / denom;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
    if (a.size() != b.size()) throw DimensionError("max_relative_error: length mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i], floor));
    return worst;
}

} // namespace ovi
