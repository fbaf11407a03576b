#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace survfuse::detail {

// bias-corrected Adam over one flat parameter vector
struct FlatAdam {
    double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;
    long step = 0;

    FlatAdam(std::size_t n, double lr) : lr(lr), m(n, 0.0), v(n, 0.0) {}

    void update(std::vector<double>& w, const std::vector<double>& g) {
        step += 1;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
};

}  // namespace survfuse::detail
