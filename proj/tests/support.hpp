#pragma once

#include "emtbo/gp.hpp"
#include "emtbo/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace testsupport {

inline Eigen::MatrixXd random_points(emtbo::Rng& rng, Eigen::Index n, Eigen::Index d) {
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            x(i, j) = emtbo::uniform01(rng);
        }
    }
    return x;
}

// Draw from a zero-mean GP prior at the given inputs, written out directly
// from the kernel formulas so it does not share code with the library.
inline Eigen::VectorXd gp_draw(emtbo::Rng& rng, const Eigen::MatrixXd& x, double sigma, double l, bool matern) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double r = (x.row(i) - x.row(j)).norm() / l;
            k(i, j) = matern ? sigma * sigma * (1 + std::sqrt(5.0) * r + 5.0 * r * r / 3.0) * std::exp(-std::sqrt(5.0) * r)
                             : sigma * sigma * std::exp(-0.5 * r * r);
        }
        k(i, i) += 1e-8 * sigma * sigma;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        z[i] = emtbo::standard_normal(rng);
    }
    return llt.matrixL() * z;
}

// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

// Asymptotic 1 % critical value of the one-sample KS statistic.
inline double ks_critical_1pct(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

}  // namespace testsupport
