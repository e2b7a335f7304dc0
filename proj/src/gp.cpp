#include "emtbo/gp.hpp"

#include "emtbo/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace emtbo {

namespace {

constexpr double sqrt5 = 2.2360679774997896964091736687313;

// Squared lengthscale-weighted distance.
double scaled_sq_distance(const Hyperparams& theta, const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::Ref<const Eigen::VectorXd>& xp) {
    double r2 = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double d = (x[j] - xp[j]) / theta.lengthscale(j);
        r2 += d * d;
    }
    return r2;
}

double unit_kernel(KernelKind kind, double r2) {
    if (kind == KernelKind::SquaredExponential) {
        return std::exp(-0.5 * r2);
    }
    const double r = std::sqrt(r2);
    return (1.0 + sqrt5 * r + 5.0 * r2 / 3.0) * std::exp(-sqrt5 * r);
}

// Factor of d k / d l_j that multiplies (x_j - x'_j)^2 / l_j^3, divided by sigma^2.
double lengthscale_factor(KernelKind kind, double r2) {
    if (kind == KernelKind::SquaredExponential) {
        return std::exp(-0.5 * r2);
    }
    const double r = std::sqrt(r2);
    return (5.0 / 3.0) * (1.0 + sqrt5 * r) * std::exp(-sqrt5 * r);
}

struct Factorization {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = 0.0;
};

Factorization factorize(Eigen::MatrixXd k, double noise, double sigma2, const JitterPolicy& policy) {
    const Eigen::Index n = k.rows();
    k.diagonal().array() += noise;
    double rel = policy.initial;
    while (rel <= policy.maximum * (1.0 + 1e-9)) {
        const double jitter = rel * sigma2;
        Eigen::MatrixXd reg = k;
        reg.diagonal().array() += jitter;
        Factorization f{Eigen::LLT<Eigen::MatrixXd>(reg), jitter};
        if (f.llt.info() == Eigen::Success) {
            const auto& l = f.llt.matrixLLT();
            bool finite = true;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) {
                    finite = false;
                    break;
                }
            }
            if (finite) {
                return f;
            }
        }
        rel *= policy.factor;
    }
    throw Error(Errc::not_positive_definite,
                "Gram matrix of " + std::to_string(n) +
                    " points is not positive definite after jitter escalation to " +
                    std::to_string(policy.maximum) + " sigma^2; inputs are too close for the lengthscales");
}

void check_dataset(const Dataset& data, KernelKind, const Hyperparams& theta) {
    theta.validate();
    theta.check_dimension(data.dim());
}

}  // namespace

std::string_view to_string(KernelKind kind) noexcept {
    return kind == KernelKind::SquaredExponential ? "squared_exponential" : "matern52";
}

KernelKind kernel_kind_from_string(std::string_view name) {
    if (name == "squared_exponential" || name == "se") {
        return KernelKind::SquaredExponential;
    }
    if (name == "matern52") {
        return KernelKind::Matern52;
    }
    throw Error(Errc::invalid_argument, "unknown kernel '" + std::string(name) + "'");
}

void Hyperparams::validate() const {
    if (!(signal_amplitude > 0.0) || !std::isfinite(signal_amplitude)) {
        throw Error(Errc::invalid_argument, "signal amplitude must be positive");
    }
    if (lengthscales.size() == 0) {
        throw Error(Errc::invalid_argument, "at least one lengthscale is required");
    }
    for (Eigen::Index i = 0; i < lengthscales.size(); ++i) {
        if (!(lengthscales[i] > 0.0) || !std::isfinite(lengthscales[i])) {
            throw Error(Errc::invalid_argument, "lengthscales must be positive");
        }
    }
    if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
        throw Error(Errc::invalid_argument, "noise variance must be non-negative");
    }
}

void Hyperparams::check_dimension(Eigen::Index dim) const {
    if (!is_shared_lengthscale() && lengthscales.size() != dim) {
        throw Error(Errc::dimension_mismatch, "point has dimension " + std::to_string(dim) + " but " +
                                                  std::to_string(lengthscales.size()) +
                                                  " lengthscales were given");
    }
}

Dataset::Dataset(Eigen::MatrixXd inputs, Eigen::VectorXd outputs)
    : inputs_(std::move(inputs)), outputs_(std::move(outputs)) {
    if (inputs_.rows() != outputs_.size()) {
        throw Error(Errc::dimension_mismatch, "dataset has " + std::to_string(inputs_.rows()) + " inputs but " +
                                                  std::to_string(outputs_.size()) + " outputs");
    }
    if (!inputs_.allFinite() || !outputs_.allFinite()) {
        throw Error(Errc::invalid_argument, "dataset contains non-finite values");
    }
}

void Dataset::add(const Eigen::VectorXd& x, double y) {
    if (inputs_.cols() == 0 && inputs_.rows() == 0) {
        inputs_.resize(0, x.size());
    }
    if (x.size() != inputs_.cols()) {
        throw Error(Errc::dimension_mismatch, "cannot add a " + std::to_string(x.size()) + "-d point to a " +
                                                  std::to_string(inputs_.cols()) + "-d dataset");
    }
    if (!x.allFinite() || !std::isfinite(y)) {
        throw Error(Errc::invalid_argument, "dataset entries must be finite");
    }
    const Eigen::Index n = inputs_.rows();
    inputs_.conservativeResize(n + 1, Eigen::NoChange);
    inputs_.row(n) = x.transpose();
    outputs_.conservativeResize(n + 1);
    outputs_[n] = y;
}

Dataset Dataset::with_outputs(Eigen::VectorXd outputs) const {
    return Dataset(inputs_, std::move(outputs));
}

double kernel_eval(KernelKind kind, const Hyperparams& theta, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& xp) {
    if (x.size() != xp.size()) {
        throw Error(Errc::dimension_mismatch, "kernel arguments have dimensions " + std::to_string(x.size()) +
                                                  " and " + std::to_string(xp.size()));
    }
    theta.check_dimension(x.size());
    const double s2 = theta.signal_amplitude * theta.signal_amplitude;
    return s2 * unit_kernel(kind, scaled_sq_distance(theta, x, xp));
}

Eigen::MatrixXd gram_matrix(KernelKind kind, const Hyperparams& theta, const Eigen::MatrixXd& inputs) {
    theta.check_dimension(inputs.cols());
    const Eigen::Index n = inputs.rows();
    const double s2 = theta.signal_amplitude * theta.signal_amplitude;
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = s2;
        for (Eigen::Index j = 0; j < i; ++j) {
            const double v =
                s2 * unit_kernel(kind, scaled_sq_distance(theta, inputs.row(i).transpose(), inputs.row(j).transpose()));
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

GpPosterior fit_posterior(const Dataset& data, KernelKind kind, const Hyperparams& theta,
                          const JitterPolicy& jitter) {
    if (data.empty()) {
        throw Error(Errc::invalid_argument, "cannot fit a posterior to an empty dataset");
    }
    check_dataset(data, kind, theta);
    const double s2 = theta.signal_amplitude * theta.signal_amplitude;
    auto f = factorize(gram_matrix(kind, theta, data.inputs()), theta.noise_variance, s2, jitter);

    GpPosterior post;
    post.kind_ = kind;
    post.theta_ = theta;
    post.data_ = data;
    post.chol_ = f.llt.matrixL();
    post.weights_ = f.llt.solve(data.outputs());
    post.jitter_ = f.jitter;
    return post;
}

Prediction GpPosterior::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != data_.dim()) {
        throw Error(Errc::dimension_mismatch, "query has dimension " + std::to_string(x.size()) +
                                                  ", training inputs have " + std::to_string(data_.dim()));
    }
    const Eigen::Index n = data_.size();
    const double s2 = theta_.signal_amplitude * theta_.signal_amplitude;
    Eigen::VectorXd kstar(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        kstar[i] = s2 * unit_kernel(kind_, scaled_sq_distance(theta_, data_.inputs().row(i).transpose(), x));
    }
    Prediction p;
    p.mean = kstar.dot(weights_);
    chol_.triangularView<Eigen::Lower>().solveInPlace(kstar);
    p.variance = std::clamp(s2 - kstar.squaredNorm(), 0.0, s2);
    // Below the jitter the factorization cannot resolve variance.
    if (p.variance <= 2.0 * jitter_) {
        p.variance = 0.0;
    }
    return p;
}

LmlResult log_marginal_likelihood(const Dataset& data, KernelKind kind, const Hyperparams& theta,
                                  const JitterPolicy& jitter) {
    if (data.empty()) {
        throw Error(Errc::invalid_argument, "log marginal likelihood needs at least one observation");
    }
    check_dataset(data, kind, theta);
    const Eigen::Index n = data.size();
    const Eigen::Index d = data.dim();
    const double sigma = theta.signal_amplitude;
    const double s2 = sigma * sigma;
    const Eigen::MatrixXd k = gram_matrix(kind, theta, data.inputs());
    auto f = factorize(k, theta.noise_variance, s2, jitter);

    const Eigen::VectorXd alpha = f.llt.solve(data.outputs());
    const auto& l = f.llt.matrixLLT();
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        log_det += std::log(l(i, i));
    }
    log_det *= 2.0;

    LmlResult out;
    out.jitter = f.jitter;
    out.value = -0.5 * data.outputs().dot(alpha) - 0.5 * log_det -
                0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

    // 0.5 tr((alpha alpha^T - K^-1) dK/dp)
    const Eigen::MatrixXd kinv = f.llt.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd inner = alpha * alpha.transpose() - kinv;

    const Eigen::Index n_ls = theta.lengthscales.size();
    out.gradient = Eigen::VectorXd::Zero(1 + n_ls);
    // dK/dsigma = 2 K_signal / sigma; jitter is held fixed in absolute terms.
    out.gradient[0] = 0.5 * (inner.cwiseProduct(k).sum()) * 2.0 / sigma;

    const Eigen::MatrixXd& x = data.inputs();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) {
            const double r2 = scaled_sq_distance(theta, x.row(i).transpose(), x.row(j).transpose());
            const double common = s2 * lengthscale_factor(kind, r2);
            // Symmetric pair counted twice in the trace.
            const double w = inner(i, j) * common;
            if (theta.is_shared_lengthscale()) {
                out.gradient[1] += w * r2 / theta.lengthscales[0];
            } else {
                for (Eigen::Index dim = 0; dim < d; ++dim) {
                    const double delta = x(i, dim) - x(j, dim);
                    const double ls = theta.lengthscales[dim];
                    out.gradient[1 + dim] += w * delta * delta / (ls * ls * ls);
                }
            }
        }
    }
    return out;
}

}  // namespace emtbo
