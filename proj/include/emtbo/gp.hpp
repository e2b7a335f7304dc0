#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cstddef>
#include <string_view>
#include <vector>

namespace emtbo {

enum class KernelKind { SquaredExponential, Matern52 };

std::string_view to_string(KernelKind kind) noexcept;
KernelKind kernel_kind_from_string(std::string_view name);

// Kernel hyperparameters. A single lengthscale is shared across all input
// dimensions; otherwise there must be one lengthscale per dimension.
struct Hyperparams {
    double signal_amplitude = 1.0;
    Eigen::VectorXd lengthscales = Eigen::VectorXd::Constant(1, 0.5);
    double noise_variance = 1e-6;

    [[nodiscard]] bool is_shared_lengthscale() const noexcept { return lengthscales.size() == 1; }
    [[nodiscard]] double lengthscale(Eigen::Index dim) const {
        return is_shared_lengthscale() ? lengthscales[0] : lengthscales[dim];
    }
    // Number of inferred hyperparameters: amplitude plus lengthscales.
    [[nodiscard]] Eigen::Index free_count() const noexcept { return 1 + lengthscales.size(); }

    // Validates positivity; throws Error(invalid_argument).
    void validate() const;
    // Validates against a point dimension; throws Error(dimension_mismatch).
    void check_dimension(Eigen::Index dim) const;

    friend bool operator==(const Hyperparams& a, const Hyperparams& b) {
        return a.signal_amplitude == b.signal_amplitude && a.lengthscales == b.lengthscales &&
               a.noise_variance == b.noise_variance;
    }
};

// Append-only set of evaluated pairs. Rows of inputs() are points.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(Eigen::Index dim) : inputs_(0, dim) {}
    Dataset(Eigen::MatrixXd inputs, Eigen::VectorXd outputs);

    void add(const Eigen::VectorXd& x, double y);

    [[nodiscard]] Eigen::Index size() const noexcept { return outputs_.size(); }
    [[nodiscard]] Eigen::Index dim() const noexcept { return inputs_.cols(); }
    [[nodiscard]] bool empty() const noexcept { return outputs_.size() == 0; }
    [[nodiscard]] const Eigen::MatrixXd& inputs() const noexcept { return inputs_; }
    [[nodiscard]] const Eigen::VectorXd& outputs() const noexcept { return outputs_; }
    [[nodiscard]] Eigen::VectorXd point(Eigen::Index i) const { return inputs_.row(i).transpose(); }

    // Copy with outputs replaced (same inputs).
    [[nodiscard]] Dataset with_outputs(Eigen::VectorXd outputs) const;

private:
    Eigen::MatrixXd inputs_;
    Eigen::VectorXd outputs_;
};

/// Covariance sigma^2 k(r) with r the lengthscale-weighted Euclidean distance.
double kernel_eval(KernelKind kind, const Hyperparams& theta, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& xp);

/// Gram matrix of the kernel over the rows of `inputs` (no noise, no jitter).
Eigen::MatrixXd gram_matrix(KernelKind kind, const Hyperparams& theta, const Eigen::MatrixXd& inputs);

struct JitterPolicy {
    double initial = 1e-10;  // relative to sigma^2
    double factor = 10.0;
    double maximum = 1e-4;   // relative to sigma^2
};

struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
};

// Trained zero-mean GP. Immutable after construction.
class GpPosterior {
public:
    [[nodiscard]] KernelKind kernel() const noexcept { return kind_; }
    [[nodiscard]] const Hyperparams& hyperparams() const noexcept { return theta_; }
    [[nodiscard]] const Dataset& data() const noexcept { return data_; }
    [[nodiscard]] const Eigen::MatrixXd& cholesky_factor() const noexcept { return chol_; }
    [[nodiscard]] const Eigen::VectorXd& weights() const noexcept { return weights_; }
    // Absolute jitter added to the diagonal on top of the noise variance.
    [[nodiscard]] double jitter() const noexcept { return jitter_; }

    [[nodiscard]] Prediction predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;

private:
    friend GpPosterior fit_posterior(const Dataset&, KernelKind, const Hyperparams&, const JitterPolicy&);

    KernelKind kind_ = KernelKind::SquaredExponential;
    Hyperparams theta_;
    Dataset data_;
    Eigen::MatrixXd chol_;
    Eigen::VectorXd weights_;
    double jitter_ = 0.0;
};

GpPosterior fit_posterior(const Dataset& data, KernelKind kind, const Hyperparams& theta,
                          const JitterPolicy& jitter = {});

inline Prediction predict(const GpPosterior& posterior, const Eigen::Ref<const Eigen::VectorXd>& x) {
    return posterior.predict(x);
}

struct LmlResult {
    double value = 0.0;
    // d/d(signal_amplitude), then d/d(lengthscale_j) for each stored lengthscale.
    Eigen::VectorXd gradient;
    double jitter = 0.0;
};

/// Log marginal likelihood of the regularized zero-mean GP and its analytic
/// gradient with respect to (signal_amplitude, lengthscales).
LmlResult log_marginal_likelihood(const Dataset& data, KernelKind kind, const Hyperparams& theta,
                                  const JitterPolicy& jitter = {});

}  // namespace emtbo
