#pragma once

#include "emtbo/gp.hpp"

#include <string>
#include <vector>

namespace emtbo {

enum class Sense { Minimize, Maximize };

struct Incumbent {
    double y_star = 0.0;
    Sense sense = Sense::Minimize;

    // Extremal observed output under `sense`.
    static Incumbent from_data(const Dataset& data, Sense sense = Sense::Minimize);
};

struct ThresholdSpec {
    double threshold = 0.0;
    double delta = 1.0;
    double alpha = 1.0;

    void validate() const;
};

double normal_pdf(double z) noexcept;
double normal_cdf(double z) noexcept;

/// Closed-form E[max(0, y* - Y)] for Y ~ N(mean, stddev^2). For a maximizing
/// incumbent the improvement is E[max(0, Y - y*)].
double expected_improvement(double mean, double stddev, const Incumbent& inc) noexcept;
double expected_improvement(const GpPosterior& posterior, const Eigen::Ref<const Eigen::VectorXd>& x,
                            const Incumbent& inc);

/// Closed-form E[max(eps - |T - Y|, 0)] with eps = delta * alpha * stddev.
double bichon_criterion(double mean, double stddev, const ThresholdSpec& thr) noexcept;
double bichon_criterion(const GpPosterior& posterior, const Eigen::Ref<const Eigen::VectorXd>& x,
                        const ThresholdSpec& thr);

enum class AcquisitionKind { ExpectedImprovement, Bichon };

// Inner acquisition and its parameter; exactly one of inc/thr is used.
struct AcquisitionSpec {
    AcquisitionKind kind = AcquisitionKind::ExpectedImprovement;
    Incumbent incumbent;
    ThresholdSpec threshold;

    [[nodiscard]] double operator()(const GpPosterior& posterior, const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

// Hyperparameter-marginalized acquisition: one posterior per sample, fitted
// once and reused for every candidate.
class MarginalizedAcquisition {
public:
    MarginalizedAcquisition(const std::vector<Hyperparams>& samples, const Dataset& data, KernelKind kind,
                            AcquisitionSpec spec);
    explicit MarginalizedAcquisition(std::vector<GpPosterior> posteriors, AcquisitionSpec spec);

    [[nodiscard]] double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;

    [[nodiscard]] const std::vector<GpPosterior>& posteriors() const noexcept { return posteriors_; }
    [[nodiscard]] std::size_t skipped() const noexcept { return skipped_; }
    [[nodiscard]] const std::vector<std::string>& warnings() const noexcept { return warnings_; }

private:
    std::vector<GpPosterior> posteriors_;
    AcquisitionSpec spec_;
    std::size_t skipped_ = 0;
    std::vector<std::string> warnings_;
};

double marginalized_acquisition(const std::vector<Hyperparams>& samples, const Dataset& data, KernelKind kind,
                                const Eigen::Ref<const Eigen::VectorXd>& x, const AcquisitionSpec& spec);

}  // namespace emtbo
