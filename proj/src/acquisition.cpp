#include "emtbo/acquisition.hpp"

#include "emtbo/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace emtbo {

double normal_pdf(double z) noexcept {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_cdf(double z) noexcept {
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

Incumbent Incumbent::from_data(const Dataset& data, Sense sense) {
    if (data.empty()) {
        throw Error(Errc::invalid_argument, "incumbent of an empty dataset is undefined");
    }
    const auto& y = data.outputs();
    return Incumbent{sense == Sense::Minimize ? y.minCoeff() : y.maxCoeff(), sense};
}

void ThresholdSpec::validate() const {
    if (!(delta > 0.0) || !(alpha > 0.0)) {
        throw Error(Errc::invalid_argument, "threshold band parameters delta and alpha must be positive");
    }
    if (!std::isfinite(threshold)) {
        throw Error(Errc::invalid_argument, "threshold must be finite");
    }
}

double expected_improvement(double mean, double stddev, const Incumbent& inc) noexcept {
    const double gain = inc.sense == Sense::Minimize ? inc.y_star - mean : mean - inc.y_star;
    if (!(stddev > 0.0)) {
        return std::max(0.0, gain);
    }
    const double z = gain / stddev;
    return std::max(0.0, gain * normal_cdf(z) + stddev * normal_pdf(z));
}

double expected_improvement(const GpPosterior& posterior, const Eigen::Ref<const Eigen::VectorXd>& x,
                            const Incumbent& inc) {
    const auto p = posterior.predict(x);
    return expected_improvement(p.mean, std::sqrt(p.variance), inc);
}

double bichon_criterion(double mean, double stddev, const ThresholdSpec& thr) noexcept {
    if (!(stddev > 0.0)) {
        return 0.0;
    }
    const double e = thr.delta * thr.alpha;
    // The integral is even in t; the negative branch keeps Phi differences in
    // the accurate lower tail.
    const double t = -std::abs((thr.threshold - mean) / stddev);
    const double cdf_hi = normal_cdf(t + e);
    const double cdf_mid = normal_cdf(t);
    const double cdf_lo = normal_cdf(t - e);
    const double value = e * (cdf_hi - cdf_lo) + t * ((cdf_hi - cdf_mid) - (cdf_mid - cdf_lo)) +
                         normal_pdf(t + e) + normal_pdf(t - e) - 2.0 * normal_pdf(t);
    return std::max(0.0, stddev * value);
}

double bichon_criterion(const GpPosterior& posterior, const Eigen::Ref<const Eigen::VectorXd>& x,
                        const ThresholdSpec& thr) {
    const auto p = posterior.predict(x);
    return bichon_criterion(p.mean, std::sqrt(p.variance), thr);
}

double AcquisitionSpec::operator()(const GpPosterior& posterior, const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (kind == AcquisitionKind::ExpectedImprovement) {
        return expected_improvement(posterior, x, incumbent);
    }
    return bichon_criterion(posterior, x, threshold);
}

MarginalizedAcquisition::MarginalizedAcquisition(const std::vector<Hyperparams>& samples, const Dataset& data,
                                                 KernelKind kind, AcquisitionSpec spec)
    : spec_(spec) {
    if (samples.empty()) {
        throw Error(Errc::invalid_argument, "marginalized acquisition needs at least one hyperparameter sample");
    }
    posteriors_.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        try {
            posteriors_.push_back(fit_posterior(data, kind, samples[i]));
        } catch (const Error& e) {
            if (e.code() != Errc::not_positive_definite) {
                throw;
            }
            ++skipped_;
            warnings_.push_back("sample " + std::to_string(i) + " skipped: " + e.what());
        }
    }
    if (posteriors_.empty()) {
        throw Error(Errc::not_positive_definite, "every hyperparameter sample failed to factorize");
    }
}

MarginalizedAcquisition::MarginalizedAcquisition(std::vector<GpPosterior> posteriors, AcquisitionSpec spec)
    : posteriors_(std::move(posteriors)), spec_(spec) {
    if (posteriors_.empty()) {
        throw Error(Errc::invalid_argument, "marginalized acquisition needs at least one posterior");
    }
}

double MarginalizedAcquisition::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    double sum = 0.0;
    for (const auto& post : posteriors_) {
        sum += spec_(post, x);
    }
    return sum / static_cast<double>(posteriors_.size());
}

double marginalized_acquisition(const std::vector<Hyperparams>& samples, const Dataset& data, KernelKind kind,
                                const Eigen::Ref<const Eigen::VectorXd>& x, const AcquisitionSpec& spec) {
    return MarginalizedAcquisition(samples, data, kind, spec)(x);
}

}  // namespace emtbo
