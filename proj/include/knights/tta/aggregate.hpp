#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "knights/matrix.hpp"

namespace knights::tta {

inline constexpr double kDistributionTolerance = 1e-6;

/// Class probabilities, one row per crop (spatial-major), one column per class.
class PredictionMatrix {
public:
    /// Throws DomainError unless every row is a distribution within kDistributionTolerance.
    explicit PredictionMatrix(Matrix probs);

    const Matrix& probs() const noexcept { return probs_; }
    std::size_t crops() const noexcept { return probs_.rows(); }
    std::size_t classes() const noexcept { return probs_.cols(); }

private:
    Matrix probs_;
};

struct EnsembleMember {
    std::string model_id;
    double weight = 1.0;
};

/// Weighted members. Weights are nonnegative and at least one is positive.
class EnsembleSpec {
public:
    explicit EnsembleSpec(std::vector<EnsembleMember> members);

    /// `n` members named model0..model{n-1}, all weight 1.
    static EnsembleSpec uniform(std::size_t n);

    const std::vector<EnsembleMember>& members() const noexcept { return members_; }
    std::size_t size() const noexcept { return members_.size(); }

private:
    std::vector<EnsembleMember> members_;
};

struct EnsemblePrediction {
    std::vector<double> probs;
    std::size_t top1 = 0;
};

/// Mean over crops.
std::vector<double> aggregate_crops(const PredictionMatrix& preds);

/// Weighted mean of per-model probability vectors, renormalized to sum 1.
/// top1 is the argmax; ties go to the lowest class index.
EnsemblePrediction aggregate_ensemble(const std::vector<std::vector<double>>& per_model, const EnsembleSpec& spec);

/// Index of the largest entry, lowest index on ties.
std::size_t argmax(const std::vector<double>& v);

}  // namespace knights::tta
