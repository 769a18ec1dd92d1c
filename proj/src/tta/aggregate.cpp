#include "knights/tta/aggregate.hpp"

#include <cmath>

#include "knights/errors.hpp"

namespace knights::tta {

PredictionMatrix::PredictionMatrix(Matrix probs) : probs_(std::move(probs)) {
    if (probs_.rows() == 0 || probs_.cols() == 0) throw DomainError("PredictionMatrix: empty matrix");
    for (std::size_t r = 0; r < probs_.rows(); ++r) {
        double sum = 0.0;
        for (double p : probs_.row(r)) {
            if (!(p >= 0.0 && p <= 1.0)) {
                throw DomainError("PredictionMatrix: row " + std::to_string(r) + " has an entry outside [0, 1]");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > kDistributionTolerance) {
            throw DomainError("PredictionMatrix: row " + std::to_string(r) + " sums to " + std::to_string(sum));
        }
    }
}

EnsembleSpec::EnsembleSpec(std::vector<EnsembleMember> members) : members_(std::move(members)) {
    bool any_positive = false;
    for (const auto& m : members_) {
        if (!(m.weight >= 0.0) || !std::isfinite(m.weight)) {
            throw ParameterError("EnsembleSpec: weight of '" + m.model_id + "' must be finite and >= 0");
        }
        any_positive = any_positive || m.weight > 0.0;
    }
    if (!any_positive) throw ParameterError("EnsembleSpec: at least one weight must be positive");
}

EnsembleSpec EnsembleSpec::uniform(std::size_t n) {
    std::vector<EnsembleMember> members;
    for (std::size_t i = 0; i < n; ++i) members.push_back({"model" + std::to_string(i), 1.0});
    return EnsembleSpec(std::move(members));
}

std::vector<double> aggregate_crops(const PredictionMatrix& preds) {
    const Matrix& p = preds.probs();
    std::vector<double> mean(p.cols(), 0.0);
    for (std::size_t r = 0; r < p.rows(); ++r) {
        for (std::size_t c = 0; c < p.cols(); ++c) mean[c] += p(r, c);
    }
    for (double& m : mean) m /= static_cast<double>(p.rows());
    return mean;
}

std::size_t argmax(const std::vector<double>& v) {
    if (v.empty()) throw ShapeError("argmax: empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

EnsemblePrediction aggregate_ensemble(const std::vector<std::vector<double>>& per_model, const EnsembleSpec& spec) {
    if (per_model.size() != spec.size()) {
        throw ShapeError("aggregate_ensemble: " + std::to_string(per_model.size()) + " prediction vectors for " +
                         std::to_string(spec.size()) + " ensemble members");
    }
    const std::size_t classes = per_model.front().size();
    for (const auto& v : per_model) {
        if (v.size() != classes) throw ShapeError("aggregate_ensemble: class counts differ between models");
    }
    if (classes == 0) throw ShapeError("aggregate_ensemble: no classes");

    EnsemblePrediction out;
    out.probs.assign(classes, 0.0);
    for (std::size_t m = 0; m < per_model.size(); ++m) {
        const double w = spec.members()[m].weight;
        for (std::size_t c = 0; c < classes; ++c) out.probs[c] += w * per_model[m][c];
    }
    double total = 0.0;
    for (double p : out.probs) total += p;
    if (!(total > 0.0)) throw DomainError("aggregate_ensemble: weighted probabilities sum to zero");
    for (double& p : out.probs) p /= total;
    out.top1 = argmax(out.probs);
    return out;
}

}  // namespace knights::tta
