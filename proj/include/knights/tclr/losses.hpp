#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "knights/matrix.hpp"

namespace knights::tclr {

/// Temperature-scaled cosine similarity h(u, v) = exp(cos(u, v) / tau).
class Similarity {
public:
    /// Throws ParameterError unless temperature is finite and > 0.
    explicit Similarity(double temperature);

    double temperature() const noexcept { return temperature_; }

    /// Throws DomainError for zero-norm or non-finite inputs, ShapeError on length mismatch.
    double operator()(std::span<const double> u, std::span<const double> v) const;

    /// The logit cos(u, v) / tau, i.e. log h(u, v).
    double logit(std::span<const double> u, std::span<const double> v) const;

private:
    double temperature_;
};

/// Clip representations G (one row per instance) and their augmented twins G'.
class EmbeddingBatch {
public:
    /// Validates shapes, finiteness and nonzero row norms.
    EmbeddingBatch(Matrix embeddings, Matrix twins);

    const Matrix& embeddings() const noexcept { return embeddings_; }
    const Matrix& twins() const noexcept { return twins_; }
    std::size_t instances() const noexcept { return embeddings_.rows(); }
    std::size_t dim() const noexcept { return embeddings_.cols(); }

private:
    Matrix embeddings_;
    Matrix twins_;
};

/// Per-instance temporal features. Rows are indexed by timestamp.
///   locals         G_{i,p}  local clip features
///   locals_twin    G'_{i,p} augmented local clips
///   global_slices  G_{i,k}  slices of the global clip's feature map
///   local_anchors  L_{i,k}  local clip features matched against the global slices
class TemporalClipSet {
public:
    TemporalClipSet(Matrix locals, Matrix locals_twin, Matrix global_slices, Matrix local_anchors);

    const Matrix& locals() const noexcept { return locals_; }
    const Matrix& locals_twin() const noexcept { return locals_twin_; }
    const Matrix& global_slices() const noexcept { return global_slices_; }
    const Matrix& local_anchors() const noexcept { return local_anchors_; }
    std::size_t segments() const noexcept { return locals_.rows(); }
    std::size_t dim() const noexcept { return locals_.cols(); }

private:
    Matrix locals_;
    Matrix locals_twin_;
    Matrix global_slices_;
    Matrix local_anchors_;
};

struct BatchGradient {
    Matrix embeddings;
    Matrix twins;
};

struct ClipSetGradient {
    Matrix locals;
    Matrix locals_twin;
    Matrix global_slices;
    Matrix local_anchors;
};

/// Loss value plus exact gradients shaped like the inputs.
///
/// `per_term` holds one -log(softmax) term per anchor row (per instance for the
/// instance loss, per timestamp for the temporal losses; the global-local term
/// for timestamp k bundles both reciprocal anchors). `negatives_per_anchor`
/// counts the non-positive terms in each softmax denominator.
///
/// `batch` is filled by losses that read an EmbeddingBatch, `clip_sets` holds
/// one entry per TemporalClipSet consumed.
struct LossOutput {
    double value = 0.0;
    std::vector<double> per_term;
    std::vector<std::size_t> negatives_per_anchor;
    BatchGradient batch;
    std::vector<ClipSetGradient> clip_sets;

    /// Euclidean norm over every gradient buffer.
    double grad_norm() const;
};

struct LossWeights {
    double instance = 1.0;
    double local_local = 1.0;
    double global_local = 1.0;
};

/// Instance contrastive loss averaged over the N instances of the batch.
LossOutput instance_contrastive_loss(const EmbeddingBatch& batch, const Similarity& h);

/// Local-local temporal contrastive loss of one instance, summed over timestamps.
LossOutput local_local_loss(const TemporalClipSet& clips, const Similarity& h);

/// Global-local temporal contrastive loss of one instance, summed over timestamps.
LossOutput global_local_loss(const TemporalClipSet& clips, const Similarity& h);

/// w_ic * L_IC + w_ll * mean(L_LL) + w_gl * mean(L_GL). The temporal means run
/// over `clip_sets`; an empty list contributes zero.
LossOutput combined_tclr_loss(const EmbeddingBatch& batch, std::span<const TemporalClipSet> clip_sets,
                              const Similarity& h, const LossWeights& weights = {});

/// Naive transcriptions of the three losses: direct h() evaluation, no
/// log-sum-exp, no reuse. Values only; used to cross-check the fast path.
namespace oracle {
double instance_contrastive(const EmbeddingBatch& batch, const Similarity& h);
double local_local(const TemporalClipSet& clips, const Similarity& h);
double global_local(const TemporalClipSet& clips, const Similarity& h);
}  // namespace oracle

}  // namespace knights::tclr
