#include "knights/tclr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "knights/errors.hpp"

namespace knights::tclr {

namespace {

void require_valid_rows(const Matrix& m, const char* name) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        for (double v : row) {
            if (!std::isfinite(v)) throw DomainError(std::string(name) + ": non-finite entry in row " + std::to_string(r));
        }
        if (!(l2_norm(row) > 0.0)) throw DomainError(std::string(name) + ": row " + std::to_string(r) + " has zero norm");
    }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(what) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
}

// Unit-normalized copy of an input matrix together with the gradient of the
// loss with respect to the normalized rows.
struct Operand {
    explicit Operand(const Matrix& raw) : unit(raw.rows(), raw.cols()), norms(raw.rows()), grad(raw.rows(), raw.cols()) {
        for (std::size_t r = 0; r < raw.rows(); ++r) {
            norms[r] = l2_norm(raw.row(r));
            auto dst = unit.row(r);
            const auto src = raw.row(r);
            for (std::size_t c = 0; c < raw.cols(); ++c) dst[c] = src[c] / norms[r];
        }
    }

    // Chain through u -> u/|u|: d/du = (g - (g.u_hat) u_hat) / |u|.
    Matrix raw_gradient(double scale) const {
        Matrix out(unit.rows(), unit.cols());
        for (std::size_t r = 0; r < unit.rows(); ++r) {
            const auto uh = unit.row(r);
            const auto g = grad.row(r);
            const double radial = dot(g, uh);
            auto dst = out.row(r);
            for (std::size_t c = 0; c < unit.cols(); ++c) dst[c] = scale * (g[c] - radial * uh[c]) / norms[r];
        }
        return out;
    }

    Matrix unit;
    std::vector<double> norms;
    Matrix grad;
};

struct RowRef {
    Operand* operand;
    std::size_t row;
};

// One -log softmax term: anchor against every candidate, candidates[positive]
// in the numerator. Accumulates d(term)/d(unit rows) scaled by `weight`.
double softmax_term(RowRef anchor, std::span<const RowRef> candidates, std::size_t positive, double inv_tau,
                    double weight, std::vector<double>& logits) {
    const auto a = anchor.operand->unit.row(anchor.row);
    logits.resize(candidates.size());
    double max_logit = -INFINITY;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        logits[c] = dot(a, candidates[c].operand->unit.row(candidates[c].row)) * inv_tau;
        max_logit = std::max(max_logit, logits[c]);
    }
    double sum = 0.0;
    for (double s : logits) sum += std::exp(s - max_logit);
    const double log_denominator = max_logit + std::log(sum);
    const double term = log_denominator - logits[positive];

    if (weight != 0.0) {
        auto ga = anchor.operand->grad.row(anchor.row);
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            const double p = std::exp(logits[c] - log_denominator);
            const double ds = weight * (p - (c == positive ? 1.0 : 0.0)) * inv_tau;
            const auto cand = candidates[c].operand->unit.row(candidates[c].row);
            auto gc = candidates[c].operand->grad.row(candidates[c].row);
            for (std::size_t k = 0; k < a.size(); ++k) {
                ga[k] += ds * cand[k];
                gc[k] += ds * a[k];
            }
        }
    }
    return term;
}

}  // namespace

Similarity::Similarity(double temperature) : temperature_(temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw ParameterError("similarity: temperature must be finite and > 0, got " + std::to_string(temperature));
    }
}

double Similarity::logit(std::span<const double> u, std::span<const double> v) const {
    if (u.size() != v.size()) throw ShapeError("similarity: vector lengths differ");
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (!std::isfinite(u[i]) || !std::isfinite(v[i])) throw DomainError("similarity: non-finite input");
    }
    const double nu = l2_norm(u);
    const double nv = l2_norm(v);
    if (!(nu > 0.0) || !(nv > 0.0)) throw DomainError("similarity: zero-norm input");
    return dot(u, v) / (nu * nv * temperature_);
}

double Similarity::operator()(std::span<const double> u, std::span<const double> v) const { return std::exp(logit(u, v)); }

EmbeddingBatch::EmbeddingBatch(Matrix embeddings, Matrix twins)
    : embeddings_(std::move(embeddings)), twins_(std::move(twins)) {
    require_same_shape(embeddings_, twins_, "EmbeddingBatch");
    require_valid_rows(embeddings_, "EmbeddingBatch embeddings");
    require_valid_rows(twins_, "EmbeddingBatch twins");
}

TemporalClipSet::TemporalClipSet(Matrix locals, Matrix locals_twin, Matrix global_slices, Matrix local_anchors)
    : locals_(std::move(locals)),
      locals_twin_(std::move(locals_twin)),
      global_slices_(std::move(global_slices)),
      local_anchors_(std::move(local_anchors)) {
    if (locals_.rows() == 0) throw DomainError("TemporalClipSet: needs at least one temporal segment");
    require_same_shape(locals_, locals_twin_, "TemporalClipSet locals_twin");
    require_same_shape(locals_, global_slices_, "TemporalClipSet global_slices");
    require_same_shape(locals_, local_anchors_, "TemporalClipSet local_anchors");
    require_valid_rows(locals_, "TemporalClipSet locals");
    require_valid_rows(locals_twin_, "TemporalClipSet locals_twin");
    require_valid_rows(global_slices_, "TemporalClipSet global_slices");
    require_valid_rows(local_anchors_, "TemporalClipSet local_anchors");
}

double LossOutput::grad_norm() const {
    double s = squared_norm(batch.embeddings) + squared_norm(batch.twins);
    for (const auto& g : clip_sets) {
        s += squared_norm(g.locals) + squared_norm(g.locals_twin) + squared_norm(g.global_slices) +
             squared_norm(g.local_anchors);
    }
    return std::sqrt(s);
}

LossOutput instance_contrastive_loss(const EmbeddingBatch& batch, const Similarity& h) {
    const std::size_t n = batch.instances();
    if (n == 0) throw DomainError("instance_contrastive_loss: empty batch");

    Operand g(batch.embeddings());
    Operand twin(batch.twins());
    const double inv_tau = 1.0 / h.temperature();
    const double scale = 1.0 / static_cast<double>(n);

    LossOutput out;
    out.per_term.reserve(n);
    out.negatives_per_anchor.reserve(n);
    std::vector<RowRef> candidates;
    std::vector<double> logits;
    for (std::size_t i = 0; i < n; ++i) {
        // Denominator: G_j for j != i, then G'_j for all j. Positive is G'_i.
        candidates.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) candidates.push_back({&g, j});
        }
        const std::size_t positive = candidates.size() + i;
        for (std::size_t j = 0; j < n; ++j) candidates.push_back({&twin, j});

        out.per_term.push_back(softmax_term({&g, i}, candidates, positive, inv_tau, scale, logits));
        out.negatives_per_anchor.push_back(candidates.size() - 1);
    }
    double total = 0.0;
    for (double t : out.per_term) total += t;
    out.value = total * scale;
    out.batch.embeddings = g.raw_gradient(1.0);
    out.batch.twins = twin.raw_gradient(1.0);
    return out;
}

LossOutput local_local_loss(const TemporalClipSet& clips, const Similarity& h) {
    const std::size_t nt = clips.segments();
    Operand g(clips.locals());
    Operand twin(clips.locals_twin());
    const double inv_tau = 1.0 / h.temperature();

    LossOutput out;
    std::vector<RowRef> candidates;
    std::vector<double> logits;
    for (std::size_t p = 0; p < nt; ++p) {
        candidates.clear();
        for (std::size_t q = 0; q < nt; ++q) {
            if (q != p) candidates.push_back({&g, q});
        }
        const std::size_t positive = candidates.size() + p;
        for (std::size_t q = 0; q < nt; ++q) candidates.push_back({&twin, q});

        out.per_term.push_back(softmax_term({&g, p}, candidates, positive, inv_tau, 1.0, logits));
        out.negatives_per_anchor.push_back(candidates.size() - 1);
    }
    for (double t : out.per_term) out.value += t;

    ClipSetGradient grad;
    grad.locals = g.raw_gradient(1.0);
    grad.locals_twin = twin.raw_gradient(1.0);
    grad.global_slices = Matrix(nt, clips.dim());
    grad.local_anchors = Matrix(nt, clips.dim());
    out.clip_sets.push_back(std::move(grad));
    return out;
}

LossOutput global_local_loss(const TemporalClipSet& clips, const Similarity& h) {
    const std::size_t nt = clips.segments();
    Operand global(clips.global_slices());
    Operand local(clips.local_anchors());
    const double inv_tau = 1.0 / h.temperature();

    LossOutput out;
    std::vector<RowRef> over_global;
    std::vector<RowRef> over_local;
    for (std::size_t q = 0; q < nt; ++q) {
        over_global.push_back({&global, q});
        over_local.push_back({&local, q});
    }
    std::vector<double> logits;
    for (std::size_t k = 0; k < nt; ++k) {
        const double local_anchor = softmax_term({&local, k}, over_global, k, inv_tau, 1.0, logits);
        const double global_anchor = softmax_term({&global, k}, over_local, k, inv_tau, 1.0, logits);
        out.per_term.push_back(local_anchor + global_anchor);
        out.negatives_per_anchor.push_back(nt - 1);
        out.negatives_per_anchor.push_back(nt - 1);
    }
    for (double t : out.per_term) out.value += t;

    ClipSetGradient grad;
    grad.locals = Matrix(nt, clips.dim());
    grad.locals_twin = Matrix(nt, clips.dim());
    grad.global_slices = global.raw_gradient(1.0);
    grad.local_anchors = local.raw_gradient(1.0);
    out.clip_sets.push_back(std::move(grad));
    return out;
}

namespace {

void add_scaled(Matrix& dst, const Matrix& src, double w) {
    auto d = dst.data();
    const auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += w * s[i];
}

}  // namespace

LossOutput combined_tclr_loss(const EmbeddingBatch& batch, std::span<const TemporalClipSet> clip_sets,
                              const Similarity& h, const LossWeights& weights) {
    for (double w : {weights.instance, weights.local_local, weights.global_local}) {
        if (!std::isfinite(w)) throw ParameterError("combined_tclr_loss: loss weights must be finite");
    }

    LossOutput out = instance_contrastive_loss(batch, h);
    out.value *= weights.instance;
    for (double& t : out.per_term) t *= weights.instance;
    for (auto* m : {&out.batch.embeddings, &out.batch.twins}) {
        for (double& v : m->data()) v *= weights.instance;
    }

    if (clip_sets.empty()) return out;
    const double mean_scale = 1.0 / static_cast<double>(clip_sets.size());
    const double w_ll = weights.local_local * mean_scale;
    const double w_gl = weights.global_local * mean_scale;

    double ll_total = 0.0;
    double gl_total = 0.0;
    for (const auto& clips : clip_sets) {
        const LossOutput ll = local_local_loss(clips, h);
        const LossOutput gl = global_local_loss(clips, h);
        ll_total += ll.value;
        gl_total += gl.value;

        ClipSetGradient grad{Matrix(clips.segments(), clips.dim()), Matrix(clips.segments(), clips.dim()),
                             Matrix(clips.segments(), clips.dim()), Matrix(clips.segments(), clips.dim())};
        add_scaled(grad.locals, ll.clip_sets[0].locals, w_ll);
        add_scaled(grad.locals_twin, ll.clip_sets[0].locals_twin, w_ll);
        add_scaled(grad.global_slices, gl.clip_sets[0].global_slices, w_gl);
        add_scaled(grad.local_anchors, gl.clip_sets[0].local_anchors, w_gl);
        out.clip_sets.push_back(std::move(grad));

        for (double t : ll.per_term) out.per_term.push_back(t * w_ll);
        for (double t : gl.per_term) out.per_term.push_back(t * w_gl);
        out.negatives_per_anchor.insert(out.negatives_per_anchor.end(), ll.negatives_per_anchor.begin(),
                                        ll.negatives_per_anchor.end());
        out.negatives_per_anchor.insert(out.negatives_per_anchor.end(), gl.negatives_per_anchor.begin(),
                                        gl.negatives_per_anchor.end());
    }
    out.value += w_ll * ll_total + w_gl * gl_total;
    return out;
}

}  // namespace knights::tclr
