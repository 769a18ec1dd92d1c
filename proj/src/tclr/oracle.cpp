// Direct double-loop transcriptions of the three TCLR losses. Every h() is
// evaluated from scratch through Similarity; nothing is shared with the fast
// path in losses.cpp beyond the similarity function itself.

#include <cmath>

#include "knights/errors.hpp"
#include "knights/tclr/losses.hpp"

namespace knights::tclr::oracle {

double instance_contrastive(const EmbeddingBatch& batch, const Similarity& h) {
    const std::size_t n = batch.instances();
    if (n == 0) throw DomainError("instance_contrastive oracle: empty batch");
    const Matrix& g = batch.embeddings();
    const Matrix& gt = batch.twins();

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double denominator = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) denominator += h(g.row(i), g.row(j));
            denominator += h(g.row(i), gt.row(j));
        }
        total += -std::log(h(g.row(i), gt.row(i)) / denominator);
    }
    return total / static_cast<double>(n);
}

double local_local(const TemporalClipSet& clips, const Similarity& h) {
    const Matrix& g = clips.locals();
    const Matrix& gt = clips.locals_twin();
    const std::size_t nt = clips.segments();

    double total = 0.0;
    for (std::size_t p = 0; p < nt; ++p) {
        double denominator = 0.0;
        for (std::size_t q = 0; q < nt; ++q) {
            if (q != p) denominator += h(g.row(p), g.row(q));
            denominator += h(g.row(p), gt.row(q));
        }
        total += -std::log(h(g.row(p), gt.row(p)) / denominator);
    }
    return total;
}

double global_local(const TemporalClipSet& clips, const Similarity& h) {
    const Matrix& g = clips.global_slices();
    const Matrix& l = clips.local_anchors();
    const std::size_t nt = clips.segments();

    double total = 0.0;
    for (std::size_t k = 0; k < nt; ++k) {
        double over_global = 0.0;
        double over_local = 0.0;
        for (std::size_t q = 0; q < nt; ++q) {
            over_global += h(l.row(k), g.row(q));
            over_local += h(g.row(k), l.row(q));
        }
        total += std::log(h(l.row(k), g.row(k)) / over_global) + std::log(h(g.row(k), l.row(k)) / over_local);
    }
    return -total;
}

}  // namespace knights::tclr::oracle
