#include "knights/tclr/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>

#include "knights/pretrain/harness.hpp"
#include "knights/tclr/losses.hpp"

namespace knights::tclr {

double gradient_relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
}

namespace {

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = g(rng);
    return m;
}

// Worst relative error between `analytic` and central differences of `f`
// over every entry of `x`.
double compare(Matrix& x, const Matrix& analytic, const std::function<double()>& f, double step) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x.data()[i];
        x.data()[i] = saved + step;
        const double plus = f();
        x.data()[i] = saved - step;
        const double minus = f();
        x.data()[i] = saved;
        worst = std::max(worst, gradient_relative_error(analytic.data()[i], (plus - minus) / (2.0 * step)));
    }
    return worst;
}

}  // namespace

GradCheckReport run_gradient_check(std::size_t trials, std::uint64_t seed, double step) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dim(2, 8);
    std::uniform_int_distribution<std::size_t> count(1, 6);
    constexpr std::array<double, 3> taus{0.1, 0.5, 1.0};

    GradCheckReport report;
    report.trials = trials;
    for (std::size_t t = 0; t < trials; ++t) {
        const Similarity h(taus[t % taus.size()]);
        const std::size_t d = dim(rng);
        const std::size_t n = count(rng);
        const std::size_t nt = count(rng);

        Matrix g = random_matrix(rng, n, d);
        Matrix gt = random_matrix(rng, n, d);
        const LossOutput ic = instance_contrastive_loss(EmbeddingBatch(g, gt), h);
        auto ic_value = [&] { return instance_contrastive_loss(EmbeddingBatch(g, gt), h).value; };
        report.instance = std::max({report.instance, compare(g, ic.batch.embeddings, ic_value, step),
                                    compare(gt, ic.batch.twins, ic_value, step)});

        std::array<Matrix, 4> clips{random_matrix(rng, nt, d), random_matrix(rng, nt, d), random_matrix(rng, nt, d),
                                    random_matrix(rng, nt, d)};
        auto clip_set = [&] { return TemporalClipSet(clips[0], clips[1], clips[2], clips[3]); };
        const LossOutput ll = local_local_loss(clip_set(), h);
        auto ll_value = [&] { return local_local_loss(clip_set(), h).value; };
        report.local_local = std::max({report.local_local, compare(clips[0], ll.clip_sets[0].locals, ll_value, step),
                                       compare(clips[1], ll.clip_sets[0].locals_twin, ll_value, step)});

        const LossOutput gl = global_local_loss(clip_set(), h);
        auto gl_value = [&] { return global_local_loss(clip_set(), h).value; };
        report.global_local =
            std::max({report.global_local, compare(clips[2], gl.clip_sets[0].global_slices, gl_value, step),
                      compare(clips[3], gl.clip_sets[0].local_anchors, gl_value, step)});

        // Encoder chain: small dims so every parameter can be perturbed.
        pretrain::DatasetConfig dc;
        dc.n_instances = std::max<std::size_t>(n, 2);
        dc.n_segments = std::max<std::size_t>(nt, 2);
        dc.feature_dim = std::min<std::size_t>(d, 5);
        dc.seed = seed + t;
        const auto data = pretrain::generate_dataset(dc);
        auto encoder = pretrain::TinyEncoder::random(dc.feature_dim, 4, std::min<std::size_t>(d, 4), seed + 1000 + t);
        pretrain::TrainConfig tc;
        tc.tau = h.temperature();
        std::vector<std::size_t> batch(dc.n_instances);
        for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;

        const auto obj = pretrain::evaluate_objective(encoder, data, batch, tc);
        auto params = encoder.parameters();
        for (std::size_t k = 0; k < params.size(); ++k) {
            const double saved = params[k];
            params[k] = saved + step;
            const double plus = pretrain::evaluate_objective(encoder, data, batch, tc).loss;
            params[k] = saved - step;
            const double minus = pretrain::evaluate_objective(encoder, data, batch, tc).loss;
            params[k] = saved;
            report.encoder =
                std::max(report.encoder, gradient_relative_error(obj.gradient[k], (plus - minus) / (2.0 * step)));
        }
    }
    return report;
}

}  // namespace knights::tclr
