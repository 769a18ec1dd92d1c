#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "knights/errors.hpp"
#include "knights/tclr/gradcheck.hpp"
#include "knights/tclr/losses.hpp"
#include "reference.hpp"

using namespace knights;
using namespace knights::tclr;

namespace {

Matrix rows_of(const Matrix& m, std::size_t first, std::size_t count) {
    Matrix out(count, m.cols());
    for (std::size_t r = 0; r < count; ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(first + r, c);
    }
    return out;
}

Matrix filled(std::size_t rows, std::size_t cols, double v) { return Matrix(rows, cols, v); }

TemporalClipSet random_clips(std::size_t nt, std::size_t d, std::uint64_t seed) {
    const Matrix m = ref::gaussian_matrix(4 * nt, d, seed);
    return {rows_of(m, 0, nt), rows_of(m, nt, nt), rows_of(m, 2 * nt, nt), rows_of(m, 3 * nt, nt)};
}

EmbeddingBatch random_batch(std::size_t n, std::size_t d, std::uint64_t seed) {
    const Matrix m = ref::gaussian_matrix(2 * n, d, seed);
    return {rows_of(m, 0, n), rows_of(m, n, n)};
}

}  // namespace

TEST_CASE("similarity values") {
    const std::vector<double> e1{1.0, 0.0};
    const std::vector<double> e2{0.0, 1.0};
    CHECK(Similarity(1.0)(e1, e1) == doctest::Approx(2.718281828459045).epsilon(1e-15));
    CHECK(Similarity(0.5)(e1, e2) == doctest::Approx(1.0).epsilon(1e-15));
    const std::vector<double> diag{1.0, 1.0};
    CHECK(Similarity(0.1)(diag, e1) == doctest::Approx(1177.4046098494691).epsilon(1e-13));
    CHECK(Similarity(0.3)(diag, e1) == Similarity(0.3)(e1, diag));
}

TEST_CASE("similarity rejects bad inputs") {
    CHECK_THROWS_AS(Similarity(0.0), ParameterError);
    CHECK_THROWS_AS(Similarity(-1.0), ParameterError);
    CHECK_THROWS_AS(Similarity(NAN), ParameterError);
    const std::vector<double> zero{0.0, 0.0};
    const std::vector<double> e1{1.0, 0.0};
    CHECK_THROWS_AS(Similarity(1.0)(zero, e1), DomainError);
    const std::vector<double> three{1.0, 0.0, 0.0};
    CHECK_THROWS_AS(Similarity(1.0)(three, e1), ShapeError);
}

TEST_CASE("inputs with zero-norm rows are rejected at construction") {
    Matrix g(2, 3, 1.0);
    Matrix bad(2, 3, 1.0);
    bad(1, 0) = bad(1, 1) = bad(1, 2) = 0.0;
    CHECK_THROWS_AS(EmbeddingBatch(g, bad), DomainError);
    CHECK_THROWS_AS(EmbeddingBatch(g, Matrix(3, 3, 1.0)), ShapeError);
    CHECK_THROWS_AS(TemporalClipSet(g, g, g, bad), DomainError);
    CHECK_THROWS_AS(TemporalClipSet(Matrix(0, 3), Matrix(0, 3), Matrix(0, 3), Matrix(0, 3)), DomainError);
}

TEST_CASE("empty batch is an error") {
    const EmbeddingBatch empty(Matrix(0, 3), Matrix(0, 3));
    CHECK_THROWS(instance_contrastive_loss(empty, Similarity(0.1)));
}

TEST_CASE("single instance and single segment give zero") {
    const Similarity h(0.1);
    const auto b = random_batch(1, 5, 9);
    CHECK(instance_contrastive_loss(b, h).value == 0.0);
    const auto c = random_clips(1, 5, 9);
    CHECK(local_local_loss(c, h).value == 0.0);
    CHECK(global_local_loss(c, h).value == 0.0);
    CHECK(oracle::instance_contrastive(b, h) == 0.0);
}

TEST_CASE("all-equal rows give closed-form values") {
    const Similarity h(0.1);
    const EmbeddingBatch b(filled(4, 3, 0.7), filled(4, 3, 0.7));
    CHECK(instance_contrastive_loss(b, h).value == doctest::Approx(std::log(7.0)).epsilon(1e-12));
    const TemporalClipSet c(filled(4, 3, 0.7), filled(4, 3, 0.7), filled(4, 3, 0.7), filled(4, 3, 0.7));
    CHECK(local_local_loss(c, h).value == doctest::Approx(4.0 * std::log(7.0)).epsilon(1e-12));
    CHECK(global_local_loss(c, h).value == doctest::Approx(8.0 * std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("seeded cases match frozen reference values") {
    // Frozen from the reference implementation in tests/support.
    const Matrix m0 = ref::gaussian_matrix(4, 3, 0);
    const EmbeddingBatch b(rows_of(m0, 0, 2), rows_of(m0, 2, 2));
    CHECK(std::abs(instance_contrastive_loss(b, Similarity(0.1)).value - 6.5827157065113457) <= 1e-10);
    CHECK(std::abs(oracle::instance_contrastive(b, Similarity(0.1)) - 6.5827157065113457) <= 1e-10);

    const Matrix m1 = ref::gaussian_matrix(6, 4, 1);
    const TemporalClipSet ll(rows_of(m1, 0, 3), rows_of(m1, 3, 3), rows_of(m1, 0, 3), rows_of(m1, 0, 3));
    CHECK(std::abs(local_local_loss(ll, Similarity(0.2)).value - 2.9718335051206415) <= 1e-10);
    CHECK(std::abs(oracle::local_local(ll, Similarity(0.2)) - 2.9718335051206415) <= 1e-10);

    const Matrix m2 = ref::gaussian_matrix(6, 4, 2);
    const TemporalClipSet gl(rows_of(m2, 3, 3), rows_of(m2, 3, 3), rows_of(m2, 3, 3), rows_of(m2, 0, 3));
    CHECK(std::abs(global_local_loss(gl, Similarity(0.5)).value - 11.144822374133925) <= 1e-10);
    CHECK(std::abs(oracle::global_local(gl, Similarity(0.5)) - 11.144822374133925) <= 1e-10);
}

TEST_CASE("fast path agrees with the reference on random inputs") {
    std::mt19937_64 rng(21);
    const double taus[] = {0.1, 0.5, 1.0};
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 1 + rng() % 6;
        const std::size_t d = 2 + rng() % 7;
        const double tau = taus[trial % 3];
        const Similarity h(tau);
        const auto b = random_batch(n, d, rng());
        CHECK(std::abs(instance_contrastive_loss(b, h).value -
                       ref::instance_loss(ref::to_rows(b.embeddings()), ref::to_rows(b.twins()), tau)) <= 1e-10);
        const auto c = random_clips(n, d, rng());
        CHECK(std::abs(local_local_loss(c, h).value -
                       ref::local_local_loss(ref::to_rows(c.locals()), ref::to_rows(c.locals_twin()), tau)) <= 1e-10);
        CHECK(std::abs(global_local_loss(c, h).value - ref::global_local_loss(ref::to_rows(c.local_anchors()),
                                                                            ref::to_rows(c.global_slices()), tau)) <=
              1e-10);
    }
}

TEST_CASE("combined loss projections") {
    const Similarity h(0.3);
    const auto b = random_batch(3, 4, 3);
    const std::vector<TemporalClipSet> sets{random_clips(3, 4, 33)};
    const double ic = instance_contrastive_loss(b, h).value;
    const double ll = local_local_loss(sets[0], h).value;
    const double gl = global_local_loss(sets[0], h).value;

    CHECK(combined_tclr_loss(b, sets, h, {1, 0, 0}).value == doctest::Approx(ic).epsilon(1e-14));
    const auto zero = combined_tclr_loss(b, sets, h, {0, 0, 0});
    CHECK(zero.value == 0.0);
    CHECK(zero.grad_norm() == 0.0);
    CHECK(std::abs(combined_tclr_loss(b, sets, h, {1, 1, 1}).value - (ic + ll + gl)) <= 1e-12);
}

TEST_CASE("temporal terms are averaged across clip sets") {
    const Similarity h(0.5);
    const auto b = random_batch(2, 4, 4);
    const std::vector<TemporalClipSet> sets{random_clips(3, 4, 40), random_clips(3, 4, 41)};
    const double ll = (local_local_loss(sets[0], h).value + local_local_loss(sets[1], h).value) / 2.0;
    CHECK(std::abs(combined_tclr_loss(b, sets, h, {0, 1, 0}).value - ll) <= 1e-12);
    CHECK(combined_tclr_loss(b, {}, h, {0, 1, 1}).value == 0.0);
}

TEST_CASE("losses are invariant to positive row scaling") {
    const Similarity h(0.1);
    const auto b = random_batch(4, 5, 5);
    Matrix scaled = b.embeddings();
    for (double& v : scaled.row(2)) v *= 7.5;
    const EmbeddingBatch b2(scaled, b.twins());
    CHECK(std::abs(instance_contrastive_loss(b, h).value - instance_contrastive_loss(b2, h).value) <= 1e-10);

    const auto c = random_clips(4, 5, 6);
    Matrix anchors = c.local_anchors();
    for (double& v : anchors.row(0)) v *= 0.01;
    const TemporalClipSet c2(c.locals(), c.locals_twin(), c.global_slices(), anchors);
    CHECK(std::abs(global_local_loss(c, h).value - global_local_loss(c2, h).value) <= 1e-10);
}

TEST_CASE("losses are nonnegative") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const Similarity h(trial % 2 ? 0.1 : 1.0);
        CHECK(instance_contrastive_loss(random_batch(1 + trial % 6, 4, rng()), h).value >= -1e-12);
        const auto c = random_clips(1 + trial % 6, 4, rng());
        CHECK(local_local_loss(c, h).value >= -1e-12);
        CHECK(global_local_loss(c, h).value >= -1e-12);
    }
}

TEST_CASE("negative pair counts") {
    const Similarity h(0.5);
    const auto ic = instance_contrastive_loss(random_batch(5, 3, 10), h);
    REQUIRE(ic.negatives_per_anchor.size() == 5);
    for (auto k : ic.negatives_per_anchor) CHECK(k == 8);
    const auto ll = local_local_loss(random_clips(4, 3, 11), h);
    REQUIRE(ll.negatives_per_anchor.size() == 4);
    for (auto k : ll.negatives_per_anchor) CHECK(k == 6);
}

TEST_CASE("permuting instances permutes terms and gradients") {
    const Similarity h(0.2);
    const auto b = random_batch(4, 3, 12);
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    Matrix g(4, 3), t(4, 3);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            g(i, c) = b.embeddings()(perm[i], c);
            t(i, c) = b.twins()(perm[i], c);
        }
    }
    const auto base = instance_contrastive_loss(b, h);
    const auto permuted = instance_contrastive_loss(EmbeddingBatch(g, t), h);
    CHECK(std::abs(base.value - permuted.value) <= 1e-12);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(permuted.per_term[i] - base.per_term[perm[i]]) <= 1e-12);
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(std::abs(permuted.batch.embeddings(i, c) - base.batch.embeddings(perm[i], c)) <= 1e-12);
            CHECK(std::abs(permuted.batch.twins(i, c) - base.batch.twins(perm[i], c)) <= 1e-12);
        }
    }
}

TEST_CASE("analytic gradients match central differences") {
    const double step = 1e-5;
    double worst = 0.0;
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 1 + rng() % 5;
        const std::size_t d = 2 + rng() % 6;
        const double tau = trial % 2 ? 0.1 : 0.7;
        const Similarity h(tau);

        Matrix g = ref::gaussian_matrix(n, d, rng());
        Matrix t = ref::gaussian_matrix(n, d, rng());
        const auto ic = instance_contrastive_loss(EmbeddingBatch(g, t), h);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
                auto f = [&] { return ref::instance_loss(ref::to_rows(g), ref::to_rows(t), tau); };
                worst = std::max(worst, gradient_relative_error(ic.batch.embeddings(r, c),
                                                                ref::central_difference(f, g(r, c), step)));
                worst = std::max(worst, gradient_relative_error(ic.batch.twins(r, c),
                                                                ref::central_difference(f, t(r, c), step)));
            }
        }

        Matrix l = ref::gaussian_matrix(n, d, rng());
        Matrix s = ref::gaussian_matrix(n, d, rng());
        const TemporalClipSet clips(g, t, s, l);
        const auto ll = local_local_loss(clips, h);
        const auto gl = global_local_loss(clips, h);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
                auto fl = [&] { return ref::local_local_loss(ref::to_rows(g), ref::to_rows(t), tau); };
                worst = std::max(worst, gradient_relative_error(ll.clip_sets[0].locals(r, c),
                                                                ref::central_difference(fl, g(r, c), step)));
                worst = std::max(worst, gradient_relative_error(ll.clip_sets[0].locals_twin(r, c),
                                                                ref::central_difference(fl, t(r, c), step)));
                auto fg = [&] { return ref::global_local_loss(ref::to_rows(l), ref::to_rows(s), tau); };
                worst = std::max(worst, gradient_relative_error(gl.clip_sets[0].local_anchors(r, c),
                                                                ref::central_difference(fg, l(r, c), step)));
                worst = std::max(worst, gradient_relative_error(gl.clip_sets[0].global_slices(r, c),
                                                                ref::central_difference(fg, s(r, c), step)));
            }
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("gradients are finite at tiny temperatures") {
    const auto b = random_batch(4, 6, 13);
    const auto out = instance_contrastive_loss(b, Similarity(1e-3));
    CHECK(std::isfinite(out.value));
    CHECK(std::isfinite(out.grad_norm()));
}

TEST_CASE("library gradient check reports small errors") {
    const auto report = run_gradient_check(8, 2);
    CHECK(report.trials == 8);
    CHECK(report.instance < 1e-5);
    CHECK(report.local_local < 1e-5);
    CHECK(report.global_local < 1e-5);
    CHECK(report.encoder < 1e-4);
    CHECK(gradient_relative_error(0.0, 1e-6) == doctest::Approx(1e-3));
}
