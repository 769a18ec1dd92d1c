#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "knights/errors.hpp"
#include "knights/pretrain/harness.hpp"
#include "knights/tclr/gradcheck.hpp"
#include "reference.hpp"

using namespace knights;
using namespace knights::pretrain;

namespace {

double row_distance(const Matrix& a, std::size_t ra, const Matrix& b, std::size_t rb) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) s += (a(ra, c) - b(rb, c)) * (a(ra, c) - b(rb, c));
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("dataset generation") {
    DatasetConfig still;
    still.drift = 0.0;
    still.noise = 0.0;
    const auto d = generate_dataset(still);
    for (const Matrix& m : d.segments) {
        for (std::size_t p = 1; p < m.rows(); ++p) CHECK(row_distance(m, 0, m, p) == 0.0);
    }

    const auto a = generate_dataset({});
    const auto b = generate_dataset({});
    CHECK(a.segments == b.segments);
    CHECK(a.twins == b.twins);
    CHECK(a.global_views == b.global_views);

    double seg = 0.0, twin = 0.0;
    std::size_t n_seg = 0, n_twin = 0;
    for (std::size_t i = 0; i < a.instances(); ++i) {
        const Matrix& s = a.segments[i];
        for (std::size_t p = 0; p < s.rows(); ++p) {
            twin += row_distance(s, p, a.twins[i], p);
            ++n_twin;
            for (std::size_t q = p + 1; q < s.rows(); ++q) {
                seg += row_distance(s, p, s, q);
                ++n_seg;
            }
        }
    }
    CHECK(seg / n_seg > twin / n_twin);

    DatasetConfig bad;
    bad.n_segments = 0;
    CHECK_THROWS_AS(generate_dataset(bad), ParameterError);
}

TEST_CASE("encoder gradient matches central differences") {
    DatasetConfig dc;
    dc.n_instances = 4;
    dc.n_segments = 3;
    dc.feature_dim = 5;
    const auto data = generate_dataset(dc);
    TinyEncoder enc = TinyEncoder::random(5, 6, 4, 3);
    TrainConfig tc;
    tc.tau = 0.5;
    const std::vector<std::size_t> batch{0, 1, 2, 3};
    const Objective obj = evaluate_objective(enc, data, batch, tc);
    auto params = enc.parameters();
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto f = [&] { return evaluate_objective(enc, data, batch, tc).loss; };
        const double numeric = ref::central_difference(f, params[k], 1e-5);
        worst = std::max(worst, tclr::gradient_relative_error(obj.gradient[k], numeric));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("trivial training configs") {
    const auto data = generate_dataset({});
    TinyEncoder enc = TinyEncoder::random(16, 32, 16, 7);
    TrainConfig tc;
    tc.steps = 5;
    tc.learning_rate = 0.0;
    tc.batch = 32;
    const auto trace = train(data, enc, tc);
    REQUIRE(trace.size() == 5);
    for (const auto& s : trace) CHECK(s.loss == trace.front().loss);

    tc.steps = 1;
    tc.learning_rate = 0.2;
    CHECK(train(data, enc, tc).size() == 1);

    tc.steps = 0;
    CHECK_THROWS_AS(train(data, enc, tc), ParameterError);
}

TEST_CASE("divergence is reported") {
    const auto data = generate_dataset({});
    TinyEncoder enc = TinyEncoder::random(16, 32, 16, 7);
    TrainConfig tc;
    tc.learning_rate = 1e308;
    tc.steps = 10;
    CHECK_THROWS_AS(train(data, enc, tc), TrainingDiverged);
}

TEST_CASE("default config trains and separates segments") {
    const auto data = generate_dataset({});
    TinyEncoder enc = TinyEncoder::random(16, 32, 16, 7);
    const double before = temporal_distinctness(enc, data);
    const auto trace = train(data, enc, {});
    const double after = temporal_distinctness(enc, data);
    REQUIRE(trace.size() == 200);
    CHECK(trace.back().loss < 0.5 * trace.front().loss);
    CHECK(after < before);
    // Regression values measured on the default config.
    CHECK(trace.front().loss == doctest::Approx(8.0844628572329569).epsilon(1e-9));
    CHECK(trace.back().loss == doctest::Approx(0.023036462722809015).epsilon(1e-6));

    TinyEncoder again = TinyEncoder::random(16, 32, 16, 7);
    const auto trace2 = train(data, again, {});
    for (std::size_t i = 0; i < trace.size(); ++i) {
        CHECK(trace[i].loss == trace2[i].loss);
        CHECK(trace[i].grad_norm == trace2[i].grad_norm);
    }
    CHECK(std::equal(enc.parameters().begin(), enc.parameters().end(), again.parameters().begin()));
}

TEST_CASE("temporal distinctness closed forms") {
    DatasetConfig still;
    still.drift = 0.0;
    const auto data = generate_dataset(still);
    // Identity-like encoder: square, W1 = I scaled into tanh's linear range, W2 = I.
    TinyEncoder id(16, 16, 16);
    auto p = id.parameters();
    for (std::size_t i = 0; i < 16; ++i) {
        p[i * 16 + i] = 1e-3;
        p[16 * 16 + 16 + i * 16 + i] = 1.0;
    }
    CHECK(temporal_distinctness(id, data) == doctest::Approx(1.0).epsilon(1e-12));

    Matrix orth(2, 3);
    orth(0, 0) = 1.0;
    orth(1, 2) = 2.0;
    const std::vector<Matrix> one{orth};
    CHECK(temporal_distinctness(one) == 0.0);
    const std::vector<Matrix> single{Matrix(1, 3, 1.0)};
    CHECK_THROWS_AS(temporal_distinctness(single), ParameterError);
}
