#include "knights/pretrain/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "knights/errors.hpp"

namespace knights::pretrain {

SyntheticClipDataset generate_dataset(const DatasetConfig& config) {
    if (config.n_instances < 1 || config.n_segments < 1 || config.feature_dim < 1) {
        throw ParameterError("generate_dataset: counts must be >= 1");
    }
    if (!(config.drift >= 0.0) || !(config.noise >= 0.0)) {
        throw ParameterError("generate_dataset: drift and noise must be >= 0");
    }

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> gaussian(0.0, 1.0);
    std::uniform_real_distribution<double> bounded(-1.0, 1.0);

    SyntheticClipDataset data;
    data.config = config;
    const std::size_t nt = config.n_segments;
    const std::size_t f = config.feature_dim;
    for (std::size_t i = 0; i < config.n_instances; ++i) {
        Matrix seg(nt, f);
        Matrix twin(nt, f);
        Matrix global(nt, f);
        for (std::size_t c = 0; c < f; ++c) seg(0, c) = gaussian(rng);
        for (std::size_t p = 1; p < nt; ++p) {
            for (std::size_t c = 0; c < f; ++c) seg(p, c) = seg(p - 1, c) + config.drift * gaussian(rng);
        }
        for (std::size_t p = 0; p < nt; ++p) {
            for (std::size_t c = 0; c < f; ++c) {
                twin(p, c) = seg(p, c) + config.noise * bounded(rng);
                global(p, c) = seg(p, c) + config.noise * bounded(rng);
            }
        }
        data.segments.push_back(std::move(seg));
        data.twins.push_back(std::move(twin));
        data.global_views.push_back(std::move(global));
    }
    return data;
}

TinyEncoder::TinyEncoder(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim)
    : input_(input_dim), hidden_(hidden_dim), output_(output_dim) {
    if (input_ == 0 || hidden_ == 0 || output_ == 0) throw ParameterError("TinyEncoder: dims must be >= 1");
    params_.assign(b2_offset() + output_, 0.0);
}

TinyEncoder TinyEncoder::random(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim,
                                std::uint64_t seed) {
    TinyEncoder enc(input_dim, hidden_dim, output_dim);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> first(-1.0 / std::sqrt(static_cast<double>(input_dim)),
                                                 1.0 / std::sqrt(static_cast<double>(input_dim)));
    std::uniform_real_distribution<double> second(-1.0 / std::sqrt(static_cast<double>(hidden_dim)),
                                                  1.0 / std::sqrt(static_cast<double>(hidden_dim)));
    auto p = enc.parameters();
    for (std::size_t i = enc.w1_offset(); i < enc.b1_offset(); ++i) p[i] = first(rng);
    for (std::size_t i = enc.w2_offset(); i < enc.b2_offset(); ++i) p[i] = second(rng);
    return enc;
}

Matrix TinyEncoder::forward(const Matrix& x, Matrix* hidden) const {
    if (x.cols() != input_) {
        throw ShapeError("TinyEncoder: expected " + std::to_string(input_) + " input features, got " +
                         std::to_string(x.cols()));
    }
    const double* w1 = params_.data() + w1_offset();
    const double* b1 = params_.data() + b1_offset();
    const double* w2 = params_.data() + w2_offset();
    const double* b2 = params_.data() + b2_offset();

    Matrix h(x.rows(), hidden_);
    Matrix z(x.rows(), output_);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t j = 0; j < hidden_; ++j) {
            double a = b1[j];
            for (std::size_t k = 0; k < input_; ++k) a += w1[j * input_ + k] * x(r, k);
            h(r, j) = std::tanh(a);
        }
        for (std::size_t o = 0; o < output_; ++o) {
            double a = b2[o];
            for (std::size_t j = 0; j < hidden_; ++j) a += w2[o * hidden_ + j] * h(r, j);
            z(r, o) = a;
        }
    }
    if (hidden) *hidden = std::move(h);
    return z;
}

void TinyEncoder::backward(const Matrix& x, const Matrix& hidden, const Matrix& grad_output,
                           std::span<double> grad) const {
    if (grad.size() != params_.size()) throw ShapeError("TinyEncoder::backward: gradient buffer has wrong size");
    const double* w2 = params_.data() + w2_offset();
    double* gw1 = grad.data() + w1_offset();
    double* gb1 = grad.data() + b1_offset();
    double* gw2 = grad.data() + w2_offset();
    double* gb2 = grad.data() + b2_offset();

    std::vector<double> dpre(hidden_);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t o = 0; o < output_; ++o) {
            const double dz = grad_output(r, o);
            gb2[o] += dz;
            for (std::size_t j = 0; j < hidden_; ++j) gw2[o * hidden_ + j] += dz * hidden(r, j);
        }
        for (std::size_t j = 0; j < hidden_; ++j) {
            double dh = 0.0;
            for (std::size_t o = 0; o < output_; ++o) dh += w2[o * hidden_ + j] * grad_output(r, o);
            dpre[j] = dh * (1.0 - hidden(r, j) * hidden(r, j));
        }
        for (std::size_t j = 0; j < hidden_; ++j) {
            gb1[j] += dpre[j];
            for (std::size_t k = 0; k < input_; ++k) gw1[j * input_ + k] += dpre[j] * x(r, k);
        }
    }
}

void TrainConfig::validate() const {
    if (steps < 1) throw ParameterError("TrainConfig: steps must be >= 1");
    if (batch < 1) throw ParameterError("TrainConfig: batch must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ParameterError("TrainConfig: learning rate must be finite and >= 0");
    }
    tclr::Similarity{tau};
}

namespace {

Matrix row_mean(const Matrix& m) {
    Matrix out(1, m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) out(0, c) += m(r, c);
    }
    for (double& v : out.data()) v /= static_cast<double>(m.rows());
    return out;
}

struct EncodedInstance {
    Matrix segments, segments_hidden;
    Matrix twins, twins_hidden;
    Matrix globals, globals_hidden;
};

}  // namespace

Objective evaluate_objective(const TinyEncoder& encoder, const SyntheticClipDataset& data,
                             std::span<const std::size_t> instances, const TrainConfig& config) {
    if (instances.empty()) throw ParameterError("evaluate_objective: no instances selected");
    const std::size_t n = instances.size();
    const std::size_t d = encoder.output_dim();

    std::vector<EncodedInstance> encoded(n);
    Matrix pooled(n, d);
    Matrix pooled_twin(n, d);
    std::vector<tclr::TemporalClipSet> clip_sets;
    clip_sets.reserve(n);
    for (std::size_t b = 0; b < n; ++b) {
        const std::size_t i = instances[b];
        if (i >= data.instances()) throw ParameterError("evaluate_objective: instance index out of range");
        EncodedInstance& e = encoded[b];
        e.segments = encoder.forward(data.segments[i], &e.segments_hidden);
        e.twins = encoder.forward(data.twins[i], &e.twins_hidden);
        e.globals = encoder.forward(data.global_views[i], &e.globals_hidden);
        const Matrix m = row_mean(e.segments);
        const Matrix mt = row_mean(e.twins);
        for (std::size_t c = 0; c < d; ++c) {
            pooled(b, c) = m(0, c);
            pooled_twin(b, c) = mt(0, c);
        }
        clip_sets.emplace_back(e.segments, e.twins, e.globals, e.segments);
    }

    const tclr::EmbeddingBatch batch(std::move(pooled), std::move(pooled_twin));
    const tclr::LossOutput loss =
        tclr::combined_tclr_loss(batch, clip_sets, tclr::Similarity(config.tau), config.weights);

    Objective out;
    out.loss = loss.value;
    out.gradient.assign(encoder.parameters().size(), 0.0);
    for (std::size_t b = 0; b < n; ++b) {
        const EncodedInstance& e = encoded[b];
        const tclr::ClipSetGradient& g = loss.clip_sets[b];
        const std::size_t nt = e.segments.rows();
        const double share = 1.0 / static_cast<double>(nt);

        Matrix d_segments = g.locals;
        Matrix d_twins = g.locals_twin;
        for (std::size_t p = 0; p < nt; ++p) {
            for (std::size_t c = 0; c < d; ++c) {
                d_segments(p, c) += g.local_anchors(p, c) + share * loss.batch.embeddings(b, c);
                d_twins(p, c) += share * loss.batch.twins(b, c);
            }
        }
        const std::size_t i = instances[b];
        encoder.backward(data.segments[i], e.segments_hidden, d_segments, out.gradient);
        encoder.backward(data.twins[i], e.twins_hidden, d_twins, out.gradient);
        encoder.backward(data.global_views[i], e.globals_hidden, g.global_slices, out.gradient);
    }
    return out;
}

std::vector<TraceStep> train(const SyntheticClipDataset& data, TinyEncoder& encoder, const TrainConfig& config) {
    config.validate();
    if (data.instances() == 0) throw ParameterError("train: empty dataset");
    const std::size_t batch = std::min(config.batch, data.instances());

    std::vector<TraceStep> trace;
    trace.reserve(config.steps);
    std::vector<std::size_t> order(data.instances());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(config.seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::size_t> indices(batch);
    std::size_t cursor = 0;
    for (std::size_t step = 0; step < config.steps; ++step) {
        for (std::size_t b = 0; b < batch; ++b) indices[b] = order[(cursor + b) % order.size()];
        cursor = (cursor + batch) % data.instances();

        Objective obj;
        try {
            obj = evaluate_objective(encoder, data, indices, config);
        } catch (const DomainError& e) {
            // Overflowing parameters surface as non-finite or zero embeddings.
            throw TrainingDiverged("train: step " + std::to_string(step) + ": " + e.what() +
                                   "; lower the learning rate");
        }
        double sq = 0.0;
        for (double g : obj.gradient) sq += g * g;
        const double grad_norm = std::sqrt(sq);
        if (!std::isfinite(obj.loss) || !std::isfinite(grad_norm)) {
            throw TrainingDiverged("train: non-finite loss or gradient at step " + std::to_string(step) +
                                   " (loss " + std::to_string(obj.loss) + ", grad norm " +
                                   std::to_string(grad_norm) + "); lower the learning rate");
        }
        trace.push_back({step, obj.loss, grad_norm});

        auto params = encoder.parameters();
        for (std::size_t k = 0; k < params.size(); ++k) {
            params[k] -= config.learning_rate * obj.gradient[k];
            if (!std::isfinite(params[k])) {
                throw TrainingDiverged("train: parameter " + std::to_string(k) + " became non-finite at step " +
                                       std::to_string(step) + "; lower the learning rate");
            }
        }
    }
    return trace;
}

double temporal_distinctness(std::span<const Matrix> per_instance) {
    double total = 0.0;
    std::size_t pairs = 0;
    for (const Matrix& m : per_instance) {
        for (std::size_t p = 0; p < m.rows(); ++p) {
            for (std::size_t q = p + 1; q < m.rows(); ++q) {
                const double np = l2_norm(m.row(p));
                const double nq = l2_norm(m.row(q));
                if (!(np > 0.0) || !(nq > 0.0)) throw DomainError("temporal_distinctness: zero-norm embedding");
                total += dot(m.row(p), m.row(q)) / (np * nq);
                ++pairs;
            }
        }
    }
    if (pairs == 0) throw ParameterError("temporal_distinctness: needs at least two segments per instance");
    return total / static_cast<double>(pairs);
}

double temporal_distinctness(const TinyEncoder& encoder, const SyntheticClipDataset& data) {
    std::vector<Matrix> embedded;
    embedded.reserve(data.instances());
    for (const Matrix& seg : data.segments) embedded.push_back(encoder.forward(seg));
    return temporal_distinctness(embedded);
}

}  // namespace knights::pretrain
