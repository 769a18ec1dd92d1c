#include "knights/mhpa/attention.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "knights/errors.hpp"

namespace knights::mhpa {

Grid parse_grid(const std::string& text) {
    Grid g;
    char x1 = 0;
    char x2 = 0;
    std::istringstream in(text);
    if (!(in >> g.t >> x1 >> g.h >> x2 >> g.w) || x1 != 'x' || x2 != 'x' || !in.eof()) {
        throw ParameterError("grid must look like TxHxW, got '" + text + "'");
    }
    if (g.volume() == 0) throw ParameterError("grid extents must be >= 1, got '" + text + "'");
    return g;
}

std::string to_string(const Grid& g) {
    return std::to_string(g.t) + "x" + std::to_string(g.h) + "x" + std::to_string(g.w);
}

PoolingKind parse_pooling_kind(const std::string& text) {
    if (text == "average") return PoolingKind::average;
    if (text == "strided") return PoolingKind::strided;
    throw ParameterError("pooling kind must be 'average' or 'strided', got '" + text + "'");
}

const char* to_string(PoolingKind kind) { return kind == PoolingKind::average ? "average" : "strided"; }

void TokenTensor::validate() const {
    const std::size_t expected = grid.volume() + (has_class_token ? 1 : 0);
    if (data.rows() != expected) {
        throw ShapeError("TokenTensor: grid " + to_string(grid) + (has_class_token ? " + class token" : "") +
                         " needs " + std::to_string(expected) + " rows, got " + std::to_string(data.rows()));
    }
    for (double v : data.data()) {
        if (!std::isfinite(v)) throw DomainError("TokenTensor: non-finite entry");
    }
}

void AttentionStage::validate() const {
    if (heads == 0) throw ParameterError("AttentionStage: heads must be >= 1");
    if (dim_in == 0 || dim_out < dim_in) throw ParameterError("AttentionStage: need 0 < dim_in <= dim_out");
    if (dim_in % heads != 0 || dim_out % heads != 0) {
        throw ParameterError("AttentionStage: channel dims must be divisible by the head count");
    }
    if (q_stride.volume() == 0 || kv_stride.volume() == 0) throw ParameterError("AttentionStage: strides must be >= 1");
}

StageWeights StageWeights::random(const AttentionStage& stage, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto fill = [&rng](std::size_t rows, std::size_t cols) {
        const double a = 1.0 / std::sqrt(static_cast<double>(rows));
        std::uniform_real_distribution<double> dist(-a, a);
        Matrix m(rows, cols);
        for (double& v : m.data()) v = dist(rng);
        return m;
    };
    StageWeights w;
    w.query = fill(stage.dim_in, stage.dim_out);
    w.key = fill(stage.dim_in, stage.dim_out);
    w.value = fill(stage.dim_in, stage.dim_out);
    w.output = fill(stage.dim_out, stage.dim_out);
    return w;
}

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

TokenTensor project(const TokenTensor& x, const Matrix& w) { return {x.grid, x.has_class_token, matmul(x.data, w)}; }

}  // namespace

TokenTensor pool_tokens(const TokenTensor& x, const Grid& stride, PoolingKind kind) {
    x.validate();
    if (stride.volume() == 0) throw ParameterError("pool_tokens: strides must be >= 1");
    const Grid in = x.grid;
    const Grid out{ceil_div(in.t, stride.t), ceil_div(in.h, stride.h), ceil_div(in.w, stride.w)};
    const std::size_t offset = x.has_class_token ? 1 : 0;
    const std::size_t dim = x.dim();

    TokenTensor y{out, x.has_class_token, Matrix(out.volume() + offset, dim)};
    if (x.has_class_token) std::copy_n(x.data.row(0).begin(), dim, y.data.row(0).begin());

    auto index = [](const Grid& g, std::size_t t, std::size_t h, std::size_t w) { return (t * g.h + h) * g.w + w; };
    for (std::size_t ot = 0; ot < out.t; ++ot) {
        for (std::size_t oh = 0; oh < out.h; ++oh) {
            for (std::size_t ow = 0; ow < out.w; ++ow) {
                auto dst = y.data.row(offset + index(out, ot, oh, ow));
                const std::size_t t0 = ot * stride.t;
                const std::size_t h0 = oh * stride.h;
                const std::size_t w0 = ow * stride.w;
                if (kind == PoolingKind::strided) {
                    const auto src = x.data.row(offset + index(in, t0, h0, w0));
                    std::copy(src.begin(), src.end(), dst.begin());
                    continue;
                }
                std::size_t count = 0;
                for (std::size_t t = t0; t < std::min(t0 + stride.t, in.t); ++t) {
                    for (std::size_t h = h0; h < std::min(h0 + stride.h, in.h); ++h) {
                        for (std::size_t w = w0; w < std::min(w0 + stride.w, in.w); ++w) {
                            const auto src = x.data.row(offset + index(in, t, h, w));
                            for (std::size_t c = 0; c < dim; ++c) dst[c] += src[c];
                            ++count;
                        }
                    }
                }
                for (double& v : dst) v /= static_cast<double>(count);
            }
        }
    }
    return y;
}

TokenTensor mhpa_forward(const TokenTensor& x, const AttentionStage& stage, const StageWeights& weights,
                         AttentionProbe* probe) {
    stage.validate();
    x.validate();
    if (x.dim() != stage.dim_in) {
        throw ShapeError("mhpa_forward: input dim " + std::to_string(x.dim()) + " != stage dim_in " +
                         std::to_string(stage.dim_in));
    }
    auto check = [](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
        if (m.rows() != r || m.cols() != c) {
            throw ShapeError(std::string("mhpa_forward: ") + name + " weights must be " + std::to_string(r) + "x" +
                             std::to_string(c));
        }
    };
    check(weights.query, stage.dim_in, stage.dim_out, "query");
    check(weights.key, stage.dim_in, stage.dim_out, "key");
    check(weights.value, stage.dim_in, stage.dim_out, "value");
    check(weights.output, stage.dim_out, stage.dim_out, "output");

    const TokenTensor q = pool_tokens(project(x, weights.query), stage.q_stride, stage.pooling);
    const TokenTensor k = pool_tokens(project(x, weights.key), stage.kv_stride, stage.pooling);
    const TokenTensor v = pool_tokens(project(x, weights.value), stage.kv_stride, stage.pooling);

    const std::size_t head_dim = stage.dim_out / stage.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    const std::size_t nq = q.seq_len();
    const std::size_t nk = k.seq_len();

    Matrix attended(nq, stage.dim_out);
    if (probe) probe->heads.clear();
    std::vector<double> scores(nk);
    for (std::size_t head = 0; head < stage.heads; ++head) {
        const std::size_t c0 = head * head_dim;
        Matrix attn(nq, nk);
        for (std::size_t i = 0; i < nq; ++i) {
            double max_score = -INFINITY;
            for (std::size_t j = 0; j < nk; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < head_dim; ++c) s += q.data(i, c0 + c) * k.data(j, c0 + c);
                scores[j] = s * scale;
                max_score = std::max(max_score, scores[j]);
            }
            double sum = 0.0;
            for (std::size_t j = 0; j < nk; ++j) {
                scores[j] = std::exp(scores[j] - max_score);
                sum += scores[j];
            }
            for (std::size_t j = 0; j < nk; ++j) {
                attn(i, j) = scores[j] / sum;
                for (std::size_t c = 0; c < head_dim; ++c) attended(i, c0 + c) += attn(i, j) * v.data(j, c0 + c);
            }
        }
        if (probe) probe->heads.push_back(std::move(attn));
    }

    TokenTensor out{q.grid, q.has_class_token, matmul(attended, weights.output)};
    if (stage.dim_in == stage.dim_out) {
        const TokenTensor skip = pool_tokens(x, stage.q_stride, stage.pooling);
        auto dst = out.data.data();
        const auto src = skip.data.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    return out;
}

ScheduleResult run_schedule(const TokenTensor& x, const StageSchedule& schedule,
                            const std::vector<StageWeights>& weights, std::vector<AttentionProbe>* probes) {
    if (schedule.empty()) throw ParameterError("run_schedule: empty schedule");
    if (weights.size() != schedule.size()) throw ShapeError("run_schedule: need one weight set per stage");
    for (std::size_t s = 1; s < schedule.size(); ++s) {
        if (schedule[s].dim_in != schedule[s - 1].dim_out) {
            throw ShapeError("run_schedule: stage " + std::to_string(s) + " dim_in " +
                             std::to_string(schedule[s].dim_in) + " does not match previous dim_out " +
                             std::to_string(schedule[s - 1].dim_out));
        }
    }

    ScheduleResult result{x, {}};
    if (probes) probes->assign(schedule.size(), {});
    for (std::size_t s = 0; s < schedule.size(); ++s) {
        const std::size_t prev_len = result.output.seq_len();
        const std::size_t prev_dim = result.output.dim();
        result.output = mhpa_forward(result.output, schedule[s], weights[s], probes ? &(*probes)[s] : nullptr);
        if (result.output.seq_len() > prev_len || result.output.dim() < prev_dim) {
            throw ShapeError("run_schedule: stage " + std::to_string(s) +
                             " increased resolution or reduced channels");
        }
        result.trace.push_back({result.output.seq_len(), result.output.dim()});
    }
    return result;
}

}  // namespace knights::mhpa
