#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "knights/matrix.hpp"

namespace knights::mhpa {

/// Space-time extent (or stride) factored as t x h x w.
struct Grid {
    std::size_t t = 1;
    std::size_t h = 1;
    std::size_t w = 1;

    std::size_t volume() const noexcept { return t * h * w; }
    bool operator==(const Grid&) const = default;
};

/// Parses "TxHxW".
Grid parse_grid(const std::string& text);
std::string to_string(const Grid& g);

/// Flattened space-time tokens, optionally preceded by a class token.
/// Row 0 is the class token when `has_class_token` is set.
struct TokenTensor {
    Grid grid;
    bool has_class_token = false;
    Matrix data;  // seq_len x dim

    std::size_t seq_len() const noexcept { return data.rows(); }
    std::size_t dim() const noexcept { return data.cols(); }

    /// Throws ShapeError if the row count disagrees with the grid.
    void validate() const;
};

enum class PoolingKind { average, strided };

PoolingKind parse_pooling_kind(const std::string& text);
const char* to_string(PoolingKind kind);

struct AttentionStage {
    std::size_t heads = 1;
    std::size_t dim_in = 0;
    std::size_t dim_out = 0;
    Grid q_stride;
    Grid kv_stride;
    PoolingKind pooling = PoolingKind::average;

    void validate() const;
};

using StageSchedule = std::vector<AttentionStage>;

/// Projection matrices for one stage, applied as x * W.
/// query/key/value are dim_in x dim_out, output is dim_out x dim_out.
struct StageWeights {
    Matrix query;
    Matrix key;
    Matrix value;
    Matrix output;

    /// Uniform(-a, a) entries with a = 1/sqrt(fan_in), reproducible from `seed`.
    static StageWeights random(const AttentionStage& stage, std::uint64_t seed);
};

/// Window pooling over the token grid. Output extent per axis is
/// ceil(extent / stride); the class token passes through untouched.
TokenTensor pool_tokens(const TokenTensor& x, const Grid& stride, PoolingKind kind);

/// Post-softmax attention weights, one pooled_q x pooled_kv matrix per head.
struct AttentionProbe {
    std::vector<Matrix> heads;
};

/// One pooling-attention block: project to Q, K, V, pool each with the stage
/// strides, scaled dot-product attention per head, output projection. The
/// Q-pooled input is added back as a residual when dim_in == dim_out.
TokenTensor mhpa_forward(const TokenTensor& x, const AttentionStage& stage, const StageWeights& weights,
                         AttentionProbe* probe = nullptr);

struct StageTrace {
    std::size_t seq_len;
    std::size_t dim;
    bool operator==(const StageTrace&) const = default;
};

struct ScheduleResult {
    TokenTensor output;
    std::vector<StageTrace> trace;  // shape after each stage
};

/// Applies the stages in order. Throws ShapeError if the channel chain breaks,
/// the token count grows, or the channel dim shrinks between stages.
ScheduleResult run_schedule(const TokenTensor& x, const StageSchedule& schedule,
                            const std::vector<StageWeights>& weights, std::vector<AttentionProbe>* probes = nullptr);

}  // namespace knights::mhpa
