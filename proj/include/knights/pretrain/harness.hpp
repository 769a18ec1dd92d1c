#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "knights/matrix.hpp"
#include "knights/tclr/losses.hpp"

namespace knights::pretrain {

struct DatasetConfig {
    std::size_t n_instances = 32;
    std::size_t n_segments = 4;
    std::size_t feature_dim = 16;
    std::uint64_t seed = 7;
    double drift = 0.5;  // per-dimension std of the step between consecutive segments
    double noise = 0.3;  // bound on the uniform perturbation that produces views
};

/// Per-instance latent trajectories standing in for unlabeled videos. Every
/// instance has `n_segments` segment features plus two perturbed views of
/// each: a twin (augmented local clip) and a global-clip slice.
struct SyntheticClipDataset {
    DatasetConfig config;
    std::vector<Matrix> segments;  // n_segments x feature_dim each
    std::vector<Matrix> twins;
    std::vector<Matrix> global_views;

    std::size_t instances() const noexcept { return segments.size(); }
};

SyntheticClipDataset generate_dataset(const DatasetConfig& config);

/// z = W2 tanh(W1 x + b1) + b2, all parameters in one flat buffer laid out as
/// [W1 (hidden x input), b1, W2 (output x hidden), b2].
class TinyEncoder {
public:
    TinyEncoder(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim);

    /// Uniform(-a, a) weights with a = 1/sqrt(fan_in), zero biases.
    static TinyEncoder random(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim,
                              std::uint64_t seed);

    std::size_t input_dim() const noexcept { return input_; }
    std::size_t hidden_dim() const noexcept { return hidden_; }
    std::size_t output_dim() const noexcept { return output_; }

    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }

    /// Encodes every row of `x`. When `hidden` is given it receives the tanh activations.
    Matrix forward(const Matrix& x, Matrix* hidden = nullptr) const;

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output) for
    /// the rows encoded by forward(x, &hidden).
    void backward(const Matrix& x, const Matrix& hidden, const Matrix& grad_output, std::span<double> grad) const;

private:
    std::size_t w1_offset() const noexcept { return 0; }
    std::size_t b1_offset() const noexcept { return hidden_ * input_; }
    std::size_t w2_offset() const noexcept { return b1_offset() + hidden_; }
    std::size_t b2_offset() const noexcept { return w2_offset() + output_ * hidden_; }

    std::size_t input_;
    std::size_t hidden_;
    std::size_t output_;
    std::vector<double> params_;
};

struct EncoderConfig {
    std::size_t hidden_dim = 32;
    std::size_t embedding_dim = 16;
    std::uint64_t seed = 7;
};

struct TrainConfig {
    std::size_t steps = 200;
    std::size_t batch = 8;
    double tau = 0.1;
    double learning_rate = 0.2;  // picked from a {0.1, 0.2, 0.5} sweep on the default dataset
    tclr::LossWeights weights;
    std::uint64_t seed = 7;

    void validate() const;
};

struct Objective {
    double loss = 0.0;
    std::vector<double> gradient;  // same layout as TinyEncoder::parameters()
};

/// Combined TCLR loss on the listed instances and its gradient with respect
/// to the encoder parameters. Instance-level clip features are the mean of
/// the instance's segment embeddings; local anchors reuse the segment
/// embeddings, global slices come from the global views.
Objective evaluate_objective(const TinyEncoder& encoder, const SyntheticClipDataset& data,
                             std::span<const std::size_t> instances, const TrainConfig& config);

struct TraceStep {
    std::size_t step;
    double loss;
    double grad_norm;
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Plain gradient descent. The instance list is shuffled once from
/// config.seed; batches are consecutive windows over it, wrapping around. Each trace entry records the loss and gradient
/// norm measured before that step's update.
std::vector<TraceStep> train(const SyntheticClipDataset& data, TinyEncoder& encoder, const TrainConfig& config);

/// Mean pairwise cosine similarity between embeddings of different segments
/// of the same instance; lower means more temporally distinct.
double temporal_distinctness(const TinyEncoder& encoder, const SyntheticClipDataset& data);

/// Same measure on precomputed per-instance embeddings (segments x dim each).
double temporal_distinctness(std::span<const Matrix> per_instance);

}  // namespace knights::pretrain
