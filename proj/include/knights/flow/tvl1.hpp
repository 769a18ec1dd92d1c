#pragma once

#include <cstddef>

#include "knights/flow/image.hpp"

namespace knights::flow {

/// Solver parameters for the duality-based TV-L1 scheme.
///
/// The data term is evaluated on intensities multiplied by `intensity_scale`,
/// so `lambda` keeps the meaning it has for 8-bit images while frames are
/// stored in [0, 1]. The solver therefore minimizes the energy with weight
/// lambda * intensity_scale; see effective_lambda().
struct Tvl1Params {
    double lambda = 0.15;
    double theta = 0.3;
    double tau_step = 0.25;
    std::size_t n_scales = 5;
    double zoom = 0.5;
    std::size_t n_warps = 5;
    std::size_t max_iters = 300;
    double epsilon = 0.01;
    bool median_filter = true;
    double intensity_scale = 255.0;

    /// Throws ParameterError when any field is out of range.
    void validate() const;
};

inline double effective_lambda(const Tvl1Params& p) { return p.lambda * p.intensity_scale; }

/// Coarse-to-fine TV-L1 flow from i0 to i1, i.e. i1(x + u) ~ i0(x).
FlowField compute_flow(const GrayImage& i0, const GrayImage& i1, const Tvl1Params& params = {});

/// Discrete TV-L1 energy: sum over pixels of |grad u1| + |grad u2| + lambda |i1(x + u) - i0(x)|,
/// with forward-difference gradients and the residual evaluated by warping.
double energy(const GrayImage& i0, const GrayImage& i1, const FlowField& flow, double lambda);

/// Mean endpoint error against a constant ground-truth displacement, over the
/// pixels at least `margin` away from every border.
double mean_endpoint_error(const FlowField& flow, double gt_u1, double gt_u2, std::size_t margin);

/// Mean Euclidean flow magnitude.
double mean_magnitude(const FlowField& flow);

}  // namespace knights::flow
