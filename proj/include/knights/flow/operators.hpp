#pragma once

#include <cstddef>
#include <vector>

#include "knights/flow/image.hpp"

namespace knights::flow {

struct GradientPlanes {
    Plane dx;
    Plane dy;
};

/// Forward differences, Neumann boundary: the last column of dx and the last
/// row of dy are zero.
GradientPlanes image_gradient(const Plane& img);

/// Backward-difference divergence, the negative adjoint of image_gradient:
/// <grad u, p> = -<u, div p>.
Plane divergence(const Plane& p1, const Plane& p2);

/// Central differences (one-sided at the border). Used for the image
/// derivatives in the linearized data term.
GradientPlanes centered_gradient(const Plane& img);

/// Bilinear sample with coordinates clamped to the image border.
double sample_bilinear(const Plane& img, double x, double y);

/// img sampled at (x + u1, y + u2).
Plane warp_bilinear(const Plane& img, const FlowField& flow);

/// Separable Gaussian blur with replicated borders.
Plane gaussian_blur(const Plane& img, double sigma);

/// Area-consistent bilinear resampling to the requested size.
Plane resize_bilinear(const Plane& img, std::size_t width, std::size_t height);

/// 3x3 median with replicated borders.
Plane median3x3(const Plane& img);

/// Coarse-to-fine pyramid. Level 0 is the input; level k has dimensions
/// round(dim * zoom^k). Levels whose shorter side would fall below
/// kMinPyramidSide are dropped.
std::vector<Plane> build_pyramid(const Plane& img, std::size_t n_scales, double zoom);

inline constexpr std::size_t kMinPyramidSide = 16;

}  // namespace knights::flow
