#pragma once

// Independent reference implementations used only by the tests. Nothing here
// calls into the library's own oracles or fast paths.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "knights/flow/image.hpp"
#include "knights/matrix.hpp"

namespace ref {

using Rows = std::vector<std::vector<double>>;

// Standard-normal rows from mt19937_64(seed).
knights::Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed);
Rows to_rows(const knights::Matrix& m);

double h(const std::vector<double>& u, const std::vector<double>& v, double tau);

// Loss values written straight from the formulas.
double instance_loss(const Rows& g, const Rows& g_twin, double tau);
double local_local_loss(const Rows& g, const Rows& g_twin, double tau);
double global_local_loss(const Rows& l, const Rows& g, double tau);

// Central-difference derivative of f with respect to x[i].
double central_difference(const std::function<double()>& f, double& x, double step);

// Plain multi-head attention on a row-major token matrix with x*W projections.
// Adds x as a residual when `residual` is set.
Rows vanilla_attention(const Rows& x, const Rows& wq, const Rows& wk, const Rows& wv, const Rows& wo,
                       std::size_t heads, bool residual);

// Sum of sinusoids with random frequencies in (-0.4, 0.4) rad/px, range within [0.02, 0.98].
// Sampled at (x - dx, y - dy), so shifting by (dx, dy) moves the pattern exactly.
knights::flow::GrayImage texture(std::size_t width, std::size_t height, std::uint64_t seed, double dx = 0.0,
                                 double dy = 0.0);

}  // namespace ref
