#include "knights/flow/tvl1.hpp"

#include <cmath>
#include <string>

#include "knights/errors.hpp"
#include "knights/flow/operators.hpp"

namespace knights::flow {

void Tvl1Params::validate() const {
    auto fail = [](const std::string& msg) { throw ParameterError("Tvl1Params: " + msg); };
    if (!(lambda > 0.0) || !std::isfinite(lambda)) fail("lambda must be > 0");
    if (!(theta > 0.0) || !std::isfinite(theta)) fail("theta must be > 0");
    if (!(tau_step > 0.0) || !std::isfinite(tau_step)) fail("tau_step must be > 0");
    // Dual step tau/theta times the squared operator norm bound (8) must not exceed 1.
    if (tau_step > 0.125 / theta + 1e-12) fail("tau_step must be <= 0.125 / theta");
    if (!(zoom > 0.0 && zoom < 1.0)) fail("zoom must lie in (0, 1)");
    if (n_scales < 1) fail("n_scales must be >= 1");
    if (n_warps < 1) fail("n_warps must be >= 1");
    if (max_iters < 1) fail("max_iters must be >= 1");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) fail("epsilon must be > 0");
    if (!(intensity_scale > 0.0) || !std::isfinite(intensity_scale)) fail("intensity_scale must be > 0");
}

namespace {

Plane scaled(const Plane& img, double s) {
    Plane out = img;
    for (double& v : out.data()) v *= s;
    return out;
}

// Dual variables of the TV term, one vector field per flow component.
struct DualState {
    Plane p11, p12, p21, p22;
    DualState(std::size_t w, std::size_t h) : p11(w, h), p12(w, h), p21(w, h), p22(w, h) {}
};

void update_dual(const Plane& u, Plane& pa, Plane& pb, double step) {
    const GradientPlanes g = image_gradient(u);
    auto a = pa.data();
    auto b = pb.data();
    const auto gx = g.dx.data();
    const auto gy = g.dy.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = 1.0 + step * std::hypot(gx[i], gy[i]);
        a[i] = (a[i] + step * gx[i]) / denom;
        b[i] = (b[i] + step * gy[i]) / denom;
    }
}

void solve_level(const Plane& i0, const Plane& i1, FlowField& u, const Tvl1Params& params) {
    const std::size_t w = i0.width();
    const std::size_t h = i0.height();
    const std::size_t n = w * h;
    const GradientPlanes i1_grad = centered_gradient(i1);
    const double lt = params.lambda * params.theta;
    const double dual_step = params.tau_step / params.theta;

    DualState dual(w, h);
    Plane v1(w, h), v2(w, h);
    Plane grad_sq(w, h), rho_c(w, h);

    for (std::size_t warp = 0; warp < params.n_warps; ++warp) {
        const Plane i1w = warp_bilinear(i1, u);
        const Plane i1wx = warp_bilinear(i1_grad.dx, u);
        const Plane i1wy = warp_bilinear(i1_grad.dy, u);
        for (std::size_t i = 0; i < n; ++i) {
            const double gx = i1wx.data()[i];
            const double gy = i1wy.data()[i];
            grad_sq.data()[i] = gx * gx + gy * gy;
            rho_c.data()[i] = i1w.data()[i] - gx * u.u1.data()[i] - gy * u.u2.data()[i] - i0.data()[i];
        }

        for (std::size_t iter = 0; iter < params.max_iters; ++iter) {
            // Pointwise thresholding of the linearized data term.
            for (std::size_t i = 0; i < n; ++i) {
                const double gx = i1wx.data()[i];
                const double gy = i1wy.data()[i];
                const double g2 = grad_sq.data()[i];
                const double rho = rho_c.data()[i] + gx * u.u1.data()[i] + gy * u.u2.data()[i];
                double d1 = 0.0;
                double d2 = 0.0;
                if (rho < -lt * g2) {
                    d1 = lt * gx;
                    d2 = lt * gy;
                } else if (rho > lt * g2) {
                    d1 = -lt * gx;
                    d2 = -lt * gy;
                } else if (g2 > 1e-10) {
                    d1 = -rho / g2 * gx;
                    d2 = -rho / g2 * gy;
                }
                v1.data()[i] = u.u1.data()[i] + d1;
                v2.data()[i] = u.u2.data()[i] + d2;
            }

            const Plane div1 = divergence(dual.p11, dual.p12);
            const Plane div2 = divergence(dual.p21, dual.p22);
            double change = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double n1 = v1.data()[i] + params.theta * div1.data()[i];
                const double n2 = v2.data()[i] + params.theta * div2.data()[i];
                change += std::hypot(n1 - u.u1.data()[i], n2 - u.u2.data()[i]);
                u.u1.data()[i] = n1;
                u.u2.data()[i] = n2;
            }

            update_dual(u.u1, dual.p11, dual.p12, dual_step);
            update_dual(u.u2, dual.p21, dual.p22, dual_step);

            if (change / static_cast<double>(n) < params.epsilon) break;
        }

        if (params.median_filter) {
            u.u1 = median3x3(u.u1);
            u.u2 = median3x3(u.u2);
        }
    }
}

FlowField upsample(const FlowField& coarse, std::size_t width, std::size_t height) {
    const double rx = static_cast<double>(width) / static_cast<double>(coarse.width());
    const double ry = static_cast<double>(height) / static_cast<double>(coarse.height());
    FlowField fine(resize_bilinear(coarse.u1, width, height), resize_bilinear(coarse.u2, width, height));
    for (double& v : fine.u1.data()) v *= rx;
    for (double& v : fine.u2.data()) v *= ry;
    return fine;
}

}  // namespace

FlowField compute_flow(const GrayImage& i0, const GrayImage& i1, const Tvl1Params& params) {
    require_valid(i0, "compute_flow i0");
    require_valid(i1, "compute_flow i1");
    require_same_shape(i0, i1, "compute_flow");
    params.validate();

    const std::vector<Plane> pyr0 = build_pyramid(scaled(i0, params.intensity_scale), params.n_scales, params.zoom);
    const std::vector<Plane> pyr1 = build_pyramid(scaled(i1, params.intensity_scale), params.n_scales, params.zoom);

    FlowField u(pyr0.back().width(), pyr0.back().height());
    for (std::size_t level = pyr0.size(); level-- > 0;) {
        const Plane& a = pyr0[level];
        if (!u.u1.same_shape(a)) u = upsample(u, a.width(), a.height());
        solve_level(a, pyr1[level], u, params);
    }
    return u;
}

double energy(const GrayImage& i0, const GrayImage& i1, const FlowField& flow, double lambda) {
    require_same_shape(i0, i1, "energy");
    require_same_shape(i0, flow.u1, "energy");
    require_same_shape(i0, flow.u2, "energy");

    const GradientPlanes g1 = image_gradient(flow.u1);
    const GradientPlanes g2 = image_gradient(flow.u2);
    const Plane warped = warp_bilinear(i1, flow);
    double total = 0.0;
    for (std::size_t i = 0; i < i0.size(); ++i) {
        total += std::hypot(g1.dx.data()[i], g1.dy.data()[i]) + std::hypot(g2.dx.data()[i], g2.dy.data()[i]) +
                 lambda * std::abs(warped.data()[i] - i0.data()[i]);
    }
    return total;
}

double mean_endpoint_error(const FlowField& flow, double gt_u1, double gt_u2, std::size_t margin) {
    if (2 * margin >= flow.width() || 2 * margin >= flow.height()) {
        throw ParameterError("mean_endpoint_error: margin leaves no interior pixels");
    }
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t y = margin; y + margin < flow.height(); ++y) {
        for (std::size_t x = margin; x + margin < flow.width(); ++x) {
            total += std::hypot(flow.u1.at(x, y) - gt_u1, flow.u2.at(x, y) - gt_u2);
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

double mean_magnitude(const FlowField& flow) {
    double total = 0.0;
    for (std::size_t i = 0; i < flow.u1.size(); ++i) total += std::hypot(flow.u1.data()[i], flow.u2.data()[i]);
    return total / static_cast<double>(flow.u1.size());
}

}  // namespace knights::flow
