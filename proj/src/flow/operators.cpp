#include "knights/flow/operators.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "knights/errors.hpp"

namespace knights::flow {

GradientPlanes image_gradient(const Plane& img) {
    const std::size_t w = img.width();
    const std::size_t h = img.height();
    GradientPlanes g{Plane(w, h), Plane(w, h)};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            if (x + 1 < w) g.dx.at(x, y) = img.at(x + 1, y) - img.at(x, y);
            if (y + 1 < h) g.dy.at(x, y) = img.at(x, y + 1) - img.at(x, y);
        }
    }
    return g;
}

Plane divergence(const Plane& p1, const Plane& p2) {
    require_same_shape(p1, p2, "divergence");
    const std::size_t w = p1.width();
    const std::size_t h = p1.height();
    Plane div(w, h);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double d = 0.0;
            if (x + 1 < w) d += p1.at(x, y);
            if (x > 0) d -= p1.at(x - 1, y);
            if (y + 1 < h) d += p2.at(x, y);
            if (y > 0) d -= p2.at(x, y - 1);
            div.at(x, y) = d;
        }
    }
    return div;
}

GradientPlanes centered_gradient(const Plane& img) {
    const std::size_t w = img.width();
    const std::size_t h = img.height();
    GradientPlanes g{Plane(w, h), Plane(w, h)};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t xl = x > 0 ? x - 1 : x;
            const std::size_t xr = x + 1 < w ? x + 1 : x;
            const std::size_t yu = y > 0 ? y - 1 : y;
            const std::size_t yd = y + 1 < h ? y + 1 : y;
            if (xr != xl) g.dx.at(x, y) = (img.at(xr, y) - img.at(xl, y)) / static_cast<double>(xr - xl);
            if (yd != yu) g.dy.at(x, y) = (img.at(x, yd) - img.at(x, yu)) / static_cast<double>(yd - yu);
        }
    }
    return g;
}

double sample_bilinear(const Plane& img, double x, double y) {
    const double max_x = static_cast<double>(img.width() - 1);
    const double max_y = static_cast<double>(img.height() - 1);
    x = std::clamp(x, 0.0, max_x);
    y = std::clamp(y, 0.0, max_y);
    const auto x0 = static_cast<std::size_t>(std::floor(x));
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
    const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
    const double ax = x - static_cast<double>(x0);
    const double ay = y - static_cast<double>(y0);
    const double top = (1.0 - ax) * img.at(x0, y0) + ax * img.at(x1, y0);
    const double bottom = (1.0 - ax) * img.at(x0, y1) + ax * img.at(x1, y1);
    return (1.0 - ay) * top + ay * bottom;
}

Plane warp_bilinear(const Plane& img, const FlowField& flow) {
    require_same_shape(img, flow.u1, "warp_bilinear");
    require_same_shape(img, flow.u2, "warp_bilinear");
    Plane out(img.width(), img.height());
    for (std::size_t y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < img.width(); ++x) {
            out.at(x, y) = sample_bilinear(img, static_cast<double>(x) + flow.u1.at(x, y),
                                           static_cast<double>(y) + flow.u2.at(x, y));
        }
    }
    return out;
}

Plane gaussian_blur(const Plane& img, double sigma) {
    if (!(sigma > 0.0)) return img;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        norm += kernel[i + radius];
    }
    for (double& k : kernel) k /= norm;

    const int w = static_cast<int>(img.width());
    const int h = static_cast<int>(img.height());
    Plane tmp(img.width(), img.height());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * img.at(std::clamp(x + i, 0, w - 1), y);
            tmp.at(x, y) = s;
        }
    }
    Plane out(img.width(), img.height());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * tmp.at(x, std::clamp(y + i, 0, h - 1));
            out.at(x, y) = s;
        }
    }
    return out;
}

Plane resize_bilinear(const Plane& img, std::size_t width, std::size_t height) {
    if (width == 0 || height == 0) throw ShapeError("resize_bilinear: target size must be positive");
    const double sx = static_cast<double>(img.width()) / static_cast<double>(width);
    const double sy = static_cast<double>(img.height()) / static_cast<double>(height);
    Plane out(width, height);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            out.at(x, y) = sample_bilinear(img, (static_cast<double>(x) + 0.5) * sx - 0.5,
                                           (static_cast<double>(y) + 0.5) * sy - 0.5);
        }
    }
    return out;
}

Plane median3x3(const Plane& img) {
    const int w = static_cast<int>(img.width());
    const int h = static_cast<int>(img.height());
    Plane out(img.width(), img.height());
    std::array<double, 9> window{};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::size_t n = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    window[n++] = img.at(std::clamp(x + dx, 0, w - 1), std::clamp(y + dy, 0, h - 1));
                }
            }
            std::nth_element(window.begin(), window.begin() + 4, window.end());
            out.at(x, y) = window[4];
        }
    }
    return out;
}

std::vector<Plane> build_pyramid(const Plane& img, std::size_t n_scales, double zoom) {
    if (n_scales == 0) throw ParameterError("build_pyramid: n_scales must be >= 1");
    if (!(zoom > 0.0 && zoom < 1.0)) throw ParameterError("build_pyramid: zoom must lie in (0, 1)");

    std::vector<Plane> levels;
    levels.push_back(img);
    const double sigma = 0.6 * std::sqrt(1.0 / (zoom * zoom) - 1.0);
    double factor = 1.0;
    for (std::size_t k = 1; k < n_scales; ++k) {
        factor *= zoom;
        const auto w = static_cast<std::size_t>(std::lround(static_cast<double>(img.width()) * factor));
        const auto h = static_cast<std::size_t>(std::lround(static_cast<double>(img.height()) * factor));
        if (w < kMinPyramidSide || h < kMinPyramidSide) break;
        levels.push_back(resize_bilinear(gaussian_blur(levels.back(), sigma), w, h));
    }
    return levels;
}

}  // namespace knights::flow
