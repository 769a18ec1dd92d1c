#include "knights/flow/image.hpp"

#include <cmath>
#include <string>

#include "knights/errors.hpp"

namespace knights::flow {

Plane::Plane(std::size_t width, std::size_t height, double fill)
    : width_(width), height_(height), data_(width * height, fill) {}

Plane::Plane(std::size_t width, std::size_t height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != width_ * height_) {
        throw ShapeError("Plane: " + std::to_string(width_) + "x" + std::to_string(height_) + " needs " +
                         std::to_string(width_ * height_) + " samples, got " + std::to_string(data_.size()));
    }
}

FlowField::FlowField(Plane horizontal, Plane vertical) : u1(std::move(horizontal)), u2(std::move(vertical)) {
    require_same_shape(u1, u2, "FlowField");
}

void require_valid(const Plane& p, const char* what) {
    if (p.size() == 0) throw DomainError(std::string(what) + ": empty image");
    for (double v : p.data()) {
        if (!std::isfinite(v)) throw DomainError(std::string(what) + ": non-finite sample");
    }
}

void require_same_shape(const Plane& a, const Plane& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                         " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
    }
}

GrayImage luma_from_rgb(std::size_t width, std::size_t height, std::span<const double> rgb) {
    if (rgb.size() != width * height * 3) throw ShapeError("luma_from_rgb: expected 3 samples per pixel");
    GrayImage out(width, height);
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = 0.299 * rgb[3 * i] + 0.587 * rgb[3 * i + 1] + 0.114 * rgb[3 * i + 2];
    }
    return out;
}

}  // namespace knights::flow
