#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace knights::flow {

/// Row-major single-channel plane of doubles. Used for intensities, gradient
/// components, dual variables and flow components alike.
class Plane {
public:
    Plane() = default;
    Plane(std::size_t width, std::size_t height, double fill = 0.0);
    Plane(std::size_t width, std::size_t height, std::vector<double> data);

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& at(std::size_t x, std::size_t y) { return data_[y * width_ + x]; }
    double at(std::size_t x, std::size_t y) const { return data_[y * width_ + x]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool same_shape(const Plane& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }

    bool operator==(const Plane&) const = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<double> data_;
};

/// Grayscale frame, intensities nominally in [0, 1].
using GrayImage = Plane;

/// Dense displacement field in pixels: sample I1 at (x + u1, y + u2).
struct FlowField {
    Plane u1;
    Plane u2;

    FlowField() = default;
    FlowField(std::size_t width, std::size_t height) : u1(width, height), u2(width, height) {}
    FlowField(Plane horizontal, Plane vertical);

    std::size_t width() const noexcept { return u1.width(); }
    std::size_t height() const noexcept { return u1.height(); }

    bool operator==(const FlowField&) const = default;
};

/// Throws DomainError on an empty plane or a non-finite value.
void require_valid(const Plane& p, const char* what);

/// Throws ShapeError if the two planes differ in size.
void require_same_shape(const Plane& a, const Plane& b, const char* what);

/// ITU-R 601 luma from interleaved RGB samples in [0, 1].
GrayImage luma_from_rgb(std::size_t width, std::size_t height, std::span<const double> rgb);

}  // namespace knights::flow
