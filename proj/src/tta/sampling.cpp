#include "knights/tta/sampling.hpp"

#include <cmath>
#include <string>

#include "knights/errors.hpp"

namespace knights::tta {

void ClipSpec::validate() const {
    if (frames < 1 || skip < 1 || resolution < 1) {
        throw ParameterError("ClipSpec: frames, skip and resolution must all be >= 1");
    }
}

void CropGrid::validate() const {
    if (spatial_crops < 1 || temporal_crops < 1) throw ParameterError("CropGrid: crop counts must be >= 1");
}

std::vector<std::size_t> sample_clip_indices(std::size_t video_len, const ClipSpec& spec, std::size_t start) {
    spec.validate();
    if (video_len < 1) throw ParameterError("sample_clip_indices: video_len must be >= 1");
    std::vector<std::size_t> indices;
    indices.reserve(spec.frames);
    for (std::size_t k = 0; k < spec.frames; ++k) indices.push_back((start + k * spec.skip) % video_len);
    return indices;
}

namespace {

// n offsets evenly spread over [0, range]; one offset sits in the middle.
std::vector<std::size_t> spread(std::size_t range, std::size_t n) {
    if (n == 1) return {range / 2};
    std::vector<std::size_t> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double pos = static_cast<double>(k) * static_cast<double>(range) / static_cast<double>(n - 1);
        out.push_back(static_cast<std::size_t>(std::lround(pos)));
    }
    return out;
}

}  // namespace

std::vector<std::size_t> temporal_crop_starts(std::size_t video_len, const ClipSpec& spec, std::size_t n_temporal) {
    spec.validate();
    if (n_temporal < 1) throw ParameterError("temporal_crop_starts: n_temporal must be >= 1");
    const std::size_t range = video_len > spec.span() ? video_len - spec.span() : 0;
    return spread(range, n_temporal);
}

std::vector<CropBox> spatial_crop_boxes(std::size_t height, std::size_t width, std::size_t side,
                                        std::size_t n_spatial) {
    if (n_spatial < 1) throw ParameterError("spatial_crop_boxes: n_spatial must be >= 1");
    if (side == 0 || side > height || side > width) {
        throw ParameterError("spatial_crop_boxes: crop side " + std::to_string(side) + " does not fit in " +
                             std::to_string(height) + "x" + std::to_string(width));
    }
    const bool along_x = width >= height;
    const std::size_t range = along_x ? width - side : height - side;
    std::vector<CropBox> boxes;
    for (std::size_t offset : spread(range, n_spatial)) {
        // The shorter axis is covered by a centered crop.
        CropBox b{along_x ? offset : (width - side) / 2, along_x ? (height - side) / 2 : offset, side, side};
        boxes.push_back(b);
    }
    return boxes;
}

}  // namespace knights::tta
