#pragma once

#include <cstddef>
#include <vector>

namespace knights::tta {

/// Clip geometry: `frames` frames taken every `skip` frames, `resolution` px square.
struct ClipSpec {
    std::size_t frames = 16;
    std::size_t skip = 2;
    std::size_t resolution = 112;

    void validate() const;
    /// Frames covered by one clip, frames * skip.
    std::size_t span() const noexcept { return frames * skip; }
};

/// Test-time crop counts (spatial x temporal).
struct CropGrid {
    std::size_t spatial_crops = 3;
    std::size_t temporal_crops = 10;

    void validate() const;
    std::size_t total() const noexcept { return spatial_crops * temporal_crops; }
};

struct CropBox {
    std::size_t x = 0;
    std::size_t y = 0;
    std::size_t width = 0;
    std::size_t height = 0;
    bool operator==(const CropBox&) const = default;
};

/// start, start + skip, ... (`frames` indices), wrapped cyclically into [0, video_len).
std::vector<std::size_t> sample_clip_indices(std::size_t video_len, const ClipSpec& spec, std::size_t start);

/// `n_temporal` clip starts spread evenly over [0, max(0, video_len - span)].
/// A single crop is centered.
std::vector<std::size_t> temporal_crop_starts(std::size_t video_len, const ClipSpec& spec, std::size_t n_temporal);

/// side x side boxes spread evenly along the longer axis of an h x w frame
/// (start, center, end for three crops).
std::vector<CropBox> spatial_crop_boxes(std::size_t height, std::size_t width, std::size_t side,
                                        std::size_t n_spatial = 3);

}  // namespace knights::tta
