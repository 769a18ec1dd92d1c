#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "knights/flow/image.hpp"
#include "knights/matrix.hpp"

namespace knights::io {

using Bytes = std::vector<std::uint8_t>;

/// Middlebury .flo tag: the bytes "PIEH" read as a little-endian float.
inline constexpr float kFloTag = 202021.25f;

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Bytes& bytes);

/// Binary PGM (P5, maxval <= 255) to intensities in [0, 1]. Binary PPM (P6)
/// is accepted and converted to luma.
flow::GrayImage decode_pnm(const Bytes& bytes);
flow::GrayImage read_pgm(const std::filesystem::path& path);

/// P5 with maxval 255; intensities are clamped to [0, 1] and rounded.
Bytes encode_pgm(const flow::GrayImage& img);
void write_pgm(const std::filesystem::path& path, const flow::GrayImage& img);

/// .flo layout: f32 tag, i32 width, i32 height, then (u1, u2) f32 pairs in
/// row-major order, all little-endian. Components are narrowed to float.
Bytes encode_flo(const flow::FlowField& flow);
flow::FlowField decode_flo(const Bytes& bytes);
void write_flo(const std::filesystem::path& path, const flow::FlowField& flow);
flow::FlowField read_flo(const std::filesystem::path& path);

/// EMB1 layout: "EMB1", u32 rows, u32 cols (little-endian), then row-major f64.
Bytes encode_emb1(const Matrix& m);
Matrix decode_emb1(const Bytes& bytes);
void write_emb1(const std::filesystem::path& path, const Matrix& m);
Matrix read_emb1(const std::filesystem::path& path);

/// Prediction CSV: header row of class ids, one probability row per crop.
/// If the first header cell is "video_id", the first column of every row
/// names the video the crop belongs to.
struct CsvPredictions {
    std::vector<std::string> class_ids;
    std::vector<std::string> video_ids;  // one per row; empty without a video_id column
    Matrix probs;
};

CsvPredictions parse_csv_preds(const std::string& text);
CsvPredictions read_csv_preds(const std::filesystem::path& path);

}  // namespace knights::io
