#include "knights/io/codecs.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "knights/errors.hpp"

namespace knights::io {

namespace {

template <typename T>
void put_le(Bytes& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

// Sequential little-endian reader that reports the offset of any short read.
class Reader {
public:
    Reader(const Bytes& bytes, const char* format) : bytes_(bytes), format_(format) {}

    template <typename T>
    T get(const char* field) {
        using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
        require(sizeof(T), field);
        U bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
        pos_ += sizeof(T);
        return std::bit_cast<T>(bits);
    }

    void require(std::size_t n, const char* field) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(std::string(format_) + ": truncated while reading " + field + ", expected " +
                                  std::to_string(pos_ + n) + " bytes, file has " + std::to_string(bytes_.size()),
                              bytes_.size());
        }
    }

    void expect_end(std::size_t expected_total) const {
        if (bytes_.size() != expected_total) {
            throw FormatError(std::string(format_) + ": expected " + std::to_string(expected_total) +
                                  " bytes, file has " + std::to_string(bytes_.size()),
                              std::min(bytes_.size(), expected_total));
        }
    }

    std::size_t pos() const noexcept { return pos_; }

private:
    const Bytes& bytes_;
    const char* format_;
    std::size_t pos_ = 0;
};

}  // namespace

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read error on '" + path.string() + "'");
    return bytes;
}

void write_file(const std::filesystem::path& path, const Bytes& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write error on '" + path.string() + "'");
}

// ---- PNM ------------------------------------------------------------------

namespace {

// Header token scanner: whitespace separated, '#' comments to end of line.
std::size_t next_token(const Bytes& b, std::size_t& pos, const char* field) {
    for (;;) {
        while (pos < b.size() && std::isspace(b[pos])) ++pos;
        if (pos < b.size() && b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    const std::size_t start = pos;
    std::size_t value = 0;
    while (pos < b.size() && std::isdigit(b[pos])) {
        value = value * 10 + (b[pos] - '0');
        if (value > (1u << 30)) throw FormatError(std::string("PNM: ") + field + " is too large", start);
        ++pos;
    }
    if (pos == start) throw FormatError(std::string("PNM: expected ") + field, start);
    return value;
}

}  // namespace

flow::GrayImage decode_pnm(const Bytes& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw FormatError("PNM: expected magic P5 or P6", 0);
    }
    const bool color = bytes[1] == '6';
    std::size_t pos = 2;
    const std::size_t width = next_token(bytes, pos, "width");
    const std::size_t height = next_token(bytes, pos, "height");
    const std::size_t maxval = next_token(bytes, pos, "maxval");
    if (width == 0 || height == 0) throw FormatError("PNM: zero image dimension", pos);
    if (maxval == 0 || maxval > 255) throw FormatError("PNM: only maxval 1..255 is supported", pos);
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("PNM: missing separator after header", pos);
    ++pos;

    const std::size_t channels = color ? 3 : 1;
    const std::size_t expected = pos + width * height * channels;
    if (bytes.size() < expected) {
        throw FormatError("PNM: truncated pixel data, expected " + std::to_string(expected) + " bytes, file has " +
                              std::to_string(bytes.size()),
                          bytes.size());
    }
    const double scale = 1.0 / static_cast<double>(maxval);
    if (!color) {
        flow::GrayImage img(width, height);
        auto dst = img.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = bytes[pos + i] * scale;
        return img;
    }
    std::vector<double> rgb(width * height * 3);
    for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = bytes[pos + i] * scale;
    return flow::luma_from_rgb(width, height, rgb);
}

flow::GrayImage read_pgm(const std::filesystem::path& path) {
    try {
        return decode_pnm(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.detail(), e.offset());
    }
}

Bytes encode_pgm(const flow::GrayImage& img) {
    const std::string header = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    Bytes out(header.begin(), header.end());
    for (double v : img.data()) out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    return out;
}

void write_pgm(const std::filesystem::path& path, const flow::GrayImage& img) { write_file(path, encode_pgm(img)); }

// ---- .flo -----------------------------------------------------------------

Bytes encode_flo(const flow::FlowField& flow) {
    const std::size_t w = flow.width();
    const std::size_t h = flow.height();
    Bytes out;
    out.reserve(12 + 8 * w * h);
    put_le(out, kFloTag);
    put_le(out, static_cast<std::int32_t>(w));
    put_le(out, static_cast<std::int32_t>(h));
    for (std::size_t i = 0; i < w * h; ++i) {
        put_le(out, static_cast<float>(flow.u1.data()[i]));
        put_le(out, static_cast<float>(flow.u2.data()[i]));
    }
    return out;
}

flow::FlowField decode_flo(const Bytes& bytes) {
    Reader r(bytes, ".flo");
    const float tag = r.get<float>("tag");
    if (tag != kFloTag) throw FormatError(".flo: bad tag (expected PIEH / 202021.25)", 0);
    const auto w = r.get<std::int32_t>("width");
    const auto h = r.get<std::int32_t>("height");
    if (w < 1 || w > 99999) throw FormatError(".flo: illegal width " + std::to_string(w), 4);
    if (h < 1 || h > 99999) throw FormatError(".flo: illegal height " + std::to_string(h), 8);
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    r.require(8 * n, "flow data");
    r.expect_end(12 + 8 * n);

    flow::FlowField f(static_cast<std::size_t>(w), static_cast<std::size_t>(h));
    for (std::size_t i = 0; i < n; ++i) {
        f.u1.data()[i] = r.get<float>("u1");
        f.u2.data()[i] = r.get<float>("u2");
    }
    return f;
}

void write_flo(const std::filesystem::path& path, const flow::FlowField& flow) { write_file(path, encode_flo(flow)); }

flow::FlowField read_flo(const std::filesystem::path& path) {
    try {
        return decode_flo(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.detail(), e.offset());
    }
}

// ---- EMB1 -----------------------------------------------------------------

Bytes encode_emb1(const Matrix& m) {
    Bytes out{'E', 'M', 'B', '1'};
    out.reserve(12 + 8 * m.size());
    put_le(out, static_cast<std::uint32_t>(m.rows()));
    put_le(out, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) put_le(out, v);
    return out;
}

Matrix decode_emb1(const Bytes& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "EMB1", 4) != 0) throw FormatError("EMB1: bad magic", 0);
    Reader r(bytes, "EMB1");
    r.get<std::uint32_t>("magic");
    const std::size_t rows = r.get<std::uint32_t>("rows");
    const std::size_t cols = r.get<std::uint32_t>("cols");
    if (cols != 0 && rows > (std::numeric_limits<std::size_t>::max() - 12) / 8 / cols) {
        throw FormatError("EMB1: header declares " + std::to_string(rows) + "x" + std::to_string(cols) +
                              " values, too many to address",
                          4);
    }
    r.expect_end(12 + 8 * rows * cols);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = r.get<double>("value");
    return m;
}

void write_emb1(const std::filesystem::path& path, const Matrix& m) { write_file(path, encode_emb1(m)); }

Matrix read_emb1(const std::filesystem::path& path) {
    try {
        return decode_emb1(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.detail(), e.offset());
    }
}

// ---- prediction CSV -------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace

CsvPredictions parse_csv_preds(const std::string& text) {
    CsvPredictions out;
    std::istringstream in(text);
    std::string line;
    std::size_t offset = 0;
    bool header_seen = false;
    bool has_video = false;
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        const std::size_t line_offset = offset;
        offset += line.size() + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split_csv_line(line);
        if (!header_seen) {
            header_seen = true;
            has_video = !cells.empty() && cells.front() == "video_id";
            out.class_ids.assign(cells.begin() + (has_video ? 1 : 0), cells.end());
            if (out.class_ids.empty()) throw FormatError("CSV: header names no classes", line_offset);
            continue;
        }
        const std::size_t expected = out.class_ids.size() + (has_video ? 1 : 0);
        if (cells.size() != expected) {
            throw FormatError("CSV: row " + std::to_string(rows + 1) + " has " + std::to_string(cells.size()) +
                                  " cells, header has " + std::to_string(expected),
                              line_offset);
        }
        if (has_video) out.video_ids.push_back(cells.front());
        for (std::size_t c = has_video ? 1 : 0; c < cells.size(); ++c) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cells[c], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != cells[c].size()) {
                throw FormatError("CSV: '" + cells[c] + "' is not a number", line_offset);
            }
            values.push_back(v);
        }
        ++rows;
    }
    if (!header_seen) throw FormatError("CSV: missing header row", 0);
    out.probs = Matrix(rows, out.class_ids.size(), std::move(values));
    return out;
}

CsvPredictions read_csv_preds(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    try {
        return parse_csv_preds(std::string(bytes.begin(), bytes.end()));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.detail(), e.offset());
    }
}

}  // namespace knights::io
