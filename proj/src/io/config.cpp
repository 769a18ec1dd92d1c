#include "knights/io/config.hpp"

#include <sstream>

#include "knights/errors.hpp"
#include "knights/io/codecs.hpp"

namespace knights::io {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        const std::size_t line_offset = offset;
        offset += line.size() + 1;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#' || t.front() == ';') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw FormatError("config: expected key = value, got '" + t + "'", line_offset);
        std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw FormatError("config: empty key", line_offset);
        if (cfg.contains(key)) throw FormatError("config: duplicate key '" + key + "'", line_offset);
        cfg.entries_.emplace_back(std::move(key), trim(t.substr(eq + 1)));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    try {
        return parse(std::string(bytes.begin(), bytes.end()));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.detail(), e.offset());
    }
}

bool KeyValueConfig::contains(const std::string& key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return true;
    }
    return false;
}

const std::string& KeyValueConfig::get(const std::string& key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return v;
    }
    throw ParameterError("config: missing key '" + key + "'");
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
    return contains(key) ? get(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key) const {
    const std::string& v = get(key);
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw ParameterError("config: '" + key + "' is not a number: '" + v + "'");
    return out;
}

std::size_t KeyValueConfig::get_size(const std::string& key) const {
    const std::string& v = get(key);
    std::size_t used = 0;
    unsigned long long out = 0;
    try {
        out = std::stoull(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size() || v.front() == '-') {
        throw ParameterError("config: '" + key + "' is not a non-negative integer: '" + v + "'");
    }
    return static_cast<std::size_t>(out);
}

ScheduleConfig schedule_from_config(const KeyValueConfig& cfg) {
    ScheduleConfig out;
    out.grid = mhpa::parse_grid(cfg.get("grid"));
    const std::string cls = cfg.get_or("class_token", "false");
    if (cls != "true" && cls != "false") throw ParameterError("config: class_token must be true or false");
    out.class_token = cls == "true";

    const std::size_t n = cfg.get_size("stages");
    if (n == 0) throw ParameterError("config: stages must be >= 1");
    for (std::size_t s = 0; s < n; ++s) {
        const std::string prefix = "stage." + std::to_string(s) + ".";
        mhpa::AttentionStage stage;
        stage.heads = cfg.get_size(prefix + "heads");
        stage.dim_in = cfg.get_size(prefix + "dim_in");
        stage.dim_out = cfg.get_size(prefix + "dim_out");
        stage.q_stride = mhpa::parse_grid(cfg.get_or(prefix + "q_stride", "1x1x1"));
        stage.kv_stride = mhpa::parse_grid(cfg.get_or(prefix + "kv_stride", "1x1x1"));
        stage.pooling = mhpa::parse_pooling_kind(cfg.get_or(prefix + "pooling", "average"));
        stage.validate();
        out.stages.push_back(stage);
    }
    return out;
}

tta::EnsembleSpec ensemble_from_config(const KeyValueConfig& cfg) {
    std::vector<tta::EnsembleMember> members;
    for (const auto& [k, v] : cfg.entries()) {
        if (k.rfind("model.", 0) != 0) throw ParameterError("ensemble config: unexpected key '" + k + "'");
        members.push_back({k.substr(6), cfg.get_double(k)});
    }
    if (members.empty()) throw ParameterError("ensemble config: no model.<id> entries");
    return tta::EnsembleSpec(std::move(members));
}

}  // namespace knights::io
