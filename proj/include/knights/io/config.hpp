#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "knights/mhpa/attention.hpp"
#include "knights/tta/aggregate.hpp"

namespace knights::io {

/// Plain `key = value` file. Blank lines and lines starting with '#' or ';'
/// are ignored. Entries keep file order; a repeated key is an error.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig load(const std::filesystem::path& path);

    bool contains(const std::string& key) const;
    const std::string& get(const std::string& key) const;  // ParameterError if missing
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

/// Stage schedule and input geometry:
///   grid = 1x8x8          class_token = false      stages = 4
///   stage.0.heads = 1     stage.0.dim_in = 8       stage.0.dim_out = 8
///   stage.0.q_stride = 1x1x1   stage.0.kv_stride = 1x1x1   stage.0.pooling = average
struct ScheduleConfig {
    mhpa::Grid grid;
    bool class_token = false;
    mhpa::StageSchedule stages;
};

ScheduleConfig schedule_from_config(const KeyValueConfig& cfg);

/// Ensemble members, one `model.<id> = <weight>` line each, in file order.
tta::EnsembleSpec ensemble_from_config(const KeyValueConfig& cfg);

}  // namespace knights::io
