#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace knights::io {

inline constexpr const char* kToolVersion = "0.1.0";

/// Hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

struct RunManifest {
    std::string command;
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    std::vector<std::filesystem::path> inputs;
    std::vector<std::filesystem::path> outputs;

    /// Digests every input and output that exists at call time.
    nlohmann::ordered_json to_json() const;
};

}  // namespace knights::io
