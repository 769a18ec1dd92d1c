#include "knights/io/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <memory>

#include "knights/errors.hpp"
#include "knights/io/codecs.hpp"

namespace knights::io {

std::string sha256_file(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw IoError("sha256 failed for '" + path.string() + "'");
    }
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

nlohmann::ordered_json RunManifest::to_json() const {
    auto describe = [](const std::vector<std::filesystem::path>& paths) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& p : paths) {
            nlohmann::ordered_json entry;
            entry["path"] = p.string();
            entry["sha256"] = std::filesystem::is_regular_file(p) ? nlohmann::ordered_json(sha256_file(p)) : nullptr;
            arr.push_back(std::move(entry));
        }
        return arr;
    };
    nlohmann::ordered_json j;
    j["tool"] = "knights";
    j["version"] = kToolVersion;
    j["command"] = command;
    j["params"] = params;
    j["inputs"] = describe(inputs);
    j["outputs"] = describe(outputs);
    return j;
}

}  // namespace knights::io
