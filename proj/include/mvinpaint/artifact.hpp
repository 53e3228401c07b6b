#pragma once

#include "mvinpaint/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>

namespace mvi {

/// Versioned container for stage outputs: JSON metadata plus named dense
/// matrices stored byte-exact.
struct Artifact {
    static constexpr uint32_t kVersion = 1;

    std::string stage;
    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, cv::Mat> mats;

    void put(const std::string& name, const cv::Mat& m) { mats[name] = m.clone(); }
    /// Throws InputError when missing.
    const cv::Mat& get(const std::string& name) const;
    bool has(const std::string& name) const { return mats.count(name) > 0; }

    void save(const std::filesystem::path& file) const;
    /// Throws InputError naming the file when it is missing, truncated, or of
    /// another format version.
    static Artifact load(const std::filesystem::path& file);
};

}  // namespace mvi
