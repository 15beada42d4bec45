#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

namespace teo {

/// Synthetic source tree in the interchange schema: random rectilinear
/// "buildings" with damage/change/urban labels, for CI and oracle tests.
/// Everything derives from the seed; image files are stub PNGs (the
/// pipeline never decodes pixels — geometry lives in the label files).
struct FixtureSpec {
    uint64_t seed = 7;
    std::filesystem::path root;
    std::string split = "train";
    int scenes_per_source = 6;
    int pair_extent = 1024;      // damage / building-change scenes (16 tiles)
    int qfabric_extent = 1024;   // urban-change scenes
    int buildings_min = 3;
    int buildings_max = 10;
};

struct FixtureStats {
    std::map<std::string, size_t> scenes_per_source;
    std::map<std::string, size_t> labels_per_source;
    std::map<std::string, std::map<std::string, size_t>> class_hist;  // source -> class -> n
    nlohmann::json to_json() const;
};

FixtureStats generate_fixtures(const FixtureSpec& spec);

}  // namespace teo
