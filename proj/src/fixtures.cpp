#include "teo/fixtures.hpp"

#include <fstream>

#include "teo/geom.hpp"
#include "teo/ingest.hpp"
#include "teo/rng.hpp"
#include "teo/vocab.hpp"

namespace teo {

namespace {

// Weights behind the damage-class draw; the stats sidecar repeats them so
// tests can check the empirical histogram against the configured bounds.
const std::vector<std::pair<std::string, double>>& damage_mix() {
    static const std::vector<std::pair<std::string, double>> mix = {
        {"No damage", 0.35}, {"Minor Damage", 0.25}, {"Major Damage", 0.2}, {"Destroyed", 0.2}};
    return mix;
}

std::string draw_weighted(std::mt19937_64& rng,
                          const std::vector<std::pair<std::string, double>>& mix) {
    double r = uniform_real(rng);
    for (const auto& [cls, w] : mix) {
        r -= w;
        if (r < 0) return cls;
    }
    return mix.back().first;
}

// A building footprint confined to one 256-tile so tile clipping never
// splits fixture geometry (cross-tile behavior is exercised by dedicated
// geometry tests, not CI fixtures).
Polygon random_building(std::mt19937_64& rng, int extent, int tile = 256) {
    int tiles = std::max(1, extent / tile);
    int tx = uniform_int(rng, 0, tiles - 1) * tile;
    int ty = uniform_int(rng, 0, tiles - 1) * tile;
    int w = uniform_int(rng, 18, 90);
    int h = uniform_int(rng, 18, 90);
    int x0 = tx + uniform_int(rng, 4, tile - w - 4);
    int y0 = ty + uniform_int(rng, 4, tile - h - 4);
    double x1 = x0 + w, y1 = y0 + h;

    Polygon poly;
    switch (uniform_int(rng, 0, 2)) {
        case 0:  // axis-aligned rectangle
            poly.exterior = {{double(x0), double(y0)},
                             {x1, double(y0)},
                             {x1, y1},
                             {double(x0), y1}};
            break;
        case 1: {  // rectilinear L-shape (notch in one corner)
            double xm = x0 + w * (0.3 + 0.4 * uniform_real(rng));
            double ym = y0 + h * (0.3 + 0.4 * uniform_real(rng));
            poly.exterior = {{double(x0), double(y0)}, {x1, double(y0)}, {x1, ym},
                             {xm, ym},                 {xm, y1},         {double(x0), y1}};
            break;
        }
        default: {  // right triangle: min box differs from the footprint
            poly.exterior = {{double(x0), double(y0)}, {x1, double(y0)}, {double(x0), y1}};
            break;
        }
    }
    return poly;
}

void write_stub_png(const std::filesystem::path& path) {
    write_mask_png(Mask::zeros(8, 8), path.string());
}

void write_scene(const std::filesystem::path& dir, const SceneRecord& scene) {
    std::ofstream out(dir / (scene.id + ".json"));
    out << scene_to_interchange_json(scene).dump(2) << '\n';
    for (const auto& img : scene.images) write_stub_png(dir / img.path);
}

void bump(FixtureStats& stats, const std::string& source, const std::string& cls) {
    ++stats.class_hist[source][cls];
}

}  // namespace

nlohmann::json FixtureStats::to_json() const {
    nlohmann::json j;
    j["scenes_per_source"] = scenes_per_source;
    j["labels_per_source"] = labels_per_source;
    j["class_hist"] = class_hist;
    nlohmann::json mix = nlohmann::json::object();
    for (const auto& [cls, w] : damage_mix()) mix[cls] = w;
    j["damage_mix"] = mix;
    return j;
}

FixtureStats generate_fixtures(const FixtureSpec& spec) {
    FixtureStats stats;
    auto source_dir = [&](SourceKind kind) {
        auto dir = spec.root / to_string(kind) / spec.split;
        std::filesystem::create_directories(dir);
        return dir;
    };

    // building damage pairs
    {
        auto dir = source_dir(SourceKind::xbd);
        for (int s = 0; s < spec.scenes_per_source; ++s) {
            char name[32];
            std::snprintf(name, sizeof(name), "xbd_%04d", s);
            auto rng = record_rng(spec.seed, name);
            SceneRecord scene;
            scene.id = name;
            scene.source = SourceKind::xbd;
            scene.width = spec.pair_extent;
            scene.height = spec.pair_extent;
            scene.sensor = "WorldView-2";
            scene.resolution = "high";
            scene.disaster_type =
                disaster_types()[uniform_u64(rng, disaster_types().size())];
            scene.images = {{std::string(name) + "_pre.png", std::nullopt},
                            {std::string(name) + "_post.png", std::nullopt}};
            scene.order_index = {0, 1};
            int buildings = uniform_int(rng, spec.buildings_min, spec.buildings_max);
            for (int b = 0; b < buildings; ++b) {
                GeoLabel label;
                label.geometry = random_building(rng, spec.pair_extent);
                std::string post = draw_weighted(rng, damage_mix());
                label.classes_per_timestep = {"No damage", post};
                scene.labels.push_back(std::move(label));
                bump(stats, "xbd", post);
            }
            stats.labels_per_source["xbd"] += scene.labels.size();
            write_scene(dir, scene);
            ++stats.scenes_per_source["xbd"];
        }
    }

    // building change pairs
    {
        auto dir = source_dir(SourceKind::s2looking);
        static const char* sensors[] = {"GaoFen", "SuperView", "BeiJing-2"};
        for (int s = 0; s < spec.scenes_per_source; ++s) {
            char name[32];
            std::snprintf(name, sizeof(name), "s2l_%04d", s);
            auto rng = record_rng(spec.seed, name);
            SceneRecord scene;
            scene.id = name;
            scene.source = SourceKind::s2looking;
            scene.width = spec.pair_extent;
            scene.height = spec.pair_extent;
            scene.sensor = sensors[uniform_u64(rng, 3)];
            scene.resolution = "high";
            scene.images = {{std::string(name) + "_t1.png", std::nullopt},
                            {std::string(name) + "_t2.png", std::nullopt}};
            scene.order_index = {0, 1};
            int buildings = uniform_int(rng, spec.buildings_min, spec.buildings_max);
            for (int b = 0; b < buildings; ++b) {
                GeoLabel label;
                label.geometry = random_building(rng, spec.pair_extent);
                label.change = change_kinds()[uniform_u64(rng, change_kinds().size())];
                bump(stats, "s2looking", label.change);
                scene.labels.push_back(std::move(label));
            }
            stats.labels_per_source["s2looking"] += scene.labels.size();
            write_scene(dir, scene);
            ++stats.scenes_per_source["s2looking"];
        }
    }

    // urban change sequences
    {
        auto dir = source_dir(SourceKind::qfabric);
        for (int s = 0; s < spec.scenes_per_source; ++s) {
            char name[32];
            std::snprintf(name, sizeof(name), "qfab_%04d", s);
            auto rng = record_rng(spec.seed, name);
            SceneRecord scene;
            scene.id = name;
            scene.source = SourceKind::qfabric;
            scene.width = spec.qfabric_extent;
            scene.height = spec.qfabric_extent;
            scene.sensor = "WorldView-2";
            scene.resolution = "high";
            for (int t = 0; t < 5; ++t) {
                char img[48];
                std::snprintf(img, sizeof(img), "%s_t%d.png", name, t);
                scene.images.push_back({img, std::nullopt});
                scene.order_index.push_back(t);
            }
            int polygons = uniform_int(rng, spec.buildings_min, spec.buildings_max);
            const auto& statuses = urban_status_classes();
            for (int b = 0; b < polygons; ++b) {
                GeoLabel label;
                label.geometry = random_building(rng, spec.qfabric_extent);
                label.sequence_class =
                    urban_change_types()[uniform_u64(rng, urban_change_types().size())];
                bump(stats, "qfabric", label.sequence_class);
                // monotone development: statuses advance over the sequence
                int start = uniform_int(rng, 0, static_cast<int>(statuses.size()) - 2);
                int stop = uniform_int(rng, start + 1, static_cast<int>(statuses.size()) - 1);
                for (int t = 0; t < 5; ++t) {
                    int idx = start + (stop - start) * t / 4;
                    label.classes_per_timestep.push_back(statuses[idx]);
                }
                scene.labels.push_back(std::move(label));
            }
            stats.labels_per_source["qfabric"] += scene.labels.size();
            write_scene(dir, scene);
            ++stats.scenes_per_source["qfabric"];
        }
    }

    // scene classification sequences (box-cropped)
    for (SourceKind kind : {SourceKind::fmow_rgb, SourceKind::fmow_sentinel}) {
        auto dir = source_dir(kind);
        for (int s = 0; s < spec.scenes_per_source; ++s) {
            char name[32];
            std::snprintf(name, sizeof(name), "%s_%04d", to_string(kind).c_str(), s);
            auto rng = record_rng(spec.seed, name);
            SceneRecord scene;
            scene.id = name;
            scene.source = kind;
            scene.width = 1024;
            scene.height = 1024;
            scene.sensor = kind == SourceKind::fmow_sentinel
                               ? "Sentinel-2"
                               : (bernoulli(rng, 0.5) ? "WorldView-2" : "WorldView-3");
            scene.resolution = kind == SourceKind::fmow_sentinel ? "low" : "high";
            scene.sequence_class = scene_classes()[uniform_u64(rng, scene_classes().size())];
            bump(stats, to_string(kind), scene.sequence_class);
            int n = uniform_int(rng, 1, 12);
            for (int t = 0; t < n; ++t) {
                char img[48];
                std::snprintf(img, sizeof(img), "%s_t%02d.png", name, t);
                int side = uniform_int(rng, 224, 800);
                int x0 = uniform_int(rng, 0, 1024 - side);
                int y0 = uniform_int(rng, 0, 1024 - side);
                scene.images.push_back({img, BBox{x0, y0, x0 + side, y0 + side}});
                scene.order_index.push_back(t);
            }
            write_scene(dir, scene);
            ++stats.scenes_per_source[to_string(kind)];
        }
    }

    // single-image instruction corpus (passthrough; exercises task-token removal)
    {
        auto dir = source_dir(SourceKind::single_image_corpus);
        for (int s = 0; s < spec.scenes_per_source; ++s) {
            char name[32];
            std::snprintf(name, sizeof(name), "single_%04d", s);
            auto rng = record_rng(spec.seed, name);
            SceneRecord scene;
            scene.id = name;
            scene.source = SourceKind::single_image_corpus;
            scene.width = 224;
            scene.height = 224;
            scene.images = {{std::string(name) + ".png", std::nullopt}};
            scene.order_index = {0};
            int x0 = uniform_int(rng, 0, 150);
            int y0 = uniform_int(rng, 0, 150);
            BBox box{x0, y0, x0 + uniform_int(rng, 20, 70), y0 + uniform_int(rng, 20, 70)};
            char token[64];
            std::snprintf(token, sizeof(token), "[%d, %d, %d, %d]", box.x_min, box.y_min,
                          box.x_max, box.y_max);
            if (bernoulli(rng, 0.5)) {
                scene.passthrough_turns = {
                    {"user", "[refer] Identify the location of the storage tank. <image>"},
                    {"assistant", std::string(token) + "."}};
            } else {
                scene.passthrough_turns = {
                    {"user", "[identify] What object is at " + std::string(token) + "? <image>"},
                    {"assistant", "A storage tank."}};
            }
            write_scene(dir, scene);
            ++stats.scenes_per_source["single_image_corpus"];
        }
    }

    // stats sidecars, one per source, outside the split directories
    for (const auto& [source, _] : stats.scenes_per_source) {
        std::ofstream out(spec.root / source / "stats.json");
        out << stats.to_json().dump(2) << '\n';
    }
    return stats;
}

}  // namespace teo
