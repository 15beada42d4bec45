#include "teo/ingest.hpp"

#include <algorithm>
#include <stdexcept>

#include "teo/jsonl.hpp"

namespace teo {

std::string to_string(SourceKind kind) {
    switch (kind) {
        case SourceKind::xbd: return "xbd";
        case SourceKind::s2looking: return "s2looking";
        case SourceKind::qfabric: return "qfabric";
        case SourceKind::fmow_rgb: return "fmow_rgb";
        case SourceKind::fmow_sentinel: return "fmow_sentinel";
        case SourceKind::single_image_corpus: return "single_image_corpus";
    }
    return "unknown";
}

SourceKind source_kind_from_string(const std::string& s) {
    for (SourceKind k : {SourceKind::xbd, SourceKind::s2looking, SourceKind::qfabric,
                         SourceKind::fmow_rgb, SourceKind::fmow_sentinel,
                         SourceKind::single_image_corpus})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown source kind: " + s);
}

void SceneRecord::validate() const {
    auto fail = [&](const std::string& why) {
        throw std::runtime_error("scene '" + id + "': " + why);
    };
    if (images.empty()) fail("no images");
    if (order_index.size() != images.size()) fail("order index length mismatch");
    for (size_t i = 1; i < order_index.size(); ++i)
        if (order_index[i] <= order_index[i - 1]) fail("order indices not strictly increasing");
    for (size_t i = 0; i < labels.size(); ++i) {
        const GeoLabel& l = labels[i];
        std::string why;
        if (!l.geometry.valid(&why))
            fail("label " + std::to_string(i) + ": " + why);
        if (l.classes_per_timestep.empty() && l.sequence_class.empty() && l.change.empty())
            fail("label " + std::to_string(i) + ": no label fields present");
        if (!l.classes_per_timestep.empty() && l.classes_per_timestep.size() != images.size())
            fail("label " + std::to_string(i) + ": per-timestep classes length mismatch");
        if (width > 0) {
            auto box = min_aabb(l.geometry);
            if (box && (box->x_min < 0 || box->y_min < 0 || box->x_max > width ||
                        box->y_max > height))
                fail("label " + std::to_string(i) + ": geometry outside image extent");
        }
    }
}

namespace {

BBox box_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 4) throw std::runtime_error("box must be [x0, y0, x1, y1]");
    return BBox{j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

nlohmann::json box_to_json(const BBox& b) {
    return nlohmann::json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

std::vector<Point> ring_from_json(const nlohmann::json& j) {
    std::vector<Point> ring;
    for (const auto& v : j) ring.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    return ring;
}

nlohmann::json ring_to_json(const std::vector<Point>& ring) {
    auto arr = nlohmann::json::array();
    for (const auto& p : ring) arr.push_back(nlohmann::json::array({p.x, p.y}));
    return arr;
}

}  // namespace

SceneRecord scene_from_interchange_json(const nlohmann::json& j, SourceKind kind) {
    SceneRecord rec;
    rec.source = kind;
    rec.id = j.at("id").get<std::string>();
    for (const auto& img : j.at("images")) {
        ImageRef ref;
        if (img.is_string()) {
            ref.path = img.get<std::string>();
        } else {
            ref.path = img.at("path").get<std::string>();
            if (img.contains("crop")) ref.crop = box_from_json(img.at("crop"));
        }
        rec.images.push_back(std::move(ref));
    }
    rec.width = j.value("width", 0);
    rec.height = j.value("height", 0);
    rec.sensor = j.value("sensor", "");
    rec.resolution = j.value("resolution", "");
    rec.disaster_type = j.value("disaster_type", "");
    rec.sequence_class = j.value("sequence_class", "");
    if (j.contains("labels")) {
        for (const auto& lj : j.at("labels")) {
            GeoLabel label;
            label.geometry.exterior = ring_from_json(lj.at("polygon"));
            if (lj.contains("holes"))
                for (const auto& h : lj.at("holes"))
                    label.geometry.holes.push_back(ring_from_json(h));
            label.geometry.normalize();
            if (lj.contains("classes_per_timestep"))
                label.classes_per_timestep =
                    lj.at("classes_per_timestep").get<std::vector<std::string>>();
            label.sequence_class = lj.value("sequence_class", "");
            label.change = lj.value("change", "");
            rec.labels.push_back(std::move(label));
        }
    }
    if (j.contains("conversations"))
        for (const auto& t : j.at("conversations"))
            rec.passthrough_turns.push_back(
                {t.at("role").get<std::string>(), t.at("text").get<std::string>()});
    // order indices follow label file ordering; sequences arrive time-ordered
    rec.order_index.resize(rec.images.size());
    for (size_t i = 0; i < rec.order_index.size(); ++i) rec.order_index[i] = static_cast<int>(i);
    return rec;
}

nlohmann::json scene_to_interchange_json(const SceneRecord& rec) {
    nlohmann::json j;
    j["id"] = rec.id;
    auto images = nlohmann::json::array();
    for (const auto& img : rec.images) {
        if (img.crop)
            images.push_back({{"path", img.path}, {"crop", box_to_json(*img.crop)}});
        else
            images.push_back(img.path);
    }
    j["images"] = images;
    j["width"] = rec.width;
    j["height"] = rec.height;
    if (!rec.sensor.empty()) j["sensor"] = rec.sensor;
    if (!rec.resolution.empty()) j["resolution"] = rec.resolution;
    if (!rec.disaster_type.empty()) j["disaster_type"] = rec.disaster_type;
    if (!rec.sequence_class.empty()) j["sequence_class"] = rec.sequence_class;
    if (!rec.labels.empty()) {
        auto labels = nlohmann::json::array();
        for (const auto& l : rec.labels) {
            nlohmann::json lj;
            lj["polygon"] = ring_to_json(l.geometry.exterior);
            if (!l.geometry.holes.empty()) {
                auto holes = nlohmann::json::array();
                for (const auto& h : l.geometry.holes) holes.push_back(ring_to_json(h));
                lj["holes"] = holes;
            }
            if (!l.classes_per_timestep.empty())
                lj["classes_per_timestep"] = l.classes_per_timestep;
            if (!l.sequence_class.empty()) lj["sequence_class"] = l.sequence_class;
            if (!l.change.empty()) lj["change"] = l.change;
            labels.push_back(std::move(lj));
        }
        j["labels"] = labels;
    }
    if (!rec.passthrough_turns.empty()) {
        auto turns = nlohmann::json::array();
        for (const auto& t : rec.passthrough_turns)
            turns.push_back({{"role", t.role}, {"text", t.text}});
        j["conversations"] = turns;
    }
    return j;
}

nlohmann::json scene_to_json(const SceneRecord& rec) {
    nlohmann::json j = scene_to_interchange_json(rec);
    j["source"] = to_string(rec.source);
    j["order_index"] = rec.order_index;
    if (!rec.frame_transforms.empty()) {
        auto arr = nlohmann::json::array();
        for (const auto& t : rec.frame_transforms)
            arr.push_back({{"src", {t.src_w, t.src_h}},
                           {"scale", t.scale},
                           {"offset", {t.dx, t.dy}},
                           {"dst", {t.dst_w, t.dst_h}}});
        j["frame_transforms"] = arr;
    }
    return j;
}

SceneRecord scene_from_json(const nlohmann::json& j) {
    SceneRecord rec =
        scene_from_interchange_json(j, source_kind_from_string(j.at("source").get<std::string>()));
    if (j.contains("order_index")) rec.order_index = j.at("order_index").get<std::vector<int>>();
    if (j.contains("frame_transforms")) {
        for (const auto& tj : j.at("frame_transforms")) {
            TileTransform t;
            t.src_w = tj.at("src").at(0).get<int>();
            t.src_h = tj.at("src").at(1).get<int>();
            t.scale = tj.at("scale").get<double>();
            t.dx = tj.at("offset").at(0).get<double>();
            t.dy = tj.at("offset").at(1).get<double>();
            t.dst_w = tj.at("dst").at(0).get<int>();
            t.dst_h = tj.at("dst").at(1).get<int>();
            rec.frame_transforms.push_back(t);
        }
    }
    return rec;
}

std::vector<int> tile_origins(int extent, int tile) {
    std::vector<int> origins;
    if (extent <= tile) return {0};
    for (int x = 0; x + tile <= extent; x += tile) origins.push_back(x);
    if (origins.back() + tile < extent) origins.push_back(extent - tile);
    return origins;
}

std::vector<SceneRecord> tile_scene(const SceneRecord& rec, int tile_size, IngestStats* stats) {
    auto xs = tile_origins(rec.width, tile_size);
    auto ys = tile_origins(rec.height, tile_size);
    int tw = std::min(rec.width, tile_size);
    int th = std::min(rec.height, tile_size);

    std::vector<SceneRecord> tiles;
    tiles.reserve(xs.size() * ys.size());
    char tile_id[64];
    for (size_t r = 0; r < ys.size(); ++r) {
        for (size_t c = 0; c < xs.size(); ++c) {
            TileTransform t = TileTransform::crop(rec.width, rec.height, xs[c], ys[r], tw, th);
            SceneRecord tile = rec;
            tile.labels.clear();
            std::snprintf(tile_id, sizeof(tile_id), "_r%02zu_c%02zu", r, c);
            tile.id = rec.id + tile_id;
            tile.width = tw;
            tile.height = th;
            BBox window{xs[c], ys[r], xs[c] + tw, ys[r] + th};
            for (auto& img : tile.images) img.crop = window;
            for (const auto& label : rec.labels) {
                auto clipped = transform_polygon(label.geometry, t);
                if (!clipped) {
                    if (stats) ++stats->dropped_labels;
                    continue;
                }
                GeoLabel moved = label;
                moved.geometry = std::move(*clipped);
                tile.labels.push_back(std::move(moved));
            }
            tiles.push_back(std::move(tile));
        }
    }
    return tiles;
}

SceneRecord normalize_frame(const SceneRecord& rec, int target) {
    SceneRecord out = rec;
    out.frame_transforms.clear();
    // every image of a (possibly tiled) scene shares the record extent;
    // box-cropped sequences use each image's own crop window extent
    TileTransform record_t = TileTransform::shorter_side_center_crop(
        rec.width > 0 ? rec.width : target, rec.height > 0 ? rec.height : target, target);
    for (const auto& img : rec.images) {
        if (img.crop) {
            TileTransform t = TileTransform::shorter_side_center_crop(
                static_cast<int>(img.crop->width()), static_cast<int>(img.crop->height()), target);
            out.frame_transforms.push_back(t);
        } else {
            out.frame_transforms.push_back(record_t);
        }
    }
    out.labels.clear();
    for (const auto& label : rec.labels) {
        auto moved = transform_polygon(label.geometry, record_t);
        if (!moved) continue;
        GeoLabel l = label;
        l.geometry = std::move(*moved);
        out.labels.push_back(std::move(l));
    }
    out.width = target;
    out.height = target;
    return out;
}

namespace {

bool images_present(const SceneRecord& rec, const std::filesystem::path& dir) {
    for (const auto& img : rec.images)
        if (!std::filesystem::exists(dir / img.path)) return false;
    return true;
}

}  // namespace

std::vector<SceneRecord> ingest_source(const SourceDescriptor& desc, IngestStats* stats) {
    std::filesystem::path dir = desc.root / desc.split;
    if (!std::filesystem::is_directory(dir))
        throw std::runtime_error("source directory not found: " + dir.string());

    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<SceneRecord> out;
    for (const auto& file : files) {
        std::ifstream in(file);
        nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) throw std::runtime_error("malformed label file: " + file.string());

        SceneRecord scene;
        try {
            scene = scene_from_interchange_json(j, desc.kind);
            scene.validate();
        } catch (const std::exception& e) {
            throw std::runtime_error("malformed label file " + file.string() + ": " + e.what());
        }
        if (stats) ++stats->scenes;
        if (!images_present(scene, dir)) {
            if (stats) ++stats->skipped_missing_images;
            continue;
        }
        // carry paths relative to the source dir so downstream stages can
        // resolve them uniformly
        for (auto& img : scene.images) img.path = (dir / img.path).lexically_normal().string();

        switch (desc.kind) {
            case SourceKind::xbd:
            case SourceKind::s2looking:
            case SourceKind::qfabric: {
                for (auto& tile : tile_scene(scene, 256, stats)) {
                    if (desc.kind == SourceKind::qfabric && tile.labels.empty()) {
                        if (stats) ++stats->dropped_empty_tiles;
                        continue;
                    }
                    out.push_back(normalize_frame(tile, 224));
                }
                break;
            }
            case SourceKind::fmow_rgb:
            case SourceKind::fmow_sentinel:
                out.push_back(normalize_frame(scene, 224));
                break;
            case SourceKind::single_image_corpus:
                out.push_back(std::move(scene));
                break;
        }
    }
    std::sort(out.begin(), out.end(),
              [](const SceneRecord& a, const SceneRecord& b) { return a.id < b.id; });
    for (const auto& rec : out) rec.validate();
    if (stats) stats->records += out.size();
    return out;
}

}  // namespace teo
