#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "teo/conversation.hpp"
#include "teo/geom.hpp"

#include <json.hpp>

namespace teo {

enum class SourceKind {
    xbd,                  // building damage: bitemporal 1024x1024 pairs, tiled
    s2looking,            // building change: bitemporal 1024x1024 pairs, tiled
    qfabric,              // urban change: 5-image large scenes, tiled, empty tiles dropped
    fmow_rgb,             // scene classification: variable-length sequences, box-cropped
    fmow_sentinel,
    single_image_corpus,  // existing single-image instruction corpus, passed through
};

std::string to_string(SourceKind kind);
SourceKind source_kind_from_string(const std::string& s);

struct SourceDescriptor {
    SourceKind kind = SourceKind::xbd;
    std::filesystem::path root;
    std::string split = "train";
};

/// One annotated object. At least one of the label fields is present;
/// classes_per_timestep matches the sequence length when present.
struct GeoLabel {
    Polygon geometry;
    std::vector<std::string> classes_per_timestep;
    std::string sequence_class;
    std::string change;  // "constructed" | "demolished" | ""
};

struct ImageRef {
    std::string path;
    std::optional<BBox> crop;  // crop window in the stored image's frame
    bool operator==(const ImageRef&) const = default;
};

/// One normalized example: an ordered image sequence plus labels, expressed
/// in the current working frame (source scene, tile, or 224x224 after
/// normalize_frame).
struct SceneRecord {
    std::string id;
    SourceKind source = SourceKind::xbd;
    std::vector<ImageRef> images;
    std::vector<int> order_index;  // strictly increasing chronological ranks
    std::vector<GeoLabel> labels;
    std::string sequence_class;
    std::string sensor;
    std::string resolution;     // "high" | "low" | ""
    std::string disaster_type;  // damage schema only
    int width = 0;
    int height = 0;
    std::vector<TileTransform> frame_transforms;  // provenance, one per image
    std::vector<Turn> passthrough_turns;          // single-image corpus only

    /// Throws std::runtime_error naming the violated invariant.
    void validate() const;
};

struct IngestStats {
    size_t scenes = 0;
    size_t records = 0;
    size_t skipped_missing_images = 0;
    size_t dropped_empty_tiles = 0;
    size_t dropped_labels = 0;  // clipped-away or sub-threshold geometry
    std::string tile_policy = "edge_anchored";
};

/// Interchange label schema, one JSON file per scene (see docs/formats.md):
/// {id, images: [path | {path, crop}], width, height, sensor?, resolution?,
///  disaster_type?, sequence_class?,
///  labels: [{polygon: [[x, y], ...], holes?, classes_per_timestep?,
///            sequence_class?, change?}]}
SceneRecord scene_from_interchange_json(const nlohmann::json& j, SourceKind kind);
nlohmann::json scene_to_interchange_json(const SceneRecord& rec);

/// Manifest serialization (JSONL of SceneRecords); round-trips bit-exactly.
nlohmann::json scene_to_json(const SceneRecord& rec);
SceneRecord scene_from_json(const nlohmann::json& j);

/// Tile origin offsets along one axis: a full grid of `tile`-sized windows,
/// with a final window anchored to the far edge (overlapping its neighbor)
/// when the extent does not divide evenly.
std::vector<int> tile_origins(int extent, int tile);

/// Split a source-frame record into tile-frame records. Labels are clipped
/// (Sutherland-Hodgman) and re-expressed per tile; slivers fall to the drop
/// policy. Scene classification records are never tiled.
std::vector<SceneRecord> tile_scene(const SceneRecord& rec, int tile_size = 256,
                                    IngestStats* stats = nullptr);

/// Re-express a record in the target frame (shorter side scaled to
/// `target`, then center crop). The per-image transforms are recorded on
/// the result for provenance.
SceneRecord normalize_frame(const SceneRecord& rec, int target = 224);

/// Read, validate, tile, and normalize every scene of a source. Yields
/// per-tile records for the tiled schemas, per-sequence records otherwise,
/// sorted by record id. Malformed label files raise with file and label
/// index; scenes referencing missing images are skipped with a counter.
std::vector<SceneRecord> ingest_source(const SourceDescriptor& desc,
                                       IngestStats* stats = nullptr);

}  // namespace teo
