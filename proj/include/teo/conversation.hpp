#pragma once

#include <optional>
#include <string>
#include <vector>

#include "teo/geom.hpp"

#include <json.hpp>

namespace teo {

enum class TaskTag {
    tsc,
    cd_loc,
    cd_dmg,
    cd_det,
    sre,
    qa,
    rqa,
    tre,
    rtqa,
    region_caption,
    detailed_desc,
    grounded_desc,
    single_image_passthrough,
};

std::string to_string(TaskTag tag);
TaskTag task_from_string(const std::string& s);

/// Tasks whose answers must contain bounding boxes (the prompt carries the
/// box-format request sentence for these).
bool task_outputs_boxes(TaskTag tag);

struct Turn {
    std::string role;  // "user" | "assistant"
    std::string text;
};

/// Structured ground truth behind a rendered answer; what evaluation
/// compares against after parsing a model response.
struct ExpectedAnswer {
    std::vector<BBox> boxes;
    std::vector<std::string> classes;
    std::vector<int> image_refs;   // 1-based, into the emitted sequence
    std::string polarity;          // "yes" | "no" | ""
    std::string grid_cell;         // "" or one of the nine 3x3 cell names
    std::optional<int> count;
    std::string variant;           // question variant id, e.g. "disaster_type"
    std::string filter_class;      // referring-expression filter, when any
    int label_index = -1;          // scene label the question is about
    int timestep = -1;             // 0-based timestep the question is about
    std::vector<int> label_set;    // scene labels a referring expression selects

    bool operator==(const ExpectedAnswer&) const = default;
};

/// One emitted instruction-following example.
struct ConversationRecord {
    std::string id;
    std::string scene_id;
    std::vector<std::string> images;  // <= 8 paths, chronological
    TaskTag task = TaskTag::qa;
    std::vector<Turn> turns;          // alternating user/assistant
    std::string sensor;               // optional metadata
    std::string resolution;           // optional: "high" | "low"
    std::string source;               // source kind string
    uint64_t seed = 0;
    ExpectedAnswer expected;
    std::vector<std::string> class_options;  // option list shown in the prompt
};

nlohmann::json conversation_to_json(const ConversationRecord& rec);
ConversationRecord conversation_from_json(const nlohmann::json& j);

/// The reserved placeholder standing in for one image's visual tokens.
inline constexpr const char* kImagePlaceholder = "<image>";

/// Names of the 3x3 grid cells in row-major order.
const std::vector<std::string>& grid_cell_names();

}  // namespace teo
