#include "teo/conversation.hpp"

#include <stdexcept>

namespace teo {

std::string to_string(TaskTag tag) {
    switch (tag) {
        case TaskTag::tsc: return "tsc";
        case TaskTag::cd_loc: return "cd_loc";
        case TaskTag::cd_dmg: return "cd_dmg";
        case TaskTag::cd_det: return "cd_det";
        case TaskTag::sre: return "sre";
        case TaskTag::qa: return "qa";
        case TaskTag::rqa: return "rqa";
        case TaskTag::tre: return "tre";
        case TaskTag::rtqa: return "rtqa";
        case TaskTag::region_caption: return "region_caption";
        case TaskTag::detailed_desc: return "detailed_desc";
        case TaskTag::grounded_desc: return "grounded_desc";
        case TaskTag::single_image_passthrough: return "single_image_passthrough";
    }
    return "unknown";
}

TaskTag task_from_string(const std::string& s) {
    static const std::vector<TaskTag> all = {
        TaskTag::tsc,  TaskTag::cd_loc, TaskTag::cd_dmg, TaskTag::cd_det,
        TaskTag::sre,  TaskTag::qa,     TaskTag::rqa,    TaskTag::tre,
        TaskTag::rtqa, TaskTag::region_caption, TaskTag::detailed_desc,
        TaskTag::grounded_desc, TaskTag::single_image_passthrough};
    for (TaskTag t : all)
        if (to_string(t) == s) return t;
    throw std::invalid_argument("unknown task tag: " + s);
}

bool task_outputs_boxes(TaskTag tag) {
    return tag == TaskTag::cd_loc || tag == TaskTag::cd_det || tag == TaskTag::sre ||
           tag == TaskTag::grounded_desc;
}

const std::vector<std::string>& grid_cell_names() {
    static const std::vector<std::string> names = {
        "top left",    "top center",    "top right",   "center left", "center",
        "center right", "bottom left",  "bottom center", "bottom right"};
    return names;
}

namespace {

nlohmann::json box_to_json(const BBox& b) {
    return nlohmann::json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

BBox box_from_json(const nlohmann::json& j) {
    return BBox{j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

nlohmann::json expected_to_json(const ExpectedAnswer& e) {
    nlohmann::json j = nlohmann::json::object();
    j["variant"] = e.variant;
    if (!e.boxes.empty()) {
        auto arr = nlohmann::json::array();
        for (const auto& b : e.boxes) arr.push_back(box_to_json(b));
        j["boxes"] = arr;
    }
    if (!e.classes.empty()) j["classes"] = e.classes;
    if (!e.image_refs.empty()) j["image_refs"] = e.image_refs;
    if (!e.polarity.empty()) j["polarity"] = e.polarity;
    if (!e.grid_cell.empty()) j["grid_cell"] = e.grid_cell;
    if (e.count) j["count"] = *e.count;
    if (!e.filter_class.empty()) j["filter_class"] = e.filter_class;
    if (e.label_index >= 0) j["label_index"] = e.label_index;
    if (e.timestep >= 0) j["timestep"] = e.timestep;
    if (!e.label_set.empty()) j["label_set"] = e.label_set;
    return j;
}

ExpectedAnswer expected_from_json(const nlohmann::json& j) {
    ExpectedAnswer e;
    e.variant = j.value("variant", "");
    if (j.contains("boxes"))
        for (const auto& b : j.at("boxes")) e.boxes.push_back(box_from_json(b));
    if (j.contains("classes")) e.classes = j.at("classes").get<std::vector<std::string>>();
    if (j.contains("image_refs")) e.image_refs = j.at("image_refs").get<std::vector<int>>();
    e.polarity = j.value("polarity", "");
    e.grid_cell = j.value("grid_cell", "");
    if (j.contains("count")) e.count = j.at("count").get<int>();
    e.filter_class = j.value("filter_class", "");
    e.label_index = j.value("label_index", -1);
    e.timestep = j.value("timestep", -1);
    if (j.contains("label_set")) e.label_set = j.at("label_set").get<std::vector<int>>();
    return e;
}

}  // namespace

nlohmann::json conversation_to_json(const ConversationRecord& rec) {
    nlohmann::json j;
    j["id"] = rec.id;
    j["images"] = rec.images;
    auto turns = nlohmann::json::array();
    for (const auto& t : rec.turns) turns.push_back({{"role", t.role}, {"text", t.text}});
    j["conversations"] = turns;
    j["task"] = to_string(rec.task);
    nlohmann::json meta = nlohmann::json::object();
    meta["scene_id"] = rec.scene_id;
    meta["source"] = rec.source;
    meta["seed"] = rec.seed;
    if (!rec.sensor.empty()) meta["sensor"] = rec.sensor;
    if (!rec.resolution.empty()) meta["resolution"] = rec.resolution;
    if (!rec.class_options.empty()) meta["class_options"] = rec.class_options;
    meta["eval"] = expected_to_json(rec.expected);
    j["meta"] = meta;
    return j;
}

ConversationRecord conversation_from_json(const nlohmann::json& j) {
    ConversationRecord rec;
    rec.id = j.at("id").get<std::string>();
    rec.images = j.at("images").get<std::vector<std::string>>();
    for (const auto& t : j.at("conversations"))
        rec.turns.push_back({t.at("role").get<std::string>(), t.at("text").get<std::string>()});
    rec.task = task_from_string(j.at("task").get<std::string>());
    const auto& meta = j.at("meta");
    rec.scene_id = meta.value("scene_id", "");
    rec.source = meta.value("source", "");
    rec.seed = meta.value("seed", uint64_t{0});
    rec.sensor = meta.value("sensor", "");
    rec.resolution = meta.value("resolution", "");
    if (meta.contains("class_options"))
        rec.class_options = meta.at("class_options").get<std::vector<std::string>>();
    if (meta.contains("eval")) rec.expected = expected_from_json(meta.at("eval"));
    return rec;
}

}  // namespace teo
