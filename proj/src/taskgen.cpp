#include "teo/taskgen.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <thread>

#include "teo/respond.hpp"
#include "teo/rng.hpp"
#include "teo/vocab.hpp"

namespace teo {

namespace {

std::string bank_key(SourceKind source, TaskTag task, const std::string& variant) {
    return to_string(source) + "/" + to_string(task) + "/" + variant;
}

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

std::string render_box_token(const BBox& b) {
    return "[" + std::to_string(b.x_min) + ", " + std::to_string(b.y_min) + ", " +
           std::to_string(b.x_max) + ", " + std::to_string(b.y_max) + "]";
}

std::string render_box_list(const std::vector<BBox>& boxes) {
    std::string out;
    for (size_t i = 0; i < boxes.size(); ++i) {
        if (i) out += ", ";
        out += render_box_token(boxes[i]);
    }
    return out;
}

std::string join_options(const std::vector<std::string>& options) {
    std::string out;
    for (size_t i = 0; i < options.size(); ++i) {
        if (i) out += ", ";
        out += options[i];
    }
    return out;
}

std::string with_article(const std::string& noun) {
    if (noun.empty()) return noun;
    switch (std::tolower(static_cast<unsigned char>(noun[0]))) {
        case 'a': case 'e': case 'i': case 'o': case 'u': return "an " + noun;
        default: return "a " + noun;
    }
}

std::string capitalize(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

const char* ordinal_word(int n) {
    static const char* words[] = {"first", "second", "third", "fourth",
                                  "fifth", "sixth",  "seventh", "eighth"};
    return n >= 1 && n <= 8 ? words[n - 1] : "later";
}

std::string post_class(const GeoLabel& label) {
    return label.classes_per_timestep.empty() ? std::string() : label.classes_per_timestep.back();
}

bool is_damaged(const GeoLabel& label) {
    std::string c = post_class(label);
    return !c.empty() && c != "No damage";
}

std::vector<std::string> severity_filter_classes(const std::string& filter) {
    if (filter == "damaged") return {"Minor Damage", "Major Damage", "Destroyed"};
    if (filter == "severely damaged or destroyed") return {"Major Damage", "Destroyed"};
    if (filter == "destroyed") return {"Destroyed"};
    return {};
}

bool matches_severity_filter(const GeoLabel& label, const std::string& filter) {
    auto classes = severity_filter_classes(filter);
    return std::find(classes.begin(), classes.end(), post_class(label)) != classes.end();
}

// Cell of the 3x3 grid a pixel falls in, row-major 0..8.
int cell_of_pixel(int x, int y, int w, int h) { return (3 * y / h) * 3 + (3 * x / w); }

// Grid cell holding the most damaged pixels; ties resolve row-major.
std::string most_affected_cell(const SceneRecord& rec) {
    std::vector<Shape> shapes;
    for (const auto& label : rec.labels)
        if (is_damaged(label)) shapes.push_back({label.geometry, 1});
    Mask m = rasterize(shapes, rec.width, rec.height);
    long long counts[9] = {0};
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(x, y)) ++counts[cell_of_pixel(x, y, m.width, m.height)];
    int best = 0;
    for (int i = 1; i < 9; ++i)
        if (counts[i] > counts[best]) best = i;
    return grid_cell_names()[best];
}

BBox random_region(std::mt19937_64& rng, int w, int h) {
    int bw = uniform_int(rng, std::max(16, w / 5), std::max(17, (3 * w) / 4));
    int bh = uniform_int(rng, std::max(16, h / 5), std::max(17, (3 * h) / 4));
    bw = std::min(bw, w);
    bh = std::min(bh, h);
    int x0 = uniform_int(rng, 0, w - bw);
    int y0 = uniform_int(rng, 0, h - bh);
    return BBox{x0, y0, x0 + bw, y0 + bh};
}

std::optional<BBox> label_box(const GeoLabel& label) { return min_aabb(label.geometry); }

bool label_in_region(const GeoLabel& label, const BBox& region) {
    auto box = label_box(label);
    return box && box->intersects(region);
}

}  // namespace

// ---------------------------------------------------------------------------
// Template bank

void TemplateBank::add(SourceKind source, TaskTag task, const std::string& variant, Template t) {
    templates_[bank_key(source, task, variant)].push_back(std::move(t));
}

const std::vector<Template>& TemplateBank::get(SourceKind source, TaskTag task,
                                               const std::string& variant) const {
    auto it = templates_.find(bank_key(source, task, variant));
    if (it == templates_.end())
        throw std::invalid_argument("no templates for " + bank_key(source, task, variant));
    return it->second;
}

std::vector<std::string> TemplateBank::variants(SourceKind source, TaskTag task) const {
    std::string prefix = to_string(source) + "/" + to_string(task) + "/";
    std::vector<std::string> out;
    for (const auto& [key, _] : templates_)
        if (key.rfind(prefix, 0) == 0) out.push_back(key.substr(prefix.size()));
    return out;
}

bool TemplateBank::has(SourceKind source, TaskTag task) const {
    return !variants(source, task).empty();
}

TemplateBank build_standard_bank() {
    TemplateBank bank;
    auto add = [&](SourceKind s, TaskTag t, const std::string& v, const std::string& instr,
                   const std::string& answer, bool verbatim = false) {
        bank.add(s, t, v, Template{instr, answer, verbatim});
    };

    // ---- building damage (bitemporal pairs) ----
    add(SourceKind::xbd, TaskTag::cd_loc, "localize_all",
        "Identify all the buildings in the image.", "{boxes}.", true);
    add(SourceKind::xbd, TaskTag::cd_loc, "localize_all",
        "Detect every building in the image.", "{boxes}.");
    add(SourceKind::xbd, TaskTag::cd_loc, "localize_all",
        "Locate all buildings present in the image.", "{boxes}.");

    add(SourceKind::xbd, TaskTag::cd_dmg, "classify_box",
        "Classify the level of damage experienced by the building at location {box} in the "
        "second image. Choose from: {options}.",
        "{class}.", true);
    add(SourceKind::xbd, TaskTag::cd_dmg, "classify_box",
        "What level of damage has the building at {box} sustained in the second image? "
        "Choose from: {options}.",
        "{class}.");

    add(SourceKind::xbd, TaskTag::sre, "filter_image",
        "Identify the {filter} buildings in the image.", "{boxes}.", true);
    add(SourceKind::xbd, TaskTag::sre, "filter_region",
        "Identify the {filter} buildings in this area {box}.", "{boxes}.", true);
    add(SourceKind::xbd, TaskTag::sre, "filter_section",
        "Identify the {filter} buildings in the {section} of the image.",
        "The {filter} buildings in the {section} of the image are located at {boxes}.", true);

    add(SourceKind::xbd, TaskTag::qa, "disaster_type", "What disaster has occurred here?",
        "{A_disaster}.", true);
    add(SourceKind::xbd, TaskTag::qa, "disaster_type",
        "What type of disaster has taken place in this area?", "{A_disaster}.");
    add(SourceKind::xbd, TaskTag::qa, "most_affected_cell",
        "Which part of the image was most affected by the disaster?",
        "The {cell} of the image was most affected by the disaster.", true);
    add(SourceKind::xbd, TaskTag::qa, "count_destroyed",
        "How many buildings in the image have been destroyed?", "{count}.", true);
    add(SourceKind::xbd, TaskTag::qa, "any_damaged",
        "Are there any damaged buildings in the image?", "{yn}.", true);

    add(SourceKind::xbd, TaskTag::rqa, "any_damaged_region",
        "Are there any damaged buildings in this region {box}?", "{yn}.", true);
    add(SourceKind::xbd, TaskTag::rqa, "damage_severity_region",
        "How severe is the damage to this building {box}?", "{severity}.", true);

    add(SourceKind::xbd, TaskTag::region_caption, "building_change_caption",
        "How has this building {box} changed?", "The given building has {sev}.", true);
    for (const char* a : {"This building has {sev}.",
                          "The building at the given location has {sev}.",
                          "The building in this region has {sev}.",
                          "Between the two images, the building has {sev}.",
                          "After the disaster, the building has {sev}.",
                          "The highlighted building has {sev}.",
                          "Following the event, this building has {sev}."})
        add(SourceKind::xbd, TaskTag::region_caption, "building_change_caption",
            "How has this building {box} changed?", a);

    add(SourceKind::xbd, TaskTag::detailed_desc, "disaster_description",
        "Describe how the buildings have changed.",
        "There has been {a_disaster} that has damaged multiple buildings in the area.", true);
    for (const char* a :
         {"{A_disaster} has struck this area, damaging several buildings.",
          "The area has been hit by {a_disaster}, and a number of buildings are damaged.",
          "Several buildings in the region show damage caused by {a_disaster}.",
          "{A_disaster} has caused damage to buildings across the area.",
          "Buildings across the scene have been damaged by {a_disaster}.",
          "The imagery shows {a_disaster} that has damaged buildings in this area.",
          "Damage from {a_disaster} is visible on multiple buildings in the region."})
        add(SourceKind::xbd, TaskTag::detailed_desc, "disaster_description",
            "Describe how the buildings have changed.", a);

    add(SourceKind::xbd, TaskTag::grounded_desc, "grounded_disaster_description",
        "Describe how the buildings have changed. Include bounding boxes.",
        "There has been {a_disaster} that has damaged buildings at the locations {boxes}.", true);
    for (const char* a :
         {"{A_disaster} has damaged the buildings located at {boxes}.",
          "Damage from {a_disaster} is visible at {boxes}.",
          "{A_disaster} struck the area; the affected buildings are at {boxes}.",
          "The buildings at {boxes} have been damaged by {a_disaster}.",
          "Following {a_disaster}, damage can be seen at {boxes}.",
          "{A_disaster} has affected this area, with damaged buildings at {boxes}.",
          "The imagery shows buildings damaged by {a_disaster} at {boxes}."})
        add(SourceKind::xbd, TaskTag::grounded_desc, "grounded_disaster_description",
            "Describe how the buildings have changed. Include bounding boxes.", a);

    // ---- building change (bitemporal pairs) ----
    add(SourceKind::s2looking, TaskTag::cd_det, "localize_changed",
        "Identify all changed buildings.", "{boxes}.", true);
    add(SourceKind::s2looking, TaskTag::cd_det, "localize_changed",
        "Identify all the buildings that have changed between the two images.", "{boxes}.");
    add(SourceKind::s2looking, TaskTag::cd_det, "localize_changed",
        "Detect every building that was constructed or demolished.", "{boxes}.");

    add(SourceKind::s2looking, TaskTag::sre, "change_filter",
        "Identify the {filter} buildings in the image.", "{boxes}.", true);
    add(SourceKind::s2looking, TaskTag::sre, "change_filter",
        "Locate all {filter} buildings.", "{boxes}.");
    add(SourceKind::s2looking, TaskTag::sre, "largest_change",
        "What is the largest building that experienced a change?", "{box}.", true);

    add(SourceKind::s2looking, TaskTag::qa, "any_constructed",
        "Have any buildings been constructed in the area? Please answer with Yes or No.",
        "{yn}.", true);
    add(SourceKind::s2looking, TaskTag::qa, "any_demolished",
        "Have any buildings been demolished in the area? Please answer with Yes or No.",
        "{yn}.");
    add(SourceKind::s2looking, TaskTag::qa, "count_changed",
        "How many buildings in the image have been built or destroyed?", "{count}.", true);

    add(SourceKind::s2looking, TaskTag::rqa, "region_changed",
        "Has the area {box} changed? Please answer with Yes or No.", "{yn}.", true);

    add(SourceKind::s2looking, TaskTag::region_caption, "area_change_caption",
        "Describe how the buildings have changed in this area: {box}.", "{Summary} in this area.",
        true);
    for (const char* a : {"In the given region, {summary}.", "Within this area, {summary}.",
                          "{Summary} between the two images.",
                          "Over the observed period, {summary}.",
                          "Comparing the two images, {summary}.",
                          "In the region of interest, {summary}.",
                          "Across this area, {summary}."})
        add(SourceKind::s2looking, TaskTag::region_caption, "area_change_caption",
            "Describe how the buildings have changed in this area: {box}.", a);

    add(SourceKind::s2looking, TaskTag::detailed_desc, "change_description",
        "Provide a detailed description of the buildings that have changed.",
        "{Summary} in this area.", true);
    for (const char* a : {"Between the two images, {summary}.",
                          "Comparing both acquisitions, {summary}.",
                          "Over the observed period, {summary}.",
                          "Looking across the sequence, {summary}.",
                          "In this scene, {summary}.", "Across the imaged area, {summary}.",
                          "According to the imagery, {summary}."})
        add(SourceKind::s2looking, TaskTag::detailed_desc, "change_description",
            "Provide a detailed description of the buildings that have changed.", a);

    add(SourceKind::s2looking, TaskTag::grounded_desc, "grounded_change_description",
        "Provide a detailed description of the buildings that have changed. Include bounding "
        "boxes in your output.",
        "{Summary}: {boxes}.", true);
    for (const char* a : {"{Summary}. The changed buildings are located at {boxes}.",
                          "{Summary}. Their locations are {boxes}.",
                          "Changed buildings are visible at {boxes}. {Summary}.",
                          "{Summary}, located at {boxes}.",
                          "Between the two images, {summary}. The changes are at {boxes}.",
                          "{Summary}. See {boxes}.",
                          "The changes are at {boxes}. {Summary}."})
        add(SourceKind::s2looking, TaskTag::grounded_desc, "grounded_change_description",
            "Provide a detailed description of the buildings that have changed. Include "
            "bounding boxes in your output.",
            a);

    // ---- urban change (5-image sequences) ----
    add(SourceKind::qfabric, TaskTag::rqa, "urban_dev_region",
        "Has there been urban development in this area {box}?", "{yn}.", true);
    add(SourceKind::qfabric, TaskTag::rqa, "change_type_region",
        "Identify the type of urban development that has occurred in this area {box}. "
        "Choose from: {options}.",
        "{class}.", true);

    add(SourceKind::qfabric, TaskTag::tre, "status_visible",
        "In which images is {class} visible in this region {box}?", "{refs}", true);
    add(SourceKind::qfabric, TaskTag::tre, "status_visible",
        "Identify all images in which {class} is visible in this region {box}.", "{refs}");

    add(SourceKind::qfabric, TaskTag::rtqa, "dev_between",
        "Has there been urban development in this area {box} between image {n} and image {m}?",
        "{yn}.", true);
    add(SourceKind::qfabric, TaskTag::rtqa, "status_at",
        "What is the development status in this region {box} in image {n}? Choose from: "
        "{options}.",
        "{class}.", true);

    add(SourceKind::qfabric, TaskTag::region_caption, "region_dev_caption",
        "How has the area {box} changed as a result of urban development?",
        "This region was {first} at first, and then became {last}.", true);
    for (const char* a : {"The area began as {first} and ended as {last}.",
                          "Initially {first}, the area has become {last}.",
                          "Over the sequence, this region changed from {first} to {last}.",
                          "The region transitioned from {first} to {last}.",
                          "What was once {first} is now {last}.",
                          "This area developed from {first} into {last}.",
                          "Urban development turned this region from {first} into {last}."})
        add(SourceKind::qfabric, TaskTag::region_caption, "region_dev_caption",
            "How has the area {box} changed as a result of urban development?", a);
    add(SourceKind::qfabric, TaskTag::region_caption, "temporal_caption",
        "How has the area {box} changed due to urban development from image {n} to image {m}?",
        "Between the {n_word} and {m_word} images, this area was {first} at first, and then "
        "became {last}.",
        true);
    for (const char* a :
         {"From the {n_word} to the {m_word} image, the region changed from {first} to {last}.",
          "Between the {n_word} and {m_word} images, the area went from {first} to {last}.",
          "Across the {n_word} through {m_word} images, this region turned from {first} into "
          "{last}.",
          "Comparing the {n_word} and {m_word} images, what was {first} became {last}.",
          "Over the {n_word} to {m_word} images, the area developed from {first} into {last}.",
          "By the {m_word} image, the region that was {first} in the {n_word} image had become "
          "{last}.",
          "The area was {first} in the {n_word} image and {last} by the {m_word} image."})
        add(SourceKind::qfabric, TaskTag::region_caption, "temporal_caption",
            "How has the area {box} changed due to urban development from image {n} to image "
            "{m}?",
            a);

    // ---- scene classification sequences ----
    add(SourceKind::fmow_rgb, TaskTag::tsc, "sequence_class",
        "What class does this sequence of images belong to? Choose from: {options}.",
        "{class}.", true);
    add(SourceKind::fmow_rgb, TaskTag::tsc, "sequence_class",
        "Classify this sequence of satellite images. Choose from: {options}.", "{class}.");
    add(SourceKind::fmow_sentinel, TaskTag::tsc, "sequence_class",
        "What class does this sequence of images belong to? Choose from: {options}.",
        "{class}.", true);
    add(SourceKind::fmow_sentinel, TaskTag::tsc, "sequence_class",
        "Classify this sequence of satellite images. Choose from: {options}.", "{class}.");

    return bank;
}

const TemplateBank& TemplateBank::standard() {
    static const TemplateBank bank = build_standard_bank();
    return bank;
}

// ---------------------------------------------------------------------------
// Sequence sampling

SceneRecord sample_sequence(const SceneRecord& record, int max_images, uint64_t seed,
                            double subseq_prob) {
    int n = static_cast<int>(record.images.size());
    auto rng = record_rng(seed, record.id, /*stream=*/4);

    int target = n;
    bool urban = record.source == SourceKind::qfabric;
    if (urban && n >= 3 && subseq_prob > 0.0 && bernoulli(rng, subseq_prob))
        target = uniform_int(rng, 2, std::min(n, max_images));
    else if (n > max_images)
        target = max_images;
    if (target == n) return record;

    // selection sampling: uniform subset, chronological order preserved
    std::vector<int> keep;
    int needed = target;
    for (int i = 0; i < n && needed > 0; ++i) {
        if (uniform_u64(rng, static_cast<uint64_t>(n - i)) < static_cast<uint64_t>(needed)) {
            keep.push_back(i);
            --needed;
        }
    }

    SceneRecord out = record;
    out.images.clear();
    out.order_index.clear();
    out.frame_transforms.clear();
    for (int i : keep) {
        out.images.push_back(record.images[i]);
        out.order_index.push_back(record.order_index[i]);
        if (i < static_cast<int>(record.frame_transforms.size()))
            out.frame_transforms.push_back(record.frame_transforms[i]);
    }
    out.labels.clear();
    for (const auto& label : record.labels) {
        GeoLabel l = label;
        if (!l.classes_per_timestep.empty()) {
            std::vector<std::string> subset;
            for (int i : keep) subset.push_back(label.classes_per_timestep[i]);
            l.classes_per_timestep = std::move(subset);
        }
        out.labels.push_back(std::move(l));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Eligibility

std::vector<TaskTag> eligible_tasks(const SceneRecord& record) {
    std::vector<TaskTag> out;
    bool has_labels = !record.labels.empty();
    bool any_damaged =
        std::any_of(record.labels.begin(), record.labels.end(),
                    [](const GeoLabel& l) { return is_damaged(l); });
    switch (record.source) {
        case SourceKind::xbd:
            out.push_back(TaskTag::cd_loc);
            if (has_labels) out.push_back(TaskTag::cd_dmg);
            out.push_back(TaskTag::sre);
            out.push_back(TaskTag::qa);
            out.push_back(TaskTag::rqa);
            if (has_labels) out.push_back(TaskTag::region_caption);
            if (!record.disaster_type.empty() && any_damaged) {
                out.push_back(TaskTag::detailed_desc);
                out.push_back(TaskTag::grounded_desc);
            }
            break;
        case SourceKind::s2looking:
            out.push_back(TaskTag::cd_det);
            out.push_back(TaskTag::sre);
            out.push_back(TaskTag::qa);
            out.push_back(TaskTag::rqa);
            out.push_back(TaskTag::region_caption);
            out.push_back(TaskTag::detailed_desc);
            if (has_labels) out.push_back(TaskTag::grounded_desc);
            break;
        case SourceKind::qfabric: {
            bool per_timestep = std::any_of(
                record.labels.begin(), record.labels.end(),
                [](const GeoLabel& l) { return !l.classes_per_timestep.empty(); });
            bool sequence = std::any_of(
                record.labels.begin(), record.labels.end(),
                [](const GeoLabel& l) { return !l.sequence_class.empty(); });
            if (has_labels) out.push_back(TaskTag::rqa);
            if (per_timestep) out.push_back(TaskTag::tre);
            if (per_timestep && record.images.size() >= 2) out.push_back(TaskTag::rtqa);
            if (per_timestep || sequence) out.push_back(TaskTag::region_caption);
            break;
        }
        case SourceKind::fmow_rgb:
        case SourceKind::fmow_sentinel:
            if (!record.sequence_class.empty()) out.push_back(TaskTag::tsc);
            break;
        case SourceKind::single_image_corpus:
            if (!record.passthrough_turns.empty())
                out.push_back(TaskTag::single_image_passthrough);
            break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prompt construction

namespace {

const char* kBoxRequestSentence =
    "Please include bounding boxes of the form [x_min, y_min, x_max, y_max] in your response.";

std::string system_prompt(const SceneRecord& rec, std::mt19937_64& rng, double metadata_prob) {
    std::string s =
        "A chat between a curious user and an artificial intelligence assistant. The assistant "
        "gives helpful, detailed, and polite answers to the user's questions. This is a "
        "sequence of ";
    if (!rec.resolution.empty() && bernoulli(rng, metadata_prob))
        s += rec.resolution + " resolution ";
    s += "satellite images";
    if (!rec.sensor.empty() && bernoulli(rng, metadata_prob)) s += " from " + rec.sensor;
    s += ": ";
    for (size_t i = 0; i < rec.images.size(); ++i) {
        if (i) s += " ";
        s += "Image " + std::to_string(i + 1) + ": " + kImagePlaceholder;
    }
    s += ".";
    return s;
}

std::string severity_phrase(const std::string& damage_class) {
    if (damage_class == "No damage") return "no damage";
    if (damage_class == "Minor Damage") return "minor damage";
    if (damage_class == "Major Damage") return "major damage";
    if (damage_class == "Destroyed") return "been destroyed";
    return damage_class;
}

// "3 buildings have been constructed and 1 building has been demolished"
std::string change_summary(size_t constructed, size_t demolished) {
    auto phrase = [](size_t n, const char* kind) {
        std::string count = std::to_string(n);
        return n == 1 ? count + " building has been " + kind
                      : count + " buildings have been " + kind;
    };
    if (constructed == 0 && demolished == 0) return "no buildings have changed";
    if (constructed > 0 && demolished > 0)
        return phrase(constructed, "constructed") + " and " + phrase(demolished, "demolished");
    return constructed > 0 ? phrase(constructed, "constructed")
                           : phrase(demolished, "demolished");
}

struct Slots {
    std::map<std::string, std::string> values;
    void set(const std::string& key, const std::string& value) { values["{" + key + "}"] = value; }
    std::string fill(std::string text) const {
        for (const auto& [k, v] : values) text = replace_all(text, k, v);
        return text;
    }
};

const std::string& require_field(const SceneRecord& rec, const std::string& value,
                                 const char* field, TaskTag task) {
    if (value.empty())
        throw std::invalid_argument("record '" + rec.id + "' lacks " + field + " required by " +
                                    to_string(task));
    return value;
}

size_t pick_label(std::mt19937_64& rng, const SceneRecord& rec, TaskTag task) {
    if (rec.labels.empty())
        throw std::invalid_argument("record '" + rec.id + "' lacks labels required by " +
                                    to_string(task));
    return uniform_u64(rng, rec.labels.size());
}

}  // namespace

ConversationRecord build_prompt(const SceneRecord& record, TaskTag task,
                                const TaskgenOptions& opts) {
    ConversationRecord conv;
    conv.id = record.id + "__" + to_string(task);
    conv.scene_id = record.id;
    conv.task = task;
    conv.source = to_string(record.source);
    conv.sensor = record.sensor;
    conv.resolution = record.resolution;
    conv.seed = opts.seed;
    for (const auto& img : record.images) conv.images.push_back(img.path);
    if (conv.images.size() > 8)
        throw std::invalid_argument("record '" + record.id + "' exceeds 8 images; sample first");

    if (task == TaskTag::single_image_passthrough) {
        if (record.passthrough_turns.empty())
            throw std::invalid_argument("record '" + record.id +
                                        "' lacks conversations required by " + to_string(task));
        // task tokens become short natural-language task specifications
        static const std::vector<std::pair<std::string, std::string>> token_map = {
            {"[grounding]", "Include bounding boxes in your response."},
            {"[refer]", "Respond with the bounding box of the object."},
            {"[identify]", "Answer with the name of the object."},
            {"[vqa]", "Answer the question briefly."},
        };
        for (const auto& turn : record.passthrough_turns) {
            Turn t = turn;
            if (t.role == "user") {
                std::string suffix;
                for (const auto& [token, sentence] : token_map) {
                    if (t.text.find(token) != std::string::npos) {
                        t.text = replace_all(t.text, token, "");
                        suffix = sentence;
                    }
                }
                // trim leftover space from token removal
                size_t a = t.text.find_first_not_of(" \t");
                t.text = a == std::string::npos ? "" : t.text.substr(a);
                if (!suffix.empty()) {
                    if (!t.text.empty() && t.text.back() != ' ') t.text += " ";
                    t.text += suffix;
                }
            }
            conv.turns.push_back(std::move(t));
        }
        // boxes of the final assistant turn back the grounding metric
        for (auto it = conv.turns.rbegin(); it != conv.turns.rend(); ++it) {
            if (it->role != "assistant") continue;
            auto parsed = parse_response(it->text);
            conv.expected.boxes = parsed.boxes;
            break;
        }
        conv.expected.variant = "passthrough";
        return conv;
    }

    auto rng = record_rng(opts.seed, record.id, /*stream=*/2);
    auto meta_rng = record_rng(opts.seed, record.id, /*stream=*/3);
    const TemplateBank& bank = TemplateBank::standard();

    auto variants = bank.variants(record.source, task);
    if (variants.empty())
        throw std::invalid_argument("no templates for task " + to_string(task) + " on source " +
                                    to_string(record.source));

    // Variant-level eligibility, then a uniform draw.
    auto variant_ok = [&](const std::string& v) {
        if (record.source == SourceKind::xbd) {
            if (task == TaskTag::qa && v == "disaster_type") return !record.disaster_type.empty();
            if (task == TaskTag::qa && v == "most_affected_cell")
                return std::any_of(record.labels.begin(), record.labels.end(), is_damaged);
            if (task == TaskTag::cd_dmg || task == TaskTag::region_caption ||
                (task == TaskTag::rqa && v == "damage_severity_region"))
                return !record.labels.empty();
        }
        if (record.source == SourceKind::s2looking) {
            if (task == TaskTag::sre && v == "largest_change") return !record.labels.empty();
            if (task == TaskTag::grounded_desc) return !record.labels.empty();
        }
        if (record.source == SourceKind::qfabric) {
            bool per_timestep = std::any_of(
                record.labels.begin(), record.labels.end(),
                [](const GeoLabel& l) { return !l.classes_per_timestep.empty(); });
            if (task == TaskTag::tre || (task == TaskTag::rtqa)) return per_timestep;
            if (task == TaskTag::region_caption) return per_timestep;
            if (task == TaskTag::rqa && v == "change_type_region")
                return std::any_of(record.labels.begin(), record.labels.end(),
                                   [](const GeoLabel& l) { return !l.sequence_class.empty(); });
            return !record.labels.empty();
        }
        return true;
    };
    std::vector<std::string> usable;
    for (const auto& v : variants)
        if (variant_ok(v)) usable.push_back(v);
    if (usable.empty())
        throw std::invalid_argument("record '" + record.id + "' lacks labels required by " +
                                    to_string(task));
    const std::string variant = usable[uniform_u64(rng, usable.size())];
    const auto& templates = bank.get(record.source, task, variant);
    const Template& tmpl = templates[uniform_u64(rng, templates.size())];

    Slots slots;
    ExpectedAnswer& exp = conv.expected;
    exp.variant = variant;
    int n_images = static_cast<int>(record.images.size());

    // Fill slots and structured ground truth per variant.
    if (task == TaskTag::tsc) {
        require_field(record, record.sequence_class, "sequence_class", task);
        conv.class_options = scene_classes();
        slots.set("options", join_options(conv.class_options));
        slots.set("class", record.sequence_class);
        exp.classes = {record.sequence_class};
    } else if (task == TaskTag::cd_loc || task == TaskTag::cd_det) {
        std::vector<BBox> boxes;
        for (const auto& label : record.labels)
            if (auto b = label_box(label)) boxes.push_back(*b);
        exp.boxes = boxes;
        slots.set("boxes", render_box_list(boxes));
    } else if (task == TaskTag::cd_dmg) {
        size_t idx = pick_label(rng, record, task);
        const GeoLabel& label = record.labels[idx];
        require_field(record, post_class(label), "classes_per_timestep", task);
        auto box = label_box(label);
        if (!box)
            throw std::invalid_argument("record '" + record.id + "' label geometry degenerate");
        conv.class_options = damage_classes();
        slots.set("box", render_box_token(*box));
        slots.set("options", join_options(conv.class_options));
        slots.set("class", post_class(label));
        exp.classes = {post_class(label)};
        exp.label_index = static_cast<int>(idx);
    } else if (task == TaskTag::sre && record.source == SourceKind::xbd) {
        static const std::vector<std::string> filters = {"damaged",
                                                         "severely damaged or destroyed",
                                                         "destroyed"};
        const std::string& filter = filters[uniform_u64(rng, filters.size())];
        exp.filter_class = filter;
        slots.set("filter", filter);
        std::vector<BBox> boxes;
        if (variant == "filter_region") {
            BBox region = random_region(rng, record.width, record.height);
            slots.set("box", render_box_token(region));
            for (size_t i = 0; i < record.labels.size(); ++i) {
                const auto& label = record.labels[i];
                if (matches_severity_filter(label, filter) && label_in_region(label, region))
                    if (auto b = label_box(label)) {
                        boxes.push_back(*b);
                        exp.label_set.push_back(static_cast<int>(i));
                    }
            }
        } else if (variant == "filter_section") {
            const auto& cells = grid_cell_names();
            const std::string& section = cells[uniform_u64(rng, cells.size())];
            slots.set("section", section);
            exp.grid_cell = section;
            for (size_t i = 0; i < record.labels.size(); ++i) {
                const auto& label = record.labels[i];
                if (!matches_severity_filter(label, filter)) continue;
                auto b = label_box(label);
                if (!b) continue;
                int cx = (b->x_min + b->x_max) / 2;
                int cy = (b->y_min + b->y_max) / 2;
                if (grid_cell_names()[cell_of_pixel(cx, cy, record.width, record.height)] ==
                    section) {
                    boxes.push_back(*b);
                    exp.label_set.push_back(static_cast<int>(i));
                }
            }
        } else {
            for (size_t i = 0; i < record.labels.size(); ++i)
                if (matches_severity_filter(record.labels[i], filter))
                    if (auto b = label_box(record.labels[i])) {
                        boxes.push_back(*b);
                        exp.label_set.push_back(static_cast<int>(i));
                    }
        }
        exp.boxes = boxes;
        slots.set("boxes", render_box_list(boxes));
    } else if (task == TaskTag::sre && record.source == SourceKind::s2looking) {
        if (variant == "largest_change") {
            size_t best = 0;
            for (size_t i = 1; i < record.labels.size(); ++i)
                if (record.labels[i].geometry.area() > record.labels[best].geometry.area())
                    best = i;
            auto b = label_box(record.labels[best]);
            if (!b)
                throw std::invalid_argument("record '" + record.id +
                                            "' label geometry degenerate");
            exp.boxes = {*b};
            exp.label_index = static_cast<int>(best);
            exp.label_set = {static_cast<int>(best)};
            slots.set("box", render_box_token(*b));
        } else {
            const auto& kinds = change_kinds();
            const std::string& filter = kinds[uniform_u64(rng, kinds.size())];
            exp.filter_class = filter;
            slots.set("filter", filter);
            std::vector<BBox> boxes;
            for (size_t i = 0; i < record.labels.size(); ++i)
                if (record.labels[i].change == filter)
                    if (auto b = label_box(record.labels[i])) {
                        boxes.push_back(*b);
                        exp.label_set.push_back(static_cast<int>(i));
                    }
            exp.boxes = boxes;
            slots.set("boxes", render_box_list(boxes));
        }
    } else if (task == TaskTag::qa && record.source == SourceKind::xbd) {
        if (variant == "disaster_type") {
            require_field(record, record.disaster_type, "disaster_type", task);
            conv.class_options = disaster_types();
            slots.set("A_disaster", capitalize(with_article(record.disaster_type)));
            exp.classes = {record.disaster_type};
        } else if (variant == "most_affected_cell") {
            std::string cell = most_affected_cell(record);
            slots.set("cell", cell);
            exp.grid_cell = cell;
        } else if (variant == "count_destroyed") {
            int count = static_cast<int>(
                std::count_if(record.labels.begin(), record.labels.end(),
                              [](const GeoLabel& l) { return post_class(l) == "Destroyed"; }));
            slots.set("count", std::to_string(count));
            exp.count = count;
        } else {  // any_damaged
            bool yes = std::any_of(record.labels.begin(), record.labels.end(), is_damaged);
            slots.set("yn", yes ? "Yes" : "No");
            exp.polarity = yes ? "yes" : "no";
        }
    } else if (task == TaskTag::qa && record.source == SourceKind::s2looking) {
        if (variant == "count_changed") {
            int count = static_cast<int>(record.labels.size());
            slots.set("count", std::to_string(count));
            exp.count = count;
        } else {
            const std::string kind = variant == "any_constructed" ? "constructed" : "demolished";
            bool yes = std::any_of(record.labels.begin(), record.labels.end(),
                                   [&](const GeoLabel& l) { return l.change == kind; });
            slots.set("yn", yes ? "Yes" : "No");
            exp.polarity = yes ? "yes" : "no";
            exp.filter_class = kind;
        }
    } else if (task == TaskTag::rqa && record.source == SourceKind::xbd) {
        if (variant == "any_damaged_region") {
            BBox region = random_region(rng, record.width, record.height);
            slots.set("box", render_box_token(region));
            bool yes = std::any_of(
                record.labels.begin(), record.labels.end(), [&](const GeoLabel& l) {
                    return is_damaged(l) && label_in_region(l, region);
                });
            slots.set("yn", yes ? "Yes" : "No");
            exp.polarity = yes ? "yes" : "no";
        } else {  // damage_severity_region
            size_t idx = pick_label(rng, record, task);
            const GeoLabel& label = record.labels[idx];
            require_field(record, post_class(label), "classes_per_timestep", task);
            auto box = label_box(label);
            if (!box)
                throw std::invalid_argument("record '" + record.id +
                                            "' label geometry degenerate");
            conv.class_options = damage_classes();
            slots.set("box", render_box_token(*box));
            slots.set("severity", "The given building has " + severity_phrase(post_class(label)));
            exp.classes = {post_class(label)};
            exp.label_index = static_cast<int>(idx);
        }
    } else if (task == TaskTag::rqa && record.source == SourceKind::s2looking) {
        BBox region = random_region(rng, record.width, record.height);
        slots.set("box", render_box_token(region));
        bool yes = std::any_of(record.labels.begin(), record.labels.end(),
                               [&](const GeoLabel& l) { return label_in_region(l, region); });
        slots.set("yn", yes ? "Yes" : "No");
        exp.polarity = yes ? "yes" : "no";
    } else if (record.source == SourceKind::qfabric) {
        auto labels_with_status = [&]() {
            std::vector<size_t> out;
            for (size_t i = 0; i < record.labels.size(); ++i)
                if (record.labels[i].classes_per_timestep.size() ==
                    static_cast<size_t>(n_images))
                    out.push_back(i);
            return out;
        };
        if (task == TaskTag::rqa && variant == "urban_dev_region") {
            bool anchored = bernoulli(rng, 0.5) && !record.labels.empty();
            BBox region;
            if (anchored) {
                size_t idx = pick_label(rng, record, task);
                auto b = label_box(record.labels[idx]);
                region = b ? *b : random_region(rng, record.width, record.height);
            } else {
                region = random_region(rng, record.width, record.height);
            }
            slots.set("box", render_box_token(region));
            bool yes = std::any_of(record.labels.begin(), record.labels.end(),
                                   [&](const GeoLabel& l) { return label_in_region(l, region); });
            slots.set("yn", yes ? "Yes" : "No");
            exp.polarity = yes ? "yes" : "no";
        } else if (task == TaskTag::rqa) {  // change_type_region
            std::vector<size_t> candidates;
            for (size_t i = 0; i < record.labels.size(); ++i)
                if (!record.labels[i].sequence_class.empty()) candidates.push_back(i);
            if (candidates.empty())
                throw std::invalid_argument("record '" + record.id +
                                            "' lacks sequence_class required by rqa");
            size_t idx = candidates[uniform_u64(rng, candidates.size())];
            const GeoLabel& label = record.labels[idx];
            auto box = label_box(label);
            if (!box)
                throw std::invalid_argument("record '" + record.id +
                                            "' label geometry degenerate");
            conv.class_options = urban_change_types();
            slots.set("box", render_box_token(*box));
            slots.set("options", join_options(conv.class_options));
            slots.set("class", label.sequence_class);
            exp.classes = {label.sequence_class};
            exp.label_index = static_cast<int>(idx);
        } else if (task == TaskTag::tre) {
            auto candidates = labels_with_status();
            if (candidates.empty())
                throw std::invalid_argument("record '" + record.id +
                                            "' lacks classes_per_timestep required by tre");
            size_t idx = candidates[uniform_u64(rng, candidates.size())];
            const GeoLabel& label = record.labels[idx];
            auto box = label_box(label);
            if (!box)
                throw std::invalid_argument("record '" + record.id +
                                            "' label geometry degenerate");
            int t = uniform_int(rng, 0, n_images - 1);
            const std::string& cls = label.classes_per_timestep[t];
            std::vector<int> refs;
            std::string rendered;
            for (int i = 0; i < n_images; ++i) {
                if (label.classes_per_timestep[i] != cls) continue;
                if (!refs.empty()) rendered += ", ";
                rendered += "Image " + std::to_string(i + 1);
                refs.push_back(i + 1);
            }
            slots.set("class", cls);
            slots.set("box", render_box_token(*box));
            slots.set("refs", rendered);
            exp.image_refs = refs;
            exp.filter_class = cls;
            exp.label_index = static_cast<int>(idx);
        } else if (task == TaskTag::rtqa && variant == "dev_between") {
            auto candidates = labels_with_status();
            if (candidates.empty())
                throw std::invalid_argument("record '" + record.id +
                                            "' lacks classes_per_timestep required by rtqa");
            size_t idx = candidates[uniform_u64(rng, candidates.size())];
            const GeoLabel& label = record.labels[idx];
            auto box = label_box(label);
            if (!box)
                throw std::invalid_argument("record '" + record.id +
                                            "' label geometry degenerate");
            int n = uniform_int(rng, 1, n_images - 1);
            int m = uniform_int(rng, n + 1, n_images);
            bool yes = label.classes_per_timestep[n - 1] != label.classes_per_timestep[m - 1];
            slots.set("box", render_box_token(*box));
            slots.set("n", std::to_string(n));
            slots.set("m", std::to_string(m));
            slots.set("yn", yes ? "Yes" : "No");
            exp.polarity = yes ? "yes" : "no";
            exp.label_index = static_cast<int>(idx);
        } else if (task == TaskTag::rtqa) {  // status_at
            auto candidates = labels_with_status();
            if (candidates.empty())
                throw std::invalid_argument("record '" + record.id +
                                            "' lacks classes_per_timestep required by rtqa");
            size_t idx = candidates[uniform_u64(rng, candidates.size())];
            const GeoLabel& label = record.labels[idx];
            auto box = label_box(label);
            if (!box)
                throw std::invalid_argument("record '" + record.id +
                                            "' label geometry degenerate");
            int n = uniform_int(rng, 1, n_images);
            conv.class_options = urban_status_classes();
            slots.set("box", render_box_token(*box));
            slots.set("n", std::to_string(n));
            slots.set("options", join_options(conv.class_options));
            slots.set("class", label.classes_per_timestep[n - 1]);
            exp.classes = {label.classes_per_timestep[n - 1]};
            exp.label_index = static_cast<int>(idx);
            exp.timestep = n - 1;
        } else if (task == TaskTag::region_caption) {
            auto candidates = labels_with_status();
            if (candidates.empty())
                throw std::invalid_argument(
                    "record '" + record.id +
                    "' lacks classes_per_timestep required by region_caption");
            size_t idx = candidates[uniform_u64(rng, candidates.size())];
            const GeoLabel& label = record.labels[idx];
            auto box = label_box(label);
            if (!box)
                throw std::invalid_argument("record '" + record.id +
                                            "' label geometry degenerate");
            slots.set("box", render_box_token(*box));
            int n = 1, m = n_images;
            if (variant == "temporal_caption" && n_images >= 2) {
                n = uniform_int(rng, 1, n_images - 1);
                m = uniform_int(rng, n + 1, n_images);
            }
            auto lower = [](std::string s) {
                for (char& c : s)
                    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
                return s;
            };
            slots.set("n", std::to_string(n));
            slots.set("m", std::to_string(m));
            slots.set("n_word", ordinal_word(n));
            slots.set("m_word", ordinal_word(m));
            slots.set("first", lower(label.classes_per_timestep[n - 1]));
            slots.set("last", lower(label.classes_per_timestep[m - 1]));
            exp.label_index = static_cast<int>(idx);
        }
    }

    // building-change summaries and captions
    if (record.source == SourceKind::s2looking &&
        (task == TaskTag::region_caption || task == TaskTag::detailed_desc ||
         task == TaskTag::grounded_desc)) {
        std::vector<const GeoLabel*> in_scope;
        if (task == TaskTag::region_caption) {
            BBox region = random_region(rng, record.width, record.height);
            slots.set("box", render_box_token(region));
            for (const auto& label : record.labels)
                if (label_in_region(label, region)) in_scope.push_back(&label);
        } else {
            for (const auto& label : record.labels) in_scope.push_back(&label);
        }
        size_t constructed = 0, demolished = 0;
        std::vector<BBox> boxes;
        std::vector<std::string> kinds;
        for (const auto* label : in_scope) {
            if (label->change == "constructed") ++constructed;
            if (label->change == "demolished") ++demolished;
            if (auto b = label_box(*label)) boxes.push_back(*b);
        }
        if (constructed) kinds.push_back("constructed");
        if (demolished) kinds.push_back("demolished");
        std::string summary = change_summary(constructed, demolished);
        slots.set("summary", summary);
        slots.set("Summary", capitalize(summary));
        conv.class_options = change_kinds();
        exp.classes = kinds;
        if (task == TaskTag::grounded_desc) {
            exp.boxes = boxes;
            slots.set("boxes", render_box_list(boxes));
        }
    }
    // building-damage captions
    if (record.source == SourceKind::xbd &&
        (task == TaskTag::region_caption || task == TaskTag::detailed_desc ||
         task == TaskTag::grounded_desc)) {
        if (task == TaskTag::region_caption) {
            size_t idx = pick_label(rng, record, task);
            const GeoLabel& label = record.labels[idx];
            auto box = label_box(label);
            if (!box)
                throw std::invalid_argument("record '" + record.id +
                                            "' label geometry degenerate");
            conv.class_options = damage_classes();
            slots.set("box", render_box_token(*box));
            slots.set("sev", severity_phrase(post_class(label)));
            exp.classes = {post_class(label)};
            exp.label_index = static_cast<int>(idx);
        } else {
            require_field(record, record.disaster_type, "disaster_type", task);
            conv.class_options = disaster_types();
            slots.set("a_disaster", with_article(record.disaster_type));
            slots.set("A_disaster", capitalize(with_article(record.disaster_type)));
            exp.classes = {record.disaster_type};
            if (task == TaskTag::grounded_desc) {
                std::vector<BBox> boxes;
                for (const auto& label : record.labels)
                    if (is_damaged(label))
                        if (auto b = label_box(label)) boxes.push_back(*b);
                exp.boxes = boxes;
                slots.set("boxes", render_box_list(boxes));
            }
        }
    }

    // assemble the turns
    std::string instruction = slots.fill(tmpl.instruction);
    if (task_outputs_boxes(task)) instruction += std::string(" ") + kBoxRequestSentence;

    std::string answer;
    if (exp.boxes.empty() && tmpl.answer.find("{boxes}") != std::string::npos &&
        task != TaskTag::grounded_desc) {
        // empty-result sentence instead of a bare period
        std::string what = "buildings";
        if (!exp.filter_class.empty()) what = exp.filter_class + " buildings";
        if (task == TaskTag::cd_det) what = "changed buildings";
        if (exp.variant == "filter_region")
            answer = "There are no " + what + " in the given area.";
        else if (exp.variant == "filter_section")
            answer = "There are no " + what + " in the " + slots.values.at("{section}") +
                     " of the image.";
        else
            answer = "There are no " + what + " in the image.";
    } else {
        answer = slots.fill(tmpl.answer);
    }

    conv.turns.push_back({"user", system_prompt(record, meta_rng, opts.metadata_prob) + "\n" +
                                      instruction});
    conv.turns.push_back({"assistant", answer});
    return conv;
}

// ---------------------------------------------------------------------------
// Corpus emission

MixSpec MixSpec::parse(const std::string& text) {
    MixSpec mix;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t semi = text.find(';', pos);
        std::string group = text.substr(pos, semi == std::string::npos ? semi : semi - pos);
        pos = semi == std::string::npos ? text.size() : semi + 1;
        if (group.empty()) continue;
        size_t colon = group.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("mix spec group missing ':': " + group);
        std::string source = group.substr(0, colon);
        std::string rest = group.substr(colon + 1);
        size_t p = 0;
        while (p < rest.size()) {
            size_t comma = rest.find(',', p);
            std::string item = rest.substr(p, comma == std::string::npos ? comma : comma - p);
            p = comma == std::string::npos ? rest.size() : comma + 1;
            if (item.empty()) continue;
            size_t eq = item.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("mix spec item missing '=': " + item);
            double w = std::stod(item.substr(eq + 1));
            if (w < 0) throw std::invalid_argument("mix spec weight must be >= 0: " + item);
            mix.weights[source][item.substr(0, eq)] = w;
        }
    }
    return mix;
}

nlohmann::json CorpusManifest::to_json() const {
    nlohmann::json j;
    j["per_source"] = per_source;
    j["per_task"] = per_task;
    j["per_source_task"] = per_source_task;
    j["total"] = total;
    j["seed"] = seed;
    if (!tile_policy.empty()) j["tile_policy"] = tile_policy;
    return j;
}

namespace {

TaskTag draw_task(const SceneRecord& rec, const MixSpec& mix, std::mt19937_64& rng) {
    auto eligible = eligible_tasks(rec);
    if (eligible.empty())
        throw std::invalid_argument("record '" + rec.id + "' is not eligible for any task");

    std::vector<double> weights(eligible.size(), 1.0);
    auto source_it = mix.weights.find(to_string(rec.source));
    if (source_it != mix.weights.end()) {
        double total = 0.0;
        for (size_t i = 0; i < eligible.size(); ++i) {
            auto w = source_it->second.find(to_string(eligible[i]));
            weights[i] = w == source_it->second.end() ? 0.0 : w->second;
            total += weights[i];
        }
        if (total <= 0.0) std::fill(weights.begin(), weights.end(), 1.0);  // fallback: uniform
    }
    double total = 0.0;
    for (double w : weights) total += w;
    double r = uniform_real(rng) * total;
    for (size_t i = 0; i < eligible.size(); ++i) {
        r -= weights[i];
        if (r < 0) return eligible[i];
    }
    return eligible.back();
}

}  // namespace

std::vector<ConversationRecord> emit_corpus(const std::vector<SceneRecord>& records,
                                            const MixSpec& mix, const TaskgenOptions& opts,
                                            CorpusManifest* manifest) {
    if (records.empty()) throw std::invalid_argument("emit_corpus: empty source");

    std::vector<const SceneRecord*> sorted;
    sorted.reserve(records.size());
    for (const auto& r : records) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(),
              [](const SceneRecord* a, const SceneRecord* b) { return a->id < b->id; });

    std::vector<ConversationRecord> out(sorted.size());
    int workers = std::max(1, opts.workers);
    auto worker_fn = [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            const SceneRecord& rec = *sorted[i];
            auto task_rng = record_rng(opts.seed, rec.id, /*stream=*/1);
            TaskTag task = draw_task(rec, mix, task_rng);
            double subseq = rec.source == SourceKind::qfabric ? opts.subseq_prob : 0.0;
            SceneRecord sampled = sample_sequence(rec, opts.max_images, opts.seed, subseq);
            out[i] = build_prompt(sampled, task, opts);
        }
    };
    if (workers == 1) {
        worker_fn(0, sorted.size());
    } else {
        std::vector<std::thread> threads;
        size_t chunk = (sorted.size() + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            size_t begin = w * chunk;
            size_t end = std::min(sorted.size(), begin + chunk);
            if (begin >= end) break;
            threads.emplace_back(worker_fn, begin, end);
        }
        for (auto& t : threads) t.join();
    }

    if (manifest) {
        manifest->seed = opts.seed;
        for (const auto& conv : out) {
            ++manifest->per_source[conv.source];
            ++manifest->per_task[to_string(conv.task)];
            ++manifest->per_source_task[conv.source + "/" + to_string(conv.task)];
            ++manifest->total;
        }
    }
    return out;
}

}  // namespace teo
