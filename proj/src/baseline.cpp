#include "teo/baseline.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace teo {

nlohmann::json per_image_prediction_to_json(const PerImagePrediction& p) {
    nlohmann::json j;
    j["id"] = p.id;
    j["image_index"] = p.image_index;
    if (!p.boxes.empty()) {
        auto arr = nlohmann::json::array();
        for (const auto& b : p.boxes)
            arr.push_back(nlohmann::json::array({b.x_min, b.y_min, b.x_max, b.y_max}));
        j["boxes"] = arr;
        if (!p.box_classes.empty()) j["box_classes"] = p.box_classes;
    }
    if (!p.cls.empty()) j["class"] = p.cls;
    if (!p.answer.empty()) j["answer"] = p.answer;
    return j;
}

PerImagePrediction per_image_prediction_from_json(const nlohmann::json& j) {
    PerImagePrediction p;
    p.id = j.at("id").get<std::string>();
    p.image_index = j.value("image_index", 1);
    if (j.contains("boxes"))
        for (const auto& b : j.at("boxes"))
            p.boxes.push_back(
                {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()});
    if (j.contains("box_classes"))
        p.box_classes = j.at("box_classes").get<std::vector<std::string>>();
    p.cls = j.value("class", "");
    p.answer = j.value("answer", "");
    return p;
}

std::string majority_vote(const std::vector<std::string>& per_image_classes) {
    if (per_image_classes.empty()) throw std::invalid_argument("majority_vote: empty input");
    std::map<std::string, size_t> counts;
    for (const auto& c : per_image_classes) ++counts[c];
    size_t best = 0;
    for (const auto& [_, n] : counts) best = std::max(best, n);
    // earliest first-occurrence among the modal classes
    for (const auto& c : per_image_classes)
        if (counts[c] == best) return c;
    return per_image_classes.front();
}

Mask detection_diff(const std::vector<BBox>& preds_t1, const std::vector<BBox>& preds_t2,
                    int width, int height, bool overlap_masking) {
    std::vector<Shape> s1, s2;
    for (const auto& b : preds_t1) s1.push_back({b, 1});
    for (const auto& b : preds_t2) s2.push_back({b, 1});
    Mask m1 = rasterize(s1, width, height);
    Mask m2 = rasterize(s2, width, height);
    if (!overlap_masking) return mask_diff(m1, m2);
    OverlapBoxes overlap{preds_t1, preds_t2};
    return mask_diff(m1, m2, &overlap);
}

std::pair<Mask, Mask> constructed_destructed_split(const std::vector<BBox>& preds_t1,
                                                   const std::vector<BBox>& preds_t2, int width,
                                                   int height) {
    std::vector<Shape> s1, s2;
    for (const auto& b : preds_t1) s1.push_back({b, 1});
    for (const auto& b : preds_t2) s2.push_back({b, 1});
    Mask m1 = rasterize(s1, width, height);
    Mask m2 = rasterize(s2, width, height);
    Mask destructed = Mask::zeros(width, height);
    Mask constructed = Mask::zeros(width, height);
    for (size_t i = 0; i < m1.labels.size(); ++i) {
        destructed.labels[i] = m1.labels[i] && !m2.labels[i] ? 1 : 0;
        constructed.labels[i] = m2.labels[i] && !m1.labels[i] ? 1 : 0;
    }
    return {destructed, constructed};
}

namespace {

std::vector<BBox> clip_to_region(const std::vector<BBox>& boxes, const BBox& region) {
    std::vector<BBox> out;
    for (const auto& b : boxes)
        if (auto inter = b.intersection(region)) out.push_back(*inter);
    return out;
}

bool any_unmatched(const std::vector<BBox>& side, const std::vector<BBox>& other) {
    for (const auto& b : side) {
        bool matched = false;
        for (const auto& o : other)
            if (b.intersects(o)) {
                matched = true;
                break;
            }
        if (!matched) return true;
    }
    return false;
}

}  // namespace

bool change_qa_from_detections(const std::vector<BBox>& preds_t1,
                               const std::vector<BBox>& preds_t2,
                               const std::optional<BBox>& region) {
    std::vector<BBox> t1 = region ? clip_to_region(preds_t1, *region) : preds_t1;
    std::vector<BBox> t2 = region ? clip_to_region(preds_t2, *region) : preds_t2;
    return any_unmatched(t1, t2) || any_unmatched(t2, t1);
}

std::vector<std::vector<PerImagePrediction>> group_per_image(
    std::vector<PerImagePrediction> preds) {
    std::stable_sort(preds.begin(), preds.end(),
                     [](const PerImagePrediction& a, const PerImagePrediction& b) {
                         return a.id != b.id ? a.id < b.id : a.image_index < b.image_index;
                     });
    std::vector<std::vector<PerImagePrediction>> groups;
    for (auto& p : preds) {
        if (groups.empty() || groups.back().front().id != p.id) groups.emplace_back();
        groups.back().push_back(std::move(p));
    }
    return groups;
}

}  // namespace teo
