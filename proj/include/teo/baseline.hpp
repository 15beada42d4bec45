#pragma once

#include <optional>
#include <string>
#include <vector>

#include "teo/geom.hpp"
#include "teo/respond.hpp"

#include <json.hpp>

namespace teo {

/// One single-image prediction from any per-image model, keyed to a
/// corpus record and a position in its sequence.
struct PerImagePrediction {
    std::string id;       // conversation record id
    int image_index = 1;  // 1-based position in the record's sequence
    std::vector<BBox> boxes;
    std::vector<std::string> box_classes;  // optional, parallel to boxes
    std::string cls;                       // scalar classification
    std::string answer;                    // free-text answer
};

nlohmann::json per_image_prediction_to_json(const PerImagePrediction& p);
PerImagePrediction per_image_prediction_from_json(const nlohmann::json& j);

/// Modal class across the sequence; ties resolve to the class whose first
/// occurrence comes earliest. Throws std::invalid_argument on empty input.
std::string majority_vote(const std::vector<std::string>& per_image_classes);

/// Binary change mask from two per-image detection sets: rasterize each
/// side, take the symmetric difference, and mask out every box pair that
/// overlaps across the two images (any positive intersection).
Mask detection_diff(const std::vector<BBox>& preds_t1, const std::vector<BBox>& preds_t2,
                    int width, int height, bool overlap_masking = true);

/// (destructed, constructed): pixels detected in the first image but not
/// the second, and the inverse.
std::pair<Mask, Mask> constructed_destructed_split(const std::vector<BBox>& preds_t1,
                                                   const std::vector<BBox>& preds_t2, int width,
                                                   int height);

/// Change judgment from detections: yes iff some box on either side has
/// zero intersection with every box on the other side. The region variant
/// first intersects all boxes with the query box.
bool change_qa_from_detections(const std::vector<BBox>& preds_t1,
                               const std::vector<BBox>& preds_t2,
                               const std::optional<BBox>& region = std::nullopt);

/// Group raw per-image predictions by record id (sorted by image index
/// within a record).
std::vector<std::vector<PerImagePrediction>> group_per_image(
    std::vector<PerImagePrediction> preds);

}  // namespace teo
