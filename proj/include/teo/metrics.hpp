#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "teo/geom.hpp"

namespace teo {

/// Per-class pixel confusion counts. Index 0 (background) is carried but
/// never scored; F1 is computed over foreground classes only. Merging is
/// associative and commutative, so dataset aggregation can tree-reduce.
struct PixelConfusion {
    std::vector<uint64_t> tp, fp, fn;

    explicit PixelConfusion(int num_classes = 2)
        : tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0) {}

    int num_classes() const { return static_cast<int>(tp.size()); }
    void add(const Mask& pred, const Mask& gt);
    PixelConfusion& operator+=(const PixelConfusion& other);

    double f1(int cls) const;
    /// Micro binary F1 (class 1). 1.0 when no counts at all.
    double binary_f1() const;
    /// Per-class F1 weighted by ground-truth pixel frequency (tp + fn);
    /// classes absent from the ground truth carry zero weight.
    double weighted_f1() const;
    uint64_t gt_pixels(int cls) const { return tp[cls] + fn[cls]; }
    bool empty() const;
};

/// Per-example binary F1: 2TP / (2TP + FP + FN). A pair of empty masks
/// scores 1.0 (a correct "no change" prediction is not penalized).
/// Throws std::invalid_argument on extent mismatch.
double pixel_f1(const Mask& pred, const Mask& gt);

/// Per-example class-weighted F1 over k classes. Ground truth with no
/// foreground is unscorable: returns nullopt (excluded from aggregation).
std::optional<double> class_weighted_f1(const Mask& pred, const Mask& gt, int num_classes);

/// Micro aggregation for mask metrics: pixel counts are summed across the
/// dataset before the final ratio. Both-empty pairs contribute zero counts.
class ConfusionAccumulator {
public:
    explicit ConfusionAccumulator(int num_classes = 2) : total_(num_classes) {}
    void add_example(const Mask& pred, const Mask& gt);
    ConfusionAccumulator& operator+=(const ConfusionAccumulator& other);
    double micro_f1() const { return total_.binary_f1(); }
    double micro_weighted_f1() const { return total_.weighted_f1(); }
    const PixelConfusion& confusion() const { return total_; }
    size_t examples() const { return examples_; }
    size_t unscorable() const { return unscorable_; }

private:
    PixelConfusion total_;
    size_t examples_ = 0;
    size_t unscorable_ = 0;
};

/// Exact-match fraction over canonicalized labels.
/// Throws std::invalid_argument on length mismatch or empty input.
double accuracy(const std::vector<std::string>& preds, const std::vector<std::string>& gts);

/// Fraction of referring queries whose (first) predicted box reaches the
/// IoU threshold against its ground-truth box. A missing prediction is a
/// failure, not an error.
double acc_at_iou(const std::vector<std::optional<BBox>>& preds, const std::vector<BBox>& gts,
                  double threshold = 0.5);

/// One scored polygon for the urban-change protocol: the ground-truth
/// polygon painted with the predicted vs. true class. `gt_class`/`pred_class`
/// drive the 2-image (sequence-level change type) variant; the `*_status`
/// vectors drive the 5-image (per-timestep change status) variant, where a
/// negative timestep entry means "not asked".
struct ClassifiedPolygon {
    Polygon polygon;
    int width = 0;
    int height = 0;
    int gt_class = -1;
    int pred_class = -1;
    std::vector<int> gt_status;
    std::vector<int> pred_status;
};

/// Class-weighted per-pixel F1 over classified polygons, as used for damage
/// classification: each polygon is rasterized once with its true class and
/// once with its predicted class, counts are accumulated over the whole
/// split, and per-class F1 is weighted by ground-truth pixel frequency.
double classified_polygon_f1(const std::vector<ClassifiedPolygon>& examples, int num_classes,
                             PixelConfusion* out_confusion = nullptr);

/// Urban-change scoring protocol. window == 2 scores the sequence-level
/// change-type label; window == 5 scores per-timestep change-status labels
/// and averages the per-timestep F1 unweighted over timesteps that have
/// any data. Throws std::invalid_argument for any other window.
double qfabric_protocol(const std::vector<ClassifiedPolygon>& examples, int window,
                        int num_classes);

/// One reported score. Values are fractions in [0, 1]; rendering converts
/// to percentages.
struct MetricReport {
    std::string task;     // tsc | cd_loc | cd_dmg | cd_det | sre | qa | rqa | tre | rtqa | ...
    std::string dataset;  // table row label, e.g. "xBD Loc."
    std::string metric;   // "F1" | "Acc" | "Acc@0.5"
    double value = 0.0;
    size_t count = 0;
    std::map<std::string, double> per_class;
    std::map<std::string, std::string> notes;
};

/// Aligned text table grouped and ordered by task category
/// (TSC, CD, SRE, QA, RQA, TRE, RTQA, then anything else). Rows without a
/// value render "-".
std::string render_report_table(const std::vector<MetricReport>& reports);

/// Stable category order used by the table; exposed for report sorting.
int task_category_rank(const std::string& task);

}  // namespace teo
