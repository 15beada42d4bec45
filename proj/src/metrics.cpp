#include "teo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace teo {

void PixelConfusion::add(const Mask& pred, const Mask& gt) {
    if (!pred.same_extent(gt)) throw std::invalid_argument("PixelConfusion: extent mismatch");
    int k = num_classes();
    for (size_t i = 0; i < gt.labels.size(); ++i) {
        int p = pred.labels[i];
        int g = gt.labels[i];
        if (p >= k || g >= k) throw std::invalid_argument("PixelConfusion: label out of range");
        if (p == g) {
            if (p != 0) ++tp[p];
        } else {
            if (p != 0) ++fp[p];
            if (g != 0) ++fn[g];
        }
    }
}

PixelConfusion& PixelConfusion::operator+=(const PixelConfusion& other) {
    if (other.num_classes() != num_classes())
        throw std::invalid_argument("PixelConfusion: class count mismatch");
    for (int c = 0; c < num_classes(); ++c) {
        tp[c] += other.tp[c];
        fp[c] += other.fp[c];
        fn[c] += other.fn[c];
    }
    return *this;
}

double PixelConfusion::f1(int cls) const {
    uint64_t denom = 2 * tp[cls] + fp[cls] + fn[cls];
    if (denom == 0) return 1.0;
    return 2.0 * static_cast<double>(tp[cls]) / static_cast<double>(denom);
}

double PixelConfusion::binary_f1() const { return f1(1); }

double PixelConfusion::weighted_f1() const {
    uint64_t total_weight = 0;
    double acc = 0.0;
    for (int c = 1; c < num_classes(); ++c) {
        uint64_t w = gt_pixels(c);
        if (w == 0) continue;
        total_weight += w;
        acc += static_cast<double>(w) * f1(c);
    }
    if (total_weight == 0) return empty() ? 1.0 : 0.0;
    return acc / static_cast<double>(total_weight);
}

bool PixelConfusion::empty() const {
    for (int c = 0; c < num_classes(); ++c)
        if (tp[c] || fp[c] || fn[c]) return false;
    return true;
}

double pixel_f1(const Mask& pred, const Mask& gt) {
    if (!pred.same_extent(gt)) throw std::invalid_argument("pixel_f1: extent mismatch");
    uint64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < gt.labels.size(); ++i) {
        bool p = pred.labels[i] != 0;
        bool g = gt.labels[i] != 0;
        tp += p && g;
        fp += p && !g;
        fn += !p && g;
    }
    uint64_t denom = 2 * tp + fp + fn;
    if (denom == 0) return 1.0;  // both empty: a correct no-change prediction
    return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

std::optional<double> class_weighted_f1(const Mask& pred, const Mask& gt, int num_classes) {
    if (!pred.same_extent(gt)) throw std::invalid_argument("class_weighted_f1: extent mismatch");
    if (gt.foreground_count() == 0) return std::nullopt;  // unscorable
    PixelConfusion conf(num_classes);
    conf.add(pred, gt);
    return conf.weighted_f1();
}

void ConfusionAccumulator::add_example(const Mask& pred, const Mask& gt) {
    ++examples_;
    bool gt_empty = gt.foreground_count() == 0;
    if (gt_empty && pred.foreground_count() == 0) return;  // zero counts by design
    if (gt_empty) ++unscorable_;
    total_.add(pred, gt);
}

ConfusionAccumulator& ConfusionAccumulator::operator+=(const ConfusionAccumulator& other) {
    total_ += other.total_;
    examples_ += other.examples_;
    unscorable_ += other.unscorable_;
    return *this;
}

double accuracy(const std::vector<std::string>& preds, const std::vector<std::string>& gts) {
    if (preds.size() != gts.size()) throw std::invalid_argument("accuracy: length mismatch");
    if (preds.empty()) throw std::invalid_argument("accuracy: empty input");
    size_t hits = 0;
    for (size_t i = 0; i < preds.size(); ++i) hits += preds[i] == gts[i];
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double acc_at_iou(const std::vector<std::optional<BBox>>& preds, const std::vector<BBox>& gts,
                  double threshold) {
    if (preds.size() != gts.size()) throw std::invalid_argument("acc_at_iou: length mismatch");
    if (preds.empty()) throw std::invalid_argument("acc_at_iou: empty input");
    size_t hits = 0;
    for (size_t i = 0; i < preds.size(); ++i)
        if (preds[i] && preds[i]->iou(gts[i]) >= threshold) ++hits;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

namespace {

Mask rasterize_classified(const Polygon& poly, int cls, int w, int h, int mask_classes) {
    if (cls < 0) return Mask::zeros(w, h, mask_classes);  // no usable prediction
    return rasterize({{poly, static_cast<uint8_t>(cls + 1)}}, w, h, mask_classes);
}

}  // namespace

double classified_polygon_f1(const std::vector<ClassifiedPolygon>& examples, int num_classes,
                             PixelConfusion* out_confusion) {
    int mask_classes = num_classes + 1;  // shift: label = class index + 1
    PixelConfusion total(mask_classes);
    for (const auto& ex : examples) {
        Mask gt = rasterize_classified(ex.polygon, ex.gt_class, ex.width, ex.height, mask_classes);
        Mask pred =
            rasterize_classified(ex.polygon, ex.pred_class, ex.width, ex.height, mask_classes);
        total.add(pred, gt);
    }
    if (out_confusion) *out_confusion = total;
    return total.weighted_f1();
}

double qfabric_protocol(const std::vector<ClassifiedPolygon>& examples, int window,
                        int num_classes) {
    if (window != 2 && window != 5)
        throw std::invalid_argument("qfabric_protocol: window must be 2 or 5");
    if (window == 2) return classified_polygon_f1(examples, num_classes);

    int mask_classes = num_classes + 1;
    double sum = 0.0;
    int scored_timesteps = 0;
    for (int t = 0; t < 5; ++t) {
        PixelConfusion conf(mask_classes);
        bool any = false;
        for (const auto& ex : examples) {
            if (t >= static_cast<int>(ex.gt_status.size()) || ex.gt_status[t] < 0) continue;
            int pred = t < static_cast<int>(ex.pred_status.size()) ? ex.pred_status[t] : -1;
            Mask gt = rasterize_classified(ex.polygon, ex.gt_status[t], ex.width, ex.height,
                                           mask_classes);
            Mask pr = rasterize_classified(ex.polygon, pred, ex.width, ex.height, mask_classes);
            conf.add(pr, gt);
            any = true;
        }
        if (any) {
            sum += conf.weighted_f1();
            ++scored_timesteps;
        }
    }
    return scored_timesteps > 0 ? sum / scored_timesteps : 0.0;
}

int task_category_rank(const std::string& task) {
    if (task == "tsc") return 0;
    if (task == "cd_loc" || task == "cd_dmg" || task == "cd_det") return 1;
    if (task == "sre") return 2;
    if (task == "qa") return 3;
    if (task == "rqa") return 4;
    if (task == "tre") return 5;
    if (task == "rtqa") return 6;
    if (task == "grounding") return 7;
    return 8;
}

namespace {

const char* category_label(const std::string& task) {
    switch (task_category_rank(task)) {
        case 0: return "TSC";
        case 1: return "CD";
        case 2: return "SRE";
        case 3: return "QA";
        case 4: return "RQA";
        case 5: return "TRE";
        case 6: return "RTQA";
        case 7: return "Grounding";
        default: return "Other";
    }
}

std::string format_value(const MetricReport& r) {
    if (r.count == 0) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", r.value * 100.0);
    return buf;
}

}  // namespace

std::string render_report_table(const std::vector<MetricReport>& reports) {
    std::vector<const MetricReport*> rows;
    rows.reserve(reports.size());
    for (const auto& r : reports) rows.push_back(&r);
    std::stable_sort(rows.begin(), rows.end(), [](const MetricReport* a, const MetricReport* b) {
        return task_category_rank(a->task) < task_category_rank(b->task);
    });

    std::vector<std::array<std::string, 5>> cells;
    cells.push_back({"Task", "Dataset/Subtask", "Metric", "Value", "N"});
    for (const auto* r : rows)
        cells.push_back({category_label(r->task), r->dataset, r->metric, format_value(*r),
                         std::to_string(r->count)});

    std::array<size_t, 5> widths{};
    for (const auto& row : cells)
        for (size_t c = 0; c < 5; ++c) widths[c] = std::max(widths[c], row[c].size());

    std::ostringstream out;
    for (size_t i = 0; i < cells.size(); ++i) {
        for (size_t c = 0; c < 5; ++c) {
            out << cells[i][c];
            if (c + 1 < 5) out << std::string(widths[c] - cells[i][c].size() + 2, ' ');
        }
        out << '\n';
        if (i == 0) {
            size_t total = 0;
            for (size_t c = 0; c < 5; ++c) total += widths[c] + (c + 1 < 5 ? 2 : 0);
            out << std::string(total, '-') << '\n';
        }
    }
    return out.str();
}

}  // namespace teo
