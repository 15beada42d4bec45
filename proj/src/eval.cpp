#include "teo/eval.hpp"

#include <algorithm>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "teo/vocab.hpp"

namespace teo {

namespace {

bool same_set(std::vector<int> a, std::vector<int> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}

int class_index(const std::string& cls, const std::vector<std::string>& options) {
    for (size_t i = 0; i < options.size(); ++i)
        if (options[i] == cls) return static_cast<int>(i);
    return -1;
}

}  // namespace

bool answer_matches(const ParsedResponse& parsed, const ExpectedAnswer& expected) {
    if (!expected.polarity.empty() && parsed.polarity != expected.polarity) return false;
    if (!expected.grid_cell.empty() && parsed.grid_cell != expected.grid_cell) return false;
    if (expected.count && (!parsed.count || *parsed.count != *expected.count)) return false;
    if (!expected.image_refs.empty() && !same_set(parsed.image_refs, expected.image_refs))
        return false;
    if (!expected.classes.empty()) {
        if (expected.classes.size() == 1) {
            if (parsed.classes.empty() || parsed.classes.front() != expected.classes.front())
                return false;
        } else {
            for (const auto& cls : expected.classes)
                if (std::find(parsed.classes.begin(), parsed.classes.end(), cls) ==
                    parsed.classes.end())
                    return false;
        }
    }
    return true;
}

nlohmann::json CoverageStats::to_json() const {
    return {{"predictions", predictions},
            {"matched", matched},
            {"unmatched_predictions", unmatched_predictions},
            {"records_without_prediction", records_without_prediction},
            {"parse_diagnostics", parse_diagnostics},
            {"unscored", unscored}};
}

nlohmann::json EvalResult::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : reports) {
        nlohmann::json j = {{"task", r.task},   {"dataset", r.dataset}, {"metric", r.metric},
                            {"value", r.value}, {"count", r.count}};
        if (!r.per_class.empty()) j["per_class"] = r.per_class;
        if (!r.notes.empty()) j["notes"] = r.notes;
        arr.push_back(std::move(j));
    }
    return {{"reports", arr}, {"coverage", coverage.to_json()}};
}

namespace {

// Accumulator per (task, dataset, metric) bucket. Counts merge
// associatively so worker partials can be folded in any split.
struct BucketAgg {
    size_t correct = 0;
    size_t total = 0;
    ConfusionAccumulator masks{2};
    std::vector<ClassifiedPolygon> polys;
    size_t iou_hits = 0;

    void merge(BucketAgg&& other) {
        correct += other.correct;
        total += other.total;
        masks += other.masks;
        polys.insert(polys.end(), std::make_move_iterator(other.polys.begin()),
                     std::make_move_iterator(other.polys.end()));
        iou_hits += other.iou_hits;
    }
};

struct BucketKey {
    std::string task, dataset, metric;
    bool operator<(const BucketKey& o) const {
        return std::tie(task, dataset, metric) < std::tie(o.task, o.dataset, o.metric);
    }
};

using AggMap = std::map<BucketKey, BucketAgg>;

struct RecordScorer {
    const std::unordered_map<std::string, const SceneRecord*>& scenes;
    bool collect_examples = false;
    AggMap aggs;
    size_t parse_diagnostics = 0;
    size_t unscored = 0;
    std::vector<ExampleScore> examples;

    void note_example(const ConversationRecord& conv, const char* metric, double value) {
        if (collect_examples)
            examples.push_back({conv.id, to_string(conv.task), metric, value});
    }

    const SceneRecord* scene_of(const ConversationRecord& conv) {
        auto it = scenes.find(conv.scene_id);
        return it == scenes.end() ? nullptr : it->second;
    }

    Mask pred_mask_from(const ParsedResponse& parsed, const Prediction& pred, int w, int h) {
        if (pred.change_mask && pred.change_mask->width == w && pred.change_mask->height == h)
            return *pred.change_mask;
        std::vector<Shape> shapes;
        for (const auto& b : parsed.boxes) shapes.push_back({b, 1});
        return rasterize(shapes, w, h);
    }

    // all_labels: localization ground truth is every label; referring
    // expressions use exactly the recorded label set (possibly empty).
    Mask gt_mask_from(const SceneRecord& scene, const std::vector<int>& label_set,
                      bool all_labels) {
        std::vector<Shape> shapes;
        if (all_labels) {
            for (const auto& label : scene.labels) shapes.push_back({label.geometry, 1});
        } else {
            for (int i : label_set)
                shapes.push_back({scene.labels[static_cast<size_t>(i)].geometry, 1});
        }
        return rasterize(shapes, scene.width, scene.height);
    }

    void score(const ConversationRecord& conv, const Prediction& pred) {
        ParseContext ctx{conv.task, conv.class_options, static_cast<int>(conv.images.size())};
        ParsedResponse parsed = parse_response(pred.response_text, ctx);
        parse_diagnostics += parsed.diagnostics.size();

        // classification-only tasks score the class; stray boxes are
        // ignored but counted as a diagnostic
        bool classification_only =
            conv.task == TaskTag::tsc || conv.task == TaskTag::cd_dmg ||
            (conv.task == TaskTag::rqa && conv.expected.variant == "change_type_region") ||
            (conv.task == TaskTag::rtqa && conv.expected.variant == "status_at");
        if (classification_only && !parsed.boxes.empty()) ++parse_diagnostics;

        const std::string src = conv.source;
        std::string dataset = src == "xbd"            ? "xBD"
                              : src == "s2looking"    ? "S2Looking"
                              : src == "qfabric"      ? "QFabric"
                              : src == "fmow_rgb"     ? "fMoW RGB"
                              : src == "fmow_sentinel" ? "fMoW Sentinel"
                                                       : "Single image";
        switch (conv.task) {
            case TaskTag::tsc: {
                auto& agg = aggs[{"tsc", dataset, "Acc"}];
                bool hit = answer_matches(parsed, conv.expected);
                agg.total += 1;
                agg.correct += hit;
                note_example(conv, "Acc", hit ? 1.0 : 0.0);
                break;
            }
            case TaskTag::cd_loc:
            case TaskTag::cd_det:
            case TaskTag::sre: {
                const SceneRecord* scene = scene_of(conv);
                if (!scene) {
                    ++unscored;
                    return;
                }
                std::string label = conv.task == TaskTag::cd_loc   ? "xBD Loc."
                                    : conv.task == TaskTag::cd_det ? "S2Looking Det."
                                                                   : dataset;
                auto& agg = aggs[{to_string(conv.task), label, "F1"}];
                Mask gt = gt_mask_from(*scene, conv.expected.label_set,
                                       /*all_labels=*/conv.task != TaskTag::sre);
                Mask pr = pred_mask_from(parsed, pred, scene->width, scene->height);
                agg.masks.add_example(pr, gt);
                agg.total += 1;
                note_example(conv, "F1", pixel_f1(pr, gt));
                break;
            }
            case TaskTag::cd_dmg: {
                const SceneRecord* scene = scene_of(conv);
                if (!scene || conv.expected.classes.empty() || conv.expected.label_index < 0 ||
                    conv.expected.label_index >= static_cast<int>(scene->labels.size())) {
                    ++unscored;
                    return;
                }
                auto& agg = aggs[{"cd_dmg", "xBD Dmg Cls.", "F1"}];
                ClassifiedPolygon ex;
                ex.polygon = scene->labels[conv.expected.label_index].geometry;
                ex.width = scene->width;
                ex.height = scene->height;
                ex.gt_class = class_index(conv.expected.classes.front(), damage_classes());
                ex.pred_class = parsed.classes.empty()
                                    ? -1
                                    : class_index(parsed.classes.front(), damage_classes());
                note_example(conv, "match", ex.pred_class == ex.gt_class ? 1.0 : 0.0);
                agg.polys.push_back(std::move(ex));
                agg.total += 1;
                break;
            }
            case TaskTag::qa: {
                auto& agg = aggs[{"qa", dataset, "Acc"}];
                bool hit = answer_matches(parsed, conv.expected);
                agg.total += 1;
                agg.correct += hit;
                note_example(conv, "Acc", hit ? 1.0 : 0.0);
                break;
            }
            case TaskTag::rqa: {
                if (conv.expected.variant == "change_type_region") {
                    const SceneRecord* scene = scene_of(conv);
                    if (!scene || conv.expected.classes.empty() ||
                        conv.expected.label_index < 0) {
                        ++unscored;
                        return;
                    }
                    auto& agg = aggs[{"rqa", "QFabric [2 images]", "F1"}];
                    ClassifiedPolygon ex;
                    ex.polygon = scene->labels[conv.expected.label_index].geometry;
                    ex.width = scene->width;
                    ex.height = scene->height;
                    ex.gt_class =
                        class_index(conv.expected.classes.front(), urban_change_types());
                    ex.pred_class = parsed.classes.empty()
                                        ? -1
                                        : class_index(parsed.classes.front(),
                                                      urban_change_types());
                    note_example(conv, "match", ex.pred_class == ex.gt_class ? 1.0 : 0.0);
                    agg.polys.push_back(std::move(ex));
                    agg.total += 1;
                } else {
                    auto& agg = aggs[{"rqa", dataset, "Acc"}];
                    bool hit = answer_matches(parsed, conv.expected);
                    agg.total += 1;
                    agg.correct += hit;
                    note_example(conv, "Acc", hit ? 1.0 : 0.0);
                }
                break;
            }
            case TaskTag::tre: {
                auto& agg = aggs[{"tre", "QFabric", "Acc"}];
                bool hit = answer_matches(parsed, conv.expected);
                agg.total += 1;
                agg.correct += hit;
                note_example(conv, "Acc", hit ? 1.0 : 0.0);
                break;
            }
            case TaskTag::rtqa: {
                if (conv.expected.variant == "status_at") {
                    const SceneRecord* scene = scene_of(conv);
                    if (!scene || conv.expected.classes.empty() ||
                        conv.expected.label_index < 0 || conv.expected.timestep < 0) {
                        ++unscored;
                        return;
                    }
                    auto& agg = aggs[{"rtqa", "QFabric [5 images]", "F1"}];
                    ClassifiedPolygon ex;
                    ex.polygon = scene->labels[conv.expected.label_index].geometry;
                    ex.width = scene->width;
                    ex.height = scene->height;
                    ex.gt_status.assign(5, -1);
                    ex.pred_status.assign(5, -1);
                    int t = std::min(conv.expected.timestep, 4);
                    ex.gt_status[t] =
                        class_index(conv.expected.classes.front(), urban_status_classes());
                    ex.pred_status[t] = parsed.classes.empty()
                                            ? -1
                                            : class_index(parsed.classes.front(),
                                                          urban_status_classes());
                    note_example(conv, "match",
                                 ex.pred_status[t] == ex.gt_status[t] ? 1.0 : 0.0);
                    agg.polys.push_back(std::move(ex));
                    agg.total += 1;
                } else {
                    auto& agg = aggs[{"rtqa", "QFabric", "Acc"}];
                    bool hit = answer_matches(parsed, conv.expected);
                    agg.total += 1;
                    agg.correct += hit;
                    note_example(conv, "Acc", hit ? 1.0 : 0.0);
                }
                break;
            }
            case TaskTag::single_image_passthrough: {
                if (conv.expected.boxes.empty()) {
                    ++unscored;  // no grounding target
                    return;
                }
                auto& agg = aggs[{"grounding", "Single image", "Acc@0.5"}];
                agg.total += 1;
                bool hit = !parsed.boxes.empty() &&
                           parsed.boxes.front().iou(conv.expected.boxes.front()) >= 0.5;
                agg.iou_hits += hit;
                note_example(conv, "Acc@0.5", hit ? 1.0 : 0.0);
                break;
            }
            case TaskTag::region_caption:
            case TaskTag::detailed_desc:
            case TaskTag::grounded_desc:
                ++unscored;  // caption scoring is out of scope
                break;
        }
    }
};

}  // namespace

EvalResult evaluate(const std::vector<ConversationRecord>& corpus,
                    const std::vector<SceneRecord>& scenes,
                    const std::vector<Prediction>& predictions, const EvalOptions& options) {
    std::unordered_map<std::string, const SceneRecord*> scene_index;
    for (const auto& s : scenes) scene_index[s.id] = &s;

    std::unordered_map<std::string, const Prediction*> pred_index;
    for (const auto& p : predictions) pred_index[p.id] = &p;

    EvalResult result;
    result.coverage.predictions = predictions.size();

    std::vector<std::pair<const ConversationRecord*, const Prediction*>> joined;
    for (const auto& conv : corpus) {
        if (!options.tasks.empty() &&
            std::find(options.tasks.begin(), options.tasks.end(), to_string(conv.task)) ==
                options.tasks.end())
            continue;
        auto it = pred_index.find(conv.id);
        if (it == pred_index.end()) {
            ++result.coverage.records_without_prediction;
            continue;
        }
        joined.emplace_back(&conv, it->second);
    }
    result.coverage.matched = joined.size();
    result.coverage.unmatched_predictions = predictions.size() - [&] {
        size_t used = 0;
        for (const auto& conv : corpus) used += pred_index.count(conv.id);
        return used;
    }();
    if (joined.empty() && !predictions.empty())
        throw std::runtime_error("evaluate: no prediction id matches any corpus record");

    int workers = std::max(1, options.workers);
    std::vector<RecordScorer> partials;
    partials.reserve(workers);
    for (int w = 0; w < workers; ++w)
        partials.push_back(RecordScorer{scene_index, options.per_example, {}, 0, 0, {}});
    if (workers == 1) {
        for (auto& [conv, pred] : joined) partials[0].score(*conv, *pred);
    } else {
        std::vector<std::thread> threads;
        size_t chunk = (joined.size() + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            size_t begin = w * chunk;
            size_t end = std::min(joined.size(), begin + chunk);
            if (begin >= end) break;
            threads.emplace_back([&, w, begin, end] {
                for (size_t i = begin; i < end; ++i)
                    partials[w].score(*joined[i].first, *joined[i].second);
            });
        }
        for (auto& t : threads) t.join();
    }

    // fold partials in worker order: all counts are order-independent and
    // polygon lists keep corpus order because chunks are contiguous
    AggMap total;
    for (auto& partial : partials) {
        result.coverage.parse_diagnostics += partial.parse_diagnostics;
        result.coverage.unscored += partial.unscored;
        result.per_example.insert(result.per_example.end(),
                                  std::make_move_iterator(partial.examples.begin()),
                                  std::make_move_iterator(partial.examples.end()));
        for (auto& [key, agg] : partial.aggs) total[key].merge(std::move(agg));
    }

    for (auto& [key, agg] : total) {
        MetricReport report;
        report.task = key.task;
        report.dataset = key.dataset;
        report.metric = key.metric;
        report.count = agg.total;
        if (key.metric == "Acc") {
            report.value = agg.total ? static_cast<double>(agg.correct) / agg.total : 0.0;
        } else if (key.metric == "Acc@0.5") {
            report.value = agg.total ? static_cast<double>(agg.iou_hits) / agg.total : 0.0;
        } else if (!agg.polys.empty()) {
            if (key.dataset == "QFabric [5 images]") {
                report.value = qfabric_protocol(agg.polys, 5,
                                                static_cast<int>(urban_status_classes().size()));
                report.notes["aggregation"] =
                    "per-timestep class-weighted F1, unweighted mean over timesteps";
            } else {
                const auto& options = key.dataset == "QFabric [2 images]"
                                          ? urban_change_types()
                                          : damage_classes();
                PixelConfusion conf(static_cast<int>(options.size()) + 1);
                report.value =
                    classified_polygon_f1(agg.polys, static_cast<int>(options.size()), &conf);
                for (size_t c = 0; c < options.size(); ++c)
                    if (conf.gt_pixels(static_cast<int>(c) + 1) > 0)
                        report.per_class[options[c]] = conf.f1(static_cast<int>(c) + 1);
                report.notes["aggregation"] = "whole-split class weighting";
            }
        } else {
            report.value = agg.masks.micro_f1();
            const auto& conf = agg.masks.confusion();
            report.notes["aggregation"] = "micro (pixel counts summed before ratio)";
            report.notes["pixel_counts"] = "tp=" + std::to_string(conf.tp[1]) +
                                           " fp=" + std::to_string(conf.fp[1]) +
                                           " fn=" + std::to_string(conf.fn[1]);
        }
        result.reports.push_back(std::move(report));
    }
    std::stable_sort(result.reports.begin(), result.reports.end(),
                     [](const MetricReport& a, const MetricReport& b) {
                         int ra = task_category_rank(a.task), rb = task_category_rank(b.task);
                         return ra != rb ? ra < rb : a.dataset < b.dataset;
                     });
    return result;
}

}  // namespace teo
