#include <doctest.h>

#include <filesystem>

#include "oracles.hpp"
#include "teo/eval.hpp"
#include "teo/fixtures.hpp"
#include "teo/ingest.hpp"
#include "teo/taskgen.hpp"
#include "teo/vocab.hpp"

using namespace teo;
namespace fs = std::filesystem;

namespace {

struct TempTree {
    fs::path root;
    explicit TempTree(const std::string& tag) {
        root = fs::temp_directory_path() / ("teo_pipe_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TempTree() { fs::remove_all(root); }
};

std::vector<SceneRecord> ingest_all(const fs::path& root) {
    std::vector<SceneRecord> records;
    for (SourceKind kind : {SourceKind::xbd, SourceKind::s2looking, SourceKind::qfabric,
                            SourceKind::fmow_rgb, SourceKind::fmow_sentinel,
                            SourceKind::single_image_corpus}) {
        auto batch = ingest_source({kind, root / to_string(kind), "train"});
        records.insert(records.end(), batch.begin(), batch.end());
    }
    std::sort(records.begin(), records.end(),
              [](const SceneRecord& a, const SceneRecord& b) { return a.id < b.id; });
    return records;
}

std::vector<Prediction> perfect_predictions(const std::vector<ConversationRecord>& corpus) {
    std::vector<Prediction> preds;
    for (const auto& conv : corpus)
        preds.push_back({conv.id, oracle_respond(conv, OracleSpec{}, 0), std::nullopt});
    return preds;
}

}  // namespace

TEST_CASE("perfect oracle scores 1.0 on every accuracy bucket") {
    TempTree tree("perfect");
    FixtureSpec spec;
    spec.seed = 21;
    spec.root = tree.root;
    spec.scenes_per_source = 4;
    generate_fixtures(spec);

    auto records = ingest_all(tree.root);
    TaskgenOptions opts;
    opts.seed = 5;
    opts.subseq_prob = 0.0;
    auto corpus = emit_corpus(records, MixSpec{}, opts);
    auto result = evaluate(corpus, records, perfect_predictions(corpus));

    bool saw_accuracy = false;
    for (const auto& report : result.reports) {
        INFO(report.task, " ", report.dataset, " ", report.metric, " = ", report.value);
        if (report.metric == "Acc" || report.metric == "Acc@0.5") {
            CHECK(report.value == 1.0);
            saw_accuracy = true;
        }
        if (report.task == "cd_dmg" || report.task == "rqa" || report.task == "rtqa")
            if (report.metric == "F1") CHECK(report.value == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(saw_accuracy);
    CHECK(result.coverage.matched == corpus.size());
}

TEST_CASE("perfect-box oracle hits the polygon-vs-box ceiling on localization") {
    TempTree tree("ceiling");
    FixtureSpec spec;
    spec.seed = 33;
    spec.root = tree.root;
    spec.scenes_per_source = 5;
    generate_fixtures(spec);

    auto records = ingest_all(tree.root);
    TaskgenOptions opts;
    opts.seed = 8;
    MixSpec mix = MixSpec::parse("xbd:cd_loc=1");
    std::vector<SceneRecord> xbd_records;
    for (const auto& r : records)
        if (r.source == SourceKind::xbd) xbd_records.push_back(r);
    auto corpus = emit_corpus(xbd_records, mix, opts);
    auto result = evaluate(corpus, xbd_records, perfect_predictions(corpus));

    // independent ceiling: micro F1 of min-AABB boxes against the polygons
    uint64_t tp = 0, fp = 0, fn = 0;
    for (const auto& rec : xbd_records) {
        std::vector<Shape> polys, boxes;
        for (const auto& label : rec.labels) {
            polys.push_back({label.geometry, 1});
            if (auto b = min_aabb(label.geometry)) boxes.push_back({*b, 1});
        }
        Mask gt = oracle::rasterize_by_point_test(polys, rec.width, rec.height);
        Mask pred = oracle::rasterize_by_point_test(boxes, rec.width, rec.height);
        for (size_t i = 0; i < gt.labels.size(); ++i) {
            tp += pred.labels[i] && gt.labels[i];
            fp += pred.labels[i] && !gt.labels[i];
            fn += !pred.labels[i] && gt.labels[i];
        }
    }
    double ceiling = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);

    REQUIRE(result.reports.size() == 1);
    CHECK(result.reports[0].task == "cd_loc");
    CHECK(result.reports[0].value == doctest::Approx(ceiling).epsilon(1e-9));
    CHECK(result.reports[0].value < 1.0);  // triangles and L-shapes keep it below 1
    CHECK(result.reports[0].value > 0.5);
}

TEST_CASE("constant-No oracle scores one half on a balanced yes/no corpus") {
    std::vector<ConversationRecord> corpus;
    std::vector<SceneRecord> scenes;
    std::vector<Prediction> preds;
    for (int i = 0; i < 10; ++i) {
        ConversationRecord conv;
        conv.id = "yn_" + std::to_string(i);
        conv.scene_id = conv.id;
        conv.task = TaskTag::qa;
        conv.source = "s2looking";
        conv.images = {"a.png", "b.png"};
        bool yes = i < 5;
        conv.turns = {{"user", "Have any buildings been constructed in the area?"},
                      {"assistant", yes ? "Yes." : "No."}};
        conv.expected.polarity = yes ? "yes" : "no";
        conv.expected.variant = "any_constructed";
        corpus.push_back(conv);
        preds.push_back({conv.id, "No.", std::nullopt});
    }
    auto result = evaluate(corpus, scenes, preds);
    REQUIRE(result.reports.size() == 1);
    CHECK(result.reports[0].value == doctest::Approx(0.5));
}

TEST_CASE("constant-class oracle on damage classification matches the class share oracle") {
    TempTree tree("constcls");
    FixtureSpec spec;
    spec.seed = 44;
    spec.root = tree.root;
    spec.scenes_per_source = 5;
    generate_fixtures(spec);
    auto records = ingest_all(tree.root);
    std::vector<SceneRecord> xbd_records;
    for (const auto& r : records)
        if (r.source == SourceKind::xbd && !r.labels.empty()) xbd_records.push_back(r);
    TaskgenOptions opts;
    opts.seed = 13;
    auto corpus = emit_corpus(xbd_records, MixSpec::parse("xbd:cd_dmg=1"), opts);

    std::vector<Prediction> preds;
    OracleSpec constant;
    constant.mode = OracleSpec::Mode::constant;
    constant.constant_answer = "No damage";
    for (const auto& conv : corpus)
        preds.push_back({conv.id, oracle_respond(conv, constant, 0), std::nullopt});
    auto result = evaluate(corpus, xbd_records, preds);
    REQUIRE(result.reports.size() == 1);

    // counting oracle over the asked polygons
    std::map<std::string, const SceneRecord*> by_id;
    for (const auto& r : xbd_records) by_id[r.id] = &r;
    uint64_t support[5] = {0};  // gt pixels per damage class index+1
    uint64_t tp0 = 0;
    uint64_t predicted_total = 0;
    for (const auto& conv : corpus) {
        const SceneRecord& scene = *by_id.at(conv.scene_id);
        const GeoLabel& label = scene.labels[conv.expected.label_index];
        Mask m = oracle::rasterize_by_point_test({{label.geometry, 1}}, scene.width,
                                                 scene.height);
        size_t px = m.foreground_count();
        int gt_idx = 0;
        for (size_t c = 0; c < damage_classes().size(); ++c)
            if (damage_classes()[c] == conv.expected.classes.front())
                gt_idx = static_cast<int>(c);
        support[gt_idx + 1] += px;
        predicted_total += px;
        if (gt_idx == 0) tp0 += px;
    }
    uint64_t total_support = 0;
    for (int c = 1; c <= 4; ++c) total_support += support[c];
    double f1_no_damage =
        2.0 * static_cast<double>(tp0) /
        static_cast<double>(2 * tp0 + (predicted_total - tp0) + (support[1] - tp0));
    double expected = f1_no_damage * static_cast<double>(support[1]) /
                      static_cast<double>(total_support);
    CHECK(result.reports[0].value == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("mask predictions score identically to their box renderings") {
    TempTree tree("maskpred");
    FixtureSpec spec;
    spec.seed = 55;
    spec.root = tree.root;
    spec.scenes_per_source = 3;
    generate_fixtures(spec);
    auto records = ingest_all(tree.root);
    std::vector<SceneRecord> s2l;
    for (const auto& r : records)
        if (r.source == SourceKind::s2looking) s2l.push_back(r);
    TaskgenOptions opts;
    opts.seed = 2;
    auto corpus = emit_corpus(s2l, MixSpec::parse("s2looking:cd_det=1"), opts);

    std::vector<Prediction> text_preds = perfect_predictions(corpus);
    std::vector<Prediction> mask_preds;
    for (const auto& conv : corpus) {
        std::vector<Shape> shapes;
        for (const auto& b : conv.expected.boxes) shapes.push_back({b, 1});
        Prediction p{conv.id, "", rasterize(shapes, 224, 224)};
        mask_preds.push_back(std::move(p));
    }
    auto from_text = evaluate(corpus, s2l, text_preds);
    auto from_masks = evaluate(corpus, s2l, mask_preds);
    REQUIRE(from_text.reports.size() == 1);
    REQUIRE(from_masks.reports.size() == 1);
    CHECK(from_text.reports[0].value == from_masks.reports[0].value);
}

TEST_CASE("coverage accounting and the zero-overlap error") {
    TempTree tree("coverage");
    FixtureSpec spec;
    spec.seed = 66;
    spec.root = tree.root;
    spec.scenes_per_source = 2;
    generate_fixtures(spec);
    auto records = ingest_all(tree.root);
    TaskgenOptions opts;
    opts.seed = 3;
    auto corpus = emit_corpus(records, MixSpec{}, opts);
    auto preds = perfect_predictions(corpus);

    // drop some predictions, add an unknown id
    preds.resize(preds.size() - 2);
    preds.push_back({"nonexistent_id", "Yes.", std::nullopt});
    auto result = evaluate(corpus, records, preds);
    CHECK(result.coverage.records_without_prediction == 2);
    CHECK(result.coverage.unmatched_predictions == 1);
    CHECK(result.coverage.matched + result.coverage.records_without_prediction == corpus.size());

    std::vector<Prediction> disjoint = {{"nope_1", "No.", std::nullopt}};
    CHECK_THROWS_AS(evaluate(corpus, records, disjoint), std::runtime_error);
}

TEST_CASE("evaluation output is identical across worker counts") {
    TempTree tree("evalworkers");
    FixtureSpec spec;
    spec.seed = 77;
    spec.root = tree.root;
    spec.scenes_per_source = 4;
    generate_fixtures(spec);
    auto records = ingest_all(tree.root);
    TaskgenOptions opts;
    opts.seed = 4;
    auto corpus = emit_corpus(records, MixSpec{}, opts);
    auto preds = perfect_predictions(corpus);

    EvalOptions one;
    EvalOptions eight;
    eight.workers = 8;
    auto a = evaluate(corpus, records, preds, one);
    auto b = evaluate(corpus, records, preds, eight);
    CHECK(a.to_json().dump() == b.to_json().dump());
}

TEST_CASE("noisy oracle scores strictly below perfect on classification") {
    TempTree tree("noisy");
    FixtureSpec spec;
    spec.seed = 88;
    spec.root = tree.root;
    spec.scenes_per_source = 6;
    generate_fixtures(spec);
    auto records = ingest_all(tree.root);
    std::vector<SceneRecord> xbd_records;
    for (const auto& r : records)
        if (r.source == SourceKind::xbd && !r.labels.empty()) xbd_records.push_back(r);
    TaskgenOptions opts;
    opts.seed = 6;
    auto corpus = emit_corpus(xbd_records, MixSpec::parse("xbd:cd_dmg=1"), opts);

    OracleSpec noisy;
    noisy.mode = OracleSpec::Mode::noisy;
    noisy.class_flip_rate = 0.7;
    std::vector<Prediction> preds;
    for (const auto& conv : corpus)
        preds.push_back({conv.id, oracle_respond(conv, noisy, 123), std::nullopt});
    auto noisy_result = evaluate(corpus, xbd_records, preds);
    auto perfect_result = evaluate(corpus, xbd_records, perfect_predictions(corpus));
    REQUIRE(noisy_result.reports.size() == 1);
    CHECK(noisy_result.reports[0].value < perfect_result.reports[0].value);
    CHECK(perfect_result.reports[0].value == doctest::Approx(1.0));
}
