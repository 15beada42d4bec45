#include <doctest.h>

#include <algorithm>
#include <set>

#include "teo/eval.hpp"
#include "teo/respond.hpp"
#include "teo/rng.hpp"
#include "teo/taskgen.hpp"
#include "teo/vocab.hpp"

using namespace teo;

namespace {

Polygon rect_polygon(double x0, double y0, double x1, double y1) {
    return Polygon{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, {}};
}

SceneRecord sequence_record(const std::string& id, int n, SourceKind kind = SourceKind::fmow_rgb) {
    SceneRecord rec;
    rec.id = id;
    rec.source = kind;
    rec.width = 224;
    rec.height = 224;
    rec.sequence_class = "Airport";
    for (int t = 0; t < n; ++t) {
        rec.images.push_back({id + "_t" + std::to_string(t) + ".png", std::nullopt});
        rec.order_index.push_back(t);
    }
    return rec;
}

SceneRecord qfabric_record(const std::string& id, int n = 5) {
    SceneRecord rec = sequence_record(id, n, SourceKind::qfabric);
    rec.sequence_class.clear();
    GeoLabel label;
    label.geometry = rect_polygon(40, 40, 120, 100);
    label.sequence_class = "Residential";
    static const char* progression[] = {"Greenland", "Land Cleared", "Excavation",
                                        "Construction Midway", "Construction Done",
                                        "Operational", "Operational", "Operational"};
    for (int t = 0; t < n; ++t) label.classes_per_timestep.push_back(progression[t]);
    rec.labels.push_back(label);
    return rec;
}

SceneRecord damage_record(const std::string& id) {
    SceneRecord rec;
    rec.id = id;
    rec.source = SourceKind::xbd;
    rec.width = 224;
    rec.height = 224;
    rec.sensor = "WorldView-2";
    rec.resolution = "high";
    rec.disaster_type = "earthquake";
    rec.images = {{id + "_pre.png", std::nullopt}, {id + "_post.png", std::nullopt}};
    rec.order_index = {0, 1};
    GeoLabel a;
    a.geometry = rect_polygon(20, 80, 60, 130);  // center-left cell
    a.classes_per_timestep = {"No damage", "Minor Damage"};
    GeoLabel b;
    b.geometry = rect_polygon(30, 90, 50, 120);  // also center-left, destroyed
    b.classes_per_timestep = {"No damage", "Destroyed"};
    rec.labels = {a, b};
    return rec;
}

}  // namespace

TEST_CASE("every generated task tag is covered by the template bank") {
    const TemplateBank& bank = TemplateBank::standard();
    // passthrough reproduces stored conversations and needs no templates
    for (TaskTag task : {TaskTag::tsc, TaskTag::cd_loc, TaskTag::cd_dmg, TaskTag::cd_det,
                         TaskTag::sre, TaskTag::qa, TaskTag::rqa, TaskTag::tre, TaskTag::rtqa,
                         TaskTag::region_caption, TaskTag::detailed_desc,
                         TaskTag::grounded_desc}) {
        bool covered = false;
        for (SourceKind kind : {SourceKind::xbd, SourceKind::s2looking, SourceKind::qfabric,
                                SourceKind::fmow_rgb, SourceKind::fmow_sentinel})
            covered = covered || bank.has(kind, task);
        INFO("task ", to_string(task));
        CHECK(covered);
    }
    // description-style tasks carry at least eight answer paraphrases
    for (auto [kind, task, variant] :
         {std::tuple{SourceKind::xbd, TaskTag::region_caption, "building_change_caption"},
          std::tuple{SourceKind::xbd, TaskTag::detailed_desc, "disaster_description"},
          std::tuple{SourceKind::xbd, TaskTag::grounded_desc, "grounded_disaster_description"},
          std::tuple{SourceKind::s2looking, TaskTag::region_caption, "area_change_caption"},
          std::tuple{SourceKind::s2looking, TaskTag::detailed_desc, "change_description"},
          std::tuple{SourceKind::s2looking, TaskTag::grounded_desc,
                     "grounded_change_description"},
          std::tuple{SourceKind::qfabric, TaskTag::region_caption, "region_dev_caption"},
          std::tuple{SourceKind::qfabric, TaskTag::region_caption, "temporal_caption"}}) {
        INFO(to_string(kind), "/", to_string(task), "/", variant);
        CHECK(bank.get(kind, task, variant).size() >= 8);
    }
    // verbatim phrasings are marked
    bool any_verbatim = false, any_paraphrase = false;
    for (const auto& t : bank.get(SourceKind::xbd, TaskTag::qa, "disaster_type")) {
        any_verbatim = any_verbatim || t.verbatim;
        any_paraphrase = any_paraphrase || !t.verbatim;
    }
    CHECK(any_verbatim);
    CHECK(any_paraphrase);
}

TEST_CASE("sample_sequence leaves short sequences alone") {
    SceneRecord rec = sequence_record("short", 2);
    SceneRecord out = sample_sequence(rec, 8, 1);
    CHECK(out.images.size() == 2);
    CHECK(out.order_index == rec.order_index);
}

TEST_CASE("sample_sequence caps at 8 with order preserved, deterministically") {
    SceneRecord rec = sequence_record("long", 12);
    SceneRecord a = sample_sequence(rec, 8, 42);
    SceneRecord b = sample_sequence(rec, 8, 42);
    REQUIRE(a.images.size() == 8);
    for (size_t i = 0; i < a.images.size(); ++i) CHECK(a.images[i].path == b.images[i].path);

    for (uint64_t seed = 0; seed < 1000; ++seed) {
        SceneRecord out = sample_sequence(rec, 8, seed);
        CHECK(out.images.size() == 8);
        std::set<std::string> unique;
        for (size_t i = 0; i < out.images.size(); ++i) unique.insert(out.images[i].path);
        CHECK(unique.size() == 8);  // no duplicates
        for (size_t i = 1; i < out.order_index.size(); ++i)
            CHECK(out.order_index[i] > out.order_index[i - 1]);
    }
}

TEST_CASE("sample_sequence subsets per-timestep labels alongside images") {
    SceneRecord rec = qfabric_record("subset", 5);
    // force sampling by a low cap
    SceneRecord out = sample_sequence(rec, 3, 7);
    REQUIRE(out.images.size() == 3);
    REQUIRE(out.labels.size() == 1);
    REQUIRE(out.labels[0].classes_per_timestep.size() == 3);
    // subset classes must agree with the kept positions
    for (size_t i = 0; i < out.order_index.size(); ++i)
        CHECK(out.labels[0].classes_per_timestep[i] ==
              rec.labels[0].classes_per_timestep[out.order_index[i]]);
}

TEST_CASE("urban-change subsequence knob draws lengths uniformly in {2..N}") {
    SceneRecord rec = qfabric_record("knob", 5);
    size_t counts[4] = {0, 0, 0, 0};  // lengths 2, 3, 4, 5
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        SceneRecord sampled = sample_sequence(rec, 8, 100000 + i, /*subseq_prob=*/1.0);
        size_t len = sampled.images.size();
        REQUIRE(len >= 2);
        REQUIRE(len <= 5);
        ++counts[len - 2];
    }
    // chi-squared against uniform over 4 bins, 3 dof, p > 0.01 -> < 11.345
    double expected = draws / 4.0;
    double chi2 = 0.0;
    for (size_t c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 11.345);
}

TEST_CASE("build_prompt: damage classification renders the exact class answer") {
    SceneRecord rec = damage_record("dmg0");
    rec.labels.resize(1);  // single building: Minor Damage
    TaskgenOptions opts;
    opts.seed = 5;
    ConversationRecord conv = build_prompt(rec, TaskTag::cd_dmg, opts);
    REQUIRE(conv.turns.size() == 2);
    CHECK(conv.turns[1].text == "Minor Damage.");
    CHECK(conv.turns[0].text.find("Choose from: No damage, Minor Damage, Major Damage, "
                                  "Destroyed.") != std::string::npos);
    // the ground-truth class is always among the prompt options
    CHECK(std::find(conv.class_options.begin(), conv.class_options.end(), "Minor Damage") !=
          conv.class_options.end());
}

TEST_CASE("build_prompt: temporal referring answers list the matching images") {
    SceneRecord rec = qfabric_record("tre0", 5);
    rec.labels[0].classes_per_timestep = {"Land Cleared", "Land Cleared", "Excavation",
                                          "Excavation", "Construction Done"};
    TaskgenOptions opts;
    opts.seed = 3;
    // find a seed whose timestep draw lands on "Land Cleared" (images 1, 2)
    for (uint64_t seed = 0; seed < 50; ++seed) {
        opts.seed = seed;
        ConversationRecord conv = build_prompt(rec, TaskTag::tre, opts);
        if (conv.expected.image_refs == std::vector<int>{1, 2}) {
            CHECK(conv.turns[1].text == "Image 1, Image 2");
            return;
        }
    }
    FAIL("no seed produced the Land Cleared draw");
}

TEST_CASE("build_prompt: most-affected cell names the argmax grid cell") {
    SceneRecord rec = damage_record("cell0");
    TaskgenOptions opts;
    for (uint64_t seed = 0; seed < 80; ++seed) {
        opts.seed = seed;
        ConversationRecord conv = build_prompt(rec, TaskTag::qa, opts);
        if (conv.expected.variant != "most_affected_cell") continue;
        CHECK(conv.turns[1].text ==
              "The center left of the image was most affected by the disaster.");
        return;
    }
    FAIL("no seed drew the most-affected-cell variant");
}

TEST_CASE("prompt interleaves consecutive image references and caps at 8") {
    SceneRecord rec = sequence_record("refs", 12);
    TaskgenOptions opts;
    opts.seed = 11;
    SceneRecord sampled = sample_sequence(rec, 8, opts.seed);
    ConversationRecord conv = build_prompt(sampled, TaskTag::tsc, opts);
    CHECK(conv.images.size() == 8);
    const std::string& user = conv.turns[0].text;
    for (int k = 1; k <= 8; ++k) {
        std::string want = "Image " + std::to_string(k) + ": <image>";
        CHECK(user.find(want) != std::string::npos);
    }
    CHECK(user.find("Image 9") == std::string::npos);
    CHECK(user.find("sequence of") != std::string::npos);
}

TEST_CASE("box-output tasks carry the box format request sentence") {
    SceneRecord rec = damage_record("boxreq");
    TaskgenOptions opts;
    opts.seed = 2;
    ConversationRecord conv = build_prompt(rec, TaskTag::cd_loc, opts);
    CHECK(conv.turns[0].text.find("Please include bounding boxes of the form [x_min, y_min, "
                                  "x_max, y_max] in your response.") != std::string::npos);
    ConversationRecord qa = build_prompt(rec, TaskTag::qa, opts);
    CHECK(qa.turns[0].text.find("Please include bounding boxes") == std::string::npos);
}

TEST_CASE("metadata injection frequency stays near one half") {
    SceneRecord rec = damage_record("meta");
    size_t with_resolution = 0;
    const int draws = 10000;
    TaskgenOptions opts;
    for (int i = 0; i < draws; ++i) {
        opts.seed = 50000 + i;
        ConversationRecord conv = build_prompt(rec, TaskTag::qa, opts);
        if (conv.turns[0].text.find("high resolution satellite images") != std::string::npos)
            ++with_resolution;
    }
    double freq = static_cast<double>(with_resolution) / draws;
    CHECK(freq >= 0.47);
    CHECK(freq <= 0.53);
}

TEST_CASE("task/label mismatch raises naming the missing field") {
    SceneRecord rec = sequence_record("mismatch", 3);
    rec.sequence_class.clear();
    TaskgenOptions opts;
    try {
        build_prompt(rec, TaskTag::tsc, opts);
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("sequence_class") != std::string::npos);
    }

    SceneRecord no_labels = damage_record("nolab");
    no_labels.labels.clear();
    CHECK_THROWS_AS(build_prompt(no_labels, TaskTag::cd_dmg, opts), std::invalid_argument);
}

TEST_CASE("passthrough strips task tokens and keeps the original answer") {
    SceneRecord rec;
    rec.id = "single0";
    rec.source = SourceKind::single_image_corpus;
    rec.width = 224;
    rec.height = 224;
    rec.images = {{"single0.png", std::nullopt}};
    rec.order_index = {0};
    rec.passthrough_turns = {
        {"user", "[refer] Identify the location of the storage tank. <image>"},
        {"assistant", "[12, 30, 40, 60]."}};
    TaskgenOptions opts;
    ConversationRecord conv = build_prompt(rec, TaskTag::single_image_passthrough, opts);
    CHECK(conv.turns[0].text.find("[refer]") == std::string::npos);
    CHECK(conv.turns[0].text.find("Respond with the bounding box") != std::string::npos);
    CHECK(conv.turns[1].text == "[12, 30, 40, 60].");
    REQUIRE(conv.expected.boxes.size() == 1);
    CHECK(conv.expected.boxes[0] == BBox{12, 30, 40, 60});
}

TEST_CASE("emit_corpus honours a 100% single-task mix") {
    std::vector<SceneRecord> records;
    for (int i = 0; i < 10; ++i) records.push_back(damage_record("mix" + std::to_string(i)));
    TaskgenOptions opts;
    opts.seed = 9;
    MixSpec mix = MixSpec::parse("xbd:cd_loc=1");
    CorpusManifest manifest;
    auto corpus = emit_corpus(records, mix, opts, &manifest);
    REQUIRE(corpus.size() == 10);
    for (const auto& conv : corpus) CHECK(conv.task == TaskTag::cd_loc);
    CHECK(manifest.per_task.at("cd_loc") == 10);
    CHECK(manifest.per_source.at("xbd") == 10);
    CHECK(manifest.total == 10);
}

TEST_CASE("emit_corpus output is byte-identical across runs and worker counts") {
    std::vector<SceneRecord> records;
    for (int i = 0; i < 24; ++i) {
        records.push_back(damage_record("det_x" + std::to_string(i)));
        records.push_back(qfabric_record("det_q" + std::to_string(i)));
        records.push_back(sequence_record("det_f" + std::to_string(i), 3 + i % 9));
    }
    TaskgenOptions opts;
    opts.seed = 77;
    auto dump = [&](int workers) {
        TaskgenOptions o = opts;
        o.workers = workers;
        std::string all;
        for (const auto& conv : emit_corpus(records, MixSpec{}, o))
            all += conversation_to_json(conv).dump() + "\n";
        return all;
    };
    std::string one = dump(1);
    CHECK(one == dump(1));
    CHECK(one == dump(4));
    CHECK(one == dump(8));
}

TEST_CASE("emit_corpus rejects empty input") {
    TaskgenOptions opts;
    CHECK_THROWS_AS(emit_corpus({}, MixSpec{}, opts), std::invalid_argument);
}

TEST_CASE("round trip: every emitted assistant turn re-parses to its ground truth") {
    std::vector<SceneRecord> records;
    auto rng = record_rng(0xbeef, "roundtrip_pool");
    for (int i = 0; i < 40; ++i) {
        records.push_back(damage_record("rt_x" + std::to_string(i)));
        records.push_back(qfabric_record("rt_q" + std::to_string(i)));
        records.push_back(sequence_record("rt_f" + std::to_string(i), 1 + i % 12));
        // building-change record
        SceneRecord s2l;
        s2l.id = "rt_s" + std::to_string(i);
        s2l.source = SourceKind::s2looking;
        s2l.width = 224;
        s2l.height = 224;
        s2l.sensor = "GaoFen";
        s2l.resolution = "high";
        s2l.images = {{s2l.id + "_a.png", std::nullopt}, {s2l.id + "_b.png", std::nullopt}};
        s2l.order_index = {0, 1};
        int buildings = uniform_int(rng, 0, 5);
        for (int b = 0; b < buildings; ++b) {
            GeoLabel label;
            double x0 = uniform_int(rng, 0, 180), y0 = uniform_int(rng, 0, 180);
            label.geometry = rect_polygon(x0, y0, x0 + uniform_int(rng, 8, 40),
                                          y0 + uniform_int(rng, 8, 40));
            label.change = bernoulli(rng, 0.5) ? "constructed" : "demolished";
            s2l.labels.push_back(label);
        }
        records.push_back(s2l);
    }
    // several seeds so all task variants get exercised
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        TaskgenOptions opts;
        opts.seed = seed;
        auto corpus = emit_corpus(records, MixSpec{}, opts);
        for (const auto& conv : corpus) {
            const std::string& answer = conv.turns.back().text;
            ParseContext ctx{conv.task, conv.class_options,
                             static_cast<int>(conv.images.size())};
            ParsedResponse parsed = parse_response(answer, ctx);
            INFO("record ", conv.id, " variant ", conv.expected.variant, " answer: ", answer);
            CHECK(answer_matches(parsed, conv.expected));
            CHECK(parsed.boxes == conv.expected.boxes);
        }
    }
}

TEST_CASE("qfabric status questions track the sampled subsequence") {
    SceneRecord rec = qfabric_record("subsq", 5);
    TaskgenOptions opts;
    opts.subseq_prob = 1.0;
    for (uint64_t seed = 0; seed < 60; ++seed) {
        opts.seed = seed;
        SceneRecord sampled = sample_sequence(rec, 8, seed, 1.0);
        ConversationRecord conv;
        try {
            conv = build_prompt(sampled, TaskTag::rtqa, opts);
        } catch (const std::invalid_argument&) {
            continue;
        }
        if (conv.expected.variant != "status_at") continue;
        int t = conv.expected.timestep;
        REQUIRE(t >= 0);
        REQUIRE(t < static_cast<int>(sampled.images.size()));
        CHECK(conv.expected.classes.front() ==
              sampled.labels[0].classes_per_timestep[static_cast<size_t>(t)]);
    }
}
