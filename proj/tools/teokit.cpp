// Command-line front end: fixture generation, corpus builds, oracle
// responders, baseline adapters, evaluation, and report rendering.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "teo/baseline.hpp"
#include "teo/eval.hpp"
#include "teo/fixtures.hpp"
#include "teo/ingest.hpp"
#include "teo/jsonl.hpp"
#include "teo/metrics.hpp"
#include "teo/respond.hpp"
#include "teo/taskgen.hpp"
#include "teo/vocab.hpp"

namespace {

using namespace teo;

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        EVP_DigestUpdate(ctx, buf, static_cast<size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

// JSON-lines event log for CI assertions, alongside the human stderr log.
class EventLog {
public:
    void open(const std::string& path) {
        if (!path.empty()) out_.emplace(path);
    }
    void emit(const std::string& event, nlohmann::json fields = {}) {
        fields["event"] = event;
        fields["seq"] = seq_++;
        if (out_) *out_ << fields.dump() << '\n';
    }

private:
    std::optional<std::ofstream> out_;
    size_t seq_ = 0;
};

struct SourceArg {
    std::vector<std::string> specs;  // kind=...,root=...,split=...
    std::string fixtures_root;       // shorthand: every kind under one root
    std::string split = "train";

    std::vector<SourceDescriptor> resolve() const {
        std::vector<SourceDescriptor> out;
        if (!fixtures_root.empty()) {
            for (SourceKind kind :
                 {SourceKind::xbd, SourceKind::s2looking, SourceKind::qfabric,
                  SourceKind::fmow_rgb, SourceKind::fmow_sentinel,
                  SourceKind::single_image_corpus}) {
                SourceDescriptor desc{kind, std::filesystem::path(fixtures_root) / to_string(kind),
                                      split};
                if (std::filesystem::is_directory(desc.root / desc.split)) out.push_back(desc);
            }
        }
        for (const auto& spec : specs) {
            SourceDescriptor desc;
            desc.split = split;
            size_t pos = 0;
            while (pos < spec.size()) {
                size_t comma = spec.find(',', pos);
                std::string item = spec.substr(pos, comma == std::string::npos ? comma : comma - pos);
                pos = comma == std::string::npos ? spec.size() : comma + 1;
                size_t eq = item.find('=');
                if (eq == std::string::npos)
                    throw std::runtime_error("bad --source item: " + item);
                std::string key = item.substr(0, eq), value = item.substr(eq + 1);
                if (key == "kind")
                    desc.kind = source_kind_from_string(value);
                else if (key == "root")
                    desc.root = value;
                else if (key == "split")
                    desc.split = value;
                else
                    throw std::runtime_error("unknown --source key: " + key);
            }
            out.push_back(desc);
        }
        if (out.empty()) throw std::runtime_error("no sources given (use --fixtures or --source)");
        return out;
    }
};

int cmd_fixtures(const FixtureSpec& spec, EventLog& log) {
    auto stats = generate_fixtures(spec);
    log.emit("fixtures_written", {{"root", spec.root.string()},
                                  {"seed", spec.seed},
                                  {"scenes", stats.scenes_per_source}});
    std::cerr << "fixtures written to " << spec.root << "\n";
    return 0;
}

int cmd_build(const SourceArg& sources, const TaskgenOptions& opts, const std::string& mix_text,
              const std::string& corpus_path, const std::string& scenes_path,
              const std::string& manifest_path, EventLog& log) {
    std::vector<SceneRecord> records;
    IngestStats stats;
    for (const auto& desc : sources.resolve()) {
        size_t before = records.size();
        auto batch = ingest_source(desc, &stats);
        records.insert(records.end(), std::make_move_iterator(batch.begin()),
                       std::make_move_iterator(batch.end()));
        log.emit("source_ingested", {{"kind", to_string(desc.kind)},
                                     {"root", desc.root.string()},
                                     {"records", records.size() - before}});
    }
    std::sort(records.begin(), records.end(),
              [](const SceneRecord& a, const SceneRecord& b) { return a.id < b.id; });

    MixSpec mix = mix_text.empty() ? MixSpec{} : MixSpec::parse(mix_text);
    CorpusManifest manifest;
    manifest.tile_policy = stats.tile_policy;
    auto corpus = emit_corpus(records, mix, opts, &manifest);

    {
        JsonlWriter scenes_out(scenes_path);
        for (const auto& rec : records) scenes_out.write(scene_to_json(rec));
        JsonlWriter corpus_out(corpus_path);
        for (const auto& conv : corpus) corpus_out.write(conversation_to_json(conv));
    }

    nlohmann::json mj = manifest.to_json();
    mj["corpus_sha256"] = sha256_file(corpus_path);
    mj["scenes_sha256"] = sha256_file(scenes_path);
    mj["ingest"] = {{"scenes", stats.scenes},
                    {"records", stats.records},
                    {"skipped_missing_images", stats.skipped_missing_images},
                    {"dropped_empty_tiles", stats.dropped_empty_tiles},
                    {"dropped_labels", stats.dropped_labels},
                    {"tile_policy", stats.tile_policy}};
    std::ofstream(manifest_path) << mj.dump(2) << '\n';
    log.emit("corpus_written", {{"path", corpus_path},
                                {"records", corpus.size()},
                                {"sha256", mj["corpus_sha256"]}});
    std::cerr << "built " << corpus.size() << " conversation records from " << records.size()
              << " scene records\n";
    return 0;
}

int cmd_oracle(const std::string& corpus_path, const std::string& out_path,
               const OracleSpec& spec, uint64_t seed, EventLog& log) {
    JsonlWriter out(out_path);
    size_t n = 0;
    for_each_jsonl(corpus_path, [&](const nlohmann::json& j, size_t) {
        ConversationRecord conv = conversation_from_json(j);
        Prediction pred{conv.id, oracle_respond(conv, spec, seed), std::nullopt};
        out.write(prediction_to_json(pred));
        ++n;
    });
    log.emit("oracle_written", {{"path", out_path}, {"predictions", n}});
    std::cerr << "wrote " << n << " oracle predictions\n";
    return 0;
}

// Temporal predictions from per-image predictions via the post-processing
// adapters: majority vote for classification, detection differencing for
// change masks, unmatched-box tests for change questions.
int cmd_baseline(const std::string& per_image_path, const std::string& corpus_path,
                 const std::string& scenes_path, const std::string& out_path, EventLog& log) {
    std::vector<PerImagePrediction> raw;
    for_each_jsonl(per_image_path, [&](const nlohmann::json& j, size_t) {
        raw.push_back(per_image_prediction_from_json(j));
    });
    auto groups = group_per_image(std::move(raw));
    std::map<std::string, const std::vector<PerImagePrediction>*> by_id;
    for (const auto& g : groups) by_id[g.front().id] = &g;

    std::map<std::string, SceneRecord> scenes;
    for_each_jsonl(scenes_path, [&](const nlohmann::json& j, size_t) {
        SceneRecord rec = scene_from_json(j);
        scenes.emplace(rec.id, std::move(rec));
    });

    JsonlWriter out(out_path);
    size_t n = 0, skipped = 0;
    for_each_jsonl(corpus_path, [&](const nlohmann::json& j, size_t) {
        ConversationRecord conv = conversation_from_json(j);
        auto it = by_id.find(conv.id);
        if (it == by_id.end()) {
            ++skipped;
            return;
        }
        const auto& preds = *it->second;
        auto boxes_of = [&](int image_index) {
            for (const auto& p : preds)
                if (p.image_index == image_index) return p.boxes;
            return std::vector<BBox>{};
        };
        auto scene_it = scenes.find(conv.scene_id);
        int w = scene_it != scenes.end() ? scene_it->second.width : 224;
        int h = scene_it != scenes.end() ? scene_it->second.height : 224;

        Prediction pred;
        pred.id = conv.id;
        switch (conv.task) {
            case TaskTag::tsc: {
                std::vector<std::string> classes;
                for (const auto& p : preds)
                    if (!p.cls.empty()) classes.push_back(p.cls);
                if (!classes.empty()) pred.response_text = majority_vote(classes) + ".";
                break;
            }
            case TaskTag::cd_loc: {
                // detection on the first image stands in for the pair
                std::string rendered;
                for (const auto& b : boxes_of(1)) {
                    if (!rendered.empty()) rendered += ", ";
                    rendered += "[" + std::to_string(b.x_min) + ", " + std::to_string(b.y_min) +
                                ", " + std::to_string(b.x_max) + ", " + std::to_string(b.y_max) +
                                "]";
                }
                pred.response_text = rendered.empty() ? "There are no buildings." : rendered + ".";
                break;
            }
            case TaskTag::cd_det:
                pred.change_mask = detection_diff(boxes_of(1), boxes_of(2), w, h);
                break;
            case TaskTag::sre: {
                auto [destructed, constructed] =
                    constructed_destructed_split(boxes_of(1), boxes_of(2), w, h);
                pred.change_mask = conv.expected.filter_class == "demolished" ||
                                           conv.expected.filter_class == "destroyed"
                                       ? destructed
                                       : constructed;
                break;
            }
            case TaskTag::qa:
            case TaskTag::rqa: {
                if (!conv.expected.polarity.empty()) {
                    std::optional<BBox> region;
                    bool yes = change_qa_from_detections(boxes_of(1),
                                                         boxes_of(static_cast<int>(
                                                             conv.images.size())),
                                                         region);
                    pred.response_text = yes ? "Yes." : "No.";
                } else {
                    // classification questions: majority vote over per-image classes
                    std::vector<std::string> classes;
                    for (const auto& p : preds)
                        if (!p.cls.empty()) classes.push_back(p.cls);
                    if (!classes.empty()) pred.response_text = majority_vote(classes) + ".";
                }
                break;
            }
            default: {
                // pass the per-image answer through untouched
                for (const auto& p : preds)
                    if (!p.answer.empty()) {
                        pred.response_text = p.answer;
                        break;
                    }
                break;
            }
        }
        out.write(prediction_to_json(pred));
        ++n;
    });
    log.emit("baseline_written", {{"path", out_path}, {"predictions", n}, {"skipped", skipped}});
    std::cerr << "wrote " << n << " adapted predictions (" << skipped << " without per-image data)\n";
    return 0;
}

int cmd_eval(const std::string& corpus_path, const std::string& scenes_path,
             const std::string& predictions_path, const std::string& out_path,
             const std::string& per_example_path, EvalOptions options, EventLog& log) {
    options.per_example = !per_example_path.empty();
    std::vector<ConversationRecord> corpus;
    for_each_jsonl(corpus_path, [&](const nlohmann::json& j, size_t) {
        corpus.push_back(conversation_from_json(j));
    });
    std::vector<SceneRecord> scenes;
    for_each_jsonl(scenes_path, [&](const nlohmann::json& j, size_t) {
        scenes.push_back(scene_from_json(j));
    });
    std::vector<Prediction> predictions;
    for_each_jsonl(predictions_path, [&](const nlohmann::json& j, size_t) {
        predictions.push_back(prediction_from_json(j));
    });

    EvalResult result = evaluate(corpus, scenes, predictions, options);
    if (!out_path.empty()) std::ofstream(out_path) << result.to_json().dump(2) << '\n';
    if (!per_example_path.empty()) {
        JsonlWriter out(per_example_path);
        for (const auto& ex : result.per_example)
            out.write({{"id", ex.id}, {"task", ex.task}, {"metric", ex.metric},
                       {"value", ex.value}});
    }
    std::cout << render_report_table(result.reports);
    log.emit("eval_written",
             {{"path", out_path},
              {"matched", result.coverage.matched},
              {"parse_diagnostics", result.coverage.parse_diagnostics}});
    return 0;
}

int cmd_report(const std::string& in_path, const std::string& format) {
    std::ifstream in(in_path);
    if (!in) throw std::runtime_error("cannot open " + in_path);
    nlohmann::json j = nlohmann::json::parse(in);
    std::vector<MetricReport> reports;
    for (const auto& rj : j.at("reports")) {
        MetricReport r;
        r.task = rj.at("task").get<std::string>();
        r.dataset = rj.at("dataset").get<std::string>();
        r.metric = rj.at("metric").get<std::string>();
        r.value = rj.at("value").get<double>();
        r.count = rj.at("count").get<size_t>();
        reports.push_back(std::move(r));
    }
    if (format == "json") {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& r : reports)
            out.push_back({{"task", r.task},
                           {"dataset", r.dataset},
                           {"metric", r.metric},
                           {"value", r.value},
                           {"count", r.count}});
        std::cout << out.dump(2) << '\n';
    } else {
        std::cout << render_report_table(reports);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Temporal earth-observation instruction corpus builder and evaluator"};
    app.require_subcommand(1);
    app.fallthrough();
    EventLog log;
    std::string log_json;
    app.add_option("--log-json", log_json, "write machine-readable JSONL event log");

    // fixtures
    FixtureSpec fixture_spec;
    if (const char* cache = std::getenv("TEO_FIXTURE_CACHE")) fixture_spec.root = cache;
    auto* fixtures = app.add_subcommand("fixtures", "generate a synthetic source tree");
    fixtures->add_option("--seed", fixture_spec.seed, "fixture seed");
    fixtures->add_option("--out", fixture_spec.root, "output root (default $TEO_FIXTURE_CACHE)");
    fixtures->add_option("--scenes", fixture_spec.scenes_per_source, "scenes per source");
    fixtures->add_option("--split", fixture_spec.split, "split name");
    fixtures->add_option("--pair-extent", fixture_spec.pair_extent, "pair scene extent");
    fixtures->add_option("--qfabric-extent", fixture_spec.qfabric_extent, "urban scene extent");

    // build
    SourceArg sources;
    TaskgenOptions build_opts;
    bool seed_given = false;
    std::string mix_text, corpus_path = "corpus.jsonl", scenes_path = "scenes.jsonl",
                manifest_path = "manifest.json";
    auto* build = app.add_subcommand("build", "ingest sources and emit the conversation corpus");
    build->add_option("--fixtures", sources.fixtures_root, "root holding one dir per source kind");
    build->add_option("--source", sources.specs, "kind=...,root=...[,split=...] (repeatable)");
    build->add_option("--split", sources.split, "default split for all sources");
    build->add_option("--seed", build_opts.seed, "build seed (required)")
        ->each([&](const std::string&) { seed_given = true; });
    build->add_option("--mix", mix_text, "task mix, e.g. 'xbd:cd_loc=1,qa=2;qfabric:tre=1'");
    build->add_option("--max-images", build_opts.max_images, "sequence cap");
    build->add_option("--metadata-prob", build_opts.metadata_prob, "system prompt metadata rate");
    build->add_option("--subseq-prob", build_opts.subseq_prob, "urban-change subsequence rate");
    build->add_option("--workers", build_opts.workers, "worker threads");
    build->add_option("--out", corpus_path, "corpus JSONL path");
    build->add_option("--scenes-out", scenes_path, "scene manifest JSONL path");
    build->add_option("--manifest", manifest_path, "manifest JSON path");

    // oracle
    std::string oracle_corpus, oracle_out = "predictions.jsonl", oracle_mode = "perfect";
    OracleSpec oracle_spec;
    uint64_t oracle_seed = 0;
    auto* oracle = app.add_subcommand("oracle", "answer a corpus from its own ground truth");
    oracle->add_option("--corpus", oracle_corpus, "corpus JSONL")->required();
    oracle->add_option("--out", oracle_out, "predictions JSONL path");
    oracle->add_option("--mode", oracle_mode, "perfect | noisy | constant");
    oracle->add_option("--jitter", oracle_spec.box_jitter_px, "box jitter (px)");
    oracle->add_option("--flip", oracle_spec.class_flip_rate, "class flip rate");
    oracle->add_option("--miss", oracle_spec.miss_rate, "box miss rate");
    oracle->add_option("--constant-answer", oracle_spec.constant_answer, "constant-mode answer");
    oracle->add_option("--seed", oracle_seed, "oracle seed");

    // baseline
    std::string per_image_path, baseline_corpus, baseline_scenes,
        baseline_out = "temporal_predictions.jsonl";
    auto* baseline = app.add_subcommand(
        "baseline", "adapt per-image predictions to temporal predictions");
    baseline->add_option("--per-image", per_image_path, "per-image predictions JSONL")->required();
    baseline->add_option("--corpus", baseline_corpus, "corpus JSONL")->required();
    baseline->add_option("--scenes", baseline_scenes, "scene manifest JSONL")->required();
    baseline->add_option("--out", baseline_out, "adapted predictions JSONL path");

    // eval
    std::string eval_corpus, eval_scenes, eval_predictions, eval_out = "report.json", tasks_text,
        per_example_path;
    EvalOptions eval_options;
    auto* eval = app.add_subcommand("eval", "score predictions against a corpus");
    eval->add_option("--corpus", eval_corpus, "corpus JSONL")->required();
    eval->add_option("--scenes", eval_scenes, "scene manifest JSONL")->required();
    eval->add_option("--predictions", eval_predictions, "predictions JSONL")->required();
    eval->add_option("--out", eval_out, "report JSON path");
    eval->add_option("--per-example", per_example_path, "per-record debug scores JSONL path");
    eval->add_option("--tasks", tasks_text, "comma-separated task filter");
    eval->add_option("--workers", eval_options.workers, "worker threads");

    // report
    std::string report_in, report_format = "text";
    auto* report = app.add_subcommand("report", "render a stored report");
    report->add_option("--in", report_in, "report JSON")->required();
    report->add_option("--format", report_format, "text | json");

    CLI11_PARSE(app, argc, argv);
    log.open(log_json);

    try {
        if (*fixtures) {
            if (fixture_spec.root.empty())
                throw std::runtime_error("fixtures: --out or TEO_FIXTURE_CACHE required");
            return cmd_fixtures(fixture_spec, log);
        }
        if (*build) {
            if (!seed_given) throw std::runtime_error("build: --seed is required");
            return cmd_build(sources, build_opts, mix_text, corpus_path, scenes_path,
                             manifest_path, log);
        }
        if (*oracle) {
            if (oracle_mode == "perfect")
                oracle_spec.mode = OracleSpec::Mode::perfect;
            else if (oracle_mode == "noisy")
                oracle_spec.mode = OracleSpec::Mode::noisy;
            else if (oracle_mode == "constant")
                oracle_spec.mode = OracleSpec::Mode::constant;
            else
                throw std::runtime_error("oracle: unknown mode " + oracle_mode);
            return cmd_oracle(oracle_corpus, oracle_out, oracle_spec, oracle_seed, log);
        }
        if (*baseline)
            return cmd_baseline(per_image_path, baseline_corpus, baseline_scenes, baseline_out,
                                log);
        if (*eval) {
            if (!tasks_text.empty()) {
                size_t pos = 0;
                while (pos < tasks_text.size()) {
                    size_t comma = tasks_text.find(',', pos);
                    eval_options.tasks.push_back(tasks_text.substr(
                        pos, comma == std::string::npos ? comma : comma - pos));
                    pos = comma == std::string::npos ? tasks_text.size() : comma + 1;
                }
            }
            return cmd_eval(eval_corpus, eval_scenes, eval_predictions, eval_out,
                            per_example_path, eval_options, log);
        }
        if (*report) return cmd_report(report_in, report_format);
    } catch (const std::exception& e) {
        log.emit("error", {{"message", e.what()}});
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
