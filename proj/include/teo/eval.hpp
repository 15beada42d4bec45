#pragma once

#include <map>
#include <string>
#include <vector>

#include "teo/conversation.hpp"
#include "teo/ingest.hpp"
#include "teo/metrics.hpp"
#include "teo/respond.hpp"

namespace teo {

struct CoverageStats {
    size_t predictions = 0;
    size_t matched = 0;
    size_t unmatched_predictions = 0;      // prediction ids absent from the corpus
    size_t records_without_prediction = 0;
    size_t parse_diagnostics = 0;
    size_t unscored = 0;                   // caption-style records, missing scenes

    nlohmann::json to_json() const;
};

struct EvalOptions {
    std::vector<std::string> tasks;  // empty = all
    int workers = 1;
    bool per_example = false;  // collect per-record debug scores
};

/// Per-record debug score: exact match flag for accuracy tasks, the
/// record's own pixel F1 for mask tasks.
struct ExampleScore {
    std::string id;
    std::string task;
    std::string metric;
    double value = 0.0;
};

struct EvalResult {
    std::vector<MetricReport> reports;
    CoverageStats coverage;
    std::vector<ExampleScore> per_example;
    nlohmann::json to_json() const;
};

/// Does a parsed response answer the record's question correctly? Shared
/// by evaluation and the render/parse round-trip tests.
bool answer_matches(const ParsedResponse& parsed, const ExpectedAnswer& expected);

/// Score predictions against a corpus. Mask-scored tasks pull ground-truth
/// polygons from the scene manifest by scene id. Throws std::runtime_error
/// when no prediction id matches any corpus record.
EvalResult evaluate(const std::vector<ConversationRecord>& corpus,
                    const std::vector<SceneRecord>& scenes,
                    const std::vector<Prediction>& predictions, const EvalOptions& options = {});

}  // namespace teo
