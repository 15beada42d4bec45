#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "teo/conversation.hpp"
#include "teo/geom.hpp"

namespace teo {

/// Structured decoding of a free-text model answer. The parser is total:
/// malformed constructs land in `diagnostics`, never in an exception.
struct ParsedResponse {
    std::vector<BBox> boxes;
    std::vector<std::string> classes;     // matched prompt options, best match first
    std::vector<int> image_refs;          // "Image k" references, order of appearance
    std::string polarity;                 // "yes" | "no" | ""
    std::string grid_cell;                // "" or a 3x3 cell name
    std::optional<int> count;             // first standalone integer
    std::string free_text;                // input with accepted box tokens removed
    std::vector<std::string> diagnostics; // malformed boxes, conflicting polarity, ...
};

struct ParseContext {
    TaskTag task = TaskTag::qa;
    std::vector<std::string> class_options;
    int sequence_length = 0;  // 0 = unchecked; otherwise refs beyond it are rejected
};

ParsedResponse parse_response(std::string_view text, const ParseContext& ctx = {});

/// Case-fold, strip punctuation, collapse whitespace.
std::string canonical_form(std::string_view text);

/// Longest option whose canonical form occurs (word-bounded) in the
/// canonicalized text; nullopt when none matches.
std::optional<std::string> canonicalize(std::string_view text,
                                        const std::vector<std::string>& options);

/// Synthetic responder driven by a record's ground truth; lets the whole
/// pipeline be exercised end to end without any model.
struct OracleSpec {
    enum class Mode { perfect, noisy, constant };
    Mode mode = Mode::perfect;
    double box_jitter_px = 0.0;  // uniform per-coordinate jitter in [-j, +j]
    double class_flip_rate = 0.0;
    double miss_rate = 0.0;      // per-box drop probability
    std::string constant_answer = "No damage";
};

/// perfect: the record's rendered ground-truth answer, byte for byte.
/// noisy: the same text with boxes jittered, classes/polarity/refs flipped
///        and boxes dropped at the configured rates (zero rates leave the
///        text untouched). constant: the fixed answer.
std::string oracle_respond(const ConversationRecord& record, const OracleSpec& spec,
                           uint64_t seed);

/// Model-agnostic prediction file row: JSONL {"id", "response_text"} plus
/// an optional run-length encoded binary mask for adapters that predict
/// change masks directly rather than text.
struct Prediction {
    std::string id;
    std::string response_text;
    std::optional<Mask> change_mask;
};

nlohmann::json prediction_to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& j);

}  // namespace teo
