#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "teo/conversation.hpp"
#include "teo/ingest.hpp"

#include <json.hpp>

namespace teo {

/// One instruction/answer phrasing pair. Slot markers ({box}, {options},
/// {class}, {refs}, {count}, {cell}, ...) are filled by the prompt builder.
/// `verbatim` marks phrasings lifted as-is from the task catalog rather
/// than added paraphrases.
struct Template {
    std::string instruction;
    std::string answer;
    bool verbatim = false;
};

/// Templates keyed by (source kind, task, variant). Description-style
/// tasks carry at least eight answer paraphrases each; classification and
/// localization answers render to exactly parseable strings.
class TemplateBank {
public:
    static const TemplateBank& standard();

    const std::vector<Template>& get(SourceKind source, TaskTag task,
                                     const std::string& variant) const;
    std::vector<std::string> variants(SourceKind source, TaskTag task) const;
    bool has(SourceKind source, TaskTag task) const;

private:
    std::map<std::string, std::vector<Template>> templates_;
    void add(SourceKind source, TaskTag task, const std::string& variant, Template t);
    friend TemplateBank build_standard_bank();
};

struct TaskgenOptions {
    uint64_t seed = 0;
    int max_images = 8;
    double metadata_prob = 0.5;   // per-field system prompt injection
    double subseq_prob = 0.3;     // urban-change shorter-subsequence sampling
    int workers = 1;
};

/// Cap a sequence at `max_images` by uniform sampling without replacement,
/// preserving chronological order. Urban-change records additionally draw
/// a shorter subsequence with probability `subseq_prob` (length uniform in
/// {2..N}). Per-timestep labels are subset alongside the images.
SceneRecord sample_sequence(const SceneRecord& record, int max_images, uint64_t seed,
                            double subseq_prob = 0.0);

/// Tasks a record can serve, given its source and labels.
std::vector<TaskTag> eligible_tasks(const SceneRecord& record);

/// Render one conversation for the record: system prompt with interleaved
/// image references and optional metadata, instruction from the template
/// bank, and the ground-truth answer. Throws std::invalid_argument when
/// the record lacks a field the task needs (the message names it).
ConversationRecord build_prompt(const SceneRecord& record, TaskTag task,
                                const TaskgenOptions& opts);

/// Per-source task sampling weights; tasks absent from the map get weight
/// zero. An empty mix means uniform over the record's eligible tasks.
struct MixSpec {
    std::map<std::string, std::map<std::string, double>> weights;  // source -> task -> w

    static MixSpec parse(const std::string& text);  // "xbd:cd_loc=1,qa=2;qfabric:tre=1"
};

struct CorpusManifest {
    std::map<std::string, size_t> per_source;
    std::map<std::string, size_t> per_task;
    std::map<std::string, size_t> per_source_task;  // "source/task"
    size_t total = 0;
    uint64_t seed = 0;
    std::string tile_policy;
    nlohmann::json to_json() const;
};

/// One conversation per eligible scene record, task drawn from the mix.
/// Output order is sorted by record id and is byte-identical for any
/// worker count. Throws std::invalid_argument when `records` is empty.
std::vector<ConversationRecord> emit_corpus(const std::vector<SceneRecord>& records,
                                            const MixSpec& mix, const TaskgenOptions& opts,
                                            CorpusManifest* manifest = nullptr);

}  // namespace teo
