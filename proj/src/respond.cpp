#include "teo/respond.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <stdexcept>

#include "teo/rng.hpp"

namespace teo {

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

struct BoxSpan {
    size_t begin = 0;  // position of '['
    size_t end = 0;    // one past ']'
    std::optional<BBox> box;  // nullopt: looked like a box but malformed
    std::string problem;
};

// Longest plausible box token; anything longer is treated as prose.
constexpr size_t kMaxBoxToken = 96;

std::optional<int> parse_int_field(std::string_view field) {
    size_t a = field.find_first_not_of(" \t\r\n");
    if (a == std::string_view::npos) return std::nullopt;
    size_t b = field.find_last_not_of(" \t\r\n");
    field = field.substr(a, b - a + 1);
    int value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) return std::nullopt;
    return value;
}

// Scan every '[' ... ']' group and classify it as a box, a malformed box
// candidate (kept as a diagnostic), or unrelated prose.
std::vector<BoxSpan> scan_box_spans(std::string_view text) {
    std::vector<BoxSpan> spans;
    size_t pos = 0;
    while ((pos = text.find('[', pos)) != std::string_view::npos) {
        size_t close = text.find(']', pos + 1);
        if (close == std::string_view::npos || close - pos > kMaxBoxToken) {
            ++pos;
            continue;
        }
        std::string_view inner = text.substr(pos + 1, close - pos - 1);
        size_t commas = static_cast<size_t>(std::count(inner.begin(), inner.end(), ','));
        bool has_digit = inner.find_first_of("0123456789") != std::string_view::npos;
        // a box attempt is either a 4-tuple or anything bracketed holding
        // digits and a comma; "[sic]" or "[one, two]" stay prose
        if (commas != 3 && (commas == 0 || !has_digit)) {
            pos = close + 1;
            continue;
        }
        BoxSpan span{pos, close + 1, std::nullopt, ""};
        std::vector<std::optional<int>> fields;
        size_t start = 0;
        while (true) {
            size_t comma = inner.find(',', start);
            fields.push_back(parse_int_field(
                inner.substr(start, comma == std::string_view::npos ? comma : comma - start)));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 4) {
            span.problem = "expected 4 fields, got " + std::to_string(fields.size());
        } else if (std::any_of(fields.begin(), fields.end(),
                               [](const auto& f) { return !f.has_value(); })) {
            span.problem = "non-numeric field";
        } else {
            BBox box{*fields[0], *fields[1], *fields[2], *fields[3]};
            if (!box.valid())
                span.problem = "inverted or negative box";
            else
                span.box = box;
        }
        spans.push_back(span);
        pos = close + 1;
    }
    return spans;
}

bool inside_any(const std::vector<BoxSpan>& spans, size_t pos) {
    for (const auto& s : spans)
        if (pos >= s.begin && pos < s.end) return true;
    return false;
}

// Preceding word, lowercased, for "Image 3" style references.
std::string preceding_word(std::string_view text, size_t digit_pos) {
    size_t end = digit_pos;
    while (end > 0 && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    size_t begin = end;
    while (begin > 0 && is_word_char(text[begin - 1])) --begin;
    std::string word(text.substr(begin, end - begin));
    for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return word;
}

}  // namespace

std::string canonical_form(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else {
            pending_space = true;  // punctuation and whitespace collapse
        }
    }
    return out;
}

namespace {

bool word_bounded_find(const std::string& haystack, const std::string& needle, size_t* at) {
    if (needle.empty()) return false;
    size_t pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string::npos) {
        bool left_ok = pos == 0 || haystack[pos - 1] == ' ';
        size_t end = pos + needle.size();
        bool right_ok = end == haystack.size() || haystack[end] == ' ';
        if (left_ok && right_ok) {
            if (at) *at = pos;
            return true;
        }
        ++pos;
    }
    return false;
}

}  // namespace

std::optional<std::string> canonicalize(std::string_view text,
                                        const std::vector<std::string>& options) {
    std::string canon = canonical_form(text);
    const std::string* best = nullptr;
    size_t best_len = 0;
    for (const auto& opt : options) {
        std::string c = canonical_form(opt);
        if (c.size() <= best_len && best) continue;
        if (word_bounded_find(canon, c, nullptr)) {
            best = &opt;
            best_len = c.size();
        }
    }
    if (!best) return std::nullopt;
    return *best;
}

ParsedResponse parse_response(std::string_view text, const ParseContext& ctx) {
    ParsedResponse out;
    auto spans = scan_box_spans(text);
    for (const auto& s : spans) {
        if (s.box)
            out.boxes.push_back(*s.box);
        else
            out.diagnostics.push_back("malformed box '" +
                                      std::string(text.substr(s.begin, s.end - s.begin)) +
                                      "': " + s.problem);
    }

    // standalone integers, image references, polarity
    bool saw_polarity_conflict = false;
    for (size_t i = 0; i < text.size();) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (std::isdigit(c)) {
            size_t j = i;
            while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
            bool bounded = (i == 0 || !is_word_char(text[i - 1])) &&
                           (j == text.size() || !is_word_char(text[j]));
            if (bounded && !inside_any(spans, i)) {
                auto value = parse_int_field(text.substr(i, j - i));
                if (value) {
                    if (preceding_word(text, i) == "image") {
                        if (ctx.sequence_length > 0 &&
                            (*value < 1 || *value > ctx.sequence_length))
                            out.diagnostics.push_back("image reference out of range: " +
                                                      std::to_string(*value));
                        else
                            out.image_refs.push_back(*value);
                    } else if (!out.count) {
                        out.count = *value;
                    }
                }
            }
            i = j;
        } else if (std::isalpha(c)) {
            size_t j = i;
            while (j < text.size() && is_word_char(text[j])) ++j;
            if (j - i == 2 || j - i == 3) {
                std::string word(text.substr(i, j - i));
                for (char& w : word)
                    w = static_cast<char>(std::tolower(static_cast<unsigned char>(w)));
                if (word == "yes" || word == "no") {
                    if (out.polarity.empty())
                        out.polarity = word;
                    else if (out.polarity != word)
                        saw_polarity_conflict = true;
                }
            }
            i = j;
        } else {
            ++i;
        }
    }
    if (saw_polarity_conflict)
        out.diagnostics.push_back("response contains both yes and no; kept first");

    // 3x3 grid cell, longest name wins ("center left" beats "center")
    std::string canon = canonical_form(text);
    size_t best_len = 0;
    for (const auto& name : grid_cell_names()) {
        if (name.size() <= best_len) continue;
        if (word_bounded_find(canon, name, nullptr)) {
            out.grid_cell = name;
            best_len = name.size();
        }
    }

    // classes from the prompt's option list
    if (!ctx.class_options.empty()) {
        if (auto best = canonicalize(text, ctx.class_options)) {
            out.classes.push_back(*best);
            for (const auto& opt : ctx.class_options) {
                if (opt == *best) continue;
                if (word_bounded_find(canon, canonical_form(opt), nullptr))
                    out.classes.push_back(opt);
            }
        }
    }

    // free text: drop accepted box tokens, keep the rest
    std::string rest;
    size_t cursor = 0;
    for (const auto& s : spans) {
        if (!s.box) continue;
        rest.append(text.substr(cursor, s.begin - cursor));
        cursor = s.end;
    }
    rest.append(text.substr(cursor));
    size_t a = rest.find_first_not_of(" \t\r\n,.");
    size_t b = rest.find_last_not_of(" \t\r\n");
    out.free_text = a == std::string::npos ? "" : rest.substr(a, b - a + 1);
    return out;
}

namespace {

std::string render_box(const BBox& b) {
    return "[" + std::to_string(b.x_min) + ", " + std::to_string(b.y_min) + ", " +
           std::to_string(b.x_max) + ", " + std::to_string(b.y_max) + "]";
}

// Case-insensitive search for `needle` in `haystack`.
size_t ifind(const std::string& haystack, const std::string& needle, size_t from = 0) {
    auto lower = [](std::string s) {
        for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return s;
    };
    return lower(haystack).find(lower(needle), from);
}

// Jitter one box, keeping it valid within the frame.
BBox jitter_box(const BBox& b, int jitter, int frame, std::mt19937_64& rng) {
    BBox out = b;
    out.x_min = std::clamp(b.x_min + uniform_int(rng, -jitter, jitter), 0, frame - 1);
    out.y_min = std::clamp(b.y_min + uniform_int(rng, -jitter, jitter), 0, frame - 1);
    out.x_max = std::clamp(b.x_max + uniform_int(rng, -jitter, jitter), out.x_min + 1, frame);
    out.y_max = std::clamp(b.y_max + uniform_int(rng, -jitter, jitter), out.y_min + 1, frame);
    return out;
}

const std::string& last_assistant_text(const ConversationRecord& record) {
    for (auto it = record.turns.rbegin(); it != record.turns.rend(); ++it)
        if (it->role == "assistant") return it->text;
    throw std::invalid_argument("oracle_respond: record has no assistant turn");
}

}  // namespace

std::string oracle_respond(const ConversationRecord& record, const OracleSpec& spec,
                           uint64_t seed) {
    if (spec.mode == OracleSpec::Mode::constant) return spec.constant_answer;
    std::string text = last_assistant_text(record);
    if (spec.mode == OracleSpec::Mode::perfect) return text;

    auto rng = record_rng(seed, record.id, /*stream=*/0xa11ce);
    const ExpectedAnswer& gt = record.expected;

    // Boxes: drop at miss_rate, otherwise jitter in place.
    if (!gt.boxes.empty()) {
        auto spans = scan_box_spans(text);
        std::string rebuilt;
        size_t cursor = 0;
        int jitter = static_cast<int>(spec.box_jitter_px);
        for (const auto& s : spans) {
            if (!s.box) continue;
            std::string before = text.substr(cursor, s.begin - cursor);
            if (bernoulli(rng, spec.miss_rate)) {
                // drop the box and the separator that introduced it
                size_t sep = before.find_last_of(',');
                if (sep != std::string::npos &&
                    before.find_first_not_of(" \t", sep + 1) == std::string::npos)
                    before.resize(sep);
                rebuilt += before;
            } else {
                rebuilt += before;
                rebuilt += jitter > 0 ? render_box(jitter_box(*s.box, jitter, 224, rng))
                                      : render_box(*s.box);
            }
            cursor = s.end;
        }
        rebuilt += text.substr(cursor);
        text = rebuilt;
    }

    // Classes / polarity / grid cell / count / image refs flip together at
    // class_flip_rate; each one edits the rendered text in place.
    if (spec.class_flip_rate > 0.0) {
        if (!gt.classes.empty() && !record.class_options.empty() &&
            bernoulli(rng, spec.class_flip_rate)) {
            const std::string& current = gt.classes.front();
            std::vector<std::string> others;
            for (const auto& opt : record.class_options)
                if (opt != current) others.push_back(opt);
            if (!others.empty()) {
                size_t at = ifind(text, current);
                if (at != std::string::npos)
                    text = text.substr(0, at) +
                           others[uniform_u64(rng, others.size())] +
                           text.substr(at + current.size());
            }
        }
        if (!gt.polarity.empty() && bernoulli(rng, spec.class_flip_rate)) {
            std::string from = gt.polarity == "yes" ? "Yes" : "No";
            std::string to = gt.polarity == "yes" ? "No" : "Yes";
            size_t at = ifind(text, from);
            if (at != std::string::npos)
                text = text.substr(0, at) + to + text.substr(at + from.size());
        }
        if (!gt.grid_cell.empty() && bernoulli(rng, spec.class_flip_rate)) {
            const auto& names = grid_cell_names();
            std::string other = names[uniform_u64(rng, names.size())];
            while (other == gt.grid_cell) other = names[uniform_u64(rng, names.size())];
            size_t at = ifind(text, gt.grid_cell);
            if (at != std::string::npos)
                text = text.substr(0, at) + other + text.substr(at + gt.grid_cell.size());
        }
        if (gt.count && bernoulli(rng, spec.class_flip_rate)) {
            std::string from = std::to_string(*gt.count);
            int flipped = *gt.count > 0 && bernoulli(rng, 0.5) ? *gt.count - 1 : *gt.count + 1;
            size_t at = text.find(from);
            if (at != std::string::npos)
                text = text.substr(0, at) + std::to_string(flipped) +
                       text.substr(at + from.size());
        }
        if (!gt.image_refs.empty() && bernoulli(rng, spec.class_flip_rate)) {
            // rewrite the reference list with one entry perturbed
            std::vector<int> refs = gt.image_refs;
            size_t which = uniform_u64(rng, refs.size());
            refs[which] = std::max(1, refs[which] + (bernoulli(rng, 0.5) ? 1 : -1));
            std::string rendered;
            for (size_t i = 0; i < refs.size(); ++i) {
                if (i) rendered += ", ";
                rendered += "Image " + std::to_string(refs[i]);
            }
            std::string original;
            for (size_t i = 0; i < gt.image_refs.size(); ++i) {
                if (i) original += ", ";
                original += "Image " + std::to_string(gt.image_refs[i]);
            }
            size_t at = text.find(original);
            if (at != std::string::npos)
                text = text.substr(0, at) + rendered + text.substr(at + original.size());
        }
    }
    return text;
}

nlohmann::json prediction_to_json(const Prediction& p) {
    nlohmann::json j;
    j["id"] = p.id;
    j["response_text"] = p.response_text;
    if (p.change_mask) {
        // run-length encoding of the binary mask, row-major, starting with
        // the run of zeros
        const Mask& m = *p.change_mask;
        std::vector<size_t> runs;
        uint8_t current = 0;
        size_t len = 0;
        for (uint8_t v : m.labels) {
            uint8_t bit = v != 0;
            if (bit == current) {
                ++len;
            } else {
                runs.push_back(len);
                current = bit;
                len = 1;
            }
        }
        runs.push_back(len);
        j["mask"] = {{"width", m.width}, {"height", m.height}, {"runs", runs}};
    }
    return j;
}

Prediction prediction_from_json(const nlohmann::json& j) {
    Prediction p;
    p.id = j.at("id").get<std::string>();
    p.response_text = j.value("response_text", "");
    if (j.contains("mask")) {
        const auto& mj = j.at("mask");
        Mask m = Mask::zeros(mj.at("width").get<int>(), mj.at("height").get<int>());
        size_t pos = 0;
        uint8_t bit = 0;
        for (size_t run : mj.at("runs").get<std::vector<size_t>>()) {
            if (pos + run > m.labels.size())
                throw std::invalid_argument("prediction mask: runs exceed extent");
            if (bit)
                std::fill(m.labels.begin() + pos, m.labels.begin() + pos + run, uint8_t{1});
            pos += run;
            bit ^= 1;
        }
        if (pos != m.labels.size())
            throw std::invalid_argument("prediction mask: runs do not cover extent");
        p.change_mask = std::move(m);
    }
    return p;
}

}  // namespace teo
