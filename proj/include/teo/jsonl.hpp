#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace teo {

/// Stream one JSON object per line to `fn`. Blank lines are skipped;
/// malformed lines raise with the path and 1-based line number.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const nlohmann::json&, size_t)>& fn) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                     ": malformed JSON line");
        fn(j, lineno);
    }
}

class JsonlWriter {
public:
    explicit JsonlWriter(const std::filesystem::path& path) : out_(path) {
        if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    void write(const nlohmann::json& j) { out_ << j.dump() << '\n'; }

private:
    std::ofstream out_;
};

}  // namespace teo
