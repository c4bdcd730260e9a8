#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "clusterfusion/corpus.hpp"

namespace test_util {

// Fresh scratch directory under the test working directory.
inline std::filesystem::path temp_dir(const std::string& name) {
    std::filesystem::path dir = std::filesystem::path("test_tmp") / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
    return path.string();
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline clusterfusion::Corpus make_corpus(
    const std::vector<std::tuple<std::string, std::string, std::string>>& rows,
    const std::string& name = "test") {
    clusterfusion::Corpus corpus;
    corpus.name = name;
    for (const auto& [id, text, label] : rows) {
        clusterfusion::Record rec;
        rec.id = id;
        rec.text = text;
        if (!label.empty()) rec.gold_label = label;
        corpus.records.push_back(std::move(rec));
    }
    corpus.rebuild_index();
    return corpus;
}

}  // namespace test_util
