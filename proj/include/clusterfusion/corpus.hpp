#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "clusterfusion/error.hpp"
#include "clusterfusion/rng.hpp"
#include "clusterfusion/text.hpp"

namespace clusterfusion {

struct Record {
    std::string id;
    std::string text;
    std::optional<std::string> gold_label;
};

struct Corpus {
    std::string name;
    std::vector<Record> records;  // load order, stable across runs

    size_t size() const { return records.size(); }

    const Record& at(size_t i) const { return records[i]; }

    const Record* find(const std::string& id) const {
        auto it = index_.find(id);
        return it == index_.end() ? nullptr : &records[it->second];
    }

    size_t row_of(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw Error(ErrorKind::validation, "unknown record id '" + id + "'");
        return it->second;
    }

    bool all_gold() const {
        for (const auto& r : records)
            if (!r.gold_label) return false;
        return !records.empty();
    }

    bool any_gold() const {
        for (const auto& r : records)
            if (r.gold_label) return true;
        return false;
    }

    std::vector<std::string> gold_label_set() const {
        std::vector<std::string> out;
        std::unordered_set<std::string> seen;
        for (const auto& r : records) {
            if (r.gold_label && seen.insert(*r.gold_label).second) out.push_back(*r.gold_label);
        }
        return out;
    }

    void rebuild_index() {
        index_.clear();
        index_.reserve(records.size());
        for (size_t i = 0; i < records.size(); ++i) index_.emplace(records[i].id, i);
    }

private:
    std::unordered_map<std::string, size_t> index_;
};

enum class CorpusFormat { jsonl, csv };

inline CorpusFormat corpus_format_from_string(const std::string& s) {
    if (s == "jsonl") return CorpusFormat::jsonl;
    if (s == "csv") return CorpusFormat::csv;
    throw Error(ErrorKind::config, "unknown corpus format '" + s + "' (expected jsonl or csv)");
}

namespace detail {

inline void validate_and_append(Corpus& corpus, Record rec,
                                std::unordered_set<std::string>& seen, size_t row) {
    if (rec.id.empty())
        throw Error(ErrorKind::validation, "row " + std::to_string(row) + ": empty id");
    if (trim(rec.text).empty())
        throw Error(ErrorKind::validation, "row " + std::to_string(row) + ": empty text for id '" + rec.id + "'");
    if (!seen.insert(rec.id).second)
        throw Error(ErrorKind::validation, "row " + std::to_string(row) + ": duplicate id '" + rec.id + "'");
    corpus.records.push_back(std::move(rec));
}

inline Corpus load_corpus_jsonl(std::istream& in, const std::string& name) {
    Corpus corpus;
    corpus.name = name;
    std::unordered_set<std::string> seen;
    std::string line;
    size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::parse, "row " + std::to_string(row) + ": " + e.what());
        }
        if (!j.is_object())
            throw Error(ErrorKind::parse, "row " + std::to_string(row) + ": expected a JSON object");
        if (!j.contains("id"))
            throw Error(ErrorKind::parse, "row " + std::to_string(row) + ": missing field 'id'");
        if (!j.contains("text") || !j["text"].is_string())
            throw Error(ErrorKind::parse, "row " + std::to_string(row) + ": missing field 'text'");
        Record rec;
        if (j["id"].is_string())
            rec.id = j["id"].get<std::string>();
        else if (j["id"].is_number_integer())
            rec.id = std::to_string(j["id"].get<long long>());
        else
            throw Error(ErrorKind::parse, "row " + std::to_string(row) + ": field 'id' must be a string or integer");
        rec.text = j["text"].get<std::string>();
        if (j.contains("label") && !j["label"].is_null()) {
            if (!j["label"].is_string())
                throw Error(ErrorKind::parse, "row " + std::to_string(row) + ": field 'label' must be a string");
            rec.gold_label = j["label"].get<std::string>();
        }
        validate_and_append(corpus, std::move(rec), seen, row);
    }
    return corpus;
}

// One CSV record per physical line; quoted fields may contain commas and ""
// escapes, not embedded newlines.
inline std::vector<std::string> split_csv_line(const std::string& line, size_t row) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c == '\r' && i + 1 == line.size()) {
            // trailing CR from CRLF files
        } else {
            cur.push_back(c);
        }
    }
    if (quoted)
        throw Error(ErrorKind::parse, "row " + std::to_string(row) + ": unterminated quoted field");
    fields.push_back(cur);
    return fields;
}

inline Corpus load_corpus_csv(std::istream& in, const std::string& name) {
    Corpus corpus;
    corpus.name = name;
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::validation, "empty corpus file");
    auto header = split_csv_line(line, 1);
    int id_col = -1, text_col = -1, label_col = -1;
    for (size_t i = 0; i < header.size(); ++i) {
        std::string h = normalize_label(header[i]);
        if (h == "id") id_col = static_cast<int>(i);
        else if (h == "text") text_col = static_cast<int>(i);
        else if (h == "label") label_col = static_cast<int>(i);
    }
    if (id_col < 0) throw Error(ErrorKind::parse, "header: missing column 'id'");
    if (text_col < 0) throw Error(ErrorKind::parse, "header: missing column 'text'");

    std::unordered_set<std::string> seen;
    size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto fields = split_csv_line(line, row);
        size_t needed = static_cast<size_t>(std::max({id_col, text_col, label_col})) + 1;
        if (fields.size() < needed)
            throw Error(ErrorKind::parse, "row " + std::to_string(row) + ": expected at least " +
                                              std::to_string(needed) + " fields, got " +
                                              std::to_string(fields.size()));
        Record rec;
        rec.id = fields[static_cast<size_t>(id_col)];
        rec.text = fields[static_cast<size_t>(text_col)];
        if (label_col >= 0 && !fields[static_cast<size_t>(label_col)].empty())
            rec.gold_label = fields[static_cast<size_t>(label_col)];
        validate_and_append(corpus, std::move(rec), seen, row);
    }
    return corpus;
}

}  // namespace detail

inline Corpus load_corpus(const std::string& path, CorpusFormat format) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open corpus file '" + path + "'");
    std::string name = path;
    if (auto pos = name.find_last_of("/\\"); pos != std::string::npos) name = name.substr(pos + 1);
    if (auto pos = name.find_last_of('.'); pos != std::string::npos) name = name.substr(0, pos);
    Corpus corpus = format == CorpusFormat::jsonl ? detail::load_corpus_jsonl(in, name)
                                                  : detail::load_corpus_csv(in, name);
    if (corpus.records.empty()) throw Error(ErrorKind::validation, "empty corpus file '" + path + "'");
    corpus.rebuild_index();
    return corpus;
}

inline void write_corpus_jsonl(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot write corpus file '" + path + "'");
    for (const auto& r : corpus.records) {
        nlohmann::ordered_json j;
        j["id"] = r.id;
        j["text"] = r.text;
        if (r.gold_label) j["label"] = *r.gold_label;
        out << j.dump() << "\n";
    }
}

// Per-label proportional subsample (at least one record per label present in
// the source), for small smoke runs against a labeled corpus.
inline Corpus stratified_subsample(const Corpus& corpus, size_t target, uint64_t seed) {
    if (!corpus.all_gold())
        throw Error(ErrorKind::validation, "stratified subsample requires gold labels on every record");
    if (target == 0 || target > corpus.size())
        throw Error(ErrorKind::validation, "subsample size must be in [1, N]");

    std::map<std::string, std::vector<size_t>> by_label;
    for (size_t i = 0; i < corpus.size(); ++i) by_label[*corpus.at(i).gold_label].push_back(i);

    SeededRng rng(seed);
    std::vector<size_t> chosen;
    const double frac = static_cast<double>(target) / static_cast<double>(corpus.size());
    for (auto& [label, rows] : by_label) {
        size_t want = static_cast<size_t>(frac * static_cast<double>(rows.size()));
        if (want < 1) want = 1;
        if (want > rows.size()) want = rows.size();
        for (size_t i = 0; i < want; ++i) {
            size_t j = i + static_cast<size_t>(rng.uniform_below(rows.size() - i));
            std::swap(rows[i], rows[j]);
            chosen.push_back(rows[i]);
        }
    }
    std::sort(chosen.begin(), chosen.end());
    if (chosen.size() > target) {
        rng.shuffle(chosen);
        chosen.resize(target);
        std::sort(chosen.begin(), chosen.end());
    }

    Corpus out;
    out.name = corpus.name + "-sub" + std::to_string(chosen.size());
    for (size_t i : chosen) out.records.push_back(corpus.at(i));
    out.rebuild_index();
    return out;
}

}  // namespace clusterfusion
