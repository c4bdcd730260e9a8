#pragma once

#include <bit>
#include <cstring>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "clusterfusion/corpus.hpp"
#include "clusterfusion/error.hpp"
#include "clusterfusion/text.hpp"

namespace clusterfusion {

// Aligned id -> vector store. Raw rows are kept as loaded (float32) so the
// on-disk round trip is bit-exact; unit rows are precomputed for cosine work.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;

    static EmbeddingMatrix from_rows(std::vector<std::string> ids,
                                     std::vector<std::vector<float>> rows,
                                     const std::string& provider_id) {
        if (ids.size() != rows.size())
            throw Error(ErrorKind::validation, "embedding ids/rows count mismatch");
        if (rows.empty()) throw Error(ErrorKind::validation, "empty embedding matrix");
        EmbeddingMatrix m;
        m.ids_ = std::move(ids);
        m.provider_id_ = provider_id;
        m.dim_ = rows[0].size();
        if (m.dim_ == 0) throw Error(ErrorKind::validation, "embedding dimension must be >= 1");
        m.data_.reserve(rows.size() * m.dim_);
        for (size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != m.dim_)
                throw Error(ErrorKind::validation,
                            "dimension mismatch: row " + std::to_string(i) + " has " +
                                std::to_string(rows[i].size()) + " entries, expected " +
                                std::to_string(m.dim_));
            m.data_.insert(m.data_.end(), rows[i].begin(), rows[i].end());
        }
        m.finish();
        return m;
    }

    static EmbeddingMatrix from_flat(std::vector<std::string> ids, std::vector<float> data,
                                     size_t dim, const std::string& provider_id) {
        if (dim == 0) throw Error(ErrorKind::validation, "embedding dimension must be >= 1");
        if (ids.empty() || data.size() != ids.size() * dim)
            throw Error(ErrorKind::validation, "embedding payload size does not match ids x dim");
        EmbeddingMatrix m;
        m.ids_ = std::move(ids);
        m.data_ = std::move(data);
        m.dim_ = dim;
        m.provider_id_ = provider_id;
        m.finish();
        return m;
    }

    size_t rows() const { return ids_.size(); }
    size_t dim() const { return dim_; }
    const std::string& provider_id() const { return provider_id_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<float>& raw_data() const { return data_; }

    std::span<const float> row(size_t i) const { return {data_.data() + i * dim_, dim_}; }
    std::span<const float> unit_row(size_t i) const { return {unit_.data() + i * dim_, dim_}; }

    size_t row_of(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end())
            throw Error(ErrorKind::validation, "no embedding for record id '" + id + "'");
        return it->second;
    }

    bool has(const std::string& id) const { return index_.count(id) != 0; }

private:
    void finish() {
        for (size_t i = 0; i < data_.size(); ++i) {
            if (!std::isfinite(data_[i]))
                throw Error(ErrorKind::validation,
                            "non-finite embedding value at row " + std::to_string(i / dim_));
        }
        unit_.resize(data_.size());
        for (size_t r = 0; r < rows(); ++r) {
            double norm2 = 0.0;
            const float* src = data_.data() + r * dim_;
            for (size_t j = 0; j < dim_; ++j) norm2 += static_cast<double>(src[j]) * src[j];
            const double norm = std::sqrt(norm2);
            float* dst = unit_.data() + r * dim_;
            if (norm == 0.0) {
                std::fill(dst, dst + dim_, 0.0f);
            } else {
                for (size_t j = 0; j < dim_; ++j)
                    dst[j] = static_cast<float>(static_cast<double>(src[j]) / norm);
            }
        }
        index_.clear();
        index_.reserve(ids_.size());
        for (size_t i = 0; i < ids_.size(); ++i) {
            if (!index_.emplace(ids_[i], i).second)
                throw Error(ErrorKind::validation, "duplicate id '" + ids_[i] + "' in embedding matrix");
        }
    }

    std::vector<std::string> ids_;
    std::vector<float> data_;  // row-major N x dim
    std::vector<float> unit_;  // L2-normalized rows
    size_t dim_ = 0;
    std::string provider_id_;
    std::unordered_map<std::string, size_t> index_;
};

inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    double dot = 0.0;
    for (size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
    return dot;
}

inline double euclidean_distance(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = static_cast<double>(a[i]) - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// Deterministic offline embedder: every token hashes (with the seed) into one
// coordinate with a hash-derived sign, so texts sharing tokens land on shared
// coordinates and score high cosine similarity. Output is L2-normalized.
inline std::vector<double> test_embedder(const std::string& text, size_t d, uint64_t seed) {
    if (d == 0) throw Error(ErrorKind::validation, "embedding dimension must be >= 1");
    std::vector<double> v(d, 0.0);
    const uint64_t salt = seed * 0x9E3779B97F4A7C15ULL + 0xD6E8FEB86659FD93ULL;
    for (const auto& tok : tokenize(text)) {
        uint64_t h = fnv1a64(tok) ^ salt;
        h ^= h >> 29;
        h *= 0xBF58476D1CE4E5B9ULL;
        h ^= h >> 32;
        v[h % d] += ((h >> 32) & 1) ? 1.0 : -1.0;
    }
    double norm2 = 0.0;
    for (double x : v) norm2 += x * x;
    if (norm2 == 0.0) {
        uint64_t h = fnv1a64(text) ^ salt;
        v[h % d] = 1.0;
        norm2 = 1.0;
    }
    const double norm = std::sqrt(norm2);
    for (double& x : v) x /= norm;
    return v;
}

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string id() const = 0;
    virtual bool remote() const = 0;
    virtual std::vector<std::vector<float>> embed_batch(const std::vector<std::string>& texts) = 0;
};

class TestEmbeddingProvider : public EmbeddingProvider {
public:
    TestEmbeddingProvider(size_t dim, uint64_t seed) : dim_(dim), seed_(seed) {}

    std::string id() const override {
        return "test-embedder-d" + std::to_string(dim_) + "-s" + std::to_string(seed_);
    }
    bool remote() const override { return false; }

    std::vector<std::vector<float>> embed_batch(const std::vector<std::string>& texts) override {
        std::vector<std::vector<float>> out;
        out.reserve(texts.size());
        for (const auto& t : texts) {
            const auto v = test_embedder(t, dim_, seed_);
            out.emplace_back(v.begin(), v.end());
        }
        return out;
    }

private:
    size_t dim_;
    uint64_t seed_;
};

struct EmbedResult {
    EmbeddingMatrix matrix;
    size_t batches = 0;
    bool remote = false;
};

inline EmbedResult embed_corpus(const Corpus& corpus, EmbeddingProvider& provider,
                                size_t batch_size = 64) {
    if (batch_size == 0) batch_size = 64;
    std::vector<std::string> ids;
    std::vector<std::vector<float>> rows;
    ids.reserve(corpus.size());
    rows.reserve(corpus.size());
    size_t batches = 0;
    for (size_t start = 0; start < corpus.size(); start += batch_size) {
        const size_t end = std::min(corpus.size(), start + batch_size);
        std::vector<std::string> texts;
        texts.reserve(end - start);
        for (size_t i = start; i < end; ++i) texts.push_back(corpus.at(i).text);
        auto vecs = provider.embed_batch(texts);
        ++batches;
        if (vecs.size() != texts.size())
            throw Error(ErrorKind::validation,
                        "provider returned " + std::to_string(vecs.size()) + " vectors for " +
                            std::to_string(texts.size()) + " inputs");
        for (size_t i = start; i < end; ++i) {
            ids.push_back(corpus.at(i).id);
            rows.push_back(std::move(vecs[i - start]));
        }
    }
    EmbedResult res;
    res.matrix = EmbeddingMatrix::from_rows(std::move(ids), std::move(rows), provider.id());
    res.batches = batches;
    res.remote = provider.remote();
    return res;
}

inline void require_aligned(const EmbeddingMatrix& matrix, const Corpus& corpus) {
    if (matrix.rows() != corpus.size())
        throw Error(ErrorKind::validation,
                    "embedding matrix has " + std::to_string(matrix.rows()) + " rows, corpus has " +
                        std::to_string(corpus.size()));
    for (size_t i = 0; i < corpus.size(); ++i) {
        if (matrix.ids()[i] != corpus.at(i).id)
            throw Error(ErrorKind::validation,
                        "embedding/corpus id mismatch at row " + std::to_string(i) + ": '" +
                            matrix.ids()[i] + "' vs '" + corpus.at(i).id + "'");
    }
}

// --- binary embedding file -------------------------------------------------
//
//   magic "CFEMB001" | u32 N | u32 d | u32 len + provider_id
//   | N x (u32 len + id bytes) | N*d float32, row-major, little-endian

namespace detail {

constexpr char kEmbeddingMagic[8] = {'C', 'F', 'E', 'M', 'B', '0', '0', '1'};

inline void put_u32(std::ostream& out, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                 static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    out.write(b, 4);
}

inline uint32_t get_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw Error(ErrorKind::parse, std::string("truncated embedding file while reading ") + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, const char* what) {
    uint32_t len = get_u32(in, what);
    std::string s(len, '\0');
    if (len > 0 && !in.read(s.data(), len))
        throw Error(ErrorKind::parse, std::string("truncated embedding file while reading ") + what);
    return s;
}

}  // namespace detail

inline void save_embeddings(const EmbeddingMatrix& matrix, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write embedding file '" + path + "'");
    out.write(detail::kEmbeddingMagic, 8);
    detail::put_u32(out, static_cast<uint32_t>(matrix.rows()));
    detail::put_u32(out, static_cast<uint32_t>(matrix.dim()));
    detail::put_string(out, matrix.provider_id());
    for (const auto& id : matrix.ids()) detail::put_string(out, id);
    for (float f : matrix.raw_data()) detail::put_u32(out, std::bit_cast<uint32_t>(f));
    if (!out) throw Error(ErrorKind::io, "write failed for embedding file '" + path + "'");
}

inline EmbeddingMatrix load_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open embedding file '" + path + "'");
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, detail::kEmbeddingMagic, 8) != 0)
        throw Error(ErrorKind::parse, "not an embedding file (bad magic): '" + path + "'");
    const uint32_t n = detail::get_u32(in, "row count");
    const uint32_t d = detail::get_u32(in, "dimension");
    if (n == 0 || d == 0) throw Error(ErrorKind::parse, "embedding file declares empty matrix");
    const std::string provider_id = detail::get_string(in, "provider id");
    std::vector<std::string> ids;
    ids.reserve(n);
    for (uint32_t i = 0; i < n; ++i) ids.push_back(detail::get_string(in, "record id"));
    std::vector<float> data;
    data.reserve(static_cast<size_t>(n) * d);
    for (size_t i = 0; i < static_cast<size_t>(n) * d; ++i) {
        uint32_t bits = detail::get_u32(in, "vector payload");
        float f = std::bit_cast<float>(bits);
        if (!std::isfinite(f))
            throw Error(ErrorKind::validation,
                        "non-finite value in embedding payload at index " + std::to_string(i));
        data.push_back(f);
    }
    char extra;
    if (in.read(&extra, 1))
        throw Error(ErrorKind::parse, "embedding payload longer than declared header");
    return EmbeddingMatrix::from_flat(std::move(ids), std::move(data), d, provider_id);
}

inline void write_embeddings_jsonl(const EmbeddingMatrix& matrix, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot write embedding debug file '" + path + "'");
    for (size_t i = 0; i < matrix.rows(); ++i) {
        nlohmann::ordered_json j;
        j["id"] = matrix.ids()[i];
        auto r = matrix.row(i);
        j["vector"] = std::vector<float>(r.begin(), r.end());
        out << j.dump() << "\n";
    }
}

}  // namespace clusterfusion
