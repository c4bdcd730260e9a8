#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "clusterfusion/corpus.hpp"
#include "clusterfusion/embedding.hpp"
#include "clusterfusion/error.hpp"
#include "clusterfusion/rng.hpp"

namespace clusterfusion {

enum class KMeansSpace {
    unit,  // squared Euclidean on L2-normalized rows (cosine-consistent)
    raw,   // squared Euclidean on raw rows
};

struct GroupingResult {
    int group_count = 0;
    std::vector<int> assignment;                    // aligned with matrix row order
    std::unordered_map<std::string, int> group_of;  // record id -> group index
    std::vector<float> centroids;                   // group_count x dim, row-major
    size_t dim = 0;
    double inertia = 0.0;
    std::vector<double> inertia_history;  // one entry per assignment pass
    int iterations = 0;

    std::vector<size_t> group_sizes() const {
        std::vector<size_t> sizes(static_cast<size_t>(group_count), 0);
        for (int g : assignment) ++sizes[static_cast<size_t>(g)];
        return sizes;
    }
};

namespace detail {

inline double sq_dist(const float* a, const float* b, size_t d) {
    double s = 0.0;
    for (size_t j = 0; j < d; ++j) {
        double diff = static_cast<double>(a[j]) - b[j];
        s += diff * diff;
    }
    return s;
}

}  // namespace detail

// Lloyd k-means with k-means++ seeding. Runs until the assignment reaches a
// fixpoint or max_iters passes; empty groups are reseeded to the point
// currently farthest from its own centroid, which keeps the per-pass inertia
// sequence non-increasing.
inline GroupingResult group_embeddings(const EmbeddingMatrix& matrix, int m, uint64_t seed,
                                       KMeansSpace space = KMeansSpace::unit,
                                       int max_iters = 300) {
    const size_t n = matrix.rows();
    const size_t d = matrix.dim();
    if (m < 1) throw Error(ErrorKind::validation, "group count must be >= 1");
    if (static_cast<size_t>(m) > n)
        throw Error(ErrorKind::validation, "group count " + std::to_string(m) +
                                               " exceeds corpus size " + std::to_string(n));

    auto point = [&](size_t i) -> const float* {
        return space == KMeansSpace::unit ? matrix.unit_row(i).data() : matrix.row(i).data();
    };

    SeededRng rng(seed);
    const size_t k = static_cast<size_t>(m);

    // k-means++: first center uniform, then proportional to squared distance.
    std::vector<float> centroids(k * d);
    std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
    {
        size_t first = static_cast<size_t>(rng.uniform_below(n));
        std::copy(point(first), point(first) + d, centroids.begin());
        for (size_t i = 0; i < n; ++i) min_sq[i] = detail::sq_dist(point(i), centroids.data(), d);
        for (size_t c = 1; c < k; ++c) {
            double total = 0.0;
            for (double v : min_sq) total += v;
            size_t chosen;
            if (total <= 0.0) {
                chosen = static_cast<size_t>(rng.uniform_below(n));
            } else {
                double target = rng.next_double() * total;
                double acc = 0.0;
                chosen = n - 1;
                for (size_t i = 0; i < n; ++i) {
                    acc += min_sq[i];
                    if (acc >= target) {
                        chosen = i;
                        break;
                    }
                }
            }
            float* dst = centroids.data() + c * d;
            std::copy(point(chosen), point(chosen) + d, dst);
            for (size_t i = 0; i < n; ++i)
                min_sq[i] = std::min(min_sq[i], detail::sq_dist(point(i), dst, d));
        }
    }

    std::vector<int> assignment(n, -1);
    std::vector<double> history;
    int iters = 0;

    auto assign_pass = [&]() -> std::pair<bool, double> {
        bool changed = false;
        double inertia = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_g = 0;
            for (size_t c = 0; c < k; ++c) {
                double dist = detail::sq_dist(point(i), centroids.data() + c * d, d);
                if (dist < best) {
                    best = dist;
                    best_g = static_cast<int>(c);
                }
            }
            if (assignment[i] != best_g) {
                assignment[i] = best_g;
                changed = true;
            }
            inertia += best;
        }
        return {changed, inertia};
    };

    for (int pass = 0; pass < max_iters; ++pass) {
        auto [changed, inertia] = assign_pass();
        history.push_back(inertia);
        iters = pass + 1;
        if (!changed && pass > 0) break;

        // centroid update
        std::vector<double> sums(k * d, 0.0);
        std::vector<size_t> counts(k, 0);
        for (size_t i = 0; i < n; ++i) {
            const size_t g = static_cast<size_t>(assignment[i]);
            ++counts[g];
            const float* p = point(i);
            double* s = sums.data() + g * d;
            for (size_t j = 0; j < d; ++j) s[j] += p[j];
        }
        std::vector<size_t> empties;
        for (size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                empties.push_back(c);
                continue;
            }
            float* dst = centroids.data() + c * d;
            const double* s = sums.data() + c * d;
            for (size_t j = 0; j < d; ++j)
                dst[j] = static_cast<float>(s[j] / static_cast<double>(counts[c]));
        }
        // reseed each empty group to the point farthest from its centroid
        if (!empties.empty()) {
            std::vector<bool> taken(n, false);
            for (size_t c : empties) {
                double worst = -1.0;
                size_t pick = 0;
                for (size_t i = 0; i < n; ++i) {
                    if (taken[i]) continue;
                    const size_t g = static_cast<size_t>(assignment[i]);
                    double dist = detail::sq_dist(point(i), centroids.data() + g * d, d);
                    if (dist > worst) {
                        worst = dist;
                        pick = i;
                    }
                }
                taken[pick] = true;
                std::copy(point(pick), point(pick) + d, centroids.begin() + c * d);
            }
        }
    }

    GroupingResult res;
    res.group_count = m;
    res.assignment = std::move(assignment);
    res.centroids = std::move(centroids);
    res.dim = d;
    res.inertia = history.back();
    res.inertia_history = std::move(history);
    res.iterations = iters;
    res.group_of.reserve(n);
    for (size_t i = 0; i < n; ++i) res.group_of.emplace(matrix.ids()[i], res.assignment[i]);
    return res;
}

enum class OrderVariant { unsorted, cluster_order, similarity_order, oracle_order };
enum class SimilarityMetric { cosine, euclidean };

struct OrderStrategy {
    OrderVariant variant = OrderVariant::unsorted;
    SimilarityMetric metric = SimilarityMetric::cosine;

    static OrderStrategy parse(const std::string& s) {
        if (s == "unsorted") return {OrderVariant::unsorted, SimilarityMetric::cosine};
        if (s == "cluster" || s == "kmeans")
            return {OrderVariant::cluster_order, SimilarityMetric::cosine};
        if (s == "cosine") return {OrderVariant::similarity_order, SimilarityMetric::cosine};
        if (s == "euclidean") return {OrderVariant::similarity_order, SimilarityMetric::euclidean};
        if (s == "oracle") return {OrderVariant::oracle_order, SimilarityMetric::cosine};
        throw Error(ErrorKind::config, "unknown order strategy '" + s +
                                           "' (expected unsorted|cluster|cosine|euclidean|oracle)");
    }

    std::string to_string() const {
        switch (variant) {
            case OrderVariant::unsorted: return "unsorted";
            case OrderVariant::cluster_order: return "cluster";
            case OrderVariant::similarity_order:
                return metric == SimilarityMetric::cosine ? "cosine" : "euclidean";
            case OrderVariant::oracle_order: return "oracle";
        }
        return "unsorted";
    }
};

struct SubsetItem {
    std::string record_id;
    int group_index = 0;
};

struct SampledSubset {
    std::vector<SubsetItem> items;
    int quota = 0;  // floor(S / M)
    OrderStrategy order_strategy;
    uint64_t seed = 0;
};

// Draws floor(S/M) records from every group: without replacement where the
// group is large enough, with replacement otherwise. The pooled subset is
// then shuffled once so the position-0 anchor used by similarity ordering is
// a uniformly random member rather than an artifact of group enumeration.
inline SampledSubset balanced_sample(const Corpus& corpus, const GroupingResult& grouping,
                                     int total, uint64_t seed) {
    const int m = grouping.group_count;
    if (total < m)
        throw Error(ErrorKind::validation, "sample size " + std::to_string(total) +
                                               " is below group count " + std::to_string(m));
    const int quota = total / m;

    std::vector<std::vector<std::string>> members(static_cast<size_t>(m));
    for (const auto& rec : corpus.records) {
        auto it = grouping.group_of.find(rec.id);
        if (it == grouping.group_of.end())
            throw Error(ErrorKind::validation, "record '" + rec.id + "' missing from grouping");
        members[static_cast<size_t>(it->second)].push_back(rec.id);
    }

    SeededRng rng(seed);
    SampledSubset subset;
    subset.quota = quota;
    subset.seed = seed;
    subset.order_strategy = {OrderVariant::unsorted, SimilarityMetric::cosine};
    subset.items.reserve(static_cast<size_t>(m) * static_cast<size_t>(quota));

    for (int g = 0; g < m; ++g) {
        auto& pool = members[static_cast<size_t>(g)];
        if (pool.empty())
            throw Error(ErrorKind::validation, "group " + std::to_string(g) + " is empty");
        const bool replace = pool.size() < static_cast<size_t>(quota);
        if (replace) {
            for (int i = 0; i < quota; ++i) {
                size_t j = static_cast<size_t>(rng.uniform_below(pool.size()));
                subset.items.push_back({pool[j], g});
            }
        } else {
            for (int i = 0; i < quota; ++i) {
                size_t j = static_cast<size_t>(i) +
                           static_cast<size_t>(rng.uniform_below(pool.size() - static_cast<size_t>(i)));
                std::swap(pool[static_cast<size_t>(i)], pool[j]);
                subset.items.push_back({pool[static_cast<size_t>(i)], g});
            }
        }
    }
    rng.shuffle(subset.items);
    return subset;
}

inline SampledSubset order_subset(const SampledSubset& subset, const EmbeddingMatrix& matrix,
                                  const Corpus& corpus, OrderStrategy strategy, uint64_t seed) {
    SampledSubset out = subset;
    out.order_strategy = strategy;

    switch (strategy.variant) {
        case OrderVariant::unsorted: {
            SeededRng rng(seed);
            rng.shuffle(out.items);
            break;
        }
        case OrderVariant::cluster_order: {
            std::stable_sort(out.items.begin(), out.items.end(),
                             [](const SubsetItem& a, const SubsetItem& b) {
                                 return a.group_index < b.group_index;
                             });
            break;
        }
        case OrderVariant::similarity_order: {
            if (out.items.empty()) break;
            for (const auto& item : out.items) {
                if (!matrix.has(item.record_id))
                    throw Error(ErrorKind::validation,
                                "no embedding for subset record '" + item.record_id + "'");
            }
            const size_t anchor = matrix.row_of(out.items.front().record_id);
            // key: descending cosine, or ascending Euclidean distance
            std::vector<double> key(out.items.size());
            for (size_t i = 0; i < out.items.size(); ++i) {
                const size_t r = matrix.row_of(out.items[i].record_id);
                key[i] = strategy.metric == SimilarityMetric::cosine
                             ? -cosine_similarity(matrix.unit_row(anchor), matrix.unit_row(r))
                             : euclidean_distance(matrix.row(anchor), matrix.row(r));
            }
            std::vector<size_t> order(out.items.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin() + 1, order.end(), [&](size_t a, size_t b) {
                if (key[a] != key[b]) return key[a] < key[b];
                return out.items[a].record_id < out.items[b].record_id;
            });
            std::vector<SubsetItem> sorted;
            sorted.reserve(out.items.size());
            for (size_t i : order) sorted.push_back(out.items[i]);
            out.items = std::move(sorted);
            break;
        }
        case OrderVariant::oracle_order: {
            std::vector<std::string> gold(out.items.size());
            for (size_t i = 0; i < out.items.size(); ++i) {
                const Record* rec = corpus.find(out.items[i].record_id);
                if (!rec || !rec->gold_label)
                    throw Error(ErrorKind::validation,
                                "oracle ordering requires a gold label for record '" +
                                    out.items[i].record_id + "'");
                gold[i] = *rec->gold_label;
            }
            std::vector<size_t> order(out.items.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(),
                             [&](size_t a, size_t b) { return gold[a] < gold[b]; });
            std::vector<SubsetItem> sorted;
            sorted.reserve(out.items.size());
            for (size_t i : order) sorted.push_back(out.items[i]);
            out.items = std::move(sorted);
            break;
        }
    }
    return out;
}

// Audit dump: one line per exemplar in prompt order.
inline void write_subset_jsonl(const SampledSubset& subset, const Corpus& corpus,
                               const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot write subset file '" + path + "'");
    for (size_t i = 0; i < subset.items.size(); ++i) {
        const Record* rec = corpus.find(subset.items[i].record_id);
        nlohmann::ordered_json j;
        j["position"] = i;
        j["id"] = subset.items[i].record_id;
        j["group"] = subset.items[i].group_index;
        j["text"] = rec ? rec->text : "";
        out << j.dump() << "\n";
    }
}

inline SampledSubset read_subset_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open subset file '" + path + "'");
    SampledSubset subset;
    std::string line;
    size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::parse, "subset row " + std::to_string(row) + ": " + e.what());
        }
        SubsetItem item;
        item.record_id = j.at("id").get<std::string>();
        item.group_index = j.at("group").get<int>();
        subset.items.push_back(std::move(item));
    }
    if (subset.items.empty())
        throw Error(ErrorKind::validation, "empty subset file '" + path + "'");
    return subset;
}

}  // namespace clusterfusion
