#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "clusterfusion/partition.hpp"
#include "test_util.hpp"

using namespace clusterfusion;

namespace {

EmbeddingMatrix matrix_from(const std::vector<std::vector<float>>& rows,
                            const std::string& prefix = "r") {
    std::vector<std::string> ids;
    for (size_t i = 0; i < rows.size(); ++i) ids.push_back(prefix + std::to_string(i));
    return EmbeddingMatrix::from_rows(ids, rows, "test");
}

double gauss(SeededRng& rng) {
    // Box-Muller on the raw uniform stream
    double u1 = rng.next_double();
    while (u1 <= 1e-12) u1 = rng.next_double();
    double u2 = rng.next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Two well-separated blobs at (+10, 0) and (-10, 0).
struct BlobData {
    EmbeddingMatrix matrix;
    std::vector<int> labels;
};

BlobData two_blobs(size_t n, double sigma, uint64_t seed) {
    SeededRng rng(seed);
    std::vector<std::vector<float>> rows;
    std::vector<int> labels;
    for (size_t i = 0; i < n; ++i) {
        const int label = i < n / 2 ? 0 : 1;
        const double cx = label == 0 ? 10.0 : -10.0;
        rows.push_back({static_cast<float>(cx + sigma * gauss(rng)),
                        static_cast<float>(sigma * gauss(rng))});
        labels.push_back(label);
    }
    BlobData data{matrix_from(rows), labels};
    return data;
}

GroupingResult grouping_from_sizes(const Corpus& corpus, const std::vector<size_t>& sizes) {
    GroupingResult g;
    g.group_count = static_cast<int>(sizes.size());
    g.dim = 1;
    size_t next = 0;
    for (size_t m = 0; m < sizes.size(); ++m) {
        for (size_t i = 0; i < sizes[m]; ++i) {
            g.group_of[corpus.at(next).id] = static_cast<int>(m);
            g.assignment.push_back(static_cast<int>(m));
            ++next;
        }
    }
    REQUIRE(next == corpus.size());
    return g;
}

Corpus corpus_of_size(size_t n) {
    std::vector<std::tuple<std::string, std::string, std::string>> rows;
    for (size_t i = 0; i < n; ++i)
        rows.emplace_back("r" + std::to_string(i), "text " + std::to_string(i), "");
    return test_util::make_corpus(rows);
}

}  // namespace

TEST_CASE("kmeans with one group") {
    auto matrix = matrix_from({{1.0f, 0.0f}, {0.0f, 1.0f}, {1.0f, 1.0f}});
    auto g = group_embeddings(matrix, 1, 3, KMeansSpace::raw);
    REQUIRE(g.group_count == 1);
    REQUIRE(g.assignment == std::vector<int>{0, 0, 0});
    // centroid is the mean of all vectors
    REQUIRE(g.centroids[0] == Catch::Approx(2.0 / 3.0));
    REQUIRE(g.centroids[1] == Catch::Approx(2.0 / 3.0));
}

TEST_CASE("kmeans separates two blobs") {
    for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        auto data = two_blobs(100, 0.1, 500 + seed);
        auto g = group_embeddings(data.matrix, 2, seed);
        // groups must match the generating labels exactly (up to swap)
        std::map<int, std::set<int>> groups_per_label;
        for (size_t i = 0; i < data.labels.size(); ++i)
            groups_per_label[data.labels[i]].insert(g.assignment[i]);
        REQUIRE(groups_per_label[0].size() == 1);
        REQUIRE(groups_per_label[1].size() == 1);
        REQUIRE(*groups_per_label[0].begin() != *groups_per_label[1].begin());
    }
}

TEST_CASE("kmeans with M = N gives singleton groups and zero inertia") {
    auto matrix = matrix_from({{0.0f, 0.0f}, {1.0f, 0.0f}, {0.0f, 1.0f}, {5.0f, 5.0f}});
    auto g = group_embeddings(matrix, 4, 9, KMeansSpace::raw);
    std::set<int> groups(g.assignment.begin(), g.assignment.end());
    REQUIRE(groups.size() == 4);
    REQUIRE(g.inertia == Catch::Approx(0.0).margin(1e-12));
    // every point sits exactly on its own centroid
    for (size_t i = 0; i < 4; ++i) {
        const auto row = matrix.row(i);
        const float* c = g.centroids.data() + static_cast<size_t>(g.assignment[i]) * g.dim;
        for (size_t j = 0; j < g.dim; ++j) REQUIRE(row[j] == Catch::Approx(c[j]).margin(1e-12));
    }
}

TEST_CASE("kmeans validation") {
    auto matrix = matrix_from({{1.0f}, {2.0f}});
    REQUIRE_THROWS_AS(group_embeddings(matrix, 3, 1), Error);
    REQUIRE_THROWS_AS(group_embeddings(matrix, 0, 1), Error);
}

TEST_CASE("kmeans inertia history is non-increasing") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        SeededRng rng(1000 + seed);
        std::vector<std::vector<float>> rows;
        for (int i = 0; i < 120; ++i)
            rows.push_back({static_cast<float>(gauss(rng)), static_cast<float>(gauss(rng)),
                            static_cast<float>(gauss(rng))});
        auto g = group_embeddings(matrix_from(rows), 7, seed, KMeansSpace::raw);
        for (size_t t = 1; t < g.inertia_history.size(); ++t)
            REQUIRE(g.inertia_history[t] <= g.inertia_history[t - 1] + 1e-9);
        REQUIRE(g.inertia == g.inertia_history.back());
    }
}

TEST_CASE("kmeans is deterministic in the seed") {
    auto data = two_blobs(60, 0.5, 77);
    auto g1 = group_embeddings(data.matrix, 5, 42);
    auto g2 = group_embeddings(data.matrix, 5, 42);
    REQUIRE(g1.assignment == g2.assignment);
    REQUIRE(g1.centroids == g2.centroids);
    REQUIRE(g1.inertia_history == g2.inertia_history);
}

TEST_CASE("balanced sample quotas") {
    SECTION("all groups large enough: no duplicates") {
        Corpus corpus = corpus_of_size(30);
        auto grouping = grouping_from_sizes(corpus, {10, 10, 10});
        auto subset = balanced_sample(corpus, grouping, 9, 5);
        REQUIRE(subset.quota == 3);
        REQUIRE(subset.items.size() == 9);
        std::set<std::string> ids;
        std::map<int, int> per_group;
        for (const auto& item : subset.items) {
            ids.insert(item.record_id);
            ++per_group[item.group_index];
        }
        REQUIRE(ids.size() == 9);
        for (int g = 0; g < 3; ++g) REQUIRE(per_group[g] == 3);
    }

    SECTION("deficient group samples with replacement") {
        Corpus corpus = corpus_of_size(22);
        auto grouping = grouping_from_sizes(corpus, {10, 2, 10});
        auto subset = balanced_sample(corpus, grouping, 9, 5);
        REQUIRE(subset.items.size() == 9);
        std::map<std::string, int> times;
        for (const auto& item : subset.items) ++times[item.record_id];
        for (const auto& [id, count] : times) {
            if (count > 1) {
                // duplicates may only come from the deficient group
                REQUIRE(grouping.group_of.at(id) == 1);
            }
        }
        int group1 = 0;
        for (const auto& item : subset.items) group1 += item.group_index == 1 ? 1 : 0;
        REQUIRE(group1 == 3);  // 3 draws from 2 records forces a duplicate
    }

    SECTION("quota flooring accepts the shortfall") {
        Corpus corpus = corpus_of_size(30);
        auto grouping = grouping_from_sizes(corpus, {10, 10, 10});
        auto subset = balanced_sample(corpus, grouping, 10, 5);
        REQUIRE(subset.quota == 3);
        REQUIRE(subset.items.size() == 9);
    }

    SECTION("sample size below group count rejected") {
        Corpus corpus = corpus_of_size(6);
        auto grouping = grouping_from_sizes(corpus, {2, 2, 2});
        REQUIRE_THROWS_AS(balanced_sample(corpus, grouping, 2, 5), Error);
    }

    SECTION("same seed reproduces, different seed may differ") {
        Corpus corpus = corpus_of_size(30);
        auto grouping = grouping_from_sizes(corpus, {15, 15});
        auto s1 = balanced_sample(corpus, grouping, 10, 1);
        auto s2 = balanced_sample(corpus, grouping, 10, 1);
        auto s3 = balanced_sample(corpus, grouping, 10, 2);
        auto ids = [](const SampledSubset& s) {
            std::vector<std::string> v;
            for (const auto& i : s.items) v.push_back(i.record_id);
            return v;
        };
        REQUIRE(ids(s1) == ids(s2));
        REQUIRE(ids(s1) != ids(s3));
    }
}

TEST_CASE("balanced sample invariants over random configurations") {
    SeededRng meta(4242);
    for (int trial = 0; trial < 60; ++trial) {
        const int m = 1 + static_cast<int>(meta.uniform_below(6));
        std::vector<size_t> sizes;
        size_t n = 0;
        for (int g = 0; g < m; ++g) {
            size_t sz = 1 + meta.uniform_below(12);
            sizes.push_back(sz);
            n += sz;
        }
        const int total = m + static_cast<int>(meta.uniform_below(30));
        Corpus corpus = corpus_of_size(n);
        auto grouping = grouping_from_sizes(corpus, sizes);
        auto subset = balanced_sample(corpus, grouping, total, meta.next_u64());

        const int quota = total / m;
        REQUIRE(static_cast<int>(subset.items.size()) == m * quota);
        std::map<int, int> per_group;
        std::map<int, std::map<std::string, int>> dup_count;
        for (const auto& item : subset.items) {
            ++per_group[item.group_index];
            ++dup_count[item.group_index][item.record_id];
        }
        for (int g = 0; g < m; ++g) {
            REQUIRE(per_group[g] == quota);
            const bool replace_flag = sizes[static_cast<size_t>(g)] < static_cast<size_t>(quota);
            if (!replace_flag) {
                for (const auto& [id, c] : dup_count[g]) REQUIRE(c == 1);
            }
        }
    }
}

TEST_CASE("cluster order is a stable sort by group index") {
    Corpus corpus = corpus_of_size(4);
    EmbeddingMatrix matrix = matrix_from({{1.f}, {2.f}, {3.f}, {4.f}});
    SampledSubset subset;
    subset.items = {{"r0", 2}, {"r1", 0}, {"r2", 1}, {"r3", 0}};
    auto ordered = order_subset(subset, matrix, corpus, OrderStrategy::parse("cluster"), 0);
    std::vector<int> groups;
    std::vector<std::string> ids;
    for (const auto& item : ordered.items) {
        groups.push_back(item.group_index);
        ids.push_back(item.record_id);
    }
    REQUIRE(groups == std::vector<int>{0, 0, 1, 2});
    REQUIRE(ids == std::vector<std::string>{"r1", "r3", "r2", "r0"});  // stable within group
}

TEST_CASE("cosine order: analytic similarities") {
    Corpus corpus = test_util::make_corpus(
        {{"a", "ta", ""}, {"b", "tb", ""}, {"c", "tc", ""}, {"d", "td", ""}});
    auto matrix = EmbeddingMatrix::from_rows({"a", "b", "c", "d"},
                                             {{1.f, 0.f}, {1.f, 0.f}, {0.f, 1.f}, {-1.f, 0.f}},
                                             "test");
    SampledSubset subset;
    subset.items = {{"a", 0}, {"d", 0}, {"c", 0}, {"b", 0}};  // anchor is "a"
    auto ordered = order_subset(subset, matrix, corpus, OrderStrategy::parse("cosine"), 0);
    std::vector<std::string> ids;
    for (const auto& item : ordered.items) ids.push_back(item.record_id);
    // similarities to anchor: b=1, c=0, d=-1
    REQUIRE(ids == std::vector<std::string>{"a", "b", "c", "d"});
}

TEST_CASE("euclidean order sorts ascending distance on raw vectors") {
    Corpus corpus = test_util::make_corpus(
        {{"a", "ta", ""}, {"b", "tb", ""}, {"c", "tc", ""}});
    auto matrix = EmbeddingMatrix::from_rows({"a", "b", "c"},
                                             {{0.f, 0.f}, {3.f, 0.f}, {1.f, 0.f}}, "test");
    SampledSubset subset;
    subset.items = {{"a", 0}, {"b", 0}, {"c", 0}};
    auto ordered = order_subset(subset, matrix, corpus, OrderStrategy::parse("euclidean"), 0);
    std::vector<std::string> ids;
    for (const auto& item : ordered.items) ids.push_back(item.record_id);
    REQUIRE(ids == std::vector<std::string>{"a", "c", "b"});
}

TEST_CASE("oracle order sorts by gold label") {
    Corpus corpus = test_util::make_corpus(
        {{"r0", "t0", "b"}, {"r1", "t1", "a"}, {"r2", "t2", "b"}, {"r3", "t3", "a"}});
    EmbeddingMatrix matrix = matrix_from({{1.f}, {2.f}, {3.f}, {4.f}});
    SampledSubset subset;
    subset.items = {{"r0", 0}, {"r1", 0}, {"r2", 0}, {"r3", 0}};
    auto ordered = order_subset(subset, matrix, corpus, OrderStrategy::parse("oracle"), 0);
    std::vector<std::string> golds;
    for (const auto& item : ordered.items) golds.push_back(*corpus.find(item.record_id)->gold_label);
    REQUIRE(golds == std::vector<std::string>{"a", "a", "b", "b"});
    std::vector<std::string> ids;
    for (const auto& item : ordered.items) ids.push_back(item.record_id);
    REQUIRE(ids == std::vector<std::string>{"r1", "r3", "r0", "r2"});  // stable
}

TEST_CASE("oracle order requires gold labels") {
    Corpus corpus = test_util::make_corpus({{"r0", "t0", ""}});
    EmbeddingMatrix matrix = matrix_from({{1.f}});
    SampledSubset subset;
    subset.items = {{"r0", 0}};
    REQUIRE_THROWS_WITH(order_subset(subset, matrix, corpus, OrderStrategy::parse("oracle"), 0),
                        Catch::Matchers::ContainsSubstring("gold label"));
}

TEST_CASE("similarity order requires embedding coverage") {
    Corpus corpus = test_util::make_corpus({{"r0", "t0", ""}, {"zz", "tz", ""}});
    EmbeddingMatrix matrix = matrix_from({{1.f, 0.f}});
    SampledSubset subset;
    subset.items = {{"r0", 0}, {"zz", 0}};
    REQUIRE_THROWS_WITH(order_subset(subset, matrix, corpus, OrderStrategy::parse("cosine"), 0),
                        Catch::Matchers::ContainsSubstring("no embedding"));
}

TEST_CASE("unsorted is a seeded multiset-preserving permutation") {
    Corpus corpus = corpus_of_size(20);
    std::vector<std::vector<float>> rows;
    for (int i = 0; i < 20; ++i) rows.push_back({static_cast<float>(i), 1.0f});
    auto matrix = matrix_from(rows);
    SampledSubset subset;
    for (int i = 0; i < 20; ++i) subset.items.push_back({"r" + std::to_string(i), i % 3});

    auto o1 = order_subset(subset, matrix, corpus, OrderStrategy::parse("unsorted"), 7);
    auto o2 = order_subset(subset, matrix, corpus, OrderStrategy::parse("unsorted"), 7);
    auto o3 = order_subset(subset, matrix, corpus, OrderStrategy::parse("unsorted"), 8);

    auto ids = [](const SampledSubset& s) {
        std::vector<std::string> v;
        for (const auto& i : s.items) v.push_back(i.record_id);
        return v;
    };
    REQUIRE(ids(o1) == ids(o2));
    REQUIRE(ids(o1) != ids(o3));
    auto sorted1 = ids(o1);
    auto sorted0 = ids(subset);
    std::sort(sorted1.begin(), sorted1.end());
    std::sort(sorted0.begin(), sorted0.end());
    REQUIRE(sorted1 == sorted0);
}

TEST_CASE("subset jsonl dump and read back") {
    auto dir = test_util::temp_dir("subset_io");
    Corpus corpus = corpus_of_size(3);
    SampledSubset subset;
    subset.items = {{"r2", 1}, {"r0", 0}, {"r1", 2}};
    auto path = (dir / "subset.jsonl").string();
    write_subset_jsonl(subset, corpus, path);
    auto body = test_util::read_file(path);
    REQUIRE(body.find("\"position\":0") != std::string::npos);
    REQUIRE(body.find("\"text\":\"text 2\"") != std::string::npos);

    auto loaded = read_subset_jsonl(path);
    REQUIRE(loaded.items.size() == 3);
    REQUIRE(loaded.items[0].record_id == "r2");
    REQUIRE(loaded.items[2].group_index == 2);
}
