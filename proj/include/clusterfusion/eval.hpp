#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "clusterfusion/error.hpp"
#include "clusterfusion/llm.hpp"

namespace clusterfusion {

struct LabelVectorPair {
    std::vector<std::string> ids;
    std::vector<std::string> pred;
    std::vector<std::string> gold;

    void validate() const {
        if (ids.empty()) throw Error(ErrorKind::validation, "label vectors must be non-empty");
        if (pred.size() != ids.size() || gold.size() != ids.size())
            throw Error(ErrorKind::validation, "label vector length mismatch");
    }
};

struct ContingencyTable {
    std::vector<std::string> pred_labels;  // sorted
    std::vector<std::string> gold_labels;  // sorted
    std::vector<std::vector<long long>> counts;  // P x Q
    long long total = 0;

    static ContingencyTable build(const LabelVectorPair& pair) {
        pair.validate();
        ContingencyTable t;
        std::set<std::string> preds(pair.pred.begin(), pair.pred.end());
        std::set<std::string> golds(pair.gold.begin(), pair.gold.end());
        t.pred_labels.assign(preds.begin(), preds.end());
        t.gold_labels.assign(golds.begin(), golds.end());
        std::map<std::string, size_t> pidx, gidx;
        for (size_t i = 0; i < t.pred_labels.size(); ++i) pidx[t.pred_labels[i]] = i;
        for (size_t i = 0; i < t.gold_labels.size(); ++i) gidx[t.gold_labels[i]] = i;
        t.counts.assign(t.pred_labels.size(),
                        std::vector<long long>(t.gold_labels.size(), 0));
        for (size_t i = 0; i < pair.ids.size(); ++i)
            ++t.counts[pidx[pair.pred[i]]][gidx[pair.gold[i]]];
        t.total = static_cast<long long>(pair.ids.size());
        return t;
    }

    std::vector<long long> row_sums() const {
        std::vector<long long> out(counts.size(), 0);
        for (size_t i = 0; i < counts.size(); ++i)
            for (long long c : counts[i]) out[i] += c;
        return out;
    }

    std::vector<long long> col_sums() const {
        std::vector<long long> out(gold_labels.size(), 0);
        for (const auto& row : counts)
            for (size_t j = 0; j < row.size(); ++j) out[j] += row[j];
        return out;
    }
};

namespace detail {

// Min-cost perfect assignment on a square matrix (Hungarian with potentials),
// O(n^3). Returns match[row] = column.
inline std::vector<int> hungarian_min_cost(const std::vector<std::vector<long long>>& cost) {
    const int n = static_cast<int>(cost.size());
    const long long INF = std::numeric_limits<long long>::max() / 4;
    std::vector<long long> u(n + 1, 0), v(n + 1, 0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<long long> minv(n + 1, INF);
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            int i0 = p[j0], j1 = 0;
            long long delta = INF;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                long long cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> match(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] > 0) match[p[j] - 1] = j - 1;
    return match;
}

}  // namespace detail

struct AccuracyResult {
    double accuracy = 0.0;
    std::map<std::string, std::string> alignment;  // predicted label -> matched gold label
    long long matched = 0;
};

// Clustering accuracy under the optimal one-to-one matching between predicted
// clusters and gold classes: the contingency table is zero-padded to square,
// the maximum-weight assignment is solved by cost negation, and accuracy is
// matched count over N.
inline AccuracyResult hungarian_accuracy(const LabelVectorPair& pair) {
    const ContingencyTable table = ContingencyTable::build(pair);
    const size_t p = table.pred_labels.size(), q = table.gold_labels.size();
    const size_t n = std::max(p, q);

    std::vector<std::vector<long long>> cost(n, std::vector<long long>(n, 0));
    for (size_t i = 0; i < p; ++i)
        for (size_t j = 0; j < q; ++j) cost[i][j] = -table.counts[i][j];

    std::vector<int> match = detail::hungarian_min_cost(cost);

    // When P <= Q every real predicted row can hold a real gold column: a row
    // parked on a padded column always has zero overlap, so swapping it with
    // a padded row that holds a real column keeps the optimum.
    if (p <= q) {
        std::vector<int> col_owner(n, -1);
        for (size_t i = 0; i < n; ++i) col_owner[static_cast<size_t>(match[i])] = static_cast<int>(i);
        for (size_t i = 0; i < p; ++i) {
            if (static_cast<size_t>(match[i]) < q) continue;
            for (size_t j = 0; j < q; ++j) {
                if (col_owner[j] >= static_cast<int>(p)) {
                    int other = col_owner[j];
                    std::swap(match[i], match[static_cast<size_t>(other)]);
                    col_owner[j] = static_cast<int>(i);
                    break;
                }
            }
        }
    }

    AccuracyResult res;
    for (size_t i = 0; i < p; ++i) {
        const size_t j = static_cast<size_t>(match[i]);
        if (j >= q) continue;  // only possible when P > Q
        res.matched += table.counts[i][j];
        res.alignment[table.pred_labels[i]] = table.gold_labels[j];
    }
    res.accuracy = static_cast<double>(res.matched) / static_cast<double>(table.total);
    return res;
}

enum class NmiNorm { arithmetic, geometric };

namespace detail {

// Entropy terms summed in a canonical order so relabelings hit identical
// floating-point sequences.
inline double entropy_nats(std::vector<long long> counts, long long total) {
    std::sort(counts.begin(), counts.end());
    double h = 0.0;
    for (long long c : counts) {
        if (c <= 0) continue;
        const double pr = static_cast<double>(c) / static_cast<double>(total);
        h += pr * std::log(static_cast<double>(total) / static_cast<double>(c));
    }
    return h;
}

}  // namespace detail

// Mutual information between the two labelings normalized by the mean of the
// marginal entropies (arithmetic by default). Conventions: equivalent
// partitions (including both-constant) score exactly 1; a zero-entropy side
// against a non-equivalent one scores 0.
inline double nmi(const LabelVectorPair& pair, NmiNorm norm = NmiNorm::arithmetic) {
    const ContingencyTable table = ContingencyTable::build(pair);
    const auto rows = table.row_sums();
    const auto cols = table.col_sums();
    const long long total = table.total;

    // partition equivalence: exactly one nonzero cell per row and per column
    {
        bool permutation_like = table.pred_labels.size() == table.gold_labels.size();
        std::vector<int> col_nonzero(table.gold_labels.size(), 0);
        for (const auto& row : table.counts) {
            int nz = 0;
            for (size_t j = 0; j < row.size(); ++j) {
                if (row[j] > 0) {
                    ++nz;
                    ++col_nonzero[j];
                }
            }
            if (nz != 1) permutation_like = false;
        }
        if (permutation_like)
            for (int nz : col_nonzero)
                if (nz != 1) permutation_like = false;
        if (permutation_like) return 1.0;
    }

    const double h_pred = detail::entropy_nats(rows, total);
    const double h_gold = detail::entropy_nats(cols, total);
    if (h_pred == 0.0 || h_gold == 0.0) return 0.0;

    // mutual information, accumulated in a canonical term order
    struct Term {
        long long joint;
        long long marg_product;
    };
    std::vector<Term> terms;
    for (size_t i = 0; i < table.counts.size(); ++i) {
        for (size_t j = 0; j < table.counts[i].size(); ++j) {
            if (table.counts[i][j] > 0) terms.push_back({table.counts[i][j], rows[i] * cols[j]});
        }
    }
    std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) {
        if (a.joint != b.joint) return a.joint < b.joint;
        return a.marg_product < b.marg_product;
    });
    double mi = 0.0;
    for (const Term& t : terms) {
        const double pr = static_cast<double>(t.joint) / static_cast<double>(total);
        mi += pr * std::log(static_cast<double>(total) * static_cast<double>(t.joint) /
                            static_cast<double>(t.marg_product));
    }
    if (mi < 0.0) mi = 0.0;  // guard against rounding below zero

    const double denom = norm == NmiNorm::arithmetic ? 0.5 * (h_pred + h_gold)
                                                     : std::sqrt(h_pred * h_gold);
    return mi / denom;
}

struct Pricing {
    double input_per_million = 2.50;
    double output_per_million = 10.00;
};

inline double estimate_cost(const LlmUsage& usage, const Pricing& pricing) {
    if (pricing.input_per_million < 0 || pricing.output_per_million < 0)
        throw Error(ErrorKind::validation, "pricing rates must be >= 0");
    return static_cast<double>(usage.prompt_tokens) * pricing.input_per_million / 1e6 +
           static_cast<double>(usage.completion_tokens) * pricing.output_per_million / 1e6;
}

struct EvalReport {
    std::string dataset;
    std::string strategy;
    uint64_t seed = 0;
    double accuracy = 0.0;
    double nmi = 0.0;
    std::map<std::string, std::string> alignment;
    long long n_fallback = 0;
    LlmUsage usage;
    double cost_usd = 0.0;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

}  // namespace detail

inline const char* report_csv_header() {
    return "dataset,strategy,seed,accuracy,nmi,cost_usd,calls,n_fallback";
}

inline std::string report_csv_row(const EvalReport& r) {
    std::string row;
    row += detail::csv_field(r.dataset) + ",";
    row += detail::csv_field(r.strategy) + ",";
    row += std::to_string(r.seed) + ",";
    row += detail::format_double(r.accuracy) + ",";
    row += detail::format_double(r.nmi) + ",";
    row += detail::format_double(r.cost_usd) + ",";
    row += std::to_string(r.usage.calls) + ",";
    row += std::to_string(r.n_fallback);
    return row;
}

inline void emit_report(const EvalReport& report, const std::string& csv_path,
                        const std::string& json_path) {
    {
        std::ofstream out(csv_path);
        if (!out) throw Error(ErrorKind::io, "cannot write report '" + csv_path + "'");
        out << report_csv_header() << "\n" << report_csv_row(report) << "\n";
    }
    {
        nlohmann::ordered_json j;
        j["dataset"] = report.dataset;
        j["strategy"] = report.strategy;
        j["seed"] = report.seed;
        j["accuracy"] = report.accuracy;
        j["nmi"] = report.nmi;
        j["cost_usd"] = report.cost_usd;
        j["n_fallback"] = report.n_fallback;
        j["usage"] = {{"prompt_tokens", report.usage.prompt_tokens},
                      {"completion_tokens", report.usage.completion_tokens},
                      {"calls", report.usage.calls},
                      {"estimated", report.usage.estimated}};
        nlohmann::ordered_json align;
        for (const auto& [pred, gold] : report.alignment) align[pred] = gold;
        j["alignment"] = std::move(align);
        std::ofstream out(json_path);
        if (!out) throw Error(ErrorKind::io, "cannot write report '" + json_path + "'");
        out << j.dump(2) << "\n";
    }
}

// --- sweep summary ----------------------------------------------------------

struct SweepCell {
    std::string dataset;
    std::string strategy;
    std::vector<EvalReport> runs;
    size_t failed = 0;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) return {mean, 0.0};
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size() - 1);
    return {mean, std::sqrt(var)};
}

}  // namespace detail

inline const char* sweep_csv_header() {
    return "dataset,strategy,runs,failed,acc_mean,acc_std,nmi_mean,nmi_std,cost_usd_mean,calls_mean";
}

inline std::string sweep_csv_row(const SweepCell& cell) {
    std::vector<double> accs, nmis, costs, calls;
    for (const auto& r : cell.runs) {
        accs.push_back(r.accuracy);
        nmis.push_back(r.nmi);
        costs.push_back(r.cost_usd);
        calls.push_back(static_cast<double>(r.usage.calls));
    }
    auto [am, as] = detail::mean_std(accs);
    auto [nm, ns] = detail::mean_std(nmis);
    auto [cm, _cs] = detail::mean_std(costs);
    auto [km, _ks] = detail::mean_std(calls);
    std::string row;
    row += detail::csv_field(cell.dataset) + ",";
    row += detail::csv_field(cell.strategy) + ",";
    row += std::to_string(cell.runs.size()) + ",";
    row += std::to_string(cell.failed) + ",";
    row += detail::format_double(am) + "," + detail::format_double(as) + ",";
    row += detail::format_double(nm) + "," + detail::format_double(ns) + ",";
    row += detail::format_double(cm) + "," + detail::format_double(km);
    return row;
}

inline void emit_sweep_summary(const std::vector<SweepCell>& cells, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot write sweep summary '" + path + "'");
    out << sweep_csv_header() << "\n";
    for (const auto& cell : cells) out << sweep_csv_row(cell) << "\n";
}

}  // namespace clusterfusion
