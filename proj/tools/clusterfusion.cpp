#include <cstdint>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clusterfusion/pipeline.hpp"

namespace cf = clusterfusion;
namespace fs = std::filesystem;

namespace {

struct CliState {
    std::string config_file;
    cf::RunConfig cfg;

    // raw flag values, applied on top of the config file
    std::vector<std::pair<std::string, std::string>> overrides;
};

void add_override_option(CLI::App* cmd, CliState& state, const std::string& flag,
                         const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [&state, key](const std::string& v) { state.overrides.emplace_back(key, v); }, help);
}

void add_common_options(CLI::App* cmd, CliState& state) {
    cmd->add_option("--config", state.config_file, "key = value config file");
    add_override_option(cmd, state, "--dataset", "dataset", "corpus file (jsonl or csv)");
    add_override_option(cmd, state, "--format", "format", "corpus format: jsonl|csv");
    add_override_option(cmd, state, "--name", "name", "dataset display name");
    add_override_option(cmd, state, "--k", "k", "target number of topics");
    add_override_option(cmd, state, "--m", "m", "number of groups (default 2K)");
    add_override_option(cmd, state, "--s", "s", "total sample size (default min(N, 8K))");
    add_override_option(cmd, state, "--strategy", "strategy",
                        "ordering: unsorted|cluster|cosine|euclidean|oracle");
    add_override_option(cmd, state, "--seed", "seed", "run seed");
    add_override_option(cmd, state, "--embedding", "embedding", "embedding source: test|file|provider");
    add_override_option(cmd, state, "--embedding-file", "embedding_file", "embedding file path");
    add_override_option(cmd, state, "--embedding-dim", "embedding_dim", "test embedder dimension");
    add_override_option(cmd, state, "--embedding-model", "embedding_model", "remote embedding model id");
    add_override_option(cmd, state, "--embedding-endpoint", "embedding_endpoint",
                        "remote embeddings endpoint URL");
    add_override_option(cmd, state, "--llm-model", "llm_model", "chat model id");
    add_override_option(cmd, state, "--llm-endpoint", "llm_endpoint", "chat completions endpoint URL");
    add_override_option(cmd, state, "--mock-fixture", "mock_fixture", "scripted LLM fixture file");
    add_override_option(cmd, state, "--max-retries", "max_retries", "transport retries per call");
    add_override_option(cmd, state, "--max-attempts", "max_attempts", "summarization attempts");
    add_override_option(cmd, state, "--max-reruns", "max_reruns", "assignment reruns per record");
    add_override_option(cmd, state, "--timeout-ms", "timeout_ms", "HTTP timeout in ms");
    add_override_option(cmd, state, "--parallelism", "parallelism", "assignment worker count");
    add_override_option(cmd, state, "--feature-context", "feature_context",
                        "domain description interpolated into both prompts");
    add_override_option(cmd, state, "--extra-guidance", "extra_guidance",
                        "optional user-preference text for summarization");
    add_override_option(cmd, state, "--price-in", "price_in", "USD per 1M prompt tokens");
    add_override_option(cmd, state, "--price-out", "price_out", "USD per 1M completion tokens");
    add_override_option(cmd, state, "--token-budget", "token_budget",
                        "warn when the summarization prompt exceeds this estimate");
    add_override_option(cmd, state, "--kmeans-space", "kmeans_space", "grouping space: unit|raw");
    add_override_option(cmd, state, "--nmi-norm", "nmi_norm", "NMI normalization: arithmetic|geometric");
    add_override_option(cmd, state, "--out-dir", "out_dir", "output directory");
}

cf::RunConfig resolve_config(CliState& state) {
    cf::RunConfig cfg;
    if (!state.config_file.empty()) cfg = cf::load_config_file(state.config_file, cfg);
    for (const auto& [key, value] : state.overrides) cf::apply_config_entry(cfg, key, value);
    return cfg;
}

cf::Corpus load_configured_corpus(const cf::RunConfig& cfg) {
    if (cfg.dataset_path.empty()) throw cf::Error(cf::ErrorKind::config, "dataset path is required");
    return cf::load_corpus(cfg.dataset_path, cf::corpus_format_from_string(cfg.dataset_format));
}

std::unique_ptr<cf::EmbeddingProvider> provider_for(const cf::RunConfig& cfg) {
    if (cfg.embedding_source == cf::EmbeddingSource::provider)
        return std::make_unique<cf::HttpEmbeddingProvider>(cfg.embedding_endpoint,
                                                           cfg.embedding_model);
    return std::make_unique<cf::TestEmbeddingProvider>(cfg.embedding_dim,
                                                       cf::derive_seed(cfg.seed, "embed"));
}

cf::EmbeddingMatrix embeddings_for(const cf::RunConfig& cfg, const cf::Corpus& corpus) {
    if (cfg.embedding_source == cf::EmbeddingSource::file) {
        auto matrix = cf::load_embeddings(cfg.embedding_file);
        cf::require_aligned(matrix, corpus);
        return matrix;
    }
    auto provider = provider_for(cfg);
    return cf::embed_corpus(corpus, *provider, cfg.embed_batch_size).matrix;
}

std::unique_ptr<cf::LlmClient> client_for(const cf::RunConfig& cfg) {
    if (!cfg.mock_fixture.empty()) return cf::mock_from_fixture(cfg.mock_fixture);
    return std::make_unique<cf::HttpLlmClient>(cfg.llm);
}

int finish_run(const cf::RunResult& run) {
    if (!run.ok) {
        std::cerr << "run failed: " << run.error << "\n";
        std::cerr << "partial artifacts in " << run.run_dir.string() << "\n";
        return 1;
    }
    std::cout << "run dir: " << run.run_dir.string() << "\n";
    if (run.report) {
        std::cout << "accuracy: " << cf::detail::format_double(run.report->accuracy)
                  << "  nmi: " << cf::detail::format_double(run.report->nmi)
                  << "  cost_usd: " << cf::detail::format_double(run.report->cost_usd)
                  << "  calls: " << run.report->usage.calls
                  << "  fallbacks: " << run.report->n_fallback << "\n";
    } else {
        std::cout << "no gold labels; evaluation skipped\n";
    }
    return 0;
}

std::vector<uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<uint64_t> seeds;
    std::string cur;
    for (char c : csv + ",") {
        if (c == ',') {
            if (!cf::trim(cur).empty()) seeds.push_back(std::stoull(cf::trim(cur)));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    return seeds;
}

std::vector<cf::OrderStrategy> parse_strategy_list(const std::string& csv) {
    std::vector<cf::OrderStrategy> out;
    std::string cur;
    for (char c : csv + ",") {
        if (c == ',') {
            if (!cf::trim(cur).empty()) out.push_back(cf::OrderStrategy::parse(cf::trim(cur)));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Training-free text clustering: embedding-guided sampling and ordering, "
                 "LLM topic summarization, LLM topic assignment, and evaluation"};
    app.require_subcommand(1);

    CliState state;

    auto* embed_cmd = app.add_subcommand("embed", "Embed a corpus and write the embedding file");
    std::string embed_out = "embeddings.bin";
    std::string embed_debug;
    add_common_options(embed_cmd, state);
    embed_cmd->add_option("--output", embed_out, "embedding file to write");
    embed_cmd->add_option("--debug-jsonl", embed_debug, "also dump {id, vector} JSONL");

    auto* part_cmd = app.add_subcommand(
        "partition", "Group embeddings, draw the balanced sample, and order it");
    std::string part_out = "subset.jsonl";
    std::string part_groups;
    add_common_options(part_cmd, state);
    part_cmd->add_option("--output", part_out, "ordered subset JSONL to write");
    part_cmd->add_option("--groups-json", part_groups, "also dump record id -> group index map");

    auto* sum_cmd = app.add_subcommand("summarize", "Extract topics from an ordered subset");
    std::string sum_subset = "subset.jsonl";
    std::string sum_out = "topics.json";
    add_common_options(sum_cmd, state);
    sum_cmd->add_option("--subset", sum_subset, "ordered subset JSONL");
    sum_cmd->add_option("--output", sum_out, "topic file to write");

    auto* assign_cmd = app.add_subcommand("assign", "Assign every record to a topic");
    std::string assign_topics = "topics.json";
    std::string assign_out = "assignments.json";
    std::string assign_checkpoint = "assignments.jsonl";
    add_common_options(assign_cmd, state);
    assign_cmd->add_option("--topics", assign_topics, "topic file");
    assign_cmd->add_option("--output", assign_out, "assignment map JSON to write");
    assign_cmd->add_option("--checkpoint", assign_checkpoint,
                           "append-only checkpoint JSONL (resumes if present)");

    auto* eval_cmd = app.add_subcommand("eval", "Score an assignment map against gold labels");
    std::string eval_assignments = "assignments.json";
    std::string eval_csv = "report.csv";
    std::string eval_json = "report.json";
    add_common_options(eval_cmd, state);
    eval_cmd->add_option("--assignments", eval_assignments, "assignment map JSON");
    eval_cmd->add_option("--report-csv", eval_csv, "report CSV to write");
    eval_cmd->add_option("--report-json", eval_json, "report JSON to write");

    auto* run_cmd = app.add_subcommand("run", "Run the full pipeline end to end");
    add_common_options(run_cmd, state);

    auto* aonly_cmd = app.add_subcommand(
        "assignment-only", "Skip summarization: assign against a provided topic file");
    std::string aonly_topics;
    add_common_options(aonly_cmd, state);
    aonly_cmd->add_option("--topics", aonly_topics, "topic file")->required();

    auto* sweep_cmd = app.add_subcommand("sweep", "Run a strategy x seed grid and summarize");
    std::string sweep_strategies = "unsorted,cluster,cosine";
    std::string sweep_seeds = "1,2,3,4,5";
    add_common_options(sweep_cmd, state);
    sweep_cmd->add_option("--strategies", sweep_strategies, "comma-separated strategies");
    sweep_cmd->add_option("--seeds", sweep_seeds, "comma-separated seeds");

    CLI11_PARSE(app, argc, argv);

    try {
        if (embed_cmd->parsed()) {
            cf::RunConfig cfg = resolve_config(state);
            const cf::Corpus corpus = load_configured_corpus(cfg);
            auto provider = provider_for(cfg);
            auto res = cf::embed_corpus(corpus, *provider, cfg.embed_batch_size);
            cf::save_embeddings(res.matrix, embed_out);
            if (!embed_debug.empty()) cf::write_embeddings_jsonl(res.matrix, embed_debug);
            std::cout << "embedded " << res.matrix.rows() << " records (d=" << res.matrix.dim()
                      << ", provider=" << res.matrix.provider_id() << ") -> " << embed_out << "\n";
            return 0;
        }

        if (part_cmd->parsed()) {
            cf::RunConfig cfg = resolve_config(state);
            if (cfg.k < 1) throw cf::Error(cf::ErrorKind::config, "k must be >= 1");
            const cf::Corpus corpus = load_configured_corpus(cfg);
            const cf::EmbeddingMatrix matrix = embeddings_for(cfg, corpus);
            const int m = cfg.effective_m();
            const int s = cfg.effective_s(corpus.size());
            auto grouping =
                cf::group_embeddings(matrix, m, cf::derive_seed(cfg.seed, "group"), cfg.kmeans_space);
            auto sampled =
                cf::balanced_sample(corpus, grouping, s, cf::derive_seed(cfg.seed, "sample"));
            auto ordered = cf::order_subset(sampled, matrix, corpus, cfg.strategy,
                                            cf::derive_seed(cfg.seed, "order"));
            cf::write_subset_jsonl(ordered, corpus, part_out);
            if (!part_groups.empty()) {
                nlohmann::ordered_json j;
                for (const auto& rec : corpus.records) j[rec.id] = grouping.group_of.at(rec.id);
                std::ofstream out(part_groups);
                out << j.dump(2) << "\n";
            }
            std::cout << "partitioned into " << m << " groups, sampled " << ordered.items.size()
                      << " records (quota " << sampled.quota << ", order "
                      << cfg.strategy.to_string() << ") -> " << part_out << "\n";
            return 0;
        }

        if (sum_cmd->parsed()) {
            cf::RunConfig cfg = resolve_config(state);
            if (cfg.k < 1) throw cf::Error(cf::ErrorKind::config, "k must be >= 1");
            const cf::Corpus corpus = load_configured_corpus(cfg);
            const cf::SampledSubset subset = cf::read_subset_jsonl(sum_subset);
            auto client = client_for(cfg);
            auto extracted =
                cf::extract_topics(subset, corpus, cfg.k, cfg.ctx, *client, cfg.max_attempts);
            cf::save_topic_set(extracted.topics, sum_out);
            std::cout << "extracted " << extracted.topics.topics.size() << " topics in "
                      << extracted.attempts << " attempt(s), " << extracted.usage.calls
                      << " call(s) -> " << sum_out << "\n";
            return 0;
        }

        if (assign_cmd->parsed()) {
            cf::RunConfig cfg = resolve_config(state);
            const cf::Corpus corpus = load_configured_corpus(cfg);
            const cf::TopicSet topics = cf::load_topic_set(assign_topics);
            auto client = client_for(cfg);
            auto res = cf::assign_all(corpus, topics, cfg.ctx, *client, cfg.parallelism,
                                      cfg.max_reruns, assign_checkpoint);
            cf::save_assignment_map(res.map, assign_out);
            std::cout << "assigned " << res.map.entries.size() << "/" << corpus.size()
                      << " records (" << res.usage.calls << " calls, resumed " << res.resumed
                      << ") -> " << assign_out << "\n";
            if (!res.failures.empty()) {
                std::cerr << res.failures.size() << " records failed after transport retries\n";
                return 1;
            }
            return 0;
        }

        if (eval_cmd->parsed()) {
            cf::RunConfig cfg = resolve_config(state);
            const cf::Corpus corpus = load_configured_corpus(cfg);
            if (!corpus.all_gold())
                throw cf::Error(cf::ErrorKind::validation,
                                "evaluation requires a gold label on every record");
            const cf::AssignmentMap map = cf::load_assignment_map(eval_assignments);
            cf::LabelVectorPair pair;
            for (const auto& rec : corpus.records) {
                auto it = map.entries.find(rec.id);
                if (it == map.entries.end())
                    throw cf::Error(cf::ErrorKind::validation,
                                    "assignment map is missing record '" + rec.id + "'");
                pair.ids.push_back(rec.id);
                pair.pred.push_back(it->second.topic);
                pair.gold.push_back(*rec.gold_label);
            }
            cf::EvalReport report;
            report.dataset = cfg.dataset_name.empty() ? corpus.name : cfg.dataset_name;
            report.strategy = cfg.strategy.to_string();
            report.seed = cfg.seed;
            auto acc = cf::hungarian_accuracy(pair);
            report.accuracy = acc.accuracy;
            report.alignment = std::move(acc.alignment);
            report.nmi = cf::nmi(pair, cfg.nmi_norm);
            for (const auto& [id, e] : map.entries)
                if (e.fallback) ++report.n_fallback;
            cf::emit_report(report, eval_csv, eval_json);
            std::cout << "accuracy: " << cf::detail::format_double(report.accuracy)
                      << "  nmi: " << cf::detail::format_double(report.nmi) << " -> " << eval_csv
                      << "\n";
            return 0;
        }

        if (run_cmd->parsed()) {
            cf::RunConfig cfg = resolve_config(state);
            return finish_run(cf::cmd_run(cfg));
        }

        if (aonly_cmd->parsed()) {
            cf::RunConfig cfg = resolve_config(state);
            return finish_run(cf::cmd_assignment_only(cfg, aonly_topics));
        }

        if (sweep_cmd->parsed()) {
            cf::RunConfig cfg = resolve_config(state);
            auto strategies = parse_strategy_list(sweep_strategies);
            auto seeds = parse_seed_list(sweep_seeds);
            auto outcome = cf::cmd_sweep(cfg, strategies, seeds);
            std::cout << "sweep: " << outcome.total_runs << " runs, " << outcome.failed_runs
                      << " failed -> " << outcome.summary_csv.string() << "\n";
            for (const auto& cell : outcome.cells) std::cout << cf::sweep_csv_row(cell) << "\n";
            return outcome.failed_runs == 0 ? 0 : 1;
        }
    } catch (const cf::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
