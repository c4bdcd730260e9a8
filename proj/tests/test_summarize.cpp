#include <catch2/catch_amalgamated.hpp>

#include "clusterfusion/summarize.hpp"
#include "test_util.hpp"

using namespace clusterfusion;

namespace {

SampledSubset subset_of(const Corpus& corpus) {
    SampledSubset subset;
    for (const auto& rec : corpus.records) subset.items.push_back({rec.id, 0});
    return subset;
}

TopicSet topics(std::vector<std::pair<std::string, std::string>> pairs) {
    TopicSet ts;
    for (auto& [name, desc] : pairs) ts.topics.push_back({name, desc, {}});
    ts.k = static_cast<int>(ts.topics.size());
    return ts;
}

}  // namespace

TEST_CASE("summarization prompt layout") {
    Corpus corpus = test_util::make_corpus({{"1", "a", ""}, {"2", "b", ""}, {"3", "c", ""}});
    DomainContext ctx{"app reviews", std::nullopt};
    auto prompt = build_summarization_prompt(subset_of(corpus), corpus, 2, ctx);

    REQUIRE(prompt.system ==
            "You are an intelligent assistant skilled in summarizing and extracting insights.");
    REQUIRE(prompt.user.find("reviewing records related to app reviews") != std::string::npos);
    REQUIRE(prompt.user.find("Records: a; b; c") != std::string::npos);
    REQUIRE(prompt.user.find("should be exactly 2, not more than 2 and not fewer than 2") !=
            std::string::npos);
    REQUIRE(prompt.user.find("returned in JSON format") != std::string::npos);

    SECTION("byte-stable across calls") {
        auto again = build_summarization_prompt(subset_of(corpus), corpus, 2, ctx);
        REQUIRE(prompt.user == again.user);
        REQUIRE(prompt.system == again.system);
    }

    SECTION("guidance lands after the JSON-format instructions") {
        DomainContext guided{"app reviews", "Merge all greetings into one topic."};
        auto g = build_summarization_prompt(subset_of(corpus), corpus, 2, guided);
        auto json_pos = g.user.find("returned in JSON format");
        auto guide_pos = g.user.find("Merge all greetings into one topic.");
        REQUIRE(guide_pos != std::string::npos);
        REQUIRE(guide_pos > json_pos);
        // absent guidance leaves no trailing placeholder
        REQUIRE(prompt.user.find("Merge") == std::string::npos);
        REQUIRE(prompt.user.back() == '.');
    }
}

TEST_CASE("record separator escaping") {
    Corpus corpus = test_util::make_corpus({{"1", "hello; world", ""}, {"2", "plain", ""}});
    DomainContext ctx{"notes", std::nullopt};
    auto prompt = build_summarization_prompt(subset_of(corpus), corpus, 1, ctx);
    REQUIRE(prompt.user.find("Records: hello, world; plain") != std::string::npos);
}

TEST_CASE("prompt is injective in record order") {
    Corpus corpus = test_util::make_corpus({{"1", "alpha", ""}, {"2", "beta", ""},
                                            {"3", "gamma", ""}});
    DomainContext ctx{"notes", std::nullopt};
    SampledSubset forward = subset_of(corpus);
    SampledSubset reversed = forward;
    std::reverse(reversed.items.begin(), reversed.items.end());
    auto p1 = build_summarization_prompt(forward, corpus, 2, ctx);
    auto p2 = build_summarization_prompt(reversed, corpus, 2, ctx);
    REQUIRE(p1.user != p2.user);
}

TEST_CASE("parse_topic_json") {
    SECTION("fenced index-keyed payload") {
        std::string text = "Here you go:\n```json\n" + std::string(R"({
            "1": {"Billing Issues": {"description": "charges", "examples": ["overcharged"]}},
            "2": {"App Bugs": {"description": "crashes", "examples": "it crashed"}},
            "3": {"Praise": {"description": "compliments", "examples": []}}
        })") + "\n```\nHope that helps!";
        TopicSet ts = parse_topic_json(text, 3);
        REQUIRE(ts.topics.size() == 3);
        REQUIRE(ts.topics[0].name == "Billing Issues");
        REQUIRE(ts.topics[0].examples == std::vector<std::string>{"overcharged"});
        REQUIRE(ts.topics[1].examples == std::vector<std::string>{"it crashed"});
        REQUIRE(ts.topics[2].description == "compliments");
    }

    SECTION("index keys sort numerically, not lexicographically") {
        std::string text = R"({"10": {"J": "j"}, "2": {"B": "b"}, "1": {"A": "a"}})";
        // pad to 3 topics
        TopicSet ts = parse_topic_json(text, 3);
        REQUIRE(ts.topics[0].name == "A");
        REQUIRE(ts.topics[1].name == "B");
        REQUIRE(ts.topics[2].name == "J");
    }

    SECTION("flat name->description map") {
        TopicSet ts = parse_topic_json(R"({"Refunds": "money back", "Bugs": "crashes"})", 2);
        REQUIRE(ts.topics[0].name == "Refunds");
        REQUIRE(ts.topics[0].description == "money back");
    }

    SECTION("count mismatch reports found vs expected") {
        REQUIRE_THROWS_WITH(parse_topic_json(R"({"1": {"A": "a"}, "2": {"B": "b"}})", 3),
                            Catch::Matchers::ContainsSubstring("found 2, expected 3"));
    }

    SECTION("duplicate normalized names rejected") {
        REQUIRE_THROWS_WITH(
            parse_topic_json(R"({"1": {"Billing  Issues": "x"}, "2": {"billing issues": "y"}})", 2),
            Catch::Matchers::ContainsSubstring("duplicate topic name 'billing issues'"));
    }

    SECTION("malformed json rejected") {
        REQUIRE_THROWS_WITH(parse_topic_json("not json at all", 2),
                            Catch::Matchers::ContainsSubstring("malformed topic JSON"));
    }
}

TEST_CASE("parser round-trips its canonical rendering") {
    SeededRng rng(2024);
    for (int trial = 0; trial < 25; ++trial) {
        TopicSet ts;
        ts.k = 1 + static_cast<int>(rng.uniform_below(8));
        for (int i = 0; i < ts.k; ++i) {
            Topic t;
            t.name = "Topic " + std::to_string(trial) + "-" + std::to_string(i);
            t.description = "description " + std::to_string(rng.uniform_below(1000));
            const int n_examples = static_cast<int>(rng.uniform_below(3));
            for (int e = 0; e < n_examples; ++e)
                t.examples.push_back("example " + std::to_string(e));
            ts.topics.push_back(std::move(t));
        }
        TopicSet parsed = parse_topic_json(render_topics_indexed(ts), ts.k);
        REQUIRE(parsed.topics.size() == ts.topics.size());
        for (size_t i = 0; i < ts.topics.size(); ++i) {
            REQUIRE(parsed.topics[i].name == ts.topics[i].name);
            REQUIRE(parsed.topics[i].description == ts.topics[i].description);
            REQUIRE(parsed.topics[i].examples == ts.topics[i].examples);
        }
    }
}

TEST_CASE("extract_topics retry contract") {
    Corpus corpus = test_util::make_corpus({{"1", "a", ""}, {"2", "b", ""}});
    DomainContext ctx{"notes", std::nullopt};
    auto subset = subset_of(corpus);
    const std::string valid = render_topics_indexed(topics({{"A", "a"}, {"B", "b"}}));
    const std::string wrong_count =
        render_topics_indexed(topics({{"A", "a"}, {"B", "b"}, {"C", "c"}}));

    SECTION("valid on first attempt") {
        MockLlmClient mock;
        mock.add_response("summarize", "corpus", valid);
        auto res = extract_topics(subset, corpus, 2, ctx, mock, 3);
        REQUIRE(res.topics.topics.size() == 2);
        REQUIRE(res.attempts == 1);
        REQUIRE(res.usage.calls == 1);
    }

    SECTION("malformed then valid") {
        MockLlmClient mock;
        mock.add_sequence("summarize", "corpus", {"oops not json", valid});
        auto res = extract_topics(subset, corpus, 2, ctx, mock, 3);
        REQUIRE(res.attempts == 2);
        REQUIRE(res.usage.calls == 2);
    }

    SECTION("persistent wrong count exhausts attempts") {
        MockLlmClient mock;
        mock.add_response("summarize", "corpus", wrong_count);
        REQUIRE_THROWS_WITH(extract_topics(subset, corpus, 2, ctx, mock, 3),
                            Catch::Matchers::ContainsSubstring("after 3 attempts") &&
                                Catch::Matchers::ContainsSubstring("found 3, expected 2"));
    }

    SECTION("repair mode appends the parse error") {
        MockLlmClient mock;
        mock.add_sequence("summarize", "corpus", {"garbage", valid});
        auto res = extract_topics(subset, corpus, 2, ctx, mock, 3, /*repair_mode=*/true);
        REQUIRE(res.attempts == 2);
    }
}

TEST_CASE("topic set persistence") {
    auto dir = test_util::temp_dir("topics_io");
    TopicSet ts = topics({{"Billing", "money"}, {"Bugs", "crashes"}});
    ts.topics[0].examples = {"refund please"};
    auto path = (dir / "topics.json").string();
    save_topic_set(ts, path);
    TopicSet loaded = load_topic_set(path);
    REQUIRE(loaded.k == 2);
    REQUIRE(loaded.topics[0].name == "Billing");
    REQUIRE(loaded.topics[0].examples == std::vector<std::string>{"refund please"});

    SECTION("duplicate names in a topic file are rejected") {
        test_util::write_file(dir / "dup.json",
                              R"([{"name": "A", "description": "x"},
                                  {"name": " a ", "description": "y"}])");
        REQUIRE_THROWS_WITH(load_topic_set((dir / "dup.json").string()),
                            Catch::Matchers::ContainsSubstring("duplicate topic name"));
    }

    SECTION("expected k is enforced") {
        REQUIRE_THROWS_AS(load_topic_set(path, 5), Error);
    }
}

TEST_CASE("topic set digest tracks membership") {
    TopicSet a = topics({{"A", "x"}, {"B", "y"}});
    TopicSet b = topics({{"a", "different desc"}, {"B", "z"}});  // same normalized names
    TopicSet c = topics({{"A", "x"}, {"C", "y"}});
    REQUIRE(a.digest() == b.digest());
    REQUIRE(a.digest() != c.digest());
}
