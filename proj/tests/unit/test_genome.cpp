#include <doctest.h>

#include <array>
#include <cmath>
#include <map>

#include "pipevo/errors.hpp"
#include "pipevo/genome.hpp"
#include "pipevo/params.hpp"
#include "support.hpp"

using namespace pipevo;
using namespace testing;

TEST_CASE("node_count follows generator + executor + refiner (+ analyzer)") {
    CHECK(node_count(genome({stage(1)})) == 3);
    CHECK(node_count(genome({stage(1, 1, true)})) == 4);
    // 1 + 3*2 + 1: the cap exactly.
    CHECK(node_count(genome({stage(1, 1, true), stage(2), stage(3)})) == 8);
    CHECK(node_count(genome({stage(1, 1, true), stage(2, 1, true), stage(3)})) == 9);
}

TEST_CASE("parsimony penalties of 5-node and 3-node genomes") {
    const SearchParams p;
    const auto five = genome({stage(1, 1, false), stage(2, 1, false)});
    const auto three = genome({stage(1)});
    REQUIRE(node_count(five) == 5);
    CHECK(p.parsimony_per_node * node_count(five) == doctest::Approx(0.10).epsilon(1e-12));
    CHECK(p.parsimony_per_node * node_count(three) == doctest::Approx(0.06).epsilon(1e-12));
}

TEST_CASE("analyzer_count and total_iterations") {
    auto g = genome({stage(1, 3, true), stage(2, 2), stage(4, 1, false)});
    CHECK(analyzer_count(g) == 1);
    CHECK(total_iterations(g) == 6);
}

TEST_CASE("violations report every broken invariant") {
    const auto pool = three_models();
    CHECK(violations(genome({stage(1)}), &pool).empty());

    CHECK_FALSE(violations(genome({})).empty());
    CHECK_FALSE(violations(genome({stage(1), stage(2), stage(3), stage(4)})).empty());
    CHECK_FALSE(violations(genome({stage(2), stage(1)})).empty());
    CHECK_FALSE(violations(genome({stage(1, 1, true), stage(2, 1, true), stage(3)})).empty());

    auto hot = genome({stage(1)});
    hot.stages[0].refiner.temperature = 1.5;
    CHECK_FALSE(violations(hot).empty());
    auto cold = genome({stage(1)});
    cold.generator.temperature = 0.0;
    CHECK_FALSE(violations(cold).empty());

    auto iters = genome({stage(1, 4)});
    CHECK_FALSE(violations(iters).empty());
    iters.stages[0].max_iterations = 0;
    CHECK_FALSE(violations(iters).empty());

    auto prompt = genome({stage(1, 1, true)});
    prompt.stages[0].analyzer->prompt_index = 2;  // analyzer pool has 2 prompts
    CHECK_FALSE(violations(prompt).empty());

    auto role = genome({stage(1)});
    role.stages[0].refiner.role = Role::Analyzer;
    CHECK_FALSE(violations(role).empty());

    auto foreign = genome({stage(1)}, "delta");
    CHECK(violations(foreign).empty());
    CHECK_FALSE(violations(foreign, &pool).empty());
    CHECK_THROWS_AS(validate(foreign, &pool), GenomeError);
}

TEST_CASE("new_random_genome builds a minimal valid genome") {
    const auto pool = three_models();
    Rng rng(11);
    InnovationCounter counter;
    for (int i = 0; i < 500; ++i) {
        auto g = new_random_genome(pool, rng, counter);
        REQUIRE(violations(g, &pool).empty());
        CHECK(g.stages.size() == 1);
        CHECK(node_count(g) == 3);
        CHECK_FALSE(g.stages[0].analyzer.has_value());
        CHECK(g.genome_id == 0);
    }
}

TEST_CASE("new_random_genome with a single-model pool uses that model everywhere") {
    const ModelPool pool({ModelId{"only"}});
    Rng rng(3);
    InnovationCounter counter;
    auto g = new_random_genome(pool, rng, counter);
    CHECK(g.generator.model.name == "only");
    CHECK(g.stages[0].refiner.model.name == "only");
}

TEST_CASE("new_random_genome rejects an empty pool") {
    Rng rng(1);
    InnovationCounter counter;
    CHECK_THROWS_AS(new_random_genome(ModelPool{}, rng, counter), ConfigError);
    CHECK_THROWS_AS(ModelPool({ModelId{""}}), ConfigError);
}

TEST_CASE("new_random_genome draws generator prompts uniformly") {
    const auto pool = three_models();
    Rng rng(2024);
    InnovationCounter counter;
    std::array<int, 3> counts{};
    std::array<int, 3> iters{};
    const int n = 10'000;
    double tmin = 10, tmax = -10;
    for (int i = 0; i < n; ++i) {
        auto g = new_random_genome(pool, rng, counter);
        ++counts[static_cast<std::size_t>(g.generator.prompt_index)];
        ++iters[static_cast<std::size_t>(g.stages[0].max_iterations - 1)];
        tmin = std::min(tmin, g.generator.temperature);
        tmax = std::max(tmax, g.generator.temperature);
    }
    for (int c : counts) CHECK(std::abs(c / double(n) - 1.0 / 3) < 0.02);
    for (int c : iters) CHECK(std::abs(c / double(n) - 1.0 / 3) < 0.02);
    CHECK(tmin >= kMinTemperature);
    CHECK(tmax <= kMaxTemperature);
    CHECK(tmax - tmin > 1.0);
}

TEST_CASE("innovation counter is monotone and observes loaded genomes") {
    InnovationCounter c;
    Innovation last = 0;
    for (int i = 0; i < 100; ++i) {
        Innovation n = c.issue();
        CHECK(n > last);
        last = n;
    }
    InnovationCounter d;
    d.observe(genome({stage(7), stage(40)}));
    CHECK(d.issue() == 41);
    d.observe(genome({stage(3)}));
    CHECK(d.issue() == 42);
}

TEST_CASE("serialization round-trips random genomes exactly") {
    const auto pool = three_models();
    Rng rng(99);
    InnovationCounter counter;
    for (int i = 0; i < 2000; ++i) {
        auto g = arbitrary_genome(rng, pool, counter);
        g.genome_id = rng() % 100000;
        REQUIRE(violations(g, &pool).empty());
        const auto text = serialize_genome(g);
        const auto back = parse_genome(text, &pool);
        REQUIRE(back == g);
        CHECK(serialize_genome(back) == text);
    }
}

TEST_CASE("genome record format has stable key order") {
    auto g = genome({stage(5, 2, true)}, "beta", 17);
    g.generator.temperature = 0.25;
    const auto text = serialize_genome(g);
    const auto p_id = text.find("\"genome_id\"");
    const auto p_gen = text.find("\"generator\"");
    const auto p_stages = text.find("\"stages\"");
    CHECK(p_id < p_gen);
    CHECK(p_gen < p_stages);
    CHECK(text.find("\"innovation\": 5") != std::string::npos);
    CHECK(text.find("\"analyzer\"") < text.find("\"refiner\""));
}

namespace {

std::string field_of_parse_error(const std::string& text, const ModelPool* pool = nullptr) {
    try {
        parse_genome(text, pool);
    } catch (const ParseError& e) {
        return e.field();
    }
    return "<no error>";
}

const char* kValid = R"({
  "genome_id": 3,
  "generator": {"model": "alpha", "prompt_index": 1, "temperature": 0.7},
  "stages": [
    {"innovation": 1, "max_iterations": 2, "refiner": {"model": "beta", "prompt_index": 0, "temperature": 0.3}},
    {"innovation": 4, "max_iterations": 1,
     "analyzer": {"model": "gamma", "prompt_index": 1, "temperature": 0.9},
     "refiner": {"model": "alpha", "prompt_index": 2, "temperature": 1.2}}
  ]
})";

std::string replace(std::string s, const std::string& from, const std::string& to) {
    auto pos = s.find(from);
    REQUIRE(pos != std::string::npos);
    return s.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("parse_genome accepts a hand-written record") {
    const auto pool = three_models();
    auto g = parse_genome(kValid, &pool);
    CHECK(g.genome_id == 3);
    CHECK(g.stages.size() == 2);
    CHECK(g.stages[1].analyzer->model.name == "gamma");
    CHECK(g.stages[1].refiner.temperature == 1.2);
    CHECK(node_count(g) == 6);
}

TEST_CASE("parse_genome names the offending field") {
    const auto pool = three_models();
    CHECK(field_of_parse_error(replace(kValid, "1.2}", "1.5}")) == "stages[1].refiner.temperature");
    CHECK(field_of_parse_error(replace(kValid, "\"prompt_index\": 1, \"temperature\": 0.7",
                                       "\"prompt_index\": 3, \"temperature\": 0.7")) == "generator.prompt_index");
    CHECK(field_of_parse_error(replace(kValid, "\"max_iterations\": 2", "\"max_iterations\": 4")) ==
          "stages[0].max_iterations");
    CHECK(field_of_parse_error(replace(kValid, "\"innovation\": 4", "\"innovation\": 1")) == "stages[1].innovation");
    CHECK(field_of_parse_error(replace(kValid, "\"gamma\"", "\"omega\""), &pool) == "stages[1].analyzer.model");
    CHECK(field_of_parse_error(replace(kValid, "\"genome_id\": 3,", "\"genome_id\": 3, \"color\": 1,")) == "color");
    CHECK(field_of_parse_error(replace(kValid, "\"model\": \"alpha\", \"prompt_index\": 1",
                                       "\"prompt_index\": 1")) == "generator.model");
    CHECK(field_of_parse_error("{not json") == "");
}

TEST_CASE("parse_genome rejects structural violations") {
    const std::string stage_json =
        R"({"innovation": N, "max_iterations": 1, "refiner": {"model": "a", "prompt_index": 0, "temperature": 0.5}})";
    auto stage_n = [&](int n) { return replace(stage_json, "N", std::to_string(n)); };
    const std::string head = R"({"genome_id": 1, "generator": {"model": "a", "prompt_index": 0, "temperature": 0.5}, "stages": [)";

    CHECK(field_of_parse_error(head + "]}") == "stages");
    CHECK(field_of_parse_error(head + stage_n(1) + "," + stage_n(2) + "," + stage_n(3) + "," + stage_n(4) + "]}") ==
          "stages");

    // Three stages with two analyzers is nine nodes.
    const std::string an = R"("analyzer": {"model": "a", "prompt_index": 0, "temperature": 0.5}, )";
    auto with_an = [&](int n) { return replace(stage_n(n), "\"refiner\"", an + "\"refiner\""); };
    CHECK(field_of_parse_error(head + with_an(1) + "," + with_an(2) + "," + stage_n(3) + "]}") == "stages");
    CHECK_NOTHROW(parse_genome(head + with_an(1) + "," + stage_n(2) + "," + stage_n(3) + "]}"));
}

TEST_CASE("same_configuration ignores genome ids") {
    auto a = genome({stage(1)}, "alpha", 1);
    auto b = genome({stage(1)}, "alpha", 2);
    CHECK(same_configuration(a, b));
    CHECK_FALSE(a == b);
    b.stages[0].max_iterations = 2;
    CHECK_FALSE(same_configuration(a, b));
}

TEST_CASE("describe lists nodes in pipeline order") {
    auto g = genome({stage(1, 2, true)}, "beta");
    const auto d = describe(g);
    CHECK(d.find("gen(beta") == 0);
    CHECK(d.find("exec") < d.find("ana("));
    CHECK(d.find("ana(") < d.find("ref("));
    CHECK(d.find("x2") != std::string::npos);
}

TEST_CASE("role names round-trip") {
    for (Role r : {Role::Generator, Role::Analyzer, Role::Refiner}) CHECK(role_from_string(to_string(r)) == r);
    CHECK_THROWS_AS(role_from_string("judge"), ParseError);
}

TEST_CASE("rng state round-trips") {
    Rng a(5);
    for (int i = 0; i < 17; ++i) a();
    Rng b;
    restore_rng(b, serialize_rng(a));
    for (int i = 0; i < 10; ++i) CHECK(a() == b());
    CHECK(derive_seed(1, "init") != derive_seed(1, "reproduce"));
    CHECK(derive_seed(1, "init") == derive_seed(1, "init"));
}

TEST_CASE("search parameter defaults and overrides") {
    SearchParams p;
    CHECK(p.population_size == 20);
    CHECK(p.elites == 2);
    CHECK(p.tournament_size == 3);
    CHECK(p.rates.add_refine_stage == 0.04);
    CHECK(p.rates.add_analyzer == 0.05);
    CHECK(p.rates.remove_node == 0.18);
    CHECK(p.rates.swap_model == 0.25);
    CHECK(p.rates.mutate_prompt == 0.30);
    CHECK(p.rates.adjust_temperature == 0.20);
    CHECK(p.rates.adjust_iterations == 0.10);
    CHECK(p.subset_size == 25);
    CHECK(p.column_count == 7);

    auto q = apply_overrides(p, nlohmann::ordered_json::parse(R"({"population_size": 8, "rates": {"swap_model": 0.5}})"));
    CHECK(q.population_size == 8);
    CHECK(q.rates.swap_model == 0.5);
    CHECK(q.rates.mutate_prompt == 0.30);
    CHECK_THROWS_AS(apply_overrides(p, nlohmann::ordered_json::parse(R"({"populaton_size": 8})")), ConfigError);
    CHECK_THROWS_AS(apply_overrides(p, nlohmann::ordered_json::parse(R"({"rates": {"swap_model": 1.5}})")), ConfigError);
    CHECK(apply_overrides(p, to_json(q)).population_size == 8);
}
