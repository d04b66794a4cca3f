#include <doctest.h>

#include "tagtopo/errors.hpp"
#include "tagtopo/gcn.hpp"
#include "tagtopo/llm.hpp"
#include "tagtopo/refine.hpp"
#include "tagtopo/rng.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

using namespace tagtopo;

namespace {

TextAttributedGraph labeled_graph(int n, int classes, std::vector<std::pair<int, int>> edges) {
    TextAttributedGraph g;
    g.num_classes = classes;
    for (int i = 0; i < n; ++i) {
        NodeRecord r;
        r.id = i;
        r.text = "text-" + std::to_string(i);
        r.label = i % classes;
        g.nodes.push_back(r);
        g.original_ids.push_back(i);
    }
    g.edges = std::move(edges);
    return g;
}

std::map<std::string, int> label_map(const TextAttributedGraph& g) {
    std::map<std::string, int> m;
    for (const auto& n : g.nodes) m[n.text] = *n.label;
    return m;
}

// returns a fixed ratio for every pair
class ConstantBackend : public Backend {
public:
    explicit ConstantBackend(double ratio) : ratio_(ratio) {}
    std::string complete(const PromptRequest&) override {
        char buf[64];
        std::snprintf(buf, sizeof buf, "Related ratio = %.2f, Reason: scripted.", ratio_);
        return buf;
    }
    std::string id() const override { return "constant"; }

private:
    double ratio_;
};

} // namespace

TEST_SUITE("refine") {

TEST_CASE("triangle minus one edge yields exactly that addition candidate") {
    auto g = labeled_graph(3, 3, {{0, 1}, {1, 2}});
    const auto cs = select_candidates(g, 10, 1);
    CHECK(cs.deletions.size() == 2);
    REQUIRE(cs.additions.size() == 1);
    CHECK(cs.additions[0] == std::pair{0, 2});
}

TEST_CASE("complete graph has no addition candidates") {
    auto g = labeled_graph(4, 2, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
    const auto cs = select_candidates(g, 10, 1);
    CHECK(cs.additions.empty());
    CHECK(cs.deletions.size() == 6);
}

TEST_CASE("cap bounds both candidate pools and sampling is deterministic") {
    Rng rng(5);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < 40; ++i)
        for (int j = i + 1; j < 40; ++j)
            if (rng.uniform() < 0.2) edges.emplace_back(i, j);
    auto g = labeled_graph(40, 4, edges);
    const auto a = select_candidates(g, 15, 9);
    const auto b = select_candidates(g, 15, 9);
    CHECK(a.deletions.size() == 15);
    CHECK(a.additions.size() <= 15);
    CHECK(a.deletions == b.deletions);
    CHECK(a.additions == b.additions);
    for (const auto& d : a.deletions)
        CHECK(std::find(g.edges.begin(), g.edges.end(), d) != g.edges.end());
    std::set<std::pair<int, int>> edge_set(g.edges.begin(), g.edges.end());
    for (const auto& add : a.additions) CHECK(!edge_set.count(add));

    CHECK_THROWS_AS(select_candidates(labeled_graph(3, 3, {}), 5, 1), DataError);
    CHECK_THROWS_AS(select_candidates(g, 0, 1), ConfigError);
}

TEST_CASE("eq.2 semantics: above threshold keeps, boundary deletes") {
    auto g = labeled_graph(4, 2, {{0, 1}, {2, 3}});
    CandidateSet cs;
    cs.deletions = {{0, 1}, {2, 3}};
    cs.sample_cap = 2;

    SUBCASE("ratio above threshold -> keep") {
        ConstantBackend be(0.8);
        Gateway gw(be);
        const auto res = refine(g, cs, 0.5, 0.5, gw);
        CHECK(res.adjacency.num_edges() == 2);
        for (const auto& v : res.verdicts) CHECK(v.action == EdgeAction::Keep);
    }
    SUBCASE("ratio exactly at threshold -> delete") {
        ConstantBackend be(0.5);
        Gateway gw(be);
        const auto res = refine(g, cs, 0.5, 0.5, gw);
        CHECK(res.adjacency.num_edges() == 0);
        for (const auto& v : res.verdicts) CHECK(v.action == EdgeAction::Delete);
    }
}

TEST_CASE("class-oracle refine removes every cross-class candidate and adds every same-class one") {
    Rng rng(3);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < 30; ++i)
        for (int j = i + 1; j < 30; ++j)
            if (rng.uniform() < 0.25) edges.emplace_back(i, j);
    auto g = labeled_graph(30, 3, edges);
    MockBackend be(MockMode::ClassOracle, 17, label_map(g));
    Gateway gw(be);
    const auto cs = select_candidates(g, 1000, 21);
    const auto res = refine(g, cs, 0.5, 0.5, gw);

    std::set<std::pair<int, int>> refined(res.adjacency.edges().begin(),
                                          res.adjacency.edges().end());
    auto cls = [&](int i) { return *g.nodes[std::size_t(i)].label; };
    for (const auto& d : cs.deletions)
        if (cls(d.first) != cls(d.second)) CHECK(!refined.count(d));
    for (const auto& a : cs.additions) {
        if (cls(a.first) == cls(a.second))
            CHECK(refined.count(a));
        else
            CHECK(!refined.count(a));
    }
}

TEST_CASE("non-candidate edges survive untouched and refine is monotone in xi_del") {
    Rng rng(8);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < 25; ++i)
        for (int j = i + 1; j < 25; ++j)
            if (rng.uniform() < 0.3) edges.emplace_back(i, j);
    auto g = labeled_graph(25, 2, edges);

    // lexical mock gives a spread of ratios over synthetic texts
    for (auto& n : g.nodes)
        n.text = "tok" + std::to_string(n.id % 7) + " tok" + std::to_string(n.id % 3) + " base";
    MockBackend be(MockMode::Lexical, 1);
    Gateway gw(be);

    CandidateSet cs = select_candidates(g, 12, 4);
    std::set<std::pair<int, int>> candidate_set(cs.deletions.begin(), cs.deletions.end());

    std::vector<std::set<std::pair<int, int>>> kept;
    for (double xi : {0.2, 0.5, 0.8}) {
        const auto res = refine(g, cs, xi, xi, gw);
        std::set<std::pair<int, int>> refined(res.adjacency.edges().begin(),
                                              res.adjacency.edges().end());
        for (const auto& e : g.edges)
            if (!candidate_set.count(e)) CHECK(refined.count(e)); // untouched
        std::set<std::pair<int, int>> kept_cand;
        for (const auto& e : cs.deletions)
            if (refined.count(e)) kept_cand.insert(e);
        kept.push_back(std::move(kept_cand));
    }
    // higher threshold keeps a subset of candidates
    for (std::size_t i = 1; i < kept.size(); ++i)
        CHECK(std::includes(kept[i - 1].begin(), kept[i - 1].end(), kept[i].begin(),
                            kept[i].end()));
}

TEST_CASE("refine with a fully cached gateway is deterministic and free") {
    auto g = labeled_graph(12, 2,
                           {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {8, 9}});
    const auto cs = select_candidates(g, 6, 2);

    const auto cache_path =
        (std::filesystem::temp_directory_path() / "tagtopo_refine_cache.jsonl").string();
    std::error_code ec;
    std::filesystem::remove(cache_path, ec);

    std::vector<std::pair<int, int>> first_edges;
    {
        MockBackend be(MockMode::ClassOracle, 5, label_map(g));
        JudgmentCache cache(cache_path);
        Gateway gw(be, &cache);
        first_edges = refine(g, cs, 0.5, 0.5, gw).adjacency.edges();
        CHECK(gw.backend_calls() > 0);
    }
    {
        MockBackend be(MockMode::ClassOracle, 5, label_map(g));
        JudgmentCache cache(cache_path);
        Gateway gw(be, &cache);
        const auto again = refine(g, cs, 0.5, 0.5, gw).adjacency.edges();
        CHECK(gw.backend_calls() == 0);
        CHECK(again == first_edges);
    }
    std::filesystem::remove(cache_path, ec);
}

TEST_CASE("threshold grid: reliable-add/unreliable-delete corner beats the opposite one") {
    // class-oracle ratios are 0.9 same / 0.1 cross, so low thresholds keep and
    // add the reliable edges while xi = 0.9 deletes everything it touches
    Rng rng(19);
    TextAttributedGraph g;
    g.num_classes = 2;
    const int per = 20, n = 40;
    for (int i = 0; i < n; ++i) {
        NodeRecord r;
        r.id = i;
        r.label = i < per ? 0 : 1;
        r.text = "t" + std::to_string(i);
        r.feature = std::vector<double>{(i < per ? 1.0 : 0.0) + rng.normal(0, 0.8),
                                        (i < per ? 0.0 : 1.0) + rng.normal(0, 0.8)};
        g.nodes.push_back(r);
        g.original_ids.push_back(i);
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const bool same = (i < per) == (j < per);
            if (rng.uniform() < (same ? 0.2 : 0.08)) g.edges.emplace_back(i, j);
        }
    MockBackend oracle(MockMode::ClassOracle, 3, label_map(g));
    Gateway gw(oracle);

    const Tensor features = feature_matrix(g);
    const auto split = make_split(g, SplitPolicy::General, 1);
    const auto labels = g.labels();
    TrainConfig cfg;
    cfg.lambda = 0;
    cfg.beta = 0;
    cfg.hidden = 8;
    cfg.epochs = 60;
    auto trainer = [&](const TextAttributedGraph& gg,
                       const std::vector<std::pair<int, int>>& edges, std::uint64_t seed) {
        WeightedAdjacency adj(gg.num_nodes(), edges);
        return train(adj, features, split, labels, 2, cfg, seed).test_acc;
    };
    const std::vector<double> grid = {0.1, 0.5, 0.9};
    const auto cells = threshold_grid(g, gw, grid, grid, {0, 1}, 60, 5, trainer);
    REQUIRE(cells.size() == 9);

    double top_left = 0.0, bottom_right = 0.0;
    int tl = 0, br = 0;
    for (const auto& c : cells) {
        if (c.xi_add <= 0.5 && c.xi_del <= 0.5) {
            top_left += c.mean_acc;
            ++tl;
        }
        if (c.xi_add >= 0.5 && c.xi_del >= 0.5) {
            bottom_right += c.mean_acc;
            ++br;
        }
    }
    CHECK(top_left / tl >= bottom_right / br);
}

TEST_CASE("threshold grid rejects values outside the sweep range") {
    auto g = labeled_graph(6, 2, {{0, 1}, {1, 2}, {2, 3}});
    ConstantBackend be(0.8);
    Gateway gw(be);
    auto trainer = [](const TextAttributedGraph&, const std::vector<std::pair<int, int>>&,
                      std::uint64_t) { return 0.5; };
    CHECK_THROWS_AS(threshold_grid(g, gw, {0.05}, {0.5}, {0}, 3, 1, trainer), ConfigError);
    CHECK_THROWS_AS(threshold_grid(g, gw, {0.5}, {0.95}, {0}, 3, 1, trainer), ConfigError);
    CHECK_NOTHROW(threshold_grid(g, gw, {0.5}, {0.5}, {0}, 3, 1, trainer));
}

TEST_CASE("failed queries are neutral; verdict log round-trips to csv") {
    auto g = labeled_graph(6, 2, {{0, 1}, {2, 3}});
    CandidateSet cs;
    cs.deletions = {{0, 1}};
    cs.additions = {{0, 2}};
    cs.sample_cap = 2;

    // parse failures on every call: deletion kept, addition not added, but <= 50% rule trips
    class Refusing : public Backend {
    public:
        std::string complete(const PromptRequest&) override { return "no idea"; }
        std::string id() const override { return "refusing"; }
    } refusing;
    Gateway gw(refusing);
    CHECK_THROWS_AS(refine(g, cs, 0.5, 0.5, gw), BackendError);

    // half failing stays within bounds: 1 of 2 queries fails
    class HalfGood : public Backend {
    public:
        std::string complete(const PromptRequest& r) override {
            if (r.text_a == "text-0" && r.text_b == "text-1")
                return "Related ratio = 0.9, Reason: fine.";
            return "cannot say";
        }
        std::string id() const override { return "halfgood"; }
    } half;
    Gateway gw2(half);
    const auto res = refine(g, cs, 0.5, 0.5, gw2);
    CHECK(res.failed_queries == 1);
    std::set<std::pair<int, int>> refined(res.adjacency.edges().begin(),
                                          res.adjacency.edges().end());
    CHECK(refined.count({0, 1}));  // kept
    CHECK(!refined.count({0, 2})); // skipped addition not added

    const auto log_path =
        (std::filesystem::temp_directory_path() / "tagtopo_verdicts.csv").string();
    write_verdict_log(log_path, res.verdicts);
    std::ifstream in(log_path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "src,dst,kind,ratio,action,threshold");
    int rows = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);
    std::error_code ec;
    std::filesystem::remove(log_path, ec);
}

} // TEST_SUITE
