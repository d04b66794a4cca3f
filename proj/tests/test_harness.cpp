#include <doctest.h>

#include "tagtopo/config.hpp"
#include "tagtopo/errors.hpp"
#include "tagtopo/harness.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace tagtopo;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("tagtopo_harness_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(bool(in));
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

TEST_SUITE("harness") {

TEST_CASE("toml subset parser") {
    const auto cfg = ConfigTable::parse_string(R"(
# top comment
title = "demo run"   # trailing comment
count = 42
rate = 0.25
flag = true

[train]
seeds = [0, 1, 2]
names = ["a", "b"]
lr = 1e-2

[backend]
kind = "mock:class-oracle"
)");
    CHECK(cfg.get_string("title") == "demo run");
    CHECK(cfg.get_int("count") == 42);
    CHECK(cfg.get_double("rate") == 0.25);
    CHECK(cfg.get_bool("flag"));
    CHECK(cfg.get_double_array("train.seeds") == std::vector<double>{0, 1, 2});
    CHECK(cfg.get_string_array("train.names") == std::vector<std::string>{"a", "b"});
    CHECK(cfg.get_double("train.lr") == doctest::Approx(0.01));
    CHECK(cfg.get_string("backend.kind") == "mock:class-oracle");
    CHECK(cfg.get_int("missing", 7) == 7);
    CHECK_THROWS_AS(cfg.get_int("missing"), ConfigError);
    CHECK_THROWS_AS(cfg.get_int("title"), ConfigError);
    CHECK_THROWS_AS(ConfigTable::parse_string("bad line without equals"), ConfigError);
    CHECK_THROWS_AS(ConfigTable::parse_string("[unterminated"), ConfigError);
    CHECK_THROWS_AS(ConfigTable::parse_string("x = 1\nx = 2"), ConfigError);
}

TEST_CASE("config strings keep quoted hashes and escapes") {
    const auto cfg = ConfigTable::parse_string(R"(s = "a # not comment \"q\" \n")");
    CHECK(cfg.get_string("s") == "a # not comment \"q\" \n");
}

TEST_CASE("synth fixture: p_inter 0 gives zero unreliable edges") {
    SynthParams sp;
    sp.nodes_per_class = 40;
    sp.classes = 3;
    sp.p_intra = 0.1;
    sp.p_inter = 0.0;
    sp.seed = 5;
    const auto g = synth_fixture(sp);
    CHECK(unreliable_edge_ratio(g).overall == 0.0);
}

TEST_CASE("synth fixture: empirical cross-class fraction is within 3 sigma") {
    SynthParams sp;
    sp.nodes_per_class = 100;
    sp.classes = 2;
    sp.p_intra = 0.05;
    sp.p_inter = 0.02;
    sp.seed = 11;
    const auto g = synth_fixture(sp);
    const auto rep = unreliable_edge_ratio(g);

    // binomial bound on the cross-edge count from the generation parameters
    const double cross_pairs = 100.0 * 100.0;
    const double mean = cross_pairs * sp.p_inter;
    const double sigma = std::sqrt(cross_pairs * sp.p_inter * (1.0 - sp.p_inter));
    CHECK(std::abs(double(rep.cross_edges) - mean) <= 3.0 * sigma);
}

TEST_CASE("synth fixture: same seed same graph, texts carry class keywords") {
    SynthParams sp;
    sp.nodes_per_class = 20;
    sp.classes = 2;
    sp.seed = 9;
    const auto a = synth_fixture(sp);
    const auto b = synth_fixture(sp);
    CHECK(a.edges == b.edges);
    REQUIRE(a.nodes.size() == b.nodes.size());
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
        CHECK(a.nodes[i].text == b.nodes[i].text);
        CHECK(*a.nodes[i].feature == *b.nodes[i].feature);
    }
    CHECK(a.nodes[0].text.find("agents") != std::string::npos);
    CHECK(a.nodes[25].text.find("compilers") != std::string::npos);
    CHECK(synth_categories(2) == std::vector<std::string>{"agents", "compilers"});

    SynthParams bad = sp;
    bad.classes = 1;
    CHECK_THROWS_AS(synth_fixture(bad), ConfigError);
}

TEST_CASE("spec_from_config round trip with overrides") {
    const auto cfg = ConfigTable::parse_string(R"(
[experiment]
mode = "llm-lpa"
out = "some/dir"
seed = 3
[synth]
enabled = true
nodes_per_class = 30
classes = 2
[train]
lambda = 2.0
beta = 0.5
seeds = [1, 2]
[backend]
kind = "mock:noisy"
noisy_p = 0.9
)");
    const auto spec = spec_from_config(cfg);
    CHECK(spec.mode == RunMode::LlmLpa);
    CHECK(spec.out_dir == "some/dir");
    CHECK(spec.seed == 3);
    REQUIRE(spec.synth.has_value());
    CHECK(spec.synth->nodes_per_class == 30);
    CHECK(spec.train.lambda == 2.0);
    CHECK(spec.train.beta == 0.5);
    CHECK(spec.train.seeds == std::vector<std::uint64_t>{1, 2});
    CHECK(spec.backend.kind == "mock:noisy");
    CHECK(spec.backend.noisy_p == 0.9);
    CHECK_THROWS_AS(parse_mode("bogus"), ConfigError);
}

TEST_CASE("plain-gcn run writes per-seed metrics and a summary row") {
    TempDir dir;
    ExperimentSpec spec;
    spec.mode = RunMode::PlainGcn;
    SynthParams sp;
    sp.nodes_per_class = 30;
    sp.classes = 2;
    sp.p_intra = 0.15;
    sp.p_inter = 0.02;
    sp.feature_noise = 0.5;
    sp.seed = 0;
    spec.synth = sp;
    spec.train.seeds = {0, 1, 2};
    spec.train.epochs = 40;
    spec.train.hidden = 8;
    spec.out_dir = (dir.path / "run").string();

    const auto summary = run(spec);
    CHECK(summary.mode == "plain-gcn");
    CHECK(summary.test_acc.values.size() == 3);
    CHECK(summary.test_acc.mean > 0.5);
    CHECK(fs::exists(dir.path / "run" / "summary.csv"));
    CHECK(fs::exists(dir.path / "run" / "metrics_plain_seed0.csv"));
    CHECK(fs::exists(dir.path / "run" / "metrics_plain_seed2.csv"));
    CHECK(fs::exists(dir.path / "run" / "checkpoint_plain_seed1.bin"));
    CHECK(fs::exists(dir.path / "run" / "run.json"));
}

TEST_CASE("a-d-and-lpa pipeline refines first and byte-identical reruns") {
    TempDir dir;
    ExperimentSpec spec;
    spec.mode = RunMode::AdAndLpa;
    SynthParams sp;
    sp.nodes_per_class = 25;
    sp.classes = 2;
    sp.p_intra = 0.15;
    sp.p_inter = 0.05;
    sp.feature_noise = 0.6;
    sp.seed = 1;
    spec.synth = sp;
    spec.train.seeds = {0, 1};
    spec.train.epochs = 30;
    spec.train.hidden = 8;
    spec.train.lambda = 1.0;
    spec.train.beta = 1.0;
    spec.candidate_cap = 40;
    spec.backend.kind = "mock:class-oracle";

    spec.out_dir = (dir.path / "a").string();
    const auto first = run(spec);
    spec.out_dir = (dir.path / "b").string();
    const auto second = run(spec);

    CHECK(fs::exists(dir.path / "a" / "verdicts.csv"));
    CHECK(fs::exists(dir.path / "a" / "pseudolabels.csv"));
    CHECK(fs::exists(dir.path / "a" / "weights_adlpa_seed0.csv"));
    CHECK(first.test_acc.mean == second.test_acc.mean);

    // determinism: metric CSVs byte-identical across reruns with the same spec
    for (const char* name : {"metrics_adlpa_seed0.csv", "metrics_adlpa_seed1.csv",
                             "summary.csv", "verdicts.csv", "pseudolabels.csv"})
        CHECK(slurp(dir.path / "a" / name) == slurp(dir.path / "b" / name));
}

TEST_CASE("mode reduction: a-d with thresholds at zero equals plain-gcn metrics") {
    // every mock ratio is > 0, so nothing is deleted; additions all land,
    // which changes the graph -- so restrict the cap to deletions only by
    // comparing against a run whose additions are rejected at threshold 1
    TempDir dir;
    SynthParams sp;
    sp.nodes_per_class = 20;
    sp.classes = 2;
    sp.p_intra = 0.2;
    sp.p_inter = 0.04;
    sp.feature_noise = 0.5;
    sp.seed = 2;

    ExperimentSpec plain;
    plain.mode = RunMode::PlainGcn;
    plain.synth = sp;
    plain.train.seeds = {0, 1};
    plain.train.epochs = 25;
    plain.train.hidden = 8;
    plain.out_dir = (dir.path / "plain").string();
    const auto base = run(plain);

    ExperimentSpec ad = plain;
    ad.mode = RunMode::AD;
    ad.train.xi_del = 0.0; // class-oracle never answers 0, so every edge stays
    ad.train.xi_add = 1.0; // and no addition can clear the bar
    ad.backend.kind = "mock:class-oracle";
    ad.candidate_cap = 30;
    ad.out_dir = (dir.path / "ad").string();
    const auto refined = run(ad);

    REQUIRE(base.test_acc.values.size() == refined.test_acc.values.size());
    for (std::size_t i = 0; i < base.test_acc.values.size(); ++i)
        CHECK(base.test_acc.values[i] == refined.test_acc.values[i]);
}

TEST_CASE("mode reduction: a-d-and-lpa with lambda=beta=0 equals plain-gcn end-to-end") {
    TempDir dir;
    SynthParams sp;
    sp.nodes_per_class = 20;
    sp.classes = 2;
    sp.p_intra = 0.2;
    sp.p_inter = 0.04;
    sp.feature_noise = 0.5;
    sp.seed = 8;

    ExperimentSpec plain;
    plain.mode = RunMode::PlainGcn;
    plain.synth = sp;
    plain.train.seeds = {0, 1};
    plain.train.epochs = 25;
    plain.train.hidden = 8;
    plain.out_dir = (dir.path / "plain").string();
    const auto base = run(plain);

    ExperimentSpec combo = plain;
    combo.mode = RunMode::AdAndLpa;
    combo.train.lambda = 0.0;
    combo.train.beta = 0.0;
    combo.train.xi_del = 0.0; // keep every candidate, add nothing
    combo.train.xi_add = 1.0;
    combo.backend.kind = "mock:class-oracle";
    combo.candidate_cap = 20;
    combo.out_dir = (dir.path / "combo").string();
    const auto merged = run(combo);

    REQUIRE(base.test_acc.values.size() == merged.test_acc.values.size());
    for (std::size_t i = 0; i < base.test_acc.values.size(); ++i)
        CHECK(base.test_acc.values[i] == merged.test_acc.values[i]);
}

TEST_CASE("deletion sweep emits one row per ratio") {
    TempDir dir;
    ExperimentSpec spec;
    spec.mode = RunMode::DeletionSweep;
    SynthParams sp;
    sp.nodes_per_class = 20;
    sp.classes = 2;
    sp.p_intra = 0.2;
    sp.p_inter = 0.08;
    sp.feature_noise = 0.8;
    sp.seed = 3;
    spec.synth = sp;
    spec.train.seeds = {0, 1};
    spec.train.epochs = 25;
    spec.train.hidden = 8;
    spec.deletion_ratios = {0.0, 0.5, 1.0};
    spec.out_dir = (dir.path / "sweep").string();
    run(spec);
    const auto text = slurp(dir.path / "sweep" / "sweep.csv");
    CHECK(std::count(text.begin(), text.end(), '\n') == 4); // header + 3 ratios
    CHECK(text.rfind("ratio,mean,std,seed0,seed1", 0) == 0);
}

TEST_CASE("param sweep over the coarse lambda/beta sub-grid yields 16 rows") {
    TempDir dir;
    ExperimentSpec spec;
    spec.mode = RunMode::ParamSweep;
    SynthParams sp;
    sp.nodes_per_class = 15;
    sp.classes = 2;
    sp.p_intra = 0.25;
    sp.p_inter = 0.06;
    sp.feature_noise = 0.5;
    sp.seed = 5;
    spec.synth = sp;
    spec.train.seeds = {0};
    spec.train.epochs = 12;
    spec.train.hidden = 6;
    spec.backend.kind = "mock:class-oracle";
    spec.lambda_grid = {0.0, 1.0, 2.0, 5.0};
    spec.beta_grid = {0.0, 1.0, 2.0, 5.0};
    spec.out_dir = (dir.path / "params").string();
    run(spec);
    const auto text = slurp(dir.path / "params" / "param_sweep.csv");
    CHECK(std::count(text.begin(), text.end(), '\n') == 17); // header + 16 cells
    CHECK(text.rfind("lambda,beta,test_mean,test_std", 0) == 0);
}

TEST_CASE("threshold grid covers the full cartesian product") {
    TempDir dir;
    ExperimentSpec spec;
    spec.mode = RunMode::ThresholdGrid;
    SynthParams sp;
    sp.nodes_per_class = 15;
    sp.classes = 2;
    sp.p_intra = 0.25;
    sp.p_inter = 0.06;
    sp.feature_noise = 0.5;
    sp.seed = 4;
    spec.synth = sp;
    spec.train.seeds = {0};
    spec.train.epochs = 15;
    spec.train.hidden = 6;
    spec.candidate_cap = 20;
    spec.xi_del_grid = {0.3, 0.7};
    spec.xi_add_grid = {0.3, 0.7};
    spec.backend.kind = "mock:class-oracle";
    spec.out_dir = (dir.path / "grid").string();
    run(spec);
    const auto cells = slurp(dir.path / "grid" / "grid_cells.csv");
    CHECK(std::count(cells.begin(), cells.end(), '\n') == 5); // header + 4 cells
    const auto grid = slurp(dir.path / "grid" / "grid.csv");
    CHECK(grid.rfind("xi_add\\xi_del,0.3,0.7", 0) == 0);
}

TEST_CASE("report marks best and second best and regenerates byte-identically") {
    TempDir dir;
    auto write_summary = [&](const std::string& sub, const std::string& mode, double mean) {
        fs::create_directories(dir.path / sub);
        std::ofstream out(dir.path / sub / "summary.csv");
        out << "mode,dataset,n_seeds,train_mean,train_std,val_mean,val_std,test_mean,test_std\n";
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s,synth,5,0.9,0.01,0.9,0.01,%.10f,0.0100000000\n",
                      mode.c_str(), mean);
        out << buf;
    };
    write_summary("r1", "plain-gcn", 0.87);
    write_summary("r2", "llm-lpa", 0.88);
    write_summary("r3", "a-d", 0.86);

    const auto csv_path = (dir.path / "report.csv").string();
    const auto txt_path = (dir.path / "report.txt").string();
    const std::string table = report(dir.path.string(), csv_path, txt_path);
    CHECK(table.find("llm-lpa") != std::string::npos);
    CHECK(table.find("0.8800 ± 0.0100*") != std::string::npos);
    CHECK(table.find("0.8700 ± 0.0100+") != std::string::npos);

    const std::string first_csv = slurp(csv_path);
    const std::string again = report(dir.path.string(), csv_path, txt_path);
    CHECK(again == table);
    CHECK(slurp(csv_path) == first_csv);

    SUBCASE("ties are both marked best") {
        write_summary("r4", "tied-mode", 0.88);
        const std::string tied = report(dir.path.string(), csv_path, txt_path);
        CHECK(std::count(tied.begin(), tied.end(), '*') == 2);
    }
}

TEST_CASE("subsample draws a valid induced subgraph covering both classes") {
    ExperimentSpec spec;
    SynthParams sp;
    sp.nodes_per_class = 30;
    sp.classes = 2;
    sp.seed = 6;
    spec.synth = sp;
    spec.subsample = 20;
    const auto g = load_spec_graph(spec);
    CHECK(g.num_nodes() == 20);
    int per_class[2] = {0, 0};
    for (const auto& n : g.nodes) per_class[std::size_t(*n.label)]++;
    CHECK(per_class[0] > 0);
    CHECK(per_class[1] > 0);
    for (const auto& [a, b] : g.edges) {
        CHECK(a < 20);
        CHECK(b < 20);
        CHECK(a < b);
    }
    const auto again = load_spec_graph(spec);
    CHECK(g.edges == again.edges);
}

} // TEST_SUITE
