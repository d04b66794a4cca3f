#include "tagtopo/diagnostics.hpp"
#include "tagtopo/errors.hpp"
#include "tagtopo/harness.hpp"
#include "tagtopo/labelprop.hpp"
#include "tagtopo/rng.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace tagtopo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitBackend = 4;
constexpr int kExitCheckFailed = 5;

struct CommonFlags {
    std::string config;
    std::string mode;
    std::string backend;
    std::string out;
    std::int64_t seed = -1;
};

ExperimentSpec build_spec(const CommonFlags& flags) {
    ExperimentSpec spec = flags.config.empty()
                              ? spec_from_config(ConfigTable::parse_string(""))
                              : spec_from_config(ConfigTable::parse_file(flags.config));
    if (!flags.mode.empty()) spec.mode = parse_mode(flags.mode);
    if (!flags.backend.empty()) spec.backend.kind = flags.backend;
    if (!flags.out.empty()) spec.out_dir = flags.out;
    if (flags.seed >= 0) {
        spec.seed = std::uint64_t(flags.seed);
        if (spec.synth) spec.synth->seed = spec.seed;
    }
    return spec;
}

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config, "TOML config file");
    cmd->add_option("--seed", flags.seed, "root seed (overrides config)");
    cmd->add_option("--mode", flags.mode,
                    "plain-gcn|a-d|llm-lpa|a-d-and-lpa|deletion-sweep|threshold-grid|param-sweep");
    cmd->add_option("--out", flags.out, "output directory");
    cmd->add_option("--backend", flags.backend,
                    "http|mock:class-oracle|mock:lexical|mock:noisy");
}

Gateway make_gateway(const ExperimentSpec& spec, const TextAttributedGraph& graph,
                     std::unique_ptr<Backend>& backend_slot,
                     std::unique_ptr<JudgmentCache>& cache_slot) {
    if (spec.backend.kind == "http" && spec.backend.http.endpoint.empty())
        throw ConfigError("http backend needs backend.endpoint in the config");
    const std::string cache_path = spec.cache_file.empty()
                                       ? (fs::path(spec.out_dir) / "cache.jsonl").string()
                                       : spec.cache_file;
    fs::create_directories(spec.out_dir);
    std::map<std::string, int> label_map;
    for (const auto& n : graph.nodes)
        if (n.label) label_map[n.text] = *n.label;
    if (spec.backend.kind == "http")
        backend_slot = std::make_unique<HttpBackend>(spec.backend.http);
    else if (spec.backend.kind == "mock:class-oracle")
        backend_slot = std::make_unique<MockBackend>(
            MockMode::ClassOracle, hash_combine(spec.seed, fnv1a64("mock")), label_map);
    else if (spec.backend.kind == "mock:lexical")
        backend_slot = std::make_unique<MockBackend>(MockMode::Lexical,
                                                     hash_combine(spec.seed, fnv1a64("mock")));
    else if (spec.backend.kind == "mock:noisy")
        backend_slot = std::make_unique<MockBackend>(MockMode::NoisyLabeler,
                                                     hash_combine(spec.seed, fnv1a64("mock")),
                                                     label_map, spec.backend.noisy_p);
    else
        throw ConfigError("unknown backend kind: " + spec.backend.kind);
    cache_slot = std::make_unique<JudgmentCache>(cache_path);
    return Gateway(*backend_slot, cache_slot.get());
}

int cmd_load_check(const CommonFlags& flags) {
    const ExperimentSpec spec = build_spec(flags);
    const TextAttributedGraph g = load_spec_graph(spec);
    std::cout << "nodes: " << g.num_nodes() << "\n";
    std::cout << "edges: " << g.num_edges() << "\n";
    std::cout << "classes: " << g.num_classes << "\n";
    int labeled = 0;
    for (const auto& n : g.nodes)
        if (n.label) ++labeled;
    std::cout << "labeled: " << labeled << "\n";
    if (labeled == g.num_nodes() && g.num_edges() > 0) {
        const auto ratio = unreliable_edge_ratio(g);
        std::cout << "unreliable edge ratio: " << ratio.overall << "\n";
        for (int c = 0; c < g.num_classes; ++c)
            std::cout << "  class " << c << ": " << ratio.per_class[std::size_t(c)] << " over "
                      << ratio.per_class_edges[std::size_t(c)] << " edges\n";
    }
    const Tensor x = feature_matrix(g);
    std::cout << "feature dim: " << x.cols << "\n";
    return kExitOk;
}

int cmd_refine(const CommonFlags& flags) {
    ExperimentSpec spec = build_spec(flags);
    const TextAttributedGraph g = load_spec_graph(spec);
    std::unique_ptr<Backend> backend;
    std::unique_ptr<JudgmentCache> cache;
    Gateway gateway = make_gateway(spec, g, backend, cache);
    const auto candidates = select_candidates(g, spec.candidate_cap, spec.seed);
    const auto result = refine(g, candidates, spec.train.xi_del, spec.train.xi_add, gateway);
    const auto verdicts = (fs::path(spec.out_dir) / "verdicts.csv").string();
    write_verdict_log(verdicts, result.verdicts);
    std::ofstream edges((fs::path(spec.out_dir) / "refined_edges.csv").string());
    edges << "src,dst\n";
    for (const auto& [a, b] : result.adjacency.edges()) edges << a << "," << b << "\n";
    std::cout << "verdicts: " << result.verdicts.size() << " (" << result.failed_queries
              << " skipped)\n";
    std::cout << "refined edges: " << result.adjacency.num_edges() << " (from " << g.num_edges()
              << ")\n";
    std::cout << "wrote " << verdicts << "\n";
    return kExitOk;
}

int cmd_pseudolabel(const CommonFlags& flags) {
    ExperimentSpec spec = build_spec(flags);
    const TextAttributedGraph g = load_spec_graph(spec);
    std::unique_ptr<Backend> backend;
    std::unique_ptr<JudgmentCache> cache;
    Gateway gateway = make_gateway(spec, g, backend, cache);
    std::vector<std::string> categories = spec.categories;
    if (categories.empty()) categories = synth_categories(g.num_classes);

    std::vector<std::vector<int>> ranked(std::size_t(g.num_nodes()));
    int failures = 0;
    for (int i = 0; i < g.num_nodes(); ++i) {
        PromptRequest req;
        req.kind = PromptKind::PseudoLabel;
        req.text = g.nodes[std::size_t(i)].text;
        req.categories = categories;
        try {
            ranked[std::size_t(i)] = *gateway.query(req).ranked_categories;
        } catch (const ParseFailure&) {
            ++failures;
        }
    }
    const auto path = (fs::path(spec.out_dir) / "pseudolabels.csv").string();
    write_pseudolabels(path, ranked);
    std::cout << "pseudo-labeled " << (g.num_nodes() - failures) << "/" << g.num_nodes()
              << " nodes -> " << path << "\n";
    return kExitOk;
}

int cmd_train(const CommonFlags& flags) {
    const ExperimentSpec spec = build_spec(flags);
    const RunSummary summary = run(spec);
    std::cout << "mode " << summary.mode << " on " << summary.dataset << "\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "test acc: %.4f ± %.4f over %zu seeds\n",
                  summary.test_acc.mean, summary.test_acc.stddev,
                  summary.test_acc.values.size());
    std::cout << buf << "artifacts in " << spec.out_dir << "\n";
    return kExitOk;
}

int cmd_sweep(const CommonFlags& flags) {
    ExperimentSpec spec = build_spec(flags);
    if (spec.mode != RunMode::DeletionSweep && spec.mode != RunMode::ThresholdGrid &&
        spec.mode != RunMode::ParamSweep)
        spec.mode = RunMode::DeletionSweep;
    const RunSummary summary = run(spec);
    std::cout << "sweep " << summary.mode << " done; artifacts in " << spec.out_dir << "\n";
    return kExitOk;
}

int cmd_diagnose(const CommonFlags& flags, int graphs, int steps) {
    const ExperimentSpec spec = build_spec(flags);
    fs::create_directories(spec.out_dir);

    // shrinking suite over random graphs plus the loaded/synthesized one
    Rng rng = Rng::stream(spec.seed, "diagnose");
    const std::vector<double> etas = {0.1, 0.25, 0.5, 0.9};
    int violations = 0;
    double worst_identity = 0.0;
    for (int t = 0; t < graphs; ++t) {
        const int n = int(rng.uniform_int(2, 30));
        std::vector<std::pair<int, int>> edges;
        const double p = rng.uniform(0.15, 0.5);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (rng.uniform() < p) edges.emplace_back(i, j);
        if (edges.empty() && n > 1) edges.emplace_back(0, 1);
        WeightedAdjacency adj(n, edges);
        Tensor h(n, int(rng.uniform_int(1, 8)));
        for (double& x : h.v) x = rng.normal();
        const auto report = shrinking_check(h, adj, etas, steps);
        if (!report.all_monotone()) ++violations;
        worst_identity = std::max(worst_identity, report.identity_error);
        if (t == 0)
            write_variation_report((fs::path(spec.out_dir) / "variation.json").string(),
                                   report);
    }
    std::cout << "shrinking: " << (graphs - violations) << "/" << graphs
              << " graphs monotone, worst identity error " << worst_identity << "\n";

    // embedding export for the configured dataset
    const TextAttributedGraph g = load_spec_graph(spec);
    const Tensor features = feature_matrix(g);
    const DatasetSplit split = make_split(g, spec.policy, spec.seed);
    TrainConfig cfg = spec.train;
    cfg.lambda = 0.0;
    cfg.beta = 0.0;
    const auto res = train(WeightedAdjacency::from_graph(g), features, split, g.labels(),
                           g.num_classes, cfg, spec.train.seeds.front());
    const auto ev = evaluate(res.model, WeightedAdjacency::from_graph(g), features, split,
                             g.labels());
    export_embeddings((fs::path(spec.out_dir) / "embeddings.csv").string(), ev.hidden,
                      g.labels());
    std::cout << "embeddings -> " << (fs::path(spec.out_dir) / "embeddings.csv").string()
              << "\n";

    if (violations > 0 || worst_identity > 1e-12) {
        std::cerr << "diagnose: shrinking checks failed\n";
        return kExitCheckFailed;
    }
    return kExitOk;
}

int cmd_report(const CommonFlags& flags, const std::string& results_dir) {
    const std::string out = flags.out.empty() ? results_dir : flags.out;
    fs::create_directories(out);
    const std::string table = report(results_dir, (fs::path(out) / "report.csv").string(),
                                     (fs::path(out) / "report.txt").string());
    std::cout << table;
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"LLM-guided topology refinement toolkit for text-attributed graphs"};
    app.require_subcommand(1);

    CommonFlags flags;
    int diag_graphs = 50;
    int diag_steps = 10;
    std::string results_dir = "out";

    auto* load_check = app.add_subcommand("load-check", "validate a dataset and print stats");
    add_common(load_check, flags);
    auto* refine_cmd = app.add_subcommand("refine", "LLM edge deletion/addition");
    add_common(refine_cmd, flags);
    auto* pseudo = app.add_subcommand("pseudolabel", "LLM pseudo-labels for every node");
    add_common(pseudo, flags);
    auto* train_cmd = app.add_subcommand("train", "run the configured mode across seeds");
    add_common(train_cmd, flags);
    auto* sweep = app.add_subcommand("sweep", "deletion/threshold/parameter sweeps");
    add_common(sweep, flags);
    auto* diagnose = app.add_subcommand("diagnose", "shrinking suite + embedding export");
    add_common(diagnose, flags);
    diagnose->add_option("--graphs", diag_graphs, "random graphs to check");
    diagnose->add_option("--steps", diag_steps, "iterations per graph");
    auto* report_cmd = app.add_subcommand("report", "summary tables from a results directory");
    add_common(report_cmd, flags);
    report_cmd->add_option("results", results_dir, "directory holding run outputs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (load_check->parsed()) return cmd_load_check(flags);
        if (refine_cmd->parsed()) return cmd_refine(flags);
        if (pseudo->parsed()) return cmd_pseudolabel(flags);
        if (train_cmd->parsed()) return cmd_train(flags);
        if (sweep->parsed()) return cmd_sweep(flags);
        if (diagnose->parsed()) return cmd_diagnose(flags, diag_graphs, diag_steps);
        if (report_cmd->parsed()) return cmd_report(flags, results_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
