#include "tagtopo/harness.hpp"

#include "tagtopo/diagnostics.hpp"
#include "tagtopo/errors.hpp"
#include "tagtopo/labelprop.hpp"
#include "tagtopo/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace tagtopo {

namespace fs = std::filesystem;
using nlohmann::json;

RunMode parse_mode(const std::string& name) {
    if (name == "plain-gcn") return RunMode::PlainGcn;
    if (name == "a-d") return RunMode::AD;
    if (name == "llm-lpa") return RunMode::LlmLpa;
    if (name == "a-d-and-lpa") return RunMode::AdAndLpa;
    if (name == "deletion-sweep") return RunMode::DeletionSweep;
    if (name == "threshold-grid") return RunMode::ThresholdGrid;
    if (name == "param-sweep") return RunMode::ParamSweep;
    throw ConfigError("unknown mode: " + name);
}

std::string mode_name(RunMode mode) {
    switch (mode) {
    case RunMode::PlainGcn: return "plain-gcn";
    case RunMode::AD: return "a-d";
    case RunMode::LlmLpa: return "llm-lpa";
    case RunMode::AdAndLpa: return "a-d-and-lpa";
    case RunMode::DeletionSweep: return "deletion-sweep";
    case RunMode::ThresholdGrid: return "threshold-grid";
    case RunMode::ParamSweep: return "param-sweep";
    }
    return "?";
}

namespace {

const std::vector<std::pair<const char*, const char*>>& keyword_pairs() {
    static const std::vector<std::pair<const char*, const char*>> words = {
        {"agents", "planning"},     {"compilers", "parsing"}, {"databases", "indexing"},
        {"encryption", "ciphers"},  {"genomics", "sequencing"}, {"robotics", "actuators"},
        {"semantics", "ontology"},  {"topology", "manifolds"},
    };
    return words;
}

} // namespace

std::vector<std::string> synth_categories(int classes) {
    std::vector<std::string> cats;
    cats.reserve(std::size_t(classes));
    const auto& words = keyword_pairs();
    for (int c = 0; c < classes; ++c) {
        if (c < int(words.size()))
            cats.emplace_back(words[std::size_t(c)].first);
        else
            cats.emplace_back("topic" + std::to_string(c));
    }
    return cats;
}

TextAttributedGraph synth_fixture(const SynthParams& params) {
    if (params.nodes_per_class < 1 || params.classes < 2)
        throw ConfigError("synth_fixture: degenerate sizes");
    if (params.p_intra < 0 || params.p_intra > 1 || params.p_inter < 0 || params.p_inter > 1)
        throw ConfigError("synth_fixture: probabilities must lie in [0, 1]");

    Rng rng = Rng::stream(params.seed, "synth");
    TextAttributedGraph g;
    g.num_classes = params.classes;
    const int n = params.nodes_per_class * params.classes;
    const auto& words = keyword_pairs();

    for (int i = 0; i < n; ++i) {
        const int c = i / params.nodes_per_class;
        NodeRecord r;
        r.id = i;
        r.label = c;
        std::string kw1, kw2;
        if (c < int(words.size())) {
            kw1 = words[std::size_t(c)].first;
            kw2 = words[std::size_t(c)].second;
        } else {
            kw1 = "topic" + std::to_string(c) + "a";
            kw2 = "topic" + std::to_string(c) + "b";
        }
        r.text = "node" + std::to_string(i) + " " + kw1 + " " + kw2;
        std::vector<double> feat(std::size_t(params.feature_dim), 0.0);
        feat[std::size_t(c % params.feature_dim)] = 1.0;
        for (double& x : feat) x += rng.normal(0.0, params.feature_noise);
        r.feature = std::move(feat);
        g.nodes.push_back(std::move(r));
        g.original_ids.push_back(i);
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const bool same = (i / params.nodes_per_class) == (j / params.nodes_per_class);
            const double p = same ? params.p_intra : params.p_inter;
            if (rng.uniform() < p) g.edges.emplace_back(i, j);
        }
    g.validate();
    return g;
}

ExperimentSpec spec_from_config(const ConfigTable& cfg) {
    ExperimentSpec spec;
    spec.mode = parse_mode(cfg.get_string("experiment.mode", "plain-gcn"));
    spec.out_dir = cfg.get_string("experiment.out", "out");
    spec.seed = std::uint64_t(cfg.get_int("experiment.seed", 0));
    spec.subsample = int(cfg.get_int("experiment.subsample", 0));
    spec.dataset_name = cfg.get_string("experiment.dataset", "synth");

    spec.node_file = cfg.get_string("dataset.nodes", "");
    spec.edge_file = cfg.get_string("dataset.edges", "");
    spec.feature_file = cfg.get_string("dataset.features", "");
    spec.policy = cfg.get_string("dataset.policy", "general") == "few-shot"
                      ? SplitPolicy::FewShot
                      : SplitPolicy::General;
    spec.categories = cfg.get_string_array("dataset.categories", {});

    if (cfg.get_bool("synth.enabled", spec.node_file.empty())) {
        SynthParams sp;
        sp.nodes_per_class = int(cfg.get_int("synth.nodes_per_class", sp.nodes_per_class));
        sp.classes = int(cfg.get_int("synth.classes", sp.classes));
        sp.p_intra = cfg.get_double("synth.p_intra", sp.p_intra);
        sp.p_inter = cfg.get_double("synth.p_inter", sp.p_inter);
        sp.feature_noise = cfg.get_double("synth.feature_noise", sp.feature_noise);
        sp.feature_dim = int(cfg.get_int("synth.feature_dim", sp.feature_dim));
        sp.seed = std::uint64_t(cfg.get_int("synth.seed", std::int64_t(spec.seed)));
        spec.synth = sp;
    }

    TrainConfig& t = spec.train;
    t.lambda = cfg.get_double("train.lambda", t.lambda);
    t.beta = cfg.get_double("train.beta", t.beta);
    t.xi_del = cfg.get_double("train.xi_del", t.xi_del);
    t.xi_add = cfg.get_double("train.xi_add", t.xi_add);
    t.k_gcn = int(cfg.get_int("train.k_gcn", t.k_gcn));
    t.k_lpa = int(cfg.get_int("train.k_lpa", t.k_lpa));
    t.hidden = int(cfg.get_int("train.hidden", t.hidden));
    t.learning_rate = cfg.get_double("train.learning_rate", t.learning_rate);
    t.weight_decay = cfg.get_double("train.weight_decay", t.weight_decay);
    t.dropout = cfg.get_double("train.dropout", t.dropout);
    t.epochs = int(cfg.get_int("train.epochs", t.epochs));
    t.patience = int(cfg.get_int("train.patience", t.patience));
    if (cfg.has("train.seeds")) {
        t.seeds.clear();
        for (double s : cfg.get_double_array("train.seeds"))
            t.seeds.push_back(std::uint64_t(s));
    }

    spec.candidate_cap = int(cfg.get_int("refine.candidate_cap", spec.candidate_cap));
    spec.deletion_ratios = cfg.get_double_array("sweep.deletion_ratios", spec.deletion_ratios);
    spec.xi_del_grid = cfg.get_double_array("sweep.xi_del_grid", spec.xi_del_grid);
    spec.xi_add_grid = cfg.get_double_array("sweep.xi_add_grid", spec.xi_add_grid);
    spec.lambda_grid = cfg.get_double_array("sweep.lambda_grid", spec.lambda_grid);
    spec.beta_grid = cfg.get_double_array("sweep.beta_grid", spec.beta_grid);

    spec.backend.kind = cfg.get_string("backend.kind", spec.backend.kind);
    spec.backend.noisy_p = cfg.get_double("backend.noisy_p", spec.backend.noisy_p);
    spec.backend.http.endpoint = cfg.get_string("backend.endpoint", "");
    spec.backend.http.path = cfg.get_string("backend.path", spec.backend.http.path);
    spec.backend.http.model = cfg.get_string("backend.model", spec.backend.http.model);
    spec.backend.http.temperature =
        cfg.get_double("backend.temperature", spec.backend.http.temperature);
    spec.backend.http.requests_per_minute =
        cfg.get_double("backend.requests_per_minute", spec.backend.http.requests_per_minute);
    spec.backend.http.max_in_flight =
        int(cfg.get_int("backend.max_in_flight", spec.backend.http.max_in_flight));
    spec.backend.http.timeout_seconds =
        int(cfg.get_int("backend.timeout_seconds", spec.backend.http.timeout_seconds));
    spec.backend.http.connect_timeout_seconds = int(
        cfg.get_int("backend.connect_timeout_seconds", spec.backend.http.connect_timeout_seconds));
    const std::string key_env = cfg.get_string("backend.api_key_env", "TAGTOPO_API_KEY");
    if (const char* key = std::getenv(key_env.c_str())) spec.backend.http.api_key = key;

    spec.cache_file = cfg.get_string("experiment.cache", "");
    return spec;
}

std::string ExperimentSpec::config_hash() const {
    std::ostringstream os;
    os << mode_name(mode) << '|' << node_file << '|' << edge_file << '|' << feature_file << '|'
       << (synth ? synth->nodes_per_class : -1) << '|' << (synth ? synth->classes : -1) << '|'
       << (synth ? synth->p_intra : 0) << '|' << (synth ? synth->p_inter : 0) << '|'
       << (synth ? synth->feature_noise : 0) << '|'
       << (policy == SplitPolicy::General ? "general" : "few-shot") << '|' << train.lambda << '|'
       << train.beta << '|' << train.xi_del << '|' << train.xi_add << '|' << train.k_lpa << '|'
       << train.hidden << '|' << train.learning_rate << '|' << train.weight_decay << '|'
       << train.dropout << '|' << train.epochs << '|' << train.patience << '|' << backend.kind
       << '|' << candidate_cap << '|' << seed << '|' << subsample;
    for (auto s : train.seeds) os << ',' << s;
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(os.str())));
    return buf;
}

TextAttributedGraph load_spec_graph(const ExperimentSpec& spec) {
    TextAttributedGraph g;
    if (spec.synth) {
        g = synth_fixture(*spec.synth);
    } else {
        if (spec.node_file.empty() || spec.edge_file.empty())
            throw ConfigError("dataset files missing and synth not enabled");
        g = load_graph(spec.node_file, spec.edge_file, spec.feature_file);
    }
    if (spec.subsample > 0 && spec.subsample < g.num_nodes()) {
        // seeded uniform node sample; indices remapped densely
        Rng rng = Rng::stream(spec.seed, "subsample");
        auto keep = rng.sample_without_replacement(g.num_nodes(), spec.subsample);
        std::sort(keep.begin(), keep.end());
        std::vector<int> dense(std::size_t(g.num_nodes()), -1);
        TextAttributedGraph cut;
        cut.num_classes = g.num_classes;
        for (int old_id : keep) {
            dense[std::size_t(old_id)] = int(cut.nodes.size());
            NodeRecord r = g.nodes[std::size_t(old_id)];
            r.id = int(cut.nodes.size());
            cut.nodes.push_back(std::move(r));
            cut.original_ids.push_back(g.original_ids[std::size_t(old_id)]);
        }
        for (const auto& [a, b] : g.edges)
            if (dense[std::size_t(a)] >= 0 && dense[std::size_t(b)] >= 0)
                cut.edges.emplace_back(dense[std::size_t(a)], dense[std::size_t(b)]);
        for (auto& [a, b] : cut.edges)
            if (a > b) std::swap(a, b);
        std::sort(cut.edges.begin(), cut.edges.end());
        cut.validate();
        return cut;
    }
    return g;
}

namespace {

std::map<std::string, int> text_label_map(const TextAttributedGraph& g) {
    std::map<std::string, int> m;
    for (const auto& n : g.nodes)
        if (n.label) m[n.text] = *n.label;
    return m;
}

std::unique_ptr<Backend> make_backend(const BackendSpec& spec, const TextAttributedGraph& g,
                                      std::uint64_t seed) {
    if (spec.kind == "http") {
        if (spec.http.endpoint.empty())
            throw ConfigError("backend.kind = http needs backend.endpoint");
        return std::make_unique<HttpBackend>(spec.http);
    }
    if (spec.kind == "mock:class-oracle")
        return std::make_unique<MockBackend>(MockMode::ClassOracle,
                                             hash_combine(seed, fnv1a64("mock")),
                                             text_label_map(g));
    if (spec.kind == "mock:lexical")
        return std::make_unique<MockBackend>(MockMode::Lexical,
                                             hash_combine(seed, fnv1a64("mock")));
    if (spec.kind == "mock:noisy")
        return std::make_unique<MockBackend>(MockMode::NoisyLabeler,
                                             hash_combine(seed, fnv1a64("mock")),
                                             text_label_map(g), spec.noisy_p);
    throw ConfigError("unknown backend kind: " + spec.kind);
}

int most_frequent_train_class(const DatasetSplit& split,
                              const std::vector<std::optional<int>>& labels, int num_classes) {
    std::vector<int> counts(std::size_t(num_classes), 0);
    for (int i : split.train)
        if (labels[std::size_t(i)]) counts[std::size_t(*labels[std::size_t(i)])]++;
    return int(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

struct PseudoLabels {
    std::vector<int> top;                  // per node; train nodes carry -1
    std::vector<std::vector<int>> ranked;  // raw ranked lists for the export
    int parse_failures = 0;
};

PseudoLabels collect_pseudo_labels(const TextAttributedGraph& g, const DatasetSplit& split,
                                   const std::vector<std::string>& categories,
                                   Gateway& gateway) {
    PseudoLabels out;
    out.top.assign(std::size_t(g.num_nodes()), -1);
    out.ranked.resize(std::size_t(g.num_nodes()));
    std::vector<bool> in_train(std::size_t(g.num_nodes()), false);
    for (int i : split.train) in_train[std::size_t(i)] = true;
    const int fallback = most_frequent_train_class(split, g.labels(), g.num_classes);

    for (int i = 0; i < g.num_nodes(); ++i) {
        if (in_train[std::size_t(i)]) continue;
        PromptRequest req;
        req.kind = PromptKind::PseudoLabel;
        req.text = g.nodes[std::size_t(i)].text;
        req.categories = categories;
        try {
            const auto judgment = gateway.query(req);
            out.ranked[std::size_t(i)] = *judgment.ranked_categories;
            out.top[std::size_t(i)] = judgment.pseudo_label();
        } catch (const ParseFailure&) {
            out.top[std::size_t(i)] = fallback;
            out.ranked[std::size_t(i)] = {fallback};
            out.parse_failures++;
        }
    }
    // fill train slots so init_llm gets a full vector (they are overridden anyway)
    for (int i : split.train)
        out.top[std::size_t(i)] = g.labels()[std::size_t(i)].value_or(fallback);
    return out;
}

std::string acc_cell(const SeedAggregate& a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f ± %.4f", a.mean, a.stddev);
    return buf;
}

void write_summary_csv(const std::string& path, const RunSummary& s) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write summary: " + path);
    out << "mode,dataset,n_seeds,train_mean,train_std,val_mean,val_std,test_mean,test_std\n";
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%s,%zu,%.10f,%.10f,%.10f,%.10f,%.10f,%.10f\n",
                  s.mode.c_str(), s.dataset.c_str(), s.test_acc.values.size(),
                  s.train_acc.mean, s.train_acc.stddev, s.val_acc.mean, s.val_acc.stddev,
                  s.test_acc.mean, s.test_acc.stddev);
    out << buf;
}

struct ModeOutcome {
    std::vector<double> train, val, test;
};

} // namespace

RunSummary run(const ExperimentSpec& spec) {
    const TextAttributedGraph graph = load_spec_graph(spec);
    const auto labels = graph.labels();
    const Tensor features = feature_matrix(graph);
    const DatasetSplit split = make_split(graph, spec.policy, spec.seed);

    fs::create_directories(spec.out_dir);
    const std::string cache_path =
        spec.cache_file.empty() ? (fs::path(spec.out_dir) / "cache.jsonl").string()
                                : spec.cache_file;

    std::vector<std::string> categories = spec.categories;
    if (categories.empty()) categories = synth_categories(graph.num_classes);
    if (int(categories.size()) != graph.num_classes)
        throw ConfigError("category count != num_classes");

    RunSummary summary;
    summary.mode = mode_name(spec.mode);
    summary.dataset = spec.dataset_name;

    auto artifact = [&](const std::string& name) {
        const std::string p = (fs::path(spec.out_dir) / name).string();
        summary.artifact_files.push_back(p);
        return p;
    };
    save_split_json(split, artifact("split.json"));

    // lazily constructed so mock-free modes never touch the backend
    std::unique_ptr<Backend> backend;
    std::unique_ptr<JudgmentCache> cache;
    std::unique_ptr<Gateway> gateway;
    auto need_gateway = [&]() -> Gateway& {
        if (!gateway) {
            backend = make_backend(spec.backend, graph, spec.seed);
            cache = std::make_unique<JudgmentCache>(cache_path);
            gateway = std::make_unique<Gateway>(*backend, cache.get());
        }
        return *gateway;
    };

    auto run_training = [&](const WeightedAdjacency& adj, double lambda, double beta,
                            const LabelMatrix* y_true, const LabelMatrix* y_llm,
                            const std::string& tag) {
        ModeOutcome outcome;
        TrainConfig cfg = spec.train;
        cfg.lambda = lambda;
        cfg.beta = beta;
        // edge weights are learned through the LPA regularizers; without them
        // the mode reduces exactly to the plain GCN
        cfg.learn_edges = lambda > 0.0 || beta > 0.0;
        const bool learn_edges = cfg.learn_edges;
        for (std::uint64_t seed : spec.train.seeds) {
            const TrainResult res =
                train(adj, features, split, labels, graph.num_classes, cfg, seed, y_true, y_llm);
            const std::string suffix = tag + "_seed" + std::to_string(seed);
            write_metric_history(artifact("metrics_" + suffix + ".csv"), res.history);
            save_checkpoint(artifact("checkpoint_" + suffix + ".bin"), res.model, res.theta,
                            spec.config_hash());
            if (learn_edges) {
                WeightedAdjacency learned = adj;
                learned.set_all_theta(res.theta);
                write_edge_weights(artifact("weights_" + suffix + ".csv"), learned, labels);
            }
            const EvalResult ev = [&] {
                WeightedAdjacency final_adj = adj;
                final_adj.set_all_theta(res.theta);
                return evaluate(res.model, final_adj, features, split, labels);
            }();
            outcome.train.push_back(ev.train_acc);
            outcome.val.push_back(ev.val_acc);
            outcome.test.push_back(ev.test_acc);
        }
        return outcome;
    };

    auto plain_trainer = [&](const TextAttributedGraph& g,
                             const std::vector<std::pair<int, int>>& edges,
                             std::uint64_t seed) {
        WeightedAdjacency adj(g.num_nodes(), edges);
        TrainConfig cfg = spec.train;
        cfg.lambda = 0.0;
        cfg.beta = 0.0;
        cfg.learn_edges = false;
        const TrainResult res =
            train(adj, features, split, labels, g.num_classes, cfg, seed);
        return res.test_acc;
    };

    ModeOutcome outcome;
    switch (spec.mode) {
    case RunMode::PlainGcn: {
        outcome = run_training(WeightedAdjacency::from_graph(graph), 0.0, 0.0, nullptr,
                               nullptr, "plain");
        break;
    }
    case RunMode::AD: {
        const auto candidates = select_candidates(graph, spec.candidate_cap, spec.seed);
        const auto refined =
            refine(graph, candidates, spec.train.xi_del, spec.train.xi_add, need_gateway());
        write_verdict_log(artifact("verdicts.csv"), refined.verdicts);
        outcome = run_training(refined.adjacency, 0.0, 0.0, nullptr, nullptr, "ad");
        break;
    }
    case RunMode::LlmLpa:
    case RunMode::AdAndLpa: {
        WeightedAdjacency adj = WeightedAdjacency::from_graph(graph);
        std::string tag = "llmlpa";
        if (spec.mode == RunMode::AdAndLpa) {
            const auto candidates = select_candidates(graph, spec.candidate_cap, spec.seed);
            const auto refined =
                refine(graph, candidates, spec.train.xi_del, spec.train.xi_add, need_gateway());
            write_verdict_log(artifact("verdicts.csv"), refined.verdicts);
            adj = refined.adjacency;
            tag = "adlpa";
        }
        const LabelMatrix y_true = init_true(split, labels, graph.num_classes);
        LabelMatrix y_llm;
        const LabelMatrix* y_llm_ptr = nullptr;
        if (spec.train.beta > 0.0) {
            const auto pseudo =
                collect_pseudo_labels(graph, split, categories, need_gateway());
            write_pseudolabels(artifact("pseudolabels.csv"), pseudo.ranked);
            y_llm = init_llm(split, labels, pseudo.top, graph.num_classes);
            y_llm_ptr = &y_llm;
        }
        outcome = run_training(adj, spec.train.lambda, spec.train.beta, &y_true,
                               y_llm_ptr, tag);
        break;
    }
    case RunMode::DeletionSweep: {
        const auto points =
            deletion_sweep(graph, spec.deletion_ratios, spec.train.seeds, plain_trainer);
        std::ofstream out(artifact("sweep.csv"));
        out << "ratio,mean,std";
        for (std::size_t s = 0; s < spec.train.seeds.size(); ++s) out << ",seed" << s;
        out << "\n";
        char buf[64];
        for (const auto& pt : points) {
            std::snprintf(buf, sizeof buf, "%.10g,%.10f,%.10f", pt.ratio, pt.mean_acc,
                          pt.std_acc);
            out << buf;
            for (double v : pt.per_seed) {
                std::snprintf(buf, sizeof buf, ",%.10f", v);
                out << buf;
            }
            out << "\n";
        }
        outcome.test = points.front().per_seed; // baseline row doubles as the summary
        outcome.train = outcome.val = outcome.test;
        break;
    }
    case RunMode::ThresholdGrid: {
        const auto cells =
            threshold_grid(graph, need_gateway(), spec.xi_del_grid, spec.xi_add_grid,
                           spec.train.seeds, spec.candidate_cap, spec.seed, plain_trainer);
        write_grid_csv(artifact("grid.csv"), cells, spec.xi_del_grid, spec.xi_add_grid);
        std::ofstream out(artifact("grid_cells.csv"));
        out << "xi_add,xi_del,mean,std\n";
        char buf[96];
        const GridCell* best = &cells.front();
        for (const auto& c : cells) {
            std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10f,%.10f\n", c.xi_add, c.xi_del,
                          c.mean_acc, c.std_acc);
            out << buf;
            if (c.mean_acc > best->mean_acc) best = &c;
        }
        outcome.test = {best->mean_acc};
        outcome.train = outcome.val = outcome.test;
        break;
    }
    case RunMode::ParamSweep: {
        const LabelMatrix y_true = init_true(split, labels, graph.num_classes);
        const auto pseudo = collect_pseudo_labels(graph, split, categories, need_gateway());
        write_pseudolabels(artifact("pseudolabels.csv"), pseudo.ranked);
        const LabelMatrix y_llm = init_llm(split, labels, pseudo.top, graph.num_classes);
        std::ofstream out(artifact("param_sweep.csv"));
        out << "lambda,beta,test_mean,test_std\n";
        char buf[96];
        double best = -1.0;
        for (double lambda : spec.lambda_grid)
            for (double beta : spec.beta_grid) {
                std::vector<double> accs;
                TrainConfig cfg = spec.train;
                cfg.lambda = lambda;
                cfg.beta = beta;
                cfg.learn_edges = lambda > 0.0 || beta > 0.0;
                for (std::uint64_t seed : spec.train.seeds) {
                    const TrainResult res =
                        train(WeightedAdjacency::from_graph(graph), features, split, labels,
                              graph.num_classes, cfg, seed, &y_true,
                              beta > 0.0 ? &y_llm : nullptr);
                    accs.push_back(res.test_acc);
                }
                const auto agg = aggregate(accs);
                std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10f,%.10f\n", lambda, beta,
                              agg.mean, agg.stddev);
                out << buf;
                best = std::max(best, agg.mean);
            }
        outcome.test = {best};
        outcome.train = outcome.val = outcome.test;
        break;
    }
    }

    summary.train_acc = aggregate(outcome.train);
    summary.val_acc = aggregate(outcome.val);
    summary.test_acc = aggregate(outcome.test);
    write_summary_csv((fs::path(spec.out_dir) / "summary.csv").string(), summary);

    json run_meta;
    run_meta["mode"] = summary.mode;
    run_meta["dataset"] = summary.dataset;
    run_meta["config_hash"] = spec.config_hash();
    run_meta["summary"] = {{"test", acc_cell(summary.test_acc)},
                           {"val", acc_cell(summary.val_acc)},
                           {"train", acc_cell(summary.train_acc)}};
    std::ofstream meta((fs::path(spec.out_dir) / "run.json").string());
    meta << run_meta.dump(2) << "\n";
    return summary;
}

std::string report(const std::string& results_dir, const std::string& out_csv_path,
                   const std::string& out_txt_path) {
    struct Row {
        double mean = 0.0, stddev = 0.0;
    };
    std::map<std::string, std::map<std::string, Row>> by_mode; // mode -> dataset -> stats
    std::set<std::string> datasets;

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(results_dir))
        if (entry.is_regular_file() && entry.path().filename() == "summary.csv")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("report: no summary.csv under " + results_dir);

    for (const auto& file : files) {
        std::ifstream in(file);
        std::string line;
        std::getline(in, line); // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::vector<std::string> cells;
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            if (cells.size() < 9) throw DataError("report: malformed summary row in " +
                                                  file.string());
            Row row{std::stod(cells[7]), std::stod(cells[8])};
            by_mode[cells[0]][cells[1]] = row;
            datasets.insert(cells[1]);
        }
    }

    // rank per dataset column
    std::map<std::string, std::pair<double, double>> top_two; // dataset -> (best, second)
    for (const auto& ds : datasets) {
        std::vector<double> means;
        for (const auto& [mode, cols] : by_mode)
            if (cols.count(ds)) means.push_back(cols.at(ds).mean);
        std::sort(means.rbegin(), means.rend());
        top_two[ds] = {means.front(), means.size() > 1 ? means[1] : means.front()};
    }

    auto marker = [&](const std::string& ds, double mean) -> const char* {
        const auto [best, second] = top_two.at(ds);
        if (mean == best) return "*";
        if (mean == second) return "+";
        return "";
    };

    std::ofstream csv(out_csv_path);
    if (!csv) throw DataError("report: cannot write " + out_csv_path);
    csv << "mode,dataset,test_mean,test_std,rank\n";
    char buf[160];
    for (const auto& [mode, cols] : by_mode)
        for (const auto& [ds, row] : cols) {
            const char* mark = marker(ds, row.mean);
            std::snprintf(buf, sizeof buf, "%s,%s,%.10f,%.10f,%s\n", mode.c_str(), ds.c_str(),
                          row.mean, row.stddev, *mark ? (mark[0] == '*' ? "best" : "second")
                                                      : "");
            csv << buf;
        }

    // aligned text table; '*' marks best, '+' second best per column
    std::size_t mode_w = 4;
    for (const auto& [mode, cols] : by_mode) mode_w = std::max(mode_w, mode.size());
    std::ostringstream txt;
    txt << std::string(mode_w, ' ');
    for (const auto& ds : datasets) {
        std::snprintf(buf, sizeof buf, "  %18s", ds.c_str());
        txt << buf;
    }
    txt << "\n";
    for (const auto& [mode, cols] : by_mode) {
        txt << mode << std::string(mode_w - mode.size(), ' ');
        for (const auto& ds : datasets) {
            if (cols.count(ds)) {
                const Row& row = cols.at(ds);
                char cellbuf[64];
                std::snprintf(cellbuf, sizeof cellbuf, "%.4f ± %.4f%s", row.mean, row.stddev,
                              marker(ds, row.mean));
                std::snprintf(buf, sizeof buf, "  %18s", cellbuf);
            } else {
                std::snprintf(buf, sizeof buf, "  %18s", "-");
            }
            txt << buf;
        }
        txt << "\n";
    }
    std::ofstream txt_out(out_txt_path);
    if (!txt_out) throw DataError("report: cannot write " + out_txt_path);
    txt_out << txt.str();
    return txt.str();
}

} // namespace tagtopo
