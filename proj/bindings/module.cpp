#include "tagtopo/diagnostics.hpp"
#include "tagtopo/errors.hpp"
#include "tagtopo/harness.hpp"
#include "tagtopo/labelprop.hpp"
#include "tagtopo/llm.hpp"
#include "tagtopo/refine.hpp"
#include "tagtopo/rng.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <optional>

namespace py = pybind11;
using namespace tagtopo;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-d array");
    Tensor t(int(a.shape(0)), int(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), t.v.begin());
    return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    py::array_t<double> a({t.rows, t.cols});
    std::copy(t.v.begin(), t.v.end(), a.mutable_data());
    return a;
}

WeightedAdjacency adjacency_from(int num_nodes, const std::vector<std::pair<int, int>>& edges,
                                 bool self_loops) {
    return WeightedAdjacency(num_nodes, edges, self_loops);
}

std::unique_ptr<MockBackend> mock_from_kind(const std::string& kind, std::uint64_t seed,
                                            const TextAttributedGraph& g, double noisy_p) {
    std::map<std::string, int> labels;
    for (const auto& n : g.nodes)
        if (n.label) labels[n.text] = *n.label;
    if (kind == "class-oracle")
        return std::make_unique<MockBackend>(MockMode::ClassOracle, seed, labels);
    if (kind == "lexical") return std::make_unique<MockBackend>(MockMode::Lexical, seed);
    if (kind == "noisy")
        return std::make_unique<MockBackend>(MockMode::NoisyLabeler, seed, labels, noisy_p);
    throw py::value_error("mock kind must be class-oracle, lexical or noisy");
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "LLM-guided topology refinement for text-attributed graphs";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<DataError>(m, "DataError");
    py::register_exception<BackendError>(m, "BackendError");
    py::register_exception<ParseFailure>(m, "ParseFailure");

    py::class_<TextAttributedGraph>(m, "Graph")
        .def_property_readonly("num_nodes", &TextAttributedGraph::num_nodes)
        .def_property_readonly("num_edges", &TextAttributedGraph::num_edges)
        .def_readonly("num_classes", &TextAttributedGraph::num_classes)
        .def_readonly("edges", &TextAttributedGraph::edges)
        .def("labels",
             [](const TextAttributedGraph& g) {
                 std::vector<std::optional<int>> out;
                 for (const auto& n : g.nodes) out.push_back(n.label);
                 return out;
             })
        .def("texts",
             [](const TextAttributedGraph& g) {
                 std::vector<std::string> out;
                 for (const auto& n : g.nodes) out.push_back(n.text);
                 return out;
             })
        .def("features", [](const TextAttributedGraph& g) {
            return array_from_tensor(feature_matrix(g));
        });

    m.def("load_graph", &load_graph, py::arg("node_file"), py::arg("edge_file"),
          py::arg("feature_file") = "");

    m.def(
        "synth_fixture",
        [](int nodes_per_class, int classes, double p_intra, double p_inter,
           double feature_noise, int feature_dim, std::uint64_t seed) {
            SynthParams sp;
            sp.nodes_per_class = nodes_per_class;
            sp.classes = classes;
            sp.p_intra = p_intra;
            sp.p_inter = p_inter;
            sp.feature_noise = feature_noise;
            sp.feature_dim = feature_dim;
            sp.seed = seed;
            return synth_fixture(sp);
        },
        py::arg("nodes_per_class") = 150, py::arg("classes") = 2, py::arg("p_intra") = 0.05,
        py::arg("p_inter") = 0.02, py::arg("feature_noise") = 1.0, py::arg("feature_dim") = 8,
        py::arg("seed") = 0);

    m.def(
        "make_split",
        [](const TextAttributedGraph& g, const std::string& policy, std::uint64_t seed) {
            const auto split = make_split(
                g, policy == "few-shot" ? SplitPolicy::FewShot : SplitPolicy::General, seed);
            py::dict out;
            out["train"] = split.train;
            out["val"] = split.val;
            out["test"] = split.test;
            return out;
        },
        py::arg("graph"), py::arg("policy") = "general", py::arg("seed") = 0);

    m.def("unreliable_edge_ratio", [](const TextAttributedGraph& g) {
        const auto rep = unreliable_edge_ratio(g);
        py::dict out;
        out["overall"] = rep.overall;
        out["per_class"] = rep.per_class;
        out["cross_edges"] = rep.cross_edges;
        out["total_edges"] = rep.total_edges;
        return out;
    });

    m.def(
        "normalized_adjacency",
        [](const TextAttributedGraph& g, bool self_loops) {
            const auto abar = normalize(WeightedAdjacency::from_graph(g, self_loops));
            return array_from_tensor(abar.to_dense());
        },
        py::arg("graph"), py::arg("self_loops") = true);

    m.def(
        "propagate",
        [](const TextAttributedGraph& g,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& y0, int k) {
            Tape tape;
            const auto abar =
                build_normalized_adjacency(tape, WeightedAdjacency::from_graph(g), false);
            const int y = propagate(tape, tape.leaf(tensor_from_array(y0)), abar, k);
            return array_from_tensor(tape.value(y));
        },
        py::arg("graph"), py::arg("y0"), py::arg("iterations") = 5);

    // prompts and parsers
    m.def(
        "build_similarity_prompt",
        [](const std::string& a, const std::string& b, int example_count) {
            auto examples = default_prompt_examples();
            examples.resize(std::min<std::size_t>(examples.size(),
                                                  std::size_t(std::max(0, example_count))));
            return build_similarity_prompt(a, b, examples);
        },
        py::arg("text_a"), py::arg("text_b"), py::arg("example_count") = 2);
    m.def("build_pseudolabel_prompt", &build_pseudolabel_prompt, py::arg("text"),
          py::arg("categories"));
    m.def("extract_ratio", &extract_ratio, py::arg("raw"));
    m.def("extract_ranked_labels", &extract_ranked_labels, py::arg("raw"),
          py::arg("categories"));

    m.def(
        "refine_with_mock",
        [](const TextAttributedGraph& g, const std::string& mock_kind, double xi_del,
           double xi_add, int candidate_cap, std::uint64_t seed, double noisy_p) {
            auto backend = mock_from_kind(mock_kind, seed, g, noisy_p);
            Gateway gateway(*backend);
            const auto candidates = select_candidates(g, candidate_cap, seed);
            const auto result = refine(g, candidates, xi_del, xi_add, gateway);
            py::dict out;
            out["edges"] = result.adjacency.edges();
            out["num_edges"] = result.adjacency.num_edges();
            out["failed_queries"] = result.failed_queries;
            py::list verdicts;
            for (const auto& v : result.verdicts) {
                py::dict row;
                row["pair"] = v.pair;
                row["kind"] = v.is_addition ? "addition" : "deletion";
                row["ratio"] = v.ratio;
                row["action"] = v.action == EdgeAction::Keep     ? "keep"
                                : v.action == EdgeAction::Delete ? "delete"
                                : v.action == EdgeAction::Add    ? "add"
                                                                 : "skip";
                verdicts.append(row);
            }
            out["verdicts"] = verdicts;
            return out;
        },
        py::arg("graph"), py::arg("mock") = "class-oracle", py::arg("xi_del") = 0.5,
        py::arg("xi_add") = 0.5, py::arg("candidate_cap") = 1000, py::arg("seed") = 0,
        py::arg("noisy_p") = 0.8);

    m.def(
        "pseudo_labels_with_mock",
        [](const TextAttributedGraph& g, const std::string& mock_kind, std::uint64_t seed,
           double noisy_p) {
            auto backend = mock_from_kind(mock_kind, seed, g, noisy_p);
            Gateway gateway(*backend);
            const auto cats = synth_categories(g.num_classes);
            std::vector<int> out;
            for (const auto& n : g.nodes) {
                PromptRequest req;
                req.kind = PromptKind::PseudoLabel;
                req.text = n.text;
                req.categories = cats;
                out.push_back(gateway.query(req).pseudo_label());
            }
            return out;
        },
        py::arg("graph"), py::arg("mock") = "noisy", py::arg("seed") = 0,
        py::arg("noisy_p") = 0.8);

    m.def(
        "embedding_variation",
        [](const TextAttributedGraph& g,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& h,
           bool self_loops) {
            return embedding_variation(tensor_from_array(h),
                                       WeightedAdjacency::from_graph(g, self_loops));
        },
        py::arg("graph"), py::arg("embeddings"), py::arg("self_loops") = true);

    m.def(
        "shrinking_check",
        [](const TextAttributedGraph& g,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& h0,
           const std::vector<double>& etas, int steps) {
            const auto report = shrinking_check(
                tensor_from_array(h0), WeightedAdjacency::from_graph(g), etas, steps);
            py::dict out;
            out["monotone"] = report.all_monotone();
            out["identity_error"] = report.identity_error;
            py::list series;
            for (const auto& s : report.series) {
                py::dict row;
                row["eta"] = s.eta;
                row["values"] = s.values;
                row["monotone"] = s.monotone;
                series.append(row);
            }
            out["series"] = series;
            out["propagation_values"] = report.propagation_values;
            return out;
        },
        py::arg("graph"), py::arg("h0"),
        py::arg("etas") = std::vector<double>{0.1, 0.25, 0.5, 0.9}, py::arg("steps") = 10);

    m.def(
        "silhouette_score",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& points,
           const std::vector<int>& groups) {
            return silhouette_score(tensor_from_array(points), groups);
        },
        py::arg("points"), py::arg("groups"));

    m.def(
        "train_mode",
        [](const TextAttributedGraph& g, const std::string& mode, double lambda, double beta,
           const std::vector<std::uint64_t>& seeds, int epochs, int hidden,
           const std::string& backend, std::uint64_t seed, const std::string& out_dir) {
            ExperimentSpec spec;
            spec.mode = parse_mode(mode);
            spec.train.lambda = lambda;
            spec.train.beta = beta;
            spec.train.seeds = seeds;
            spec.train.epochs = epochs;
            spec.train.hidden = hidden;
            spec.backend.kind = backend;
            spec.seed = seed;
            spec.out_dir = out_dir;
            // graph is passed in-memory through a synth round trip equivalent:
            // the harness path expects files or synth, so run directly here
            const auto labels = g.labels();
            const Tensor features = feature_matrix(g);
            const auto split = make_split(g, SplitPolicy::General, seed);
            py::dict out;
            std::vector<double> accs;
            TrainConfig cfg = spec.train;
            cfg.learn_edges = (spec.mode == RunMode::LlmLpa || spec.mode == RunMode::AdAndLpa) &&
                              (lambda > 0.0 || beta > 0.0);
            const LabelMatrix y_true = cfg.lambda > 0.0 || cfg.beta > 0.0
                                           ? init_true(split, labels, g.num_classes)
                                           : LabelMatrix{};
            LabelMatrix y_llm;
            const LabelMatrix* y_llm_ptr = nullptr;
            WeightedAdjacency adj = WeightedAdjacency::from_graph(g);
            std::unique_ptr<MockBackend> mock;
            if (spec.mode == RunMode::AD || spec.mode == RunMode::AdAndLpa) {
                mock = mock_from_kind(backend.rfind("mock:", 0) == 0 ? backend.substr(5)
                                                                     : backend,
                                      seed, g, 0.8);
                Gateway gateway(*mock);
                const auto candidates = select_candidates(g, 1000, seed);
                adj = refine(g, candidates, spec.train.xi_del, spec.train.xi_add, gateway)
                          .adjacency;
            }
            if (cfg.beta > 0.0 &&
                (spec.mode == RunMode::LlmLpa || spec.mode == RunMode::AdAndLpa)) {
                mock = mock_from_kind(backend.rfind("mock:", 0) == 0 ? backend.substr(5)
                                                                     : backend,
                                      seed, g, 0.8);
                Gateway gateway(*mock);
                const auto cats = synth_categories(g.num_classes);
                std::vector<int> pseudo(std::size_t(g.num_nodes()), 0);
                for (int i = 0; i < g.num_nodes(); ++i) {
                    PromptRequest req;
                    req.kind = PromptKind::PseudoLabel;
                    req.text = g.nodes[std::size_t(i)].text;
                    req.categories = cats;
                    pseudo[std::size_t(i)] = gateway.query(req).pseudo_label();
                }
                y_llm = init_llm(split, labels, pseudo, g.num_classes);
                y_llm_ptr = &y_llm;
            }
            const bool plain = spec.mode == RunMode::PlainGcn || spec.mode == RunMode::AD;
            if (plain) {
                cfg.lambda = 0.0;
                cfg.beta = 0.0;
                cfg.learn_edges = false;
            }
            for (std::uint64_t s : seeds)
                accs.push_back(train(adj, features, split, labels, g.num_classes, cfg, s,
                                     plain ? nullptr : &y_true, y_llm_ptr)
                                   .test_acc);
            const auto agg = aggregate(accs);
            out["test_mean"] = agg.mean;
            out["test_std"] = agg.stddev;
            out["per_seed"] = agg.values;
            return out;
        },
        py::arg("graph"), py::arg("mode") = "plain-gcn", py::arg("lambda_") = 1.0,
        py::arg("beta") = 1.0, py::arg("seeds") = std::vector<std::uint64_t>{0, 1, 2},
        py::arg("epochs") = 100, py::arg("hidden") = 16,
        py::arg("backend") = "mock:class-oracle", py::arg("seed") = 0,
        py::arg("out_dir") = "");

    m.def(
        "run_experiment",
        [](const std::string& toml_text) {
            const auto spec = spec_from_config(ConfigTable::parse_string(toml_text));
            const auto summary = run(spec);
            py::dict out;
            out["mode"] = summary.mode;
            out["dataset"] = summary.dataset;
            out["test_mean"] = summary.test_acc.mean;
            out["test_std"] = summary.test_acc.stddev;
            out["per_seed"] = summary.test_acc.values;
            out["artifacts"] = summary.artifact_files;
            return out;
        },
        py::arg("config_toml"));
}
