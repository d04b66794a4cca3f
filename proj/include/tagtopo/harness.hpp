#pragma once

#include "tagtopo/config.hpp"
#include "tagtopo/gcn.hpp"
#include "tagtopo/graph.hpp"
#include "tagtopo/llm.hpp"
#include "tagtopo/refine.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tagtopo {

enum class RunMode {
    PlainGcn,
    AD,
    LlmLpa,
    AdAndLpa,
    DeletionSweep,
    ThresholdGrid,
    ParamSweep,
};

RunMode parse_mode(const std::string& name);
std::string mode_name(RunMode mode);

struct SynthParams {
    int nodes_per_class = 150;
    int classes = 2;
    double p_intra = 0.05;
    double p_inter = 0.02;
    double feature_noise = 1.0;
    int feature_dim = 8;
    std::uint64_t seed = 0;
};

/// Stochastic block model with class-centroid features and keyword texts,
/// so the lexical and class-oracle mocks behave sensibly on it.
TextAttributedGraph synth_fixture(const SynthParams& params);
/// Category names matching the keywords baked into synth texts.
std::vector<std::string> synth_categories(int classes);

struct BackendSpec {
    std::string kind = "mock:class-oracle"; // http | mock:class-oracle | mock:lexical | mock:noisy
    double noisy_p = 0.8;
    HttpBackendConfig http;
};

struct ExperimentSpec {
    RunMode mode = RunMode::PlainGcn;
    std::string node_file, edge_file, feature_file;
    std::optional<SynthParams> synth; // wins over files when set
    SplitPolicy policy = SplitPolicy::General;
    TrainConfig train;
    BackendSpec backend;
    std::vector<std::string> categories;
    std::string out_dir = "out";
    std::string cache_file; // defaults to <out_dir>/cache.jsonl
    int candidate_cap = 1000;
    std::uint64_t seed = 0; // root seed for split/sampling/mock sub-streams
    int subsample = 0;      // optional node-count cap applied after loading
    std::vector<double> deletion_ratios = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<double> xi_del_grid = {0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<double> xi_add_grid = {0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<double> lambda_grid = {0.0, 1.0, 2.0, 5.0};
    std::vector<double> beta_grid = {0.0, 1.0, 2.0, 5.0};
    std::string dataset_name = "synth";

    std::string config_hash() const;
};

/// Experiment settings assembled from a config file; CLI flags override afterwards.
ExperimentSpec spec_from_config(const ConfigTable& cfg);

struct RunSummary {
    std::string mode;
    std::string dataset;
    SeedAggregate train_acc, val_acc, test_acc;
    std::vector<std::string> artifact_files;
};

/// Executes the mode's pipeline across all seeds and writes artifacts
/// (metric histories, verdict logs, learned weights, summary.csv) under
/// spec.out_dir.
RunSummary run(const ExperimentSpec& spec);

/// Loads (or synthesizes) the dataset named by the spec, with validation.
TextAttributedGraph load_spec_graph(const ExperimentSpec& spec);

/// Merges every summary.csv below results_dir into per-dataset tables,
/// marking best and second-best test accuracy per dataset column. Returns
/// the aligned-text table; the CSV lands next to it.
std::string report(const std::string& results_dir, const std::string& out_csv_path,
                   const std::string& out_txt_path);

} // namespace tagtopo
