#pragma once

#include "tagtopo/graph.hpp"
#include "tagtopo/labelprop.hpp"
#include "tagtopo/tape.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tagtopo {

struct GcnModel {
    Tensor w0; // d_in x d_hidden
    Tensor w1; // d_hidden x num_classes
    double dropout = 0.5;

    static GcnModel init(int d_in, int d_hidden, int num_classes, double dropout,
                         std::uint64_t seed);
};

struct TrainConfig {
    double lambda = 1.0;         // weight of the true-label LPA loss
    double beta = 1.0;           // weight of the LLM pseudo-label LPA loss
    double xi_del = 0.5;
    double xi_add = 0.5;
    int k_gcn = 2;               // GCN depth (fixed two-layer when 2)
    int k_lpa = 5;               // propagation iterations
    int hidden = 16;
    double learning_rate = 0.01;
    double weight_decay = 5e-4;  // applied to W only, never to edge parameters
    double dropout = 0.5;
    int epochs = 200;
    int patience = 50;
    bool learn_edges = false;    // optimize theta alongside W
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};

    void validate() const; // throws ConfigError
};

struct GcnForward {
    int logits = -1;
    int hidden = -1; // post-activation first-layer embeddings
};

/// Two-layer message passing: Abar relu(Abar H0 W0) [mask] W1. The optional
/// mask multiplies the hidden layer (inverted-dropout scaling baked in).
GcnForward gcn_forward(Tape& tape, const TapeAdjacency& abar, int h0, int w0, int w1,
                       const Tensor* hidden_mask = nullptr);

/// L_gcn + lambda * L_lpa + beta * L_llm-lpa, each averaged over train nodes.
/// Zero-weight terms are skipped so the reduction to a plain GCN is exact.
int joint_loss(Tape& tape, int logits, std::optional<int> y_lpa, std::optional<int> y_llm,
               const DatasetSplit& split, const std::vector<std::optional<int>>& labels,
               int num_classes, double lambda, double beta);

struct MetricRow {
    int epoch = 0;
    double train_loss = 0.0;
    double val_acc = 0.0;
    double test_acc = 0.0;
};

struct TrainResult {
    GcnModel model;
    std::vector<double> theta;      // learned edge parameters (frozen at 0 unless learn_edges)
    std::vector<MetricRow> history;
    int best_epoch = 0;
    double best_val_acc = 0.0;
    double test_acc = 0.0;          // at the best-val checkpoint
};

/// Joint gradient descent over (W, theta) with weight decay on W only,
/// early stopping on validation accuracy, best-val checkpoint returned.
/// y0_true is required when lambda > 0, y0_llm when beta > 0.
TrainResult train(const WeightedAdjacency& adj, const Tensor& features,
                  const DatasetSplit& split, const std::vector<std::optional<int>>& labels,
                  int num_classes, const TrainConfig& config, std::uint64_t seed,
                  const LabelMatrix* y0_true = nullptr, const LabelMatrix* y0_llm = nullptr);

/// argmax accuracy of logits over the given node subset
double accuracy(const Tensor& logits, const std::vector<std::optional<int>>& labels,
                const std::vector<int>& subset);

struct EvalResult {
    double train_acc = 0.0, val_acc = 0.0, test_acc = 0.0;
    Tensor logits;
    Tensor hidden;
};

EvalResult evaluate(const GcnModel& model, const WeightedAdjacency& adj, const Tensor& features,
                    const DatasetSplit& split, const std::vector<std::optional<int>>& labels);

struct SeedAggregate {
    double mean = 0.0;
    double stddev = 0.0; // sample std (n-1)
    std::vector<double> values;
};

SeedAggregate aggregate(std::vector<double> values);

void write_metric_history(const std::string& path, const std::vector<MetricRow>& history);

/// Little-endian binary of named shape-tagged 64-bit tensors plus a JSON
/// sidecar carrying the config hash.
void save_checkpoint(const std::string& path, const GcnModel& model,
                     const std::vector<double>& theta, const std::string& config_hash);
struct Checkpoint {
    GcnModel model;
    std::vector<double> theta;
    std::string config_hash;
};
Checkpoint load_checkpoint(const std::string& path);

/// CSV src,dst,weight,src_class,dst_class for every learned edge.
void write_edge_weights(const std::string& path, const WeightedAdjacency& adj,
                        const std::vector<std::optional<int>>& labels);

} // namespace tagtopo
