#pragma once

#include "tagtopo/graph.hpp"
#include "tagtopo/tape.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tagtopo {

enum class LabelSource { TrueLabels, LlmPseudo, Mixed };

/// Row-per-node distribution matrix used as propagation state. Initialized
/// rows are exact one-hots, everything else stays zero.
struct LabelMatrix {
    Tensor rows;
    LabelSource source = LabelSource::TrueLabels;
};

/// Train rows one-hot from true labels; all other rows zero.
LabelMatrix init_true(const DatasetSplit& split, const std::vector<std::optional<int>>& labels,
                      int num_classes);

/// Train rows one-hot from true labels (pseudo-labels never override them);
/// every other row one-hot from its pseudo-label.
LabelMatrix init_llm(const DatasetSplit& split, const std::vector<std::optional<int>>& labels,
                     const std::vector<int>& pseudo_labels, int num_classes);

/// Learnable normalized adjacency realized on the tape:
/// theta -> exp -> scatter into the symmetric pattern -> degree_sum ->
/// rsqrt -> edge_scale. Gradients reach theta through the whole chain.
struct TapeAdjacency {
    std::shared_ptr<const SparsePattern> pattern;
    int theta = -1;       // leaf, num_edges x 1
    int abar_values = -1; // normalized entry values, nnz x 1
};

TapeAdjacency build_normalized_adjacency(Tape& tape, const WeightedAdjacency& adj,
                                         bool trainable);

/// K sparse products Y^(k) = Abar Y^(k-1) on the tape.
int propagate(Tape& tape, int y0, const TapeAdjacency& abar, int iterations);

/// Cross-entropy of the renormalized propagated rows against true labels,
/// averaged over the train set.
int lpa_loss(Tape& tape, int y_propagated, const DatasetSplit& split,
             const std::vector<std::optional<int>>& labels, int num_classes);

Tensor onehot_labels(const std::vector<std::optional<int>>& labels, int num_classes);

/// CSV rows node_id,pseudo_label,confidence_rank (one row per ranked choice).
void write_pseudolabels(const std::string& path,
                        const std::vector<std::vector<int>>& ranked_per_node);
std::vector<std::vector<int>> read_pseudolabels(const std::string& path, int num_nodes);

} // namespace tagtopo
