#pragma once

#include "tagtopo/tape.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tagtopo {

struct NodeRecord {
    int id = 0;                                  // dense index
    std::string text;                            // title/abstract, may be empty
    std::optional<int> label;                    // class index in [0, num_classes)
    std::optional<std::vector<double>> feature;  // precomputed vector
};

/// Undirected text-attributed graph. Edges are stored once with
/// first < second; node indices are dense after loading.
struct TextAttributedGraph {
    std::vector<NodeRecord> nodes;
    std::vector<std::pair<int, int>> edges;
    int num_classes = 0;
    std::vector<long long> original_ids; // dense index -> id from the source file

    int num_nodes() const { return int(nodes.size()); }
    int num_edges() const { return int(edges.size()); }
    std::vector<std::optional<int>> labels() const;
    void validate() const; // throws DataError on any invariant breach
};

/// node_file: JSONL {"id": int, "text": str, "label": int|null}
/// edge_file: CSV with header src,dst (original ids, one undirected edge/row)
/// feature_file: optional CSV, row i = features of dense node i
TextAttributedGraph load_graph(const std::string& node_file, const std::string& edge_file,
                               const std::string& feature_file = "");

/// Per-node features: precomputed vectors when every node has one,
/// otherwise a bag-of-words fallback over the texts (vocab capped,
/// rows L2-normalized).
Tensor feature_matrix(const TextAttributedGraph& g, int bow_vocab_cap = 512);

/// Sparse symmetric adjacency with one learnable parameter per undirected
/// edge; the stored weight is exp(theta) so it stays positive. Self-loops
/// (weight 1, not learnable) are appended before normalization.
class WeightedAdjacency {
public:
    WeightedAdjacency(int num_nodes, std::vector<std::pair<int, int>> edges,
                      bool self_loops = true);
    static WeightedAdjacency from_graph(const TextAttributedGraph& g, bool self_loops = true);

    int num_nodes() const { return num_nodes_; }
    int num_edges() const { return int(edges_.size()); }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    bool has_self_loops() const { return self_loops_; }

    double theta(int e) const { return theta_[std::size_t(e)]; }
    void set_theta(int e, double v);
    void set_all_theta(const std::vector<double>& v);
    const std::vector<double>& all_theta() const { return theta_; }
    double weight(int e) const;

    /// degrees D(i,i) = sum_j A(i,j), self-loop included; cached lazily and
    /// invalidated by any theta change
    const std::vector<double>& degrees() const;

    /// CSR pattern over both edge directions plus the diagonal when
    /// self-loops are on; stable for the lifetime of the edge set
    std::shared_ptr<const SparsePattern> pattern() const;
    /// pattern entry k -> index into the weight vector [w_0..w_{E-1}, 1...1]
    /// (values >= E address the fixed unit self-loops)
    const std::vector<int>& entry_weight_index() const;
    /// numeric value per pattern entry (w_e, or 1 for self-loops)
    std::vector<double> entry_values() const;

private:
    void build_pattern() const;
    int num_nodes_ = 0;
    bool self_loops_ = true;
    std::vector<std::pair<int, int>> edges_;
    std::vector<double> theta_;
    mutable std::vector<double> degree_cache_;
    mutable bool degree_dirty_ = true;
    mutable std::shared_ptr<const SparsePattern> pattern_;
    mutable std::vector<int> entry_weight_index_;
};

/// Materialized sparse matrix (pattern + values).
struct SparseMatrix {
    std::shared_ptr<const SparsePattern> pattern;
    std::vector<double> values;
    Tensor to_dense() const;
    bool is_symmetric(double tol = 0.0) const;
};

/// Abar(i,j) = A(i,j) / sqrt(D(i,i) * D(j,j))
SparseMatrix normalize(const WeightedAdjacency& adj);

enum class SplitPolicy { General, FewShot };

struct DatasetSplit {
    std::vector<int> train, val, test;
    SplitPolicy policy = SplitPolicy::General;
};

/// general: labeled nodes shuffled 60/20/20.
/// few-shot: 20 per class (or all if fewer) for train, then up to 500
/// validation and 1000 test nodes from the remaining labeled pool.
DatasetSplit make_split(const TextAttributedGraph& g, SplitPolicy policy, std::uint64_t seed);

void save_split_json(const DatasetSplit& split, const std::string& path);
DatasetSplit load_split_json(const std::string& path);

struct EdgeRatioReport {
    double overall = 0.0;
    std::vector<double> per_class;     // over edges with >= 1 endpoint in the class
    std::vector<int> per_class_edges;  // denominator per class
    int cross_edges = 0;
    int total_edges = 0;
};

/// Fraction of edges whose endpoints carry different labels.
EdgeRatioReport unreliable_edge_ratio(const TextAttributedGraph& g, bool group_by_class = true);

} // namespace tagtopo
