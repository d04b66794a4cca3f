#include "tagtopo/labelprop.hpp"

#include "tagtopo/errors.hpp"

#include <fstream>
#include <sstream>

namespace tagtopo {

Tensor onehot_labels(const std::vector<std::optional<int>>& labels, int num_classes) {
    Tensor t(int(labels.size()), num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i]) t.at(int(i), *labels[i]) = 1.0;
    return t;
}

LabelMatrix init_true(const DatasetSplit& split, const std::vector<std::optional<int>>& labels,
                      int num_classes) {
    if (split.train.empty()) throw DataError("init_true: empty train set");
    LabelMatrix m;
    m.source = LabelSource::TrueLabels;
    m.rows = Tensor(int(labels.size()), num_classes);
    for (int i : split.train) {
        if (!labels[std::size_t(i)]) throw DataError("init_true: unlabeled train node");
        m.rows.at(i, *labels[std::size_t(i)]) = 1.0;
    }
    return m;
}

LabelMatrix init_llm(const DatasetSplit& split, const std::vector<std::optional<int>>& labels,
                     const std::vector<int>& pseudo_labels, int num_classes) {
    if (split.train.empty()) throw DataError("init_llm: empty train set");
    if (pseudo_labels.size() != labels.size())
        throw DataError("init_llm: pseudo-label count != node count");
    LabelMatrix m;
    m.source = LabelSource::LlmPseudo;
    m.rows = Tensor(int(labels.size()), num_classes);
    std::vector<bool> in_train(labels.size(), false);
    for (int i : split.train) in_train[std::size_t(i)] = true;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (in_train[i]) {
            if (!labels[i]) throw DataError("init_llm: unlabeled train node");
            m.rows.at(int(i), *labels[i]) = 1.0;
        } else {
            const int p = pseudo_labels[i];
            if (p < 0 || p >= num_classes)
                throw DataError("init_llm: node " + std::to_string(i) +
                                " has no usable pseudo-label");
            m.rows.at(int(i), p) = 1.0;
        }
    }
    return m;
}

TapeAdjacency build_normalized_adjacency(Tape& tape, const WeightedAdjacency& adj,
                                         bool trainable) {
    TapeAdjacency out;
    out.pattern = adj.pattern();

    Tensor theta(adj.num_edges(), 1);
    for (int e = 0; e < adj.num_edges(); ++e) theta.at(e, 0) = adj.theta(e);
    out.theta = tape.leaf(std::move(theta), trainable);

    const int w = tape.exp(out.theta);
    int vals;
    if (adj.has_self_loops()) {
        const int ones = tape.leaf(Tensor(adj.num_nodes(), 1, 1.0));
        const int w_all = tape.concat_rows(w, ones);
        vals = tape.gather_rows(w_all, adj.entry_weight_index());
    } else {
        vals = tape.gather_rows(w, adj.entry_weight_index());
    }
    const int deg = tape.degree_sum(out.pattern, vals);
    const int dinv = tape.rsqrt(deg);
    out.abar_values = tape.edge_scale(out.pattern, vals, dinv, dinv);
    return out;
}

int propagate(Tape& tape, int y0, const TapeAdjacency& abar, int iterations) {
    if (iterations < 1) throw ConfigError("propagate: need at least one iteration");
    int y = y0;
    for (int k = 0; k < iterations; ++k) y = tape.spmm(abar.pattern, abar.abar_values, y);
    return y;
}

int lpa_loss(Tape& tape, int y_propagated, const DatasetSplit& split,
             const std::vector<std::optional<int>>& labels, int num_classes) {
    const int renorm = tape.row_renormalize(y_propagated);
    return tape.cross_entropy(renorm, onehot_labels(labels, num_classes), split.train);
}

void write_pseudolabels(const std::string& path,
                        const std::vector<std::vector<int>>& ranked_per_node) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write pseudo-label file: " + path);
    out << "node_id,pseudo_label,confidence_rank\n";
    for (std::size_t i = 0; i < ranked_per_node.size(); ++i)
        for (std::size_t r = 0; r < ranked_per_node[i].size(); ++r)
            out << i << "," << ranked_per_node[i][r] << "," << (r + 1) << "\n";
}

std::vector<std::vector<int>> read_pseudolabels(const std::string& path, int num_nodes) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open pseudo-label file: " + path);
    std::vector<std::vector<int>> out(static_cast<std::size_t>(num_nodes));
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 || line.empty()) continue;
        std::istringstream ss(line);
        std::string a, b, c;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
            throw DataError(path + ":" + std::to_string(line_no) + ": malformed row");
        const int node = std::stoi(a);
        const int label = std::stoi(b);
        const std::size_t rank = std::size_t(std::stoul(c));
        if (node < 0 || node >= num_nodes)
            throw DataError(path + ":" + std::to_string(line_no) + ": node id out of range");
        auto& ranked = out[std::size_t(node)];
        if (ranked.size() < rank) ranked.resize(rank, -1);
        ranked[rank - 1] = label;
    }
    return out;
}

} // namespace tagtopo
