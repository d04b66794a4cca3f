#pragma once

#include "tagtopo/graph.hpp"
#include "tagtopo/llm.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace tagtopo {

struct CandidateSet {
    std::vector<std::pair<int, int>> deletions; // existing edges
    std::vector<std::pair<int, int>> additions; // non-adjacent second-order pairs
    int sample_cap = 0;
};

/// Uniform seeded sampling without replacement: deletions from the edge set,
/// additions from pairs that share a neighbor but carry no edge.
CandidateSet select_candidates(const TextAttributedGraph& g, int cap, std::uint64_t seed);

enum class EdgeAction { Keep, Delete, Add, Skip };

struct EdgeVerdict {
    std::pair<int, int> pair;
    bool is_addition = false;
    double ratio = 0.0; // meaningless when action == Skip
    EdgeAction action = EdgeAction::Keep;
    double threshold = 0.0;
};

struct RefineResult {
    WeightedAdjacency adjacency; // the refined A_{A-D}, all weights 1
    std::vector<EdgeVerdict> verdicts;
    int failed_queries = 0;
    int total_queries = 0;
};

/// Threshold rule over LLM similarity: a deletion candidate survives iff
/// ratio > xi_del, an addition lands iff ratio > xi_add; the boundary maps
/// to "edge absent". Non-candidate edges pass through untouched. Failed
/// queries are neutral (kept / not added); more than half failing aborts.
RefineResult refine(const TextAttributedGraph& g, const CandidateSet& candidates,
                    double xi_del, double xi_add, Gateway& gateway, bool self_loops = true);

void write_verdict_log(const std::string& path, const std::vector<EdgeVerdict>& verdicts);

/// Test accuracy of one trained run on the given edge set.
using TrainerFn = std::function<double(const TextAttributedGraph& g,
                                       const std::vector<std::pair<int, int>>& edges,
                                       std::uint64_t seed)>;

struct SweepPoint {
    double ratio = 0.0;
    double mean_acc = 0.0;
    double std_acc = 0.0;
    std::vector<double> per_seed;
};

/// Removes floor(rho * #cross-class-edges) randomly chosen cross-class edges
/// per seed (prefix of one seeded shuffle, so higher ratios remove supersets)
/// and retrains.
std::vector<SweepPoint> deletion_sweep(const TextAttributedGraph& g,
                                       const std::vector<double>& ratios,
                                       const std::vector<std::uint64_t>& seeds,
                                       const TrainerFn& trainer);

struct GridCell {
    double xi_add = 0.0, xi_del = 0.0;
    double mean_acc = 0.0, std_acc = 0.0;
};

/// Full (xi_add x xi_del) accuracy grid; one refine + retrain per cell.
std::vector<GridCell> threshold_grid(const TextAttributedGraph& g, Gateway& gateway,
                                     const std::vector<double>& xi_del_grid,
                                     const std::vector<double>& xi_add_grid,
                                     const std::vector<std::uint64_t>& seeds, int candidate_cap,
                                     std::uint64_t candidate_seed, const TrainerFn& trainer);

/// CSV with xi_add rows and xi_del columns.
void write_grid_csv(const std::string& path, const std::vector<GridCell>& cells,
                    const std::vector<double>& xi_del_grid,
                    const std::vector<double>& xi_add_grid);

} // namespace tagtopo
