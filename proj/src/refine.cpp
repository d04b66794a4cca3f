#include "tagtopo/refine.hpp"

#include "tagtopo/errors.hpp"
#include "tagtopo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace tagtopo {

CandidateSet select_candidates(const TextAttributedGraph& g, int cap, std::uint64_t seed) {
    if (cap < 1) throw ConfigError("select_candidates: cap must be >= 1");
    if (g.edges.empty()) throw DataError("select_candidates: graph has no edges");
    Rng rng = Rng::stream(seed, "sampling");

    CandidateSet out;
    out.sample_cap = cap;

    const auto picks = rng.sample_without_replacement(g.num_edges(), cap);
    out.deletions.reserve(picks.size());
    for (int e : picks) out.deletions.push_back(g.edges[std::size_t(e)]);

    // second-order neighbors without an edge
    std::vector<std::vector<int>> adj(std::size_t(g.num_nodes()));
    std::set<std::pair<int, int>> edge_set(g.edges.begin(), g.edges.end());
    for (const auto& [a, b] : g.edges) {
        adj[std::size_t(a)].push_back(b);
        adj[std::size_t(b)].push_back(a);
    }
    std::set<std::pair<int, int>> pairs;
    for (int v = 0; v < g.num_nodes(); ++v) {
        const auto& nb = adj[std::size_t(v)];
        for (std::size_t i = 0; i < nb.size(); ++i)
            for (std::size_t j = i + 1; j < nb.size(); ++j) {
                const int u = std::min(nb[i], nb[j]);
                const int w = std::max(nb[i], nb[j]);
                if (u == w) continue;
                if (edge_set.count({u, w})) continue;
                pairs.insert({u, w});
            }
    }
    std::vector<std::pair<int, int>> addable(pairs.begin(), pairs.end());
    const auto add_picks = rng.sample_without_replacement(int(addable.size()),
                                                          std::min<int>(cap, int(addable.size())));
    out.additions.reserve(add_picks.size());
    for (int i : add_picks) out.additions.push_back(addable[std::size_t(i)]);
    return out;
}

RefineResult refine(const TextAttributedGraph& g, const CandidateSet& candidates,
                    double xi_del, double xi_add, Gateway& gateway, bool self_loops) {
    if (xi_del < 0.0 || xi_del > 1.0 || xi_add < 0.0 || xi_add > 1.0)
        throw ConfigError("refine: thresholds must lie in [0, 1]");

    std::vector<EdgeVerdict> verdicts;
    const int planned = int(candidates.deletions.size() + candidates.additions.size());
    verdicts.reserve(std::size_t(planned));
    int failures = 0, total = 0;

    auto judge = [&](const std::pair<int, int>& pair, bool is_addition,
                     double threshold) -> EdgeVerdict {
        EdgeVerdict v;
        v.pair = pair;
        v.is_addition = is_addition;
        v.threshold = threshold;
        PromptRequest req;
        req.kind = PromptKind::Similarity;
        req.text_a = g.nodes[std::size_t(pair.first)].text;
        req.text_b = g.nodes[std::size_t(pair.second)].text;
        ++total;
        try {
            const auto judgment = gateway.query(req);
            v.ratio = *judgment.ratio;
            const bool present = v.ratio > threshold;
            v.action = present ? (is_addition ? EdgeAction::Add : EdgeAction::Keep)
                               : EdgeAction::Delete;
        } catch (const ParseFailure&) {
            v.action = EdgeAction::Skip;
            ++failures;
        } catch (const BackendError&) {
            v.action = EdgeAction::Skip;
            ++failures;
        }
        return v;
    };

    // a failure majority cannot be undone, so bail as soon as it is locked in
    auto hopeless = [&] { return failures * 2 > planned; };
    for (const auto& pair : candidates.deletions) {
        if (hopeless()) break;
        verdicts.push_back(judge(pair, false, xi_del));
    }
    for (const auto& pair : candidates.additions) {
        if (hopeless()) break;
        verdicts.push_back(judge(pair, true, xi_add));
    }

    if (total > 0 && failures * 2 > total)
        throw BackendError("refine: more than half of the LLM queries failed (" +
                           std::to_string(failures) + "/" + std::to_string(total) + ")");

    std::set<std::pair<int, int>> edges(g.edges.begin(), g.edges.end());
    for (const auto& v : verdicts) {
        const auto key = std::pair{std::min(v.pair.first, v.pair.second),
                                   std::max(v.pair.first, v.pair.second)};
        if (!v.is_addition && v.action == EdgeAction::Delete) edges.erase(key);
        if (v.is_addition && v.action == EdgeAction::Add) edges.insert(key);
        // Skip is neutral: deletion candidates stay, addition candidates don't land
    }

    RefineResult out{
        WeightedAdjacency(g.num_nodes(),
                          std::vector<std::pair<int, int>>(edges.begin(), edges.end()),
                          self_loops),
        std::move(verdicts), failures, total};
    return out;
}

void write_verdict_log(const std::string& path, const std::vector<EdgeVerdict>& verdicts) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write verdict log: " + path);
    out << "src,dst,kind,ratio,action,threshold\n";
    char buf[160];
    for (const auto& v : verdicts) {
        const char* action = v.action == EdgeAction::Keep     ? "keep"
                             : v.action == EdgeAction::Delete ? "delete"
                             : v.action == EdgeAction::Add    ? "add"
                                                              : "skip";
        std::snprintf(buf, sizeof buf, "%d,%d,%s,%.10g,%s,%.10g\n", v.pair.first, v.pair.second,
                      v.is_addition ? "addition" : "deletion",
                      v.action == EdgeAction::Skip ? -1.0 : v.ratio, action, v.threshold);
        out << buf;
    }
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= double(xs.size());
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / double(xs.size() - 1))};
}

} // namespace

std::vector<SweepPoint> deletion_sweep(const TextAttributedGraph& g,
                                       const std::vector<double>& ratios,
                                       const std::vector<std::uint64_t>& seeds,
                                       const TrainerFn& trainer) {
    std::vector<std::pair<int, int>> cross, intra;
    for (const auto& [a, b] : g.edges) {
        const auto& la = g.nodes[std::size_t(a)].label;
        const auto& lb = g.nodes[std::size_t(b)].label;
        if (!la || !lb) throw DataError("deletion_sweep: unlabeled edge endpoint");
        (*la != *lb ? cross : intra).push_back({a, b});
    }

    std::vector<SweepPoint> out;
    out.reserve(ratios.size());
    for (double rho : ratios) {
        SweepPoint pt;
        pt.ratio = rho;
        for (std::uint64_t seed : seeds) {
            // one shuffle per seed; rho removes a prefix so larger ratios nest
            auto order = cross;
            Rng rng = Rng::stream(seed, "deletion-sweep");
            rng.shuffle(order);
            const int remove = int(rho * double(cross.size()));
            std::vector<std::pair<int, int>> edges = intra;
            edges.insert(edges.end(), order.begin() + remove, order.end());
            std::sort(edges.begin(), edges.end());
            pt.per_seed.push_back(trainer(g, edges, seed));
        }
        std::tie(pt.mean_acc, pt.std_acc) = mean_std(pt.per_seed);
        out.push_back(std::move(pt));
    }
    return out;
}

std::vector<GridCell> threshold_grid(const TextAttributedGraph& g, Gateway& gateway,
                                     const std::vector<double>& xi_del_grid,
                                     const std::vector<double>& xi_add_grid,
                                     const std::vector<std::uint64_t>& seeds, int candidate_cap,
                                     std::uint64_t candidate_seed, const TrainerFn& trainer) {
    for (const auto* grid : {&xi_del_grid, &xi_add_grid})
        for (double xi : *grid)
            if (xi < 0.1 - 1e-12 || xi > 0.9 + 1e-12)
                throw ConfigError("threshold_grid: grid values must lie in [0.1, 0.9]");
    const auto candidates = select_candidates(g, candidate_cap, candidate_seed);
    std::vector<GridCell> cells;
    cells.reserve(xi_add_grid.size() * xi_del_grid.size());
    for (double xa : xi_add_grid)
        for (double xd : xi_del_grid) {
            const auto refined = refine(g, candidates, xd, xa, gateway);
            GridCell cell;
            cell.xi_add = xa;
            cell.xi_del = xd;
            std::vector<double> accs;
            accs.reserve(seeds.size());
            for (std::uint64_t seed : seeds)
                accs.push_back(trainer(g, refined.adjacency.edges(), seed));
            std::tie(cell.mean_acc, cell.std_acc) = mean_std(accs);
            cells.push_back(cell);
        }
    return cells;
}

void write_grid_csv(const std::string& path, const std::vector<GridCell>& cells,
                    const std::vector<double>& xi_del_grid,
                    const std::vector<double>& xi_add_grid) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write grid csv: " + path);
    char buf[64];
    out << "xi_add\\xi_del";
    for (double xd : xi_del_grid) {
        std::snprintf(buf, sizeof buf, ",%.10g", xd);
        out << buf;
    }
    out << "\n";
    std::size_t k = 0;
    for (double xa : xi_add_grid) {
        std::snprintf(buf, sizeof buf, "%.10g", xa);
        out << buf;
        for (std::size_t j = 0; j < xi_del_grid.size(); ++j, ++k) {
            std::snprintf(buf, sizeof buf, ",%.10g", cells[k].mean_acc);
            out << buf;
        }
        out << "\n";
    }
}

} // namespace tagtopo
