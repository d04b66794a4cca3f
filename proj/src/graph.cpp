#include "tagtopo/graph.hpp"

#include "tagtopo/errors.hpp"
#include "tagtopo/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace tagtopo {

using nlohmann::json;

std::vector<std::optional<int>> TextAttributedGraph::labels() const {
    std::vector<std::optional<int>> out;
    out.reserve(nodes.size());
    for (const auto& n : nodes) out.push_back(n.label);
    return out;
}

void TextAttributedGraph::validate() const {
    const int n = num_nodes();
    std::optional<std::size_t> feat_dim;
    for (const auto& node : nodes) {
        if (node.label && (*node.label < 0 || *node.label >= num_classes))
            throw DataError("node " + std::to_string(node.id) + ": label out of range");
        if (node.text.empty() && !node.feature)
            throw DataError("node " + std::to_string(node.id) +
                            ": needs non-empty text or a feature vector");
        if (node.feature) {
            if (feat_dim && node.feature->size() != *feat_dim)
                throw DataError("feature dimension mismatch at node " + std::to_string(node.id));
            feat_dim = node.feature->size();
        }
    }
    std::vector<std::pair<int, int>> seen;
    seen.reserve(edges.size());
    for (const auto& [a, b] : edges) {
        if (a < 0 || a >= n || b < 0 || b >= n) throw DataError("edge endpoint out of range");
        if (a == b) throw DataError("self-loop in raw edge list");
        seen.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
        throw DataError("duplicate undirected edge");
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

TextAttributedGraph load_graph(const std::string& node_file, const std::string& edge_file,
                               const std::string& feature_file) {
    std::ifstream nf(node_file);
    if (!nf) throw DataError("cannot open node file: " + node_file);

    TextAttributedGraph g;
    std::unordered_map<long long, int> dense_of;
    std::string line;
    int line_no = 0;
    int max_label = -1;
    while (std::getline(nf, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(node_file + ":" + std::to_string(line_no) + ": bad JSON (" +
                            e.what() + ")");
        }
        if (!rec.contains("id") || !rec["id"].is_number_integer())
            throw DataError(node_file + ":" + std::to_string(line_no) + ": missing integer id");
        const long long orig = rec["id"].get<long long>();
        if (dense_of.count(orig))
            throw DataError(node_file + ":" + std::to_string(line_no) + ": duplicate node id");
        NodeRecord n;
        n.id = int(g.nodes.size());
        n.text = rec.value("text", std::string());
        if (rec.contains("label") && !rec["label"].is_null()) {
            if (!rec["label"].is_number_integer())
                throw DataError(node_file + ":" + std::to_string(line_no) + ": label not an integer");
            n.label = rec["label"].get<int>();
            max_label = std::max(max_label, *n.label);
        }
        dense_of[orig] = n.id;
        g.original_ids.push_back(orig);
        g.nodes.push_back(std::move(n));
    }
    g.num_classes = max_label + 1;

    std::ifstream ef(edge_file);
    if (!ef) throw DataError("cannot open edge file: " + edge_file);
    line_no = 0;
    std::vector<std::pair<int, int>> edges;
    while (std::getline(ef, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (line_no == 1 && t.find_first_not_of("srcdst, \t") == std::string::npos) continue; // header
        std::istringstream ss(t);
        std::string sa, sb;
        if (!std::getline(ss, sa, ',') || !std::getline(ss, sb))
            throw DataError(edge_file + ":" + std::to_string(line_no) + ": malformed edge row");
        long long oa, ob;
        try {
            oa = std::stoll(trim(sa));
            ob = std::stoll(trim(sb));
        } catch (...) {
            throw DataError(edge_file + ":" + std::to_string(line_no) + ": malformed edge row");
        }
        auto ia = dense_of.find(oa);
        auto ib = dense_of.find(ob);
        if (ia == dense_of.end() || ib == dense_of.end())
            throw DataError(edge_file + ":" + std::to_string(line_no) +
                            ": edge references unknown node id");
        if (ia->second == ib->second)
            throw DataError(edge_file + ":" + std::to_string(line_no) + ": self-loop not allowed");
        edges.emplace_back(std::min(ia->second, ib->second), std::max(ia->second, ib->second));
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    g.edges = std::move(edges);

    if (!feature_file.empty()) {
        std::ifstream ff(feature_file);
        if (!ff) throw DataError("cannot open feature file: " + feature_file);
        line_no = 0;
        std::size_t dim = 0;
        while (std::getline(ff, line)) {
            ++line_no;
            const std::string t = trim(line);
            if (t.empty()) continue;
            if (line_no > int(g.nodes.size()))
                throw DataError(feature_file + ": more feature rows than nodes");
            std::vector<double> feat;
            std::istringstream ss(t);
            std::string cell;
            while (std::getline(ss, cell, ',')) {
                try {
                    feat.push_back(std::stod(trim(cell)));
                } catch (...) {
                    throw DataError(feature_file + ":" + std::to_string(line_no) +
                                    ": non-numeric feature value");
                }
            }
            if (dim == 0) dim = feat.size();
            if (feat.size() != dim)
                throw DataError(feature_file + ":" + std::to_string(line_no) +
                                ": feature dimension mismatch");
            g.nodes[std::size_t(line_no - 1)].feature = std::move(feat);
        }
        if (line_no != int(g.nodes.size()))
            throw DataError(feature_file + ": feature row count != node count");
    }

    g.validate();
    return g;
}

Tensor feature_matrix(const TextAttributedGraph& g, int bow_vocab_cap) {
    const int n = g.num_nodes();
    const bool have_all = std::all_of(g.nodes.begin(), g.nodes.end(),
                                      [](const NodeRecord& r) { return bool(r.feature); });
    if (have_all) {
        const int d = int(g.nodes.front().feature->size());
        Tensor X(n, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) X.at(i, j) = (*g.nodes[std::size_t(i)].feature)[std::size_t(j)];
        return X;
    }

    // bag-of-words fallback over texts
    auto tokenize = [](const std::string& s) {
        std::vector<std::string> toks;
        std::string cur;
        for (char ch : s) {
            if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_')
                cur.push_back(char(std::tolower(static_cast<unsigned char>(ch))));
            else if (!cur.empty()) {
                toks.push_back(cur);
                cur.clear();
            }
        }
        if (!cur.empty()) toks.push_back(cur);
        return toks;
    };

    std::map<std::string, int> freq; // ordered map keeps vocab deterministic
    std::vector<std::vector<std::string>> toks(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        toks[std::size_t(i)] = tokenize(g.nodes[std::size_t(i)].text);
        for (const auto& t : toks[std::size_t(i)]) freq[t]++;
    }
    std::vector<std::pair<std::string, int>> vocab(freq.begin(), freq.end());
    std::stable_sort(vocab.begin(), vocab.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (int(vocab.size()) > bow_vocab_cap) vocab.resize(std::size_t(bow_vocab_cap));
    std::unordered_map<std::string, int> col_of;
    for (int j = 0; j < int(vocab.size()); ++j) col_of[vocab[std::size_t(j)].first] = j;

    Tensor X(n, std::max(1, int(vocab.size())));
    for (int i = 0; i < n; ++i) {
        for (const auto& t : toks[std::size_t(i)]) {
            auto it = col_of.find(t);
            if (it != col_of.end()) X.at(i, it->second) += 1.0;
        }
        double norm = 0.0;
        for (int j = 0; j < X.cols; ++j) norm += X.at(i, j) * X.at(i, j);
        if (norm > 0.0) {
            norm = std::sqrt(norm);
            for (int j = 0; j < X.cols; ++j) X.at(i, j) /= norm;
        }
    }
    return X;
}

WeightedAdjacency::WeightedAdjacency(int num_nodes, std::vector<std::pair<int, int>> edges,
                                     bool self_loops)
    : num_nodes_(num_nodes), self_loops_(self_loops) {
    for (auto& [a, b] : edges) {
        if (a < 0 || a >= num_nodes || b < 0 || b >= num_nodes)
            throw DataError("WeightedAdjacency: edge endpoint out of range");
        if (a == b) throw DataError("WeightedAdjacency: self-loop in edge list");
        if (a > b) std::swap(a, b);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges_ = std::move(edges);
    theta_.assign(edges_.size(), 0.0);
}

WeightedAdjacency WeightedAdjacency::from_graph(const TextAttributedGraph& g, bool self_loops) {
    return WeightedAdjacency(g.num_nodes(), g.edges, self_loops);
}

void WeightedAdjacency::set_theta(int e, double v) {
    theta_[std::size_t(e)] = v;
    degree_dirty_ = true;
}

void WeightedAdjacency::set_all_theta(const std::vector<double>& v) {
    if (v.size() != theta_.size()) throw DataError("set_all_theta: size mismatch");
    theta_ = v;
    degree_dirty_ = true;
}

double WeightedAdjacency::weight(int e) const { return std::exp(theta_[std::size_t(e)]); }

const std::vector<double>& WeightedAdjacency::degrees() const {
    if (degree_dirty_) {
        degree_cache_.assign(std::size_t(num_nodes_), self_loops_ ? 1.0 : 0.0);
        for (std::size_t e = 0; e < edges_.size(); ++e) {
            const double w = std::exp(theta_[e]);
            degree_cache_[std::size_t(edges_[e].first)] += w;
            degree_cache_[std::size_t(edges_[e].second)] += w;
        }
        degree_dirty_ = false;
    }
    return degree_cache_;
}

void WeightedAdjacency::build_pattern() const {
    std::vector<std::pair<int, int>> coo;
    coo.reserve(edges_.size() * 2 + (self_loops_ ? std::size_t(num_nodes_) : 0));
    for (const auto& [a, b] : edges_) {
        coo.emplace_back(a, b);
        coo.emplace_back(b, a);
    }
    if (self_loops_)
        for (int i = 0; i < num_nodes_; ++i) coo.emplace_back(i, i);
    pattern_ = SparsePattern::from_coo(num_nodes_, num_nodes_, std::move(coo));

    // entry -> weight index; self-loops address the fixed block past E
    std::map<std::pair<int, int>, int> edge_of;
    for (int e = 0; e < int(edges_.size()); ++e) edge_of[edges_[std::size_t(e)]] = e;
    entry_weight_index_.assign(std::size_t(pattern_->nnz()), -1);
    for (int k = 0; k < pattern_->nnz(); ++k) {
        const int r = pattern_->entry_row[std::size_t(k)];
        const int c = pattern_->col[std::size_t(k)];
        if (r == c)
            entry_weight_index_[std::size_t(k)] = int(edges_.size()) + r;
        else
            entry_weight_index_[std::size_t(k)] = edge_of.at({std::min(r, c), std::max(r, c)});
    }
}

std::shared_ptr<const SparsePattern> WeightedAdjacency::pattern() const {
    if (!pattern_) build_pattern();
    return pattern_;
}

const std::vector<int>& WeightedAdjacency::entry_weight_index() const {
    if (!pattern_) build_pattern();
    return entry_weight_index_;
}

std::vector<double> WeightedAdjacency::entry_values() const {
    const auto& map = entry_weight_index();
    std::vector<double> vals(map.size());
    for (std::size_t k = 0; k < map.size(); ++k)
        vals[k] = map[k] < int(edges_.size()) ? std::exp(theta_[std::size_t(map[k])]) : 1.0;
    return vals;
}

Tensor SparseMatrix::to_dense() const {
    Tensor d(pattern->rows, pattern->cols);
    for (int k = 0; k < pattern->nnz(); ++k)
        d.at(pattern->entry_row[std::size_t(k)], pattern->col[std::size_t(k)]) +=
            values[std::size_t(k)];
    return d;
}

bool SparseMatrix::is_symmetric(double tol) const {
    const Tensor d = to_dense();
    for (int i = 0; i < d.rows; ++i)
        for (int j = i + 1; j < d.cols; ++j)
            if (std::abs(d.at(i, j) - d.at(j, i)) > tol) return false;
    return true;
}

SparseMatrix normalize(const WeightedAdjacency& adj) {
    const auto& deg = adj.degrees();
    for (int i = 0; i < adj.num_nodes(); ++i)
        if (!(deg[std::size_t(i)] > 0.0))
            throw DataError("normalize: zero degree at node " + std::to_string(i) +
                            " (self-loops disabled?)");
    SparseMatrix out;
    out.pattern = adj.pattern();
    out.values = adj.entry_values();
    const auto& p = *out.pattern;
    for (int k = 0; k < p.nnz(); ++k)
        out.values[std::size_t(k)] /= std::sqrt(deg[std::size_t(p.entry_row[std::size_t(k)])] *
                                                deg[std::size_t(p.col[std::size_t(k)])]);
    return out;
}

DatasetSplit make_split(const TextAttributedGraph& g, SplitPolicy policy, std::uint64_t seed) {
    Rng rng = Rng::stream(seed, "split");
    DatasetSplit split;
    split.policy = policy;

    std::vector<int> labeled;
    for (const auto& n : g.nodes)
        if (n.label) labeled.push_back(n.id);
    if (labeled.empty()) throw DataError("make_split: no labeled nodes");

    if (policy == SplitPolicy::General) {
        rng.shuffle(labeled);
        const int n = int(labeled.size());
        const int n_train = int(0.6 * n);
        const int n_val = int(0.2 * n);
        split.train.assign(labeled.begin(), labeled.begin() + n_train);
        split.val.assign(labeled.begin() + n_train, labeled.begin() + n_train + n_val);
        split.test.assign(labeled.begin() + n_train + n_val, labeled.end());
    } else {
        std::vector<std::vector<int>> by_class(std::size_t(g.num_classes));
        for (int id : labeled) by_class[std::size_t(*g.nodes[std::size_t(id)].label)].push_back(id);
        std::vector<int> rest;
        for (int c = 0; c < g.num_classes; ++c) {
            auto& pool = by_class[std::size_t(c)];
            if (pool.empty())
                throw DataError("make_split: class " + std::to_string(c) +
                                " has no labeled nodes (few-shot)");
            rng.shuffle(pool);
            const int take = std::min<int>(20, int(pool.size()));
            split.train.insert(split.train.end(), pool.begin(), pool.begin() + take);
            rest.insert(rest.end(), pool.begin() + take, pool.end());
        }
        rng.shuffle(rest);
        const int n_val = std::min<int>(500, int(rest.size()) / 2);
        const int n_test = std::min<int>(1000, int(rest.size()) - n_val);
        split.val.assign(rest.begin(), rest.begin() + n_val);
        split.test.assign(rest.begin() + n_val, rest.begin() + n_val + n_test);
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

void save_split_json(const DatasetSplit& split, const std::string& path) {
    json j;
    j["train"] = split.train;
    j["val"] = split.val;
    j["test"] = split.test;
    j["policy"] = split.policy == SplitPolicy::General ? "general" : "few-shot";
    std::ofstream out(path);
    if (!out) throw DataError("cannot write split file: " + path);
    out << j.dump(2) << "\n";
}

DatasetSplit load_split_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open split file: " + path);
    json j;
    in >> j;
    DatasetSplit s;
    s.train = j.at("train").get<std::vector<int>>();
    s.val = j.at("val").get<std::vector<int>>();
    s.test = j.at("test").get<std::vector<int>>();
    s.policy = j.value("policy", "general") == "few-shot" ? SplitPolicy::FewShot
                                                          : SplitPolicy::General;
    return s;
}

EdgeRatioReport unreliable_edge_ratio(const TextAttributedGraph& g, bool group_by_class) {
    EdgeRatioReport rep;
    rep.total_edges = g.num_edges();
    std::vector<int> cross_by_class(std::size_t(g.num_classes), 0);
    std::vector<int> touch_by_class(std::size_t(g.num_classes), 0);
    for (const auto& [a, b] : g.edges) {
        const auto& la = g.nodes[std::size_t(a)].label;
        const auto& lb = g.nodes[std::size_t(b)].label;
        if (!la || !lb) throw DataError("unreliable_edge_ratio: unlabeled edge endpoint");
        const bool cross = *la != *lb;
        if (cross) rep.cross_edges++;
        touch_by_class[std::size_t(*la)]++;
        if (*lb != *la) touch_by_class[std::size_t(*lb)]++;
        if (cross) {
            cross_by_class[std::size_t(*la)]++;
            cross_by_class[std::size_t(*lb)]++;
        }
    }
    rep.overall = rep.total_edges ? double(rep.cross_edges) / double(rep.total_edges) : 0.0;
    if (group_by_class) {
        rep.per_class.resize(std::size_t(g.num_classes), 0.0);
        rep.per_class_edges = touch_by_class;
        for (int c = 0; c < g.num_classes; ++c)
            if (touch_by_class[std::size_t(c)])
                rep.per_class[std::size_t(c)] =
                    double(cross_by_class[std::size_t(c)]) / double(touch_by_class[std::size_t(c)]);
    }
    return rep;
}

} // namespace tagtopo
