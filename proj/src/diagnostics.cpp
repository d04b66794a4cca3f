#include "tagtopo/diagnostics.hpp"

#include "tagtopo/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace tagtopo {

namespace {

// shared walk over the sparse entries with both degree scalings in hand
template <typename F>
void for_each_entry(const WeightedAdjacency& adj, F&& f) {
    const auto& deg = adj.degrees();
    const auto p = adj.pattern();
    const auto vals = adj.entry_values();
    for (int k = 0; k < p->nnz(); ++k) {
        const int i = p->entry_row[std::size_t(k)];
        const int j = p->col[std::size_t(k)];
        f(i, j, vals[std::size_t(k)], deg[std::size_t(i)], deg[std::size_t(j)]);
    }
}

void check_degrees(const WeightedAdjacency& adj) {
    for (double d : adj.degrees())
        if (!(d > 0.0)) throw DataError("diagnostics: zero degree node");
}

} // namespace

double embedding_variation(const Tensor& h, const WeightedAdjacency& adj) {
    if (h.rows != adj.num_nodes()) throw DataError("embedding_variation: row count != |V|");
    check_degrees(adj);
    double m = 0.0;
    for_each_entry(adj, [&](int i, int j, double a, double di, double dj) {
        const double ci = a / di;
        const double cj = a / dj;
        for (int c = 0; c < h.cols; ++c) {
            const double d = ci * h.at(i, c) - cj * h.at(j, c);
            m += d * d;
        }
    });
    return 0.5 * m;
}

Tensor variation_gradient(const Tensor& h, const WeightedAdjacency& adj) {
    if (h.rows != adj.num_nodes()) throw DataError("variation_gradient: row count != |V|");
    check_degrees(adj);
    Tensor g(h.rows, h.cols);
    for_each_entry(adj, [&](int i, int j, double a, double di, double dj) {
        if (i == j) return; // the diagonal term is identically zero
        const double ci = a / di;
        const double cj = a / dj;
        for (int c = 0; c < h.cols; ++c)
            g.at(i, c) += 2.0 * ci * (ci * h.at(i, c) - cj * h.at(j, c));
    });
    return g;
}

Tensor variation_gradient_step(const Tensor& h, const WeightedAdjacency& adj, double eta) {
    if (!(eta > 0.0 && eta < 1.0))
        throw ConfigError("variation_gradient_step: eta must lie in (0, 1)");
    const Tensor g = variation_gradient(h, adj);
    Tensor out = h;
    for (std::size_t k = 0; k < out.v.size(); ++k) out.v[k] -= eta * g.v[k];
    return out;
}

Tensor propagation_residual(const Tensor& h, const WeightedAdjacency& adj) {
    if (h.rows != adj.num_nodes()) throw DataError("propagation_residual: row count != |V|");
    check_degrees(adj);
    Tensor g(h.rows, h.cols);
    for_each_entry(adj, [&](int i, int j, double a, double di, double dj) {
        for (int c = 0; c < h.cols; ++c)
            g.at(i, c) += 2.0 * (a / di * h.at(i, c) - a / dj * h.at(j, c));
    });
    return g;
}

Tensor propagation_step(const Tensor& h, const WeightedAdjacency& adj) {
    if (h.rows != adj.num_nodes()) throw DataError("propagation_step: row count != |V|");
    check_degrees(adj);
    Tensor out(h.rows, h.cols);
    for_each_entry(adj, [&](int i, int j, double a, double, double dj) {
        for (int c = 0; c < h.cols; ++c) out.at(i, c) += a * h.at(j, c) / dj;
    });
    return out;
}

double propagation_identity_error(const Tensor& h, const WeightedAdjacency& adj) {
    const Tensor residual = propagation_residual(h, adj);
    const Tensor prop = propagation_step(h, adj);
    double err = 0.0;
    for (std::size_t k = 0; k < h.v.size(); ++k)
        err = std::max(err, std::abs((h.v[k] - 0.5 * residual.v[k]) - prop.v[k]));
    return err;
}

bool VariationReport::all_monotone() const {
    for (const auto& s : series)
        if (!s.monotone) return false;
    return propagation_monotone;
}

VariationReport shrinking_check(const Tensor& h0, const WeightedAdjacency& adj,
                                const std::vector<double>& etas, int steps, double tolerance) {
    VariationReport report;
    report.tolerance = tolerance;
    report.identity_error = propagation_identity_error(h0, adj);

    for (double eta : etas) {
        VariationSeries s;
        s.eta = eta;
        Tensor h = h0;
        s.values.push_back(embedding_variation(h, adj));
        for (int k = 0; k < steps; ++k) {
            h = variation_gradient_step(h, adj, eta);
            const double m = embedding_variation(h, adj);
            const double rise = m - s.values.back();
            if (rise > tolerance) {
                s.monotone = false;
                s.max_increase = std::max(s.max_increase, rise);
            }
            s.values.push_back(m);
        }
        report.series.push_back(std::move(s));
    }

    Tensor h = h0;
    report.propagation_values.push_back(embedding_variation(h, adj));
    for (int k = 0; k < steps; ++k) {
        h = propagation_step(h, adj);
        const double m = embedding_variation(h, adj);
        if (m - report.propagation_values.back() > tolerance) report.propagation_monotone = false;
        report.propagation_values.push_back(m);
    }
    return report;
}

void write_variation_report(const std::string& path, const VariationReport& report) {
    nlohmann::json j;
    j["tolerance"] = report.tolerance;
    j["identity_error"] = report.identity_error;
    j["propagation"] = {{"values", report.propagation_values},
                        {"monotone", report.propagation_monotone}};
    for (const auto& s : report.series)
        j["series"].push_back({{"eta", s.eta},
                               {"values", s.values},
                               {"monotone", s.monotone},
                               {"max_increase", s.max_increase}});
    std::ofstream out(path);
    if (!out) throw DataError("cannot write variation report: " + path);
    out << j.dump(2) << "\n";
}

void export_embeddings(const std::string& path, const Tensor& hidden,
                       const std::vector<std::optional<int>>& labels,
                       const std::vector<int>& class_filter) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write embeddings: " + path);
    out << "id,class";
    for (int c = 0; c < hidden.cols; ++c) out << ",e" << c;
    out << "\n";
    char buf[40];
    for (int i = 0; i < hidden.rows; ++i) {
        if (!labels[std::size_t(i)]) continue;
        const int cls = *labels[std::size_t(i)];
        if (!class_filter.empty() &&
            std::find(class_filter.begin(), class_filter.end(), cls) == class_filter.end())
            continue;
        out << i << "," << cls;
        for (int c = 0; c < hidden.cols; ++c) {
            std::snprintf(buf, sizeof buf, ",%.10g", hidden.at(i, c));
            out << buf;
        }
        out << "\n";
    }
}

double silhouette_score(const Tensor& points, const std::vector<int>& groups) {
    const int n = points.rows;
    if (int(groups.size()) != n) throw DataError("silhouette_score: size mismatch");
    std::vector<int> uniq(groups.begin(), groups.end());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    if (uniq.size() < 2) throw DataError("silhouette_score: need at least two groups");

    auto dist = [&](int a, int b) {
        double s = 0.0;
        for (int c = 0; c < points.cols; ++c) {
            const double d = points.at(a, c) - points.at(b, c);
            s += d * d;
        }
        return std::sqrt(s);
    };

    double total = 0.0;
    int counted = 0;
    for (int i = 0; i < n; ++i) {
        double intra = 0.0;
        int intra_n = 0;
        std::vector<double> inter_sum(uniq.size(), 0.0);
        std::vector<int> inter_n(uniq.size(), 0);
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = dist(i, j);
            if (groups[std::size_t(j)] == groups[std::size_t(i)]) {
                intra += d;
                ++intra_n;
            } else {
                const auto gi = std::size_t(
                    std::lower_bound(uniq.begin(), uniq.end(), groups[std::size_t(j)]) -
                    uniq.begin());
                inter_sum[gi] += d;
                inter_n[gi]++;
            }
        }
        if (intra_n == 0) continue; // singleton cluster contributes nothing
        const double a = intra / intra_n;
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t gidx = 0; gidx < uniq.size(); ++gidx)
            if (inter_n[gidx] > 0) b = std::min(b, inter_sum[gidx] / inter_n[gidx]);
        total += (b - a) / std::max(a, b);
        ++counted;
    }
    if (counted == 0) throw DataError("silhouette_score: no scorable points");
    return total / counted;
}

} // namespace tagtopo
