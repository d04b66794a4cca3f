#pragma once

#include "tagtopo/graph.hpp"
#include "tagtopo/tape.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tagtopo {

/// Embedding variation over the sparse edge set:
/// M(H) = 1/2 sum_ij || A(i,j)/D(i,i) h_i - A(j,i)/D(j,j) h_j ||^2.
double embedding_variation(const Tensor& h, const WeightedAdjacency& adj);

/// Exact gradient of embedding_variation w.r.t. H (matches central finite
/// differences): dM/dh_i = 2 sum_j (A_ij/D_ii) [ (A_ij/D_ii) h_i - (A_ij/D_jj) h_j ].
Tensor variation_gradient(const Tensor& h, const WeightedAdjacency& adj);

/// One descent step H' = H - eta * dM/dH; eta must lie in (0, 1).
Tensor variation_gradient_step(const Tensor& h, const WeightedAdjacency& adj, double eta);

/// The message-passing residual 2 sum_j [A_ij/D_ii h_i - A_ij/D_jj h_j],
/// computed term by term. Half of it subtracted from H is exactly one
/// degree-normalized propagation step (the identity below).
Tensor propagation_residual(const Tensor& h, const WeightedAdjacency& adj);

/// One propagation step: h'_i = sum_j A(i,j) h_j / D(j,j).
Tensor propagation_step(const Tensor& h, const WeightedAdjacency& adj);

/// max |(H - residual/2) - propagation_step(H)| over all entries
double propagation_identity_error(const Tensor& h, const WeightedAdjacency& adj);

struct VariationSeries {
    double eta = 0.0;
    std::vector<double> values;  // M(H^(0)) .. M(H^(steps))
    bool monotone = true;        // within tolerance
    double max_increase = 0.0;   // worst single-step rise
};

struct VariationReport {
    std::vector<VariationSeries> series;       // one per eta
    std::vector<double> propagation_values;    // M along plain propagation steps
    bool propagation_monotone = true;
    double identity_error = 0.0;               // the half-residual identity, checked at H0
    double tolerance = 1e-9;
    bool all_monotone() const;
};

/// Iterates variation_gradient_step for each eta and records M per step;
/// increases beyond the tolerance flip the monotone flags.
VariationReport shrinking_check(const Tensor& h0, const WeightedAdjacency& adj,
                                const std::vector<double>& etas, int steps,
                                double tolerance = 1e-9);

void write_variation_report(const std::string& path, const VariationReport& report);

/// CSV id,class,e0..e{d-1}; class_filter empty means every labeled node.
void export_embeddings(const std::string& path, const Tensor& hidden,
                       const std::vector<std::optional<int>>& labels,
                       const std::vector<int>& class_filter = {});

/// Mean silhouette coefficient with Euclidean distances; needs >= 2 groups.
double silhouette_score(const Tensor& points, const std::vector<int>& groups);

} // namespace tagtopo
