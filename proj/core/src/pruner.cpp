#include "agentprune/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "agentprune/error.hpp"

namespace agentprune {

std::size_t kept_edge_count(std::size_t edge_count, double prune_ratio) {
    if (!(prune_ratio >= 0.0 && prune_ratio < 1.0)) {
        throw Error(Errc::BadRatio, "prune ratio " + std::to_string(prune_ratio) + " outside [0, 1)");
    }
    const double exact = static_cast<double>(edge_count) * (1.0 - prune_ratio);
    // 10 * (1 - 0.7) evaluates to 3.0000000000000004; absorb that rounding
    // before taking the ceiling.
    const double slack = 1e-9 * std::max(1.0, exact);
    return std::min(edge_count, static_cast<std::size_t>(std::ceil(exact - slack)));
}

Adjacency one_shot_prune(const Matrix& scores, const Adjacency& support, double prune_ratio) {
    const auto n = static_cast<Eigen::Index>(support.size());
    if (scores.rows() != n || scores.cols() != n) throw Error(Errc::ShapeMismatch, "mask and support sizes differ");
    const std::size_t keep = kept_edge_count(support.edge_count(), prune_ratio);

    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (!support(i, j) && scores(i, j) != 0.0)
                throw Error(Errc::ShapeMismatch, "mask is non-zero outside the adjacency support");

    auto ranked = support.edges();
    std::stable_sort(ranked.begin(), ranked.end(), [&](const Edge& a, const Edge& b) {
        return std::make_tuple(-scores(a.src, a.dst), a.src, a.dst) <
               std::make_tuple(-scores(b.src, b.dst), b.src, b.dst);
    });

    Adjacency kept(support.size());
    for (std::size_t k = 0; k < keep; ++k) kept.set(ranked[k].src, ranked[k].dst);
    return kept;
}

BinaryMask prune_masks(const EdgeMask& mask, double prune_ratio) {
    return {one_shot_prune(mask.spatial, mask.spatial_support, prune_ratio),
            one_shot_prune(mask.temporal, mask.temporal_support, prune_ratio), prune_ratio};
}

CommGraph apply_binary_masks(const CommGraph& g, const Adjacency& spatial_mask, const Adjacency& temporal_mask) {
    if (spatial_mask.size() != g.size() || temporal_mask.size() != g.size()) {
        throw Error(Errc::ShapeMismatch, "binary masks must match the graph size " + std::to_string(g.size()));
    }
    CommGraph out = g;
    out.spatial = g.spatial.hadamard(spatial_mask);
    out.temporal = g.temporal.hadamard(temporal_mask);
    return out;
}

}  // namespace agentprune
