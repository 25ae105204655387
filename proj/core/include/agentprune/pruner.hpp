#pragma once

#include <cstddef>

#include "agentprune/graph.hpp"
#include "agentprune/mask.hpp"

namespace agentprune {

struct BinaryMask {
    Adjacency spatial;
    Adjacency temporal;
    double prune_ratio = 0.0;
};

/// Number of edges that survive pruning `edge_count` edges at ratio p:
/// ceil(edge_count * (1 - p)).
std::size_t kept_edge_count(std::size_t edge_count, double prune_ratio);

/// One-shot magnitude pruning: keeps the kept_edge_count() support entries
/// with the largest mask values. Equal values are ordered by (row, col), the
/// smaller index winning. Throws BadRatio unless 0 <= p < 1.
Adjacency one_shot_prune(const Matrix& scores, const Adjacency& support, double prune_ratio);

/// Spatial and temporal masks pruned independently at the same ratio.
BinaryMask prune_masks(const EdgeMask& mask, double prune_ratio);

/// Elementwise AND of the graph's adjacency with the binary masks.
CommGraph apply_binary_masks(const CommGraph& g, const Adjacency& spatial_mask, const Adjacency& temporal_mask);

}  // namespace agentprune
