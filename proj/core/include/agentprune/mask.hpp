#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "agentprune/graph.hpp"
#include "agentprune/rng.hpp"

namespace agentprune {

using Matrix = Eigen::MatrixXd;

/// Trainable edge masks over a fixed spatial/temporal support.
///
/// Invariants: entries off the support are exactly zero and entries on the
/// support lie in [clamp_lo, clamp_hi]. Entries double as Bernoulli
/// inclusion probabilities during sampling and as importance scores for
/// pruning.
struct EdgeMask {
    Matrix spatial;
    Matrix temporal;
    Adjacency spatial_support;
    Adjacency temporal_support;
    double clamp_lo = 0.05;
    double clamp_hi = 0.99;
};

enum class LikelihoodMode {
    /// Product of Bernoulli factors over every candidate edge. Required for
    /// an unbiased score-function estimate.
    FullBernoulli,
    /// Product of included-edge probabilities only.
    PaperFaithful,
};

enum class BaselineMode { Mean, None };

std::string_view to_string(LikelihoodMode mode) noexcept;
LikelihoodMode likelihood_mode_from_string(std::string_view text);
std::string_view to_string(BaselineMode mode) noexcept;
BaselineMode baseline_mode_from_string(std::string_view text);

struct OptimizerConfig {
    double learning_rate = 0.1;
    std::size_t rollouts = 4;
    double lambda_nuclear = 0.01;
    /// Frobenius radius per matrix; unset means 0.5 * sqrt(|E|) of that matrix.
    std::optional<double> delta;
    LikelihoodMode likelihood = LikelihoodMode::FullBernoulli;
    BaselineMode baseline = BaselineMode::Mean;
    double init_value = 0.9;
    double clamp_lo = 0.05;
    double clamp_hi = 0.99;
    std::uint64_t seed = 0;
};

void validate(const OptimizerConfig& cfg);

struct SampledStructure {
    Adjacency spatial;
    Adjacency temporal;
    std::vector<Edge> dag_removed;
};

struct Rollout {
    SampledStructure structure;
    double utility = 0.0;
};

struct MaskGradient {
    Matrix spatial;
    Matrix temporal;
};

/// Throws OutOfRangeInit unless clamp_lo < init_value < clamp_hi.
EdgeMask init_masks(const Adjacency& spatial, const Adjacency& temporal, double init_value, double clamp_lo = 0.05,
                    double clamp_hi = 0.99);

/// Draws every support edge independently with its mask probability, then
/// breaks spatial cycles with dag_sample.
SampledStructure sample_structure(const EdgeMask& mask, Rng& rng);

double structure_log_prob(const EdgeMask& mask, const SampledStructure& s, LikelihoodMode mode);

/// Score-function estimate (1/M) sum_k (u_k - b) grad log p(s_k), with b the
/// mean utility (BaselineMode::Mean) or zero. Zero off the support.
MaskGradient reinforce_gradient(const EdgeMask& mask, std::span<const Rollout> rollouts, LikelihoodMode mode,
                                BaselineMode baseline = BaselineMode::Mean);

/// Sum of singular values.
double nuclear_norm(const Matrix& s);

/// U * V^T from the thin SVD of s.
Matrix nuclear_norm_subgradient(const Matrix& s);

double default_delta(const Adjacency& support);

/// Pulls s back into the ball ||A - s||_F <= delta, then re-clamps the
/// support and zeroes everything else.
Matrix project_frobenius(const Matrix& s, const Adjacency& support, double delta, double clamp_lo, double clamp_hi);

/// One ascent step on utility minus the nuclear-norm penalty, applied to the
/// spatial and temporal masks independently.
EdgeMask optimizer_step(const EdgeMask& mask, const MaskGradient& grad, const OptimizerConfig& cfg);

Matrix support_matrix(const Adjacency& support);

}  // namespace agentprune
