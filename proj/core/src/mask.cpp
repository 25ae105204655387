#include "agentprune/mask.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/SVD>

#include "agentprune/error.hpp"

namespace agentprune {

std::string_view to_string(LikelihoodMode mode) noexcept {
    return mode == LikelihoodMode::FullBernoulli ? "full-bernoulli" : "paper-faithful";
}

LikelihoodMode likelihood_mode_from_string(std::string_view text) {
    if (text == "full-bernoulli") return LikelihoodMode::FullBernoulli;
    if (text == "paper-faithful") return LikelihoodMode::PaperFaithful;
    throw Error(Errc::InvalidConfig, "unknown likelihood mode '" + std::string(text) + "'");
}

std::string_view to_string(BaselineMode mode) noexcept { return mode == BaselineMode::Mean ? "mean" : "none"; }

BaselineMode baseline_mode_from_string(std::string_view text) {
    if (text == "mean") return BaselineMode::Mean;
    if (text == "none") return BaselineMode::None;
    throw Error(Errc::InvalidConfig, "unknown baseline mode '" + std::string(text) + "'");
}

void validate(const OptimizerConfig& cfg) {
    if (!(cfg.learning_rate > 0.0)) throw Error(Errc::InvalidConfig, "learning_rate must be positive");
    if (cfg.rollouts < 1) throw Error(Errc::InvalidConfig, "rollouts must be >= 1");
    if (!(cfg.lambda_nuclear >= 0.0)) throw Error(Errc::InvalidConfig, "lambda_nuclear must be >= 0");
    if (cfg.delta && !(*cfg.delta >= 0.0)) throw Error(Errc::InvalidConfig, "delta must be >= 0");
    if (!(cfg.clamp_lo > 0.0 && cfg.clamp_lo < cfg.clamp_hi && cfg.clamp_hi < 1.0)) {
        throw Error(Errc::InvalidConfig, "clamp bounds must satisfy 0 < lo < hi < 1");
    }
}

namespace {

void check_finite(const Matrix& s) {
    if (!s.allFinite()) throw Error(Errc::NonFiniteEntry, "matrix contains NaN or infinity");
}

void check_shape(const Matrix& m, const Adjacency& support, const char* what) {
    const auto n = static_cast<Eigen::Index>(support.size());
    if (m.rows() != n || m.cols() != n) {
        throw Error(Errc::ShapeMismatch, std::string(what) + " is " + std::to_string(m.rows()) + "x" +
                                             std::to_string(m.cols()) + ", support is " + std::to_string(n) + "x" +
                                             std::to_string(n));
    }
}

Matrix clamp_to_support(Matrix s, const Adjacency& support, double lo, double hi) {
    for (Eigen::Index i = 0; i < s.rows(); ++i)
        for (Eigen::Index j = 0; j < s.cols(); ++j)
            s(i, j) = support(i, j) ? std::clamp(s(i, j), lo, hi) : 0.0;
    return s;
}

Matrix init_one(const Adjacency& support, double value) {
    return support_matrix(support) * value;
}

Adjacency bernoulli_draw(const Matrix& probs, const Adjacency& support, Rng& rng) {
    Adjacency out(support.size());
    for (const auto& e : support.edges())
        if (rng.uniform() < probs(e.src, e.dst)) out.set(e.src, e.dst);
    return out;
}

// d/dS log p for one matrix, accumulated into `grad` scaled by `weight`.
// Edges dropped by dag_sample are absent from `included`, so full-Bernoulli
// mode scores them as excluded and paper-faithful mode skips them.
void add_score(const Matrix& probs, const Adjacency& support, const Adjacency& included, LikelihoodMode mode,
               double weight, Matrix& grad) {
    for (const auto& e : support.edges()) {
        const double p = probs(e.src, e.dst);
        if (included(e.src, e.dst)) {
            grad(e.src, e.dst) += weight / p;
            continue;
        }
        if (mode == LikelihoodMode::PaperFaithful) continue;
        grad(e.src, e.dst) -= weight / (1.0 - p);
    }
}

double log_prob_one(const Matrix& probs, const Adjacency& support, const Adjacency& included, LikelihoodMode mode) {
    double total = 0.0;
    for (const auto& e : support.edges()) {
        const double p = probs(e.src, e.dst);
        if (included(e.src, e.dst)) {
            if (!(p > 0.0)) {
                throw Error(Errc::ZeroProbabilityEdge, "included edge (" + std::to_string(e.src) + ", " +
                                                           std::to_string(e.dst) + ") has probability 0");
            }
            total += std::log(p);
            continue;
        }
        if (mode == LikelihoodMode::PaperFaithful) continue;
        if (!(p < 1.0)) {
            throw Error(Errc::ZeroProbabilityEdge, "excluded edge (" + std::to_string(e.src) + ", " +
                                                       std::to_string(e.dst) + ") has probability 1");
        }
        total += std::log1p(-p);
    }
    for (const auto& e : included.edges()) {
        if (!support(e.src, e.dst)) {
            throw Error(Errc::ZeroProbabilityEdge, "edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) +
                                                       ") lies outside the mask support");
        }
    }
    return total;
}

}  // namespace

Matrix support_matrix(const Adjacency& support) {
    const auto n = static_cast<Eigen::Index>(support.size());
    Matrix m = Matrix::Zero(n, n);
    for (const auto& e : support.edges()) m(e.src, e.dst) = 1.0;
    return m;
}

EdgeMask init_masks(const Adjacency& spatial, const Adjacency& temporal, double init_value, double clamp_lo,
                    double clamp_hi) {
    if (!(init_value > clamp_lo && init_value < clamp_hi)) {
        throw Error(Errc::OutOfRangeInit, "init value " + std::to_string(init_value) + " outside (" +
                                              std::to_string(clamp_lo) + ", " + std::to_string(clamp_hi) + ")");
    }
    if (spatial.size() != temporal.size()) throw Error(Errc::ShapeMismatch, "spatial and temporal sizes differ");
    EdgeMask mask;
    mask.spatial = init_one(spatial, init_value);
    mask.temporal = init_one(temporal, init_value);
    mask.spatial_support = spatial;
    mask.temporal_support = temporal;
    mask.clamp_lo = clamp_lo;
    mask.clamp_hi = clamp_hi;
    return mask;
}

SampledStructure sample_structure(const EdgeMask& mask, Rng& rng) {
    SampledStructure s;
    const Adjacency drawn = bernoulli_draw(mask.spatial, mask.spatial_support, rng);
    s.temporal = bernoulli_draw(mask.temporal, mask.temporal_support, rng);
    auto dag = dag_sample_detailed(drawn, rng);
    s.spatial = std::move(dag.dag);
    s.dag_removed = std::move(dag.removed);
    return s;
}

double structure_log_prob(const EdgeMask& mask, const SampledStructure& s, LikelihoodMode mode) {
    return log_prob_one(mask.spatial, mask.spatial_support, s.spatial, mode) +
           log_prob_one(mask.temporal, mask.temporal_support, s.temporal, mode);
}

MaskGradient reinforce_gradient(const EdgeMask& mask, std::span<const Rollout> rollouts, LikelihoodMode mode,
                                BaselineMode baseline) {
    if (rollouts.empty()) throw Error(Errc::EmptyRollouts, "no rollouts supplied");
    double b = 0.0;
    for (const auto& r : rollouts) {
        if (!std::isfinite(r.utility)) throw Error(Errc::NonFiniteEntry, "rollout utility is not finite");
        b += r.utility;
    }
    b = baseline == BaselineMode::Mean ? b / static_cast<double>(rollouts.size()) : 0.0;

    MaskGradient grad{Matrix::Zero(mask.spatial.rows(), mask.spatial.cols()),
                      Matrix::Zero(mask.temporal.rows(), mask.temporal.cols())};
    // The floating-point mean of identical values need not equal them.
    const auto [lo, hi] = std::minmax_element(rollouts.begin(), rollouts.end(),
                                              [](const Rollout& x, const Rollout& y) { return x.utility < y.utility; });
    if (baseline == BaselineMode::Mean && lo->utility == hi->utility) return grad;
    const double inv_m = 1.0 / static_cast<double>(rollouts.size());
    for (const auto& r : rollouts) {
        const double advantage = r.utility - b;
        if (advantage == 0.0) continue;
        add_score(mask.spatial, mask.spatial_support, r.structure.spatial, mode, advantage * inv_m, grad.spatial);
        add_score(mask.temporal, mask.temporal_support, r.structure.temporal, mode, advantage * inv_m,
                  grad.temporal);
    }
    return grad;
}

double nuclear_norm(const Matrix& s) {
    check_finite(s);
    if (s.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(s);
    return svd.singularValues().sum();
}

Matrix nuclear_norm_subgradient(const Matrix& s) {
    check_finite(s);
    if (s.size() == 0) return s;
    Eigen::JacobiSVD<Matrix> svd(s, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return svd.matrixU() * svd.matrixV().transpose();
}

double default_delta(const Adjacency& support) {
    return 0.5 * std::sqrt(static_cast<double>(support.edge_count()));
}

Matrix project_frobenius(const Matrix& s, const Adjacency& support, double delta, double clamp_lo, double clamp_hi) {
    check_shape(s, support, "mask");
    if (!(delta >= 0.0)) throw Error(Errc::InvalidConfig, "delta must be >= 0");
    const Matrix a = support_matrix(support);
    Matrix residual = s - a;
    for (Eigen::Index i = 0; i < s.rows(); ++i)
        for (Eigen::Index j = 0; j < s.cols(); ++j)
            if (!support(i, j)) residual(i, j) = 0.0;
    const double norm = residual.norm();
    if (norm <= delta) return s;
    return clamp_to_support(a + (delta / norm) * residual, support, clamp_lo, clamp_hi);
}

EdgeMask optimizer_step(const EdgeMask& mask, const MaskGradient& grad, const OptimizerConfig& cfg) {
    check_shape(mask.spatial, mask.spatial_support, "spatial mask");
    check_shape(mask.temporal, mask.temporal_support, "temporal mask");
    check_shape(grad.spatial, mask.spatial_support, "spatial gradient");
    check_shape(grad.temporal, mask.temporal_support, "temporal gradient");

    auto update = [&](const Matrix& s, const Matrix& g, const Adjacency& support) {
        Matrix next = s + cfg.learning_rate * g;
        if (cfg.lambda_nuclear > 0.0) next -= cfg.learning_rate * cfg.lambda_nuclear * nuclear_norm_subgradient(s);
        next = clamp_to_support(std::move(next), support, mask.clamp_lo, mask.clamp_hi);
        const double delta = cfg.delta.value_or(default_delta(support));
        return project_frobenius(next, support, delta, mask.clamp_lo, mask.clamp_hi);
    };

    EdgeMask out = mask;
    out.spatial = update(mask.spatial, grad.spatial, mask.spatial_support);
    out.temporal = update(mask.temporal, grad.temporal, mask.temporal_support);
    return out;
}

}  // namespace agentprune
