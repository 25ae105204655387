// Acceptance suite. `agentprune_acceptance` runs every criterion and prints
// one PASS/FAIL line each; `agentprune_acceptance N` runs criterion N only.
// Exit status is nonzero when any selected criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "agentprune/cost.hpp"
#include "agentprune/error.hpp"
#include "agentprune/harness.hpp"
#include "agentprune/mask.hpp"
#include "agentprune/pruner.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace agentprune;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;  // 0 = no limit
    std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// --- 1 ------------------------------------------------------------------
Outcome gradient_oracle() {
    auto mask = init_masks(build_spatial(TopologyKind{}, 3), Adjacency(3), 0.5);
    mask.spatial(0, 1) = 0.3;
    mask.spatial(0, 2) = 0.6;
    mask.spatial(1, 2) = 0.8;
    // Deterministic, non-additive utility over edge subsets.
    auto u = [](const SampledStructure& s) {
        const bool a = s.spatial(0, 1), b = s.spatial(0, 2), c = s.spatial(1, 2);
        return 2.0 * a + 1.0 * c - 1.5 * (b && c) + 0.5 * (a && b && c);
    };
    const auto exact = oracle::exact_gradient(mask, u);

    Rng rng(20240601);
    std::vector<Rollout> rollouts(100000);
    for (auto& r : rollouts) {
        r.structure = sample_structure(mask, rng);
        r.utility = u(r.structure);
    }
    const auto est = reinforce_gradient(mask, rollouts, LikelihoodMode::FullBernoulli, BaselineMode::Mean);
    double worst = 0.0;
    std::ostringstream d;
    for (const auto& e : mask.spatial_support.edges()) {
        const double err = std::abs(est.spatial(e.src, e.dst) - exact.spatial(e.src, e.dst));
        worst = std::max(worst, err);
        d << "(" << e.src << "," << e.dst << ") est " << fmt("%.4f", est.spatial(e.src, e.dst)) << " exact "
          << fmt("%.4f", exact.spatial(e.src, e.dst)) << "; ";
    }
    d << "max abs error " << fmt("%.4f", worst) << " (limit 0.05)";
    return {worst <= 0.05, d.str()};
}

// --- 2 ------------------------------------------------------------------
Outcome likelihood_normalization() {
    Rng rng(77);
    double worst = 0.0;
    for (int g = 0; g < 100; ++g) {
        const std::size_t n = 2 + rng.index(4);
        const std::size_t edges = 1 + rng.index(4);
        Adjacency s(n), t(n);
        std::size_t placed = 0;
        while (placed < edges) {
            const auto i = rng.index(n), j = rng.index(n);
            const bool spatial = rng.bernoulli(0.5) && i != j;
            auto& a = spatial ? s : t;
            if (a(i, j)) continue;
            a.set(i, j);
            ++placed;
        }
        auto mask = init_masks(s, t, 0.5);
        for (const auto& e : s.edges()) mask.spatial(e.src, e.dst) = 0.05 + 0.94 * rng.uniform();
        for (const auto& e : t.edges()) mask.temporal(e.src, e.dst) = 0.05 + 0.94 * rng.uniform();
        const auto cands = oracle::candidates(mask);
        double total = 0.0;
        for (std::uint64_t bits = 0; bits < (1ULL << cands.size()); ++bits)
            total += std::exp(structure_log_prob(mask, oracle::structure_from_bits(mask, cands, bits),
                                                 LikelihoodMode::FullBernoulli));
        worst = std::max(worst, std::abs(total - 1.0));
    }
    return {worst <= 1e-10, "100 graphs, max |sum - 1| = " + fmt("%.3e", worst) + " (limit 1e-10)"};
}

// --- 3 ------------------------------------------------------------------
Outcome nuclear_norm_oracle() {
    Rng rng(3);
    auto random8 = [&] {
        Matrix m(8, 8);
        for (Eigen::Index i = 0; i < 64; ++i) m(i) = 2.0 * rng.uniform() - 1.0;
        return m;
    };
    double worst_norm = 0.0, worst_fd = 0.0;
    int full_rank = 0;
    const double h = 1e-6;
    for (int k = 0; k < 100; ++k) {
        const Matrix s = random8();
        worst_norm = std::max(worst_norm, std::abs(nuclear_norm(s) - oracle::nuclear_norm_eigen(s)));
        Eigen::SelfAdjointEigenSolver<Matrix> es(s.transpose() * s);
        if (std::sqrt(std::max(0.0, es.eigenvalues().minCoeff())) < 1e-3) continue;
        ++full_rank;
        const Matrix d = random8();
        const double fd = (nuclear_norm(s + h * d) - nuclear_norm(s - h * d)) / (2.0 * h);
        const double inner = (nuclear_norm_subgradient(s).array() * d.array()).sum();
        worst_fd = std::max(worst_fd, std::abs(fd - inner));
    }
    const bool pass = worst_norm <= 1e-9 && worst_fd <= 1e-4 && full_rank >= 90;
    return {pass, "norm error " + fmt("%.2e", worst_norm) + " (limit 1e-9), directional error " +
                      fmt("%.2e", worst_fd) + " (limit 1e-4) over " + std::to_string(full_rank) +
                      " full-rank points"};
}

// --- 4 ------------------------------------------------------------------
Outcome dag_properties() {
    Rng rng(4);
    int failures = 0;
    for (int k = 0; k < 1000; ++k) {
        const std::size_t n = 1 + rng.index(50);
        const auto a = oracle::random_digraph(n, 0.3 * rng.uniform(), rng);
        const std::uint64_t seed = rng.next();
        Rng r1(seed), r2(seed);
        const auto d1 = dag_sample(a, r1);
        const auto d2 = dag_sample(a, r2);
        const auto order = topological_sort(d1);
        const bool ok = oracle::kahn_acyclic(d1) && oracle::subset_of(d1, a) && d1 == d2 &&
                        oracle::order_respects_edges(d1, order) && order == topological_sort(d2);
        failures += ok ? 0 : 1;
    }
    return {failures == 0, "1000 graphs (1..50 nodes), " + std::to_string(failures) + " property violations"};
}

// --- 5 ------------------------------------------------------------------
Outcome pruning_exactness() {
    Rng rng(5);
    int cases = 0, count_bad = 0, oracle_bad = 0, scale_bad = 0;
    for (int k = 0; k < 100; ++k) {
        const std::size_t n = 2 + rng.index(10);
        const auto support = oracle::random_digraph(n, 0.15 + 0.85 * rng.uniform(), rng, true);
        const bool ties = k % 2 == 1;
        Matrix s = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (const auto& e : support.edges()) {
            const double u = rng.uniform();
            s(e.src, e.dst) = ties ? 0.05 + std::floor(u * 5.0) / 5.0 * 0.9 : 0.05 + 0.94 * u;
        }
        const double c = 0.001 + 1000.0 * rng.uniform();
        for (int t = 0; t <= 9; ++t) {
            ++cases;
            const double p = t / 10.0;
            const auto b = one_shot_prune(s, support, p);
            const std::size_t e = support.edge_count();
            if (b.edge_count() != (e * static_cast<std::size_t>(10 - t) + 9) / 10) ++count_bad;
            if (b != oracle::prune_tenths(s, support, t)) ++oracle_bad;
            if (b != one_shot_prune(c * s, support, p)) ++scale_bad;
        }
    }
    return {count_bad + oracle_bad + scale_bad == 0,
            std::to_string(cases) + " cases: count mismatches " + std::to_string(count_bad) + ", oracle mismatches " +
                std::to_string(oracle_bad) + ", scale-variance " + std::to_string(scale_bad)};
}

// --- 6 ------------------------------------------------------------------
Outcome cost_reconciliation() {
    // worked values
    CostParams w;
    w.rounds = 2;
    w.optimization_rounds = 1;
    w.rollouts = 1;
    w.prune_ratio = 0.5;
    w.spatial_tokens = w.temporal_tokens = 100;
    w.spatial_edges = 10;
    w.temporal_edges = 5;
    w.query_tokens = 50;
    w.agents = 5;
    const double single = delta_single_query(w);
    CostParams wm = w;
    wm.queries = 100;
    wm.training_queries = 10;
    const double multi = delta_multi_query(wm);
    bool pass = single == 2250.0 && multi == 135000.0 && vanilla_cost(w) == 3500.0;

    // Edge counts are multiples of 4 and p a multiple of 1/4, so the pruned
    // counts (1 - p)|E| are whole and the formulas are exact.
    Rng rng(6);
    int vanilla_bad = 0, pruned_bad = 0, single_bad = 0, multi_bad = 0, gap_bad = 0;
    for (int k = 0; k < 50; ++k) {
        const std::size_t n = 4 + rng.index(4);
        CommGraph g;
        g.nodes.resize(n);
        for (std::size_t i = 0; i < n; ++i) g.nodes[i].id = static_cast<NodeId>(i);
        auto pick = [&](std::vector<Edge> pool) {
            for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.index(i)]);
            pool.resize(4 * rng.index(pool.size() / 4 + 1));
            return Adjacency::from_edges(n, pool);
        };
        g.spatial = pick(build_spatial(TopologyKind{}, n).edges());
        g.temporal = pick(Adjacency::ones(n).edges());
        TokenCostModel costs{1 + rng.index(40), 1 + rng.index(40), 1 + rng.index(40), 1 + rng.index(10)};
        CostParams p;
        p.rounds = static_cast<double>(1 + rng.index(4));
        p.optimization_rounds = static_cast<double>(1 + rng.index(static_cast<std::size_t>(p.rounds)));
        p.rollouts = static_cast<double>(1 + rng.index(4));
        p.prune_ratio = static_cast<double>(rng.index(4)) / 4.0;
        p.spatial_tokens = static_cast<double>(costs.spatial);
        p.temporal_tokens = static_cast<double>(costs.temporal);
        p.query_tokens = static_cast<double>(costs.query);
        p.spatial_edges = static_cast<double>(g.spatial.edge_count());
        p.temporal_edges = static_cast<double>(g.temporal.edge_count());
        p.agents = static_cast<double>(n);
        p.queries = static_cast<double>(2 + rng.index(5));
        p.training_queries = static_cast<double>(rng.index(static_cast<std::size_t>(p.queries) + 1));
        const int kk = static_cast<int>(p.rounds), kp = static_cast<int>(p.optimization_rounds);
        const auto m = static_cast<std::size_t>(p.rollouts);

        const auto one = simulate_cost(g, costs, kk, kp, m, p.prune_ratio, 1, 0);
        const auto many = simulate_cost(g, costs, kk, kp, m, p.prune_ratio, static_cast<std::size_t>(p.queries),
                                        static_cast<std::size_t>(p.training_queries));
        const double d1 = static_cast<double>(one.vanilla) - static_cast<double>(one.agentprune);
        const double dq = static_cast<double>(many.vanilla) - static_cast<double>(many.agentprune);
        const double edge = p.spatial_tokens * p.spatial_edges + p.temporal_tokens * p.temporal_edges;
        vanilla_bad += static_cast<double>(one.vanilla) == vanilla_cost(p) &&
                               static_cast<double>(many.vanilla) == vanilla_cost_multi(p)
                           ? 0
                           : 1;
        pruned_bad += static_cast<double>(one.agentprune) == agentprune_cost(p) &&
                              static_cast<double>(many.agentprune) == agentprune_cost_multi(p)
                          ? 0
                          : 1;
        multi_bad += dq == delta_multi_query(p) ? 0 : 1;
        if (d1 != delta_single_query(p)) {
            ++single_bad;
            gap_bad += delta_single_query(p) - d1 == (p.rounds - p.optimization_rounds) * edge ? 0 : 1;
            std::cout << "  setting " << k << " (K=" << kk << ", K'=" << kp << "): simulated savings " << d1
                      << ", delta_single_query " << delta_single_query(p) << '\n';
        }
    }
    pass = pass && vanilla_bad + pruned_bad + single_bad + multi_bad == 0;
    return {pass, "worked values " + fmt("%.0f", vanilla_cost(w)) + " / " + fmt("%.0f", single) + " / " +
                      fmt("%.0f", multi) + "; of 50 simulated settings, vanilla_cost differs on " +
                      std::to_string(vanilla_bad) + ", agentprune_cost on " + std::to_string(pruned_bad) +
                      ", delta_multi_query on " + std::to_string(multi_bad) + ", delta_single_query on " +
                      std::to_string(single_bad) + " (every single-query gap equals (K-K') x edge term: " +
                      (gap_bad == 0 ? "yes" : "no") + ")"};
}

// --- 7 ------------------------------------------------------------------
Outcome report_fidelity() {
    struct Row {
        const char* label;
        TokenTotals before, after;
        const char* printed;
    };
    const Row rows[] = {
        {"MMLU/AutoGen", {486034, 89224}, {349583, 86582}, "71.9"},
        {"HumanEval/AutoGen", {492273, 130196}, {315105, 139714}, "64.0"},
        {"GSM8K/AutoGen", {4327740, 998042}, {3791251, 1156884}, "59.9"},
        {"MMLU/GPTSwarm", {3055230, 569124}, {990312, 439551}, "32.4"},
        {"HumanEval/GPTSwarm", {2736136, 1004616}, {745617, 745926}, "27.2"},
        {"GSM8K/GPTSwarm", {14005945, 3156916}, {3526035, 730552}, "39.4"},
    };
    int matched = 0;
    std::string misses;
    for (const auto& r : rows) {
        const std::string got = format_percent(reduction_report(r.before, r.after).prompt_pct);
        std::cout << "  " << r.label << ": prompt " << r.after.prompt << " / " << r.before.prompt << " -> " << got
                  << "% (printed " << r.printed << "%)\n";
        if (got == r.printed) {
            ++matched;
        } else {
            misses += std::string(misses.empty() ? "" : ", ") + r.label + " " + got + " vs " + r.printed;
        }
    }
    return {matched == 6, std::to_string(matched) + "/6 rows reproduce" + (misses.empty() ? "" : "; " + misses)};
}

fs::path source_path(const std::string& rel) { return fs::path(AGENTPRUNE_SOURCE_DIR) / rel; }

// --- 8 ------------------------------------------------------------------
Outcome redundancy_witness() {
    const auto cfg = load_experiment_config(source_path("configs/probe.json").string());
    const auto queries = load_queries(cfg);
    const auto curve = redundancy_probe(cfg, queries, cfg.seeds.front());
    bool witnessed = false;
    std::ostringstream d;
    d << "unpruned " << fmt("%.4f", curve.unpruned_mean);
    for (const auto& row : curve.rows) {
        if (row.ratio <= 0.0) continue;
        d << ", r=" << fmt("%.1f", row.ratio) << " mean " << fmt("%.4f", row.mean);
        if (row.ratio <= 0.3 + 1e-12 && row.removed_spatial + row.removed_temporal > 0 &&
            row.mean >= curve.unpruned_mean)
            witnessed = true;
    }
    d << " (" << curve.rows.front().trials << " trials, " << curve.queries << " queries)";
    return {witnessed, d.str()};
}

// --- 9 ------------------------------------------------------------------
Outcome attack_defense() {
    const auto cfg = load_experiment_config(source_path("configs/attack.json").string());
    const auto queries = load_queries(cfg);
    const auto summary = attack_experiment(cfg, queries);
    const std::size_t n = summary.runs.size();
    const bool pass = n == 20 && summary.pruned_not_worse >= 18 && 5 * summary.halved >= 4 * n;
    return {pass, "pruned >= vanilla on " + std::to_string(summary.pruned_not_worse) + "/" + std::to_string(n) +
                      " seeds (need 18), liar lost >= half its out-edges on " + std::to_string(summary.halved) + "/" +
                      std::to_string(n) + " (need 80%)"};
}

// --- 10 -----------------------------------------------------------------
std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome train_determinism() {
#ifndef AGENTPRUNE_CLI_PATH
    return {false, "CLI not built (AGENTPRUNE_BUILD_TOOLS=OFF)"};
#else
    const fs::path root = fs::temp_directory_path() / ("agentprune-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(root);
    const std::string config = source_path("configs/train.json").string();
    // Same relative output dir from two working directories, so the config
    // echo in results.json is identical too.
    for (const char* run : {"a", "b"}) {
        fs::create_directories(root / run);
        const std::string cmd = "cd '" + (root / run).string() + "' && '" + AGENTPRUNE_CLI_PATH + "' train --config '" +
                                config + "' --out out > train.log 2>&1";
        if (std::system(cmd.c_str()) != 0) return {false, "train run " + std::string(run) + " failed: " + cmd};
    }
    std::size_t files = 0, differ = 0;
    for (const auto& entry : fs::directory_iterator(root / "a" / "out")) {
        ++files;
        const auto other = root / "b" / "out" / entry.path().filename();
        if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
            ++differ;
            std::cout << "  differs: " << entry.path().filename().string() << '\n';
        }
    }
    std::size_t files_b = 0;
    for ([[maybe_unused]] const auto& entry : fs::directory_iterator(root / "b" / "out")) ++files_b;
    fs::remove_all(root);
    return {files > 0 && differ == 0 && files == files_b,
            std::to_string(files) + " output files, " + std::to_string(differ) + " differ between runs"};
#endif
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "gradient-oracle", 30, gradient_oracle},
        {2, "likelihood-normalization", 0, likelihood_normalization},
        {3, "nuclear-norm-oracle", 0, nuclear_norm_oracle},
        {4, "dag-topology-properties", 10, dag_properties},
        {5, "pruning-exactness", 0, pruning_exactness},
        {6, "cost-reconciliation", 0, cost_reconciliation},
        {7, "report-fidelity", 0, report_fidelity},
        {8, "redundancy-witness", 120, redundancy_witness},
        {9, "attack-defense", 180, attack_defense},
        {10, "train-determinism", 0, train_determinism},
    };
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.budget_seconds > 0 && secs > c.budget_seconds) {
            o.pass = false;
            o.detail += "; over the " + fmt("%.0f", c.budget_seconds) + " s budget";
        }
        std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.id << " " << c.name << ": " << o.detail
                  << " [" << fmt("%.2f", secs) << " s]" << std::endl;
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
