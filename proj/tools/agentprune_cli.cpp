#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "agentprune/error.hpp"
#include "agentprune/harness.hpp"

namespace fs = std::filesystem;
using namespace agentprune;
using json = nlohmann::json;

namespace {

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> workers;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::InvalidConfig, "cannot read " + path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::InvalidConfig, "cannot write " + path.string());
    out << text;
}

ExperimentConfig load(const GlobalOptions& g) {
    if (g.config.empty()) throw Error(Errc::InvalidConfig, "--config is required");
    ExperimentConfig cfg = load_experiment_config(g.config);
    if (g.seed) cfg.seeds = {*g.seed};
    if (!g.out.empty()) cfg.output_dir = g.out;
    if (g.workers) cfg.workers = *g.workers;
    return cfg;
}

fs::path prepare_output(const ExperimentConfig& cfg) {
    fs::path dir(cfg.output_dir);
    fs::create_directories(dir);
    return dir;
}

// Writes every train artifact into dir and returns the results document.
std::string train(const ExperimentConfig& cfg, const fs::path& dir) {
    const auto queries = load_queries(cfg);
    std::vector<MultiQueryResult> runs(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), cfg.workers,
                 [&](std::size_t i) { runs[i] = run_multi_query(cfg, queries, cfg.seeds[i]); });

    const std::string results = multi_query_results_json(cfg, runs);
    write_file(dir / "results.json", results);
    write_file(dir / "accuracy.csv", accuracy_csv(runs));
    const std::string config_echo = experiment_config_json(cfg);
    for (const auto& r : runs) {
        const std::string tag = "seed" + std::to_string(r.seed);
        write_file(dir / ("ledger_" + tag + ".csv"), r.ledger.to_csv());
        write_file(dir / ("mask_" + tag + ".json"), mask_checkpoint_json(r.mask, r.binary, config_echo));
        write_file(dir / ("gsub_" + tag + ".json"), save_graph(r.gsub));
        if (cfg.write_traces) write_file(dir / ("trace_" + tag + ".jsonl"), r.trace.to_jsonl());
    }
    return results;
}

int cmd_train(const GlobalOptions& g) {
    const auto cfg = load(g);
    const auto dir = prepare_output(cfg);
    train(cfg, dir);
    std::cout << "wrote " << (dir / "results.json").string() << '\n';
    std::cout << slurp((dir / "accuracy.csv").string());
    return 0;
}

int cmd_probe(const GlobalOptions& g) {
    const auto cfg = load(g);
    const auto dir = prepare_output(cfg);
    const auto queries = load_queries(cfg);
    std::string csv;
    for (auto seed : cfg.seeds) {
        const std::string part = probe_csv(redundancy_probe(cfg, queries, seed));
        csv += csv.empty() ? part : part.substr(part.find('\n') + 1);
    }
    write_file(dir / "probe.csv", csv);
    std::cout << csv;
    return 0;
}

int cmd_attack(const GlobalOptions& g) {
    const auto cfg = load(g);
    const auto dir = prepare_output(cfg);
    const auto queries = load_queries(cfg);
    const auto summary = attack_experiment(cfg, queries);
    write_file(dir / "attack.json", attack_results_json(cfg, summary));
    write_file(dir / "attack.csv", attack_csv(summary));
    std::cout << attack_csv(summary);
    std::cout << "pruned >= vanilla: " << summary.pruned_not_worse << '/' << summary.runs.size()
              << "; attacked agent lost >= half its out-edges: " << summary.halved << '/' << summary.runs.size()
              << '\n';
    return 0;
}

TokenTotals sum_tokens(const std::string& results_path) {
    const json doc = json::parse(slurp(results_path));
    TokenTotals t;
    for (const auto& run : doc.at("runs")) {
        const auto& total = run.at("tokens").at("total");
        t.prompt += total.at("prompt").get<std::uint64_t>();
        t.completion += total.at("completion").get<std::uint64_t>();
    }
    return t;
}

int cmd_report(const GlobalOptions& g, const std::string& before_path, const std::string& after_path,
               std::optional<TokenTotals> before, std::optional<TokenTotals> after) {
    if (!before_path.empty()) before = sum_tokens(before_path);
    if (!after_path.empty()) after = sum_tokens(after_path);
    if (!before || !after) throw Error(Errc::InvalidConfig, "report needs a baseline and a run");
    std::optional<TokenPrices> prices;
    if (!g.config.empty()) prices = load(g).prices;

    const std::string csv = reduction_csv({{"baseline", *before}, {"run", *after}}, prices);
    if (!g.out.empty()) {
        fs::create_directories(g.out);
        write_file(fs::path(g.out) / "reduction.csv", csv);
    }
    std::cout << csv;
    const auto report = reduction_report(*before, *after, prices);
    std::cout << "prompt tokens: " << format_percent(report.prompt_pct) << "% of baseline\n";
    if (report.cost_pct) std::cout << "cost: " << format_percent(*report.cost_pct) << "% of baseline\n";
    return 0;
}

int cmd_replay(const GlobalOptions& g, const std::string& results_path) {
    const std::string recorded = slurp(results_path);
    const json doc = json::parse(recorded);
    ExperimentConfig cfg = parse_experiment_config(doc.at("config").dump());
    const fs::path dir = g.out.empty() ? fs::temp_directory_path() / "agentprune-replay" : fs::path(g.out);
    fs::create_directories(dir);
    cfg.output_dir = dir.string();
    if (g.workers) cfg.workers = *g.workers;
    // The echo carries the original output_dir, which is part of the
    // results document; restore it so the comparison is byte-for-byte.
    ExperimentConfig echo = cfg;
    echo.output_dir = doc.at("config").at("output_dir").get<std::string>();
    const auto queries = load_queries(cfg);
    std::vector<MultiQueryResult> runs(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), cfg.workers,
                 [&](std::size_t i) { runs[i] = run_multi_query(cfg, queries, cfg.seeds[i]); });
    const std::string replayed = multi_query_results_json(echo, runs);
    write_file(dir / "results.json", replayed);
    if (replayed == recorded) {
        std::cout << "replay identical: " << results_path << '\n';
        return 0;
    }
    std::cout << "replay differs from " << results_path << '\n';
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"agentprune: communication pruning for multi-agent dialogues"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalOptions global;
    std::uint64_t seed = 0;
    std::size_t workers = 0;
    app.add_option("--config,-c", global.config, "experiment config (JSON)");
    auto* seed_opt = app.add_option("--seed", seed, "run a single seed instead of the config's list");
    app.add_option("--out,-o", global.out, "output directory");
    auto* workers_opt = app.add_option("--workers", workers, "worker threads (0 = all cores)");

    auto* train_cmd = app.add_subcommand("train", "optimize and prune on Q' queries, evaluate the rest");
    auto* probe_cmd = app.add_subcommand("probe", "random edge removal sweep");
    auto* attack_cmd = app.add_subcommand("attack", "vanilla vs pruned pipeline under an agent attack");

    auto* report_cmd = app.add_subcommand("report", "token reduction table");
    std::string before_path, after_path;
    std::uint64_t before_prompt = 0, before_completion = 0, after_prompt = 0, after_completion = 0;
    report_cmd->add_option("--baseline", before_path, "baseline results.json");
    report_cmd->add_option("--run", after_path, "compared results.json");
    auto* bp = report_cmd->add_option("--prompt-before", before_prompt);
    report_cmd->add_option("--completion-before", before_completion);
    auto* ap = report_cmd->add_option("--prompt-after", after_prompt);
    report_cmd->add_option("--completion-after", after_completion);

    auto* replay_cmd = app.add_subcommand("replay", "re-run a train results file and compare byte-for-byte");
    std::string replay_path;
    replay_cmd->add_option("results", replay_path, "results.json written by train")->required();

    CLI11_PARSE(app, argc, argv);
    if (seed_opt->count()) global.seed = seed;
    if (workers_opt->count()) global.workers = workers;

    try {
        if (train_cmd->parsed()) return cmd_train(global);
        if (probe_cmd->parsed()) return cmd_probe(global);
        if (attack_cmd->parsed()) return cmd_attack(global);
        if (report_cmd->parsed()) {
            std::optional<TokenTotals> before, after;
            if (bp->count()) before = TokenTotals{before_prompt, before_completion};
            if (ap->count()) after = TokenTotals{after_prompt, after_completion};
            return cmd_report(global, before_path, after_path, before, after);
        }
        if (replay_cmd->parsed()) return cmd_replay(global, replay_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "agentprune: %s\n", e.what());
        return 2;
    }
    return 0;
}
