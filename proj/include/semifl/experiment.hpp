#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "semifl/checkpoint.hpp"
#include "semifl/clustering.hpp"
#include "semifl/config.hpp"
#include "semifl/dataset.hpp"
#include "semifl/federation.hpp"
#include "semifl/metrics.hpp"
#include "semifl/model.hpp"
#include "semifl/rng.hpp"

namespace semifl {

struct dataset_bundle {
    LabeledSet train;
    LabeledSet test;
};

inline dataset_bundle load_datasets(const ExperimentConfig& cfg) {
    if (cfg.dataset.synthetic) {
        const auto& d = cfg.dataset;
        return {generate_synthetic(d.classes, d.per_class, d.seed, 0),
                generate_synthetic(d.classes, std::max<std::size_t>(1, d.per_class / 5), d.seed, 1)};
    }
    const auto files = locate_mnist(cfg.data_dir);
    return {load_idx(files.train_images, files.train_labels), load_idx(files.test_images, files.test_labels)};
}

/// Clients and the resolved federation settings for one run.
struct prepared_run {
    std::vector<ClientDataset> clients;
    FederationConfig federation;
    topology topo;
};

inline prepared_run prepare_run(const ExperimentConfig& cfg, const dataset_bundle& data) {
    prepared_run run;
    run.clients = partition(data.train, cfg.partition_plan());
    run.federation = cfg.federation();
    run.topo = topology::defaults(cfg.arch);
    if (cfg.mode == fed_mode::semifl) {
        const auto pattern = cfg.resolved_pattern();
        auto assignment = pattern == cluster_pattern::explicit_
                              ? load_assignment(cfg.assignment_file)
                              : build_pattern(pattern, run.clients, cfg.clusters, cfg.clients_per_cluster);
        if (cfg.order.shuffle_seed) assignment = shuffle_order(std::move(assignment), *cfg.order.shuffle_seed);
        if (const auto v = validate(assignment, run.clients); !v.empty()) throw clustering_error("invalid assignment: " + v.front());
        run.federation.assignment = std::move(assignment);
    }
    return run;
}

inline std::uint64_t init_seed(std::uint64_t master_seed) { return derive_seed({master_seed, 0x1417ULL}); }

/// Hooks for run_experiment's file output; all optional.
struct experiment_hooks {
    std::function<void(const RoundRecord&)> on_eval;
    std::function<void(const RoundRecord&)> on_round;
    std::function<void(const ModelParams<float>&, std::size_t round)> on_checkpoint;
};

struct ExperimentOutcome {
    ModelParams<float> model;
    std::vector<RoundRecord> records; // evaluated rounds only
    CommLedger ledger;
};

/// Trains per the config on already-loaded data. Test accuracy is measured
/// every `eval_every` rounds and at the last round.
inline ExperimentOutcome execute(const ExperimentConfig& cfg, const dataset_bundle& data, const experiment_hooks& hooks = {}) {
    auto run = prepare_run(cfg, data);
    const auto& fed = run.federation;
    ExperimentOutcome out;
    const auto pattern = cfg.mode == fed_mode::semifl ? std::string(to_string(fed.assignment.pattern)) : std::string("-");
    auto observe = [&](const ModelParams<float>& model, RoundRecord& r) {
        r.pattern = pattern;
        const bool last = r.round == fed.rounds;
        if (r.round % fed.eval_every == 0 || last) {
            r.test_accuracy = evaluate_accuracy(model, data.test);
            out.records.push_back(r);
            if (hooks.on_eval) hooks.on_eval(r);
        }
        if (hooks.on_round) hooks.on_round(r);
        if (hooks.on_checkpoint && cfg.checkpoint_every && r.round % cfg.checkpoint_every == 0) hooks.on_checkpoint(model, r.round);
    };
    schedule_options sched;
    sched.threads = fed.threads;
    auto result = run_federation(init_model<float>(run.topo, init_seed(cfg.seed)), std::span<const ClientDataset>(run.clients), fed,
                                 round_observer<float>(observe), sched);
    out.model = std::move(result.model);
    out.ledger = std::move(result.ledger);
    return out;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* metrics_header =
    "round,mode,pattern,test_accuracy,train_loss,uplink_models,uplink_bytes,elapsed_ms";

inline std::string metrics_row(const RoundRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%s,%s,%.6f,%.9g,%llu,%llu,%.1f", r.round, std::string(to_string(r.mode)).c_str(),
                  r.pattern.c_str(), r.test_accuracy, r.train_loss, static_cast<unsigned long long>(r.uplink_models),
                  static_cast<unsigned long long>(r.uplink_bytes), r.elapsed_ms);
    return buf;
}

inline std::vector<RoundRecord> read_metrics_csv(std::istream& in, const std::string& origin = "<metrics>") {
    std::string line;
    if (!std::getline(in, line) || line != metrics_header) throw input_error(origin + ": missing metrics header");
    std::vector<RoundRecord> rows;
    for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
        if (f.size() != 8) throw input_error(origin + ":" + std::to_string(lineno) + ": expected 8 columns");
        try {
            RoundRecord r;
            r.round = std::stoull(f[0]);
            r.mode = parse_mode(f[1]);
            r.pattern = f[2];
            r.test_accuracy = std::stod(f[3]);
            r.train_loss = std::stod(f[4]);
            r.uplink_models = std::stoull(f[5]);
            r.uplink_bytes = std::stoull(f[6]);
            r.elapsed_ms = std::stod(f[7]);
            rows.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw input_error(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

inline std::vector<RoundRecord> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw input_error(path.string() + ": cannot open");
    return read_metrics_csv(in, path.string());
}

inline constexpr const char* ledger_header = "round,uplink_models,uplink_bytes,downlink_models";

/// Runs one experiment and writes into cfg.out_dir:
///   config.resolved, metrics.csv, ledger.csv, checkpoints/round_NNNN.sfl
///   (every checkpoint_every rounds) and final.sfl.
inline int run_experiment(ExperimentConfig cfg, std::ostream* log = nullptr) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    {
        std::ofstream echo(cfg.out_dir / "config.resolved");
        echo << to_config_text(cfg);
    }
    const auto data = load_datasets(cfg);

    std::ofstream metrics(cfg.out_dir / "metrics.csv");
    std::ofstream ledger(cfg.out_dir / "ledger.csv");
    if (!metrics || !ledger) throw internal_error(cfg.out_dir.string() + ": cannot write outputs");
    metrics << metrics_header << '\n';
    ledger << ledger_header << '\n';

    experiment_hooks hooks;
    hooks.on_eval = [&](const RoundRecord& r) {
        metrics << metrics_row(r) << '\n' << std::flush;
        if (log) *log << metrics_row(r) << '\n' << std::flush;
    };
    hooks.on_round = [&](const RoundRecord& r) {
        ledger << r.round << ',' << r.uplink_models << ',' << r.uplink_bytes << ',' << r.downlink_models << '\n';
    };
    hooks.on_checkpoint = [&](const ModelParams<float>& m, std::size_t round) {
        fs::create_directories(cfg.out_dir / "checkpoints");
        char name[32];
        std::snprintf(name, sizeof name, "round_%04zu.sfl", round);
        save_checkpoint(m, cfg.out_dir / "checkpoints" / name);
        save_checkpoint(m, cfg.out_dir / "checkpoints" / "latest.sfl");
    };
    const auto outcome = execute(cfg, data, hooks);
    save_checkpoint(outcome.model, cfg.out_dir / "final.sfl");
    return 0;
}

/// Loads two checkpoints and reports per-layer divergence of the first from the second.
inline DivergenceReport compare_checkpoints(const std::filesystem::path& subject, const std::filesystem::path& reference) {
    const auto s = load_checkpoint<float>(subject);
    const auto r = load_checkpoint<float>(reference);
    return layer_divergence(s, r, subject.string(), reference.string());
}

} // namespace semifl
