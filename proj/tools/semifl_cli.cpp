// semifl: partition | train | compare | report

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "semifl/semifl.hpp"

namespace fs = std::filesystem;
using namespace semifl;

namespace {

struct common_options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string cluster_order;
};

void add_common(CLI::App* cmd, common_options& o) {
    cmd->add_option("--config", o.config, "Experiment config (key = value lines)");
    cmd->add_option("--seed", o.seed, "Master seed (overrides config)");
    cmd->add_option("--out", o.out, "Output directory (overrides config)");
    cmd->add_option("--cluster-order", o.cluster_order, "fixed | shuffled:<seed>");
}

ExperimentConfig resolve(const common_options& o) {
    ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : parse_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (!o.out.empty()) cfg.out_dir = o.out;
    if (!o.cluster_order.empty()) cfg.order = parse_cluster_order(o.cluster_order, "--cluster-order");
    cfg.validate();
    return cfg;
}

int cmd_partition(const common_options& o) {
    auto cfg = resolve(o);
    const auto data = load_datasets(cfg);
    const auto run = prepare_run(cfg, data);
    fs::create_directories(cfg.out_dir);
    std::ofstream csv(cfg.out_dir / "partition.csv");
    csv << "client_id,size,labels\n";
    for (const auto& c : run.clients) {
        csv << c.client_id << ',' << c.size() << ',';
        bool first = true;
        for (const auto& [l, n] : c.label_profile) {
            csv << (first ? "" : " ") << int(l) << ':' << n;
            first = false;
        }
        csv << '\n';
    }
    if (cfg.mode == fed_mode::semifl) {
        std::ofstream a(cfg.out_dir / "assignment.txt");
        write_assignment(a, run.federation.assignment);
    }
    std::cout << run.clients.size() << " clients written to " << (cfg.out_dir / "partition.csv").string() << '\n';
    return 0;
}

int cmd_train(const common_options& o, bool quiet) {
    auto cfg = resolve(o);
    return run_experiment(cfg, quiet ? nullptr : &std::cout);
}

int cmd_compare(const std::string& subject, const std::string& reference, const std::string& out) {
    const auto rep = compare_checkpoints(subject, reference);
    if (out.empty())
        write_divergence_csv(std::cout, rep);
    else
        write_divergence_csv(fs::path(out), rep);
    return 0;
}

int cmd_report(const std::vector<std::string>& files) {
    std::cout << "file,mode,pattern,rounds,final_accuracy,best_accuracy,uplink_models_per_round\n";
    for (const auto& f : files) {
        const auto rows = read_metrics_csv(fs::path(f));
        if (rows.empty()) throw input_error(f + ": no rows");
        double best = 0;
        for (const auto& r : rows) best = std::max(best, r.test_accuracy);
        const auto& last = rows.back();
        std::printf("%s,%s,%s,%zu,%.4f,%.4f,%llu\n", f.c_str(), std::string(to_string(last.mode)).c_str(), last.pattern.c_str(),
                    last.round, last.test_accuracy, best, static_cast<unsigned long long>(last.uplink_models));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-federated learning simulator"};
    app.require_subcommand(1);

    common_options part_opts, train_opts;
    auto* part = app.add_subcommand("partition", "Partition the training set and write the cluster assignment");
    add_common(part, part_opts);

    bool quiet = false;
    auto* train = app.add_subcommand("train", "Run an experiment (cl, fl or semifl)");
    add_common(train, train_opts);
    train->add_flag("-q,--quiet", quiet, "Do not echo metric rows");

    std::string subject, reference, cmp_out;
    auto* compare = app.add_subcommand("compare", "Layer-wise ACS/RED of a checkpoint against a reference");
    compare->add_option("subject", subject, "Subject checkpoint")->required();
    compare->add_option("reference", reference, "Reference checkpoint")->required();
    compare->add_option("--out", cmp_out, "Write the CSV here instead of stdout");

    std::vector<std::string> reports;
    auto* report = app.add_subcommand("report", "Summarize metrics.csv files");
    report->add_option("files", reports, "metrics.csv files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*part) return cmd_partition(part_opts);
        if (*train) return cmd_train(train_opts, quiet);
        if (*compare) return cmd_compare(subject, reference, cmp_out);
        if (*report) return cmd_report(reports);
    } catch (const semifl::error& e) {
        std::cerr << "semifl: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "semifl: " << e.what() << '\n';
        return 3;
    }
    return 3;
}
