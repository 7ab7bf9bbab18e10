#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "semifl/clustering.hpp"
#include "semifl/dataset.hpp"
#include "semifl/errors.hpp"
#include "semifl/federation.hpp"
#include "semifl/model.hpp"

namespace semifl {

/// `fixed` keeps construction order; `shuffled:<seed>` permutes each cluster once.
struct cluster_order {
    std::optional<std::uint64_t> shuffle_seed;

    std::string str() const { return shuffle_seed ? "shuffled:" + std::to_string(*shuffle_seed) : "fixed"; }
};

/// `mnist` or `synthetic:<classes>x<per_class>[@<seed>]`.
struct dataset_source {
    bool synthetic = false;
    std::size_t classes = 10;
    std::size_t per_class = 100;
    std::uint64_t seed = 1;

    std::string str() const {
        if (!synthetic) return "mnist";
        return "synthetic:" + std::to_string(classes) + "x" + std::to_string(per_class) + "@" + std::to_string(seed);
    }
};

struct ExperimentConfig {
    dataset_source dataset;
    std::filesystem::path data_dir;
    architecture arch = architecture::cnn;
    fed_mode mode = fed_mode::semifl;
    partition_mode partition = partition_mode::noniid_shards;
    std::size_t num_clients = 100;
    std::size_t per_client = 600;
    std::string pattern = "auto"; // auto | c1..c4 | explicit
    std::filesystem::path assignment_file;
    std::size_t clusters = 10;
    std::size_t clients_per_cluster = 10;
    cluster_order order;
    std::size_t rounds = 200;
    std::size_t epochs = 5;
    std::size_t batch_size = 20;
    double learning_rate = 0.01;
    double client_fraction = 1.0;
    std::size_t cl_batch_size = 200;
    std::size_t cl_epochs_per_round = 1;
    std::size_t eval_every = 5;
    std::size_t checkpoint_every = 0;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    std::filesystem::path out_dir = "runs/default";

    /// c3 for non-IID clients and c4 for IID ones unless set explicitly.
    cluster_pattern resolved_pattern() const {
        if (pattern == "auto") return partition == partition_mode::iid ? cluster_pattern::c4 : cluster_pattern::c3;
        return parse_pattern(pattern);
    }

    /// Fills data_dir from SEMIFL_DATA_DIR when unset, then checks ranges and
    /// that referenced paths exist.
    void validate() {
        if (!dataset.synthetic && data_dir.empty()) {
            if (const char* env = std::getenv("SEMIFL_DATA_DIR")) data_dir = env;
        }
        if (!dataset.synthetic) {
            if (data_dir.empty()) throw config_error("data_dir is not set and SEMIFL_DATA_DIR is empty");
            if (!std::filesystem::is_directory(data_dir)) throw config_error("data_dir " + data_dir.string() + " does not exist");
        }
        (void)resolved_pattern();
        if (resolved_pattern() == cluster_pattern::explicit_ && mode == fed_mode::semifl) {
            if (assignment_file.empty()) throw config_error("pattern = explicit requires assignment_file");
            if (!std::filesystem::exists(assignment_file))
                throw config_error("assignment_file " + assignment_file.string() + " does not exist");
        }
        federation().validate();
    }

    FederationConfig federation() const {
        FederationConfig f;
        f.rounds = rounds;
        f.mode = mode;
        f.client_fraction = client_fraction;
        f.local = {epochs, batch_size, learning_rate};
        f.eval_every = eval_every;
        f.master_seed = seed;
        f.cl_batch_size = cl_batch_size;
        f.cl_epochs_per_round = cl_epochs_per_round;
        f.threads = threads;
        return f;
    }

    PartitionPlan partition_plan() const { return {partition, num_clients, per_client, seed}; }
};

namespace detail {

template <typename U>
U parse_unsigned(const std::string& v, const std::string& where, bool allow_zero) {
    U out{};
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || p != end || v.empty() || v.front() == '-')
        throw config_error(where + ": expected a non-negative integer, got '" + v + "'");
    if (!allow_zero && out == 0) throw config_error(where + ": must be positive");
    return out;
}

inline double parse_real(const std::string& v, const std::string& where) {
    std::size_t pos = 0;
    double out = 0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != v.size() || v.empty() || !std::isfinite(out)) throw config_error(where + ": expected a number, got '" + v + "'");
    return out;
}

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace detail

inline cluster_order parse_cluster_order(const std::string& v, const std::string& where = "cluster_order") {
    if (v == "fixed") return {};
    const std::string prefix = "shuffled:";
    if (v.rfind(prefix, 0) == 0)
        return {detail::parse_unsigned<std::uint64_t>(v.substr(prefix.size()), where, true)};
    throw config_error(where + ": expected fixed or shuffled:<seed>, got '" + v + "'");
}

inline dataset_source parse_dataset_source(const std::string& v, const std::string& where = "dataset") {
    if (v == "mnist") return {};
    const std::string prefix = "synthetic:";
    if (v.rfind(prefix, 0) != 0) throw config_error(where + ": expected mnist or synthetic:<classes>x<per_class>[@seed]");
    std::string body = v.substr(prefix.size());
    dataset_source d;
    d.synthetic = true;
    if (auto at = body.find('@'); at != std::string::npos) {
        d.seed = detail::parse_unsigned<std::uint64_t>(body.substr(at + 1), where, true);
        body.erase(at);
    }
    const auto x = body.find('x');
    if (x == std::string::npos) throw config_error(where + ": expected synthetic:<classes>x<per_class>");
    d.classes = detail::parse_unsigned<std::size_t>(body.substr(0, x), where, false);
    d.per_class = detail::parse_unsigned<std::size_t>(body.substr(x + 1), where, false);
    if (d.classes > num_classes) throw config_error(where + ": at most 10 classes");
    return d;
}

/// Applies one `key = value` pair. Unknown keys are errors.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value, const std::string& where) {
    using detail::parse_real;
    using detail::parse_unsigned;
    const auto w = where + ": " + key;
    if (key == "dataset") c.dataset = parse_dataset_source(value, w);
    else if (key == "data_dir") c.data_dir = value;
    else if (key == "architecture") {
        try {
            c.arch = parse_architecture(value);
        } catch (const config_error& e) {
            throw config_error(w + ": " + e.what());
        }
    } else if (key == "mode") {
        try {
            c.mode = parse_mode(value);
        } catch (const config_error& e) {
            throw config_error(w + ": " + e.what());
        }
    } else if (key == "partition") {
        if (value == "iid") c.partition = partition_mode::iid;
        else if (value == "noniid") c.partition = partition_mode::noniid_shards;
        else throw config_error(w + ": expected iid or noniid, got '" + value + "'");
    } else if (key == "num_clients") c.num_clients = parse_unsigned<std::size_t>(value, w, false);
    else if (key == "per_client") c.per_client = parse_unsigned<std::size_t>(value, w, false);
    else if (key == "pattern") {
        if (value != "auto") {
            try {
                (void)parse_pattern(value);
            } catch (const config_error& e) {
                throw config_error(w + ": " + e.what());
            }
        }
        c.pattern = value;
    } else if (key == "assignment_file") c.assignment_file = value;
    else if (key == "clusters") c.clusters = parse_unsigned<std::size_t>(value, w, false);
    else if (key == "clients_per_cluster") c.clients_per_cluster = parse_unsigned<std::size_t>(value, w, false);
    else if (key == "cluster_order") c.order = parse_cluster_order(value, w);
    else if (key == "rounds") c.rounds = parse_unsigned<std::size_t>(value, w, false);
    else if (key == "epochs") c.epochs = parse_unsigned<std::size_t>(value, w, false);
    else if (key == "batch_size") c.batch_size = parse_unsigned<std::size_t>(value, w, false);
    else if (key == "learning_rate") {
        c.learning_rate = parse_real(value, w);
        if (c.learning_rate < 0) throw config_error(w + ": must be non-negative");
    } else if (key == "client_fraction") {
        c.client_fraction = parse_real(value, w);
        if (!(c.client_fraction > 0 && c.client_fraction <= 1)) throw config_error(w + ": must lie in (0, 1]");
    } else if (key == "cl_batch_size") c.cl_batch_size = parse_unsigned<std::size_t>(value, w, false);
    else if (key == "cl_epochs_per_round") c.cl_epochs_per_round = parse_unsigned<std::size_t>(value, w, false);
    else if (key == "eval_every") c.eval_every = parse_unsigned<std::size_t>(value, w, false);
    else if (key == "checkpoint_every") c.checkpoint_every = parse_unsigned<std::size_t>(value, w, true);
    else if (key == "seed") c.seed = parse_unsigned<std::uint64_t>(value, w, true);
    else if (key == "threads") c.threads = parse_unsigned<std::size_t>(value, w, false);
    else if (key == "out_dir") c.out_dir = value;
    else throw config_error(where + ": unknown key '" + key + "'");
}

/// Flat `key = value` text, '#' starts a comment. Missing keys keep defaults.
inline ExperimentConfig parse_config_text(std::istream& in, const std::string& origin = "<config>") {
    ExperimentConfig c;
    std::map<std::string, std::size_t> seen;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto where = origin + ":" + std::to_string(lineno);
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw config_error(where + ": expected 'key = value'");
        const auto key = detail::trim(line.substr(0, eq));
        const auto value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw config_error(where + ": missing key");
        if (auto [it, fresh] = seen.emplace(key, lineno); !fresh)
            throw config_error(where + ": duplicate key '" + key + "' (first set on line " + std::to_string(it->second) + ")");
        apply_setting(c, key, value, where);
    }
    return c;
}

inline ExperimentConfig parse_config_string(const std::string& text, const std::string& origin = "<config>") {
    std::istringstream in(text);
    return parse_config_text(in, origin);
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error(path.string() + ": cannot open config file");
    return parse_config_text(in, path.string());
}

/// Fully resolved configuration in the same key = value format.
inline std::string to_config_text(const ExperimentConfig& c) {
    std::ostringstream os;
    auto real = [](double v) {
        std::ostringstream s;
        s.precision(17);
        s << v;
        return s.str();
    };
    os << "dataset = " << c.dataset.str() << '\n';
    if (!c.data_dir.empty()) os << "data_dir = " << c.data_dir.string() << '\n';
    os << "architecture = " << to_string(c.arch) << '\n'
       << "mode = " << to_string(c.mode) << '\n'
       << "partition = " << (c.partition == partition_mode::iid ? "iid" : "noniid") << '\n'
       << "num_clients = " << c.num_clients << '\n'
       << "per_client = " << c.per_client << '\n'
       << "pattern = " << c.pattern << '\n';
    if (!c.assignment_file.empty()) os << "assignment_file = " << c.assignment_file.string() << '\n';
    os << "clusters = " << c.clusters << '\n'
       << "clients_per_cluster = " << c.clients_per_cluster << '\n'
       << "cluster_order = " << c.order.str() << '\n'
       << "rounds = " << c.rounds << '\n'
       << "epochs = " << c.epochs << '\n'
       << "batch_size = " << c.batch_size << '\n'
       << "learning_rate = " << real(c.learning_rate) << '\n'
       << "client_fraction = " << real(c.client_fraction) << '\n'
       << "cl_batch_size = " << c.cl_batch_size << '\n'
       << "cl_epochs_per_round = " << c.cl_epochs_per_round << '\n'
       << "eval_every = " << c.eval_every << '\n'
       << "checkpoint_every = " << c.checkpoint_every << '\n'
       << "seed = " << c.seed << '\n'
       << "threads = " << c.threads << '\n'
       << "out_dir = " << c.out_dir.string() << '\n';
    return os.str();
}

} // namespace semifl
