#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "semifl/checkpoint.hpp"
#include "semifl/clustering.hpp"
#include "semifl/dataset.hpp"
#include "semifl/errors.hpp"
#include "semifl/model.hpp"
#include "semifl/nn.hpp"
#include "semifl/rng.hpp"

namespace semifl {

enum class fed_mode { cl, fl, semifl };

inline std::string_view to_string(fed_mode m) {
    switch (m) {
    case fed_mode::cl: return "cl";
    case fed_mode::fl: return "fl";
    case fed_mode::semifl: return "semifl";
    }
    return "?";
}

inline fed_mode parse_mode(std::string_view s) {
    if (s == "cl") return fed_mode::cl;
    if (s == "fl") return fed_mode::fl;
    if (s == "semifl") return fed_mode::semifl;
    throw config_error("unknown mode '" + std::string(s) + "' (expected cl, fl or semifl)");
}

struct FederationConfig {
    std::size_t rounds = 200;
    fed_mode mode = fed_mode::semifl;
    double client_fraction = 1.0; // fl only
    LocalTrainConfig local;
    ClusterAssignment assignment; // semifl only
    std::size_t eval_every = 5;
    std::uint64_t master_seed = 1;
    std::size_t cl_batch_size = 200;
    std::size_t cl_epochs_per_round = 1;
    std::size_t threads = 1;

    void validate() const {
        if (rounds == 0) throw config_error("rounds must be positive");
        if (!(client_fraction > 0.0 && client_fraction <= 1.0)) throw config_error("client_fraction must lie in (0, 1]");
        if (eval_every == 0) throw config_error("eval_every must be positive");
        if (cl_batch_size == 0 || cl_epochs_per_round == 0) throw config_error("cl batch size and epochs must be positive");
        local.validate();
    }
};

struct RoundRecord {
    std::size_t round = 0;
    fed_mode mode = fed_mode::semifl;
    std::string pattern;
    double test_accuracy = std::numeric_limits<double>::quiet_NaN();
    double train_loss = 0.0;
    std::uint64_t uplink_models = 0;
    std::uint64_t uplink_bytes = 0;
    std::uint64_t downlink_models = 0;
    double elapsed_ms = 0.0;
};

/// Per-round model traffic.
class CommLedger {
public:
    struct entry {
        std::size_t round;
        std::uint64_t uplink_models, uplink_bytes, downlink_models;
    };

    void record(const RoundRecord& r) { entries_.push_back({r.round, r.uplink_models, r.uplink_bytes, r.downlink_models}); }
    const std::vector<entry>& entries() const noexcept { return entries_; }

    std::uint64_t total_uplink_models() const {
        std::uint64_t n = 0;
        for (const auto& e : entries_) n += e.uplink_models;
        return n;
    }
    std::uint64_t total_uplink_bytes() const {
        std::uint64_t n = 0;
        for (const auto& e : entries_) n += e.uplink_bytes;
        return n;
    }

private:
    std::vector<entry> entries_;
};

/// Number of model uploads per round: round(C*K) (at least one) for FedAvg,
/// one head per cluster for Semi-FL, none for centralized training.
inline std::uint64_t uplink_models(fed_mode mode, std::size_t num_clients, double fraction, std::size_t num_clusters) {
    switch (mode) {
    case fed_mode::fl:
        return static_cast<std::uint64_t>(
            std::max<long long>(1, std::llround(fraction * static_cast<double>(num_clients))));
    case fed_mode::semifl: return num_clusters;
    case fed_mode::cl: return 0;
    }
    return 0;
}

inline std::uint64_t uplink_cost(fed_mode mode, std::size_t num_clients, double fraction, std::size_t num_clusters,
                                 std::uint64_t model_bytes) {
    return uplink_models(mode, num_clients, fraction, num_clusters) * model_bytes;
}

template <typename T>
struct FederationState {
    ModelParams<T> global;
    std::size_t round = 0; // completed rounds
};

template <typename T>
struct RoundResult {
    ModelParams<T> global;
    RoundRecord record;
};

/// Training stream of one client in one round. Keyed by client id only, so
/// a client draws the same stream whichever cluster or driver runs it.
inline rng_stream client_stream(std::uint64_t master_seed, std::size_t round, std::size_t client_id) {
    return make_stream({master_seed, 0xc11e47ULL, round, client_id});
}

inline rng_stream sampling_stream(std::uint64_t master_seed, std::size_t round) {
    return make_stream({master_seed, 0x5a3b1eULL, round});
}

/// Execution plan for the independent units (clusters or FL clients) of a
/// round. Results never depend on it.
struct schedule_options {
    std::size_t threads = 1;
    std::vector<std::size_t> order; // permutation of unit indices; empty = ascending
};

namespace detail {

template <typename F>
void run_units(std::size_t n, const schedule_options& sched, F&& fn) {
    std::vector<std::size_t> order = sched.order;
    if (order.empty()) {
        order.resize(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
    }
    if (order.size() != n) throw internal_error("schedule order does not cover all units");
    std::vector<std::exception_ptr> errors(n);
    auto guarded = [&](std::size_t i) {
        try {
            fn(i);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    const std::size_t threads = std::min(std::max<std::size_t>(sched.threads, 1), n);
    if (threads <= 1) {
        for (auto i : order) guarded(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < threads; ++w)
            pool.emplace_back([&] {
                for (std::size_t j; (j = next.fetch_add(1)) < n;) guarded(order[j]);
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

template <typename T>
struct wider {
    using type = long double;
};
template <>
struct wider<float> {
    using type = double;
};

inline std::map<std::size_t, const ClientDataset*> index_clients(std::span<const ClientDataset> clients) {
    std::map<std::size_t, const ClientDataset*> m;
    for (const auto& c : clients)
        if (!m.emplace(c.client_id, &c).second) throw config_error("duplicate client id " + std::to_string(c.client_id));
    return m;
}

inline double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

/// Element-wise mean. Sums in a wider type in ascending list order, then
/// divides once; a list of identical models therefore averages to itself.
template <typename T>
ModelParams<T> aggregate_mean(std::span<const ModelParams<T>> heads) {
    if (heads.empty()) throw internal_error("aggregate_mean: no models");
    using acc_t = typename detail::wider<T>::type;
    ModelParams<T> out = heads.front();
    for (const auto& h : heads) require_same_layout(out, h, "aggregate_mean");
    const auto n = static_cast<acc_t>(heads.size());
    std::vector<acc_t> acc;
    for (std::size_t li = 0; li < out.layers().size(); ++li) {
        auto reduce = [&](auto member) {
            Tensor<T>& dst = out.at(li).*member;
            acc.assign(dst.size(), acc_t{0});
            for (const auto& h : heads) {
                const Tensor<T>& src = h.at(li).*member;
                for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += static_cast<acc_t>(src[j]);
            }
            for (std::size_t j = 0; j < acc.size(); ++j) dst[j] = static_cast<T>(acc[j] / n);
        };
        reduce(&layer<T>::weights);
        reduce(&layer<T>::bias);
    }
    return out;
}

template <typename T>
ModelParams<T> aggregate_mean(const std::vector<ModelParams<T>>& heads) {
    return aggregate_mean(std::span<const ModelParams<T>>(heads));
}

/// Sequential in-cluster training: the first client starts from `global`,
/// each later client from its predecessor's output; the last output is the
/// cluster head.
template <typename T>
ModelParams<T> train_cluster_sequential(const ModelParams<T>& global, std::span<const ClientDataset* const> cluster,
                                        const LocalTrainConfig& cfg, std::uint64_t master_seed, std::size_t round,
                                        train_stats* stats = nullptr) {
    if (cluster.empty()) throw config_error("cannot train an empty cluster");
    ModelParams<T> model = global;
    for (const auto* client : cluster) {
        auto rng = client_stream(master_seed, round, client->client_id);
        model = train_local(std::move(model), client->examples, cfg, rng, stats);
    }
    return model;
}

/// One Semi-FL round: every cluster trains from the same snapshot, the heads
/// are averaged.
template <typename T>
RoundResult<T> run_round_semifl(const FederationState<T>& state, std::span<const ClientDataset> clients,
                                const FederationConfig& cfg, const schedule_options& sched = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& clusters = cfg.assignment.clusters;
    if (clusters.empty()) throw config_error("semifl round needs a cluster assignment");
    const auto by_id = detail::index_clients(clients);
    const std::size_t round = state.round + 1;

    std::vector<std::vector<const ClientDataset*>> members(clusters.size());
    std::size_t participants = 0;
    for (std::size_t n = 0; n < clusters.size(); ++n) {
        for (auto id : clusters[n]) {
            auto it = by_id.find(id);
            if (it == by_id.end())
                throw config_error("cluster " + std::to_string(n) + ": unknown client " + std::to_string(id));
            members[n].push_back(it->second);
        }
        participants += members[n].size();
    }

    std::vector<ModelParams<T>> heads(clusters.size());
    std::vector<train_stats> stats(clusters.size());
    detail::run_units(clusters.size(), sched, [&](std::size_t n) {
        try {
            heads[n] = train_cluster_sequential(state.global, std::span<const ClientDataset* const>(members[n]), cfg.local,
                                                cfg.master_seed, round, &stats[n]);
        } catch (const error&) {
            rethrow_with_context("cluster " + std::to_string(n) + ": ");
        }
    });

    RoundResult<T> out{aggregate_mean(heads), {}};
    train_stats total;
    for (const auto& s : stats) total.merge(s);
    auto& r = out.record;
    r.round = round;
    r.mode = fed_mode::semifl;
    r.pattern = std::string(to_string(cfg.assignment.pattern));
    r.train_loss = total.mean_loss();
    r.uplink_models = clusters.size();
    r.uplink_bytes = r.uplink_models * serialized_size(out.global);
    r.downlink_models = participants;
    r.elapsed_ms = detail::ms_since(t0);
    return out;
}

/// Uniform sample without replacement of max(1, round(C*K)) client ids,
/// returned in ascending order.
inline std::vector<std::size_t> sample_clients(std::span<const std::size_t> ids, double fraction, rng_stream& rng) {
    std::vector<std::size_t> pool(ids.begin(), ids.end());
    const auto m = static_cast<std::size_t>(uplink_models(fed_mode::fl, pool.size(), fraction, 0));
    for (std::size_t i = 0; i < m; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(rng, pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(m);
    std::sort(pool.begin(), pool.end());
    return pool;
}

/// One FedAvg round: sampled clients train from the snapshot, their models
/// are averaged without weighting, in ascending client id order.
template <typename T>
RoundResult<T> run_round_fedavg(const FederationState<T>& state, std::span<const ClientDataset> clients,
                                const FederationConfig& cfg, const schedule_options& sched = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!(cfg.client_fraction > 0.0 && cfg.client_fraction <= 1.0)) throw config_error("client_fraction must lie in (0, 1]");
    if (clients.empty()) throw config_error("fedavg round needs clients");
    const auto by_id = detail::index_clients(clients);
    const std::size_t round = state.round + 1;

    std::vector<std::size_t> ids;
    for (const auto& [id, c] : by_id) ids.push_back(id);
    auto rng = sampling_stream(cfg.master_seed, round);
    const auto chosen = sample_clients(ids, cfg.client_fraction, rng);

    std::vector<ModelParams<T>> locals(chosen.size());
    std::vector<train_stats> stats(chosen.size());
    detail::run_units(chosen.size(), sched, [&](std::size_t i) {
        const auto* client = by_id.at(chosen[i]);
        auto crng = client_stream(cfg.master_seed, round, client->client_id);
        locals[i] = train_local(state.global, client->examples, cfg.local, crng, &stats[i]);
    });

    RoundResult<T> out{aggregate_mean(locals), {}};
    train_stats total;
    for (const auto& s : stats) total.merge(s);
    auto& r = out.record;
    r.round = round;
    r.mode = fed_mode::fl;
    r.pattern = "-";
    r.train_loss = total.mean_loss();
    r.uplink_models = chosen.size();
    r.uplink_bytes = r.uplink_models * serialized_size(out.global);
    r.downlink_models = chosen.size();
    r.elapsed_ms = detail::ms_since(t0);
    return out;
}

/// All client data pooled in ascending client id order.
inline LabeledSet pool_clients(std::span<const ClientDataset> clients) {
    std::vector<const ClientDataset*> sorted;
    for (const auto& c : clients) sorted.push_back(&c);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->client_id < b->client_id; });
    std::vector<const LabeledSet*> parts;
    for (const auto* c : sorted) parts.push_back(&c->examples);
    return concatenate(parts);
}

/// One centralized round: `cl_epochs_per_round` epochs of mini-batch SGD
/// over the pool with the centralized batch size.
template <typename T>
RoundResult<T> run_round_cl(const FederationState<T>& state, const LabeledSet& pool, const FederationConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t round = state.round + 1;
    LocalTrainConfig cl{cfg.cl_epochs_per_round, cfg.cl_batch_size, cfg.local.learning_rate};
    auto rng = make_stream({cfg.master_seed, 0xce17ULL, round});
    train_stats stats;
    RoundResult<T> out{train_local(state.global, pool, cl, rng, &stats), {}};
    auto& r = out.record;
    r.round = round;
    r.mode = fed_mode::cl;
    r.pattern = "-";
    r.train_loss = stats.mean_loss();
    r.elapsed_ms = detail::ms_since(t0);
    return out;
}

/// Per-round callback; the model passed is the new global.
template <typename T>
using round_observer = std::function<void(const ModelParams<T>&, RoundRecord&)>;

template <typename T>
RoundResult<T> run_round(const FederationState<T>& state, std::span<const ClientDataset> clients, const LabeledSet* pool,
                         const FederationConfig& cfg, const schedule_options& sched = {}) {
    switch (cfg.mode) {
    case fed_mode::semifl: return run_round_semifl(state, clients, cfg, sched);
    case fed_mode::fl: return run_round_fedavg(state, clients, cfg, sched);
    case fed_mode::cl:
        if (!pool) throw internal_error("centralized round needs the pooled dataset");
        return run_round_cl(state, *pool, cfg);
    }
    throw internal_error("unreachable mode");
}

template <typename T>
struct RunResult {
    ModelParams<T> model;
    std::vector<RoundRecord> records;
    CommLedger ledger;
};

/// Runs `cfg.rounds` rounds of the configured mode from `initial`.
template <typename T>
RunResult<T> run_federation(ModelParams<T> initial, std::span<const ClientDataset> clients, const FederationConfig& cfg,
                            const round_observer<T>& observe = {}, const schedule_options& sched = {}) {
    cfg.validate();
    std::optional<LabeledSet> pool;
    if (cfg.mode == fed_mode::cl) pool = pool_clients(clients);
    FederationState<T> state{std::move(initial), 0};
    RunResult<T> out;
    for (std::size_t t = 0; t < cfg.rounds; ++t) {
        auto step = run_round(state, clients, pool ? &*pool : nullptr, cfg, sched);
        state.global = std::move(step.global);
        state.round = step.record.round;
        if (observe) observe(state.global, step.record);
        out.ledger.record(step.record);
        out.records.push_back(std::move(step.record));
    }
    out.model = std::move(state.global);
    return out;
}

/// Centralized baseline over the union of all client data.
template <typename T>
RunResult<T> run_cl(ModelParams<T> initial, std::span<const ClientDataset> clients, FederationConfig cfg,
                    const round_observer<T>& observe = {}) {
    cfg.mode = fed_mode::cl;
    return run_federation(std::move(initial), clients, cfg, observe);
}

} // namespace semifl
