#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "semifl/dataset.hpp"
#include "semifl/errors.hpp"
#include "semifl/rng.hpp"

namespace semifl {

enum class cluster_pattern { c1, c2, c3, c4, explicit_ };

inline std::string_view to_string(cluster_pattern p) {
    switch (p) {
    case cluster_pattern::c1: return "c1";
    case cluster_pattern::c2: return "c2";
    case cluster_pattern::c3: return "c3";
    case cluster_pattern::c4: return "c4";
    case cluster_pattern::explicit_: return "explicit";
    }
    return "?";
}

inline cluster_pattern parse_pattern(std::string_view s) {
    if (s == "c1") return cluster_pattern::c1;
    if (s == "c2") return cluster_pattern::c2;
    if (s == "c3") return cluster_pattern::c3;
    if (s == "c4") return cluster_pattern::c4;
    if (s == "explicit") return cluster_pattern::explicit_;
    throw config_error("unknown clustering pattern '" + std::string(s) + "'");
}

/// Static clusters of client ids; the order inside a cluster is the
/// sequential training order.
struct ClusterAssignment {
    std::vector<std::vector<std::size_t>> clusters;
    cluster_pattern pattern = cluster_pattern::explicit_;

    std::size_t num_clusters() const noexcept { return clusters.size(); }
    std::size_t num_clients() const {
        std::size_t n = 0;
        for (const auto& c : clusters) n += c.size();
        return n;
    }

    friend bool operator==(const ClusterAssignment&, const ClusterAssignment&) = default;
};

/// One singleton cluster per client, in ascending id order.
inline ClusterAssignment singleton_clusters(std::size_t num_clients) {
    ClusterAssignment a;
    for (std::size_t k = 0; k < num_clients; ++k) a.clusters.push_back({k});
    return a;
}

namespace detail {

inline std::size_t label_space(std::span<const ClientDataset> clients) {
    std::size_t top = 0;
    for (const auto& c : clients)
        for (const auto& [l, n] : c.label_profile) top = std::max<std::size_t>(top, std::size_t{l} + 1);
    return top;
}

} // namespace detail

/// Builds c1..c4 over `clients`.
///   c1: cluster n holds `per_cluster` clients of label n
///   c2: half of label n, then the rest of label (n+1) mod L
///   c3: labels 0, 1, ... (mod L) one client each, ascending
///   c4: consecutive runs of `per_cluster` clients by id (IID clients)
/// Clients of equal label are taken in ascending id order. Every client must
/// be used exactly once.
inline ClusterAssignment build_pattern(cluster_pattern pattern, std::span<const ClientDataset> clients,
                                       std::size_t num_clusters = 10, std::size_t per_cluster = 10) {
    if (pattern == cluster_pattern::explicit_)
        throw config_error("explicit assignments are loaded from a file, not built");
    if (num_clusters == 0 || per_cluster == 0) throw config_error("cluster count and size must be positive");
    if (num_clusters * per_cluster != clients.size())
        throw clustering_error(std::to_string(num_clusters) + " clusters of " + std::to_string(per_cluster) +
                               " do not cover " + std::to_string(clients.size()) + " clients");

    ClusterAssignment out;
    out.pattern = pattern;
    out.clusters.resize(num_clusters);

    if (pattern == cluster_pattern::c4) {
        std::vector<std::size_t> ids;
        for (const auto& c : clients) ids.push_back(c.client_id);
        std::sort(ids.begin(), ids.end());
        for (std::size_t n = 0; n < num_clusters; ++n)
            out.clusters[n].assign(ids.begin() + static_cast<std::ptrdiff_t>(n * per_cluster),
                                   ids.begin() + static_cast<std::ptrdiff_t>((n + 1) * per_cluster));
        return out;
    }

    std::map<std::size_t, std::deque<std::size_t>> by_label;
    for (const auto& c : clients) {
        if (c.distinct_labels() != 1)
            throw clustering_error("pattern " + std::string(to_string(pattern)) + " needs single-label clients; client " +
                                   std::to_string(c.client_id) + " holds " + std::to_string(c.distinct_labels()) + " labels");
        by_label[c.label_profile.begin()->first].push_back(c.client_id);
    }
    for (auto& [l, q] : by_label) std::sort(q.begin(), q.end());
    const std::size_t L = detail::label_space(clients);

    // label sequence each cluster consumes, in training order
    std::vector<std::vector<std::size_t>> plan(num_clusters);
    for (std::size_t n = 0; n < num_clusters; ++n) {
        for (std::size_t j = 0; j < per_cluster; ++j) {
            std::size_t label = 0;
            switch (pattern) {
            case cluster_pattern::c1: label = n % L; break;
            case cluster_pattern::c2: label = (j < per_cluster / 2 ? n : n + 1) % L; break;
            case cluster_pattern::c3: label = j % L; break;
            default: break;
            }
            plan[n].push_back(label);
        }
    }

    std::map<std::size_t, std::size_t> demand;
    for (const auto& p : plan)
        for (auto l : p) ++demand[l];
    std::string deficit;
    for (const auto& [l, need] : demand) {
        const std::size_t have = by_label.count(l) ? by_label[l].size() : 0;
        if (have < need)
            deficit += " label " + std::to_string(l) + ": need " + std::to_string(need) + ", have " + std::to_string(have) + ";";
    }
    if (!deficit.empty())
        throw clustering_error("label inventory insufficient for pattern " + std::string(to_string(pattern)) + ":" + deficit);

    for (std::size_t n = 0; n < num_clusters; ++n)
        for (auto l : plan[n]) {
            out.clusters[n].push_back(by_label[l].front());
            by_label[l].pop_front();
        }
    return out;
}

/// Returns a description of every violated property; empty means the
/// assignment is disjoint, covers all clients and matches its pattern.
inline std::vector<std::string> validate(const ClusterAssignment& a, std::span<const ClientDataset> clients) {
    std::vector<std::string> out;
    std::map<std::size_t, const ClientDataset*> by_id;
    for (const auto& c : clients) by_id[c.client_id] = &c;

    std::map<std::size_t, std::size_t> seen_in;
    for (std::size_t n = 0; n < a.clusters.size(); ++n) {
        if (a.clusters[n].empty()) out.push_back("cluster " + std::to_string(n) + " is empty");
        for (auto id : a.clusters[n]) {
            if (!by_id.count(id)) out.push_back("cluster " + std::to_string(n) + " names unknown client " + std::to_string(id));
            auto [it, fresh] = seen_in.try_emplace(id, n);
            if (!fresh)
                out.push_back("client " + std::to_string(id) + " appears in clusters " + std::to_string(it->second) + " and " +
                              std::to_string(n));
        }
    }
    for (const auto& [id, c] : by_id)
        if (!seen_in.count(id)) out.push_back("client " + std::to_string(id) + " is not assigned");

    const std::size_t L = detail::label_space(clients);
    for (std::size_t n = 0; n < a.clusters.size(); ++n) {
        std::set<std::size_t> labels;
        for (auto id : a.clusters[n])
            if (by_id.count(id))
                for (const auto& [l, cnt] : by_id[id]->label_profile) labels.insert(l);
        const auto tag = std::string(to_string(a.pattern));
        const auto where = "cluster " + std::to_string(n) + " (" + tag + ")";
        switch (a.pattern) {
        case cluster_pattern::c1:
            if (labels.size() != 1) out.push_back(where + " covers " + std::to_string(labels.size()) + " labels, expected 1");
            break;
        case cluster_pattern::c2:
            if (labels.size() != 2 || !(labels.count(n % L) && labels.count((n + 1) % L)))
                out.push_back(where + " must cover exactly labels " + std::to_string(n % L) + " and " + std::to_string((n + 1) % L));
            break;
        case cluster_pattern::c3: {
            const auto want = std::min(L, a.clusters[n].size());
            if (labels.size() != want)
                out.push_back(where + " covers " + std::to_string(labels.size()) + " labels, expected " + std::to_string(want));
            break;
        }
        default: break;
        }
    }
    return out;
}

/// Shuffles the in-cluster order of every cluster with a seeded stream.
inline ClusterAssignment shuffle_order(ClusterAssignment a, std::uint64_t seed) {
    for (std::size_t n = 0; n < a.clusters.size(); ++n) {
        auto rng = make_stream({seed, 0xc1u, n});
        shuffle(std::span<std::size_t>(a.clusters[n]), rng);
    }
    return a;
}

/// Plain-text form: one line per cluster, space-separated client ids.
/// Blank lines and '#' comments are ignored.
inline ClusterAssignment parse_assignment(std::istream& in, const std::string& origin = "<assignment>") {
    ClusterAssignment a;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::vector<std::size_t> cluster;
        std::string tok;
        while (ls >> tok) {
            std::size_t pos = 0;
            unsigned long long v = 0;
            try {
                v = std::stoull(tok, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos != tok.size() || tok.front() == '-')
                throw config_error(origin + ":" + std::to_string(lineno) + ": bad client id '" + tok + "'");
            cluster.push_back(static_cast<std::size_t>(v));
        }
        if (!cluster.empty()) a.clusters.push_back(std::move(cluster));
    }
    if (a.clusters.empty()) throw config_error(origin + ": no clusters");
    return a;
}

inline ClusterAssignment load_assignment(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error(path.string() + ": cannot open assignment file");
    return parse_assignment(in, path.string());
}

inline void write_assignment(std::ostream& os, const ClusterAssignment& a) {
    for (const auto& c : a.clusters) {
        for (std::size_t i = 0; i < c.size(); ++i) os << (i ? " " : "") << c[i];
        os << '\n';
    }
}

} // namespace semifl
