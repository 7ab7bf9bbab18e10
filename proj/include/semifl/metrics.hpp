#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "semifl/dataset.hpp"
#include "semifl/errors.hpp"
#include "semifl/model.hpp"
#include "semifl/nn.hpp"
#include "semifl/tensor.hpp"

namespace semifl {

/// Fraction of examples whose argmax logit equals the label; ties go to the
/// lowest class index.
template <typename T>
double evaluate_accuracy(const ModelParams<T>& model, const LabeledSet& test, std::size_t chunk = 500) {
    if (test.size() == 0) throw input_error("evaluate_accuracy: empty test set");
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < test.size(); start += chunk) {
        const std::size_t end = std::min(test.size(), start + chunk);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const auto batch = make_batch<T>(test, idx, model.topo());
        const auto logits = forward(model, batch);
        const std::size_t C = model.topo().classes;
        for (std::size_t r = 0; r < batch.size(); ++r) {
            const T* row = logits.raw() + r * C;
            const auto best = static_cast<std::size_t>(std::max_element(row, row + C) - row);
            if (best == batch.labels[r]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

/// Rank-3 view used by the cosine metrics: conv (out, in, kh, kw) becomes
/// (out, in, kh*kw); fc (out, in) becomes (1, out, in); vectors (1, 1, n).
template <typename T>
Tensor<T> fiber_view(const Tensor<T>& w) {
    const auto& s = w.shape();
    switch (s.size()) {
    case 1: return w.reshaped({1, 1, s[0]});
    case 2: return w.reshaped({1, s[0], s[1]});
    case 3: return w;
    case 4: return w.reshaped({s[0], s[1], s[2] * s[3]});
    default: throw input_error("fiber_view: unsupported rank " + std::to_string(s.size()));
    }
}

/// Cosine similarity along the last axis of two (d1, d2, d3) tensors:
/// <a, b> / max(|a| |b|, eps) per fiber, shape (d1, d2). Computed in 64-bit.
template <typename T>
Tensor<double> cosine_map(const Tensor<T>& w1, const Tensor<T>& w2, double eps = 1e-8) {
    if (w1.shape() != w2.shape())
        throw input_error("cosine_map: shape mismatch " + to_string(w1.shape()) + " vs " + to_string(w2.shape()));
    if (w1.rank() != 3) throw input_error("cosine_map: expected rank-3 tensors, got " + to_string(w1.shape()));
    const std::size_t d1 = w1.dim(0), d2 = w1.dim(1), d3 = w1.dim(2);
    Tensor<double> out({d1, d2});
    for (std::size_t f = 0; f < d1 * d2; ++f) {
        double dot = 0.0, n1 = 0.0, n2 = 0.0;
        for (std::size_t k = 0; k < d3; ++k) {
            const double a = static_cast<double>(w1[f * d3 + k]);
            const double b = static_cast<double>(w2[f * d3 + k]);
            dot += a * b;
            n1 += a * a;
            n2 += b * b;
        }
        out[f] = dot / std::max(std::sqrt(n1) * std::sqrt(n2), eps);
    }
    return out;
}

/// Averaged cosine similarity: mean of cosine_map over all d1*d2 fibers.
template <typename T>
double acs(const Tensor<T>& w1, const Tensor<T>& w2, double eps = 1e-8) {
    const auto map = cosine_map(w1, w2, eps);
    double s = 0.0;
    for (auto v : map.data()) s += v;
    return s / static_cast<double>(map.size());
}

/// Relative Euclidean distance |w1 - w2| / |w2| over the flattened tensors.
/// Not symmetric: w2 is the reference.
template <typename T>
double red(const Tensor<T>& w1, const Tensor<T>& w2_ref) {
    if (w1.size() != w2_ref.size() || w1.shape() != w2_ref.shape())
        throw input_error("red: shape mismatch " + to_string(w1.shape()) + " vs " + to_string(w2_ref.shape()));
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < w1.size(); ++i) {
        const double d = static_cast<double>(w1[i]) - static_cast<double>(w2_ref[i]);
        diff += d * d;
        ref += static_cast<double>(w2_ref[i]) * static_cast<double>(w2_ref[i]);
    }
    if (!(ref > 0.0)) throw metric_error("red: reference tensor has zero norm");
    return std::sqrt(diff) / std::sqrt(ref);
}

struct DivergenceEntry {
    std::string layer;
    double acs = 0.0;
    double red = 0.0;
};

struct DivergenceReport {
    std::string subject_id;
    std::string reference_id;
    std::vector<DivergenceEntry> entries;
};

/// Per-layer ACS and RED on weight tensors (biases excluded), in layer order.
template <typename T>
DivergenceReport layer_divergence(const ModelParams<T>& subject, const ModelParams<T>& reference,
                                  std::string subject_id = "subject", std::string reference_id = "reference") {
    if (subject.arch() != reference.arch())
        throw input_error("layer_divergence: architecture mismatch (" + std::string(to_string(subject.arch())) + " vs " +
                          std::string(to_string(reference.arch())) + ")");
    if (!same_layout(subject, reference)) throw input_error("layer_divergence: layer shapes differ");
    DivergenceReport rep{std::move(subject_id), std::move(reference_id), {}};
    for (std::size_t i = 0; i < subject.layers().size(); ++i) {
        const auto& ws = subject.at(i).weights;
        const auto& wr = reference.at(i).weights;
        rep.entries.push_back({subject.at(i).name, acs(fiber_view(ws), fiber_view(wr)), red(ws, wr)});
    }
    return rep;
}

inline void write_divergence_csv(std::ostream& os, const DivergenceReport& rep) {
    os << "# subject=" << rep.subject_id << " reference=" << rep.reference_id << '\n';
    os << "layer,acs,red\n";
    char buf[128];
    for (const auto& e : rep.entries) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g", e.acs, e.red);
        os << e.layer << ',' << buf << '\n';
    }
}

inline void write_divergence_csv(const std::filesystem::path& path, const DivergenceReport& rep) {
    std::ofstream out(path);
    if (!out) throw internal_error(path.string() + ": cannot write divergence report");
    write_divergence_csv(out, rep);
}

} // namespace semifl
