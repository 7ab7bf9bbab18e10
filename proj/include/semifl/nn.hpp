#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "semifl/dataset.hpp"
#include "semifl/errors.hpp"
#include "semifl/model.hpp"
#include "semifl/rng.hpp"
#include "semifl/tensor.hpp"

namespace semifl {

/// Inputs are (B, input) for the mlp and (B, 1, image, image) for the cnn.
template <typename T>
struct Batch {
    Tensor<T> inputs;
    std::vector<std::uint8_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
};

struct LocalTrainConfig {
    std::size_t epochs = 5;
    std::size_t batch_size = 20;
    double learning_rate = 0.01;

    void validate() const {
        if (epochs == 0) throw config_error("local epochs must be positive");
        if (batch_size == 0) throw config_error("local batch size must be positive");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw config_error("learning rate must be a finite non-negative number");
    }
};

/// relu = false turns every ReLU into the identity; used to probe the
/// gradient checker in a smooth regime.
struct net_options {
    bool relu = true;
};

template <typename T>
Batch<T> make_batch(const LabeledSet& set, std::span<const std::size_t> indices, const topology& topo) {
    if (indices.empty()) throw input_error("batch must hold at least one example");
    const std::size_t px = set.pixels_per_image();
    std::vector<T> data(indices.size() * px);
    std::vector<std::uint8_t> labels(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = indices[i];
        std::transform(set.images.raw() + src * px, set.images.raw() + (src + 1) * px, data.begin() + static_cast<std::ptrdiff_t>(i * px),
                       [](float v) { return static_cast<T>(v); });
        labels[i] = set.labels[src];
    }
    shape_t shape;
    if (topo.arch == architecture::mlp) {
        shape = {indices.size(), px};
    } else {
        shape = set.images.shape();
        shape[0] = indices.size();
    }
    return {Tensor<T>(std::move(shape), std::move(data)), std::move(labels)};
}

template <typename T>
Batch<T> make_batch(const LabeledSet& set, const topology& topo) {
    std::vector<std::size_t> all(set.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return make_batch<T>(set, all, topo);
}

template <typename U, typename T>
Batch<U> cast_batch(const Batch<T>& b) {
    return {b.inputs.template cast<U>(), b.labels};
}

namespace detail {

// Eight fixed accumulation lanes; summation order is independent of the
// call site, which keeps every code path bit-reproducible.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
    T acc[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
    T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

template <typename T>
void axpy(T a, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Y[r, o] = <X[r, :], W[o, :]> + b[o]
template <typename T>
void dense_forward(const T* X, std::size_t rows, std::size_t in, const T* W, const T* b, std::size_t out, T* Y) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out; ++o) Y[r * out + o] = dot(X + r * in, W + o * in, in) + b[o];
}

// dW += dY^T X, db += column sums of dY, dX = dY W (when dX is non-null).
template <typename T>
void dense_backward(const T* X, std::size_t rows, std::size_t in, const T* W, std::size_t out, const T* dY, T* dW, T* db,
                    T* dX) {
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < out; ++o) {
            const T g = dY[r * out + o];
            if (g == T{0}) continue;
            axpy(g, X + r * in, dW + o * in, in);
            db[o] += g;
            if (dX) axpy(g, W + o * in, dX + r * in, in);
        }
    }
}

template <typename T>
void activate(std::span<const T> z, std::span<T> a, bool relu) {
    for (std::size_t i = 0; i < z.size(); ++i) a[i] = (!relu || z[i] > T{0}) ? z[i] : T{0};
}

template <typename T>
void activate_backward(std::span<const T> z, std::span<T> d, bool relu) {
    if (!relu) return;
    for (std::size_t i = 0; i < z.size(); ++i)
        if (!(z[i] > T{0})) d[i] = T{0};
}

// im2col for a channel-last map (side x side x ch) and a k x k valid window.
// Row p = y * out + x; column = c * k * k + ky * k + kx (matches weight layout).
template <typename T>
void im2col(const T* in, std::size_t side, std::size_t ch, std::size_t k, T* cols) {
    const std::size_t out = side - k + 1;
    const std::size_t width = ch * k * k;
    for (std::size_t y = 0; y < out; ++y)
        for (std::size_t x = 0; x < out; ++x) {
            T* row = cols + (y * out + x) * width;
            for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx) row[c * k * k + ky * k + kx] = in[((y + ky) * side + (x + kx)) * ch + c];
        }
}

template <typename T>
void col2im_add(const T* cols, std::size_t side, std::size_t ch, std::size_t k, T* d_in) {
    const std::size_t out = side - k + 1;
    const std::size_t width = ch * k * k;
    for (std::size_t y = 0; y < out; ++y)
        for (std::size_t x = 0; x < out; ++x) {
            const T* row = cols + (y * out + x) * width;
            for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx) d_in[((y + ky) * side + (x + kx)) * ch + c] += row[c * k * k + ky * k + kx];
        }
}

// 2x2 stride-2 max pool over a channel-last map; records the winning source
// offset (first maximum in row-major window order).
template <typename T>
void maxpool2(const T* in, std::size_t side, std::size_t ch, T* out, std::uint32_t* arg) {
    const std::size_t o = side / 2;
    for (std::size_t y = 0; y < o; ++y)
        for (std::size_t x = 0; x < o; ++x)
            for (std::size_t c = 0; c < ch; ++c) {
                std::size_t best = ((2 * y) * side + 2 * x) * ch + c;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t src = ((2 * y + dy) * side + (2 * x + dx)) * ch + c;
                        if (in[src] > in[best]) best = src;
                    }
                out[(y * o + x) * ch + c] = in[best];
                arg[(y * o + x) * ch + c] = static_cast<std::uint32_t>(best);
            }
}

template <typename T>
struct cnn_trace {
    std::size_t batch = 0;
    std::vector<T> cols1, z1, a1, p1, cols2, z2, a2, p2, flat, z3, a3, logits;
    std::vector<std::uint32_t> arg1, arg2;
};

template <typename T>
struct mlp_trace {
    std::vector<T> z1, a1, logits;
};

template <typename T>
void check_input(const ModelParams<T>& model, const Batch<T>& batch) {
    const auto& topo = model.topo();
    const auto& s = batch.inputs.shape();
    if (batch.size() == 0) throw input_error("empty batch");
    bool ok;
    if (topo.arch == architecture::mlp)
        ok = s.size() == 2 && s[0] == batch.size() && s[1] == topo.input;
    else
        ok = s.size() == 4 && s[0] == batch.size() && s[1] == 1 && s[2] == topo.image && s[3] == topo.image;
    if (!ok)
        throw input_error("input shape " + to_string(s) + " does not match " + std::string(to_string(topo.arch)) +
                          " model with " + std::to_string(batch.size()) + " labels");
    for (auto l : batch.labels)
        if (l >= topo.classes) throw input_error("label " + std::to_string(l) + " outside class range");
}

template <typename T>
mlp_trace<T> mlp_forward(const ModelParams<T>& m, const Batch<T>& batch, const net_options& opt) {
    const auto& t = m.topo();
    const std::size_t B = batch.size();
    mlp_trace<T> tr;
    tr.z1.resize(B * t.hidden);
    tr.a1.resize(B * t.hidden);
    tr.logits.resize(B * t.classes);
    dense_forward(batch.inputs.raw(), B, t.input, m.at(0).weights.raw(), m.at(0).bias.raw(), t.hidden, tr.z1.data());
    activate<T>(tr.z1, tr.a1, opt.relu);
    dense_forward(tr.a1.data(), B, t.hidden, m.at(1).weights.raw(), m.at(1).bias.raw(), t.classes, tr.logits.data());
    return tr;
}

template <typename T>
cnn_trace<T> cnn_forward(const ModelParams<T>& m, const Batch<T>& batch, const net_options& opt) {
    const auto& t = m.topo();
    const std::size_t B = batch.size(), k = t.kernel;
    const std::size_t s1 = t.conv1_out(), q1 = t.pool1_out(), s2 = t.conv2_out(), q2 = t.pool2_out();
    const std::size_t K1 = k * k, K2 = t.conv1 * k * k;
    cnn_trace<T> tr;
    tr.batch = B;
    tr.cols1.resize(B * s1 * s1 * K1);
    tr.z1.resize(B * s1 * s1 * t.conv1);
    tr.a1.resize(tr.z1.size());
    tr.p1.resize(B * q1 * q1 * t.conv1);
    tr.arg1.resize(tr.p1.size());
    tr.cols2.resize(B * s2 * s2 * K2);
    tr.z2.resize(B * s2 * s2 * t.conv2);
    tr.a2.resize(tr.z2.size());
    tr.p2.resize(B * q2 * q2 * t.conv2);
    tr.arg2.resize(tr.p2.size());
    tr.flat.resize(B * t.flat());
    tr.z3.resize(B * t.fc_hidden);
    tr.a3.resize(tr.z3.size());
    tr.logits.resize(B * t.classes);

    const std::size_t img = t.image * t.image;
    for (std::size_t b = 0; b < B; ++b) {
        T* cols1 = tr.cols1.data() + b * s1 * s1 * K1;
        T* z1 = tr.z1.data() + b * s1 * s1 * t.conv1;
        T* a1 = tr.a1.data() + b * s1 * s1 * t.conv1;
        T* p1 = tr.p1.data() + b * q1 * q1 * t.conv1;
        T* cols2 = tr.cols2.data() + b * s2 * s2 * K2;
        T* z2 = tr.z2.data() + b * s2 * s2 * t.conv2;
        T* a2 = tr.a2.data() + b * s2 * s2 * t.conv2;
        T* p2 = tr.p2.data() + b * q2 * q2 * t.conv2;

        im2col(batch.inputs.raw() + b * img, t.image, 1, k, cols1);
        dense_forward(cols1, s1 * s1, K1, m.at(0).weights.raw(), m.at(0).bias.raw(), t.conv1, z1);
        activate<T>({z1, s1 * s1 * t.conv1}, {a1, s1 * s1 * t.conv1}, opt.relu);
        maxpool2(a1, s1, t.conv1, p1, tr.arg1.data() + b * q1 * q1 * t.conv1);

        im2col(p1, q1, t.conv1, k, cols2);
        dense_forward(cols2, s2 * s2, K2, m.at(1).weights.raw(), m.at(1).bias.raw(), t.conv2, z2);
        activate<T>({z2, s2 * s2 * t.conv2}, {a2, s2 * s2 * t.conv2}, opt.relu);
        maxpool2(a2, s2, t.conv2, p2, tr.arg2.data() + b * q2 * q2 * t.conv2);

        // flatten channel-major: (c, y, x)
        T* flat = tr.flat.data() + b * t.flat();
        for (std::size_t c = 0; c < t.conv2; ++c)
            for (std::size_t p = 0; p < q2 * q2; ++p) flat[c * q2 * q2 + p] = p2[p * t.conv2 + c];
    }
    dense_forward(tr.flat.data(), B, t.flat(), m.at(2).weights.raw(), m.at(2).bias.raw(), t.fc_hidden, tr.z3.data());
    activate<T>(tr.z3, tr.a3, opt.relu);
    dense_forward(tr.a3.data(), B, t.fc_hidden, m.at(3).weights.raw(), m.at(3).bias.raw(), t.classes, tr.logits.data());
    return tr;
}

// Mean softmax cross-entropy; fills dlogits with d(mean loss)/d(logits) when given.
template <typename T>
double softmax_xent(const std::vector<T>& logits, std::span<const std::uint8_t> labels, std::size_t classes,
                    std::vector<T>* dlogits) {
    const std::size_t B = labels.size();
    if (dlogits) dlogits->assign(logits.size(), T{0});
    double total = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
        const T* z = logits.data() + r * classes;
        const T mx = *std::max_element(z, z + classes);
        T sum{0};
        for (std::size_t c = 0; c < classes; ++c) sum += std::exp(z[c] - mx);
        const T lse = mx + std::log(sum);
        total += static_cast<double>(lse - z[labels[r]]);
        if (dlogits) {
            T* d = dlogits->data() + r * classes;
            for (std::size_t c = 0; c < classes; ++c) {
                const T p = std::exp(z[c] - lse);
                d[c] = (p - (c == labels[r] ? T{1} : T{0})) / static_cast<T>(B);
            }
        }
    }
    return total / static_cast<double>(B);
}

} // namespace detail

/// Logits of shape (B, classes).
template <typename T>
Tensor<T> forward(const ModelParams<T>& model, const Batch<T>& batch, const net_options& opt = {}) {
    detail::check_input(model, batch);
    std::vector<T> logits = model.arch() == architecture::mlp ? detail::mlp_forward(model, batch, opt).logits
                                                              : detail::cnn_forward(model, batch, opt).logits;
    return Tensor<T>({batch.size(), model.topo().classes}, std::move(logits));
}

template <typename T>
double loss(const ModelParams<T>& model, const Batch<T>& batch, const net_options& opt = {}) {
    const auto logits = forward(model, batch, opt);
    return detail::softmax_xent<T>({logits.data().begin(), logits.data().end()}, batch.labels, model.topo().classes, nullptr);
}

template <typename T>
struct loss_and_gradients {
    double loss = 0.0;
    ModelParams<T> grads;
};

/// Mean cross-entropy over the batch and its gradient, shaped like the model.
template <typename T>
loss_and_gradients<T> loss_and_grads(const ModelParams<T>& model, const Batch<T>& batch, const net_options& opt = {}) {
    detail::check_input(model, batch);
    const auto& t = model.topo();
    const std::size_t B = batch.size();
    loss_and_gradients<T> out;
    out.grads = model.zeros_like();
    auto& g = out.grads;
    std::vector<T> dlogits;

    if (t.arch == architecture::mlp) {
        auto tr = detail::mlp_forward(model, batch, opt);
        out.loss = detail::softmax_xent(tr.logits, batch.labels, t.classes, &dlogits);
        std::vector<T> da1(B * t.hidden, T{0});
        detail::dense_backward(tr.a1.data(), B, t.hidden, model.at(1).weights.raw(), t.classes, dlogits.data(),
                               g.at(1).weights.raw(), g.at(1).bias.raw(), da1.data());
        detail::activate_backward<T>(tr.z1, da1, opt.relu);
        detail::dense_backward(batch.inputs.raw(), B, t.input, model.at(0).weights.raw(), t.hidden, da1.data(),
                               g.at(0).weights.raw(), g.at(0).bias.raw(), static_cast<T*>(nullptr));
        return out;
    }

    auto tr = detail::cnn_forward(model, batch, opt);
    out.loss = detail::softmax_xent(tr.logits, batch.labels, t.classes, &dlogits);
    const std::size_t k = t.kernel;
    const std::size_t s1 = t.conv1_out(), q1 = t.pool1_out(), s2 = t.conv2_out(), q2 = t.pool2_out();
    const std::size_t K1 = k * k, K2 = t.conv1 * k * k;

    std::vector<T> da3(B * t.fc_hidden, T{0});
    detail::dense_backward(tr.a3.data(), B, t.fc_hidden, model.at(3).weights.raw(), t.classes, dlogits.data(),
                           g.at(3).weights.raw(), g.at(3).bias.raw(), da3.data());
    detail::activate_backward<T>(tr.z3, da3, opt.relu);
    std::vector<T> dflat(B * t.flat(), T{0});
    detail::dense_backward(tr.flat.data(), B, t.flat(), model.at(2).weights.raw(), t.fc_hidden, da3.data(),
                           g.at(2).weights.raw(), g.at(2).bias.raw(), dflat.data());

    std::vector<T> dz2(s2 * s2 * t.conv2), dcols2(s2 * s2 * K2), dp1(q1 * q1 * t.conv1), dz1(s1 * s1 * t.conv1);
    for (std::size_t b = 0; b < B; ++b) {
        std::fill(dz2.begin(), dz2.end(), T{0});
        const T* df = dflat.data() + b * t.flat();
        const auto* arg2 = tr.arg2.data() + b * q2 * q2 * t.conv2;
        for (std::size_t c = 0; c < t.conv2; ++c)
            for (std::size_t p = 0; p < q2 * q2; ++p) dz2[arg2[p * t.conv2 + c]] += df[c * q2 * q2 + p];
        detail::activate_backward<T>({tr.z2.data() + b * s2 * s2 * t.conv2, dz2.size()}, dz2, opt.relu);
        std::fill(dcols2.begin(), dcols2.end(), T{0});
        detail::dense_backward(tr.cols2.data() + b * s2 * s2 * K2, s2 * s2, K2, model.at(1).weights.raw(), t.conv2, dz2.data(),
                               g.at(1).weights.raw(), g.at(1).bias.raw(), dcols2.data());
        std::fill(dp1.begin(), dp1.end(), T{0});
        detail::col2im_add(dcols2.data(), q1, t.conv1, k, dp1.data());

        std::fill(dz1.begin(), dz1.end(), T{0});
        const auto* arg1 = tr.arg1.data() + b * q1 * q1 * t.conv1;
        for (std::size_t i = 0; i < dp1.size(); ++i) dz1[arg1[i]] += dp1[i];
        detail::activate_backward<T>({tr.z1.data() + b * s1 * s1 * t.conv1, dz1.size()}, dz1, opt.relu);
        detail::dense_backward(tr.cols1.data() + b * s1 * s1 * K1, s1 * s1, K1, model.at(0).weights.raw(), t.conv1, dz1.data(),
                               g.at(0).weights.raw(), g.at(0).bias.raw(), static_cast<T*>(nullptr));
    }
    return out;
}

namespace detail {

template <typename T>
void sgd_in_place(ModelParams<T>& model, const ModelParams<T>& grads, T lr) {
    for (std::size_t i = 0; i < model.layers().size(); ++i) {
        auto step = [lr](Tensor<T>& w, const Tensor<T>& g) {
            for (std::size_t j = 0; j < w.size(); ++j) w[j] = w[j] - lr * g[j];
        };
        step(model.at(i).weights, grads.at(i).weights);
        step(model.at(i).bias, grads.at(i).bias);
    }
}

} // namespace detail

/// model - lr * grads; the input is left untouched.
template <typename T>
ModelParams<T> sgd_step(const ModelParams<T>& model, const ModelParams<T>& grads, double lr) {
    require_same_layout(model, grads, "sgd_step");
    if (!(lr >= 0.0)) throw internal_error("sgd_step: negative learning rate");
    ModelParams<T> out = model;
    detail::sgd_in_place(out, grads, static_cast<T>(lr));
    return out;
}

struct train_stats {
    double loss_sum = 0.0;
    std::size_t steps = 0;

    void merge(const train_stats& o) {
        loss_sum += o.loss_sum;
        steps += o.steps;
    }
    double mean_loss() const { return steps ? loss_sum / static_cast<double>(steps) : 0.0; }
};

/// E epochs of shuffled mini-batch SGD, keeping the final partial batch.
/// The shuffle only decides batch membership; each batch is evaluated in
/// ascending example order, so a single full batch equals one plain
/// gradient step on the whole set.
template <typename T>
ModelParams<T> train_local(ModelParams<T> model, const LabeledSet& data, const LocalTrainConfig& cfg, rng_stream& rng,
                           train_stats* stats = nullptr, const net_options& opt = {}) {
    cfg.validate();
    if (data.size() == 0) throw input_error("train_local: empty dataset");
    const T lr = static_cast<T>(cfg.learning_rate);
    std::vector<std::size_t> chunk;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const auto perm = shuffled_indices(data.size(), rng);
        for (std::size_t start = 0; start < perm.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(perm.size(), start + cfg.batch_size);
            chunk.assign(perm.begin() + static_cast<std::ptrdiff_t>(start), perm.begin() + static_cast<std::ptrdiff_t>(end));
            std::sort(chunk.begin(), chunk.end());
            const auto batch = make_batch<T>(data, chunk, model.topo());
            const auto lg = loss_and_grads(model, batch, opt);
            detail::sgd_in_place(model, lg.grads, lr);
            if (stats) {
                stats->loss_sum += lg.loss;
                ++stats->steps;
            }
        }
    }
    return model;
}

/// Largest relative disagreement between the analytic gradient (in T) and
/// central differences evaluated on a 64-bit copy of the model:
/// max |a - fd| / max(|a|, |fd|, 1e-8).
template <typename T>
double grad_check(const ModelParams<T>& model, const Batch<T>& batch, double step, const net_options& opt = {}) {
    const auto analytic = flatten(loss_and_grads(model, batch, opt).grads);
    auto shadow = model.template cast<double>();
    const auto shadow_batch = cast_batch<double>(batch);
    double worst = 0.0;
    std::size_t flat_index = 0;
    auto probe = [&](Tensor<double>& t) {
        for (std::size_t j = 0; j < t.size(); ++j, ++flat_index) {
            const double saved = t[j];
            t[j] = saved + step;
            const double up = loss(shadow, shadow_batch, opt);
            t[j] = saved - step;
            const double down = loss(shadow, shadow_batch, opt);
            t[j] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double a = static_cast<double>(analytic[flat_index]);
            const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
            worst = std::max(worst, std::abs(a - fd) / denom);
        }
    };
    for (auto& l : shadow.layers()) {
        probe(l.weights);
        probe(l.bias);
    }
    return worst;
}

} // namespace semifl
