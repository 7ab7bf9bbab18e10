#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "semifl/errors.hpp"
#include "semifl/rng.hpp"
#include "semifl/tensor.hpp"

namespace semifl {

enum class architecture { mlp, cnn };

inline std::string_view to_string(architecture a) {
    return a == architecture::mlp ? "mlp" : "cnn";
}

inline architecture parse_architecture(std::string_view s) {
    if (s == "mlp") return architecture::mlp;
    if (s == "cnn") return architecture::cnn;
    throw config_error("unknown architecture tag '" + std::string(s) + "' (expected mlp or cnn)");
}

/// Layer sizes. The defaults are the MNIST networks; tests shrink them.
///   mlp: input -> hidden (ReLU) -> classes
///   cnn: conv(1->conv1, k) ReLU pool2, conv(conv1->conv2, k) ReLU pool2,
///        fc(flat->fc_hidden) ReLU, fc(fc_hidden->classes); valid convs, stride 1
struct topology {
    architecture arch = architecture::cnn;
    std::size_t classes = 10;

    std::size_t input = 784;
    std::size_t hidden = 64;

    std::size_t image = 28;
    std::size_t conv1 = 10;
    std::size_t conv2 = 20;
    std::size_t kernel = 5;
    std::size_t fc_hidden = 50;

    static topology mlp(std::size_t input = 784, std::size_t hidden = 64, std::size_t classes = 10) {
        topology t;
        t.arch = architecture::mlp;
        t.input = input;
        t.hidden = hidden;
        t.classes = classes;
        return t;
    }

    static topology cnn(std::size_t image = 28, std::size_t conv1 = 10, std::size_t conv2 = 20,
                        std::size_t kernel = 5, std::size_t fc_hidden = 50, std::size_t classes = 10) {
        topology t;
        t.arch = architecture::cnn;
        t.image = image;
        t.conv1 = conv1;
        t.conv2 = conv2;
        t.kernel = kernel;
        t.fc_hidden = fc_hidden;
        t.classes = classes;
        return t;
    }

    static topology defaults(architecture a) { return a == architecture::mlp ? mlp() : cnn(); }

    std::size_t conv1_out() const { return image - kernel + 1; }
    std::size_t pool1_out() const { return conv1_out() / 2; }
    std::size_t conv2_out() const { return pool1_out() - kernel + 1; }
    std::size_t pool2_out() const { return conv2_out() / 2; }
    std::size_t flat() const { return conv2 * pool2_out() * pool2_out(); }

    void validate() const {
        if (classes == 0) throw config_error("topology: classes must be positive");
        if (arch == architecture::mlp) {
            if (input == 0 || hidden == 0) throw config_error("topology: mlp sizes must be positive");
            return;
        }
        if (kernel == 0 || conv1 == 0 || conv2 == 0 || fc_hidden == 0)
            throw config_error("topology: cnn sizes must be positive");
        if (image < kernel || conv1_out() / 2 < kernel || conv2_out() / 2 == 0)
            throw config_error("topology: image " + std::to_string(image) + " too small for kernel " +
                               std::to_string(kernel));
    }

    friend bool operator==(const topology&, const topology&) = default;
};

template <typename T>
struct layer {
    std::string name;
    Tensor<T> weights;
    Tensor<T> bias;

    friend bool operator==(const layer&, const layer&) = default;
};

/// Ordered named layers of one of the two fixed architectures.
template <typename T>
class ModelParams {
public:
    using value_type = T;

    ModelParams() = default;
    ModelParams(topology topo, std::vector<layer<T>> layers) : topo_(topo), layers_(std::move(layers)) {}

    architecture arch() const noexcept { return topo_.arch; }
    const topology& topo() const noexcept { return topo_; }
    const std::vector<layer<T>>& layers() const noexcept { return layers_; }
    std::vector<layer<T>>& layers() noexcept { return layers_; }
    const layer<T>& at(std::size_t i) const { return layers_.at(i); }
    layer<T>& at(std::size_t i) { return layers_.at(i); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
        return n;
    }

    /// Calls f(Tensor&) for every tensor in manifest order: w0, b0, w1, b1, ...
    template <typename F>
    void for_each_tensor(F&& f) {
        for (auto& l : layers_) {
            f(l.weights);
            f(l.bias);
        }
    }
    template <typename F>
    void for_each_tensor(F&& f) const {
        for (const auto& l : layers_) {
            f(l.weights);
            f(l.bias);
        }
    }

    template <typename U>
    ModelParams<U> cast() const {
        std::vector<layer<U>> out;
        out.reserve(layers_.size());
        for (const auto& l : layers_) out.push_back({l.name, l.weights.template cast<U>(), l.bias.template cast<U>()});
        return ModelParams<U>(topo_, std::move(out));
    }

    ModelParams zeros_like() const {
        ModelParams z = *this;
        z.for_each_tensor([](Tensor<T>& t) { t.fill(T{0}); });
        return z;
    }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;

private:
    topology topo_;
    std::vector<layer<T>> layers_;
};

template <typename T>
bool same_layout(const ModelParams<T>& a, const ModelParams<T>& b) {
    if (a.arch() != b.arch() || a.layers().size() != b.layers().size()) return false;
    for (std::size_t i = 0; i < a.layers().size(); ++i) {
        const auto& la = a.at(i);
        const auto& lb = b.at(i);
        if (la.name != lb.name || la.weights.shape() != lb.weights.shape() || la.bias.shape() != lb.bias.shape())
            return false;
    }
    return true;
}

template <typename T>
void require_same_layout(const ModelParams<T>& a, const ModelParams<T>& b, const char* what) {
    if (!same_layout(a, b)) throw internal_error(std::string(what) + ": model layouts differ");
}

/// Flat copy of every parameter in manifest order.
template <typename T>
std::vector<T> flatten(const ModelParams<T>& m) {
    std::vector<T> out;
    out.reserve(m.parameter_count());
    m.for_each_tensor([&](const Tensor<T>& t) { out.insert(out.end(), t.data().begin(), t.data().end()); });
    return out;
}

/// Byte-wise equality; distinguishes +0/-0 and compares NaN payloads.
template <typename T>
bool bit_equal(const ModelParams<T>& a, const ModelParams<T>& b) {
    if (!same_layout(a, b)) return false;
    const auto fa = flatten(a);
    const auto fb = flatten(b);
    return std::memcmp(fa.data(), fb.data(), fa.size() * sizeof(T)) == 0;
}

template <typename T>
double max_abs_diff(const ModelParams<T>& a, const ModelParams<T>& b) {
    require_same_layout(a, b, "max_abs_diff");
    const auto fa = flatten(a);
    const auto fb = flatten(b);
    double m = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(fa[i]) - static_cast<double>(fb[i])));
    return m;
}

/// a*x + b*y, layer-wise.
template <typename T>
ModelParams<T> combine(const ModelParams<T>& x, T a, const ModelParams<T>& y, T b) {
    require_same_layout(x, y, "combine");
    ModelParams<T> out = x;
    for (std::size_t i = 0; i < out.layers().size(); ++i) {
        auto mix = [&](Tensor<T>& o, const Tensor<T>& xt, const Tensor<T>& yt) {
            for (std::size_t j = 0; j < o.size(); ++j) o[j] = a * xt[j] + b * yt[j];
        };
        mix(out.at(i).weights, x.at(i).weights, y.at(i).weights);
        mix(out.at(i).bias, x.at(i).bias, y.at(i).bias);
    }
    return out;
}

namespace detail {

template <typename T>
layer<T> init_layer(std::string name, shape_t wshape, std::size_t fan_in, rng_stream& rng) {
    Tensor<T> w(std::move(wshape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : w.data()) v = static_cast<T>(uniform_real(rng, -bound, bound));
    Tensor<T> b(shape_t{w.dim(0)});
    return {std::move(name), std::move(w), std::move(b)};
}

} // namespace detail

/// Fan-in scaled uniform weights, zero biases. Deterministic in (topology, seed).
template <typename T = float>
ModelParams<T> init_model(const topology& topo, std::uint64_t seed) {
    topo.validate();
    auto rng = make_stream({seed, static_cast<std::uint64_t>(topo.arch) + 0x1001});
    std::vector<layer<T>> layers;
    if (topo.arch == architecture::mlp) {
        layers.push_back(detail::init_layer<T>("fc1", {topo.hidden, topo.input}, topo.input, rng));
        layers.push_back(detail::init_layer<T>("fc2", {topo.classes, topo.hidden}, topo.hidden, rng));
    } else {
        const auto k = topo.kernel;
        layers.push_back(detail::init_layer<T>("conv1", {topo.conv1, 1, k, k}, k * k, rng));
        layers.push_back(detail::init_layer<T>("conv2", {topo.conv2, topo.conv1, k, k}, topo.conv1 * k * k, rng));
        layers.push_back(detail::init_layer<T>("fc1", {topo.fc_hidden, topo.flat()}, topo.flat(), rng));
        layers.push_back(detail::init_layer<T>("fc2", {topo.classes, topo.fc_hidden}, topo.fc_hidden, rng));
    }
    return ModelParams<T>(topo, std::move(layers));
}

template <typename T = float>
ModelParams<T> init_model(architecture arch, std::uint64_t seed) {
    return init_model<T>(topology::defaults(arch), seed);
}

template <typename T = float>
ModelParams<T> init_model(std::string_view tag, std::uint64_t seed) {
    return init_model<T>(parse_architecture(tag), seed);
}

/// Recovers the topology from layer shapes. For the cnn the smallest even
/// image size consistent with the flattened width is assumed (28 for MNIST).
template <typename T>
topology infer_topology(architecture arch, const std::vector<layer<T>>& layers) {
    auto bad = [&] { return checkpoint_error("layer manifest does not match architecture " + std::string(to_string(arch))); };
    if (arch == architecture::mlp) {
        if (layers.size() != 2) throw bad();
        const auto& w1 = layers[0].weights.shape();
        const auto& w2 = layers[1].weights.shape();
        if (w1.size() != 2 || w2.size() != 2 || w2[1] != w1[0]) throw bad();
        return topology::mlp(w1[1], w1[0], w2[0]);
    }
    if (layers.size() != 4) throw bad();
    const auto& c1 = layers[0].weights.shape();
    const auto& c2 = layers[1].weights.shape();
    const auto& f1 = layers[2].weights.shape();
    const auto& f2 = layers[3].weights.shape();
    if (c1.size() != 4 || c2.size() != 4 || f1.size() != 2 || f2.size() != 2) throw bad();
    const auto k = c1[2];
    const auto per_map = f1[1] / c2[0];
    const auto p2 = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(per_map))));
    if (p2 * p2 * c2[0] != f1[1]) throw bad();
    const auto image = 2 * (2 * p2 + k - 1) + k - 1;
    auto t = topology::cnn(image, c1[0], c2[0], k, f1[0], f2[0]);
    if (t.flat() != f1[1] || c2[1] != c1[0] || f2[1] != f1[0]) throw bad();
    return t;
}

} // namespace semifl
