#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "semifl/errors.hpp"
#include "semifl/rng.hpp"
#include "semifl/tensor.hpp"

namespace semifl {

inline constexpr std::size_t num_classes = 10;

/// Images (M, 1, H, W) scaled to [0,1] with one class index per image.
struct LabeledSet {
    Tensor<float> images;
    std::vector<std::uint8_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t pixels_per_image() const { return images.size() / labels.size(); }

    /// Copies examples at `indices`, in that order.
    LabeledSet subset(std::span<const std::size_t> indices) const {
        if (indices.empty()) throw input_error("subset: no indices");
        const std::size_t px = pixels_per_image();
        shape_t shape = images.shape();
        shape[0] = indices.size();
        std::vector<float> data(indices.size() * px);
        std::vector<std::uint8_t> out_labels(indices.size());
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const auto src = indices[i];
            if (src >= size()) throw input_error("subset: index " + std::to_string(src) + " out of range");
            std::copy_n(images.raw() + src * px, px, data.begin() + static_cast<std::ptrdiff_t>(i * px));
            out_labels[i] = labels[src];
        }
        return {Tensor<float>(std::move(shape), std::move(data)), std::move(out_labels)};
    }

    friend bool operator==(const LabeledSet&, const LabeledSet&) = default;
};

/// Concatenates sets with identical per-image geometry.
inline LabeledSet concatenate(std::span<const LabeledSet* const> parts) {
    if (parts.empty()) throw input_error("concatenate: no parts");
    shape_t shape = parts.front()->images.shape();
    std::vector<float> data;
    std::vector<std::uint8_t> labels;
    for (const auto* p : parts) {
        auto s = p->images.shape();
        s[0] = shape[0];
        if (s != shape) throw input_error("concatenate: image geometry differs");
        data.insert(data.end(), p->images.data().begin(), p->images.data().end());
        labels.insert(labels.end(), p->labels.begin(), p->labels.end());
    }
    shape[0] = labels.size();
    return {Tensor<float>(std::move(shape), std::move(data)), std::move(labels)};
}

inline std::map<std::uint8_t, std::size_t> label_histogram(std::span<const std::uint8_t> labels) {
    std::map<std::uint8_t, std::size_t> h;
    for (auto l : labels) ++h[l];
    return h;
}

struct ClientDataset {
    std::size_t client_id = 0;
    LabeledSet examples;
    std::vector<std::size_t> source_indices;
    std::map<std::uint8_t, std::size_t> label_profile;

    std::size_t size() const noexcept { return examples.size(); }
    std::size_t distinct_labels() const noexcept { return label_profile.size(); }
};

enum class partition_mode { iid, noniid_shards };

struct PartitionPlan {
    partition_mode mode = partition_mode::noniid_shards;
    std::size_t num_clients = 100;
    std::size_t per_client = 600;
    std::uint64_t seed = 1;
};

// ---------------------------------------------------------------------------
// IDX ingestion

namespace detail {

inline std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ingestion_error(path.string() + ": file not found");
    // gzread passes plain files through unchanged and inflates 0x1f 0x8b streams.
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (!f) throw ingestion_error(path.string() + ": cannot open");
    std::vector<std::uint8_t> out;
    std::array<std::uint8_t, 1 << 16> buf{};
    for (;;) {
        const int n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
        if (n < 0) {
            int code = 0;
            std::string msg = gzerror(f, &code);
            gzclose(f);
            throw ingestion_error(path.string() + ": read failed: " + msg);
        }
        if (n == 0) break;
        out.insert(out.end(), buf.begin(), buf.begin() + n);
    }
    gzclose(f);
    return out;
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

} // namespace detail

inline constexpr std::uint32_t idx_images_magic = 0x00000803;
inline constexpr std::uint32_t idx_labels_magic = 0x00000801;

/// Reads an IDX image/label file pair (optionally gzip-compressed).
inline LabeledSet load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto img = detail::read_maybe_gzip(images_path);
    const auto lab = detail::read_maybe_gzip(labels_path);
    const auto iname = images_path.string();
    const auto lname = labels_path.string();

    if (img.size() < 16) throw ingestion_error(iname + ": truncated header");
    if (detail::read_be32(img, 0) != idx_images_magic) throw ingestion_error(iname + ": bad magic (expected 0x00000803)");
    const std::size_t count = detail::read_be32(img, 4);
    const std::size_t rows = detail::read_be32(img, 8);
    const std::size_t cols = detail::read_be32(img, 12);
    if (count == 0 || rows == 0 || cols == 0) throw ingestion_error(iname + ": zero dimension");
    if (img.size() != 16 + count * rows * cols)
        throw ingestion_error(iname + ": truncated or oversized payload (" + std::to_string(img.size()) + " bytes for " +
                              std::to_string(count) + " images of " + std::to_string(rows) + "x" + std::to_string(cols) + ")");

    if (lab.size() < 8) throw ingestion_error(lname + ": truncated header");
    if (detail::read_be32(lab, 0) != idx_labels_magic) throw ingestion_error(lname + ": bad magic (expected 0x00000801)");
    const std::size_t lcount = detail::read_be32(lab, 4);
    if (lab.size() != 8 + lcount) throw ingestion_error(lname + ": truncated or oversized payload");
    if (lcount != count)
        throw ingestion_error(lname + ": count mismatch, " + std::to_string(lcount) + " labels for " + std::to_string(count) +
                              " images in " + iname);

    std::vector<float> pixels(count * rows * cols);
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<float>(img[16 + i]) / 255.0f;
    std::vector<std::uint8_t> labels(lab.begin() + 8, lab.end());
    for (auto l : labels)
        if (l >= num_classes) throw ingestion_error(lname + ": label " + std::to_string(l) + " outside 0..9");
    return {Tensor<float>({count, 1, rows, cols}, std::move(pixels)), std::move(labels)};
}

struct mnist_files {
    std::filesystem::path train_images, train_labels, test_images, test_labels;
};

/// Standard MNIST file names inside `dir`, preferring uncompressed copies.
inline mnist_files locate_mnist(const std::filesystem::path& dir) {
    auto pick = [&](const std::string& stem) {
        for (const auto& name : {stem, stem + ".gz"}) {
            auto p = dir / name;
            if (std::filesystem::exists(p)) return p;
        }
        throw ingestion_error(dir.string() + ": missing " + stem + "[.gz]");
    };
    return {pick("train-images-idx3-ubyte"), pick("train-labels-idx1-ubyte"), pick("t10k-images-idx3-ubyte"),
            pick("t10k-labels-idx1-ubyte")};
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Gaussian-blob digits: each class has a prototype made of a few blobs
/// (fixed by `seed`); examples add pixel noise drawn from a stream selected
/// by `draw`, so draw 0 / draw 1 give train / held-out sets of the same
/// distribution. Layout is class-major.
inline LabeledSet generate_synthetic(std::size_t classes, std::size_t per_class, std::uint64_t seed,
                                     std::uint64_t draw = 0, std::size_t side = 28) {
    if (classes == 0 || classes > num_classes) throw input_error("synthetic: classes must be in 1..10");
    if (per_class == 0) throw input_error("synthetic: per_class must be positive");
    const std::size_t px = side * side;

    auto proto_rng = make_stream({seed, 0x5e7a});
    std::vector<double> protos(classes * px, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
        for (int blob = 0; blob < 3; ++blob) {
            const double cy = uniform_real(proto_rng, 0.15 * side, 0.85 * side);
            const double cx = uniform_real(proto_rng, 0.15 * side, 0.85 * side);
            const double sigma = uniform_real(proto_rng, 0.08 * side, 0.15 * side);
            for (std::size_t y = 0; y < side; ++y)
                for (std::size_t x = 0; x < side; ++x) {
                    const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                    protos[c * px + y * side + x] += std::exp(-d2 / (2 * sigma * sigma));
                }
        }
    }

    auto noise_rng = make_stream({seed, 0x5e7b, draw});
    const std::size_t m = classes * per_class;
    std::vector<float> data(m * px);
    std::vector<std::uint8_t> labels(m);
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t j = 0; j < per_class; ++j) {
            const std::size_t i = c * per_class + j;
            labels[i] = static_cast<std::uint8_t>(c);
            for (std::size_t p = 0; p < px; ++p) {
                const double v = protos[c * px + p] + 0.25 * standard_normal(noise_rng);
                data[i * px + p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    return {Tensor<float>({m, 1, side, side}, std::move(data)), std::move(labels)};
}

// ---------------------------------------------------------------------------
// Partitioning

inline ClientDataset make_client(std::size_t id, const LabeledSet& src, std::vector<std::size_t> indices) {
    ClientDataset c;
    c.client_id = id;
    c.examples = src.subset(indices);
    c.label_profile = label_histogram(c.examples.labels);
    c.source_indices = std::move(indices);
    return c;
}

/// Seeded global shuffle, then consecutive slices of `per_client`.
inline std::vector<ClientDataset> partition_iid(const LabeledSet& src, const PartitionPlan& plan) {
    if (plan.mode != partition_mode::iid) throw internal_error("partition_iid called with a non-iid plan");
    if (plan.num_clients == 0 || plan.per_client == 0) throw input_error("partition: client count and size must be positive");
    const std::size_t need = plan.num_clients * plan.per_client;
    if (need > src.size())
        throw input_error("partition: " + std::to_string(need) + " examples requested, source has " +
                          std::to_string(src.size()));
    auto rng = make_stream({plan.seed, 0x11d});
    const auto perm = shuffled_indices(src.size(), rng);
    std::vector<ClientDataset> out;
    out.reserve(plan.num_clients);
    for (std::size_t k = 0; k < plan.num_clients; ++k) {
        const auto first = perm.begin() + static_cast<std::ptrdiff_t>(k * plan.per_client);
        out.push_back(make_client(k, src, {first, first + static_cast<std::ptrdiff_t>(plan.per_client)}));
    }
    return out;
}

/// Label-sorted contiguous single-label shards.
///
/// Examples are stably sorted by label (source index breaks ties) and each
/// label's run is cut into shards of `per_client`; a run's tail shorter than
/// a shard is discarded. Shards are handed out round-robin over labels in
/// ascending order until `num_clients` are placed, so labels receive equal
/// client counts whenever their runs allow it. Client ids are label-major.
inline std::vector<ClientDataset> partition_noniid_shards(const LabeledSet& src, const PartitionPlan& plan) {
    if (plan.mode != partition_mode::noniid_shards) throw internal_error("partition_noniid_shards called with an iid plan");
    if (plan.num_clients == 0 || plan.per_client == 0) throw input_error("partition: client count and size must be positive");

    std::vector<std::size_t> order(src.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return src.labels[a] < src.labels[b]; });

    // [begin, end) of each label's run in `order`.
    std::map<std::uint8_t, std::pair<std::size_t, std::size_t>> runs;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto l = src.labels[order[i]];
        auto [it, fresh] = runs.try_emplace(l, i, i + 1);
        if (!fresh) it->second.second = i + 1;
    }

    std::map<std::uint8_t, std::size_t> available, quota;
    std::size_t total_available = 0;
    for (const auto& [l, r] : runs) {
        available[l] = (r.second - r.first) / plan.per_client;
        quota[l] = 0;
        total_available += available[l];
    }
    if (total_available < plan.num_clients) {
        std::string detail;
        for (const auto& [l, n] : available) detail += " " + std::to_string(l) + ":" + std::to_string(n);
        throw partition_error("non-iid partition needs " + std::to_string(plan.num_clients) + " single-label shards of " +
                              std::to_string(plan.per_client) + " but only " + std::to_string(total_available) +
                              " fit (shards per label:" + detail + ")");
    }
    for (std::size_t placed = 0; placed < plan.num_clients;) {
        for (auto& [l, q] : quota) {
            if (placed == plan.num_clients) break;
            if (q < available[l]) {
                ++q;
                ++placed;
            }
        }
    }

    std::vector<ClientDataset> out;
    out.reserve(plan.num_clients);
    for (const auto& [l, q] : quota) {
        const auto run_begin = runs[l].first;
        for (std::size_t s = 0; s < q; ++s) {
            const auto first = order.begin() + static_cast<std::ptrdiff_t>(run_begin + s * plan.per_client);
            out.push_back(make_client(out.size(), src, {first, first + static_cast<std::ptrdiff_t>(plan.per_client)}));
        }
    }
    return out;
}

inline std::vector<ClientDataset> partition(const LabeledSet& src, const PartitionPlan& plan) {
    return plan.mode == partition_mode::iid ? partition_iid(src, plan) : partition_noniid_shards(src, plan);
}

} // namespace semifl
