#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "semifl/errors.hpp"
#include "semifl/model.hpp"

namespace semifl {

// SFL1 layout, all integers little-endian:
//   "SFL1"
//   u32 tag length, tag bytes ("mlp" | "cnn")
//   u32 tensor count, then per tensor:
//       u32 name length, name bytes ("<layer>.weight" | "<layer>.bias"),
//       u32 rank, u32 dims[rank]
//   payload: each tensor as f32 values, manifest order
//   u64 FNV-1a hash of the payload bytes

inline constexpr char checkpoint_magic[4] = {'S', 'F', 'L', '1'};

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_str(std::vector<std::uint8_t>& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

class byte_reader {
public:
    byte_reader(std::span<const std::uint8_t> bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_++]} << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_++]} << (8 * i);
        return v;
    }
    std::string str(std::size_t max_len = 256) {
        const auto n = u32();
        if (n > max_len) fail("implausible string length " + std::to_string(n));
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }
    [[noreturn]] void fail(const std::string& why) const { throw checkpoint_error(origin_ + ": " + why); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) fail("truncated at byte " + std::to_string(pos_));
    }
    std::span<const std::uint8_t> bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

} // namespace detail

template <typename T>
std::vector<std::uint8_t> serialize(const ModelParams<T>& model) {
    std::vector<std::uint8_t> out(checkpoint_magic, checkpoint_magic + 4);
    detail::put_str(out, std::string(to_string(model.arch())));
    detail::put_u32(out, static_cast<std::uint32_t>(2 * model.layers().size()));
    auto manifest = [&](const std::string& name, const Tensor<T>& t) {
        detail::put_str(out, name);
        detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    };
    for (const auto& l : model.layers()) {
        manifest(l.name + ".weight", l.weights);
        manifest(l.name + ".bias", l.bias);
    }
    const std::size_t payload_start = out.size();
    model.for_each_tensor([&](const Tensor<T>& t) {
        for (auto v : t.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    });
    detail::put_u64(out, fnv1a64({out.data() + payload_start, out.size() - payload_start}));
    return out;
}

/// Header bytes plus 4 per parameter plus the 8-byte checksum.
template <typename T>
std::size_t serialized_size(const ModelParams<T>& model) {
    std::size_t header = 4 + 4 + to_string(model.arch()).size() + 4;
    for (const auto& l : model.layers()) {
        header += 4 + l.name.size() + 7 + 4 + 4 * l.weights.rank();
        header += 4 + l.name.size() + 5 + 4 + 4 * l.bias.rank();
    }
    return header + 4 * model.parameter_count() + 8;
}

/// Parses an SFL1 image. Fails without returning a partial model.
template <typename T = float>
ModelParams<T> deserialize(std::span<const std::uint8_t> bytes, const std::string& origin = "<checkpoint>") {
    detail::byte_reader rd(bytes, origin);
    if (bytes.size() < 4 || std::memcmp(bytes.data(), checkpoint_magic, 4) != 0) rd.fail("not an SFL1 checkpoint");
    rd.skip(4);
    architecture arch;
    try {
        arch = parse_architecture(rd.str());
    } catch (const config_error& e) {
        rd.fail(e.what());
    }
    const auto count = rd.u32();
    if (count == 0 || count % 2 != 0 || count > 64) rd.fail("bad tensor count " + std::to_string(count));

    struct entry {
        std::string name;
        shape_t shape;
    };
    std::vector<entry> manifest;
    std::size_t values = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        entry e{rd.str(), {}};
        const auto rank = rd.u32();
        if (rank == 0 || rank > 4) rd.fail("bad rank for " + e.name);
        for (std::uint32_t r = 0; r < rank; ++r) {
            const auto d = rd.u32();
            if (d == 0) rd.fail("zero dimension in " + e.name);
            e.shape.push_back(d);
        }
        values += element_count(e.shape);
        manifest.push_back(std::move(e));
    }
    if (rd.remaining() != 4 * values + 8)
        rd.fail("payload length " + std::to_string(rd.remaining()) + " does not match manifest (" +
                std::to_string(4 * values + 8) + " expected)");
    const auto payload = bytes.subspan(rd.pos(), 4 * values);
    rd.skip(4 * values);
    if (rd.u64() != fnv1a64(payload)) rd.fail("checksum mismatch");

    std::vector<layer<T>> layers;
    std::size_t off = 0;
    auto read_tensor = [&](const entry& e) {
        std::vector<T> data(element_count(e.shape));
        for (auto& v : data) {
            std::uint32_t u = 0;
            for (int b = 0; b < 4; ++b) u |= std::uint32_t{payload[off++]} << (8 * b);
            v = static_cast<T>(std::bit_cast<float>(u));
        }
        return Tensor<T>(e.shape, std::move(data));
    };
    for (std::size_t i = 0; i < manifest.size(); i += 2) {
        const auto& w = manifest[i];
        const auto& b = manifest[i + 1];
        const auto dot = w.name.rfind(".weight");
        if (dot == std::string::npos || dot + 7 != w.name.size() || b.name != w.name.substr(0, dot) + ".bias")
            rd.fail("unexpected tensor names " + w.name + ", " + b.name);
        auto wt = read_tensor(w);
        auto bt = read_tensor(b);
        layers.push_back({w.name.substr(0, dot), std::move(wt), std::move(bt)});
    }

    topology topo;
    try {
        topo = infer_topology(arch, layers);
    } catch (const checkpoint_error& e) {
        rd.fail(e.what());
    }
    ModelParams<T> model(topo, std::move(layers));
    if (!same_layout(model, init_model<T>(topo, 0))) rd.fail("layer manifest does not match the " + std::string(to_string(arch)) + " layout");
    return model;
}

/// Writes through a temporary sibling and renames it into place.
template <typename T>
void save_checkpoint(const ModelParams<T>& model, const std::filesystem::path& path) {
    const auto bytes = serialize(model);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw checkpoint_error(tmp.string() + ": cannot open for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw checkpoint_error(tmp.string() + ": write failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw checkpoint_error(path.string() + ": rename failed: " + ec.message());
}

template <typename T = float>
ModelParams<T> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw checkpoint_error(path.string() + ": cannot open");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize<T>(bytes, path.string());
}

} // namespace semifl
