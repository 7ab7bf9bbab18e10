#include <gtest/gtest.h>
#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "semifl/dataset.hpp"
#include "test_util.hpp"

using namespace semifl;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> be32(std::uint32_t v) {
    return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8),
            static_cast<std::uint8_t>(v)};
}

std::vector<std::uint8_t> idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols, std::vector<std::uint8_t> px) {
    std::vector<std::uint8_t> out;
    for (auto v : {0x00000803u, count, rows, cols}) {
        auto b = be32(v);
        out.insert(out.end(), b.begin(), b.end());
    }
    out.insert(out.end(), px.begin(), px.end());
    return out;
}

std::vector<std::uint8_t> idx_labels(std::vector<std::uint8_t> labels) {
    std::vector<std::uint8_t> out;
    for (auto v : {0x00000801u, static_cast<std::uint32_t>(labels.size())}) {
        auto b = be32(v);
        out.insert(out.end(), b.begin(), b.end());
    }
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

void write_file(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_gzip(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    gzFile f = gzopen(p.string().c_str(), "wb");
    gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
}

std::set<std::size_t> union_of_sources(const std::vector<ClientDataset>& clients, std::size_t* total) {
    std::set<std::size_t> u;
    *total = 0;
    for (const auto& c : clients) {
        u.insert(c.source_indices.begin(), c.source_indices.end());
        *total += c.source_indices.size();
    }
    return u;
}

} // namespace

TEST(LoadIdx, HandBuiltTwoByTwoImage) {
    test_dir dir("idx_hand");
    const auto img = idx_images(1, 2, 2, {0, 255, 0, 255});
    ASSERT_EQ(img.size(), 20u);
    write_file(dir / "img", img);
    write_file(dir / "lab", idx_labels({7}));
    const auto set = load_idx(dir / "img", dir / "lab");
    ASSERT_EQ(set.size(), 1u);
    EXPECT_EQ(set.images.shape(), (shape_t{1, 1, 2, 2}));
    EXPECT_EQ(std::vector<float>(set.images.data().begin(), set.images.data().end()), (std::vector<float>{0, 1, 0, 1}));
    EXPECT_EQ(set.labels[0], 7);
}

TEST(LoadIdx, GzipCompressedFilesAreAccepted) {
    test_dir dir("idx_gz");
    write_gzip(dir / "img.gz", idx_images(2, 1, 3, {0, 51, 102, 153, 204, 255}));
    write_gzip(dir / "lab.gz", idx_labels({1, 2}));
    const auto set = load_idx(dir / "img.gz", dir / "lab.gz");
    ASSERT_EQ(set.size(), 2u);
    EXPECT_FLOAT_EQ(set.images[1], 0.2f);
    EXPECT_EQ(set.labels[1], 2);
}

TEST(LoadIdx, CountMismatchNamesFiles) {
    test_dir dir("idx_mismatch");
    write_file(dir / "img", idx_images(2, 2, 2, std::vector<std::uint8_t>(8, 1)));
    write_file(dir / "lab", idx_labels({3}));
    try {
        load_idx(dir / "img", dir / "lab");
        FAIL() << "expected ingestion_error";
    } catch (const ingestion_error& e) {
        EXPECT_NE(std::string(e.what()).find("count mismatch"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find((dir / "lab").string()), std::string::npos);
    }
}

TEST(LoadIdx, BadMagicAndTruncation) {
    test_dir dir("idx_bad");
    auto img = idx_images(1, 2, 2, {1, 2, 3, 4});
    write_file(dir / "lab", idx_labels({0}));
    auto wrong = img;
    wrong[3] = 0x01;
    write_file(dir / "wrong", wrong);
    EXPECT_THROW(load_idx(dir / "wrong", dir / "lab"), ingestion_error);
    img.pop_back();
    write_file(dir / "short", img);
    EXPECT_THROW(load_idx(dir / "short", dir / "lab"), ingestion_error);
    EXPECT_THROW(load_idx(dir / "missing", dir / "lab"), ingestion_error);
}

TEST(LoadIdx, RealMnistTrainingSet) {
    const auto dir = mnist_dir();
    if (dir.empty()) GTEST_SKIP() << "MNIST not available";
    const auto files = locate_mnist(dir);
    const auto set = load_idx(files.train_images, files.train_labels);
    EXPECT_EQ(set.size(), 60000u);
    for (auto l : set.labels) ASSERT_LT(l, 10);
}

TEST(Synthetic, ExactCountsPerLabel) {
    const auto s = generate_synthetic(10, 10, 1);
    EXPECT_EQ(s.size(), 100u);
    for (const auto& [l, n] : label_histogram(s.labels)) EXPECT_EQ(n, 10u) << int(l);
    for (auto v : s.images.data()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
}

TEST(Synthetic, DeterministicPerSeed) {
    EXPECT_EQ(generate_synthetic(3, 7, 5), generate_synthetic(3, 7, 5));
    EXPECT_FALSE(generate_synthetic(3, 7, 5) == generate_synthetic(3, 7, 6));
    EXPECT_THROW(generate_synthetic(11, 1, 1), input_error);
}

TEST(PartitionIid, DisjointAndConserving) {
    const auto src = generate_synthetic(10, 60, 2);
    const auto clients = partition_iid(src, {partition_mode::iid, 20, 30, 4});
    ASSERT_EQ(clients.size(), 20u);
    std::size_t total = 0;
    const auto u = union_of_sources(clients, &total);
    EXPECT_EQ(total, 600u);
    EXPECT_EQ(u.size(), 600u);
    for (const auto& c : clients) EXPECT_EQ(c.size(), 30u);
}

TEST(PartitionIid, SingleClientIsShuffledSource) {
    const auto src = generate_synthetic(4, 25, 3);
    const auto clients = partition_iid(src, {partition_mode::iid, 1, 100, 8});
    ASSERT_EQ(clients.size(), 1u);
    EXPECT_EQ(clients[0].examples, src.subset(clients[0].source_indices));
    std::vector<std::size_t> sorted = clients[0].source_indices;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) ASSERT_EQ(sorted[i], i);
    EXPECT_NE(clients[0].source_indices, sorted);
}

TEST(PartitionIid, SeedControlsAssignment) {
    const auto src = generate_synthetic(10, 20, 3);
    auto ids = [&](std::uint64_t seed) {
        return partition_iid(src, {partition_mode::iid, 10, 20, seed})[0].source_indices;
    };
    EXPECT_EQ(ids(1), ids(1));
    EXPECT_NE(ids(1), ids(2));
}

TEST(PartitionIid, InsufficientSourceIsInputError) {
    const auto src = generate_synthetic(2, 10, 1);
    EXPECT_THROW(partition_iid(src, {partition_mode::iid, 3, 7, 1}), input_error);
}

TEST(PartitionNonIid, TwoClassForcedLayout) {
    const auto src = generate_synthetic(2, 600, 1);
    const auto clients = partition_noniid_shards(src, {partition_mode::noniid_shards, 2, 600, 1});
    ASSERT_EQ(clients.size(), 2u);
    EXPECT_EQ(clients[0].label_profile, (std::map<std::uint8_t, std::size_t>{{0, 600}}));
    EXPECT_EQ(clients[1].label_profile, (std::map<std::uint8_t, std::size_t>{{1, 600}}));
}

TEST(PartitionNonIid, PurityDisjointnessConservationProperty) {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        auto rng = make_stream({seed});
        const auto classes = 2 + uniform_index(rng, 9);
        const auto per_class = 20 + uniform_index(rng, 40);
        const auto per_client = 3 + uniform_index(rng, 10);
        const auto src = generate_synthetic(classes, per_class, seed);
        const std::size_t capacity = classes * (per_class / per_client);
        const auto k = 1 + uniform_index(rng, capacity);
        const auto clients = partition_noniid_shards(src, {partition_mode::noniid_shards, k, per_client, seed});
        ASSERT_EQ(clients.size(), k);
        std::size_t total = 0;
        const auto u = union_of_sources(clients, &total);
        EXPECT_EQ(total, k * per_client);
        EXPECT_EQ(u.size(), total);
        for (const auto& c : clients) EXPECT_EQ(c.distinct_labels(), 1u);
        EXPECT_EQ(partition_noniid_shards(src, {partition_mode::noniid_shards, k, per_client, seed})[0].source_indices,
                  clients[0].source_indices);
    }
}

TEST(PartitionNonIid, LabelsShareClientsEvenly) {
    const auto src = generate_synthetic(10, 100, 1);
    const auto clients = partition_noniid_shards(src, {partition_mode::noniid_shards, 100, 10, 1});
    std::map<int, int> per_label;
    for (const auto& c : clients) ++per_label[c.label_profile.begin()->first];
    for (const auto& [l, n] : per_label) EXPECT_EQ(n, 10) << l;
}

TEST(PartitionNonIid, TooFewPureShardsIsPartitionError) {
    const auto src = generate_synthetic(2, 50, 1);
    EXPECT_THROW(partition_noniid_shards(src, {partition_mode::noniid_shards, 3, 30, 1}), partition_error);
}

TEST(PartitionNonIid, RealMnistShardCounts) {
    const auto dir = mnist_dir();
    if (dir.empty()) GTEST_SKIP() << "MNIST not available";
    const auto files = locate_mnist(dir);
    const auto src = load_idx(files.train_images, files.train_labels);

    // per-class counts of the MNIST training set
    const auto hist = label_histogram(src.labels);
    std::size_t pure_600 = 0;
    for (const auto& [l, n] : hist) pure_600 += n / 600;
    EXPECT_EQ(pure_600, 94u);

    // 100 x 600 cannot be cut into pure single-label shards
    EXPECT_THROW(partition_noniid_shards(src, {partition_mode::noniid_shards, 100, 600, 1}), partition_error);

    // 94 x 600 uses every full shard: 60000 minus the per-class remainders
    const auto all = partition_noniid_shards(src, {partition_mode::noniid_shards, 94, 600, 1});
    std::size_t remainders = 0;
    for (const auto& [l, n] : hist) remainders += n % 600;
    std::size_t total = 0;
    union_of_sources(all, &total);
    EXPECT_EQ(total, 60000u - remainders);
    for (const auto& c : all) EXPECT_EQ(c.distinct_labels(), 1u);

    const auto desk = partition_noniid_shards(src, {partition_mode::noniid_shards, 100, 100, 1});
    std::map<int, int> per_label;
    for (const auto& c : desk) {
        EXPECT_EQ(c.distinct_labels(), 1u);
        ++per_label[c.label_profile.begin()->first];
    }
    for (const auto& [l, n] : per_label) EXPECT_EQ(n, 10);

    // 540 per client leaves at least 10 pure shards for every digit
    const auto full = partition_noniid_shards(src, {partition_mode::noniid_shards, 100, 540, 1});
    per_label.clear();
    for (const auto& c : full) {
        EXPECT_EQ(c.distinct_labels(), 1u);
        ++per_label[c.label_profile.begin()->first];
    }
    for (const auto& [l, n] : per_label) EXPECT_EQ(n, 10);
}

TEST(PartitionIid, RealMnistHundredClientsCoverAllExamples) {
    const auto dir = mnist_dir();
    if (dir.empty()) GTEST_SKIP() << "MNIST not available";
    const auto files = locate_mnist(dir);
    const auto src = load_idx(files.train_images, files.train_labels);
    const auto clients = partition_iid(src, {partition_mode::iid, 100, 600, 1});
    std::size_t total = 0;
    EXPECT_EQ(union_of_sources(clients, &total).size(), 60000u);
    EXPECT_EQ(total, 60000u);
}
