#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "support.hpp"

namespace fs = std::filesystem;
using egnn::Dataset;
using egnn::Graph;
using egnn::Tensor;

namespace {

/// Writes the mandatory TU files for a dataset named "T".
fs::path write_fixture(const std::string& tag, const std::string& a, const std::string& indicator,
                       const std::string& labels)
{
    const fs::path dir = support::scratch_dir(tag);
    support::write_file(dir / "T_A.txt", a);
    support::write_file(dir / "T_graph_indicator.txt", indicator);
    support::write_file(dir / "T_graph_labels.txt", labels);
    return dir;
}

Dataset labelled_dataset(const std::vector<std::size_t>& labels, std::size_t classes, std::uint64_t seed = 0)
{
    egnn::Rng rng(seed);
    Dataset ds;
    ds.name = "R";
    ds.num_classes = classes;
    ds.num_features = 2;
    ds.num_channels = 1;
    for (std::size_t label : labels) ds.graphs.push_back(egnn::random_graph(rng, 2 + rng.below(4), 2, 1, 0.5, -1, 1, label));
    return ds;
}

} // namespace

TEST(TuLoader, TwoVertexGraph)
{
    const fs::path dir = write_fixture("two_vertex", "1, 2\n2, 1\n", "1\n1\n", "1\n");
    const Dataset ds = egnn::load_tu_dataset(dir);
    ASSERT_EQ(ds.size(), 1u);
    const Graph& g = ds.graphs[0];
    EXPECT_EQ(g.num_vertices(), 2u);
    EXPECT_EQ(g.num_channels(), 1u);
    EXPECT_EQ(g.num_features(), 1u);
    EXPECT_EQ(g.adjacency(0, 1, 0), 1.0);
    EXPECT_EQ(g.adjacency(1, 0, 0), 1.0);
    EXPECT_EQ(g.adjacency(0, 0, 0), 0.0);
    EXPECT_EQ(g.vertex_features(0, 0), 1.0);
    EXPECT_EQ(ds.name, "T");
}

TEST(TuLoader, EmptyEdgeFile)
{
    const Dataset ds = egnn::load_tu_dataset(write_fixture("no_edges", "", "1\n", "0\n"));
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_EQ(ds.graphs[0].num_vertices(), 1u);
    for (double v : ds.graphs[0].adjacency.values()) EXPECT_EQ(v, 0.0);
}

TEST(TuLoader, SignedLabelsRemapped)
{
    const Dataset ds = egnn::load_tu_dataset(write_fixture("signed", "1, 2\n", "1\n1\n2\n", "1\n-1\n"));
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.num_classes, 2u);
    EXPECT_EQ(ds.graphs[0].label, 1u);
    EXPECT_EQ(ds.graphs[1].label, 0u);
}

TEST(TuLoader, DirectedEdgesStoredAsGiven)
{
    const Dataset ds = egnn::load_tu_dataset(write_fixture("directed", "1, 2\n", "1\n1\n", "0\n"));
    EXPECT_EQ(ds.graphs[0].adjacency(0, 1, 0), 1.0);
    EXPECT_EQ(ds.graphs[0].adjacency(1, 0, 0), 0.0);
}

TEST(TuLoader, LabelsAndAttributesBecomeFeaturesAndChannels)
{
    const fs::path dir = write_fixture("attributes", "1, 2\n2, 3\n", "1\n1\n1\n", "0\n");
    support::write_file(dir / "T_node_labels.txt", "5\n7\n5\n");
    support::write_file(dir / "T_node_attributes.txt", "0.5\n1.5\n2.5\n");
    support::write_file(dir / "T_edge_labels.txt", "0\n1\n");
    support::write_file(dir / "T_edge_attributes.txt", "3.0\n4.0\n");
    const Dataset ds = egnn::load_tu_dataset(dir);
    EXPECT_EQ(ds.num_features, 3u); // two one-hot node labels and one attribute
    EXPECT_EQ(ds.num_channels, 3u); // two one-hot edge labels and one attribute
    const Graph& g = ds.graphs[0];
    EXPECT_EQ(g.vertex_features(1, 0), 0.0);
    EXPECT_EQ(g.vertex_features(1, 1), 1.0);
    EXPECT_EQ(g.vertex_features(1, 2), 1.5);
    EXPECT_EQ(g.adjacency(0, 1, 0), 1.0);
    EXPECT_EQ(g.adjacency(0, 1, 2), 3.0);
    EXPECT_EQ(g.adjacency(1, 2, 1), 1.0);
    EXPECT_EQ(g.adjacency(1, 2, 2), 4.0);
    EXPECT_EQ(g.adjacency(1, 0, 2), 0.0);
}

TEST(TuLoader, MissingMandatoryFileNamed)
{
    const fs::path dir = write_fixture("missing", "1, 2\n", "1\n1\n", "0\n");
    fs::remove(dir / "T_graph_labels.txt");
    try {
        egnn::load_tu_dataset(dir, "T");
        FAIL() << "expected DatasetFormatError";
    } catch (const egnn::DatasetFormatError& e) {
        EXPECT_NE(std::string(e.what()).find("T_graph_labels.txt"), std::string::npos) << e.what();
    }
}

TEST(TuLoader, MissingDirectoryNamed)
{
    try {
        egnn::load_tu_dataset("/nonexistent/egnn/dir", "T");
        FAIL() << "expected DatasetFormatError";
    } catch (const egnn::DatasetFormatError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/egnn/dir"), std::string::npos);
    }
}

TEST(TuLoader, EdgeAcrossGraphsRejected)
{
    const fs::path dir = write_fixture("cross", "1, 2\n", "1\n2\n", "0\n1\n");
    EXPECT_THROW(egnn::load_tu_dataset(dir), egnn::ConsistencyError);
}

TEST(TuLoader, OutOfRangeVertexRejected)
{
    const fs::path dir = write_fixture("range", "1, 3\n", "1\n1\n", "0\n");
    EXPECT_THROW(egnn::load_tu_dataset(dir), egnn::ConsistencyError);
}

TEST(TuLoader, ParseErrorReportsLine)
{
    const fs::path dir = write_fixture("parse", "1, 2\n2, x\n", "1\n1\n", "0\n");
    try {
        egnn::load_tu_dataset(dir);
        FAIL() << "expected ParseError";
    } catch (const egnn::ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_NE(std::string(e.what()).find("T_A.txt"), std::string::npos);
    }
}

TEST(TuLoader, LineCountMismatchRejected)
{
    const fs::path dir = write_fixture("count", "1, 2\n", "1\n1\n", "0\n");
    support::write_file(dir / "T_edge_labels.txt", "0\n1\n");
    EXPECT_THROW(egnn::load_tu_dataset(dir), egnn::ConsistencyError);
}

TEST(TuLoader, WriteThenLoadRoundTrip)
{
    const Dataset ds = egnn::make_motif_dataset(4, 8);
    const fs::path dir = support::scratch_dir("roundtrip_tu");
    egnn::write_tu_dataset(ds, dir);
    const Dataset back = egnn::load_tu_dataset(dir);
    ASSERT_EQ(back.size(), ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(back.graphs[i], ds.graphs[i]) << "graph " << i;
}

TEST(TuLoader, RealNci1WhenAvailable)
{
    const char* env = std::getenv("EGNN_DATA_DIR");
    if (!env) GTEST_SKIP() << "EGNN_DATA_DIR not set";
    fs::path dir = fs::path(env);
    if (fs::exists(dir / "NCI1" / "NCI1_A.txt")) dir /= "NCI1";
    if (!fs::exists(dir / "NCI1_A.txt")) GTEST_SKIP() << "NCI1 files not found under " << env;
    const Dataset ds = egnn::load_tu_dataset(dir, "NCI1");
    EXPECT_EQ(ds.size(), 4110u);
    EXPECT_EQ(ds.num_classes, 2u);
}

TEST(Cache, RoundTripBitExact)
{
    Dataset ds = labelled_dataset({0, 1, 1, 0, 2}, 3, 9);
    ds.vertex_labels_one_hot = true;
    ds.graphs[2].vertex_features(0, 1) = 1.0 / 3.0;
    const fs::path path = support::scratch_dir("cache") / "ds.bin";
    egnn::save_cache(ds, path);
    const Dataset back = egnn::load_cache(path);
    EXPECT_EQ(back.name, ds.name);
    EXPECT_EQ(back.num_classes, ds.num_classes);
    EXPECT_EQ(back.vertex_labels_one_hot, true);
    ASSERT_EQ(back.size(), ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(back.graphs[i], ds.graphs[i]);
}

TEST(Cache, BadMagicRejected)
{
    const fs::path path = support::scratch_dir("cache_bad") / "ds.bin";
    support::write_file(path, "NOPE and more bytes");
    EXPECT_THROW(egnn::load_cache(path), egnn::DatasetFormatError);
}

TEST(NormalizeEdges, ScalesEachChannelToUnitMax)
{
    Dataset ds = labelled_dataset({0, 1}, 2);
    ds.graphs[0].adjacency(0, 1, 0) = -8.0;
    egnn::normalize_edge_channels(ds);
    double m = 0.0;
    for (const auto& g : ds.graphs)
        for (double v : g.adjacency.values()) m = std::max(m, std::abs(v));
    EXPECT_DOUBLE_EQ(m, 1.0);
    EXPECT_DOUBLE_EQ(ds.graphs[0].adjacency(0, 1, 0), -1.0);
}

TEST(Batching, PaddingAndMask)
{
    egnn::Rng rng(2);
    const Graph a = egnn::random_graph(rng, 3, 2, 2), b = egnn::random_graph(rng, 5, 2, 2);
    const Graph* ptrs[] = {&a, &b};
    const egnn::Batch batch = egnn::pad_graphs(ptrs);
    EXPECT_EQ(batch.max_vertices(), 5u);
    const egnn::Mask expect = {1, 1, 1, 0, 0, 1, 1, 1, 1, 1};
    EXPECT_EQ(batch.mask, expect);
    for (std::size_t i = 3; i < 5; ++i) {
        for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(batch.vertex_features(0, i, c), 0.0);
        for (std::size_t j = 0; j < 5; ++j) {
            EXPECT_EQ(batch.adjacency(0, i, j, 0), 0.0);
            EXPECT_EQ(batch.adjacency(0, j, i, 1), 0.0);
        }
    }
}

TEST(Batching, UnpadRecoversOriginal)
{
    egnn::Rng rng(8);
    std::vector<Graph> graphs;
    for (std::size_t n : {1, 4, 2, 6}) graphs.push_back(egnn::random_graph(rng, n, 3, 2));
    std::vector<const Graph*> ptrs;
    for (const auto& g : graphs) ptrs.push_back(&g);
    const egnn::Batch batch = egnn::pad_graphs(ptrs, 9);
    EXPECT_EQ(batch.max_vertices(), 9u);
    for (std::size_t b = 0; b < graphs.size(); ++b) EXPECT_EQ(egnn::unpad_graph(batch, b), graphs[b]);
}

TEST(Batching, LargeBatchSizeGivesSingleBatch)
{
    const Dataset ds = labelled_dataset({0, 1, 0, 1, 1}, 2);
    const auto batches = egnn::make_batches(ds, 10, 3);
    ASSERT_EQ(batches.size(), 1u);
    EXPECT_EQ(batches[0].batch_size(), 5u);
}

TEST(Batching, SameSeedSameComposition)
{
    const Dataset ds = labelled_dataset(std::vector<std::size_t>(23, 0), 1);
    const auto a = egnn::make_batches(ds, 4, 17), b = egnn::make_batches(ds, 4, 17);
    ASSERT_EQ(a.size(), 6u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].indices, b[i].indices);
        EXPECT_EQ(a[i].vertex_features, b[i].vertex_features);
    }
    const auto c = egnn::make_batches(ds, 4, 18);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i].indices != c[i].indices;
    EXPECT_TRUE(differs);
}

TEST(KFold, TenGraphsFiveFolds)
{
    const Dataset ds = labelled_dataset({0, 1, 0, 1, 0, 1, 0, 1, 0, 1}, 2);
    for (std::size_t f = 0; f < 5; ++f) EXPECT_EQ(egnn::kfold_split(ds, 5, f, 1).test.size(), 2u);
}

TEST(KFold, FoldsPartitionDataset)
{
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 37; ++i) labels.push_back(i % 3);
    const Dataset ds = labelled_dataset(labels, 3);
    for (std::size_t k : {2, 3, 5, 7}) {
        std::vector<int> seen(ds.size(), 0);
        for (std::size_t f = 0; f < k; ++f) {
            const egnn::FoldSplit s = egnn::kfold_split(ds, k, f, 4);
            EXPECT_EQ(s.train_indices.size() + s.test_indices.size(), ds.size());
            std::set<std::size_t> train(s.train_indices.begin(), s.train_indices.end());
            for (std::size_t i : s.test_indices) {
                EXPECT_FALSE(train.count(i));
                ++seen[i];
            }
        }
        for (int c : seen) EXPECT_EQ(c, 1) << "k=" << k;
    }
}

TEST(KFold, StratifiedBalance)
{
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 50; ++i) labels.push_back(i < 30 ? 0 : 1);
    const Dataset ds = labelled_dataset(labels, 2);
    for (std::uint64_t seed = 0; seed < 5; ++seed)
        for (std::size_t f = 0; f < 5; ++f) {
            const egnn::FoldSplit s = egnn::kfold_split(ds, 5, f, seed);
            EXPECT_TRUE(s.stratified);
            const auto counts = s.test.class_counts();
            EXPECT_NEAR(static_cast<double>(counts[0]), 6.0, 1.0);
            EXPECT_NEAR(static_cast<double>(counts[1]), 4.0, 1.0);
        }
}

TEST(KFold, SmallClassFallsBackUnstratified)
{
    const Dataset ds = labelled_dataset({0, 0, 0, 0, 0, 1}, 2);
    const egnn::FoldSplit s = egnn::kfold_split(ds, 3, 0, 0);
    EXPECT_FALSE(s.stratified);
    EXPECT_EQ(s.test.size(), 2u);
}

TEST(KFold, InvalidArgumentsRejected)
{
    const Dataset ds = labelled_dataset({0, 1, 0}, 2);
    EXPECT_THROW(egnn::kfold_split(ds, 1, 0, 0), egnn::UsageError);
    EXPECT_THROW(egnn::kfold_split(ds, 4, 0, 0), egnn::UsageError);
    EXPECT_THROW(egnn::kfold_split(ds, 3, 3, 0), egnn::UsageError);
}

TEST(Subsample, KeepsClassProportions)
{
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 100; ++i) labels.push_back(i < 70 ? 0 : 1);
    const Dataset ds = labelled_dataset(labels, 2);
    const Dataset sub = egnn::stratified_subsample(ds, 20, 3);
    EXPECT_EQ(sub.size(), 20u);
    EXPECT_EQ(sub.class_counts(), (std::vector<std::size_t>{14, 6}));
}

TEST(Motif, ClassesBalancedAndRingsEven)
{
    const Dataset ds = egnn::make_motif_dataset(0);
    EXPECT_EQ(ds.size(), 20u);
    EXPECT_EQ(ds.class_counts(), (std::vector<std::size_t>{10, 10}));
    for (const auto& g : ds.graphs) {
        EXPECT_EQ(g.num_vertices() % 2, 0u);
        // every vertex sees the same per-channel edge sums in both classes
        for (std::size_t i = 0; i < g.num_vertices(); ++i)
            for (std::size_t c = 0; c < 2; ++c) {
                double s = 0.0;
                for (std::size_t j = 0; j < g.num_vertices(); ++j) s += g.adjacency(i, j, c);
                EXPECT_EQ(s, 2.0);
            }
    }
}
