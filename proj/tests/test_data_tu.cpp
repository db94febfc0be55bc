#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "test_util.hpp"

using namespace mgcheb;
namespace fs = std::filesystem;

namespace {

const fs::path kData = MGCHEB_DATA_DIR;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("mgcheb_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  void write(const std::string& file, const std::string& text) const { std::ofstream(path / file) << text; }
};

// Graph 1: nodes {1,2} with edge (1,2); graph 2: node {3}.
void write_toy(const TempDir& d, const std::string& a = "1, 2\n2, 1\n") {
  d.write("TOY_A.txt", a);
  d.write("TOY_graph_indicator.txt", "1\n1\n2\n");
  d.write("TOY_graph_labels.txt", "-1\n1\n");
  d.write("TOY_node_labels.txt", "3\n0\n3\n");
}

struct Stats {
  std::size_t graphs, min_nodes, max_nodes;
  double avg_nodes;
};

Stats stats(const Dataset& ds) {
  Stats s{ds.graphs.size(), ~std::size_t{0}, 0, 0.0};
  for (const auto& g : ds.graphs) {
    s.min_nodes = std::min(s.min_nodes, g.n);
    s.max_nodes = std::max(s.max_nodes, g.n);
    s.avg_nodes += static_cast<double>(g.n);
  }
  s.avg_nodes /= static_cast<double>(ds.graphs.size());
  return s;
}

}  // namespace

TEST(ParseTu, MutagStatistics) {
  const auto ds = parse_tu(kData / "MUTAG", "MUTAG");
  const auto s = stats(ds);
  EXPECT_EQ(s.graphs, 188u);
  EXPECT_EQ(s.min_nodes, 10u);
  EXPECT_EQ(s.max_nodes, 28u);
  EXPECT_NEAR(s.avg_nodes, 17.93, 0.005);
  EXPECT_EQ(ds.x_in, 7u);
  EXPECT_EQ(ds.n_classes, 2u);
  for (const auto& g : ds.graphs) {
    EXPECT_FALSE(g.adjacency.has_diagonal());
    EXPECT_EQ(g.features.rows(), g.n);
    EXPECT_EQ(g.features.cols(), 7u);
    for (double v : g.adjacency.values()) EXPECT_EQ(v, 1.0);
  }
}

TEST(ParseTu, EnzymesStatistics) {
  if (!fs::exists(kData / "ENZYMES" / "ENZYMES_A.txt")) GTEST_SKIP() << "ENZYMES files not present";
  const auto ds = parse_tu(kData / "ENZYMES", "ENZYMES");
  const auto s = stats(ds);
  EXPECT_EQ(s.graphs, 600u);
  EXPECT_EQ(s.min_nodes, 2u);
  EXPECT_EQ(s.max_nodes, 126u);
  EXPECT_NEAR(s.avg_nodes, 32.63, 0.005);
  EXPECT_EQ(ds.x_in, 3u);
  EXPECT_EQ(ds.n_classes, 6u);
}

TEST(ParseTu, ToyFixture) {
  TempDir d("toy");
  write_toy(d);
  const auto ds = parse_tu(d.path, "TOY");
  ASSERT_EQ(ds.graphs.size(), 2u);
  EXPECT_EQ(ds.graphs[0].n, 2u);
  EXPECT_EQ(ds.graphs[1].n, 1u);
  EXPECT_EQ(ds.graphs[0].adjacency.nnz(), 2u);  // reciprocal lines merged into one undirected edge
  EXPECT_DOUBLE_EQ(ds.graphs[0].adjacency.at(0, 1), 1.0);
  EXPECT_EQ(ds.graphs[1].adjacency.nnz(), 0u);
  EXPECT_EQ(ds.x_in, 2u);
  EXPECT_EQ(ds.graphs[0].node_labels, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(ds.graphs[0].graph_label, 0u);
  EXPECT_EQ(ds.graphs[1].graph_label, 1u);
  EXPECT_EQ(max_abs_diff(ds.graphs[0].features, DenseMat{{0, 1}, {1, 0}}), 0.0);
}

TEST(ParseTu, WhitespaceTolerant) {
  TempDir d("ws");
  write_toy(d, "1,2\n  2 ,  1  \n\n");
  EXPECT_EQ(parse_tu(d.path, "TOY").graphs[0].adjacency.nnz(), 2u);
}

TEST(ParseTu, MissingFileNamed) {
  TempDir d("missing");
  write_toy(d);
  fs::remove(d.path / "TOY_node_labels.txt");
  try {
    parse_tu(d.path, "TOY");
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_NE(e.file().find("TOY_node_labels.txt"), std::string::npos);
  }
}

TEST(ParseTu, NonIntegerTokenReportsLine) {
  TempDir d("nonint");
  write_toy(d, "1, 2\n2, x1\n");
  try {
    parse_tu(d.path, "TOY");
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(e.file().find("TOY_A.txt"), std::string::npos);
  }
}

TEST(ParseTu, NodeReferencingAbsentGraph) {
  TempDir d("absent");
  write_toy(d);
  d.write("TOY_graph_indicator.txt", "1\n1\n3\n");
  try {
    parse_tu(d.path, "TOY");
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(ParseTu, EdgeAcrossGraphsRejected) {
  TempDir d("cross");
  write_toy(d, "1, 3\n");
  EXPECT_THROW(parse_tu(d.path, "TOY"), DatasetError);
}

TEST(ParseTu, RoundTrip) {
  const auto ds = parse_tu(kData / "MUTAG", "MUTAG");
  TempDir d("roundtrip");
  write_tu(d.path, "RT", ds.graphs);
  const auto back = parse_tu(d.path, "RT");
  ASSERT_EQ(back.graphs.size(), ds.graphs.size());
  EXPECT_EQ(back.x_in, ds.x_in);
  for (std::size_t g = 0; g < ds.graphs.size(); ++g) EXPECT_TRUE(back.graphs[g] == ds.graphs[g]) << g;
}

TEST(MakeRecord, DedupesAndDropsLoops) {
  const auto g = make_record(3, {{0, 1}, {1, 0}, {1, 1}, {1, 2}}, {0, 1, 0}, 1, 2);
  EXPECT_EQ(g.adjacency.nnz(), 4u);
  EXPECT_FALSE(g.adjacency.has_diagonal());
}

TEST(MakeBatch, SegmentsAndBlocks) {
  const auto a = make_record(2, {{0, 1}}, {0, 1}, 0, 2);
  const auto b = make_record(3, {{0, 1}, {1, 2}}, {1, 1, 0}, 1, 2);
  const Batch batch = make_batch(std::vector<GraphRecord>{a, b});
  EXPECT_EQ(batch.segments, (std::vector<std::size_t>{0, 0, 1, 1, 1}));
  EXPECT_EQ(batch.n_graphs, 2u);
  EXPECT_EQ(batch.labels, (std::vector<std::size_t>{0, 1}));
  const DenseMat l = batch.laplacians[0].to_dense();
  ASSERT_EQ(l.rows(), 5u);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 2; j < 5; ++j) EXPECT_EQ(l(i, j), 0.0);
  EXPECT_EQ(batch.features(3, 1), 1.0);
}

TEST(MakeBatch, SingleRecordMatchesUnbatched) {
  const auto ds = parse_tu(kData / "MUTAG", "MUTAG");
  const Batch batch = make_batch(std::vector<const GraphRecord*>{&ds.graphs[5]});
  EXPECT_EQ(max_abs_diff(batch.laplacians[0].to_dense(), rescaled_laplacian(ds.graphs[5].adjacency).to_dense()), 0.0);
  EXPECT_EQ(max_abs_diff(batch.features, ds.graphs[5].features), 0.0);
}

TEST(MakeBatch, WidthMismatchAndEmpty) {
  const auto a = make_record(2, {{0, 1}}, {0, 1}, 0, 2);
  const auto b = make_record(2, {{0, 1}}, {0, 1}, 0, 3);
  EXPECT_THROW(make_batch(std::vector<GraphRecord>{a, b}), DimensionError);
  EXPECT_THROW(make_batch(std::vector<GraphRecord>{}), DimensionError);
}

TEST(StratifiedFolds, BalancedHundred) {
  std::vector<std::size_t> labels(100);
  for (std::size_t i = 0; i < 100; ++i) labels[i] = i % 2;
  const auto plan = stratified_folds(labels, 10, 3);
  for (const auto& f : plan.folds) {
    ASSERT_EQ(f.size(), 10u);
    std::size_t ones = 0;
    for (auto i : f) ones += labels[i];
    EXPECT_EQ(ones, 5u);
  }
}

TEST(StratifiedFolds, DeterministicForSeed) {
  std::vector<std::size_t> labels(57);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = (i * 7) % 3;
  EXPECT_EQ(stratified_folds(labels, 10, 9).folds, stratified_folds(labels, 10, 9).folds);
  EXPECT_NE(stratified_folds(labels, 10, 9).folds, stratified_folds(labels, 10, 10).folds);
}

TEST(StratifiedFolds, MutagFoldSizes) {
  const auto ds = parse_tu(kData / "MUTAG", "MUTAG");
  const auto plan = stratified_folds(ds.labels(), 10, 0);
  std::size_t n18 = 0, n19 = 0;
  for (const auto& f : plan.folds) {
    n18 += f.size() == 18;
    n19 += f.size() == 19;
  }
  EXPECT_EQ(n18, 2u);
  EXPECT_EQ(n19, 8u);
}

TEST(StratifiedFolds, PartitionAndProportionsForManySeeds) {
  Rng rng(4);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t n = 20 + rng.below(200);
    const std::size_t classes = 2 + rng.below(5);
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = rng.below(classes);
    const auto plan = stratified_folds(labels, 10, seed);
    std::vector<int> seen(n, 0);
    std::size_t lo = n, hi = 0;
    for (const auto& f : plan.folds) {
      lo = std::min(lo, f.size());
      hi = std::max(hi, f.size());
      for (auto i : f) ++seen[i];
      for (std::size_t c = 0; c < classes; ++c) {
        const double share = static_cast<double>(std::count(labels.begin(), labels.end(), c)) / 10.0;
        std::size_t in_fold = 0;
        for (auto i : f) in_fold += labels[i] == c;
        EXPECT_LT(std::abs(static_cast<double>(in_fold) - share), 1.0 + 1e-12);
      }
    }
    EXPECT_LE(hi - lo, 1u);
    for (int s : seen) EXPECT_EQ(s, 1);
    const auto train = plan.train_indices(3);
    EXPECT_EQ(train.size() + plan.folds[3].size(), n);
  }
}

TEST(StratifiedFolds, TooManyFolds) {
  EXPECT_THROW(stratified_folds({0, 1, 0}, 4, 0), DimensionError);
  EXPECT_THROW(stratified_folds({0, 1, 0}, 0, 0), DimensionError);
}
