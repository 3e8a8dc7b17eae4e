#include "mtlevy/embeddings.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "test_support.hpp"

using namespace mtlevy;
using mtlevy_test::TempDir;
using mtlevy_test::write_file;

namespace {

TaskEmbeddingStore store_from(const std::vector<std::vector<double>>& v) {
  return TaskEmbeddingStore::from_vectors(v);
}

}  // namespace

TEST(LoadEmbeddings, ComputesDistances) {
  TempDir dir("emb");
  const auto path = dir.file("emb.csv");
  write_file(path, "task_id,e0,e1\n1,0,0\n2,3,4\n");
  const auto store = TaskEmbeddingStore::load(path);
  EXPECT_EQ(store.n_tasks(), 2);
  EXPECT_EQ(store.dim(), 2);
  EXPECT_DOUBLE_EQ(store.distance(1, 2), 5.0);  // 3-4-5 triangle
  EXPECT_DOUBLE_EQ(store.distance(2, 1), 5.0);
  EXPECT_DOUBLE_EQ(store.distance(1, 1), 0.0);
}

TEST(LoadEmbeddings, SingleTaskGivesZeroMatrix) {
  TempDir dir("emb");
  const auto path = dir.file("one.csv");
  write_file(path, "task_id,e0\n1,0.5\n");
  const auto store = TaskEmbeddingStore::load(path);
  EXPECT_EQ(store.n_tasks(), 1);
  EXPECT_DOUBLE_EQ(store.distance(1, 1), 0.0);
}

TEST(LoadEmbeddings, RaggedRowNamesLine) {
  TempDir dir("emb");
  const auto path = dir.file("ragged.csv");
  write_file(path, "task_id,e0,e1\n1,0,0\n2,3\n");
  try {
    TaskEmbeddingStore::load(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos)
        << e.what();
  }
}

TEST(LoadEmbeddings, RejectsBadInput) {
  TempDir dir("emb");
  const auto missing = dir.file("missing.csv");
  EXPECT_THROW(TaskEmbeddingStore::load(missing), ParseError);

  const auto bad_header = dir.file("hdr.csv");
  write_file(bad_header, "id,e0\n1,0\n");
  EXPECT_THROW(TaskEmbeddingStore::load(bad_header), ParseError);

  const auto non_numeric = dir.file("nonnum.csv");
  write_file(non_numeric, "task_id,e0\n1,abc\n");
  try {
    TaskEmbeddingStore::load(non_numeric);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("abc"), std::string::npos);
  }

  const auto duplicate = dir.file("dup.csv");
  write_file(duplicate, "task_id,e0\n1,0\n1,1\n");
  try {
    TaskEmbeddingStore::load(duplicate);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("duplicate task_id 1"),
              std::string::npos);
  }

  const auto gap = dir.file("gap.csv");
  write_file(gap, "task_id,e0\n1,0\n3,1\n");
  EXPECT_THROW(TaskEmbeddingStore::load(gap), ParseError);
}

TEST(NNearest, SingleTask) {
  const auto store = store_from({{0.0}});
  const auto set = n_nearest(store, 1, 1);
  EXPECT_EQ(set.task, 1);
  EXPECT_EQ(set.neighbors, std::vector<int>({1}));
}

TEST(NNearest, PicksNthSmallestIncludingSelf) {
  const auto store = store_from({{0.0}, {1.0}, {10.0}});
  const auto set = n_nearest(store, 1, 2);
  EXPECT_EQ(set.neighbors, std::vector<int>({1, 2}));
}

TEST(NNearest, TiesAtCutoffAllIncluded) {
  const auto store = store_from({{0.0}, {1.0}, {1.0}});
  const auto set = n_nearest(store, 1, 2);
  EXPECT_EQ(set.neighbors, std::vector<int>({1, 2, 3}));
}

TEST(NNearest, RejectsOutOfRange) {
  const auto store = store_from({{0.0}, {1.0}});
  EXPECT_THROW(n_nearest(store, 0, 1), std::domain_error);
  EXPECT_THROW(n_nearest(store, 3, 1), std::domain_error);
  EXPECT_THROW(n_nearest(store, 1, 0), std::domain_error);
  EXPECT_THROW(n_nearest(store, 1, 3), std::domain_error);
}

TEST(NNearest, MonotoneInN) {
  UniformSource vars(31);
  std::vector<std::vector<double>> vectors;
  for (int i = 0; i < 9; ++i)
    vectors.push_back({vars.next() * 10.0, vars.next() * 10.0});
  const auto store = store_from(vectors);
  for (int i = 1; i <= 9; ++i) {
    for (int n = 1; n < 9; ++n) {
      const auto small = n_nearest(store, i, n).neighbors;
      const auto large = n_nearest(store, i, n + 1).neighbors;
      EXPECT_TRUE(std::includes(large.begin(), large.end(), small.begin(),
                                small.end()));
    }
  }
}

TEST(NNearest, SelfMembership) {
  UniformSource vars(7);
  std::vector<std::vector<double>> vectors;
  for (int i = 0; i < 6; ++i) vectors.push_back({vars.next(), vars.next()});
  const auto store = store_from(vectors);
  for (int i = 1; i <= 6; ++i)
    for (int n = 1; n <= 6; ++n)
      EXPECT_TRUE(n_nearest(store, i, n).contains(i));
}

TEST(NNearest, PermutationEquivariant) {
  UniformSource vars(11);
  std::vector<std::vector<double>> vectors;
  for (int i = 0; i < 7; ++i)
    vectors.push_back({vars.next() * 4.0, vars.next() * 4.0, vars.next()});
  const auto store = store_from(vectors);

  // Relabel tasks by a fixed permutation (old id -> new id = perm[old-1]).
  const std::vector<int> perm = {3, 1, 7, 5, 2, 6, 4};
  std::vector<std::vector<double>> permuted(vectors.size());
  for (std::size_t old = 0; old < vectors.size(); ++old)
    permuted[static_cast<std::size_t>(perm[old] - 1)] = vectors[old];
  const auto permuted_store = store_from(permuted);

  for (int i = 1; i <= 7; ++i) {
    for (int n = 1; n <= 7; ++n) {
      auto base = n_nearest(store, i, n).neighbors;
      for (int& j : base) j = perm[static_cast<std::size_t>(j - 1)];
      std::sort(base.begin(), base.end());
      const auto mapped =
          n_nearest(permuted_store, perm[static_cast<std::size_t>(i - 1)], n)
              .neighbors;
      EXPECT_EQ(base, mapped);
    }
  }
}

TEST(SyntheticEmbeddings, ChainAdjacencyNeighborStructure) {
  const auto vectors = synthetic_chain_embeddings(10, 4, 42);
  const auto store = store_from(vectors);
  // Immediate neighbors on the line are closer than anything two steps away.
  for (int i = 2; i <= 9; ++i) {
    EXPECT_LT(store.distance(i, i - 1), store.distance(i, i + 2 > 10 ? i - 2 : i + 2));
    EXPECT_LT(store.distance(i, i + 1), store.distance(i, i - 2 < 1 ? i + 2 : i - 2));
  }
}

TEST(SyntheticEmbeddings, CsvRoundTrip) {
  TempDir dir("emb");
  const auto path = dir.file("synthetic.csv");
  const auto vectors = synthetic_chain_embeddings(5, 3, 9);
  write_embeddings_csv(vectors, path);
  const auto store = TaskEmbeddingStore::load(path);
  EXPECT_EQ(store.n_tasks(), 5);
  EXPECT_EQ(store.dim(), 3);
  for (int i = 1; i <= 5; ++i)
    for (int k = 0; k < 3; ++k)
      EXPECT_DOUBLE_EQ(store.embedding(i)[static_cast<std::size_t>(k)],
                       vectors[static_cast<std::size_t>(i - 1)]
                              [static_cast<std::size_t>(k)]);
}

TEST(ChainLineStore, InteriorNeighborhoodsAreSymmetric) {
  const auto store = chain_line_store(12);
  const auto set = n_nearest(store, 6, 5);
  // Distances 0,1,1,2,2 -> cutoff 2 -> the five tasks 4..8.
  EXPECT_EQ(set.neighbors, std::vector<int>({4, 5, 6, 7, 8}));
}
