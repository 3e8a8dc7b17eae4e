#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtlevy/io.hpp"
#include "mtlevy/rng.hpp"

namespace mtlevy {

// Tasks whose embedding lies within the n-th smallest distance of task i.
// The set always contains i itself (the self distance 0 is part of the
// multiset the n-th smallest is taken over, so n = 5 means the task plus its
// 4 nearest distinct neighbors, barring ties). Ties at the cutoff distance
// are all included.
struct CandidateIndexSet {
  int task = 0;
  std::vector<int> neighbors;  // sorted ascending, 1-based task ids

  bool contains(int j) const {
    return std::binary_search(neighbors.begin(), neighbors.end(), j);
  }
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

inline bool parse_full_double(std::string_view s, double& out) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && p == end && !s.empty();
}

inline bool parse_full_int(std::string_view s, int& out) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && p == end && !s.empty();
}

}  // namespace detail

// Immutable per-task metadata vectors e_i with the precomputed pairwise L2
// distance matrix. Task ids are 1-based and contiguous.
class TaskEmbeddingStore {
 public:
  static TaskEmbeddingStore from_vectors(
      std::vector<std::vector<double>> vectors) {
    if (vectors.empty())
      throw std::invalid_argument("embeddings: need at least one task");
    const std::size_t dim = vectors.front().size();
    if (dim == 0)
      throw std::invalid_argument("embeddings: dimension must be positive");
    for (const auto& v : vectors) {
      if (v.size() != dim)
        throw std::invalid_argument("embeddings: rows differ in dimension");
    }
    TaskEmbeddingStore store;
    store.dim_ = static_cast<int>(dim);
    store.vectors_ = std::move(vectors);
    store.compute_distances();
    return store;
  }

  // CSV schema: header `task_id,e0,...,e{dim-1}`, one row per task, task_id
  // values 1..N contiguous. Parse failures name the offending line.
  static TaskEmbeddingStore load(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    auto fail = [&](int line_no, const std::string& what) -> ParseError {
      return ParseError(path.string() + ":" + std::to_string(line_no) + ": " +
                        what);
    };

    if (!std::getline(in, line)) throw fail(1, "empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_csv_line(line);
    if (header.size() < 2 || header[0] != "task_id")
      throw fail(1, "header must be task_id,e0,...");
    for (std::size_t k = 1; k < header.size(); ++k) {
      if (header[k] != "e" + std::to_string(k - 1))
        throw fail(1, "unexpected header column '" + std::string(header[k]) +
                          "'");
    }
    const std::size_t dim = header.size() - 1;

    std::vector<std::pair<int, std::vector<double>>> rows;
    std::set<int> seen;
    int line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto fields = detail::split_csv_line(line);
      if (fields.size() != dim + 1)
        throw fail(line_no, "expected " + std::to_string(dim + 1) +
                                " fields, got " +
                                std::to_string(fields.size()));
      int id = 0;
      if (!detail::parse_full_int(fields[0], id))
        throw fail(line_no,
                   "non-numeric task_id '" + std::string(fields[0]) + "'");
      if (!seen.insert(id).second)
        throw fail(line_no, "duplicate task_id " + std::to_string(id));
      std::vector<double> v(dim);
      for (std::size_t k = 0; k < dim; ++k) {
        if (!detail::parse_full_double(fields[k + 1], v[k]))
          throw fail(line_no, "non-numeric field '" +
                                  std::string(fields[k + 1]) + "' in column e" +
                                  std::to_string(k));
      }
      rows.emplace_back(id, std::move(v));
    }
    if (rows.empty()) throw fail(line_no, "no task rows");
    const int n = static_cast<int>(rows.size());
    for (int want = 1; want <= n; ++want) {
      if (!seen.count(want))
        throw ParseError(path.string() + ": task ids must be 1.." +
                         std::to_string(n) + " contiguous; missing " +
                         std::to_string(want));
    }
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::vector<double>> vectors;
    vectors.reserve(rows.size());
    for (auto& r : rows) vectors.push_back(std::move(r.second));
    return from_vectors(std::move(vectors));
  }

  int n_tasks() const { return static_cast<int>(vectors_.size()); }
  int dim() const { return dim_; }

  double distance(int i, int j) const {
    check_task(i);
    check_task(j);
    return dist_[static_cast<std::size_t>(i - 1)]
                [static_cast<std::size_t>(j - 1)];
  }

  const std::vector<double>& embedding(int i) const {
    check_task(i);
    return vectors_[static_cast<std::size_t>(i - 1)];
  }

 private:
  TaskEmbeddingStore() = default;

  void check_task(int i) const {
    if (i < 1 || i > n_tasks())
      throw std::domain_error("embeddings: task index " + std::to_string(i) +
                              " out of range 1.." + std::to_string(n_tasks()));
  }

  void compute_distances() {
    const std::size_t n = vectors_.size();
    dist_.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        double sq = 0.0;
        for (int k = 0; k < dim_; ++k) {
          const double d = vectors_[a][static_cast<std::size_t>(k)] -
                           vectors_[b][static_cast<std::size_t>(k)];
          sq += d * d;
        }
        dist_[a][b] = dist_[b][a] = std::sqrt(sq);
      }
    }
  }

  int dim_ = 0;
  std::vector<std::vector<double>> vectors_;
  std::vector<std::vector<double>> dist_;
};

// C_{i,n} = { j | d(e_i, e_j) <= d_n } where d_n is the n-th smallest value
// of the multiset { d(e_i, e_j) : j = 1..N }, self distance included.
inline CandidateIndexSet n_nearest(const TaskEmbeddingStore& store, int i,
                                   int n) {
  const int N = store.n_tasks();
  if (i < 1 || i > N)
    throw std::domain_error("n_nearest: task index out of range");
  if (n < 1 || n > N)
    throw std::domain_error("n_nearest: n must be in 1..n_tasks");
  std::vector<double> row(static_cast<std::size_t>(N));
  for (int j = 1; j <= N; ++j)
    row[static_cast<std::size_t>(j - 1)] = store.distance(i, j);
  std::vector<double> sorted = row;
  std::nth_element(sorted.begin(), sorted.begin() + (n - 1), sorted.end());
  const double cutoff = sorted[static_cast<std::size_t>(n - 1)];
  CandidateIndexSet out;
  out.task = i;
  for (int j = 1; j <= N; ++j) {
    if (row[static_cast<std::size_t>(j - 1)] <= cutoff)
      out.neighbors.push_back(j);
  }
  return out;
}

// Synthetic embeddings whose nearest-neighbor structure follows task-index
// adjacency: the first coordinate is the task index, remaining coordinates
// carry small seeded jitter.
inline std::vector<std::vector<double>> synthetic_chain_embeddings(
    int n_tasks, int dim, std::uint64_t seed) {
  if (n_tasks < 1 || dim < 1)
    throw std::invalid_argument(
        "synthetic_chain_embeddings: n_tasks and dim must be positive");
  UniformSource vars(seed);
  std::vector<std::vector<double>> vectors(
      static_cast<std::size_t>(n_tasks),
      std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  for (int i = 0; i < n_tasks; ++i) {
    vectors[static_cast<std::size_t>(i)][0] = static_cast<double>(i + 1);
    for (int k = 1; k < dim; ++k)
      vectors[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
          0.01 * standard_gaussian(vars);
  }
  return vectors;
}

// Noise-free line layout; used as the in-memory default for chain setups.
inline TaskEmbeddingStore chain_line_store(int n_tasks) {
  std::vector<std::vector<double>> vectors(
      static_cast<std::size_t>(n_tasks), std::vector<double>(1, 0.0));
  for (int i = 0; i < n_tasks; ++i)
    vectors[static_cast<std::size_t>(i)][0] = static_cast<double>(i + 1);
  return TaskEmbeddingStore::from_vectors(std::move(vectors));
}

// Goal coordinates as embeddings; neighbor structure = goal proximity.
inline TaskEmbeddingStore goal_coordinate_store(
    const std::vector<std::pair<int, int>>& goals) {
  std::vector<std::vector<double>> vectors;
  vectors.reserve(goals.size());
  for (const auto& g : goals)
    vectors.push_back({static_cast<double>(g.first),
                       static_cast<double>(g.second)});
  return TaskEmbeddingStore::from_vectors(std::move(vectors));
}

inline void write_embeddings_csv(
    const std::vector<std::vector<double>>& vectors,
    const std::filesystem::path& path) {
  if (vectors.empty())
    throw std::invalid_argument("write_embeddings_csv: no rows");
  std::ostringstream ss;
  ss << "task_id";
  for (std::size_t k = 0; k < vectors.front().size(); ++k) ss << ",e" << k;
  ss << '\n';
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    ss << (i + 1);
    for (double v : vectors[i]) ss << ',' << format_double(v);
    ss << '\n';
  }
  write_text_atomic(path, ss.str());
}

}  // namespace mtlevy
