#pragma once

// Network generation, weights matrices and graph distances.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "fdnet/error.hpp"
#include "fdnet/rng.hpp"

namespace fdnet {

using Index = std::size_t;

struct Edge {
  Index i = 0;  // 0-based, i < j
  Index j = 0;
  double weight = 1.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Undirected simple graph with optional nonnegative edge weights.
class Graph {
 public:
  Graph() = default;

  /// Validates and canonicalises the edges: endpoints are reordered so i < j,
  /// and edges are sorted lexicographically.
  Graph(Index n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)) {
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(edges_.size() * 2);
    for (Edge& e : edges_) {
      if (e.i >= n_ || e.j >= n_) throw DataError("graph: node id out of range");
      if (e.i == e.j) throw DataError("graph: self-loop at node " + std::to_string(e.i + 1));
      if (!(e.weight >= 0.0)) throw DataError("graph: negative or NaN edge weight");
      if (e.i > e.j) std::swap(e.i, e.j);
      if (!seen.insert(key(e.i, e.j)).second) {
        throw DataError("graph: duplicate pair (" + std::to_string(e.i + 1) + "," + std::to_string(e.j + 1) + ")");
      }
    }
    std::sort(edges_.begin(), edges_.end(),
              [](const Edge& a, const Edge& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
  }

  Index size() const noexcept { return n_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  std::vector<std::vector<Index>> adjacency_lists() const {
    std::vector<std::vector<Index>> adj(n_);
    for (const Edge& e : edges_) {
      adj[e.i].push_back(e.j);
      adj[e.j].push_back(e.i);
    }
    return adj;
  }

  std::vector<Index> degrees() const {
    std::vector<Index> deg(n_, 0);
    for (const Edge& e : edges_) {
      ++deg[e.i];
      ++deg[e.j];
    }
    return deg;
  }

  /// Symmetric matrix of edge weights with zero diagonal.
  Eigen::MatrixXd adjacency_matrix() const {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    for (const Edge& e : edges_) {
      a(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.j)) = e.weight;
      a(static_cast<Eigen::Index>(e.j), static_cast<Eigen::Index>(e.i)) = e.weight;
    }
    return a;
  }

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  static std::uint64_t key(Index i, Index j) noexcept { return (std::uint64_t{i} << 32) | std::uint64_t{j}; }

  Index n_ = 0;
  std::vector<Edge> edges_;
};

/// Where a weights matrix came from: generator + parameters + seed, or a file.
struct Provenance {
  std::string source;
  std::vector<std::pair<std::string, std::string>> params;
  std::vector<Index> isolated;  // 0-based nodes left with a zero row

  std::string describe() const {
    std::ostringstream os;
    os << "source=" << source;
    for (const auto& [k, v] : params) os << ' ' << k << '=' << v;
    if (!isolated.empty()) os << " isolated=" << isolated.size();
    os << " rng=" << kRngAlgorithm;
    return os.str();
  }
};

/// Nonnegative n x n network weights with zero diagonal.
///
/// Storage is dense; matrices with density below 5% additionally keep a
/// row-major sparse copy used for matrix-vector products.
class WeightsMatrix {
 public:
  static constexpr double kSparseDensity = 0.05;
  static constexpr double kRowSumTolerance = 1e-12;

  WeightsMatrix(Eigen::MatrixXd entries, bool normalized, Provenance provenance)
      : dense_(std::move(entries)), normalized_(normalized), provenance_(std::move(provenance)) {
    if (dense_.rows() != dense_.cols()) throw DataError("weights: matrix must be square");
    Eigen::Index nnz = 0;
    for (Eigen::Index j = 0; j < dense_.rows(); ++j) {
      if (dense_(j, j) != 0.0) throw DataError("weights: nonzero diagonal at node " + std::to_string(j + 1));
      for (Eigen::Index i = 0; i < dense_.cols(); ++i) {
        const double w = dense_(j, i);
        if (!(w >= 0.0)) throw DataError("weights: negative or NaN entry");
        if (w != 0.0) ++nnz;
      }
    }
    if (normalized_) {
      for (Eigen::Index j = 0; j < dense_.rows(); ++j) {
        const double s = dense_.row(j).sum();
        if (s != 0.0 && std::abs(s - 1.0) > kRowSumTolerance) {
          throw DataError("weights: row " + std::to_string(j + 1) + " does not sum to one");
        }
      }
    }
    const double cells = static_cast<double>(dense_.size());
    if (cells > 0 && static_cast<double>(nnz) < kSparseDensity * cells) {
      sparse_ = dense_.sparseView();
      sparse_->makeCompressed();
    }
  }

  Index size() const noexcept { return static_cast<Index>(dense_.rows()); }
  const Eigen::MatrixXd& dense() const noexcept { return dense_; }
  double operator()(Index j, Index i) const {
    return dense_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
  }
  bool normalized() const noexcept { return normalized_; }
  bool is_sparse() const noexcept { return sparse_.has_value(); }
  const Provenance& provenance() const noexcept { return provenance_; }

  /// ||W||_inf, the largest absolute row sum.
  double inf_norm() const { return dense_.size() == 0 ? 0.0 : dense_.rowwise().sum().maxCoeff(); }

  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const {
    if (sparse_) return (*sparse_) * x;
    return dense_ * x;
  }

  Eigen::MatrixXd multiply(const Eigen::MatrixXd& x) const {
    if (sparse_) return (*sparse_) * x;
    return dense_ * x;
  }

 private:
  Eigen::MatrixXd dense_;
  std::optional<Eigen::SparseMatrix<double, Eigen::RowMajor>> sparse_;
  bool normalized_ = false;
  Provenance provenance_;
};

enum class DistanceKind { geodesic, chebyshev_lattice };

/// Symmetric matrix of pairwise distances; unreachable pairs hold +infinity.
struct DistanceMatrix {
  static constexpr double kUnreachable = std::numeric_limits<double>::infinity();

  Eigen::MatrixXd entries;
  DistanceKind kind = DistanceKind::geodesic;

  Index size() const noexcept { return static_cast<Index>(entries.rows()); }
  double operator()(Index a, Index b) const {
    return entries(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  }
  static bool reachable(double d) noexcept { return std::isfinite(d); }
};

/// Row-normalise raw nonnegative weights. Zero rows stay zero and are recorded
/// as isolated in the provenance.
inline WeightsMatrix row_normalize(const Eigen::MatrixXd& raw, Provenance provenance) {
  if (raw.rows() != raw.cols()) throw DataError("row_normalize: matrix must be square");
  Eigen::MatrixXd w = raw;
  provenance.isolated.clear();
  for (Eigen::Index j = 0; j < w.rows(); ++j) {
    if (w(j, j) != 0.0) throw DataError("row_normalize: nonzero diagonal at node " + std::to_string(j + 1));
    double s = 0.0;
    for (Eigen::Index i = 0; i < w.cols(); ++i) {
      if (!(w(j, i) >= 0.0)) throw DataError("row_normalize: negative entry in row " + std::to_string(j + 1));
      s += w(j, i);
    }
    if (s == 0.0) {
      provenance.isolated.push_back(static_cast<Index>(j));
      continue;
    }
    w.row(j) /= s;
  }
  return WeightsMatrix(std::move(w), true, std::move(provenance));
}

inline WeightsMatrix row_normalize(const Graph& g, Provenance provenance) {
  return row_normalize(g.adjacency_matrix(), std::move(provenance));
}

inline WeightsMatrix row_normalize(const Graph& g) { return row_normalize(g, Provenance{"graph", {}, {}}); }

namespace detail {

inline std::string num(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

/// Index of the unordered pair (i, j), i < j, in row-major upper-triangle order.
constexpr std::uint64_t pair_index(std::uint64_t n, std::uint64_t i, std::uint64_t j) noexcept {
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

inline std::vector<Edge> bernoulli_pairs(Index n, const Stream& stream, auto&& probability) {
  std::vector<Edge> edges;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double p = probability(i, j);
      if (p <= 0.0) continue;
      if (stream.uniform_at(pair_index(n, i, j)) < p) edges.push_back({i, j, 1.0});
    }
  }
  return edges;
}

inline double choose3(Index n) {
  const double m = static_cast<double>(n);
  return m * (m - 1.0) * (m - 2.0) / 6.0;
}

/// Lexicographic unranking of trio index t into i < j < k.
inline std::array<Index, 3> unrank_trio(Index n, std::uint64_t t) {
  Index i = 0;
  for (;; ++i) {
    const std::uint64_t rest = static_cast<std::uint64_t>(n - 1 - i);
    const std::uint64_t block = rest * (rest - 1) / 2;
    if (t < block) break;
    t -= block;
  }
  Index j = i + 1;
  for (;; ++j) {
    const std::uint64_t block = static_cast<std::uint64_t>(n - 1 - j);
    if (t < block) break;
    t -= block;
  }
  return {i, j, j + 1 + static_cast<Index>(t)};
}

}  // namespace detail

/// Erdos-Renyi graph: each pair links independently with probability D/(n-1).
/// Pair (i,j) reads draw pair_index(i,j) of the "er" sub-stream of `seed`.
inline Graph gen_er(Index n, double mean_degree, std::uint64_t seed) {
  if (n < 2) throw ParameterError("gen_er: need n >= 2");
  if (!(mean_degree >= 1.0 && mean_degree <= static_cast<double>(n - 1))) {
    throw ParameterError("gen_er: mean degree must lie in [1, n-1]");
  }
  const double p = mean_degree / static_cast<double>(n - 1);
  const Stream stream = Stream(seed).child("er");
  return Graph(n, detail::bernoulli_pairs(n, stream, [p](Index, Index) { return p; }));
}

/// Triangle model: every trio closes with probability T / C(n,3), OR-ed with
/// an independent ER(n, D) graph drawn from the same sub-stream gen_er uses.
inline Graph gen_triangle(Index n, double triangles, double mean_degree, std::uint64_t seed) {
  if (n < 3) throw ParameterError("gen_triangle: need n >= 3");
  if (!(triangles >= 0.0)) throw ParameterError("gen_triangle: T must be nonnegative");
  const double trios = detail::choose3(n);
  const double q = triangles / trios;
  if (q > 1.0) throw ParameterError("gen_triangle: T / C(n,3) exceeds one");

  const Graph er = gen_er(n, mean_degree, seed);
  std::unordered_set<std::uint64_t> pairs;
  std::vector<Edge> edges = er.edges();
  for (const Edge& e : edges) pairs.insert(detail::pair_index(n, e.i, e.j));
  auto link = [&](Index a, Index b) {
    if (pairs.insert(detail::pair_index(n, a, b)).second) edges.push_back({a, b, 1.0});
  };

  const auto total = static_cast<std::uint64_t>(std::llround(trios));
  if (q > 0.0) {
    Stream stream = Stream(seed).child("triangle");
    // Geometric skipping over trio indices: gaps between closed trios are
    // Geometric(q), so only O(T) draws are needed.
    const double log_miss = std::log1p(-q);
    std::uint64_t t = 0;
    for (;;) {
      if (q < 1.0) {
        const double gap = std::floor(std::log(stream.uniform_open()) / log_miss);
        if (gap >= static_cast<double>(total - t)) break;
        t += static_cast<std::uint64_t>(gap);
      }
      if (t >= total) break;
      const auto [a, b, c] = detail::unrank_trio(n, t);
      link(a, b);
      link(a, c);
      link(b, c);
      ++t;
    }
  }
  return Graph(n, std::move(edges));
}

/// Block labels in [0, M) for the stochastic block model, each uniform.
inline std::vector<Index> sbm_blocks(Index n, Index blocks, std::uint64_t seed) {
  const Stream stream = Stream(seed).child("sbm-blocks");
  std::vector<Index> labels(n);
  for (Index i = 0; i < n; ++i) {
    labels[i] = std::min<Index>(blocks - 1, static_cast<Index>(stream.uniform_at(i) * static_cast<double>(blocks)));
  }
  return labels;
}

/// Stochastic block model with within-block mean degree D_wb and between-block
/// mean degree D_bb, using the expected block size n/M.
inline Graph gen_sbm(Index n, Index blocks, double within_degree, double between_degree, std::uint64_t seed) {
  if (blocks < 1 || n < 2 * blocks) throw ParameterError("gen_sbm: need n >= 2M >= 2");
  const double block_size = static_cast<double>(n) / static_cast<double>(blocks);
  const double p_within = within_degree / (block_size - 1.0);
  if (!(p_within >= 0.0 && p_within <= 1.0)) throw ParameterError("gen_sbm: within-block probability outside [0,1]");
  double p_between = 0.0;
  if (blocks > 1) {
    p_between = between_degree / (static_cast<double>(n) - block_size);
    if (!(p_between >= 0.0 && p_between <= 1.0)) {
      throw ParameterError("gen_sbm: between-block probability outside [0,1]");
    }
  }
  const std::vector<Index> labels = sbm_blocks(n, blocks, seed);
  const Stream stream = Stream(seed).child("sbm-links");
  return Graph(n, detail::bernoulli_pairs(n, stream, [&](Index i, Index j) {
                 return labels[i] == labels[j] ? p_within : p_between;
               }));
}

/// M = sqrt(n)/2 blocks, rounded, at least one.
inline Index sbm_auto_blocks(Index n) {
  return std::max<Index>(1, static_cast<Index>(std::llround(std::sqrt(static_cast<double>(n)) / 2.0)));
}

struct CutoffScheme {
  double cutoff = 1.5;  // d0 > 1: weights vanish once distance >= d0
  double base = 1.0;
};

struct PowerDecayScheme {
  double c0 = 1.0;
  double alpha = 3.0;  // must exceed the lattice dimension
};

struct LatticeConfig {
  Index dim = 1;
  Index side = 2;
  std::variant<CutoffScheme, PowerDecayScheme> scheme = CutoffScheme{};
};

struct Lattice {
  WeightsMatrix weights;
  DistanceMatrix distances;
  Graph raw;  // symmetric raw interaction weights before normalisation
};

/// Chebyshev distances between the nodes of a dim-dimensional grid with the
/// given side; node index = sum_k coord_k * side^k.
inline DistanceMatrix lattice_distances(Index dim, Index side) {
  Index n = 1;
  for (Index k = 0; k < dim; ++k) n *= side;
  auto coords = [&](Index v) {
    std::vector<Index> c(dim);
    for (Index k = 0; k < dim; ++k) {
      c[k] = v % side;
      v /= side;
    }
    return c;
  };
  std::vector<std::vector<Index>> all(n);
  for (Index v = 0; v < n; ++v) all[v] = coords(v);
  DistanceMatrix d{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)),
                   DistanceKind::chebyshev_lattice};
  for (Index a = 0; a < n; ++a) {
    for (Index b = a + 1; b < n; ++b) {
      Index m = 0;
      for (Index k = 0; k < dim; ++k) {
        const Index diff = all[a][k] > all[b][k] ? all[a][k] - all[b][k] : all[b][k] - all[a][k];
        m = std::max(m, diff);
      }
      d.entries(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = static_cast<double>(m);
      d.entries(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = static_cast<double>(m);
    }
  }
  return d;
}

inline Lattice gen_lattice(const LatticeConfig& config) {
  if (config.dim < 1) throw ParameterError("gen_lattice: dimension must be positive");
  if (config.side < 2) throw ParameterError("gen_lattice: side must be at least 2");
  DistanceMatrix dist = lattice_distances(config.dim, config.side);
  const Index n = dist.size();
  std::vector<Edge> raw;
  Provenance prov{"lattice", {{"dim", std::to_string(config.dim)}, {"side", std::to_string(config.side)}}, {}};
  double scale = 1.0;

  if (const auto* cut = std::get_if<CutoffScheme>(&config.scheme)) {
    if (!(cut->cutoff > 1.0)) throw ParameterError("gen_lattice: cutoff distance must exceed 1");
    if (!(cut->base > 0.0)) throw ParameterError("gen_lattice: base weight must be positive");
    prov.params.emplace_back("scheme", "cutoff");
    prov.params.emplace_back("cutoff", detail::num(cut->cutoff));
    prov.params.emplace_back("base", detail::num(cut->base));
    for (Index a = 0; a < n; ++a) {
      for (Index b = a + 1; b < n; ++b) {
        if (dist(a, b) < cut->cutoff) raw.push_back({a, b, 1.0});
      }
    }
    scale = cut->base;
  } else {
    const auto& pw = std::get<PowerDecayScheme>(config.scheme);
    if (!(pw.alpha > static_cast<double>(config.dim))) {
      throw ParameterError("gen_lattice: power-decay exponent must exceed the dimension");
    }
    if (!(pw.c0 > 0.0)) throw ParameterError("gen_lattice: C0 must be positive");
    prov.params.emplace_back("scheme", "power");
    prov.params.emplace_back("c0", detail::num(pw.c0));
    prov.params.emplace_back("alpha", detail::num(pw.alpha));
    for (Index a = 0; a < n; ++a) {
      for (Index b = a + 1; b < n; ++b) raw.push_back({a, b, pw.c0 * std::pow(dist(a, b), -pw.alpha)});
    }
  }
  Graph g(n, std::move(raw));
  WeightsMatrix normalized = row_normalize(g, prov);
  if (scale != 1.0) {
    normalized = WeightsMatrix(normalized.dense() * scale, false, normalized.provenance());
  }
  return Lattice{std::move(normalized), std::move(dist), std::move(g)};
}

/// All-pairs hop counts by breadth-first search from every node.
inline DistanceMatrix geodesic_distances(const Graph& g) {
  const Index n = g.size();
  const auto adj = g.adjacency_lists();
  DistanceMatrix d{Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n),
                                             DistanceMatrix::kUnreachable),
                   DistanceKind::geodesic};
  std::vector<std::int64_t> hops(n);
  std::deque<Index> queue;
  for (Index s = 0; s < n; ++s) {
    std::fill(hops.begin(), hops.end(), -1);
    hops[s] = 0;
    queue.assign(1, s);
    while (!queue.empty()) {
      const Index v = queue.front();
      queue.pop_front();
      for (Index u : adj[v]) {
        if (hops[u] < 0) {
          hops[u] = hops[v] + 1;
          queue.push_back(u);
        }
      }
    }
    for (Index t = 0; t < n; ++t) {
      if (hops[t] >= 0) d.entries(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) = static_cast<double>(hops[t]);
    }
  }
  return d;
}

/// |{j : d(i,j) = l}| for l = 0, 1, ..., up to the eccentricity of i.
inline std::vector<Index> shell_sizes(const DistanceMatrix& dist, Index node) {
  if (node >= dist.size()) throw ParameterError("shell_sizes: node out of range");
  std::vector<Index> counts;
  for (Index j = 0; j < dist.size(); ++j) {
    const double d = dist(node, j);
    if (!DistanceMatrix::reachable(d)) continue;
    const auto l = static_cast<Index>(d);
    if (counts.size() <= l) counts.resize(l + 1, 0);
    ++counts[l];
  }
  return counts;
}

}  // namespace fdnet
