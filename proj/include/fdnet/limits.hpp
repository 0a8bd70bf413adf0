#pragma once

// Finite-n diagnostics for the law of large numbers, the central limit
// theorem and the concentration bound: influence sums, the min-sum statistic,
// ordered decay, S+ decay checks and the moment inequality.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "fdnet/error.hpp"
#include "fdnet/fdm.hpp"
#include "fdnet/netgen.hpp"
#include "fdnet/parallel.hpp"
#include "fdnet/sar.hpp"
#include "fdnet/stats.hpp"

namespace fdnet {

struct MinSumStatistics {
  double literal = 0.0;     // j runs from i to n
  double order_free = 0.0;  // j runs from 1 to n
};

namespace detail {

/// Fenwick tree over value ranks holding (count, sum) pairs.
class RankTree {
 public:
  explicit RankTree(std::size_t n) : count_(n + 1, 0), sum_(n + 1, 0.0) {}

  void clear() {
    std::fill(count_.begin(), count_.end(), 0);
    std::fill(sum_.begin(), sum_.end(), 0.0);
  }

  void insert(std::size_t rank, double value) {
    for (std::size_t k = rank + 1; k < count_.size(); k += k & (~k + 1)) {
      ++count_[k];
      sum_[k] += value;
    }
  }

  /// (count, sum) over ranks < rank.
  std::pair<std::size_t, double> below(std::size_t rank) const {
    std::size_t c = 0;
    double s = 0.0;
    for (std::size_t k = rank; k > 0; k -= k & (~k + 1)) {
      c += count_[k];
      s += sum_[k];
    }
    return {c, s};
  }

 private:
  std::vector<std::size_t> count_;
  std::vector<double> sum_;
};

inline constexpr std::size_t kMinSumRowBlock = 32;

}  // namespace detail

/// (1/n^m) sum_i { sum_{j >= i} sum_k min(S_ki, S_kj) }^m and the variant with
/// j over all nodes. Each row k is swept once with a rank tree, so the cost
/// is O(n^2 log n). Rows are processed in fixed blocks whose partial sums are
/// added in block order, making the result independent of `threads`.
inline MinSumStatistics min_sum_statistics(const Eigen::MatrixXd& s, double m, unsigned threads = 1) {
  const auto n = static_cast<std::size_t>(s.cols());
  if (static_cast<std::size_t>(s.rows()) != n) throw ParameterError("min-sum: matrix must be square");
  MinSumStatistics out;
  if (n == 0) return out;
  const std::size_t blocks = (n + detail::kMinSumRowBlock - 1) / detail::kMinSumRowBlock;
  std::vector<std::vector<double>> literal(blocks), order_free(blocks);
  parallel_for(blocks, threads, [&](std::size_t b) {
    std::vector<double>& lit = literal[b];
    std::vector<double>& all = order_free[b];
    lit.assign(n, 0.0);
    all.assign(n, 0.0);
    std::vector<std::size_t> order(n), rank(n);
    std::vector<double> x(n);
    detail::RankTree tree(n);
    const std::size_t end = std::min(n, (b + 1) * detail::kMinSumRowBlock);
    for (std::size_t k = b * detail::kMinSumRowBlock; k < end; ++k) {
      for (std::size_t i = 0; i < n; ++i) x[i] = s(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return x[a] < x[c]; });
      double prefix = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t i = order[r];
        rank[i] = r;
        // sum_j min(x_i, x_j) = (values ranked below) + x_i * (count ranked at or above)
        all[i] += prefix + x[i] * static_cast<double>(n - r);
        prefix += x[i];
      }
      tree.clear();
      for (std::size_t i = n; i-- > 0;) {
        tree.insert(rank[i], x[i]);
        const auto [c, sum] = tree.below(rank[i]);
        const std::size_t inserted = n - i;
        lit[i] += sum + x[i] * static_cast<double>(inserted - c);
      }
    }
  });
  std::vector<double> total_lit(n, 0.0), total_free(n, 0.0);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      total_lit[i] += literal[b][i];
      total_free[i] += order_free[b][i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    total_lit[i] = std::pow(total_lit[i], m);
    total_free[i] = std::pow(total_free[i], m);
  }
  const double scale = std::pow(static_cast<double>(n), m);
  out.literal = pairwise_sum(total_lit) / scale;
  out.order_free = pairwise_sum(total_free) / scale;
  return out;
}

/// Direct O(n^3) evaluation of the min-sum statistics.
inline MinSumStatistics min_sum_statistics_naive(const Eigen::MatrixXd& s, double m) {
  const Eigen::Index n = s.cols();
  MinSumStatistics out;
  for (Eigen::Index i = 0; i < n; ++i) {
    double lit = 0.0, all = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      double inner = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) inner += std::min(s(k, i), s(k, j));
      all += inner;
      if (j >= i) lit += inner;
    }
    out.literal += std::pow(lit, m);
    out.order_free += std::pow(all, m);
  }
  const double scale = std::pow(static_cast<double>(n), m);
  out.literal /= scale;
  out.order_free /= scale;
  return out;
}

inline double clt_exponent(double p) { return std::min(2.0, p / 2.0); }

struct DecayDiagnostic {
  std::vector<double> alpha_hat;     // per row; NaN when skipped
  std::vector<Index> skipped_rows;   // rows with fewer than 3 nonzero entries
  double alpha_min = std::numeric_limits<double>::infinity();
  double threshold = 0.0;            // m/(m-1)
  Index kappa = 2;
  double tail_sup = 0.0;
  double tail_limit = 0.0;           // n^{-1/m}
  bool pass = false;
};

/// Summary of the limit-theorem conditions for one network / delta matrix.
struct ConditionReport {
  double p = 4.0;
  double m = 2.0;
  Index n = 0;
  double influence = 0.0;             // sup_i sum_k S_ki (or delta(k,i))
  double minsum = 0.0;               // literal j >= i min-sum statistic
  double minsum_order_free = 0.0;    // j over all nodes
  double mean_influence = 0.0;
  std::optional<double> delta_p2;  // Delta_{p,2} for delta-based reports
  std::optional<DecayDiagnostic> decay;
  std::vector<std::string> flags;

  bool flagged(const std::string& f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }
};

inline ConditionReport condition_statistics(const Eigen::MatrixXd& s, double p, unsigned threads) {
  if (!(p > 2.0)) throw ParameterError("clt conditions: need p > 2");
  ConditionReport r;
  r.p = p;
  r.m = clt_exponent(p);
  r.n = static_cast<Index>(s.rows());
  if (r.n == 0) return r;
  const Eigen::VectorXd influence = s.colwise().sum().transpose();
  r.influence = influence.maxCoeff();
  r.mean_influence = influence.mean();
  const auto ms = min_sum_statistics(s, r.m, threads);
  r.minsum = ms.literal;
  r.minsum_order_free = ms.order_free;
  if (r.influence > std::sqrt(static_cast<double>(r.n)) * r.mean_influence) r.flags.push_back("influence-diverging");
  return r;
}

inline ConditionReport clt_conditions_sar(const SPlusMatrix& splus, double p, unsigned threads = 1) {
  return condition_statistics(splus.values, p, threads);
}

inline ConditionReport clt_conditions_delta(const DeltaMatrix& delta, unsigned threads = 1) {
  ConditionReport r = condition_statistics(delta.values, delta.p, threads);
  r.delta_p2 = delta_aggregate(delta, 2.0).value;
  return r;
}

/// Sorts each row of delta in decreasing order, fits log delta against log rank
/// over ranks [2, n/2] and compares tail sums beyond kappa_n = (n/log n)^{1/alpha}
/// with n^{-1/m}.
inline DecayDiagnostic ordered_decay_diagnostic(const DeltaMatrix& delta, double p) {
  const auto n = static_cast<Index>(delta.values.rows());
  if (n < 10) throw ParameterError("ordered decay: need n >= 10");
  const double m = clt_exponent(p);
  if (!(m > 1.0)) throw ParameterError("ordered decay: need p > 2");
  DecayDiagnostic d;
  d.threshold = m / (m - 1.0);
  d.alpha_hat.assign(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::vector<double>> rows(n);
  for (Index i = 0; i < n; ++i) {
    auto& row = rows[i];
    row.resize(n);
    for (Index j = 0; j < n; ++j) row[j] = delta(i, j);
    std::sort(row.begin(), row.end(), std::greater<>());
    const auto nonzero = static_cast<Index>(std::count_if(row.begin(), row.end(), [](double v) { return v > 0.0; }));
    if (nonzero < 3) {
      d.skipped_rows.push_back(i);
      continue;
    }
    std::vector<double> lx, ly;
    for (Index rank = 2; rank <= n / 2 && rank <= nonzero; ++rank) {
      lx.push_back(std::log(static_cast<double>(rank)));
      ly.push_back(std::log(row[rank - 1]));
    }
    if (lx.size() < 2) {
      d.skipped_rows.push_back(i);
      continue;
    }
    d.alpha_hat[i] = -stats::fit_line(lx, ly).slope;
    d.alpha_min = std::min(d.alpha_min, d.alpha_hat[i]);
  }
  const double nn = static_cast<double>(n);
  const double kappa = std::isfinite(d.alpha_min) && d.alpha_min > 0.0
                           ? std::pow(nn / std::log(nn), 1.0 / d.alpha_min)
                           : 1.0;
  d.kappa = std::max<Index>(2, static_cast<Index>(std::ceil(kappa)));
  for (const auto& row : rows) {
    double tail = 0.0;
    for (Index rank = d.kappa; rank <= n; ++rank) tail += row[rank - 1];
    d.tail_sup = std::max(d.tail_sup, tail);
  }
  d.tail_limit = std::pow(nn, -1.0 / m);
  const bool slope_ok = !std::isfinite(d.alpha_min) || d.alpha_min > d.threshold;
  d.pass = d.tail_sup <= d.tail_limit && slope_ok;
  return d;
}

struct BoundCheck {
  double max_ratio = 0.0;  // sup of S+ / bound over checked pairs
  std::size_t pairs = 0;
  std::size_t violations = 0;
};

/// S+_ji <= (L/(1-zeta)) zeta^{d_ji} on every connected pair; S+_ji = 0 across
/// components. Throws PropertyViolation beyond 1e-9 relative.
inline BoundCheck verify_splus_geodesic_bound(const SPlusMatrix& splus, const DistanceMatrix& dist, double lipschitz,
                                              double zeta) {
  if (dist.size() != static_cast<Index>(splus.size())) throw ParameterError("geodesic bound: size mismatch");
  if (!(zeta >= 0.0 && zeta < 1.0)) throw ParameterError("geodesic bound: zeta must lie in [0,1)");
  BoundCheck c;
  const double front = lipschitz / (1.0 - zeta);
  const Index n = dist.size();
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      const double s = splus.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
      const double d = dist(j, i);
      ++c.pairs;
      if (!DistanceMatrix::reachable(d)) {
        if (s > 1e-12) ++c.violations;
        continue;
      }
      const double bound = front * std::pow(zeta, d);
      if (bound > 0.0) c.max_ratio = std::max(c.max_ratio, s / bound);
      if (s > bound * (1.0 + 1e-9) + 1e-300) ++c.violations;
    }
  }
  if (c.violations > 0) {
    throw PropertyViolation("S+ exceeds the geodesic decay bound on " + std::to_string(c.violations) + " pairs");
  }
  return c;
}

using DecayScheme = std::variant<CutoffScheme, PowerDecayScheme>;

/// Decay factor of the Euclidean bounds: zeta^{d/d0} for cutoff weights and
/// d^{-(alpha-dim)} log(2d)^{alpha-dim} for power-decay weights (1 at d = 0).
inline double euclidean_decay_factor(const DecayScheme& scheme, double d, double zeta, Index dim) {
  if (d == 0.0) return 1.0;
  if (const auto* cut = std::get_if<CutoffScheme>(&scheme)) return std::pow(zeta, d / cut->cutoff);
  const double e = std::get<PowerDecayScheme>(scheme).alpha - static_cast<double>(dim);
  return std::pow(d, -e) * std::pow(std::log(2.0 * d), e);
}

struct ImpliedConstant {
  double constant = 0.0;  // sup_ji S+_ji / factor(d_ji)
  double at_distance = 0.0;
};

inline ImpliedConstant verify_splus_euclidean_decay(const SPlusMatrix& splus, const DistanceMatrix& dist,
                                                    const DecayScheme& scheme, Index dim) {
  if (dist.size() != static_cast<Index>(splus.size())) throw ParameterError("euclidean decay: size mismatch");
  ImpliedConstant out;
  const Index n = dist.size();
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      const double d = dist(j, i);
      const double f = euclidean_decay_factor(scheme, d, splus.zeta, dim);
      const double ratio = splus.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) / f;
      if (ratio > out.constant) {
        out.constant = ratio;
        out.at_distance = d;
      }
    }
  }
  return out;
}

struct DecayProbe {
  std::vector<Index> sides;
  std::vector<double> constants;
  bool stable = false;  // finite and non-increasing within the tolerance
};

inline DecayProbe euclidean_decay_probe(Index dim, const std::vector<Index>& sides, const DecayScheme& scheme,
                                        double lambda, const LinkFunction& link, double tolerance = 0.05) {
  DecayProbe probe;
  probe.sides = sides;
  probe.stable = true;
  for (Index side : sides) {
    Lattice lat = gen_lattice({dim, side, scheme});
    auto w = std::make_shared<const WeightsMatrix>(std::move(lat.weights));
    const SarSpec spec(w, link, lambda, NoiseModel::gaussian(1.0));
    const double c = verify_splus_euclidean_decay(compute_splus(spec), lat.distances, scheme, dim).constant;
    if (!std::isfinite(c)) probe.stable = false;
    if (!probe.constants.empty() && c > probe.constants.back() * (1.0 + tolerance)) probe.stable = false;
    probe.constants.push_back(c);
  }
  return probe;
}

inline double rosenthal_constant(double p) {
  if (!(p > 1.0)) throw ParameterError("moment inequality: need p > 1");
  return p >= 2.0 ? std::sqrt(p - 1.0) : 1.0 / (p - 1.0);
}

struct MomentCheck {
  double lhs = 0.0;
  double lhs_std_error = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  // rhs - lhs
  bool holds = false;   // lhs <= rhs + 3 s.e.
};

/// (1/n) || sum_j (Y_j - E Y_j) ||_p against C_p Delta_{p,min(p,2)}^{1/min(p,2)}
/// with Delta from the analytic S+ bound. E Y_j is the grand mean over R runs.
inline MomentCheck moment_inequality_check(const SarSpec& spec, double p, std::size_t replications,
                                           std::uint64_t seed, unsigned threads = 1) {
  if (replications < 2) throw ParameterError("moment inequality: need R >= 2");
  const double cp = rosenthal_constant(p);
  const double q = std::min(p, 2.0);
  const Eigen::MatrixXd y = simulate_replications(spec, replications, seed, threads);
  const auto n = static_cast<double>(spec.size());
  std::vector<double> sums(replications);
  for (std::size_t r = 0; r < replications; ++r) sums[r] = y.col(static_cast<Eigen::Index>(r)).sum();
  const double grand = pairwise_sum(sums) / static_cast<double>(replications);
  stats::Moments powered;
  for (double s : sums) powered.add(std::pow(std::abs(s - grand), p));
  const auto est = stats::root_of_power_mean(powered, p);
  MomentCheck c;
  c.lhs = est.value / n;
  c.lhs_std_error = est.std_error / n;
  c.rhs = cp * std::pow(delta_aggregate(delta_sar_bound(spec, p), q).value, 1.0 / q);
  c.margin = c.rhs - c.lhs;
  c.holds = c.lhs <= c.rhs + 3.0 * c.lhs_std_error;
  return c;
}

struct TailBoundParams {
  double nu = 0.5;
  double gamma0 = 0.0;
  double alpha = 1.0;
  double t0 = 0.0;
  double rate = 0.0;  // 1/(2 e alpha gamma0^alpha), the exponent coefficient of x^alpha
  std::vector<double> grid;
  std::vector<double> probes;  // p^{-nu} sqrt(n) Delta_{p,2}^{1/2} per grid point
};

inline const std::vector<double>& default_concentration_grid() {
  static const std::vector<double> grid{2, 4, 6, 8, 12, 16};
  return grid;
}

/// gamma0 = max over the grid of p^{-nu} sqrt(n) Delta_{p,2}^{1/2}, alpha = 2/(1+2nu),
/// t0 = 1/(e alpha gamma0^alpha).
inline TailBoundParams concentration_params(const SarSpec& spec, double nu,
                                            const std::vector<double>& grid = default_concentration_grid()) {
  if (grid.empty()) throw ParameterError("concentration: empty p grid");
  if (!(nu >= 0.0)) throw ParameterError("concentration: nu must be nonnegative");
  TailBoundParams t;
  t.nu = nu;
  t.grid = grid;
  const SPlusMatrix splus = compute_splus(spec);
  const double n = static_cast<double>(spec.size());
  for (double p : grid) {
    if (!(p >= 2.0)) throw ParameterError("concentration: grid orders must be at least 2");
    const auto norm = spec.noise().norm(p);
    if (!norm) throw CapabilityError("concentration: ||eps||_p unavailable for " + spec.noise().describe());
    const DeltaMatrix bound = DeltaMatrix::deterministic(2.0 * *norm * splus.values, p, DeltaMode::analytic_bound);
    const double probe = std::pow(p, -nu) * std::sqrt(n) * std::sqrt(delta_aggregate(bound, 2.0).value);
    t.probes.push_back(probe);
    t.gamma0 = std::max(t.gamma0, probe);
  }
  t.alpha = 2.0 / (1.0 + 2.0 * nu);
  t.t0 = 1.0 / (std::exp(1.0) * t.alpha * std::pow(t.gamma0, t.alpha));
  t.rate = 0.5 * t.t0;
  return t;
}

}  // namespace fdnet
