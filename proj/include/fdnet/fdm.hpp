#pragma once

// Functional dependence measures delta_p(j, i) = || Y_j - Y_{j,i} ||_p, where
// Y_{j,i} recomputes Y_j after input i is replaced by an independent copy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fdnet/error.hpp"
#include "fdnet/io.hpp"
#include "fdnet/parallel.hpp"
#include "fdnet/rng.hpp"
#include "fdnet/sar.hpp"
#include "fdnet/stats.hpp"

namespace fdnet {

enum class DeltaMode { analytic_bound, exact, monte_carlo };

inline std::string_view mode_name(DeltaMode m) {
  switch (m) {
    case DeltaMode::analytic_bound: return "analytic-bound";
    case DeltaMode::exact: return "exact";
    case DeltaMode::monte_carlo: return "monte-carlo";
  }
  return "?";
}

/// delta(j, i): row j is the affected outcome, column i the perturbed input.
struct DeltaMatrix {
  Eigen::MatrixXd values;
  double p = 2.0;
  DeltaMode mode = DeltaMode::exact;
  std::size_t replications = 0;   // Monte Carlo only
  std::uint64_t seed = 0;         // Monte Carlo only
  Eigen::MatrixXd std_errors;     // Monte Carlo only; zero elsewhere
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> estimated;  // Monte Carlo target mask

  Index size() const noexcept { return static_cast<Index>(values.rows()); }
  double operator()(Index j, Index i) const {
    return values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
  }

  static DeltaMatrix deterministic(Eigen::MatrixXd v, double p, DeltaMode mode) {
    DeltaMatrix d;
    d.values = std::move(v);
    d.p = p;
    d.mode = mode;
    return d;
  }
};

inline void check_order(double p, const char* where) {
  if (!(p >= 1.0)) throw ParameterError(std::string(where) + ": moment order p must be at least 1");
}

/// Moment bounds used by the transformation calculus.
class MomentBook {
 public:
  /// Records ||series||_{L^q}.
  void set(const std::string& series, double q, double value) {
    if (!(std::isfinite(value) && value > 0.0)) {
      throw ParameterError("moment book: bounds must be finite and positive (" + series + ")");
    }
    norms_[series][q] = value;
  }

  std::optional<double> find(const std::string& series, double q) const {
    const auto s = norms_.find(series);
    if (s == norms_.end()) return std::nullopt;
    const auto v = s->second.find(q);
    if (v == s->second.end()) return std::nullopt;
    return v->second;
  }

  double require(const std::string& series, double q) const {
    const auto v = find(series, q);
    if (!v) throw CapabilityError("moment book: no L^" + io::format_double(q) + " bound for '" + series + "'");
    return *v;
  }

  void set_noise_coupled(double p, double value) { set("noise-coupled", p, value); }
  std::optional<double> noise_coupled(double p) const { return find("noise-coupled", p); }

 private:
  std::map<std::string, std::map<double, double>> norms_;
};

/// delta(j,i) = |A_ji| * ||eps_i - eps_i*||_p for Y = A eps (+ constant).
inline DeltaMatrix delta_linear_exact(const Eigen::MatrixXd& a, const NoiseModel& noise, double p) {
  check_order(p, "delta_linear_exact");
  const auto scale = noise.coupled_norm(p);
  if (!scale) {
    throw CapabilityError("delta_linear_exact: no closed-form ||eps - eps*||_p for " + noise.describe() + " at p = " +
                          io::format_double(p));
  }
  return DeltaMatrix::deterministic(a.cwiseAbs() * *scale, p, DeltaMode::exact);
}

/// The linear-SAR coefficient matrix (I - lambda W)^{-1}.
inline Eigen::MatrixXd sar_linear_coefficients(const SarSpec& spec) {
  const auto n = static_cast<Eigen::Index>(spec.size());
  return (Eigen::MatrixXd::Identity(n, n) - spec.lambda() * spec.weights().dense()).partialPivLu().inverse();
}

/// 2 ||eps||_p S+.
inline DeltaMatrix delta_sar_bound(const SarSpec& spec, double p) {
  check_order(p, "delta_sar_bound");
  const auto norm = spec.noise().norm(p);
  if (!norm) throw CapabilityError("delta_sar_bound: ||eps||_p unavailable for " + spec.noise().describe());
  return DeltaMatrix::deterministic(2.0 * *norm * compute_splus(spec).values, p, DeltaMode::analytic_bound);
}

struct Target {
  Index j;  // affected outcome
  Index i;  // perturbed input
};

using InnovationRow = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

/// A coupled system driven by per-node innovation blocks of fixed width.
/// `evaluate` maps an n x width innovation matrix to an n x series outputs
/// matrix and must be safe to call concurrently.
struct CoupledModel {
  Index n = 0;
  Index width = 1;
  std::function<void(Stream&, InnovationRow)> draw;
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> evaluate;
  Index series = 1;
};

struct CoupledEstimate {
  std::vector<double> orders;
  std::vector<DeltaMatrix> deltas;  // index = series * orders.size() + order index

  const DeltaMatrix& at(Index series, std::size_t order_index = 0) const {
    return deltas.at(series * orders.size() + order_index);
  }
};

inline constexpr std::size_t kCouplingBlock = 64;

/// Coupled Monte Carlo: replication r draws base innovations for node i from
/// Stream(seed).child(r).child(0).child(i) and the replacement from
/// ...child(1).child(i). Accumulation order is fixed, so the estimate does not
/// depend on `threads`.
inline CoupledEstimate coupled_monte_carlo(const CoupledModel& model, const std::vector<double>& orders,
                                           std::size_t replications, std::uint64_t seed,
                                           std::vector<Target> targets = {}, unsigned threads = 1) {
  if (replications < 100) throw ParameterError("delta_monte_carlo: need R >= 100");
  if (orders.empty()) throw ParameterError("delta_monte_carlo: no moment orders");
  for (double p : orders) check_order(p, "delta_monte_carlo");
  const Index n = model.n;
  if (targets.empty()) {
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) targets.push_back({j, i});
  }
  // Group targets by perturbed column so each replacement is solved once.
  std::map<Index, std::vector<Index>> rows_of;
  for (const Target& t : targets) {
    if (t.i >= n || t.j >= n) throw ParameterError("delta_monte_carlo: target outside 1..n");
    rows_of[t.i].push_back(t.j);
  }
  std::vector<Index> columns;
  std::vector<std::vector<Index>> column_rows;
  for (auto& [i, rows] : rows_of) {
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    columns.push_back(i);
    column_rows.push_back(rows);
  }
  const std::size_t k_orders = orders.size();
  const Index k_series = model.series;
  // moments[c][(row_pos * series + s) * orders + o]
  std::vector<std::vector<stats::Moments>> moments(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) moments[c].resize(column_rows[c].size() * k_series * k_orders);

  const auto width = static_cast<Eigen::Index>(model.width);
  auto draw_matrix = [&](Stream base) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), width);
    for (Index i = 0; i < n; ++i) {
      Stream s = base.child(i);
      model.draw(s, x.row(static_cast<Eigen::Index>(i)));
    }
    return x;
  };

  for (std::size_t start = 0; start < replications; start += kCouplingBlock) {
    const std::size_t count = std::min(kCouplingBlock, replications - start);
    std::vector<Eigen::MatrixXd> base(count), replacement(count), outputs(count);
    parallel_for(count, threads, [&](std::size_t b) {
      const Stream rs = Stream(seed).child(start + b);
      base[b] = draw_matrix(rs.child(0));
      replacement[b] = draw_matrix(rs.child(1));
      outputs[b] = model.evaluate(base[b]);
    });
    parallel_for(columns.size(), threads, [&](std::size_t c) {
      const auto i = static_cast<Eigen::Index>(columns[c]);
      for (std::size_t b = 0; b < count; ++b) {
        Eigen::MatrixXd perturbed = base[b];
        perturbed.row(i) = replacement[b].row(i);
        const Eigen::MatrixXd out = model.evaluate(perturbed);
        const auto& rows = column_rows[c];
        for (std::size_t rp = 0; rp < rows.size(); ++rp) {
          const auto j = static_cast<Eigen::Index>(rows[rp]);
          for (Index s = 0; s < k_series; ++s) {
            const double diff = std::abs(out(j, static_cast<Eigen::Index>(s)) -
                                         outputs[b](j, static_cast<Eigen::Index>(s)));
            for (std::size_t o = 0; o < k_orders; ++o) {
              moments[c][(rp * k_series + s) * k_orders + o].add(std::pow(diff, orders[o]));
            }
          }
        }
      }
    });
  }

  CoupledEstimate est;
  est.orders = orders;
  const auto nn = static_cast<Eigen::Index>(n);
  for (Index s = 0; s < k_series; ++s) {
    for (std::size_t o = 0; o < k_orders; ++o) {
      DeltaMatrix d;
      d.values = Eigen::MatrixXd::Zero(nn, nn);
      d.std_errors = Eigen::MatrixXd::Zero(nn, nn);
      d.estimated = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(nn, nn, false);
      d.p = orders[o];
      d.mode = DeltaMode::monte_carlo;
      d.replications = replications;
      d.seed = seed;
      for (std::size_t c = 0; c < columns.size(); ++c) {
        for (std::size_t rp = 0; rp < column_rows[c].size(); ++rp) {
          const auto e = stats::root_of_power_mean(moments[c][(rp * k_series + s) * k_orders + o], orders[o]);
          const auto j = static_cast<Eigen::Index>(column_rows[c][rp]);
          const auto i = static_cast<Eigen::Index>(columns[c]);
          d.values(j, i) = e.value;
          d.std_errors(j, i) = e.std_error;
          d.estimated(j, i) = true;
        }
      }
      est.deltas.push_back(std::move(d));
    }
  }
  return est;
}

/// Width-one coupled model whose outputs are `transforms` applied to the SAR
/// outcome (identity when empty).
inline CoupledModel sar_coupled_model(const SarSpec& spec, std::vector<std::function<double(double)>> transforms = {}) {
  auto solver = std::make_shared<SarSolver>(spec);
  CoupledModel m;
  m.n = spec.size();
  m.width = 1;
  const NoiseModel noise = spec.noise();
  m.draw = [noise](Stream& s, InnovationRow row) { row(0) = noise.draw(s); };
  m.series = transforms.empty() ? 1 : static_cast<Index>(transforms.size());
  m.evaluate = [solver, transforms](const Eigen::MatrixXd& x) {
    const Eigen::VectorXd y = solver->solve(x.col(0));
    if (transforms.empty()) return Eigen::MatrixXd(y);
    Eigen::MatrixXd out(y.size(), static_cast<Eigen::Index>(transforms.size()));
    for (std::size_t t = 0; t < transforms.size(); ++t) out.col(static_cast<Eigen::Index>(t)) = y.unaryExpr(transforms[t]);
    return out;
  };
  return m;
}

/// Default targets: every (j, i) when n <= 200; larger networks need an explicit subset.
inline DeltaMatrix delta_monte_carlo(const SarSpec& spec, double p, std::size_t replications, std::uint64_t seed,
                                     std::vector<Target> targets = {}, unsigned threads = 1) {
  if (targets.empty() && spec.size() > 200) {
    throw ParameterError("delta_monte_carlo: n > 200 requires an explicit target subset");
  }
  return coupled_monte_carlo(sar_coupled_model(spec), {p}, replications, seed, std::move(targets), threads).at(0);
}

struct Aggregate {
  double value = 0.0;
  Eigen::VectorXd influence;  // sum_j delta(j, i) per input i
};

/// Delta_{p,q} = n^{-q} sum_i (sum_j delta(j,i))^q.
inline Aggregate delta_aggregate(const DeltaMatrix& delta, double q) {
  if (!(q >= 1.0)) throw ParameterError("delta_aggregate: q must be at least 1");
  Aggregate a;
  a.influence = delta.values.colwise().sum().transpose();
  const double n = static_cast<double>(delta.values.cols());
  if (n == 0) return a;
  std::vector<double> powered(static_cast<std::size_t>(a.influence.size()));
  for (Eigen::Index i = 0; i < a.influence.size(); ++i) powered[static_cast<std::size_t>(i)] = std::pow(a.influence(i), q);
  a.value = pairwise_sum(powered) / std::pow(n, q);
  return a;
}

// Transformation calculus. Each returns a bound in analytic-bound mode.

inline DeltaMatrix as_bound(Eigen::MatrixXd v, double p) {
  return DeltaMatrix::deterministic(std::move(v), p, DeltaMode::analytic_bound);
}

inline bool exponents_match(double p, double q, double r) {
  return std::abs(1.0 / p - (1.0 / q + 1.0 / r)) <= 1e-12;
}

/// Z = H(Y) with |H(y) - H(y')| <= C |y - y'|.
inline DeltaMatrix fdm_lipschitz(const DeltaMatrix& delta_y, double c) {
  if (!(c >= 0.0)) throw ParameterError("fdm_lipschitz: C must be nonnegative");
  return as_bound(c * delta_y.values, delta_y.p);
}

/// |H(y) - H(y')| <= C1 (|y|^a + |y'|^a + 1) |y - y'|, Hoelder split 1/p = 1/q + 1/r.
/// Needs ||Y||_{L^{ar}} under `series` in the book.
inline DeltaMatrix fdm_poly_lipschitz_holder(const DeltaMatrix& delta_y_q, const MomentBook& book,
                                             const std::string& series, double a, double c1, double p, double q,
                                             double r) {
  if (!(a >= 0.0) || !(c1 >= 0.0)) throw ParameterError("fdm_poly_lipschitz_holder: need a >= 0 and C1 >= 0");
  if (!exponents_match(p, q, r)) throw ParameterError("fdm_poly_lipschitz_holder: need 1/p = 1/q + 1/r");
  if (delta_y_q.p != q) throw ParameterError("fdm_poly_lipschitz_holder: input delta must be of order q");
  const double norm = book.require(series, a * r);
  return as_bound(c1 * (2.0 * std::pow(norm, a) + 1.0) * delta_y_q.values, p);
}

inline double poly_moment_exponent(double a, double p, double q) {
  return (q - a * p - p) / (p * q - a * p - p);
}

/// Moment variant: C2 * delta^{(q - ap - p)/(pq - ap - p)} for q > max(ap/(p-1), ap + p).
inline DeltaMatrix fdm_poly_lipschitz_moment(const DeltaMatrix& delta_y_p, double a, double p, double q,
                                             double c2 = 1.0) {
  if (!(p > 1.0)) throw ParameterError("fdm_poly_lipschitz_moment: need p > 1");
  if (delta_y_p.p != p) throw ParameterError("fdm_poly_lipschitz_moment: input delta must be of order p");
  const double threshold = std::max(a * p / (p - 1.0), a * p + p);
  if (!(q > threshold)) {
    throw ParameterError("fdm_poly_lipschitz_moment: q must exceed " + io::format_double(threshold));
  }
  const double e = poly_moment_exponent(a, p, q);
  return as_bound(c2 * delta_y_p.values.array().pow(e).matrix(), p);
}

/// Constant of the indicator bound for a conditional density bounded by C1.
inline double indicator_constant(double density_bound, double p) {
  return 1.0 + std::pow(2.0 * density_bound, 1.0 / p);
}

/// Z = 1(Y > 0): (1 + (2 C1)^{1/p}) delta^{1/(p+1)}.
inline DeltaMatrix fdm_indicator(const DeltaMatrix& delta_y, std::optional<double> density_bound) {
  if (!density_bound) throw CapabilityError("fdm_indicator: a density bound is required");
  if (!(*density_bound > 0.0)) throw ParameterError("fdm_indicator: density bound must be positive");
  const double p = delta_y.p;
  return as_bound(indicator_constant(*density_bound, p) * delta_y.values.array().pow(1.0 / (p + 1.0)).matrix(), p);
}

inline void check_same_shape(const DeltaMatrix& a, const DeltaMatrix& b, const char* where) {
  if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols()) {
    throw ParameterError(std::string(where) + ": shape mismatch");
  }
}

inline DeltaMatrix fdm_sum(const DeltaMatrix& delta_y, const DeltaMatrix& delta_z) {
  check_same_shape(delta_y, delta_z, "fdm_sum");
  if (delta_y.p != delta_z.p) throw ParameterError("fdm_sum: moment orders differ");
  return as_bound(delta_y.values + delta_z.values, delta_y.p);
}

/// ||Z||_{r1} delta^Y_{q1} + ||Y||_{r2} delta^Z_{q2}; 1/p = 1/q1 + 1/r1 = 1/q2 + 1/r2.
inline DeltaMatrix fdm_product_holder(const DeltaMatrix& delta_y_q1, const DeltaMatrix& delta_z_q2,
                                      const MomentBook& book, const std::string& y, const std::string& z, double p,
                                      double r1, double r2) {
  check_same_shape(delta_y_q1, delta_z_q2, "fdm_product_holder");
  const double q1 = delta_y_q1.p, q2 = delta_z_q2.p;
  if (!exponents_match(p, q1, r1) || !exponents_match(p, q2, r2)) {
    throw ParameterError("fdm_product_holder: need 1/p = 1/q1 + 1/r1 = 1/q2 + 1/r2");
  }
  return as_bound(book.require(z, r1) * delta_y_q1.values + book.require(y, r2) * delta_z_q2.values, p);
}

inline double product_moment_exponent(double p, double q) { return (q - 2.0 * p) / (p * q - 2.0 * p); }

/// C1 [delta^Y]^e + C2 [delta^Z]^e with e = (q - 2p)/(pq - 2p), q > max(p/(p-1), 2p).
inline DeltaMatrix fdm_product_moment(const DeltaMatrix& delta_y, const DeltaMatrix& delta_z, double q,
                                      double c1 = 1.0, double c2 = 1.0) {
  check_same_shape(delta_y, delta_z, "fdm_product_moment");
  const double p = delta_y.p;
  if (delta_z.p != p) throw ParameterError("fdm_product_moment: moment orders differ");
  if (!(p > 1.0)) throw ParameterError("fdm_product_moment: need p > 1");
  const double threshold = std::max(p / (p - 1.0), 2.0 * p);
  if (!(q > threshold)) throw ParameterError("fdm_product_moment: q must exceed " + io::format_double(threshold));
  const double e = product_moment_exponent(p, q);
  return as_bound(c1 * delta_y.values.array().pow(e).matrix() + c2 * delta_z.values.array().pow(e).matrix(), p);
}

/// sup_j ||Y_j||_{L^q} for a linear SAR with Gaussian noise and zero covariate.
inline double linear_gaussian_outcome_norm(const SarSpec& spec, double q) {
  if (spec.link().kind() != LinkKind::identity || spec.noise().family() != NoiseFamily::gaussian) {
    throw CapabilityError("outcome norm: closed form needs identity link and Gaussian noise");
  }
  if (spec.covariate().cwiseAbs().maxCoeff() != 0.0) {
    throw CapabilityError("outcome norm: closed form needs a zero covariate");
  }
  const double sigma = std::sqrt(*spec.noise().variance());
  const Eigen::MatrixXd a = sar_linear_coefficients(spec);
  const double sd = sigma * a.rowwise().norm().maxCoeff();
  return sd * std::pow(stats::normal_abs_moment(q), 1.0 / q);
}

/// DeltaMatrix as CSV with a `# p=...,mode=...,R=...,seed=...` header.
inline void write_delta_csv(std::ostream& out, const DeltaMatrix& d, const std::vector<std::string>& header = {}) {
  for (const auto& h : header) out << "# " << h << '\n';
  out << "# p=" << io::format_double(d.p) << ",mode=" << mode_name(d.mode) << ",R=" << d.replications
      << ",seed=" << d.seed << '\n';
  io::write_dense_csv(out, d.values);
}

}  // namespace fdnet
