#pragma once

// Monte Carlo experiments: condition tables over random networks, LLN ladders,
// univariate and multivariate CLT checks, and empirical tail curves.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fdnet/error.hpp"
#include "fdnet/limits.hpp"
#include "fdnet/netgen.hpp"
#include "fdnet/parallel.hpp"
#include "fdnet/rng.hpp"
#include "fdnet/sar.hpp"
#include "fdnet/stats.hpp"

namespace fdnet {

enum class NetworkFamily { er, triangle, sbm };

inline std::string_view family_name(NetworkFamily f) {
  switch (f) {
    case NetworkFamily::er: return "er";
    case NetworkFamily::triangle: return "triangle";
    case NetworkFamily::sbm: return "sbm";
  }
  return "?";
}

inline NetworkFamily parse_family(std::string_view s) {
  if (s == "er") return NetworkFamily::er;
  if (s == "triangle") return NetworkFamily::triangle;
  if (s == "sbm") return NetworkFamily::sbm;
  throw ParameterError("unknown network model '" + std::string(s) + "'");
}

/// Random-network recipe. `degree` is D for ER and triangle models and the
/// within-block degree for SBM.
struct NetworkModel {
  NetworkFamily family = NetworkFamily::er;
  Index n = 100;
  double degree = 3.0;
  double triangles = -1.0;     // T; negative means T = n
  Index blocks = 0;            // M; zero means round(sqrt(n)/2)
  double between_degree = 2.0;

  double resolved_triangles() const { return triangles < 0.0 ? static_cast<double>(n) : triangles; }
  Index resolved_blocks() const { return blocks == 0 ? sbm_auto_blocks(n) : blocks; }
};

inline Graph draw_graph(const NetworkModel& model, std::uint64_t seed) {
  switch (model.family) {
    case NetworkFamily::er: return gen_er(model.n, model.degree, seed);
    case NetworkFamily::triangle: return gen_triangle(model.n, model.resolved_triangles(), model.degree, seed);
    case NetworkFamily::sbm:
      return gen_sbm(model.n, model.resolved_blocks(), model.degree, model.between_degree, seed);
  }
  throw ParameterError("draw_graph: unknown family");
}

inline Provenance network_provenance(const NetworkModel& model, std::uint64_t seed) {
  Provenance p{std::string(family_name(model.family)),
               {{"n", std::to_string(model.n)}, {"D", io::format_double(model.degree)}},
               {}};
  if (model.family == NetworkFamily::triangle) p.params.emplace_back("T", io::format_double(model.resolved_triangles()));
  if (model.family == NetworkFamily::sbm) {
    p.params.emplace_back("M", std::to_string(model.resolved_blocks()));
    p.params.emplace_back("Dbb", io::format_double(model.between_degree));
  }
  p.params.emplace_back("seed", std::to_string(seed));
  return p;
}

inline std::shared_ptr<const WeightsMatrix> draw_network(const NetworkModel& model, std::uint64_t seed) {
  return std::make_shared<const WeightsMatrix>(row_normalize(draw_graph(model, seed), network_provenance(model, seed)));
}

/// Seed of network draw g in cell (family, n, D). Independent of lambda, so
/// every lambda row of a table sees the same networks.
inline std::uint64_t network_seed(std::uint64_t master, const NetworkModel& model, std::uint64_t draw) {
  return Stream(master)
      .child(family_name(model.family))
      .child(model.n)
      .child(std::bit_cast<std::uint64_t>(model.degree))
      .child(draw)
      .derived_seed();
}

/// Link F(x) = L x, used to realise a Lipschitz constant other than one.
inline LinkFunction scaled_identity(double lipschitz) {
  if (lipschitz == 1.0) return LinkFunction::identity();
  return LinkFunction::custom([lipschitz](double x) { return lipschitz * x; }, lipschitz, "linear");
}

struct ConditionTablePlan {
  NetworkModel network;  // n and degree are overridden by the grids
  std::vector<double> lambdas{0.2, 0.3, 0.4, 0.8};
  std::vector<double> degrees{3, 5, 10};
  std::vector<Index> sizes{100, 400, 900};
  std::size_t draws = 100;
  double p = 4.0;
  double lipschitz = 1.0;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct ConditionCell {
  NetworkFamily family = NetworkFamily::er;
  Index n = 0;
  double degree = 0.0;
  double lambda = 0.0;
  stats::Moments influence;
  stats::Moments minsum;
  stats::Moments minsum_order_free;
};

/// Tables of mean influence and min-sum statistics: for each (n, D), G networks are
/// drawn and S+ is evaluated for every lambda. Cells are ordered by
/// (lambda, D, n).
inline std::vector<ConditionCell> run_condition_table(const ConditionTablePlan& plan) {
  if (plan.draws < 1) throw ParameterError("condition table: need at least one network draw");
  if (plan.lambdas.empty() || plan.degrees.empty() || plan.sizes.empty()) {
    throw ParameterError("condition table: empty parameter grid");
  }
  const LinkFunction link = scaled_identity(plan.lipschitz);
  const std::size_t nl = plan.lambdas.size();
  std::vector<ConditionCell> cells;
  for (double lambda : plan.lambdas)
    for (double d : plan.degrees)
      for (Index n : plan.sizes) {
        ConditionCell c;
        c.family = plan.network.family;
        c.n = n;
        c.degree = d;
        c.lambda = lambda;
        cells.push_back(c);
      }
  auto cell_index = [&](std::size_t li, std::size_t di, std::size_t ni) {
    return (li * plan.degrees.size() + di) * plan.sizes.size() + ni;
  };
  for (std::size_t di = 0; di < plan.degrees.size(); ++di) {
    for (std::size_t ni = 0; ni < plan.sizes.size(); ++ni) {
      NetworkModel model = plan.network;
      model.n = plan.sizes[ni];
      model.degree = plan.degrees[di];
      std::vector<ConditionReport> reports(plan.draws * nl);
      parallel_for(plan.draws, plan.threads, [&](std::size_t g) {
        const auto w = draw_network(model, network_seed(plan.seed, model, g));
        for (std::size_t li = 0; li < nl; ++li) {
          const SarSpec spec(w, link, plan.lambdas[li], NoiseModel::gaussian(1.0));
          reports[g * nl + li] = clt_conditions_sar(compute_splus(spec), plan.p);
        }
      });
      for (std::size_t g = 0; g < plan.draws; ++g) {
        for (std::size_t li = 0; li < nl; ++li) {
          ConditionCell& c = cells[cell_index(li, di, ni)];
          const ConditionReport& r = reports[g * nl + li];
          c.influence.add(r.influence);
          c.minsum.add(r.minsum);
          c.minsum_order_free.add(r.minsum_order_free);
        }
      }
    }
  }
  return cells;
}

/// One experiment on a fixed design: a drawn (or supplied) network plus the
/// SAR ingredients. Replication r of a batch reads stream batch.child(r).
struct SarExperiment {
  std::shared_ptr<const WeightsMatrix> weights;
  double lambda = 0.2;
  LinkFunction link = LinkFunction::identity();
  NoiseModel noise = NoiseModel::gaussian(1.0);
  Eigen::VectorXd covariate;  // empty means zero
  std::size_t replications = 2000;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  SarSpec spec() const { return SarSpec(weights, link, lambda, covariate, noise); }
};

/// Sums S = sum_j Y_j of R replications drawn from `batch`.
inline std::vector<double> replicated_sums(const SarSpec& spec, std::size_t replications, const Stream& batch,
                                           unsigned threads) {
  const SarSolver solver(spec);
  std::vector<double> sums(replications);
  parallel_for(replications, threads, [&](std::size_t r) {
    sums[r] = solver.solve(draw_noise(spec.noise(), spec.size(), batch.child(r))).sum();
  });
  return sums;
}

struct CltResult {
  std::vector<double> standardized;
  double mean = 0.0;   // E S_n, exact or pilot
  double sigma = 0.0;  // sigma_n, exact or pilot
  bool exact_moments = false;
  double variance_ratio = 0.0;  // sigma_n^2 / n
  bool degenerate = false;      // variance_ratio < 0.01
  double ks = 0.0;
  double critical = 0.0;
  bool pass = false;
};

/// Standardised sums (S_n - E S_n)/sigma_n and their KS distance to N(0,1).
/// Identity links use the exact mean and sigma_n^2 = var(eps) ||(I - lambda W)^{-T} 1||^2;
/// other links estimate both from a pilot batch of R/10 on a disjoint stream.
inline CltResult run_clt(const SarExperiment& ex, double alpha = 0.01, std::optional<double> ks_limit = {}) {
  if (ex.replications < 20) throw ParameterError("clt: need R >= 20");
  const SarSpec spec = ex.spec();
  const Stream root(ex.seed);
  CltResult res;
  const auto n = static_cast<Eigen::Index>(spec.size());
  if (spec.link().kind() == LinkKind::identity && spec.noise().variance()) {
    const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - spec.lambda() * spec.weights().dense();
    const Eigen::VectorXd b = m.transpose().partialPivLu().solve(Eigen::VectorXd::Ones(n));
    res.mean = b.dot(spec.covariate() + Eigen::VectorXd::Constant(n, spec.noise().mean()));
    res.sigma = std::sqrt(*spec.noise().variance()) * b.norm();
    res.exact_moments = true;
  } else {
    const std::size_t pilot_r = std::max<std::size_t>(ex.replications / 10, 20);
    const auto pilot = replicated_sums(spec, pilot_r, root.child("pilot"), ex.threads);
    stats::Moments m;
    for (double s : pilot) m.add(s);
    res.mean = m.mean;
    res.sigma = std::sqrt(m.variance());
  }
  if (!(res.sigma > 0.0) || !std::isfinite(res.sigma)) throw ExperimentError("clt: degenerate sigma_n");
  res.variance_ratio = res.sigma * res.sigma / static_cast<double>(n);
  res.degenerate = res.variance_ratio < 0.01;
  const auto sums = replicated_sums(spec, ex.replications, root.child("main"), ex.threads);
  res.standardized.resize(sums.size());
  for (std::size_t r = 0; r < sums.size(); ++r) res.standardized[r] = (sums[r] - res.mean) / res.sigma;
  res.ks = stats::ks_statistic(res.standardized, stats::normal_cdf);
  res.critical = ks_limit ? *ks_limit : stats::ks_critical(ex.replications, alpha);
  res.pass = res.ks <= res.critical;
  return res;
}

struct MultivariateCltResult {
  std::vector<LinkFunction> links;
  Eigen::MatrixXd covariance;  // pilot estimate of Sigma_n
  double condition_number = 1.0;
  std::vector<double> ks;      // per whitened coordinate
  double ks_chi_square = 0.0;  // squared norm against chi-square(p_Y)
  double critical = 0.0;
  bool pass = false;
};

/// Component k solves the SAR system with link F_k and the shared noise draw.
/// The pilot batch estimates (mean, Sigma_n); the main batch is whitened with
/// Sigma_n^{-1/2} and tested coordinatewise and through its squared norm.
inline MultivariateCltResult run_clt_multivariate(const SarExperiment& ex, const std::vector<LinkFunction>& links,
                                                  double alpha = 0.01) {
  if (links.empty()) throw ParameterError("multivariate clt: need at least one link");
  MultivariateCltResult res;
  res.links = links;
  if (links.size() == 1) {
    SarExperiment one = ex;
    one.link = links[0];
    const CltResult r = run_clt(one, alpha);
    res.covariance = Eigen::MatrixXd::Constant(1, 1, r.sigma * r.sigma);
    res.ks = {r.ks};
    res.ks_chi_square = stats::ks_statistic(
        [&] {
          std::vector<double> sq;
          for (double z : r.standardized) sq.push_back(z * z);
          return sq;
        }(),
        [](double x) { return stats::chi_square_cdf(x, 1.0); });
    res.critical = r.critical;
    res.pass = r.pass && res.ks_chi_square <= res.critical;
    return res;
  }
  const auto k = static_cast<Eigen::Index>(links.size());
  std::vector<SarSpec> specs;
  for (const auto& l : links) specs.emplace_back(ex.weights, l, ex.lambda, ex.covariate, ex.noise);
  std::vector<SarSolver> solvers;
  for (const auto& s : specs) solvers.emplace_back(s);
  const Index n = specs.front().size();
  auto batch = [&](std::size_t count, const Stream& stream) {
    Eigen::MatrixXd sums(k, static_cast<Eigen::Index>(count));
    parallel_for(count, ex.threads, [&](std::size_t r) {
      const Eigen::VectorXd eps = draw_noise(ex.noise, n, stream.child(r));
      for (Eigen::Index c = 0; c < k; ++c) sums(c, static_cast<Eigen::Index>(r)) = solvers[static_cast<std::size_t>(c)].solve(eps).sum();
    });
    return sums;
  };
  const Stream root(ex.seed);
  const std::size_t pilot_r = std::max<std::size_t>(ex.replications / 10, 20);
  const Eigen::MatrixXd pilot = batch(pilot_r, root.child("pilot"));
  const Eigen::VectorXd mean = pilot.rowwise().mean();
  const Eigen::MatrixXd centered = pilot.colwise() - mean;
  res.covariance = centered * centered.transpose() / static_cast<double>(pilot_r - 1);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(res.covariance);
  const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
  res.condition_number = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(lo > 0.0) || res.condition_number > 1e12) {
    throw ExperimentError("multivariate clt: pilot covariance is singular (condition number " +
                          io::format_double(res.condition_number) + ")");
  }
  const Eigen::MatrixXd whiten =
      eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  const Eigen::MatrixXd z = whiten * (batch(ex.replications, root.child("main")).colwise() - mean);
  res.critical = stats::ks_critical(ex.replications, alpha);
  res.pass = true;
  for (Eigen::Index c = 0; c < k; ++c) {
    std::vector<double> coord(static_cast<std::size_t>(z.cols()));
    for (Eigen::Index r = 0; r < z.cols(); ++r) coord[static_cast<std::size_t>(r)] = z(c, r);
    res.ks.push_back(stats::ks_statistic(coord, stats::normal_cdf));
    res.pass = res.pass && res.ks.back() <= res.critical;
  }
  std::vector<double> sq(static_cast<std::size_t>(z.cols()));
  for (Eigen::Index r = 0; r < z.cols(); ++r) sq[static_cast<std::size_t>(r)] = z.col(r).squaredNorm();
  res.ks_chi_square = stats::ks_statistic(sq, [k](double x) { return stats::chi_square_cdf(x, static_cast<double>(k)); });
  res.pass = res.pass && res.ks_chi_square <= res.critical;
  return res;
}

/// Draws one outcome vector of size n from the given stream.
using OutcomeSampler = std::function<Eigen::VectorXd(const Stream&)>;

struct LlnRow {
  Index n = 0;
  double quantile = 0.0;
  double std_error = 0.0;
};

struct LlnResult {
  double level = 0.95;
  std::vector<LlnRow> rows;
  bool monotone = false;   // each step non-increasing within two s.e.
  bool decreasing = false; // last rung clearly below the first
  bool pass = false;
};

/// Empirical `level`-quantile of |(1/n) sum_j (Y_j - mean)| along a ladder of
/// sizes; the mean is the replication average of the same statistic.
/// `make_sampler(n)` builds the outcome sampler for size n.
inline LlnResult run_lln(const std::vector<Index>& ladder, const std::function<OutcomeSampler(Index)>& make_sampler,
                         std::size_t replications, std::uint64_t seed, unsigned threads = 1, double level = 0.95) {
  if (ladder.size() < 2) throw ParameterError("lln: ladder needs at least two sizes");
  if (replications < 20) throw ParameterError("lln: need R >= 20");
  LlnResult res;
  res.level = level;
  for (Index n : ladder) {
    const OutcomeSampler sample = make_sampler(n);
    const Stream batch = Stream(seed).child("lln").child(n);
    std::vector<double> avg(replications);
    parallel_for(replications, threads, [&](std::size_t r) { avg[r] = sample(batch.child(r)).mean(); });
    const double grand = pairwise_sum(avg) / static_cast<double>(replications);
    for (double& a : avg) a = std::abs(a - grand);
    res.rows.push_back({n, stats::empirical_quantile(avg, level), stats::quantile_std_error(avg, level)});
  }
  res.monotone = true;
  for (std::size_t k = 1; k < res.rows.size(); ++k) {
    const auto& a = res.rows[k - 1];
    const auto& b = res.rows[k];
    if (b.quantile > a.quantile + 2.0 * (a.std_error + b.std_error)) res.monotone = false;
  }
  const auto& first = res.rows.front();
  const auto& last = res.rows.back();
  res.decreasing = last.quantile + 2.0 * (first.std_error + last.std_error) < first.quantile;
  res.pass = res.monotone && res.decreasing;
  return res;
}

/// Sampler of a SAR outcome on a freshly drawn network of size n.
inline std::function<OutcomeSampler(Index)> sar_sampler_factory(NetworkModel network, double lambda,
                                                                LinkFunction link, NoiseModel noise,
                                                                std::uint64_t seed) {
  return [=](Index n) -> OutcomeSampler {
    NetworkModel model = network;
    model.n = n;
    auto spec = std::make_shared<SarSpec>(draw_network(model, network_seed(seed, model, 0)), link, lambda, noise);
    auto solver = std::make_shared<SarSolver>(*spec);
    return [spec, solver](const Stream& s) { return solver->solve(draw_noise(spec->noise(), spec->size(), s)); };
  };
}

struct TailResult {
  double alpha = 1.0;
  std::vector<double> grid;      // admissible x values
  std::vector<double> survival;  // P(|Z_n| >= x)
  std::vector<std::size_t> exceedances;
  bool truncated = false;        // grid cut where exceedances fell below the minimum
  double slope = 0.0;            // of log S(x) against x^alpha
  double intercept = 0.0;
  double r_squared = 0.0;
  double bound_rate = 0.0;       // 1/(2 e alpha gamma0^alpha)
  double required_slope = 0.0;   // -bound_rate (1 - slack)
  bool pass = false;
};

inline std::vector<double> default_tail_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 40; ++k) g.push_back(0.25 * k);
  return g;
}

/// Empirical survival of |Z_n|, Z_n = n^{-1/2} sum_j (Y_j - E Y_j), on the grid;
/// points with fewer than `min_exceedances` are dropped. E Y_j is exact for
/// identity links and the grand mean otherwise.
inline TailResult run_tail(const SarExperiment& ex, const TailBoundParams& params,
                           std::vector<double> grid = default_tail_grid(), double slack = 0.2,
                           std::size_t min_exceedances = 30) {
  if (grid.empty()) throw ParameterError("tail: empty x grid");
  std::sort(grid.begin(), grid.end());
  const SarSpec spec = ex.spec();
  const auto sums = replicated_sums(spec, ex.replications, Stream(ex.seed).child("tail"), ex.threads);
  const auto n = static_cast<Eigen::Index>(spec.size());
  double mean = 0.0;
  if (spec.link().kind() == LinkKind::identity) {
    const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - spec.lambda() * spec.weights().dense();
    const Eigen::VectorXd b = m.transpose().partialPivLu().solve(Eigen::VectorXd::Ones(n));
    mean = b.dot(spec.covariate() + Eigen::VectorXd::Constant(n, spec.noise().mean()));
  } else {
    mean = pairwise_sum(sums) / static_cast<double>(sums.size());
  }
  std::vector<double> z(sums.size());
  const double root_n = std::sqrt(static_cast<double>(n));
  for (std::size_t r = 0; r < sums.size(); ++r) z[r] = std::abs(sums[r] - mean) / root_n;
  std::sort(z.begin(), z.end());

  TailResult res;
  res.alpha = params.alpha;
  res.bound_rate = params.rate;
  res.required_slope = -params.rate * (1.0 - slack);
  const double total = static_cast<double>(z.size());
  for (double x : grid) {
    const auto count = static_cast<std::size_t>(z.end() - std::lower_bound(z.begin(), z.end(), x));
    if (count < min_exceedances) {
      res.truncated = true;
      break;
    }
    res.grid.push_back(x);
    res.exceedances.push_back(count);
    res.survival.push_back(static_cast<double>(count) / total);
  }
  if (res.grid.size() < 2) throw ExperimentError("tail: fewer than two admissible grid points");
  std::vector<double> xa, ly;
  for (std::size_t k = 0; k < res.grid.size(); ++k) {
    xa.push_back(std::pow(res.grid[k], res.alpha));
    ly.push_back(std::log(res.survival[k]));
  }
  const auto fit = stats::fit_line(xa, ly);
  res.slope = fit.slope;
  res.intercept = fit.intercept;
  res.r_squared = fit.r_squared;
  res.pass = res.slope <= res.required_slope;
  return res;
}

}  // namespace fdnet
