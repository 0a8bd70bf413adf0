#pragma once

// Spatial autoregressive processes Y = F(lambda W Y + c + eps) and the
// S+ envelope L (I - L|lambda W|)^{-1}.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fdnet/error.hpp"
#include "fdnet/io.hpp"
#include "fdnet/netgen.hpp"
#include "fdnet/parallel.hpp"
#include "fdnet/rng.hpp"
#include "fdnet/stats.hpp"

namespace fdnet {

enum class LinkKind { identity, tobit, custom };

/// Lipschitz link F with certified constant L.
class LinkFunction {
 public:
  static LinkFunction identity() { return LinkFunction(LinkKind::identity, 1.0, {}, "identity"); }
  static LinkFunction tobit() { return LinkFunction(LinkKind::tobit, 1.0, {}, "tobit"); }

  /// A user-supplied link. The Lipschitz certificate is spot-checked on 10^4
  /// random pairs; a violation is a ParameterError.
  static LinkFunction custom(std::function<double(double)> f, double lipschitz, std::string name = "custom",
                             std::uint64_t check_seed = 0x5EED) {
    if (!f) throw ParameterError("custom link: empty evaluator");
    if (!(lipschitz > 0.0)) throw ParameterError("custom link: Lipschitz constant must be positive");
    LinkFunction link(LinkKind::custom, lipschitz, std::move(f), std::move(name));
    Stream s = Stream(check_seed).child("lipschitz-check");
    for (int k = 0; k < 10000; ++k) {
      const double scale = k % 2 == 0 ? 50.0 : 1.0;
      const double x = scale * (2.0 * s.uniform() - 1.0);
      const double y = k % 3 == 0 ? x + 1e-3 * (2.0 * s.uniform() - 1.0) : scale * (2.0 * s.uniform() - 1.0);
      const double lhs = std::abs(link(x) - link(y));
      const double rhs = lipschitz * std::abs(x - y);
      if (lhs > rhs * (1.0 + 1e-9) + 1e-12) {
        throw ParameterError("custom link '" + link.name() + "' violates its Lipschitz constant");
      }
    }
    return link;
  }

  double operator()(double x) const {
    switch (kind_) {
      case LinkKind::identity: return x;
      case LinkKind::tobit: return x > 0.0 ? x : 0.0;
      case LinkKind::custom: return eval_(x);
    }
    return x;
  }

  LinkKind kind() const noexcept { return kind_; }
  double lipschitz() const noexcept { return lipschitz_; }
  const std::string& name() const noexcept { return name_; }

 private:
  LinkFunction(LinkKind kind, double l, std::function<double(double)> f, std::string name)
      : kind_(kind), lipschitz_(l), eval_(std::move(f)), name_(std::move(name)) {}

  LinkKind kind_;
  double lipschitz_;
  std::function<double(double)> eval_;
  std::string name_;
};

enum class NoiseFamily { gaussian, uniform, student_t, custom };

/// Per-node independent disturbances with closed-form moment oracles where
/// they exist.
class NoiseModel {
 public:
  using Quantile = std::function<double(double)>;
  using NormOracle = std::function<std::optional<double>(double)>;

  static NoiseModel gaussian(double sigma) {
    if (!(sigma > 0.0)) throw ParameterError("gaussian noise: sigma must be positive");
    return NoiseModel(NoiseFamily::gaussian, sigma, 0.0, 0.0);
  }
  static NoiseModel uniform(double a, double b) {
    if (!(b > a)) throw ParameterError("uniform noise: need a < b");
    return NoiseModel(NoiseFamily::uniform, a, b, 0.0);
  }
  static NoiseModel student_t(double dof, double scale) {
    if (!(dof > 4.0)) throw ParameterError("student-t noise: need more than 4 degrees of freedom");
    if (!(scale > 0.0)) throw ParameterError("student-t noise: scale must be positive");
    return NoiseModel(NoiseFamily::student_t, dof, scale, 0.0);
  }
  /// Draws quantile(U) for U uniform on (0,1). Optional oracles supply
  /// ||eps||_p and ||eps - eps*||_p.
  static NoiseModel custom(Quantile quantile, std::string name, NormOracle norm = {}, NormOracle coupled = {}) {
    if (!quantile) throw ParameterError("custom noise: empty quantile map");
    NoiseModel m(NoiseFamily::custom, 0.0, 0.0, 0.0);
    m.quantile_ = std::move(quantile);
    m.name_ = std::move(name);
    m.norm_oracle_ = std::move(norm);
    m.coupled_oracle_ = std::move(coupled);
    return m;
  }

  NoiseFamily family() const noexcept { return family_; }

  double draw(Stream& s) const {
    switch (family_) {
      case NoiseFamily::gaussian: return a_ * s.normal();
      case NoiseFamily::uniform: return a_ + (b_ - a_) * s.uniform();
      case NoiseFamily::student_t: {
        const double z = s.normal();
        const double chi2 = 2.0 * s.gamma(0.5 * a_);
        return b_ * z / std::sqrt(chi2 / a_);
      }
      case NoiseFamily::custom: return quantile_(s.uniform_open());
    }
    return 0.0;
  }

  double mean() const {
    switch (family_) {
      case NoiseFamily::gaussian:
      case NoiseFamily::student_t: return 0.0;
      case NoiseFamily::uniform: return 0.5 * (a_ + b_);
      case NoiseFamily::custom: break;
    }
    throw CapabilityError("noise '" + describe() + "': mean not available in closed form");
  }

  std::optional<double> variance() const {
    switch (family_) {
      case NoiseFamily::gaussian: return a_ * a_;
      case NoiseFamily::uniform: return (b_ - a_) * (b_ - a_) / 12.0;
      case NoiseFamily::student_t: return b_ * b_ * a_ / (a_ - 2.0);
      case NoiseFamily::custom: return std::nullopt;
    }
    return std::nullopt;
  }

  /// ||eps||_{L^p}.
  std::optional<double> norm(double p) const {
    if (!(p >= 1.0)) return std::nullopt;
    switch (family_) {
      case NoiseFamily::gaussian: return a_ * std::pow(stats::normal_abs_moment(p), 1.0 / p);
      case NoiseFamily::uniform: {
        auto antiderivative = [p](double x) { return std::copysign(std::pow(std::abs(x), p + 1.0), x) / (p + 1.0); };
        return std::pow((antiderivative(b_) - antiderivative(a_)) / (b_ - a_), 1.0 / p);
      }
      case NoiseFamily::student_t: {
        const auto m = student_t_abs_moment(p);
        if (!m) return std::nullopt;
        return std::pow(*m, 1.0 / p);
      }
      case NoiseFamily::custom: return norm_oracle_ ? norm_oracle_(p) : std::nullopt;
    }
    return std::nullopt;
  }

  /// ||eps - eps*||_{L^p} for an independent copy eps*.
  std::optional<double> coupled_norm(double p) const {
    if (!(p >= 1.0)) return std::nullopt;
    switch (family_) {
      case NoiseFamily::gaussian:
        return std::numbers::sqrt2 * a_ * std::pow(stats::normal_abs_moment(p), 1.0 / p);
      case NoiseFamily::uniform:
        // eps - eps* is symmetric triangular on [-(b-a), b-a].
        return (b_ - a_) * std::pow(2.0 / ((p + 1.0) * (p + 2.0)), 1.0 / p);
      case NoiseFamily::student_t: {
        // Even integer orders expand binomially; odd central moments vanish.
        const double rounded = std::round(p);
        if (rounded != p || static_cast<long>(rounded) % 2 != 0) return std::nullopt;
        double total = 0.0;
        const int order = static_cast<int>(rounded);
        for (int k = 0; k <= order; k += 2) {
          const auto mk = k == 0 ? std::optional<double>(1.0) : student_t_abs_moment(k);
          const auto mr = order - k == 0 ? std::optional<double>(1.0) : student_t_abs_moment(order - k);
          if (!mk || !mr) return std::nullopt;
          total += binomial(order, k) * *mk * *mr;
        }
        return std::pow(total, 1.0 / p);
      }
      case NoiseFamily::custom: return coupled_oracle_ ? coupled_oracle_(p) : std::nullopt;
    }
    return std::nullopt;
  }

  std::string describe() const {
    std::ostringstream os;
    switch (family_) {
      case NoiseFamily::gaussian: os << "gaussian(sigma=" << io::format_double(a_) << ")"; break;
      case NoiseFamily::uniform:
        os << "uniform(a=" << io::format_double(a_) << ",b=" << io::format_double(b_) << ")";
        break;
      case NoiseFamily::student_t:
        os << "student_t(dof=" << io::format_double(a_) << ",scale=" << io::format_double(b_) << ")";
        break;
      case NoiseFamily::custom: os << "custom(" << name_ << ")"; break;
    }
    return os.str();
  }

 private:
  NoiseModel(NoiseFamily f, double a, double b, double c) : family_(f), a_(a), b_(b) { (void)c; }

  static double binomial(int n, int k) {
    return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
  }

  std::optional<double> student_t_abs_moment(double p) const {
    const double nu = a_;
    if (!(p < nu)) return std::nullopt;
    const double log_m = 0.5 * p * std::log(nu) + std::lgamma(0.5 * (p + 1.0)) + std::lgamma(0.5 * (nu - p)) -
                         0.5 * std::log(std::numbers::pi) - std::lgamma(0.5 * nu);
    return std::pow(b_, p) * std::exp(log_m);
  }

  NoiseFamily family_;
  double a_ = 0.0;  // sigma | lower bound | dof
  double b_ = 0.0;  // upper bound | scale
  Quantile quantile_;
  std::string name_;
  NormOracle norm_oracle_;
  NormOracle coupled_oracle_;
};

/// Full SAR data-generating process for a fixed design (W, c).
class SarSpec {
 public:
  SarSpec(std::shared_ptr<const WeightsMatrix> weights, LinkFunction link, double lambda, Eigen::VectorXd covariate,
          NoiseModel noise)
      : weights_(std::move(weights)),
        link_(std::move(link)),
        lambda_(lambda),
        covariate_(std::move(covariate)),
        noise_(std::move(noise)) {
    if (!weights_) throw ParameterError("sar: weights matrix required");
    const auto n = static_cast<Eigen::Index>(weights_->size());
    if (covariate_.size() == 0) covariate_ = Eigen::VectorXd::Zero(n);
    if (covariate_.size() != n) throw ParameterError("sar: covariate length differs from n");
    zeta_ = link_.lipschitz() * std::abs(lambda_) * weights_->inf_norm();
    if (!(zeta_ < 1.0)) {
      throw ParameterError("sar: contraction coefficient zeta = " + io::format_double(zeta_) + " is not below one");
    }
  }

  SarSpec(std::shared_ptr<const WeightsMatrix> weights, LinkFunction link, double lambda, NoiseModel noise)
      : SarSpec(std::move(weights), std::move(link), lambda, Eigen::VectorXd{}, std::move(noise)) {}

  Index size() const noexcept { return weights_->size(); }
  const WeightsMatrix& weights() const noexcept { return *weights_; }
  std::shared_ptr<const WeightsMatrix> weights_ptr() const noexcept { return weights_; }
  const LinkFunction& link() const noexcept { return link_; }
  double lambda() const noexcept { return lambda_; }
  const Eigen::VectorXd& covariate() const noexcept { return covariate_; }
  const NoiseModel& noise() const noexcept { return noise_; }
  double zeta() const noexcept { return zeta_; }

  /// key = value block describing the process (weights by provenance).
  std::string describe() const {
    std::ostringstream os;
    os << "n = " << size() << '\n'
       << "link = " << link_.name() << '\n'
       << "lipschitz = " << io::format_double(link_.lipschitz()) << '\n'
       << "lambda = " << io::format_double(lambda_) << '\n'
       << "zeta = " << io::format_double(zeta_) << '\n'
       << "noise = " << noise_.describe() << '\n'
       << "weights = " << weights_->provenance().describe() << '\n';
    return os.str();
  }

 private:
  std::shared_ptr<const WeightsMatrix> weights_;
  LinkFunction link_;
  double lambda_;
  Eigen::VectorXd covariate_;
  NoiseModel noise_;
  double zeta_ = 0.0;
};

struct FixedPointResult {
  Eigen::VectorXd outcome;
  std::size_t iterations = 0;
  std::vector<double> step_norms;  // ||Y(k+1) - Y(k)||_inf, when traced
};

/// Solves one SAR system per noise vector. Holds the LU factorisation of
/// (I - lambda W) for identity links; const member functions are thread-safe.
class SarSolver {
 public:
  static constexpr std::size_t kMaxIterations = 1'000'000;
  static constexpr double kTolerance = 1e-10;

  explicit SarSolver(const SarSpec& spec) : spec_(&spec) {
    if (spec.link().kind() == LinkKind::identity) {
      const auto n = static_cast<Eigen::Index>(spec.size());
      lu_.compute(Eigen::MatrixXd::Identity(n, n) - spec.lambda() * spec.weights().dense());
    }
  }

  const SarSpec& spec() const noexcept { return *spec_; }

  /// The unique solution: direct solve for identity links, fixed point otherwise.
  Eigen::VectorXd solve(const Eigen::VectorXd& eps) const {
    if (spec_->link().kind() == LinkKind::identity) return solve_direct(eps);
    return solve_fixed_point(eps).outcome;
  }

  Eigen::VectorXd solve_direct(const Eigen::VectorXd& eps) const {
    if (spec_->link().kind() != LinkKind::identity) throw ParameterError("sar: direct solve needs the identity link");
    check_length(eps);
    return lu_.solve(spec_->covariate() + eps);
  }

  /// Iterates Y <- F(lambda W Y + c + eps) from Y0 = F(c + eps) until the step
  /// is at most 1e-10 (1 - zeta) / zeta, which bounds the true error by 1e-10.
  FixedPointResult solve_fixed_point(const Eigen::VectorXd& eps, bool trace = false) const {
    check_length(eps);
    const LinkFunction& f = spec_->link();
    const Eigen::VectorXd base = spec_->covariate() + eps;
    FixedPointResult r;
    r.outcome = base.unaryExpr([&f](double x) { return f(x); });
    const double zeta = spec_->zeta();
    if (zeta == 0.0) return r;
    const double stop = kTolerance * (1.0 - zeta) / zeta;
    for (std::size_t k = 1; k <= kMaxIterations; ++k) {
      Eigen::VectorXd next = (spec_->lambda() * spec_->weights().multiply(r.outcome) + base).unaryExpr(
          [&f](double x) { return f(x); });
      const double step = (next - r.outcome).lpNorm<Eigen::Infinity>();
      r.outcome = std::move(next);
      r.iterations = k;
      if (trace) r.step_norms.push_back(step);
      if (step <= stop) return r;
    }
    throw ConvergenceError("sar: fixed-point iteration exceeded " + std::to_string(kMaxIterations) + " iterations");
  }

 private:
  void check_length(const Eigen::VectorXd& eps) const {
    if (static_cast<Index>(eps.size()) != spec_->size()) throw ParameterError("sar: noise length differs from n");
  }

  const SarSpec* spec_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

inline Eigen::VectorXd solve_sar(const SarSpec& spec, const Eigen::VectorXd& eps) {
  return SarSolver(spec).solve(eps);
}

enum class SplusMethod { automatic, direct, neumann };

struct SPlusMatrix {
  Eigen::MatrixXd values;
  double zeta = 0.0;
  double lipschitz = 1.0;
  SplusMethod method = SplusMethod::direct;
  std::size_t terms = 0;          // Neumann terms used
  double truncation_bound = 0.0;  // L zeta^{K+1} / (1 - zeta)

  Index size() const noexcept { return static_cast<Index>(values.rows()); }
};

inline constexpr Index kSplusDirectLimit = 2000;

/// S+ = L (I - L|lambda| W)^{-1}, by LU (n <= 2000 under automatic) or by a
/// Neumann series truncated once L zeta^{K+1}/(1-zeta) <= 1e-10.
inline SPlusMatrix compute_splus(const SarSpec& spec, SplusMethod method = SplusMethod::automatic) {
  const double l = spec.link().lipschitz();
  const double zeta = spec.zeta();
  if (!(zeta < 1.0)) throw ParameterError("splus: zeta must be below one");
  const auto n = static_cast<Eigen::Index>(spec.size());
  if (method == SplusMethod::automatic) {
    method = spec.size() <= kSplusDirectLimit ? SplusMethod::direct : SplusMethod::neumann;
  }
  const double scale = l * std::abs(spec.lambda());
  SPlusMatrix out;
  out.zeta = zeta;
  out.lipschitz = l;
  out.method = method;
  if (method == SplusMethod::direct) {
    const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - scale * spec.weights().dense();
    out.values = l * m.partialPivLu().inverse();
  } else {
    Eigen::MatrixXd term = l * Eigen::MatrixXd::Identity(n, n);
    out.values = term;
    double remainder = zeta == 0.0 ? 0.0 : l * zeta / (1.0 - zeta);
    std::size_t k = 0;
    while (remainder > 1e-10) {
      term = scale * spec.weights().multiply(term);
      out.values += term;
      ++k;
      remainder *= zeta;
    }
    out.terms = k;
    out.truncation_bound = remainder;
  }
  // Entries of an M-matrix inverse are nonnegative; clear rounding residue.
  out.values = out.values.cwiseMax(0.0);
  return out;
}

/// Noise stream of replication r under a master seed.
inline Stream replication_stream(std::uint64_t seed, std::uint64_t replication) {
  return Stream(seed).child("replication").child(replication);
}

inline Eigen::VectorXd draw_noise(const NoiseModel& noise, Index n, Stream stream) {
  Eigen::VectorXd eps(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = noise.draw(stream);
  return eps;
}

/// R independent outcome vectors as the columns of an n x R matrix.
inline Eigen::MatrixXd simulate_replications(const SarSpec& spec, std::size_t replications, std::uint64_t seed,
                                             unsigned threads = 1) {
  if (replications < 1) throw ParameterError("simulate_replications: need R >= 1");
  const SarSolver solver(spec);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(spec.size()), static_cast<Eigen::Index>(replications));
  parallel_for(replications, threads, [&](std::size_t r) {
    out.col(static_cast<Eigen::Index>(r)) = solver.solve(draw_noise(spec.noise(), spec.size(), replication_stream(seed, r)));
  });
  return out;
}

}  // namespace fdnet
