// fdnet: command-line driver for network generation, S+ and FDM computation,
// condition tables and Monte Carlo limit-theorem experiments.
//
// Exit codes: 0 success, 2 parameter error, 3 data/parse error,
// 4 convergence/experiment error, 1 anything else.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fdnet/fdnet.hpp"

namespace fs = std::filesystem;
using namespace fdnet;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string text(const std::string& s) { return s; }
std::string text(double x) { return io::format_double(x); }
std::string text(std::uint64_t x) { return std::to_string(x); }
std::string text(unsigned x) { return std::to_string(x); }

/// Options of one subcommand, remembered in declaration order so the resolved
/// configuration can be written back out.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& name, T& value, const std::string& help, bool in_manifest = true) {
    CLI::Option* opt = app_->add_option("--" + name, value, help)
                           ->capture_default_str()
                           ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    if (in_manifest) entries_.push_back({name, [&value] { return text(value); }});
    return opt;
  }

  CLI::App* app() const { return app_; }

  /// `fdnet <sub> --k v ...` over every manifest option.
  std::string invocation() const {
    std::ostringstream os;
    os << "fdnet " << app_->get_name();
    for (const auto& [name, get] : entries_) {
      const std::string v = get();
      if (!v.empty()) os << " --" << name << ' ' << v;
    }
    return os.str();
  }

  std::string config_file() const {
    std::ostringstream os;
    os << "# fdnet " << kVersion << ' ' << app_->get_name() << '\n';
    for (const auto& [name, get] : entries_) os << name << " = " << get() << '\n';
    return os.str();
  }

 private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<std::string()>>> entries_;
};

struct Globals {
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string out = ".";
  std::string config;
};

void add_globals(Options& o, Globals& g) {
  o.add("seed", g.seed, "master RNG seed");
  o.add("threads", g.threads, "worker threads (0 = all cores); never changes results", false);
  o.add("out", g.out, "output directory", false);
  o.add("config", g.config, "flat key = value config file; flags override it", false);
}

/// Output sink that writes the manifest line first.
class Outputs {
 public:
  Outputs(const Options& opts, const Globals& g) : opts_(opts), dir_(g.out), rng_(kRngAlgorithm) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw DataError("cannot create output directory '" + dir_.string() + "'");
  }

  std::ofstream open(const std::string& name, const std::vector<std::string>& extra = {}) const {
    std::ofstream f(dir_ / name);
    if (!f) throw DataError("cannot write '" + (dir_ / name).string() + "'");
    f << "# " << opts_.invocation() << " # fdnet " << kVersion << " rng=" << rng_ << '\n';
    for (const auto& e : extra) f << "# " << e << '\n';
    return f;
  }

  void manifest() const {
    std::ofstream f(dir_ / "manifest.cfg");
    if (!f) throw DataError("cannot write manifest");
    f << opts_.config_file();
  }

 private:
  const Options& opts_;
  fs::path dir_;
  std::string_view rng_;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto part : io::split(s, ',')) {
    const auto t = io::trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  try {
    return io::parse_double(s, 0);
  } catch (const ParseError&) {
    throw ParameterError(what + ": not a number '" + s + "'");
  }
}

std::vector<double> parse_doubles(const std::string& s, const std::string& what) {
  std::vector<double> v;
  for (const auto& p : split_list(s)) v.push_back(parse_number(p, what));
  if (v.empty()) throw ParameterError(what + ": empty list");
  return v;
}

std::vector<Index> parse_sizes(const std::string& s, const std::string& what) {
  std::vector<Index> v;
  for (double d : parse_doubles(s, what)) {
    if (!(d >= 1.0) || d != std::floor(d)) throw ParameterError(what + ": sizes must be positive integers");
    v.push_back(static_cast<Index>(d));
  }
  return v;
}

bool yes(const std::string& s, const std::string& what) {
  if (s == "yes" || s == "true" || s == "1") return true;
  if (s == "no" || s == "false" || s == "0") return false;
  throw ParameterError(what + ": expected yes or no");
}

// ---------------------------------------------------------------------------
// Network, link and noise options shared by several subcommands.

struct NetworkOptions {
  std::string model = "er";
  Index n = 100;
  double deg = 3.0;
  std::string dwb;
  double dbb = 2.0;
  double triangles = -1.0;
  std::string blocks = "auto";
  Index dim = 1;
  Index side = 10;
  std::string scheme = "cutoff";
  double cutoff = 1.5;
  double base = 1.0;
  double c0 = 1.0;
  double alpha = 3.0;
  std::string input;
  std::string schema = "binary";

  void add(Options& o, bool single_size = true) {
    o.add("model", model, "er | triangle | sbm | lattice | file");
    if (single_size) o.add("n", n, "node count");
    o.add("deg", deg, "mean degree D (within-block degree for sbm)");
    o.add("dwb", dwb, "sbm within-block degree (defaults to --deg)");
    o.add("dbb", dbb, "sbm between-block degree");
    o.add("triangles", triangles, "triangle model T (negative: T = n)");
    o.add("blocks", blocks, "sbm block count or 'auto' (sqrt(n)/2)");
    o.add("dim", dim, "lattice dimension");
    o.add("side", side, "lattice nodes per axis");
    o.add("scheme", scheme, "lattice weights: cutoff | power");
    o.add("cutoff", cutoff, "lattice cutoff distance d0 > 1");
    o.add("base", base, "lattice cutoff base weight");
    o.add("c0", c0, "lattice power-decay C0");
    o.add("alpha", alpha, "lattice power-decay exponent (> dim)");
    o.add("input", input, "network file for --model file (.csv dense weights, else edge list)");
    o.add("schema", schema, "edge-list schema: binary | weighted | fcap");
  }

  bool random() const { return model == "er" || model == "triangle" || model == "sbm"; }

  NetworkModel random_model(Index size) const {
    NetworkModel m;
    m.family = parse_family(model);
    m.n = size;
    m.degree = model == "sbm" && !dwb.empty() ? parse_number(dwb, "--dwb") : deg;
    m.between_degree = dbb;
    m.triangles = triangles;
    if (blocks != "auto") {
      const double b = parse_number(blocks, "--blocks");
      if (!(b >= 1.0) || b != std::floor(b)) throw ParameterError("--blocks: expected a positive integer or auto");
      m.blocks = static_cast<Index>(b);
    }
    return m;
  }

  DecayScheme decay_scheme() const {
    if (scheme == "cutoff") return CutoffScheme{cutoff, base};
    if (scheme == "power") return PowerDecayScheme{c0, alpha};
    throw ParameterError("--scheme: expected cutoff or power");
  }
};

struct BuiltNetwork {
  std::shared_ptr<const WeightsMatrix> weights;
  std::optional<Graph> graph;
  std::optional<DistanceMatrix> distances;
  std::optional<DecayScheme> scheme;
  Index dim = 0;
};

BuiltNetwork build_network(const NetworkOptions& o, std::uint64_t seed, std::optional<Index> size = {}) {
  BuiltNetwork b;
  if (o.random()) {
    const NetworkModel m = o.random_model(size.value_or(o.n));
    Graph g = draw_graph(m, seed);
    b.weights = std::make_shared<const WeightsMatrix>(row_normalize(g, network_provenance(m, seed)));
    b.graph = std::move(g);
  } else if (o.model == "lattice") {
    const DecayScheme scheme = o.decay_scheme();
    LatticeConfig cfg{o.dim, o.side, {}};
    if (const auto* c = std::get_if<CutoffScheme>(&scheme)) cfg.scheme = *c;
    else cfg.scheme = std::get<PowerDecayScheme>(scheme);
    Lattice lat = gen_lattice(cfg);
    b.weights = std::make_shared<const WeightsMatrix>(std::move(lat.weights));
    b.distances = std::move(lat.distances);
    b.graph = std::move(lat.raw);
    b.scheme = scheme;
    b.dim = o.dim;
  } else if (o.model == "file") {
    if (o.input.empty()) throw ParameterError("--model file needs --input");
    if (fs::path(o.input).extension() == ".csv") {
      const Eigen::MatrixXd m = io::read_dense_csv(o.input);
      const bool normalized = [&] {
        for (Eigen::Index j = 0; j < m.rows(); ++j) {
          const double s = m.row(j).sum();
          if (s != 0.0 && std::abs(s - 1.0) > WeightsMatrix::kRowSumTolerance) return false;
        }
        return true;
      }();
      Provenance p{"file", {{"path", o.input}}, {}};
      b.weights = std::make_shared<const WeightsMatrix>(normalized ? WeightsMatrix(m, true, p) : row_normalize(m, p));
    } else {
      Graph g = io::read_graph(o.input, io::parse_schema(o.schema));
      b.weights = std::make_shared<const WeightsMatrix>(
          row_normalize(g, Provenance{"file", {{"path", o.input}, {"schema", o.schema}}, {}}));
      b.graph = std::move(g);
    }
  } else {
    throw ParameterError("--model: expected er, triangle, sbm, lattice or file");
  }
  return b;
}

struct SarOptions {
  double lambda = 0.2;
  std::string link = "identity";
  std::string noise = "gaussian";
  double sigma = 1.0;
  double lower = -1.0;
  double upper = 1.0;
  double dof = 6.0;
  double scale = 1.0;

  void add(Options& o, bool with_lambda = true) {
    if (with_lambda) o.add("lambda", lambda, "network coefficient lambda");
    o.add("link", link, "identity | tobit");
    o.add("noise", noise, "gaussian | uniform | student");
    o.add("sigma", sigma, "gaussian noise standard deviation");
    o.add("lower", lower, "uniform noise lower bound");
    o.add("upper", upper, "uniform noise upper bound");
    o.add("dof", dof, "student-t degrees of freedom (> 4)");
    o.add("scale", scale, "student-t scale");
  }

  LinkFunction make_link() const {
    if (link == "identity") return LinkFunction::identity();
    if (link == "tobit") return LinkFunction::tobit();
    throw ParameterError("--link: expected identity or tobit");
  }

  NoiseModel make_noise() const {
    if (noise == "gaussian") return NoiseModel::gaussian(sigma);
    if (noise == "uniform") return NoiseModel::uniform(lower, upper);
    if (noise == "student") return NoiseModel::student_t(dof, scale);
    throw ParameterError("--noise: expected gaussian, uniform or student");
  }
};

// ---------------------------------------------------------------------------
// Subcommands.

int cmd_gen(const Options& opts, const Globals& g, const NetworkOptions& net) {
  const BuiltNetwork b = build_network(net, g.seed);
  const Outputs out(opts, g);
  const std::string prov = "provenance: " + b.weights->provenance().describe();
  if (b.graph) {
    auto f = out.open("edges.tsv", {prov});
    io::write_edgelist(f, *b.graph, net.model == "lattice" || net.schema != "binary");
  }
  auto w = out.open("weights.csv", {prov});
  io::write_dense_csv(w, b.weights->dense());
  out.manifest();
  return 0;
}

int cmd_splus(const Options& opts, const Globals& g, const NetworkOptions& net, const SarOptions& sar) {
  const BuiltNetwork b = build_network(net, g.seed);
  const SarSpec spec(b.weights, sar.make_link(), sar.lambda, sar.make_noise());
  const SPlusMatrix sp = compute_splus(spec);
  const Outputs out(opts, g);
  auto f = out.open("splus.csv", {"zeta=" + io::format_double(sp.zeta) +
                                  ",method=" + (sp.method == SplusMethod::direct ? "direct" : "neumann") +
                                  ",terms=" + std::to_string(sp.terms)});
  io::write_dense_csv(f, sp.values);
  out.manifest();
  return 0;
}

std::vector<Target> parse_targets(const std::string& s, Index n) {
  std::vector<Target> targets;
  for (const auto& item : split_list(s)) {
    const auto parts = io::split(item, ':');
    if (parts.size() != 2) throw ParameterError("--targets: expected j:i pairs");
    const double j = parse_number(std::string(parts[0]), "--targets");
    const double i = parse_number(std::string(parts[1]), "--targets");
    if (j < 1 || i < 1 || j > static_cast<double>(n) || i > static_cast<double>(n) || j != std::floor(j) ||
        i != std::floor(i)) {
      throw ParameterError("--targets: node ids must lie in 1..n");
    }
    targets.push_back({static_cast<Index>(j) - 1, static_cast<Index>(i) - 1});
  }
  return targets;
}

int cmd_fdm(const Options& opts, const Globals& g, const NetworkOptions& net, const SarOptions& sar,
            const std::string& mode, double p, std::size_t reps, const std::string& targets_text) {
  const BuiltNetwork b = build_network(net, g.seed);
  const SarSpec spec(b.weights, sar.make_link(), sar.lambda, sar.make_noise());
  DeltaMatrix d;
  std::vector<Target> targets;
  if (mode == "bound") {
    d = delta_sar_bound(spec, p);
  } else if (mode == "exact") {
    if (spec.link().kind() != LinkKind::identity) throw ParameterError("--mode exact needs the identity link");
    d = delta_linear_exact(sar_linear_coefficients(spec), spec.noise(), p);
  } else if (mode == "mc") {
    targets = parse_targets(targets_text, spec.size());
    d = delta_monte_carlo(spec, p, reps, g.seed, targets, g.threads);
  } else {
    throw ParameterError("--mode: expected bound, exact or mc");
  }
  const Outputs out(opts, g);
  {
    auto f = out.open("delta.csv");
    write_delta_csv(f, d);
  }
  if (mode == "mc") {
    auto f = out.open("delta_targets.csv");
    f << "j,i,delta,std_error\n";
    for (Eigen::Index i = 0; i < d.values.cols(); ++i)
      for (Eigen::Index j = 0; j < d.values.rows(); ++j) {
        if (!d.estimated(j, i)) continue;
        f << j + 1 << ',' << i + 1 << ',' << io::format_double(d.values(j, i)) << ','
          << io::format_double(d.std_errors(j, i)) << '\n';
      }
  }
  const Aggregate agg = delta_aggregate(d, 2.0);
  auto f = out.open("aggregate.csv");
  f << "p,q,Delta\n" << io::format_double(p) << ",2," << io::format_double(agg.value) << '\n';
  out.manifest();
  return 0;
}

int cmd_conditions(const Options& opts, const Globals& g, const NetworkOptions& net, const std::string& lambdas,
                   const std::string& degrees, const std::string& sizes, std::size_t reps, double p, double lipschitz,
                   const std::string& variant) {
  if (variant != "literal" && variant != "orderfree" && variant != "both") {
    throw ParameterError("--variant: expected literal, orderfree or both");
  }
  const bool literal = variant != "orderfree";
  const bool order_free = variant != "literal";
  const Outputs out(opts, g);
  auto f = out.open("conditions.csv");
  f << "model,n,D,lambda,draws";
  if (literal) f << ",influence_mean,influence_se,minsum_mean,minsum_se";
  else f << ",influence_mean,influence_se";
  if (order_free) f << ",minsum_orderfree_mean,minsum_orderfree_se";
  f << '\n';
  auto row = [&](const std::string& model, Index n, const std::string& deg, double lambda, std::size_t draws,
                 const stats::Moments& e15, const stats::Moments& e16, const stats::Moments& e16f) {
    f << model << ',' << n << ',' << deg << ',' << io::format_double(lambda) << ',' << draws << ','
      << io::format_double(e15.mean) << ',' << io::format_double(e15.std_error());
    if (literal) f << ',' << io::format_double(e16.mean) << ',' << io::format_double(e16.std_error());
    if (order_free) f << ',' << io::format_double(e16f.mean) << ',' << io::format_double(e16f.std_error());
    f << '\n';
  };
  if (net.random()) {
    ConditionTablePlan plan;
    plan.network = net.random_model(100);
    plan.lambdas = parse_doubles(lambdas, "--lambda");
    plan.degrees = parse_doubles(degrees, "--deg");
    plan.sizes = parse_sizes(sizes, "--n");
    plan.draws = reps;
    plan.p = p;
    plan.lipschitz = lipschitz;
    plan.seed = g.seed;
    plan.threads = g.threads;
    for (const auto& c : run_condition_table(plan)) {
      row(net.model, c.n, io::format_double(c.degree), c.lambda, reps, c.influence, c.minsum, c.minsum_order_free);
    }
  } else {
    const BuiltNetwork b = build_network(net, g.seed);
    const LinkFunction link = scaled_identity(lipschitz);
    for (double lambda : parse_doubles(lambdas, "--lambda")) {
      const SarSpec spec(b.weights, link, lambda, NoiseModel::gaussian(1.0));
      const ConditionReport r = clt_conditions_sar(compute_splus(spec), p, g.threads);
      stats::Moments e15, e16, e16f;
      e15.add(r.influence);
      e16.add(r.minsum);
      e16f.add(r.minsum_order_free);
      row(net.model, r.n, "-", lambda, 1, e15, e16, e16f);
    }
  }
  out.manifest();
  return 0;
}

int cmd_decay(const Options& opts, const Globals& g, const NetworkOptions& net, const SarOptions& sar, double p) {
  const BuiltNetwork b = build_network(net, g.seed);
  const SarSpec spec(b.weights, sar.make_link(), sar.lambda, sar.make_noise());
  const SPlusMatrix sp = compute_splus(spec);
  const DeltaMatrix d = delta_sar_bound(spec, p);
  const DecayDiagnostic diag = ordered_decay_diagnostic(d, p);
  const ConditionReport rep = clt_conditions_delta(d, g.threads);
  const Outputs out(opts, g);
  auto f = out.open("decay.csv");
  f << "statistic,value\n";
  auto kv = [&](const std::string& k, const std::string& v) { f << k << ',' << v << '\n'; };
  kv("n", std::to_string(spec.size()));
  kv("zeta", io::format_double(spec.zeta()));
  kv("max_influence", io::format_double(rep.influence));
  kv("min_sum", io::format_double(rep.minsum));
  kv("min_sum_orderfree", io::format_double(rep.minsum_order_free));
  kv("delta_p2", io::format_double(*rep.delta_p2));
  kv("alpha_min", io::format_double(diag.alpha_min));
  kv("alpha_threshold", io::format_double(diag.threshold));
  kv("kappa", std::to_string(diag.kappa));
  kv("tail_sup", io::format_double(diag.tail_sup));
  kv("tail_limit", io::format_double(diag.tail_limit));
  kv("skipped_rows", std::to_string(diag.skipped_rows.size()));
  kv("decay_verdict", diag.pass ? "pass" : "fail");
  if (b.graph && net.model != "lattice" && b.weights->normalized()) {
    const BoundCheck c = verify_splus_geodesic_bound(sp, geodesic_distances(*b.graph), spec.link().lipschitz(),
                                                     spec.zeta());
    kv("geodesic_max_ratio", io::format_double(c.max_ratio));
    kv("geodesic_violations", std::to_string(c.violations));
  }
  if (b.scheme) {
    const ImpliedConstant c = verify_splus_euclidean_decay(sp, *b.distances, *b.scheme, b.dim);
    kv("euclidean_implied_constant", io::format_double(c.constant));
    kv("euclidean_argmax_distance", io::format_double(c.at_distance));
  }
  auto rows = out.open("decay_rows.csv");
  rows << "node,alpha_hat\n";
  for (std::size_t i = 0; i < diag.alpha_hat.size(); ++i) {
    rows << i + 1 << ',' << (std::isnan(diag.alpha_hat[i]) ? std::string("skipped") : io::format_double(diag.alpha_hat[i]))
         << '\n';
  }
  out.manifest();
  return 0;
}

SarExperiment experiment(const BuiltNetwork& b, const SarOptions& sar, std::size_t reps, const Globals& g) {
  SarExperiment ex;
  ex.weights = b.weights;
  ex.lambda = sar.lambda;
  ex.link = sar.make_link();
  ex.noise = sar.make_noise();
  ex.replications = reps;
  ex.seed = g.seed;
  ex.threads = g.threads;
  return ex;
}

int cmd_clt(const Options& opts, const Globals& g, const NetworkOptions& net, const SarOptions& sar, std::size_t reps,
            double alpha, const std::string& ks_limit, const std::string& plot) {
  const BuiltNetwork b = build_network(net, g.seed);
  const std::optional<double> limit =
      ks_limit.empty() ? std::nullopt : std::optional<double>(parse_number(ks_limit, "--ks-limit"));
  const CltResult r = run_clt(experiment(b, sar, reps, g), alpha, limit);
  const Outputs out(opts, g);
  auto f = out.open("clt.csv");
  f << "n,lambda,link,R,mean,sigma,sigma2_over_n,degenerate,moments,ks,critical,verdict\n"
    << b.weights->size() << ',' << io::format_double(sar.lambda) << ',' << sar.link << ',' << reps << ','
    << io::format_double(r.mean) << ',' << io::format_double(r.sigma) << ','
    << io::format_double(r.variance_ratio) << ',' << (r.degenerate ? "yes" : "no") << ',' << (r.exact_moments ? "exact" : "pilot")
    << ',' << io::format_double(r.ks) << ',' << io::format_double(r.critical) << ',' << (r.pass ? "pass" : "fail")
    << '\n';
  if (yes(plot, "--plot-data")) {
    std::vector<double> z = r.standardized;
    std::sort(z.begin(), z.end());
    auto q = out.open("clt_qq.dat", {"normal quantile, standardized sum"});
    const double rr = static_cast<double>(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
      // Inverse normal CDF by bisection on erfc.
      const double target = (static_cast<double>(k) + 0.5) / rr;
      double lo = -10, hi = 10;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (stats::normal_cdf(mid) < target ? lo : hi) = mid;
      }
      q << io::format_double(0.5 * (lo + hi)) << ' ' << io::format_double(z[k]) << '\n';
    }
  }
  out.manifest();
  return 0;
}

int cmd_lln(const Options& opts, const Globals& g, const NetworkOptions& net, const SarOptions& sar,
            const std::string& ladder, std::size_t reps, double level) {
  if (!net.random()) throw ParameterError("lln: --model must be er, triangle or sbm");
  const auto sizes = parse_sizes(ladder, "--ladder");
  const LlnResult r = run_lln(sizes,
                              sar_sampler_factory(net.random_model(sizes.front()), sar.lambda, sar.make_link(),
                                                  sar.make_noise(), g.seed),
                              reps, g.seed, g.threads, level);
  const Outputs out(opts, g);
  auto f = out.open("lln.csv", {"monotone=" + std::string(r.monotone ? "yes" : "no") +
                                    ",decreasing=" + (r.decreasing ? "yes" : "no") +
                                    ",verdict=" + (r.pass ? "pass" : "fail")});
  f << "n,quantile,std_error\n";
  for (const auto& row : r.rows) {
    f << row.n << ',' << io::format_double(row.quantile) << ',' << io::format_double(row.std_error) << '\n';
  }
  out.manifest();
  return 0;
}

int cmd_tail(const Options& opts, const Globals& g, const NetworkOptions& net, const SarOptions& sar,
             std::size_t reps, double nu, const std::string& grid, const std::string& pgrid, double slack) {
  const BuiltNetwork b = build_network(net, g.seed);
  const SarExperiment ex = experiment(b, sar, reps, g);
  const TailBoundParams params = concentration_params(ex.spec(), nu, parse_doubles(pgrid, "--pgrid"));
  const TailResult r = run_tail(ex, params, parse_doubles(grid, "--grid"), slack);
  const Outputs out(opts, g);
  {
    auto f = out.open("tail.dat", {"x, P(|Z_n| >= x), exceedances"});
    for (std::size_t k = 0; k < r.grid.size(); ++k) {
      f << io::format_double(r.grid[k]) << ' ' << io::format_double(r.survival[k]) << ' ' << r.exceedances[k] << '\n';
    }
  }
  auto f = out.open("tail.csv");
  f << "nu,alpha,gamma0,t0,bound_rate,slope,required_slope,r_squared,points,truncated,verdict\n"
    << io::format_double(nu) << ',' << io::format_double(params.alpha) << ',' << io::format_double(params.gamma0) << ','
    << io::format_double(params.t0) << ',' << io::format_double(r.bound_rate) << ',' << io::format_double(r.slope) << ','
    << io::format_double(r.required_slope) << ',' << io::format_double(r.r_squared) << ',' << r.grid.size() << ','
    << (r.truncated ? "yes" : "no") << ',' << (r.pass ? "pass" : "fail") << '\n';
  out.manifest();
  return 0;
}

int cmd_ingest(const Options& opts, const Globals& g, const std::string& input, const std::string& schema, Index n,
               const std::string& normalize) {
  if (input.empty()) throw ParameterError("ingest: --input is required");
  const Graph graph = io::read_graph(input, io::parse_schema(schema), n);
  const Provenance prov{"ingest", {{"path", input}, {"schema", schema}}, {}};
  const WeightsMatrix w = yes(normalize, "--normalize") ? row_normalize(graph, prov)
                                                         : WeightsMatrix(graph.adjacency_matrix(), false, prov);
  const Outputs out(opts, g);
  std::vector<std::string> extra{"provenance: " + w.provenance().describe()};
  {
    auto f = out.open("edges.tsv", extra);
    io::write_edgelist(f, graph, schema != "binary");
  }
  auto f = out.open("weights.csv", extra);
  io::write_dense_csv(f, w.dense());
  out.manifest();
  return 0;
}

/// Reads `key = value` lines into `--key value` tokens.
std::vector<std::string> config_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path + "'");
  std::vector<std::string> tokens;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto t = io::trim(raw);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw ParseError("config: expected key = value", line);
    const auto key = io::trim(t.substr(0, eq));
    const auto value = io::trim(t.substr(eq + 1));
    if (key.empty()) throw ParseError("config: empty key", line);
    if (key == "config") throw ParseError("config: nested config files are not supported", line);
    tokens.push_back("--" + std::string(key));
    tokens.emplace_back(value);
  }
  return tokens;
}

/// Moves `--config FILE` out of argv and splices the file's options in right
/// after the subcommand, so explicit flags (which come later) win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::optional<std::string> path;
  std::vector<std::string> rest;
  for (std::size_t k = 1; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) {
      path = args[++k];
    } else if (args[k].rfind("--config=", 0) == 0) {
      path = args[k].substr(9);
    } else {
      rest.push_back(args[k]);
    }
  }
  if (!path) return args;
  std::vector<std::string> out{args[0]};
  if (!rest.empty()) out.push_back(rest.front());
  for (auto& t : config_tokens(*path)) out.push_back(std::move(t));
  for (std::size_t k = 1; k < rest.size(); ++k) out.push_back(rest[k]);
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Functional dependence tools for network data"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Globals globals;
  NetworkOptions net;
  SarOptions sar;

  // gen
  auto* gen = app.add_subcommand("gen", "generate a network and its row-normalised weights");
  Options gen_o(gen);
  net.add(gen_o);
  add_globals(gen_o, globals);

  // splus
  auto* splus = app.add_subcommand("splus", "S+ = L (I - L|lambda W|)^{-1} as dense CSV");
  Options splus_o(splus);
  net.add(splus_o);
  sar.add(splus_o);
  add_globals(splus_o, globals);

  // fdm
  auto* fdm = app.add_subcommand("fdm", "functional dependence matrix: bound, exact or Monte Carlo");
  Options fdm_o(fdm);
  std::string mode = "bound";
  double p = 2.0;
  std::size_t reps = 5000;
  std::string targets;
  net.add(fdm_o);
  sar.add(fdm_o);
  fdm_o.add("mode", mode, "bound | exact | mc");
  fdm_o.add("p", p, "moment order");
  fdm_o.add("reps", reps, "coupled replications (mc)");
  fdm_o.add("targets", targets, "mc targets as j:i pairs, e.g. 1:1,1:2 (empty: all, n <= 200)");
  add_globals(fdm_o, globals);

  // conditions
  auto* cond = app.add_subcommand("conditions", "mean influence and min-sum statistics over random networks");
  Options cond_o(cond);
  NetworkOptions cond_net;
  std::string lambdas = "0.2,0.3,0.4,0.8", degrees = "3,5,10", sizes = "100,400,900", variant = "literal";
  std::size_t draws = 100;
  double cond_p = 4.0, lipschitz = 1.0;
  cond_net.add(cond_o, false);
  cond_o.add("n", sizes, "node counts (comma separated)");
  cond_o.add("lambda", lambdas, "lambda values (comma separated)");
  cond_o.add("degrees", degrees, "mean degrees (comma separated)");
  cond_o.add("reps", draws, "network draws per cell");
  cond_o.add("p", cond_p, "moment order p > 2");
  cond_o.add("lipschitz", lipschitz, "Lipschitz constant L");
  cond_o.add("variant", variant, "min-sum ordering: literal | orderfree | both");
  add_globals(cond_o, globals);

  // decay
  auto* decay = app.add_subcommand("decay", "ordered-decay and S+ decay diagnostics for one network");
  Options decay_o(decay);
  double decay_p = 4.0;
  net.add(decay_o);
  sar.add(decay_o);
  decay_o.add("p", decay_p, "moment order p > 2");
  add_globals(decay_o, globals);

  // clt
  auto* clt = app.add_subcommand("clt", "standardised sums and KS distance to N(0,1)");
  Options clt_o(clt);
  std::size_t clt_reps = 2000;
  double ks_alpha = 0.01;
  std::string ks_limit, plot = "no";
  net.add(clt_o);
  sar.add(clt_o);
  clt_o.add("reps", clt_reps, "replications R");
  clt_o.add("ks-alpha", ks_alpha, "KS level");
  clt_o.add("ks-limit", ks_limit, "explicit KS threshold (overrides --ks-alpha)");
  clt_o.add("plot-data", plot, "also write clt_qq.dat (yes | no)");
  add_globals(clt_o, globals);

  // lln
  auto* lln = app.add_subcommand("lln", "quantiles of the centred network mean along a size ladder");
  Options lln_o(lln);
  std::string ladder = "100,400,900,1600";
  std::size_t lln_reps = 1000;
  double level = 0.95;
  net.add(lln_o, false);
  sar.add(lln_o);
  lln_o.add("ladder", ladder, "node counts (comma separated)");
  lln_o.add("reps", lln_reps, "replications per rung");
  lln_o.add("level", level, "quantile level");
  add_globals(lln_o, globals);

  // tail
  auto* tail = app.add_subcommand("tail", "empirical tail of n^{-1/2} sum (Y - EY) against the concentration rate");
  Options tail_o(tail);
  std::size_t tail_reps = 20000;
  double nu = 0.5, slack = 0.2;
  std::string grid;
  for (double x : default_tail_grid()) grid += (grid.empty() ? "" : ",") + io::format_double(x);
  std::string pgrid = "2,4,6,8,12,16";
  net.add(tail_o);
  sar.add(tail_o);
  tail_o.add("reps", tail_reps, "replications R");
  tail_o.add("nu", nu, "moment growth order nu (0 bounded, 0.5 sub-Gaussian)");
  tail_o.add("grid", grid, "x grid (comma separated)");
  tail_o.add("pgrid", pgrid, "p grid probed for gamma0");
  tail_o.add("slack", slack, "relative slack on the slope");
  add_globals(tail_o, globals);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "read an edge list or FCAP holdings table");
  Options ingest_o(ingest);
  std::string input, schema = "binary", normalize = "yes";
  Index ingest_n = 0;
  ingest_o.add("input", input, "input file");
  ingest_o.add("schema", schema, "binary | weighted | fcap");
  ingest_o.add("n", ingest_n, "node count (0: largest id)");
  ingest_o.add("normalize", normalize, "row-normalise (yes | no)");
  add_globals(ingest_o, globals);

  const std::vector<std::string> args = expand_config(argc, argv);
  std::vector<const char*> cargs;
  for (const auto& a : args) cargs.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (gen->parsed()) return cmd_gen(gen_o, globals, net);
  if (splus->parsed()) return cmd_splus(splus_o, globals, net, sar);
  if (fdm->parsed()) return cmd_fdm(fdm_o, globals, net, sar, mode, p, reps, targets);
  if (cond->parsed()) {
    return cmd_conditions(cond_o, globals, cond_net, lambdas, degrees, sizes, draws, cond_p, lipschitz, variant);
  }
  if (decay->parsed()) return cmd_decay(decay_o, globals, net, sar, decay_p);
  if (clt->parsed()) return cmd_clt(clt_o, globals, net, sar, clt_reps, ks_alpha, ks_limit, plot);
  if (lln->parsed()) return cmd_lln(lln_o, globals, net, sar, ladder, lln_reps, level);
  if (tail->parsed()) return cmd_tail(tail_o, globals, net, sar, tail_reps, nu, grid, pgrid, slack);
  if (ingest->parsed()) return cmd_ingest(ingest_o, globals, input, schema, ingest_n, normalize);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ParameterError& e) {
    std::cerr << "fdnet: parameter error: " << e.what() << '\n';
    return 2;
  } catch (const CapabilityError& e) {
    std::cerr << "fdnet: unavailable: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "fdnet: data error: " << e.what() << '\n';
    return 3;
  } catch (const ConvergenceError& e) {
    std::cerr << "fdnet: convergence error: " << e.what() << '\n';
    return 4;
  } catch (const ExperimentError& e) {
    std::cerr << "fdnet: experiment error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "fdnet: " << e.what() << '\n';
    return 1;
  }
}
