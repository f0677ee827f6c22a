#pragma once

// Command-line front end. `run` parses arguments (optionally seeded from a
// JSON config), dispatches to a subcommand, writes CSV artifacts and prints
// one `CHECK <name> PASS|FAIL` line per check. Exit status: 0 when every
// check passes, 1 when a check fails, 2 for invalid input, 3 for numerical
// failures.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "stochred/accretion.hpp"
#include "stochred/composite.hpp"
#include "stochred/dynamics.hpp"
#include "stochred/linalg.hpp"
#include "stochred/noise.hpp"
#include "stochred/phenomenology.hpp"
#include "stochred/random.hpp"
#include "stochred/reduction.hpp"
#include "stochred/special_functions.hpp"
#include "stochred/stats.hpp"
#include "stochred/units.hpp"

namespace stochred::cli {

using json = nlohmann::ordered_json;

inline constexpr std::uint64_t kDefaultSeed = 12345;
inline constexpr const char* kSeedEnv = "STOCHRED_SEED";

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Parsing helpers -----------------------------------------------------------

inline std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i <= text.size()) {
    std::size_t j = text.find(',', i);
    if (j == std::string::npos) j = text.size();
    std::string_view tok(text.data() + i, j - i);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    if (!tok.empty()) {
      double v = 0.0;
      const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) {
        throw ConfigError("cannot parse number '" + std::string(tok) + "' in list '" + text + "'");
      }
      out.push_back(v);
    }
    i = j + 1;
  }
  return out;
}

inline std::uint64_t default_seed() {
  if (const char* env = std::getenv(kSeedEnv)) {
    std::uint64_t v = 0;
    const std::string_view s(env);
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw ConfigError(std::string(kSeedEnv) + " is not an unsigned integer");
    }
    return v;
  }
  return kDefaultSeed;
}

/// Hamiltonian from a description: "ladder" (0..d-1), "diag:e0,e1,...",
/// "random" (seeded GUE-like), or "file:<path>" (matrix text format).
inline Operator parse_hamiltonian(const std::string& desc, std::size_t dim, std::uint64_t seed) {
  if (desc == "ladder") {
    std::vector<double> e(dim);
    for (std::size_t i = 0; i < dim; ++i) e[i] = static_cast<double>(i);
    return Operator::diagonal(e);
  }
  if (desc.rfind("diag:", 0) == 0) return Operator::diagonal(parse_list(desc.substr(5)));
  if (desc == "random") {
    std::mt19937_64 rng(mix64(seed ^ 0x4841u));
    return random_hermitian(dim, rng);
  }
  if (desc.rfind("file:", 0) == 0) {
    std::ifstream in(desc.substr(5));
    if (!in) throw ConfigError("cannot open Hamiltonian file '" + desc.substr(5) + "'");
    return Operator(read_matrix(in), true);
  }
  throw ConfigError("unknown Hamiltonian '" + desc + "'");
}

// Config expansion ------------------------------------------------------------

/// Turns {"command": [...], "options": {...}} into argv tokens.
inline std::vector<std::string> expand_config(const json& cfg) {
  if (!cfg.is_object() || !cfg.contains("command") || !cfg["command"].is_array()) {
    throw ConfigError("config needs a \"command\" array");
  }
  std::vector<std::string> out;
  for (const auto& c : cfg["command"]) {
    if (!c.is_string()) throw ConfigError("config command entries must be strings");
    out.push_back(c.get<std::string>());
  }
  if (cfg.contains("options")) {
    if (!cfg["options"].is_object()) throw ConfigError("config \"options\" must be an object");
    for (const auto& [key, value] : cfg["options"].items()) {
      if (value.is_boolean()) {
        if (value.get<bool>()) out.push_back("--" + key);
        continue;
      }
      out.push_back("--" + key);
      if (value.is_string()) {
        out.push_back(value.get<std::string>());
      } else if (value.is_array()) {
        std::string joined;
        for (const auto& v : value) {
          if (!joined.empty()) joined += ',';
          joined += v.is_string() ? v.get<std::string>() : v.dump();
        }
        out.push_back(joined);
      } else if (value.is_number()) {
        out.push_back(value.dump());
      } else {
        throw ConfigError("unsupported value for option '" + key + "'");
      }
    }
  }
  return out;
}

// Run context -----------------------------------------------------------------

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct Context {
  std::uint64_t seed = kDefaultSeed;
  unsigned workers = 0;
  std::string out_dir;
  std::ostream* out = &std::cout;
  std::vector<Check> checks;
  std::vector<std::string> command;
  json options = json::object();

  std::ostream& os() { return *out; }

  void check(const std::string& name, bool pass, const std::string& detail = {}) {
    checks.push_back({name, pass, detail});
  }

  std::filesystem::path path(const std::string& file) const {
    return std::filesystem::path(out_dir) / file;
  }

  std::ofstream open(const std::string& file) const {
    std::ofstream f(path(file), std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path(file).string());
    return f;
  }
};

inline std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

/// Registers an option and records it for the resolved config.
class Registry {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& name, T& var, const std::string& help) {
    auto* opt = app->add_option("--" + name, var, help)->capture_default_str();
    getters_[app].push_back({name, [&var] { return json(var); }});
    return opt;
  }
  CLI::Option* flag(CLI::App* app, const std::string& name, bool& var, const std::string& help) {
    auto* opt = app->add_flag("--" + name, var, help);
    getters_[app].push_back({name, [&var] { return json(var); }});
    return opt;
  }
  json resolved(CLI::App* app) const {
    json j = json::object();
    const auto it = getters_.find(app);
    if (it == getters_.end()) return j;
    for (const auto& [name, get] : it->second) j[name] = get();
    return j;
  }

 private:
  std::map<CLI::App*, std::vector<std::pair<std::string, std::function<json()>>>> getters_;
};

inline std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return s.str();
}

inline SdeConfig sde_config(double sigma, double dt, double range) {
  SdeConfig c;
  c.sigma = sigma;
  c.dt = dt > 0.0 ? dt : default_dt(sigma, range);
  check_stability(sigma, range, c.dt);
  return c;
}

inline std::vector<double> equal_weights(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

inline void print_table(std::ostream& os, const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return;
  std::vector<std::size_t> w(rows.front().size(), 0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) w[c] = std::max(w[c], r[c].size());
  }
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      os << std::left << std::setw(static_cast<int>(w[c]) + 2) << r[c];
    }
    os << '\n';
  }
}

// Subcommands -------------------------------------------------------------------

struct SimulateOpts {
  std::size_t dim = 2;
  std::string hamiltonian = "ladder";
  std::string weights;
  bool density = false;
  std::string noise_form = "anticommutator";
  std::string scheme = "renormalized";
  double sigma = 1.0;
  double dt = 0.0;
  std::size_t steps = 1000;
  std::size_t stride = 1;
};

inline void run_simulate(Context& ctx, const SimulateOpts& o) {
  const Operator h = parse_hamiltonian(o.hamiltonian, o.dim, ctx.seed);
  const std::vector<double> w = o.weights.empty() ? equal_weights(h.dim()) : parse_list(o.weights);
  if (w.size() != h.dim()) throw ConfigError("weights must have one entry per dimension");
  SdeConfig cfg = sde_config(o.sigma, o.dt, spectral_range(h));
  cfg.n_steps = o.steps;
  cfg.record_stride = o.stride;
  if (o.scheme == "renormalized") {
    cfg.scheme = Scheme::euler_renormalized;
  } else if (o.scheme == "euler-maruyama") {
    cfg.scheme = Scheme::euler_maruyama;
  } else {
    throw ConfigError("scheme must be renormalized or euler-maruyama");
  }
  if (o.noise_form == "anticommutator") {
    cfg.noise_form = NoiseForm::anticommutator;
  } else if (o.noise_form == "double-commutator") {
    cfg.noise_form = NoiseForm::double_commutator;
  } else {
    throw ConfigError("noise-form must be anticommutator or double-commutator");
  }
  const StateVector chi = StateVector::from_weights(w);
  const State init = o.density ? State(DensityMatrix::from_state(chi)) : State(chi);
  const Trajectory tr = evolve_trajectory(init, h, cfg, ctx.seed, false);
  auto f = ctx.open("trajectory.csv");
  write_trajectory_csv(f, tr);
  auto n = ctx.open("noise.csv");
  write_noise_csv(n, wiener_path(ctx.seed, cfg.dt, cfg.n_steps));
  bool finite = true;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    finite = finite && std::isfinite(tr.energy[i]) && std::isfinite(tr.variance[i]);
  }
  ctx.check("simulate.finite", finite);
  ctx.os() << "steps " << cfg.n_steps << "  dt " << cfg.dt << "  final V "
           << tr.variance.back() << '\n';
}

struct BornOpts {
  std::string weights = "0.1,0.2,0.3,0.4";
  std::string energies;
  std::size_t dim = 0;
  double sigma = 1.0;
  double dt = 0.0;
  std::size_t ntraj = 10000;
};

inline void run_born(Context& ctx, const BornOpts& o) {
  std::vector<double> w = parse_list(o.weights);
  if (o.dim != 0 && o.dim != w.size()) throw ConfigError("--dim does not match --weights");
  std::vector<double> e = o.energies.empty() ? std::vector<double>{} : parse_list(o.energies);
  if (e.empty()) {
    for (std::size_t i = 0; i < w.size(); ++i) e.push_back(static_cast<double>(i));
  }
  if (e.size() != w.size()) throw ConfigError("energies and weights differ in length");
  const Operator h = Operator::diagonal(e);
  const StateVector chi = StateVector::from_weights(w);
  const SdeConfig cfg = sde_config(o.sigma, o.dt, spectral_range(h));
  EnsembleOptions eo;
  eo.workers = ctx.workers;
  const EnsembleStats s = born_statistics(h, chi, cfg, o.ntraj, ctx.seed, eo);
  const auto expected = born_weights(h, chi);
  auto f = ctx.open("outcomes.csv");
  write_outcome_csv(f, s);
  std::vector<double> counts(s.outcome_counts.begin(), s.outcome_counts.end());
  const auto chi2 = stats::chi_square_gof(counts, expected);
  ctx.check("born.chi_square", chi2.p_value > 1e-3, "p=" + fmt(chi2.p_value));
  bool within = true;
  double worst = 0.0;
  for (std::size_t g = 0; g < expected.size(); ++g) {
    const double z = stats::binomial_z(s.outcome_frequencies[g], expected[g], s.n_classified());
    worst = std::max(worst, z);
    within = within && z <= 4.0;
  }
  ctx.check("born.binomial_4sigma", within, "max z=" + fmt(worst));
  std::vector<std::vector<std::string>> rows{{"outcome", "energy", "expected", "frequency"}};
  for (std::size_t g = 0; g < expected.size(); ++g) {
    rows.push_back({std::to_string(g), fmt(s.outcome_energies[g]), fmt(expected[g]),
                    fmt(s.outcome_frequencies[g])});
  }
  print_table(ctx.os(), rows);
}

struct VarianceOpts {
  std::string energies = "0,1";
  std::string weights = "0.5,0.5";
  double sigma = 1.0;
  double dt = 0.0;
  double horizon = 4.0;
  std::size_t points = 40;
  std::size_t ntraj = 10000;
};

inline void run_variance(Context& ctx, const VarianceOpts& o) {
  const Operator h = Operator::diagonal(parse_list(o.energies));
  const StateVector chi = StateVector::from_weights(parse_list(o.weights));
  SdeConfig cfg = sde_config(o.sigma, o.dt, spectral_range(h));
  if (o.points < 2) throw ConfigError("--points must be >= 2");
  const auto total = static_cast<std::size_t>(std::ceil(o.horizon / cfg.dt));
  cfg.record_stride = std::max<std::size_t>(1, total / o.points);
  cfg.n_steps = cfg.record_stride * o.points;
  EnsembleOptions eo;
  eo.workers = ctx.workers;
  const EnsembleStats s = variance_ensemble(h, chi, cfg, o.ntraj, ctx.seed, eo);
  auto f = ctx.open("variance.csv");
  write_variance_csv(f, s);
  const auto r = variance_decay_check(s);
  ctx.check("variance.slope", std::abs(r.slope - 1.0) <= 0.1,
            "slope=" + fmt(r.slope) + " se=" + fmt(r.slope_se));
  ctx.check("variance.monotone", r.monotone, "worst z=" + fmt(r.worst_increase_z));
}

struct StatdistOpts {
  std::string energies = "0,1,2";
  double beta = 1.0;
  double sigma = 1.0;
  double dt = 0.0;
  std::size_t ntraj = 10000;
  std::size_t steps = 4000;
  std::size_t stride = 100;
};

inline void run_statdist(Context& ctx, const StatdistOpts& o) {
  const GibbsSpec g{o.beta, Operator::diagonal(parse_list(o.energies))};
  SdeConfig cfg = sde_config(o.sigma, o.dt, spectral_range(g.h));
  cfg.n_steps = o.steps;
  cfg.record_stride = o.stride;
  EnsembleOptions eo;
  eo.workers = ctx.workers;
  const StatdistReport r = statdist_martingale_run(g, cfg, o.ntraj, ctx.seed, eo);
  {
    auto f = ctx.open("statdist.csv");
    f << "t,mean_deviation,sem\n" << std::setprecision(17);
    for (std::size_t k = 0; k < r.times.size(); ++k) {
      f << r.times[k] << ',' << r.mean_deviation[k] << ',' << r.deviation_sem[k] << '\n';
    }
  }
  auto f = ctx.open("outcomes.csv");
  write_outcome_csv(f, r.stats);
  ctx.check("statdist.mean_within_5sem", r.sup_deviation_ratio <= 5.0,
            "sup ratio=" + fmt(r.sup_deviation_ratio));
  bool within = true;
  double worst = 0.0;
  for (std::size_t k = 0; k < r.gibbs_group_weights.size(); ++k) {
    const double z = stats::binomial_z(r.stats.outcome_frequencies[k], r.gibbs_group_weights[k],
                                       r.stats.n_classified());
    worst = std::max(worst, z);
    within = within && z <= 4.0;
  }
  ctx.check("statdist.outcomes_4sigma", within, "max z=" + fmt(worst));
  if (r.n_degenerate_endpoints > 0) {
    ctx.check("statdist.degenerate_ratio", r.max_intra_group_ratio_error <= 1e-9,
              "max rel error=" + fmt(r.max_intra_group_ratio_error));
  }
}

struct LudersOpts {
  double alpha_weight = 0.5;
  std::string transmitted_weights = "0.5,0.5";
  std::string transmitted_phases = "0,1";
  std::string transmitted_energies = "0,0.0005";
  std::string branch_weights = "0.3,0.2";
  std::string branch_energies = "1,2";
  double sigma = 1.0;
  double dt = 0.0;
  std::size_t ntraj = 10000;
};

inline void run_luders(Context& ctx, const LudersOpts& o) {
  LudersSpec spec;
  const auto tw = parse_list(o.transmitted_weights);
  const auto tp = parse_list(o.transmitted_phases);
  if (tw.size() != tp.size()) throw ConfigError("transmitted weights and phases differ in length");
  spec.alpha = std::sqrt(o.alpha_weight);
  spec.beta = 1.0;
  spec.transmitted_amplitudes.clear();
  for (std::size_t j = 0; j < tw.size(); ++j) {
    spec.transmitted_amplitudes.push_back(std::polar(std::sqrt(tw[j]), tp[j]));
  }
  spec.transmitted_energies = parse_list(o.transmitted_energies);
  for (double bw : parse_list(o.branch_weights)) {
    spec.branch_amplitudes.push_back(std::sqrt(bw));
  }
  spec.branch_energies = parse_list(o.branch_energies);
  double range = 0.0;
  {
    std::vector<double> all = spec.transmitted_energies;
    all.insert(all.end(), spec.branch_energies.begin(), spec.branch_energies.end());
    range = *std::max_element(all.begin(), all.end()) - *std::min_element(all.begin(), all.end());
  }
  const SdeConfig cfg = sde_config(o.sigma, o.dt, range);
  EnsembleOptions eo;
  eo.workers = ctx.workers;
  const LudersReport r = luders_scenario(spec, cfg, o.ntraj, ctx.seed, eo);
  auto f = ctx.open("outcomes.csv");
  write_outcome_csv(f, r.stats);
  double worst = 0.0;
  for (double z : r.z_scores) worst = std::max(worst, z);
  ctx.check("luders.frequencies_4sigma", worst <= 4.0, "max z=" + fmt(worst));
  ctx.check("luders.fidelity", r.min_fidelity >= 0.99, "min=" + fmt(r.min_fidelity, 8));
  ctx.check("luders.phase", r.max_phase_error <= 1e-2, "max=" + fmt(r.max_phase_error));
}

struct ScalingOpts {
  std::string sigmas = "0.5,1,2,4";
  std::string delta_es = "0.5,1,2,4";
  double sigma_fixed = 1.0;
  double delta_e_fixed = 1.0;
  std::size_t ntraj = 2000;
};

inline void run_scaling(Context& ctx, const ScalingOpts& o) {
  EnsembleOptions eo;
  eo.workers = ctx.workers;
  const ScalingReport r = reduction_time_scaling(parse_list(o.delta_es), parse_list(o.sigmas),
                                                 o.sigma_fixed, o.delta_e_fixed, o.ntraj,
                                                 ctx.seed, eo);
  auto f = ctx.open("scaling.csv");
  f << "scan,sigma,delta_e,dt,median_time,n_reduced,n_traj\n" << std::setprecision(17);
  auto dump = [&](const char* scan, const std::vector<ScalingPoint>& pts) {
    for (const auto& p : pts) {
      f << scan << ',' << p.sigma << ',' << p.delta_e << ',' << p.dt << ',' << p.median_time
        << ',' << p.n_reduced << ',' << p.n_traj << '\n';
      if (!p.reduced()) {
        ctx.os() << "note: " << scan << " point sigma=" << p.sigma << " dE=" << p.delta_e
                 << " did not reduce\n";
      }
    }
  };
  dump("sigma", r.sigma_scan);
  dump("delta_e", r.energy_scan);
  ctx.check("scaling.sigma_exponent", std::abs(r.sigma_exponent + 2.0) <= 0.2,
            "p=" + fmt(r.sigma_exponent));
  ctx.check("scaling.delta_e_exponent", std::abs(r.energy_exponent + 2.0) <= 0.2,
            "p=" + fmt(r.energy_exponent));
}

struct ClusterOpts {
  std::size_t instances = 100;
  std::size_t pairs = 1000;
};

inline void run_cluster(Context& ctx, const ClusterOpts& o) {
  const auto cases = cluster_suite(o.instances, o.pairs, ctx.seed);
  auto f = ctx.open("cluster.csv");
  write_cluster_csv(f, cases);
  for (const auto& c : cases) {
    ctx.check("cluster." + c.name, c.pass(),
              c.expect_zero ? "max=" + fmt(c.max_residual) : "min=" + fmt(c.min_residual));
  }
}

struct HartreeOpts {
  std::size_t d1 = 4;
  std::size_t d2 = 4;
  std::string g_values = "0,0.4,0.2,0.1";
  double sigma = 1.0;
  double horizon = 1.0;
  double dt = 3e-4;
  std::size_t ntraj = 20;
  std::string environment = "equilibrium";
};

/// Random H1, deltaH; H2 with a two-fold degenerate ground level. The
/// equilibrium environment mixes within that level; the non-equilibrium
/// one is a random pure state.
struct HartreeSetup {
  CompositeSystem sys;
  DensityMatrix rho1;
  DensityMatrix rho2;
};

inline HartreeSetup hartree_setup(std::size_t d1, std::size_t d2, bool equilibrium,
                                  std::uint64_t seed) {
  if (d2 < 3) throw ConfigError("hartree: d2 must be >= 3");
  std::mt19937_64 rng(mix64(seed ^ 0x4a7u));
  auto scaled = [&](std::size_t d) {
    Matrix m = random_hermitian(d, rng).matrix();
    return Operator::hermitian(2.0 * m / m.norm());
  };
  const Operator h1 = scaled(d1);
  const Operator dh = scaled(d1 * d2);
  std::vector<double> e2(d2);
  for (std::size_t k = 0; k < d2; ++k) e2[k] = k < 2 ? 0.0 : 1.0 + 0.5 * static_cast<double>(k - 2);
  const Operator h2 = Operator::diagonal(e2);
  const auto rho1 = DensityMatrix::from_state(random_pure_state(d1, rng));
  Matrix r2 = Matrix::Zero(static_cast<Eigen::Index>(d2), static_cast<Eigen::Index>(d2));
  if (equilibrium) {
    r2(0, 0) = 0.5;
    r2(1, 1) = 0.5;
  } else {
    const Vector v = random_pure_state(d2, rng).amplitudes();
    r2 = v * v.adjoint();
    r2 = 0.5 * (r2 + r2.adjoint()).eval();
  }
  return {CompositeSystem(h1, h2, dh), rho1, DensityMatrix(r2)};
}

inline void run_hartree(Context& ctx, const HartreeOpts& o) {
  bool equilibrium = true;
  if (o.environment == "nonequilibrium") {
    equilibrium = false;
  } else if (o.environment != "equilibrium") {
    throw ConfigError("environment must be equilibrium or nonequilibrium");
  }
  const auto setup = hartree_setup(o.d1, o.d2, equilibrium, ctx.seed);
  const auto rep = hartree_vs_full(setup.sys, setup.rho1, setup.rho2, o.sigma, o.horizon,
                                   parse_list(o.g_values), o.ntraj, ctx.seed, ctx.workers, o.dt);
  auto f = ctx.open("hartree.csv");
  write_hartree_csv(f, rep);
  for (const auto& p : rep.points) {
    if (p.n_failed > 0) {
      ctx.os() << "g=" << p.g << ": " << p.n_failed << " trajectories failed: " << p.failure
               << '\n';
    }
  }
  if (!equilibrium) {
    ctx.os() << "non-equilibrium environment: discrepancy exponent " << rep.exponent << '\n';
    return;
  }
  ctx.check("hartree.exponent", rep.exponent >= 1.7, "p=" + fmt(rep.exponent));
  for (const auto& p : rep.points) {
    if (p.g == 0.0) {
      ctx.check("hartree.g0", p.mean_discrepancy <= 1e-10, "d=" + fmt(p.mean_discrepancy));
    }
  }
  for (const auto& a : rep.points) {
    for (const auto& b : rep.points) {
      if (a.g > 0.0 && std::abs(b.g - 0.5 * a.g) <= 1e-12 * a.g) {
        const double ratio = a.mean_discrepancy / b.mean_discrepancy;
        ctx.check("hartree.halving_g" + fmt(a.g), std::abs(ratio / 4.0 - 1.0) <= 0.3,
                  "ratio=" + fmt(ratio));
      }
    }
  }
}

struct OccupancyOpts {
  unsigned sites = 1000;
  double sticking = 0.005;
  double evaporation = 0.995;
  double mass = 1.0;
  double horizon = 1e5;
};

inline void run_occupancy(Context& ctx, const OccupancyOpts& o) {
  AccretionModel m;
  m.n_sites = o.sites;
  m.mass = o.mass;
  m.sticking_rate = o.sticking;
  m.evaporation_rate = o.evaporation;
  const auto r = occupancy_simulate(m, o.horizon, ctx.seed);
  const double p = m.fill_fraction();
  const double x = m.mean_occupancy();
  std::vector<double> pb, pp;
  for (unsigned n = 0; n <= o.sites; ++n) {
    pb.push_back(binomial_pmf(n, o.sites, p));
    pp.push_back(poisson_pmf(n, x));
  }
  {
    auto f = ctx.open("occupancy.csv");
    f << "n,count,binomial,poisson\n" << std::setprecision(17);
    for (unsigned n = 0; n <= o.sites; ++n) {
      f << n << ',' << r.histogram[n] << ',' << pb[n] << ',' << pp[n] << '\n';
    }
  }
  const auto cb = stats::chi_square_gof(r.histogram, pb);
  ctx.check("occupancy.binomial", cb.p_value > 1e-3, "p=" + fmt(cb.p_value));
  const double sd = std::sqrt(r.variance);
  ctx.os() << "X " << x << "  sampled mean " << r.mean << "  rms " << sd << "  dE "
           << energy_fluctuation_accretion(m) << '\n';
  if (p <= 0.01) {
    // Poisson normalization is short by the mass above n = N; renormalize.
    double tot = 0.0;
    for (double v : pp) tot += v;
    for (double& v : pp) v /= tot;
    const auto cp = stats::chi_square_gof(r.histogram, pp);
    ctx.check("occupancy.poisson_dilute", cp.p_value > 1e-3, "p=" + fmt(cp.p_value));
    ctx.check("occupancy.rms_sqrtX", std::abs(sd / std::sqrt(x) - 1.0) <= 0.1,
              "rms/sqrtX=" + fmt(sd / std::sqrt(x)));
  }
  if (r.short_horizon) ctx.os() << "warning: horizon too short for stationarity\n";
}

struct CoherentOpts {
  unsigned n = 400;
  double z = 0.05;
  unsigned n_max = 0;
  int k_min = -20;
  int k_max = 20;
};

inline void run_coherent(Context& ctx, const CoherentOpts& o) {
  const Complex z(o.z, 0.0);
  const unsigned nmax = o.n_max ? o.n_max : pnk_truncation(o.n, z);
  auto f = ctx.open("coherent.csv");
  write_coherent_csv(f, o.n, z, nmax, o.k_min, o.k_max);
  const auto dist = pnk_exact_distribution(o.n, z, nmax);
  ctx.check("coherent.sum", std::abs(dist.sum() - 1.0) <= 1e-10,
            "|sum-1|=" + fmt(std::abs(dist.sum() - 1.0)));
  ctx.os() << "band edge +-" << band_edge(o.n, z) << '\n';
}

struct PhenomOpts {
  std::string delta_e = "2.8MeV";
  std::string area = "1cm2";
  std::string preset = "air-stp";
  std::string temperature = "298K";
  std::string heat_capacity = "4.18J/K";
  double charges = 6e7;
  double gain = 1e4;
  std::string carrier_mass = "0.511MeV";
  std::string scattering_rate = "1e10/s";
};

inline void run_phenom(Context& ctx, const std::string& which, const PhenomOpts& o) {
  using namespace units;
  std::vector<std::vector<std::string>> rows{{"quantity", "value", "unit"}};
  if (which == "t-reduce") {
    const auto t = phenom::t_reduce(parse_quantity(o.delta_e, kEnergy));
    rows.push_back({"t_R", fmt(t.value(), 6), "s"});
  } else if (which == "accretion") {
    const auto p = phenom::find_preset(o.preset);
    const auto r = phenom::t_reduce_accretion(parse_quantity(o.area, kArea), p.rate(),
                                              p.molecule_mass);
    rows.push_back({"t_R", fmt(r.t_r.value(), 6), "s"});
    rows.push_back({"molecules", fmt(r.molecules, 6), ""});
    rows.push_back({"valid", r.valid ? "yes" : "no (fewer than one molecule)", ""});
    ctx.check("phenom.accretion_valid", r.valid);
  } else if (which == "table") {
    const auto t = phenom::scenario_table();
    auto f = ctx.open("scenarios.csv");
    phenom::write_scenario_csv(f, t);
    rows = {{"preset", "t_R [s]", "area [cm2]", "molecules"}};
    for (const auto& r : t) {
      rows.push_back({r.preset, fmt(r.target_time), fmt(r.required_area), fmt(r.molecules)});
    }
  } else if (which == "thermal") {
    const auto th = phenom::thermal_fluctuation(parse_quantity(o.temperature, kTemperature),
                                                parse_quantity(o.heat_capacity, kHeatCapacity));
    rows.push_back({"dE_rms", fmt(th.delta_e.value() / 1e9, 6), "GeV"});
    rows.push_back({"dT_rms", fmt(th.delta_t.value(), 6), "K"});
  } else if (which == "shot-noise") {
    const auto s = phenom::shot_noise_energy(o.charges, o.gain,
                                             parse_quantity(o.carrier_mass, kEnergy));
    rows.push_back({"dN", fmt(s.delta_n, 6), ""});
    rows.push_back({"dE", fmt(s.delta_e.value() / 1e9, 6), "GeV"});
    rows.push_back({"t_R", fmt(s.t_r.value(), 6), "s"});
  } else if (which == "decoherence") {
    const auto p = phenom::find_preset(o.preset);
    const auto area = parse_quantity(o.area, kArea);
    const auto acc = phenom::t_reduce_accretion(area, p.rate(), p.molecule_mass);
    const auto per = parse_quantity(o.scattering_rate, kInverseTime);
    const auto d = phenom::decoherence_rate(per * acc.molecules);
    const double red = 1.0 / acc.t_r.value();
    rows.push_back({"D", fmt(d.value(), 6), "1/s"});
    rows.push_back({"reduction rate", fmt(red, 6), "1/s"});
    rows.push_back({"ratio", fmt(red / d.value(), 6), ""});
    rows.push_back({"crossover area", fmt(phenom::crossover_area(red / d.value(), area).value(), 6),
                    "cm2"});
  }
  print_table(ctx.os(), rows);
  auto f = ctx.open("phenom.csv");
  f << "quantity,value,unit\n";
  for (std::size_t i = 1; i < rows.size(); ++i) {
    f << rows[i][0] << ',' << rows[i][1] << ',' << (rows[i].size() > 2 ? rows[i][2] : "") << '\n';
  }
}

inline void run_reproduce(Context& ctx) {
  const auto checks = phenom::reproduce_checks();
  auto f = ctx.open("reference.csv");
  phenom::write_checks_csv(f, checks);
  std::vector<std::vector<std::string>> rows{{"quantity", "computed", "reference", "unit", "ok"}};
  for (const auto& c : checks) {
    rows.push_back({c.name, fmt(c.computed), (c.upper_bound ? "<" : "") + fmt(c.reference),
                    c.unit, c.pass() ? "yes" : "no"});
    ctx.check("reproduce." + c.name, c.pass());
  }
  print_table(ctx.os(), rows);
}

// Entry point -------------------------------------------------------------------

/// Splits `--config <file>` / `--config=<file>` out of args and returns the
/// expanded argument list.
inline std::vector<std::string> apply_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config needs a file");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (path.empty()) return rest;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  std::vector<std::string> out = expand_config(cfg);
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

inline int run(const std::vector<std::string>& raw_args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  try {
    args = apply_config(raw_args);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  CLI::App app{"Stochastic energy-driven state reduction toolkit", "stochred"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.fallthrough();
  Registry reg;
  Context ctx;
  ctx.out = &out;
  std::string seed_text;
  std::string out_dir;
  app.add_option("--seed", seed_text, "Base seed (default: $STOCHRED_SEED or 12345)");
  app.add_option("--workers", ctx.workers, "Worker threads (0: machine parallelism)");
  app.add_option("--out", out_dir, "Output directory (default ./out/<command>-<timestamp>)");
  app.add_option("--config", "JSON config {\"command\": [...], \"options\": {...}}");

  std::function<void()> action;
  CLI::App* leaf = nullptr;
  auto leaf_of = [&](CLI::App* a, std::function<void()> fn) {
    a->callback([&, a, fn] {
      leaf = a;
      action = fn;
    });
  };

  SimulateOpts sim;
  auto* c_sim = app.add_subcommand("simulate", "Single trajectory");
  reg.add(c_sim, "dim", sim.dim, "Hilbert space dimension");
  reg.add(c_sim, "hamiltonian", sim.hamiltonian, "ladder | diag:e0,e1,... | random | file:<path>");
  reg.add(c_sim, "weights", sim.weights, "Initial weights (default equal)");
  reg.flag(c_sim, "density", sim.density, "Evolve the density matrix");
  reg.add(c_sim, "noise-form", sim.noise_form, "anticommutator | double-commutator");
  reg.add(c_sim, "scheme", sim.scheme, "renormalized | euler-maruyama");
  reg.add(c_sim, "sigma", sim.sigma, "Noise strength");
  reg.add(c_sim, "dt", sim.dt, "Step (0: default)");
  reg.add(c_sim, "steps", sim.steps, "Number of steps");
  reg.add(c_sim, "stride", sim.stride, "Record every k steps");
  leaf_of(c_sim, [&] { run_simulate(ctx, sim); });

  auto* c_ens = app.add_subcommand("ensemble", "Ensemble checks");
  c_ens->require_subcommand(1);
  BornOpts born;
  auto* c_born = c_ens->add_subcommand("born", "Outcome statistics versus Born weights");
  reg.add(c_born, "dim", born.dim, "Dimension (checked against weights)");
  reg.add(c_born, "weights", born.weights, "Initial weights");
  reg.add(c_born, "energies", born.energies, "Eigenvalues (default 0..d-1)");
  reg.add(c_born, "sigma", born.sigma, "Noise strength");
  reg.add(c_born, "dt", born.dt, "Step (0: default)");
  reg.add(c_born, "ntraj", born.ntraj, "Trajectories");
  leaf_of(c_born, [&] { run_born(ctx, born); });

  VarianceOpts var;
  auto* c_var = c_ens->add_subcommand("variance", "Expected variance decay");
  reg.add(c_var, "energies", var.energies, "Eigenvalues");
  reg.add(c_var, "weights", var.weights, "Initial weights");
  reg.add(c_var, "sigma", var.sigma, "Noise strength");
  reg.add(c_var, "dt", var.dt, "Step (0: default)");
  reg.add(c_var, "horizon", var.horizon, "Time horizon");
  reg.add(c_var, "points", var.points, "Grid intervals");
  reg.add(c_var, "ntraj", var.ntraj, "Trajectories");
  leaf_of(c_var, [&] { run_variance(ctx, var); });

  StatdistOpts sd;
  auto* c_sd = c_ens->add_subcommand("statdist", "Commuting martingale from a Gibbs state");
  reg.add(c_sd, "energies", sd.energies, "Eigenvalues");
  reg.add(c_sd, "beta", sd.beta, "Inverse temperature");
  reg.add(c_sd, "sigma", sd.sigma, "Noise strength");
  reg.add(c_sd, "dt", sd.dt, "Step (0: default)");
  reg.add(c_sd, "ntraj", sd.ntraj, "Trajectories");
  reg.add(c_sd, "steps", sd.steps, "Recorded horizon in steps");
  reg.add(c_sd, "stride", sd.stride, "Record every k steps");
  leaf_of(c_sd, [&] { run_statdist(ctx, sd); });

  LudersOpts lu;
  auto* c_lu = c_ens->add_subcommand("luders", "Reduction onto a degenerate branch");
  reg.add(c_lu, "alpha-weight", lu.alpha_weight, "|alpha|^2");
  reg.add(c_lu, "transmitted-weights", lu.transmitted_weights, "Weights inside the branch");
  reg.add(c_lu, "transmitted-phases", lu.transmitted_phases, "Phases inside the branch [rad]");
  reg.add(c_lu, "transmitted-energies", lu.transmitted_energies, "Energies inside the branch");
  reg.add(c_lu, "branch-weights", lu.branch_weights, "|beta c_l|^2");
  reg.add(c_lu, "branch-energies", lu.branch_energies, "Energies of the other branches");
  reg.add(c_lu, "sigma", lu.sigma, "Noise strength");
  reg.add(c_lu, "dt", lu.dt, "Step (0: default)");
  reg.add(c_lu, "ntraj", lu.ntraj, "Trajectories");
  leaf_of(c_lu, [&] { run_luders(ctx, lu); });

  ScalingOpts sc;
  auto* c_sc = c_ens->add_subcommand("scaling", "Reduction time versus sigma and gap");
  reg.add(c_sc, "sigmas", sc.sigmas, "Sigma scan");
  reg.add(c_sc, "delta-es", sc.delta_es, "Gap scan");
  reg.add(c_sc, "sigma-fixed", sc.sigma_fixed, "Sigma during the gap scan");
  reg.add(c_sc, "delta-e-fixed", sc.delta_e_fixed, "Gap during the sigma scan");
  reg.add(c_sc, "ntraj", sc.ntraj, "Trajectories per point");
  leaf_of(c_sc, [&] { run_scaling(ctx, sc); });

  ClusterOpts cl;
  auto* c_cl = app.add_subcommand("cluster-check", "Clustering residuals on random instances");
  reg.add(c_cl, "instances", cl.instances, "Instances per case");
  reg.add(c_cl, "pairs", cl.pairs, "Pairs for the noise-form identity");
  leaf_of(c_cl, [&] { run_cluster(ctx, cl); });

  HartreeOpts ha;
  auto* c_ha = app.add_subcommand("hartree", "Mean-field evolution");
  c_ha->require_subcommand(1);
  auto* c_hac = c_ha->add_subcommand("compare", "Mean field versus full evolution");
  reg.add(c_hac, "d1", ha.d1, "System dimension");
  reg.add(c_hac, "d2", ha.d2, "Environment dimension");
  reg.add(c_hac, "g-values", ha.g_values, "Couplings");
  reg.add(c_hac, "sigma", ha.sigma, "Noise strength");
  reg.add(c_hac, "horizon", ha.horizon, "Time horizon");
  reg.add(c_hac, "dt", ha.dt, "Step (0: default)");
  reg.add(c_hac, "ntraj", ha.ntraj, "Trajectories");
  reg.add(c_hac, "environment", ha.environment, "equilibrium | nonequilibrium");
  leaf_of(c_hac, [&] { run_hartree(ctx, ha); });

  auto* c_acc = app.add_subcommand("accretion", "Accretion model");
  c_acc->require_subcommand(1);
  OccupancyOpts oc;
  auto* c_occ = c_acc->add_subcommand("occupancy", "Incoherent occupancy chain");
  reg.add(c_occ, "sites", oc.sites, "Accretion sites N");
  reg.add(c_occ, "sticking", oc.sticking, "Fill rate per empty site");
  reg.add(c_occ, "evaporation", oc.evaporation, "Empty rate per occupied site");
  reg.add(c_occ, "mass", oc.mass, "Molecule mass (energy units)");
  reg.add(c_occ, "horizon", oc.horizon, "Simulated time");
  leaf_of(c_occ, [&] { run_occupancy(ctx, oc); });
  CoherentOpts co;
  auto* c_coh = c_acc->add_subcommand("coherent", "Displaced-oscillator occupation");
  reg.add(c_coh, "n", co.n, "Energy level");
  reg.add(c_coh, "z", co.z, "|z|");
  reg.add(c_coh, "nmax", co.n_max, "Truncation (0: automatic)");
  reg.add(c_coh, "kmin", co.k_min, "First k");
  reg.add(c_coh, "kmax", co.k_max, "Last k");
  leaf_of(c_coh, [&] { run_coherent(ctx, co); });

  PhenomOpts ph;
  auto* c_ph = app.add_subcommand("phenom", "Closed-form estimates");
  c_ph->require_subcommand(1);
  const std::vector<std::pair<std::string, std::string>> phenom_cmds{
      {"t-reduce", "Reduction time for an energy spread"},
      {"accretion", "Reduction time from accretion onto an area"},
      {"table", "Required areas for each environment"},
      {"thermal", "Thermal energy fluctuation"},
      {"shot-noise", "Detector shot-noise energy spread"},
      {"decoherence", "Decoherence against reduction rate"}};
  for (const auto& [name, about] : phenom_cmds) {
    auto* c = c_ph->add_subcommand(name, about);
    if (name == "t-reduce") reg.add(c, "delta-e", ph.delta_e, "Energy spread, e.g. 8.6e-6eV");
    if (name == "accretion" || name == "decoherence") {
      reg.add(c, "area", ph.area, "Apparatus area, e.g. 1cm2");
      reg.add(c, "preset", ph.preset, "air-stp | moon | interstellar | intergalactic");
    }
    if (name == "thermal") {
      reg.add(c, "temperature", ph.temperature, "e.g. 298K");
      reg.add(c, "heat-capacity", ph.heat_capacity, "e.g. 4.18J/K");
    }
    if (name == "shot-noise") {
      reg.add(c, "charges", ph.charges, "Charges N");
      reg.add(c, "gain", ph.gain, "Gain G");
      reg.add(c, "carrier-mass", ph.carrier_mass, "e.g. 0.511MeV");
    }
    if (name == "decoherence") {
      reg.add(c, "scattering-rate", ph.scattering_rate, "Per accreted molecule, e.g. 1e10/s");
    }
    leaf_of(c, [&, name] { run_phenom(ctx, name, ph); });
  }

  auto* c_rep = app.add_subcommand("reproduce-paper", "All closed-form scenario numbers");
  leaf_of(c_rep, [&] { run_reproduce(ctx); });

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    ctx.seed = seed_text.empty() ? default_seed() : std::stoull(seed_text);
  } catch (const std::exception& e) {
    err << "error: invalid seed: " << e.what() << '\n';
    return 2;
  }
  for (CLI::App* a = leaf; a != nullptr && a != &app; a = a->get_parent()) {
    ctx.command.insert(ctx.command.begin(), a->get_name());
  }
  if (!action) {
    err << "error: no command\n";
    return 2;
  }
  std::string joined;
  for (const auto& c : ctx.command) joined += (joined.empty() ? "" : "-") + c;
  ctx.out_dir = out_dir.empty() ? "out/" + joined + "-" + timestamp() : out_dir;
  std::error_code ec;
  std::filesystem::create_directories(ctx.out_dir, ec);
  if (ec) {
    err << "error: cannot create " << ctx.out_dir << ": " << ec.message() << '\n';
    return 2;
  }
  {
    json resolved;
    resolved["command"] = ctx.command;
    resolved["options"] = reg.resolved(leaf);
    resolved["options"]["seed"] = std::to_string(ctx.seed);
    resolved["options"]["workers"] = ctx.workers;
    std::ofstream f(ctx.path("config-resolved.json"), std::ios::binary);
    f << resolved.dump(2) << '\n';
  }

  try {
    action();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << joined << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << joined << ": " << e.what() << '\n';
    return 3;
  }

  bool all = true;
  {
    auto f = ctx.open("checks.csv");
    f << "check,pass,detail\n";
    for (const auto& c : ctx.checks) {
      f << c.name << ',' << (c.pass ? "PASS" : "FAIL") << ',' << c.detail << '\n';
    }
  }
  for (const auto& c : ctx.checks) {
    out << "CHECK " << c.name << ' ' << (c.pass ? "PASS" : "FAIL");
    if (!c.detail.empty()) out << "  " << c.detail;
    out << '\n';
    all = all && c.pass;
  }
  out << "output " << ctx.out_dir << '\n';
  return all ? 0 : 1;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

}  // namespace stochred::cli
