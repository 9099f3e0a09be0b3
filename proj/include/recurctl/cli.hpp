#pragma once

// Batch front-end: one subcommand per experiment, JSON config in, JSON/CSV
// artifacts out. Exit codes: 0 success, 1 a certificate or verification
// failed, 2 usage error, 3 config error.

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "recurctl/config.hpp"
#include "recurctl/io.hpp"
#include "recurctl/lie.hpp"
#include "recurctl/oscillators.hpp"
#include "recurctl/propagator.hpp"
#include "recurctl/recurrence.hpp"
#include "recurctl/synthesizer.hpp"

namespace recurctl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;

struct Options {
  std::string subcommand;
  std::filesystem::path config;
  std::filesystem::path out = ".";
  unsigned jobs = 1;
  std::optional<std::uint64_t> seed;
  std::optional<double> delta;
  std::optional<double> epsilon;
  std::optional<unsigned> degree_cap;
  std::optional<std::size_t> dim_cap;
  std::optional<std::size_t> n_budget;
  bool wall_clock = false;
};

inline const char* usage_text() {
  return "usage: recurctl <subcommand> --config <path> [--out <dir>] [--jobs <n>] [--seed <u64>]\n"
         "                [--delta <x>] [--epsilon <x>] [--degree-cap <n>] [--dim-cap <n>]\n"
         "                [--n-budget <n>] [--wall-clock]\n"
         "subcommands: closure | propagation | recur | invert | trotter | commutator | compile | chain-demo\n";
}

struct Context {
  const Options& opt;
  SeedSource seeds;
  std::ostream& log;

  std::filesystem::path out(const std::string& name) const { return opt.out / name; }
};

namespace detail {

inline SeedSource make_seeds(const ConfigNode& cfg, const Options& opt) {
  SeedSource s;
  if (opt.seed) s.seed = opt.seed;
  else if (auto v = cfg.find("seed")) s.seed = v->unsigned_integer();
  return s;
}

inline double config_delta(const ConfigNode& cfg, const Options& opt, double fallback) {
  if (opt.delta) return *opt.delta;
  if (auto d = cfg.find("delta")) return d->positive();
  return fallback;
}

inline double config_epsilon(const ConfigNode& cfg, const Options& opt, double fallback) {
  if (opt.epsilon) return *opt.epsilon;
  if (auto e = cfg.find("epsilon")) return e->positive();
  return fallback;
}

inline ClosureCaps config_caps(const ConfigNode& cfg, const Options& opt) {
  ClosureCaps caps = parse_caps(cfg);
  if (opt.degree_cap) caps.degree_cap = *opt.degree_cap;
  if (opt.dim_cap) caps.dim_cap = *opt.dim_cap;
  return caps;
}

struct SpectrumSource {
  SpectralData spectrum;
  std::optional<TruncationSpec> truncation;
  std::size_t dimension = 0;
  std::string description;
};

/// "energies": [...], "energy_formula": {count, c0, c1, c2} or
/// "hamiltonian" with "modes" and "truncation".
inline SpectrumSource parse_spectrum(const ConfigNode& cfg) {
  const int given = int(cfg.has("energies")) + int(cfg.has("energy_formula")) + int(cfg.has("hamiltonian"));
  if (given != 1) cfg.fail("exactly one of \"energies\", \"energy_formula\", \"hamiltonian\" is required");
  SpectrumSource out;
  if (auto e = cfg.find("energies")) {
    RealVector v(static_cast<Eigen::Index>(e->size()));
    if (v.size() < 2) e->fail("expected at least two energies");
    for (std::size_t i = 0; i < e->size(); ++i) v(static_cast<Eigen::Index>(i)) = e->at(i).number();
    out.spectrum = diagonal_spectral(v);
    out.description = "explicit spectrum";
  } else if (auto f = cfg.find("energy_formula")) {
    f->only({"count", "c0", "c1", "c2"});
    const auto count = (*f)["count"].unsigned_integer(2, 4096);
    const double c0 = f->find("c0") ? (*f)["c0"].number() : 0.0;
    const double c1 = f->find("c1") ? (*f)["c1"].number() : 0.0;
    const double c2 = f->find("c2") ? (*f)["c2"].number() : 0.0;
    RealVector v(static_cast<Eigen::Index>(count));
    for (Eigen::Index n = 0; n < v.size(); ++n) {
      const double nd = static_cast<double>(n);
      v(n) = c0 + c1 * nd + c2 * nd * nd;
    }
    out.spectrum = diagonal_spectral(v);
    out.description = "E_n = c0 + c1 n + c2 n^2";
  } else {
    const std::size_t modes = parse_modes(cfg);
    out.truncation = parse_truncation(cfg["truncation"], modes);
    const ConfigNode h = cfg["hamiltonian"];
    const PolyOp op = parse_operator_node(h, modes);
    if (op.role() != Role::hermitian) h.fail("hamiltonian must be hermitian");
    try {
      out.spectrum = spectral(represent(op, *out.truncation));
    } catch (const std::exception& e) {
      h.fail(e.what());
    }
    out.description = to_string(op);
  }
  out.dimension = static_cast<std::size_t>(out.spectrum.size());
  return out;
}

struct TailConfig {
  TailSource source;
  std::vector<StateVector> check_states;
  std::vector<double> check_limits;  // in units of delta
};

inline TailConfig parse_tail(const ConfigNode& node, const SpectrumSource& src, double delta, Context& ctx) {
  node.object();
  const PlanMode mode = parse_plan_mode(node["mode"]);
  TailConfig out;
  if (mode == PlanMode::pointwise) {
    node.only({"mode", "state"});
    StateVector psi = parse_state(node["state"], src.truncation, src.dimension, ctx.seeds);
    out.check_states.push_back(psi);
    out.check_limits.push_back(1.0);
    out.source = PointwiseTail{std::move(psi)};
  } else if (mode == PlanMode::finite_net) {
    node.only({"mode", "net", "samples", "radius"});
    const ConfigNode net = node["net"];
    if (net.size() == 0) net.fail("expected at least one net state");
    FiniteNetTail t;
    for (std::size_t i = 0; i < net.size(); ++i) t.net.push_back(parse_state(net.at(i), src.truncation, src.dimension, ctx.seeds));
    out.check_states = t.net;
    out.check_limits.assign(t.net.size(), 1.0);
    if (auto s = node.find("samples")) {
      // Perturbed copies of net points within `radius` (at most delta), held to 3 delta.
      const auto count = s->unsigned_integer();
      const ConfigNode rn = node["radius"];
      const double radius = rn.positive();
      if (radius > delta) rn.fail("radius must not exceed delta");
      auto& rng = ctx.seeds.get(*s);
      std::normal_distribution<double> g(0.0, 1.0);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (std::uint64_t i = 0; i < count; ++i) {
        const StateVector& base = t.net[i % t.net.size()];
        StateVector dir(base.size());
        for (Eigen::Index k = 0; k < dir.size(); ++k) {
          const double re = g(rng);
          const double im = g(rng);
          dir(k) = Complex{re, im};
        }
        dir /= dir.norm();
        double step = radius * u(rng);
        StateVector v = base + step * dir;
        v /= v.norm();
        while ((v - base).norm() >= radius) {
          step *= 0.5;
          v = (base + step * dir).normalized();
        }
        out.check_states.push_back(v);
        out.check_limits.push_back(3.0);
      }
    }
    out.source = std::move(t);
  } else {
    node.only({"mode", "M", "exhaustion", "samples"});
    EnergyTail t{node["M"].positive(), parse_exhaustion(node.find("exhaustion"))};
    if (auto s = node.find("samples")) {
      const auto count = s->unsigned_integer();
      auto& rng = ctx.seeds.get(*s);
      for (std::uint64_t i = 0; i < count; ++i) {
        out.check_states.push_back(sample_energy_bounded_state(src.spectrum, t.bound, rng));
        out.check_limits.push_back(1.0);
      }
    }
    out.source = t;
  }
  return out;
}

inline Json state_checks(const SpectralData& sd, double s, double forward, const TailConfig& tail, double delta,
                         bool& all_ok) {
  Json arr = Json::array();
  all_ok = true;
  for (std::size_t i = 0; i < tail.check_states.size(); ++i) {
    const StateVector& psi = tail.check_states[i];
    const double err = inversion_error(sd, s, forward, psi);
    const bool ok = err < tail.check_limits[i] * delta;
    all_ok = all_ok && ok;
    arr.push_back(Json{{"distance", err}, {"energy", shifted_energy(sd, psi)}, {"ok", ok}});
  }
  return arr;
}

struct GeneratorSystem {
  std::size_t modes = 1;
  TruncationSpec truncation;
  GeneratorSet generators;
  StateVector psi0;
};

inline GeneratorSystem parse_system(const ConfigNode& cfg, Context& ctx) {
  GeneratorSystem sys;
  sys.modes = parse_modes(cfg);
  sys.truncation = parse_truncation(cfg["truncation"], sys.modes);
  const auto gens = parse_generators(cfg["generators"], sys.modes);
  try {
    sys.generators = GeneratorSet(gens, sys.truncation);
  } catch (const std::length_error& e) {
    cfg["truncation"].fail(e.what());
  }
  if (auto s = cfg.find("state")) sys.psi0 = parse_state(*s, sys.truncation, sys.truncation.total(), ctx.seeds);
  else sys.psi0 = vacuum(sys.truncation);
  return sys;
}

inline std::size_t parse_index(const ConfigNode& node, std::size_t count) {
  return static_cast<std::size_t>(node.unsigned_integer(1, count) - 1);
}

inline OracleKind parse_oracle(const std::optional<ConfigNode>& node) {
  if (!node) return OracleKind::automatic;
  const std::string v = node->choice({"automatic", "symbolic", "matrix"});
  return v == "symbolic" ? OracleKind::symbolic : v == "matrix" ? OracleKind::matrix : OracleKind::automatic;
}

inline CompileConfig parse_compile_config(const ConfigNode& cfg, const Context& ctx,
                                          const std::optional<TruncationSpec>& spec, std::size_t dim, SeedSource& seeds) {
  CompileConfig cc;
  cc.epsilon = config_epsilon(cfg, ctx.opt, cc.epsilon);
  if (auto v = cfg.find("n_start")) cc.n_start = static_cast<std::size_t>(v->unsigned_integer(1));
  if (auto v = cfg.find("n_budget")) cc.n_budget = static_cast<std::size_t>(v->unsigned_integer(1));
  if (ctx.opt.n_budget) cc.n_budget = *ctx.opt.n_budget;
  if (cc.n_budget < cc.n_start) cfg.fail("n_budget must be >= n_start");
  if (auto v = cfg.find("max_segments")) cc.max_segments = v->positive();
  cc.oracle = parse_oracle(cfg.find("oracle"));
  if (auto vs = cfg.find("verification_states")) {
    for (std::size_t i = 0; i < vs->size(); ++i) cc.verification_states.push_back(parse_state(vs->at(i), spec, dim, seeds));
  }
  return cc;
}

inline void write_report(const ReachabilityReport& rep, const Context& ctx, Json extra = Json::object()) {
  ReportOptions ro;
  ro.include_wall_clock = ctx.opt.wall_clock;
  Json j = to_json(rep, ro);
  for (auto& [k, v] : extra.items()) j[k] = v;
  write_json(ctx.out("report.json"), j);
  atomic_write(ctx.out("summary.csv"), summary_csv(rep));
  for (const auto& e : rep.entries) {
    if (e.result.n > 0) write_json(ctx.out("sequences/" + e.name + ".json"), to_json(e.result.sequence));
  }
  for (const auto& e : rep.entries) {
    ctx.log << e.name << ' ' << (e.success ? "ok" : "FAILED") << " distance=" << format_double(e.result.distance)
            << " n=" << e.result.n << " segments=" << e.result.sequence.size();
    if (!e.error.empty()) ctx.log << " (" << e.error << ")";
    ctx.log << '\n';
  }
}

}  // namespace detail

// --- subcommands -------------------------------------------------------------

inline int run_closure(const ConfigNode& cfg, Context& ctx) {
  cfg.only({"modes", "generators", "degree_cap", "dim_cap", "rel_tol", "seed"});
  const std::size_t modes = parse_modes(cfg);
  const auto gens = parse_generators(cfg["generators"], modes);
  const LieBasis b = lie_closure(std::span<const PolyOp>(gens), detail::config_caps(cfg, ctx.opt));
  write_json(ctx.out("closure.json"), to_json(b));
  ctx.log << "dimension " << b.dimension() << (b.saturated ? " saturated" : " unsaturated")
          << (b.degree_cap_hit ? " degree_cap_hit" : "") << (b.dim_cap_hit ? " dim_cap_hit" : "") << '\n';
  return kExitOk;
}

inline int run_propagation(const ConfigNode& cfg, Context& ctx) {
  cfg.only({"chain", "modes", "local", "coupling", "degree_cap", "dim_cap", "rel_tol", "expect", "seed"});
  const ClosureCaps caps = detail::config_caps(cfg, ctx.opt);
  std::optional<std::string> expect;
  if (auto e = cfg.find("expect")) expect = e->choice({"propagates", "fails", "unknown"});
  std::string verdict;
  if (auto c = cfg.find("chain")) {
    const ChainSpec spec = parse_chain(*c);
    const ChainVerdict v = chain_controllability(spec, caps);
    Json j = to_json(v);
    j["chain"] = to_json(spec);
    write_json(ctx.out("propagation.json"), j);
    for (const auto& e : v.edges) ctx.log << "edge " << e.from + 1 << "->" << e.to + 1 << ' ' << to_string(e.verdict) << '\n';
    ctx.log << to_string(v.overall) << ": " << v.message << '\n';
    verdict = to_string(v.overall);
  } else {
    const std::size_t modes = parse_modes(cfg, 2);
    const auto local = parse_generators(cfg["local"], modes);
    const ConfigNode cn = cfg["coupling"];
    const PolyOp coupling = parse_operator_node(cn, modes);
    if (coupling.role() != Role::hermitian) cn.fail("coupling must be hermitian");
    const LieBasis lb = lie_closure(std::span<const PolyOp>(local), caps);
    const PropagationResult r = algebraic_propagation_check(lb, coupling, caps);
    write_json(ctx.out("propagation.json"), to_json(r));
    ctx.log << to_string(r.verdict) << ": " << r.reason << '\n';
    verdict = to_string(r.verdict);
  }
  if (expect && *expect != verdict) {
    ctx.log << "expected " << *expect << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

inline int run_recur_or_invert(const ConfigNode& cfg, Context& ctx, bool inverting) {
  if (inverting) {
    cfg.only({"modes", "truncation", "hamiltonian", "energies", "energy_formula", "delta", "tail", "search", "trace",
              "seed", "s"});
  } else {
    cfg.only({"modes", "truncation", "hamiltonian", "energies", "energy_formula", "delta", "tail", "search", "trace",
              "seed"});
  }
  const auto src = detail::parse_spectrum(cfg);
  const double delta = detail::config_delta(cfg, ctx.opt, 1e-3);
  auto tail = detail::parse_tail(cfg["tail"], src, delta, ctx);
  RecurrenceSearch search = parse_search(cfg.find("search"));
  search.jobs = ctx.opt.jobs;
  const bool want_trace = cfg.find("trace") ? cfg["trace"].boolean() : false;
  if (want_trace && search.trace_stride == 0) search.trace_stride = 1;
  const double s = inverting ? cfg["s"].non_negative() : 0.0;
  if (inverting) search.tau_min = std::max(search.tau_min, s);

  std::vector<ScanSample> trace;
  RecurrencePlan plan;
  try {
    plan = plan_recurrence(src.spectrum, tail.source, delta, search, want_trace ? &trace : nullptr);
  } catch (const RecurrenceNotFound& e) {
    write_json(ctx.out(inverting ? "invert.json" : "plan.json"),
               Json{{"error", e.what()}, {"best_time", e.best_time()}, {"best_objective", e.best_objective()},
                    {"horizon", e.horizon()}});
    if (want_trace) atomic_write(ctx.out("trace.csv"), trace_csv(trace));
    ctx.log << e.what() << '\n';
    return kExitFailure;
  }
  const double forward = std::max(0.0, plan.recurrence_time - s);
  bool ok = true;
  Json checks = detail::state_checks(src.spectrum, s, forward, tail, delta, ok);
  const bool decomposition_ok = plan.decomposition() < delta * delta;

  Json j{{"plan", to_json(plan)}, {"checks", checks}, {"spectrum", src.description}};
  if (inverting) {
    j["s"] = s;
    j["t_star"] = forward;
  }
  write_json(ctx.out(inverting ? "invert.json" : "plan.json"), j);
  if (want_trace) atomic_write(ctx.out("trace.csv"), trace_csv(trace));

  ctx.log << "N=" << plan.cut << " T=" << format_double(plan.recurrence_time);
  if (inverting) ctx.log << " t*=" << format_double(forward);
  ctx.log << " achieved_sum=" << format_double(plan.achieved_sum) << " tail_mass=" << format_double(plan.tail_mass)
          << " checks=" << tail.check_states.size() << (ok && decomposition_ok ? " ok" : " FAILED") << '\n';
  if (plan.recurrence_time == 0.0) ctx.log << "note: T=0 is admissible because search.tau_min is 0\n";
  return ok && decomposition_ok ? kExitOk : kExitFailure;
}

inline int run_trotter(const ConfigNode& cfg, Context& ctx) {
  cfg.only({"modes", "truncation", "generators", "state", "k", "l", "t", "n", "epsilon", "seed"});
  auto sys = detail::parse_system(cfg, ctx);
  const std::size_t k = detail::parse_index(cfg["k"], sys.generators.size());
  const std::size_t l = detail::parse_index(cfg["l"], sys.generators.size());
  const double t = cfg["t"].non_negative();
  const auto n = static_cast<std::size_t>(cfg["n"].unsigned_integer(1));
  const ControlSequence seq = trotter_sequence(k, l, t, n);
  const GeneratorExpr target = GeneratorExpr::sum(GeneratorExpr::leaf(k), GeneratorExpr::leaf(l));
  const StateVector goal = target_unitary(target, t, sys.generators, OracleKind::matrix) * sys.psi0;
  const Verification v = verify(seq, sys.psi0, goal, sys.generators);
  write_json(ctx.out("sequence.json"), to_json(seq));
  write_json(ctx.out("trotter.json"), Json{{"n", n}, {"t", t}, {"error", v.distance}, {"fidelity", v.fidelity},
                                           {"segments", seq.size()}});
  ctx.log << "error=" << format_double(v.distance) << " fidelity=" << format_double(v.fidelity) << '\n';
  if (cfg.has("epsilon") || ctx.opt.epsilon) {
    const double eps = detail::config_epsilon(cfg, ctx.opt, 0.0);
    return v.distance < eps ? kExitOk : kExitFailure;
  }
  return kExitOk;
}

inline int run_commutator(const ConfigNode& cfg, Context& ctx) {
  cfg.only({"modes", "truncation", "generators", "state", "k", "l", "t", "n", "epsilon", "inverter", "delta", "oracle",
            "seed"});
  auto sys = detail::parse_system(cfg, ctx);
  const std::size_t k = detail::parse_index(cfg["k"], sys.generators.size());
  const std::size_t l = detail::parse_index(cfg["l"], sys.generators.size());
  const double t = cfg["t"].non_negative();
  const auto n = static_cast<std::size_t>(cfg["n"].unsigned_integer(1));
  const InverterSpec ispec = parse_inverter(cfg.find("inverter"), sys.truncation, sys.truncation.total(), ctx.seeds,
                                            detail::config_delta(cfg, ctx.opt, 1e-5));
  auto inverter = make_inverter(ispec, sys.generators);
  Cursor cursor{&sys.generators, sys.psi0};
  const ControlSequence seq =
      commutator_sequence(k, l, t, n, *inverter, inverter->needs_state() ? &cursor : nullptr);
  const GeneratorExpr target = GeneratorExpr::bracket(GeneratorExpr::leaf(k), GeneratorExpr::leaf(l));
  const StateVector goal = target_unitary(target, t, sys.generators, detail::parse_oracle(cfg.find("oracle"))) * sys.psi0;
  const Verification v = verify(seq, sys.psi0, goal, sys.generators);

  Json certs = Json::array();
  if (const auto* rec = dynamic_cast<const RecurrenceInverter*>(inverter.get())) {
    for (const auto& [g, p] : rec->certificates()) {
      Json c = to_json(p);
      c["k"] = g + 1;
      certs.push_back(std::move(c));
    }
  }
  write_json(ctx.out("sequence.json"), to_json(seq));
  write_json(ctx.out("commutator.json"), Json{{"n", n},
                                              {"t", t},
                                              {"distance", v.distance},
                                              {"fidelity", v.fidelity},
                                              {"segments", seq.size()},
                                              {"physical", seq.physical()},
                                              {"certificates", std::move(certs)}});
  ctx.log << "distance=" << format_double(v.distance) << " fidelity=" << format_double(v.fidelity)
          << (seq.physical() ? "" : " (exact inverse, unphysical)") << '\n';
  if (cfg.has("epsilon") || ctx.opt.epsilon) {
    const double eps = detail::config_epsilon(cfg, ctx.opt, 0.0);
    return v.distance < eps ? kExitOk : kExitFailure;
  }
  return kExitOk;
}

inline int run_compile(const ConfigNode& cfg, Context& ctx) {
  cfg.only({"modes", "truncation", "generators", "state", "targets", "epsilon", "n_start", "n_budget", "max_segments",
            "inverter", "delta", "oracle", "verification_states", "seed"});
  auto sys = detail::parse_system(cfg, ctx);
  const auto targets = parse_targets(cfg["targets"], sys.generators.size());
  ReachabilityConfig rc;
  rc.compile = detail::parse_compile_config(cfg, ctx, sys.truncation, sys.truncation.total(), ctx.seeds);
  rc.inverter = parse_inverter(cfg.find("inverter"), sys.truncation, sys.truncation.total(), ctx.seeds,
                               detail::config_delta(cfg, ctx.opt, 1e-5));
  rc.jobs = ctx.opt.jobs;
  const ReachabilityReport rep = reachability_report(sys.generators, sys.psi0, targets, rc);
  detail::write_report(rep, ctx);
  return rep.all_passed() ? kExitOk : kExitFailure;
}

inline int run_chain_demo(const ConfigNode& cfg, Context& ctx) {
  cfg.only({"chain", "dim_per_mode", "buffer", "targets", "t", "epsilon", "n_start", "n_budget", "max_segments",
            "inverter", "delta", "oracle", "check_controllability", "degree_cap", "dim_cap", "rel_tol", "seed",
            "state"});
  const ChainSpec spec = parse_chain(cfg["chain"]);
  ChainDemoConfig dc;
  if (auto d = cfg.find("dim_per_mode")) dc.dim_per_mode = static_cast<std::size_t>(d->unsigned_integer(2, 64));
  if (auto b = cfg.find("buffer")) dc.buffer = static_cast<std::size_t>(b->unsigned_integer());
  GeneratorSet gens;
  try {
    gens = chain_generators(spec, dc);
  } catch (const std::exception& e) {
    cfg["dim_per_mode"].fail(e.what());
  }
  const auto& trunc = *gens.truncation();
  const auto targets = cfg.has("targets")
                           ? parse_targets(cfg["targets"], gens.size())
                           : default_chain_targets(spec, cfg.has("t") ? cfg["t"].non_negative() : 0.5);
  dc.reach.compile = detail::parse_compile_config(cfg, ctx, trunc, trunc.total(), ctx.seeds);
  dc.reach.inverter = parse_inverter(cfg.find("inverter"), trunc, trunc.total(), ctx.seeds,
                                     detail::config_delta(cfg, ctx.opt, 1e-5));
  dc.reach.jobs = ctx.opt.jobs;

  Json extra{{"chain", to_json(spec)}};
  if (!cfg.has("check_controllability") || cfg["check_controllability"].boolean()) {
    ClosureCaps caps = detail::config_caps(cfg, ctx.opt);
    if (!cfg.has("degree_cap") && !ctx.opt.degree_cap) caps.degree_cap = 4;
    const ChainVerdict v = chain_controllability(spec, caps);
    extra["controllability"] = to_json(v);
    ctx.log << "controllability " << to_string(v.overall) << ": " << v.message << '\n';
  }
  const StateVector psi0 =
      cfg.has("state") ? parse_state(cfg["state"], trunc, trunc.total(), ctx.seeds) : vacuum(trunc);
  const ReachabilityReport rep = reachability_report(gens, psi0, targets, dc.reach);
  detail::write_report(rep, ctx, extra);
  return rep.all_passed() ? kExitOk : kExitFailure;
}

inline int dispatch(const Options& opt, std::ostream& log, std::ostream& err) {
  Json doc;
  try {
    doc = read_json(opt.config);
  } catch (const std::exception& e) {
    err << "config: " << e.what() << '\n';
    return kExitConfig;
  }
  const ConfigNode cfg(doc);
  try {
    cfg.object();
    Context ctx{opt, detail::make_seeds(cfg, opt), log};
    std::filesystem::create_directories(opt.out);
    if (opt.subcommand == "closure") return run_closure(cfg, ctx);
    if (opt.subcommand == "propagation") return run_propagation(cfg, ctx);
    if (opt.subcommand == "recur") return run_recur_or_invert(cfg, ctx, false);
    if (opt.subcommand == "invert") return run_recur_or_invert(cfg, ctx, true);
    if (opt.subcommand == "trotter") return run_trotter(cfg, ctx);
    if (opt.subcommand == "commutator") return run_commutator(cfg, ctx);
    if (opt.subcommand == "compile") return run_compile(cfg, ctx);
    if (opt.subcommand == "chain-demo") return run_chain_demo(cfg, ctx);
  } catch (const ConfigError& e) {
    err << "config error at " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << opt.subcommand << ": " << e.what() << '\n';
    return kExitFailure;
  }
  err << usage_text();
  return kExitUsage;
}

inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Forward-time control synthesis with recurrence certificates", "recurctl"};
  Options opt;
  std::optional<double> delta, epsilon;
  app.require_subcommand(1);
  const char* names[] = {"closure", "propagation", "recur", "invert", "trotter", "commutator", "compile", "chain-demo"};
  for (const char* name : names) {
    auto* sub = app.add_subcommand(name);
    sub->fallthrough();
    sub->callback([&opt, name] { opt.subcommand = name; });
  }
  app.add_option("--config", opt.config, "experiment config (JSON)")->required();
  app.add_option("--out", opt.out, "output directory");
  app.add_option("--jobs", opt.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", opt.seed, "seed for sampled states");
  app.add_option("--delta", opt.delta, "recurrence accuracy")->check(CLI::PositiveNumber);
  app.add_option("--epsilon", opt.epsilon, "compile accuracy")->check(CLI::PositiveNumber);
  app.add_option("--degree-cap", opt.degree_cap, "closure degree cap")->check(CLI::PositiveNumber);
  app.add_option("--dim-cap", opt.dim_cap, "closure dimension cap")->check(CLI::PositiveNumber);
  app.add_option("--n-budget", opt.n_budget, "largest product-formula order")->check(CLI::PositiveNumber);
  app.add_flag("--wall-clock", opt.wall_clock, "record wall-clock times in reports");

  if (argc > 1 && argv[1][0] != '-' &&
      std::find_if(std::begin(names), std::end(names), [&](const char* n) { return std::string(n) == argv[1]; }) ==
          std::end(names)) {
    err << "unknown subcommand '" << argv[1] << "'\n" << usage_text();
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    log << usage_text();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n' << usage_text();
    return kExitUsage;
  }
  return dispatch(opt, log, err);
}

}  // namespace recurctl::cli
