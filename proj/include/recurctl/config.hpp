#pragma once

// Schema checks for experiment configs. Every error names the offending
// value by its JSON pointer.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "recurctl/io.hpp"

namespace recurctl {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string pointer, const std::string& message)
      : std::runtime_error((pointer.empty() ? std::string("/") : pointer) + ": " + message),
        pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

/// A value inside a config document together with its JSON pointer.
class ConfigNode {
 public:
  ConfigNode(const Json& j, std::string pointer = {}) : json_(&j), pointer_(std::move(pointer)) {}

  const Json& json() const { return *json_; }
  const std::string& pointer() const { return pointer_; }

  [[noreturn]] void fail(const std::string& message) const { throw ConfigError(pointer_, message); }

  std::string child_pointer(std::string_view key) const {
    std::string out = pointer_ + "/";
    for (char c : key) {
      if (c == '~') out += "~0";
      else if (c == '/') out += "~1";
      else out += c;
    }
    return out;
  }

  const ConfigNode& object() const {
    if (!json_->is_object()) fail("expected an object");
    return *this;
  }

  /// Rejects keys outside `allowed`, which catches misspelt options.
  const ConfigNode& only(std::initializer_list<std::string_view> allowed) const {
    object();
    for (const auto& [k, v] : json_->items()) {
      bool ok = false;
      for (auto a : allowed) ok = ok || a == k;
      if (!ok) throw ConfigError(child_pointer(k), "unknown key");
    }
    return *this;
  }

  bool has(std::string_view key) const { return json_->is_object() && json_->contains(key); }

  ConfigNode operator[](std::string_view key) const {
    object();
    auto it = json_->find(key);
    if (it == json_->end()) throw ConfigError(child_pointer(key), "required key missing");
    return ConfigNode(*it, child_pointer(key));
  }

  std::optional<ConfigNode> find(std::string_view key) const {
    object();
    auto it = json_->find(key);
    if (it == json_->end()) return std::nullopt;
    return ConfigNode(*it, child_pointer(key));
  }

  std::size_t size() const {
    if (!json_->is_array()) fail("expected an array");
    return json_->size();
  }

  ConfigNode at(std::size_t i) const {
    if (!json_->is_array()) fail("expected an array");
    return ConfigNode((*json_)[i], pointer_ + "/" + std::to_string(i));
  }

  double number() const {
    if (!json_->is_number()) fail("expected a number");
    const double v = json_->get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }

  double positive() const {
    const double v = number();
    if (!(v > 0.0)) fail("expected a number > 0");
    return v;
  }

  double non_negative() const {
    const double v = number();
    if (!(v >= 0.0)) fail("expected a number >= 0");
    return v;
  }

  std::uint64_t unsigned_integer(std::uint64_t min = 0,
                                 std::uint64_t max = std::numeric_limits<std::uint64_t>::max()) const {
    if (!json_->is_number_integer() || (json_->is_number_integer() && !json_->is_number_unsigned() &&
                                        json_->get<long long>() < 0)) {
      fail("expected a non-negative integer");
    }
    const auto v = json_->get<std::uint64_t>();
    if (v < min || v > max) fail("expected an integer in [" + std::to_string(min) + ", " + std::to_string(max) + "]");
    return v;
  }

  std::string string() const {
    if (!json_->is_string()) fail("expected a string");
    return json_->get<std::string>();
  }

  bool boolean() const {
    if (!json_->is_boolean()) fail("expected true or false");
    return json_->get<bool>();
  }

  std::string choice(std::initializer_list<std::string_view> options) const {
    const std::string v = string();
    for (auto o : options) {
      if (o == v) return v;
    }
    std::string list;
    for (auto o : options) list += (list.empty() ? "" : ", ") + std::string(o);
    fail("expected one of {" + list + "}");
  }

 private:
  const Json* json_;
  std::string pointer_;
};

// --- shared pieces ---------------------------------------------------------------

inline std::size_t parse_modes(const ConfigNode& cfg, std::size_t fallback = 1) {
  if (auto m = cfg.find("modes")) return static_cast<std::size_t>(m->unsigned_integer(1, 16));
  return fallback;
}

inline TruncationSpec parse_truncation(const ConfigNode& node, std::size_t modes) {
  node.only({"dim", "dims", "buffer"});
  std::vector<std::size_t> dims;
  if (auto d = node.find("dims")) {
    if (d->size() != modes) d->fail("expected " + std::to_string(modes) + " entries");
    for (std::size_t i = 0; i < d->size(); ++i) dims.push_back(d->at(i).unsigned_integer(2, 4096));
  } else {
    dims.assign(modes, static_cast<std::size_t>(node["dim"].unsigned_integer(2, 4096)));
  }
  const std::size_t buffer = node.find("buffer") ? static_cast<std::size_t>(node["buffer"].unsigned_integer()) : 0;
  try {
    return TruncationSpec(dims, buffer);
  } catch (const std::exception& e) {
    node.fail(e.what());
  }
}

inline PolyOp parse_operator_node(const ConfigNode& node, std::size_t modes) {
  try {
    return parse_operator(node.string(), modes);
  } catch (const std::invalid_argument& e) {
    node.fail(e.what());
  }
}

/// Operators given as text. Hermitian entries are Hamiltonians H~ and
/// become -i H~; skew-hermitian entries are used as given.
inline std::vector<PolyOp> parse_generators(const ConfigNode& node, std::size_t modes) {
  std::vector<PolyOp> out;
  if (node.size() == 0) node.fail("expected at least one generator");
  for (std::size_t i = 0; i < node.size(); ++i) {
    const ConfigNode g = node.at(i);
    const PolyOp op = parse_operator_node(g, modes);
    if (op.role() == Role::hermitian) out.push_back(to_skew(op).with_role(Role::skew_hermitian));
    else if (op.role() == Role::skew_hermitian) out.push_back(op);
    else g.fail("operator is neither hermitian nor skew-hermitian");
  }
  return out;
}

inline std::vector<PolyOp> parse_hamiltonians(const ConfigNode& node, std::size_t modes) {
  std::vector<PolyOp> out;
  for (const auto& g : parse_generators(node, modes)) out.push_back(to_hermitian(g).with_role(Role::hermitian));
  return out;
}

inline ClosureCaps parse_caps(const ConfigNode& cfg, ClosureCaps caps = {}) {
  if (auto d = cfg.find("degree_cap")) caps.degree_cap = static_cast<unsigned>(d->unsigned_integer(1, 64));
  if (auto d = cfg.find("dim_cap")) caps.dim_cap = static_cast<std::size_t>(d->unsigned_integer(1, 1u << 20));
  if (auto d = cfg.find("rel_tol")) caps.rel_tol = d->positive();
  return caps;
}

/// Seeded generator shared by everything sampled in one run.
struct SeedSource {
  std::optional<std::uint64_t> seed;
  std::optional<std::mt19937_64> rng;

  std::mt19937_64& get(const ConfigNode& where) {
    if (!seed) where.fail("a seed is required for sampled states (config \"seed\" or --seed)");
    if (!rng) rng.emplace(*seed);
    return *rng;
  }
};

/// vacuum | fock{levels} | coherent{alpha} | random{max_level} | vector{re, im}.
/// `basis_dim` is used when there is no truncation (explicit spectra).
inline StateVector parse_state(const ConfigNode& node, const std::optional<TruncationSpec>& spec,
                               std::size_t basis_dim, SeedSource& seeds) {
  node.object();
  const std::string kind = node["kind"].choice({"vacuum", "fock", "coherent", "random", "vector"});
  const std::size_t dim = spec ? spec->total() : basis_dim;
  auto need_spec = [&] {
    if (!spec) node.fail("state kind '" + kind + "' needs a truncation");
  };
  if (kind == "vacuum") {
    node.only({"kind"});
    if (!spec) {
      StateVector v = StateVector::Zero(static_cast<Eigen::Index>(dim));
      v(0) = 1.0;
      return v;
    }
    return vacuum(*spec);
  }
  if (kind == "fock") {
    node.only({"kind", "levels"});
    const ConfigNode lv = node["levels"];
    std::vector<std::size_t> levels;
    for (std::size_t i = 0; i < lv.size(); ++i) levels.push_back(lv.at(i).unsigned_integer());
    if (!spec) {
      if (levels.size() != 1 || levels[0] >= dim) lv.fail("expected one level below " + std::to_string(dim));
      StateVector v = StateVector::Zero(static_cast<Eigen::Index>(dim));
      v(static_cast<Eigen::Index>(levels[0])) = 1.0;
      return v;
    }
    if (levels.size() != spec->mode_count()) lv.fail("expected one level per mode");
    for (std::size_t m = 0; m < levels.size(); ++m) {
      if (levels[m] >= spec->dims[m]) lv.at(m).fail("level outside the truncation");
    }
    return fock_state(*spec, levels);
  }
  if (kind == "coherent") {
    node.only({"kind", "alpha"});
    need_spec();
    const ConfigNode al = node["alpha"];
    if (al.size() != spec->mode_count()) al.fail("expected one amplitude per mode");
    std::vector<Complex> alphas;
    for (std::size_t m = 0; m < al.size(); ++m) {
      const ConfigNode a = al.at(m);
      if (a.json().is_number()) {
        alphas.emplace_back(a.number(), 0.0);
      } else {
        if (a.size() != 2) a.fail("expected a number or [re, im]");
        alphas.emplace_back(a.at(0).number(), a.at(1).number());
      }
    }
    return coherent_state(*spec, alphas);
  }
  if (kind == "random") {
    node.only({"kind", "max_level"});
    const std::size_t max_level = static_cast<std::size_t>(node["max_level"].unsigned_integer(1));
    auto& rng = seeds.get(node);
    if (!spec) {
      std::normal_distribution<double> g(0.0, 1.0);
      StateVector v = StateVector::Zero(static_cast<Eigen::Index>(dim));
      for (std::size_t i = 0; i < std::min(max_level, dim); ++i) {
        const double re = g(rng);
        const double im = g(rng);
        v(static_cast<Eigen::Index>(i)) = Complex{re, im};
      }
      return v / v.norm();
    }
    return random_state(*spec, rng, max_level);
  }
  node.only({"kind", "re", "im"});
  const ConfigNode re = node["re"];
  if (re.size() != dim) re.fail("expected " + std::to_string(dim) + " entries");
  StateVector v = StateVector::Zero(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) v(static_cast<Eigen::Index>(i)) = re.at(i).number();
  if (auto im = node.find("im")) {
    if (im->size() != dim) im->fail("expected " + std::to_string(dim) + " entries");
    for (std::size_t i = 0; i < dim; ++i) v(static_cast<Eigen::Index>(i)) += Complex{0.0, im->at(i).number()};
  }
  const double n = v.norm();
  if (!(n > 0.0)) node.fail("state vector is zero");
  return v / n;
}

inline RecurrenceSearch parse_search(const std::optional<ConfigNode>& node, RecurrenceSearch s = {}) {
  if (!node) return s;
  node->only({"tau_min", "horizon", "grid_step", "max_grid_points", "block_points", "trace_stride"});
  if (auto v = node->find("tau_min")) s.tau_min = v->non_negative();
  if (auto v = node->find("horizon")) s.horizon = v->positive();
  if (auto v = node->find("grid_step")) s.grid_step = v->positive();
  if (auto v = node->find("max_grid_points")) s.max_grid_points = static_cast<std::size_t>(v->unsigned_integer(1));
  if (auto v = node->find("block_points")) s.block_points = static_cast<std::size_t>(v->unsigned_integer(1));
  if (auto v = node->find("trace_stride")) s.trace_stride = static_cast<std::size_t>(v->unsigned_integer());
  return s;
}

inline PlanMode parse_plan_mode(const ConfigNode& node) {
  const std::string m = node.choice({"pointwise", "finite_net", "energy_bound"});
  if (m == "finite_net") return PlanMode::finite_net;
  if (m == "energy_bound") return PlanMode::energy_bound;
  return PlanMode::pointwise;
}

inline ExhaustionPolicy parse_exhaustion(const std::optional<ConfigNode>& node) {
  if (!node) return ExhaustionPolicy::fail;
  return node->choice({"fail", "finite_model"}) == "finite_model" ? ExhaustionPolicy::finite_model
                                                                  : ExhaustionPolicy::fail;
}

/// {"kind": "exact"} or {"kind": "recurrence", "mode", "delta", "search", "M", "net", "exhaustion"}.
inline InverterSpec parse_inverter(const std::optional<ConfigNode>& node, const std::optional<TruncationSpec>& spec,
                                   std::size_t basis_dim, SeedSource& seeds, double default_delta) {
  InverterSpec out;
  out.recurrence.delta = default_delta;
  if (!node) return out;
  node->only({"kind", "mode", "delta", "search", "M", "net", "exhaustion"});
  const std::string kind = node->find("kind") ? (*node)["kind"].choice({"exact", "recurrence"}) : "recurrence";
  out.exact = kind == "exact";
  if (out.exact) {
    node->only({"kind"});
    return out;
  }
  if (auto m = node->find("mode")) out.recurrence.mode = parse_plan_mode(*m);
  if (auto d = node->find("delta")) out.recurrence.delta = d->positive();
  out.recurrence.search = parse_search(node->find("search"));
  out.recurrence.exhaustion = parse_exhaustion(node->find("exhaustion"));
  if (out.recurrence.mode == PlanMode::energy_bound) out.recurrence.energy_bound = (*node)["M"].positive();
  if (out.recurrence.mode == PlanMode::finite_net) {
    const ConfigNode net = (*node)["net"];
    if (net.size() == 0) net.fail("expected at least one net state");
    for (std::size_t i = 0; i < net.size(); ++i) out.recurrence.net.push_back(parse_state(net.at(i), spec, basis_dim, seeds));
  }
  return out;
}

inline ChainSpec parse_chain(const ConfigNode& node) {
  node.only({"n_modes", "omega", "couplings", "control_sites", "control_degree_cap", "controls"});
  ChainSpec s;
  s.n_modes = static_cast<std::size_t>(node["n_modes"].unsigned_integer(1, 64));
  s.omega = node["omega"].non_negative();
  s.couplings.clear();
  if (auto cs = node.find("couplings")) {
    for (std::size_t i = 0; i < cs->size(); ++i) {
      const ConfigNode c = cs->at(i);
      if (c.size() != 3) c.fail("expected [i, j, a_ij]");
      const auto a = c.at(0).unsigned_integer(1, s.n_modes);
      const auto b = c.at(1).unsigned_integer(1, s.n_modes);
      if (a == b) c.fail("a_ii must be 0");
      s.couplings.push_back({static_cast<std::size_t>(a - 1), static_cast<std::size_t>(b - 1), c.at(2).non_negative()});
    }
  }
  s.control_sites.clear();
  if (auto cs = node.find("control_sites")) {
    for (std::size_t i = 0; i < cs->size(); ++i) {
      s.control_sites.push_back(static_cast<std::size_t>(cs->at(i).unsigned_integer(1, s.n_modes) - 1));
    }
  } else {
    s.control_sites.push_back(0);
  }
  if (auto c = node.find("control_degree_cap")) s.control_degree_cap = static_cast<unsigned>(c->unsigned_integer(1, 16));
  if (auto cs = node.find("controls")) {
    for (std::size_t i = 0; i < cs->size(); ++i) {
      const PolyOp op = parse_operator_node(cs->at(i), s.n_modes);
      if (op.role() != Role::hermitian) cs->at(i).fail("control must be hermitian");
      s.controls.push_back(op);
    }
  }
  try {
    s.validate();
  } catch (const std::exception& e) {
    node.fail(e.what());
  }
  return s;
}

inline std::vector<ReachTarget> parse_targets(const ConfigNode& node, std::size_t generator_count) {
  std::vector<ReachTarget> out;
  std::set<std::string> names;
  for (std::size_t i = 0; i < node.size(); ++i) {
    const ConfigNode t = node.at(i);
    t.only({"name", "expr", "t"});
    ReachTarget r{t.find("name") ? t["name"].string() : "target" + std::to_string(i + 1),
                  GeneratorExpr::leaf(0), t["t"].non_negative()};
    if (!names.insert(r.name).second) t["name"].fail("duplicate target name");
    for (char c : r.name) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) {
        t["name"].fail("names may only use letters, digits, '_', '-' and '.'");
      }
    }
    try {
      r.expr = parse_generator_expr(t["expr"].string());
    } catch (const std::invalid_argument& e) {
      t["expr"].fail(e.what());
    }
    if (r.expr.max_index() >= generator_count) {
      t["expr"].fail("references H" + std::to_string(r.expr.max_index() + 1) + " but only " +
                     std::to_string(generator_count) + " generators exist");
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace recurctl
