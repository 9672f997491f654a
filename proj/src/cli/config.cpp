#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mfa/cli.hpp"

namespace mfa::cli {

using nlohmann::json;

namespace {

std::string join(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

/// Reads typed fields out of one JSON object and remembers which keys were
/// consumed so the rest can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(path_, "expected an object");
    obj_ = &j;
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = obj_->find(key);
    return it == obj_->end() ? nullptr : &*it;
  }

  std::string at(const std::string& key) const { return join(path_, key); }

  void real(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(at(key), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw ConfigError(at(key), "must be finite");
    }
  }

  template <class Int>
  void integer(const std::string& key, Int& out) {
    if (const json* v = find(key)) {
      if (v->is_number_unsigned()) {
        const auto u = v->get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(std::numeric_limits<Int>::max())) {
          throw ConfigError(at(key), "out of range");
        }
        out = static_cast<Int>(u);
      } else if (v->is_number_integer()) {
        throw ConfigError(at(key), "must be nonnegative");
      } else {
        throw ConfigError(at(key), "expected an integer");
      }
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void text(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  void finish() const {
    for (const auto& [k, v] : obj_->items()) {
      if (!seen_.count(k)) throw ConfigError(at(k), "unknown key");
    }
  }

 private:
  const json* obj_ = nullptr;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& path, const std::string& msg) {
  if (!ok) throw ConfigError(path, msg);
}

DistSpec parse_dist(const json& j, const std::string& path) {
  Section s(j, path);
  std::string type;
  s.text("type", type);
  if (type == "uniform") {
    UniformSpec u;
    s.real("lo", u.lo);
    s.real("hi", u.hi);
    s.finish();
    require(u.lo >= 0.0, s.at("lo"), "must be >= 0");
    require(u.hi > u.lo, s.at("hi"), "must exceed lo");
    return u;
  }
  if (type == "point") {
    PointMassSpec p;
    s.real("at", p.at);
    s.finish();
    require(p.at >= 0.0, s.at("at"), "must be >= 0");
    return p;
  }
  if (type == "tabulated") {
    TabulatedSpec t;
    for (const char* key : {"points", "weights"}) {
      const json* v = s.find(key);
      if (!v || !v->is_array()) throw ConfigError(s.at(key), "expected an array of numbers");
      auto& dst = std::string(key) == "points" ? t.points : t.weights;
      for (const json& e : *v) {
        if (!e.is_number()) throw ConfigError(s.at(key), "expected an array of numbers");
        dst.push_back(e.get<double>());
        require(dst.back() >= 0.0, s.at(key), "entries must be >= 0");
      }
    }
    s.finish();
    require(!t.points.empty() && t.points.size() == t.weights.size(), path,
            "points and weights must be nonempty and of equal length");
    double total = 0.0;
    for (double w : t.weights) total += w;
    require(total > 0.0, s.at("weights"), "must not sum to zero");
    return t;
  }
  throw ConfigError(s.at("type"), "expected uniform, point or tabulated");
}

json dist_json(const DistSpec& spec) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, UniformSpec>) {
          return {{"type", "uniform"}, {"lo", s.lo}, {"hi", s.hi}};
        } else if constexpr (std::is_same_v<T, PointMassSpec>) {
          return {{"type", "point"}, {"at", s.at}};
        } else {
          return {{"type", "tabulated"}, {"points", s.points}, {"weights", s.weights}};
        }
      },
      spec);
}

template <class E>
void enum_field(Section& s, const std::string& key, E& out,
                std::initializer_list<std::pair<const char*, E>> names) {
  std::string v;
  s.text(key, v);
  if (v.empty()) return;
  for (const auto& [name, value] : names) {
    if (v == name) {
      out = value;
      return;
    }
  }
  std::string all;
  for (const auto& [name, value] : names) all += all.empty() ? name : std::string(", ") + name;
  throw ConfigError(s.at(key), "expected one of " + all);
}

const char* schedule_name(StationarySchedule s) {
  return s == StationarySchedule::kSingleStep ? "single_step" : "converge";
}
const char* riemann_name(RiemannRule r) {
  return r == RiemannRule::kStepWeighted ? "step_weighted" : "unweighted";
}
const char* residual_name(ResidualMode m) {
  return m == ResidualMode::kRelative ? "relative" : "absolute";
}

void parse_model(const json& j, ModelSection& m) {
  Section s(j, "model");
  s.real("beta", m.beta);
  if (const json* v = s.find("M")) {
    if (!v->is_number_integer()) throw ConfigError("model.M", "expected an integer");
    const auto M = v->get<std::int64_t>();
    require(M >= 1 && M <= 1000000, "model.M", "must be >= 1");
    m.M = static_cast<int>(M);
  }
  s.integer("N", m.N);
  s.real("service_amount", m.service_amount);
  s.real("cost_coefficient", m.cost_coefficient);
  s.real("cost_exponent", m.cost_exponent);
  s.real("state_step", m.state_step);
  s.integer("state_count", m.state_count);
  s.real("bid_step", m.bid_step);
  s.integer("bid_count", m.bid_count);
  if (const json* v = s.find("arrival")) m.arrival = parse_dist(*v, "model.arrival");
  if (const json* v = s.find("regen")) m.regen = parse_dist(*v, "model.regen");
  enum_field(s, "value_boundary", m.value_boundary,
             {{"extrapolate", ValueBoundary::kExtrapolate}, {"saturate", ValueBoundary::kSaturate}});
  s.finish();

  require(m.beta > 0.0 && m.beta < 1.0, "model.beta", "must lie in (0,1)");
  require(m.N >= 1, "model.N", "must be >= 1");
  require(m.service_amount > 0.0, "model.service_amount", "must be > 0");
  require(m.cost_coefficient > 0.0, "model.cost_coefficient", "must be > 0");
  require(m.cost_exponent > 1.0, "model.cost_exponent", "must be > 1 (strict convexity)");
  require(m.state_step > 0.0, "model.state_step", "must be > 0");
  require(m.state_count >= 2, "model.state_count", "must be >= 2");
  require(m.bid_step > 0.0, "model.bid_step", "must be > 0");
  require(m.bid_count >= 2, "model.bid_count", "must be >= 2");
}

void parse_solver(const json& j, SolverSection& o) {
  Section s(j, "solver");
  s.real("epsilon", o.epsilon);
  s.integer("max_outer", o.max_outer);
  s.real("damping", o.damping);
  enum_field(s, "schedule", o.schedule,
             {{"single_step", StationarySchedule::kSingleStep}, {"converge", StationarySchedule::kConverge}});
  enum_field(s, "riemann", o.riemann,
             {{"step_weighted", RiemannRule::kStepWeighted}, {"unweighted", RiemannRule::kUnweighted}});
  s.real("value_tol", o.value_tol);
  enum_field(s, "value_residual", o.value_residual,
             {{"relative", ResidualMode::kRelative}, {"absolute", ResidualMode::kAbsolute}});
  s.integer("value_max_iter", o.value_max_iter);
  s.real("stationary_tol", o.stationary_tol);
  s.integer("stationary_max_iter", o.stationary_max_iter);
  s.real("rho0_slope", o.rho0_slope);
  s.finish();

  require(o.epsilon > 0.0, "solver.epsilon", "must be > 0");
  require(o.max_outer >= 1, "solver.max_outer", "must be >= 1");
  require(o.damping >= 0.0 && o.damping < 1.0, "solver.damping", "must lie in [0,1)");
  require(o.value_tol > 0.0, "solver.value_tol", "must be > 0");
  require(o.value_max_iter >= 1, "solver.value_max_iter", "must be >= 1");
  require(o.stationary_tol > 0.0, "solver.stationary_tol", "must be > 0");
  require(o.stationary_max_iter >= 1, "solver.stationary_max_iter", "must be >= 1");
  require(o.rho0_slope > 0.0, "solver.rho0_slope", "must be > 0");
}

void check_challenger(const std::string& name, const std::string& path) {
  static const std::set<std::string> fixed = {"half", "double", "q25", "q50", "q75", "max", "mfe"};
  if (fixed.count(name)) return;
  if (name.rfind("const:", 0) == 0) {
    try {
      std::size_t used = 0;
      const double b = std::stod(name.substr(6), &used);
      if (used == name.size() - 6 && b >= 0.0 && std::isfinite(b)) return;
    } catch (const std::exception&) {
    }
  }
  throw ConfigError(path, "unknown challenger '" + name + "'");
}

void parse_simulation(const json& j, SimulationSection& o) {
  Section s(j, "simulation");
  s.integer("horizon", o.horizon);
  s.real("burn_in_fraction", o.burn_in_fraction);
  s.integer("replications", o.replications);
  s.integer("seed", o.seed);
  s.boolean("record_trace", o.record_trace);
  s.boolean("value_estimate", o.value_estimate);
  s.boolean("eps_nash", o.eps_nash);
  s.boolean("chaos", o.chaos);
  s.real("q0", o.q0);
  s.integer("chaos_pairs", o.chaos_pairs);
  s.integer("chaos_horizon", o.chaos_horizon);
  if (const json* v = s.find("challengers")) {
    if (!v->is_array()) throw ConfigError("simulation.challengers", "expected an array of strings");
    o.challengers.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      const std::string path = "simulation.challengers[" + std::to_string(i) + "]";
      if (!(*v)[i].is_string()) throw ConfigError(path, "expected a string");
      o.challengers.push_back((*v)[i].get<std::string>());
      check_challenger(o.challengers.back(), path);
    }
  }
  s.finish();

  require(o.horizon >= 1, "simulation.horizon", "must be >= 1");
  require(o.burn_in_fraction >= 0.0 && o.burn_in_fraction < 1.0, "simulation.burn_in_fraction",
          "must lie in [0,1)");
  require(o.replications >= 4, "simulation.replications", "must be >= 4");
  require(o.q0 >= 0.0, "simulation.q0", "must be >= 0");
  require(o.chaos_pairs >= 1, "simulation.chaos_pairs", "must be >= 1");
  require(o.chaos_horizon >= 1, "simulation.chaos_horizon", "must be >= 1");
}

void apply_override(json& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("", "override '" + spec + "' is not key=value");
  const std::string key = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "malformed override key");
    if (!node->is_object()) throw ConfigError(key, "override path crosses a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("", "top level must be an object");
  for (const auto& o : overrides) apply_override(root, o);

  RunConfig cfg;
  Section top(root, "");
  if (const json* v = top.find("model")) parse_model(*v, cfg.model);
  else parse_model(json::object(), cfg.model);
  if (const json* v = top.find("solver")) parse_solver(*v, cfg.solver);
  if (const json* v = top.find("simulation")) parse_simulation(*v, cfg.simulation);
  std::string out = cfg.output_dir.string();
  top.text("output_dir", out);
  require(!out.empty(), "output_dir", "must not be empty");
  cfg.output_dir = out;
  top.finish();

  try {
    model_params(cfg).validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("model", e.what());
  }
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_text(ss.str(), overrides);
  } catch (const ConfigError& e) {
    throw ConfigError(e.key_path(), std::string(e.what()).substr(e.key_path().empty() ? 0 : e.key_path().size() + 2) +
                                        " (in " + path.string() + ")");
  }
}

std::string echo_config(const RunConfig& c) {
  json j;
  const ModelSection& m = c.model;
  j["model"] = {{"beta", m.beta},
                {"M", m.M},
                {"N", m.N},
                {"service_amount", m.service_amount},
                {"cost_coefficient", m.cost_coefficient},
                {"cost_exponent", m.cost_exponent},
                {"state_step", m.state_step},
                {"state_count", m.state_count},
                {"bid_step", m.bid_step},
                {"bid_count", m.bid_count},
                {"arrival", dist_json(m.arrival)},
                {"regen", dist_json(m.regen)},
                {"value_boundary", m.value_boundary == ValueBoundary::kExtrapolate ? "extrapolate" : "saturate"}};
  const SolverSection& s = c.solver;
  j["solver"] = {{"epsilon", s.epsilon},
                 {"max_outer", s.max_outer},
                 {"damping", s.damping},
                 {"schedule", schedule_name(s.schedule)},
                 {"riemann", riemann_name(s.riemann)},
                 {"value_tol", s.value_tol},
                 {"value_residual", residual_name(s.value_residual)},
                 {"value_max_iter", s.value_max_iter},
                 {"stationary_tol", s.stationary_tol},
                 {"stationary_max_iter", s.stationary_max_iter},
                 {"rho0_slope", s.rho0_slope}};
  const SimulationSection& o = c.simulation;
  j["simulation"] = {{"horizon", o.horizon},
                     {"burn_in_fraction", o.burn_in_fraction},
                     {"replications", o.replications},
                     {"seed", o.seed},
                     {"record_trace", o.record_trace},
                     {"value_estimate", o.value_estimate},
                     {"eps_nash", o.eps_nash},
                     {"chaos", o.chaos},
                     {"q0", o.q0},
                     {"chaos_pairs", o.chaos_pairs},
                     {"chaos_horizon", o.chaos_horizon},
                     {"challengers", o.challengers}};
  j["output_dir"] = c.output_dir.string();
  return j.dump(2) + "\n";
}

ModelParams model_params(const RunConfig& c) {
  const ModelSection& m = c.model;
  const StateGrid sg(m.state_step, m.state_count);
  const BidGrid bg(m.bid_step, m.bid_count);
  try {
    return ModelParams{m.beta,
                       m.M,
                       m.service_amount,
                       sg,
                       bg,
                       discretize(m.arrival, sg),
                       discretize(m.regen, sg),
                       HoldingCost{m.cost_coefficient, m.cost_exponent},
                       m.value_boundary};
  } catch (const std::invalid_argument& e) {
    throw ConfigError("model", e.what());
  }
}

MfeOptions mfe_options(const RunConfig& c, unsigned workers) {
  const SolverSection& s = c.solver;
  MfeOptions o;
  o.epsilon = s.epsilon;
  o.max_outer = s.max_outer;
  o.damping = s.damping;
  o.schedule = s.schedule;
  o.value.tol = s.value_tol;
  o.value.mode = s.value_residual;
  o.value.max_iter = s.value_max_iter;
  o.value.rule = s.riemann;
  o.value.workers = workers;
  o.stationary_tol = s.stationary_tol;
  o.stationary_max_iter = s.stationary_max_iter;
  o.rho0_slope = s.rho0_slope;
  o.workers = workers;
  return o;
}

SimConfig sim_config(const RunConfig& c, unsigned workers) {
  const SimulationSection& s = c.simulation;
  SimConfig sc{.N = c.model.N, .params = model_params(c)};
  sc.arrival = c.model.arrival;
  sc.regen = c.model.regen;
  sc.horizon = s.horizon;
  sc.seed = s.seed;
  sc.burn_in_fraction = s.burn_in_fraction;
  sc.workers = workers;
  sc.record_trace = s.record_trace;
  return sc;
}

std::vector<BidPolicy> make_challengers(const RunConfig& c, const MfeSolution& mfe) {
  std::vector<BidPolicy> out;
  const Pmf<BidGrid> bids = pmf_of(mfe.rho);
  for (const std::string& name : c.simulation.challengers) {
    if (name == "half") out.push_back(mfe.policy.scaled(0.5));
    else if (name == "double") out.push_back(mfe.policy.scaled(2.0));
    else if (name == "q25") out.push_back(BidPolicy::constant(mfe.policy.grid, quantile_of(bids, 0.25)));
    else if (name == "q50") out.push_back(BidPolicy::constant(mfe.policy.grid, quantile_of(bids, 0.5)));
    else if (name == "q75") out.push_back(BidPolicy::constant(mfe.policy.grid, quantile_of(bids, 0.75)));
    else if (name == "max") out.push_back(BidPolicy::constant(mfe.policy.grid, mfe.rho.grid().max()));
    else if (name == "mfe") out.push_back(mfe.policy);
    else out.push_back(BidPolicy::constant(mfe.policy.grid, std::stod(name.substr(6))));
  }
  return out;
}

}  // namespace mfa::cli
