#include "benn/experiments.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "benn/generative.hpp"
#include "benn/random.hpp"

namespace benn {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Independent random streams derived from the run seed.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kTrainStream = 3;
constexpr std::uint64_t kEvalStream = 4;

constexpr ExperimentKind kAllExperiments[] = {
    ExperimentKind::RegressionValue,      ExperimentKind::RegressionConflict, ExperimentKind::RegressionBound,
    ExperimentKind::RegressionDerivative, ExperimentKind::RegressionVariance, ExperimentKind::Beam,
    ExperimentKind::Microstructure,
};

}  // namespace

std::string_view experiment_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::RegressionValue: return "regression-value";
    case ExperimentKind::RegressionConflict: return "regression-conflict";
    case ExperimentKind::RegressionBound: return "regression-bound";
    case ExperimentKind::RegressionDerivative: return "regression-derivative";
    case ExperimentKind::RegressionVariance: return "regression-variance";
    case ExperimentKind::Beam: return "beam";
    case ExperimentKind::Microstructure: return "microstructure";
  }
  return "?";
}

ExperimentKind parse_experiment(std::string_view name) {
  for (auto k : kAllExperiments)
    if (experiment_name(k) == name) return k;
  throw Error("unknown experiment '" + std::string(name) + "'");
}

bool is_regression(ExperimentKind k) { return k != ExperimentKind::Beam && k != ExperimentKind::Microstructure; }

std::vector<double> EvalGrid::values() const {
  std::vector<double> v(points);
  for (std::size_t i = 0; i < points; ++i)
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  return v;
}

// --- configuration ------------------------------------------------------------------

namespace {

// Reads typed fields and records every violation instead of stopping at the first.
class Reader {
 public:
  explicit Reader(std::vector<ConfigIssue>& issues) : issues_(issues) {}

  void fail(std::string pointer, std::string message) { issues_.push_back({std::move(pointer), std::move(message)}); }

  bool require_object(const json& j, const std::string& ptr) {
    if (j.is_object()) return true;
    fail(ptr.empty() ? "/" : ptr, "expected an object");
    return false;
  }

  void allowed(const json& obj, const std::string& ptr, std::initializer_list<std::string_view> keys) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool ok = false;
      for (auto k : keys) ok = ok || it.key() == k;
      if (!ok) fail(ptr + "/" + it.key(), "unknown field");
    }
  }

  const json* find(const json& obj, const std::string& ptr, const char* key, bool required) {
    auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) fail(ptr + "/" + key, "required field is missing");
      return nullptr;
    }
    return &*it;
  }

  std::optional<double> number(const json& obj, const std::string& ptr, const char* key, bool required = false) {
    const json* v = find(obj, ptr, key, required);
    if (!v) return std::nullopt;
    if (!v->is_number()) {
      fail(ptr + "/" + key, "expected a number");
      return std::nullopt;
    }
    return v->get<double>();
  }

  std::optional<std::size_t> count(const json& obj, const std::string& ptr, const char* key, bool required = false) {
    const json* v = find(obj, ptr, key, required);
    if (!v) return std::nullopt;
    if (!v->is_number_integer() || v->get<std::int64_t>() < 0) {
      fail(ptr + "/" + key, "expected a non-negative integer");
      return std::nullopt;
    }
    return v->get<std::size_t>();
  }

  std::optional<std::string> string(const json& obj, const std::string& ptr, const char* key, bool required = false) {
    const json* v = find(obj, ptr, key, required);
    if (!v) return std::nullopt;
    if (!v->is_string()) {
      fail(ptr + "/" + key, "expected a string");
      return std::nullopt;
    }
    return v->get<std::string>();
  }

  std::optional<bool> boolean(const json& obj, const std::string& ptr, const char* key) {
    const json* v = find(obj, ptr, key, false);
    if (!v) return std::nullopt;
    if (!v->is_boolean()) {
      fail(ptr + "/" + key, "expected true or false");
      return std::nullopt;
    }
    return v->get<bool>();
  }

  std::optional<std::vector<double>> numbers(const json& obj, const std::string& ptr, const char* key,
                                             bool required = false) {
    const json* v = find(obj, ptr, key, required);
    if (!v) return std::nullopt;
    if (!v->is_array()) {
      fail(ptr + "/" + key, "expected an array of numbers");
      return std::nullopt;
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number()) {
        fail(ptr + "/" + key + "/" + std::to_string(i), "expected a number");
        return std::nullopt;
      }
      out.push_back((*v)[i].get<double>());
    }
    return out;
  }

  template <class T, class Parse>
  std::optional<T> named(const json& obj, const std::string& ptr, const char* key, Parse parse, bool required = false) {
    auto s = string(obj, ptr, key, required);
    if (!s) return std::nullopt;
    try {
      return parse(*s);
    } catch (const Error& e) {
      fail(ptr + "/" + key, e.what());
      return std::nullopt;
    }
  }

 private:
  std::vector<ConfigIssue>& issues_;
};

template <class T>
void assign(T& dst, const std::optional<T>& v) {
  if (v) dst = *v;
}

void read_regression(Reader& r, const json& d, const std::string& p, RegressionConfig& cfg) {
  r.allowed(d, p, {"p0", "p1", "p2", "regions", "seed"});
  assign(cfg.p0, r.number(d, p, "p0"));
  assign(cfg.p1, r.number(d, p, "p1"));
  assign(cfg.p2, r.number(d, p, "p2"));
  assign(cfg.seed, r.count(d, p, "seed"));
  if (const json* regions = r.find(d, p, "regions", false)) {
    const std::string rp = p + "/regions";
    if (!regions->is_array() || regions->empty()) {
      r.fail(rp, "expected a non-empty array of regions");
      return;
    }
    cfg.regions.clear();
    for (std::size_t i = 0; i < regions->size(); ++i) {
      const std::string ip = rp + "/" + std::to_string(i);
      const json& reg = (*regions)[i];
      if (!r.require_object(reg, ip)) continue;
      r.allowed(reg, ip, {"x_lo", "x_hi", "noise_sd", "n_points"});
      Region out;
      assign(out.x_lo, r.number(reg, ip, "x_lo", true));
      assign(out.x_hi, r.number(reg, ip, "x_hi", true));
      assign(out.noise_sd, r.number(reg, ip, "noise_sd", true));
      assign(out.n_points, r.count(reg, ip, "n_points", true));
      if (!(out.x_lo < out.x_hi)) r.fail(ip, "x_lo must be < x_hi");
      if (out.noise_sd < 0.0) r.fail(ip + "/noise_sd", "must be >= 0");
      if (out.n_points == 0) r.fail(ip + "/n_points", "must be >= 1");
      cfg.regions.push_back(out);
    }
  }
}

void read_beam(Reader& r, const json& d, const std::string& p, BeamConfig& cfg) {
  r.allowed(d, p, {"E", "I", "L", "P", "n_obs", "obs_regions", "noise_sd", "seed"});
  assign(cfg.youngs_modulus, r.number(d, p, "E"));
  assign(cfg.inertia, r.number(d, p, "I"));
  assign(cfg.length, r.number(d, p, "L"));
  assign(cfg.load, r.number(d, p, "P"));
  assign(cfg.n_obs, r.count(d, p, "n_obs"));
  assign(cfg.noise_sd, r.number(d, p, "noise_sd"));
  assign(cfg.seed, r.count(d, p, "seed"));
  for (const char* k : {"E", "I", "L", "P"})
    if (auto v = r.number(d, p, k); v && !(*v > 0.0)) r.fail(p + "/" + k, "must be > 0");
  if (cfg.n_obs == 0) r.fail(p + "/n_obs", "must be >= 1");
  if (const json* regions = r.find(d, p, "obs_regions", false)) {
    const std::string rp = p + "/obs_regions";
    if (!regions->is_array() || regions->empty()) {
      r.fail(rp, "expected a non-empty array of [lo, hi] pairs");
      return;
    }
    cfg.obs_regions.clear();
    for (std::size_t i = 0; i < regions->size(); ++i) {
      const json& reg = (*regions)[i];
      const std::string ip = rp + "/" + std::to_string(i);
      if (!reg.is_array() || reg.size() != 2 || !reg[0].is_number() || !reg[1].is_number()) {
        r.fail(ip, "expected [lo, hi] in units of L");
        continue;
      }
      const double lo = reg[0].get<double>(), hi = reg[1].get<double>();
      if (!(lo >= 0.0 && hi <= 3.0 && lo < hi)) r.fail(ip, "observation range must satisfy 0 <= lo < hi <= 3");
      cfg.obs_regions.emplace_back(lo, hi);
    }
  }
}

void read_microstructure(Reader& r, const json& d, const std::string& p, MicrostructureConfig& cfg) {
  r.allowed(d, p, {"size", "n_samples", "correlation_length", "target_porosity", "seed"});
  assign(cfg.size, r.count(d, p, "size"));
  assign(cfg.n_samples, r.count(d, p, "n_samples"));
  assign(cfg.correlation_length, r.number(d, p, "correlation_length"));
  assign(cfg.target_porosity, r.number(d, p, "target_porosity"));
  assign(cfg.seed, r.count(d, p, "seed"));
  if (cfg.size != 16 && cfg.size != 32 && cfg.size != 64) r.fail(p + "/size", "must be 16, 32 or 64");
  if (cfg.n_samples == 0) r.fail(p + "/n_samples", "must be >= 1");
  if (!(cfg.correlation_length > 0.0)) r.fail(p + "/correlation_length", "must be > 0");
  if (!(cfg.target_porosity > 0.0 && cfg.target_porosity < 1.0)) r.fail(p + "/target_porosity", "must be in (0, 1)");
}

std::optional<BinarizeConfig> read_binarize(Reader& r, const json& c, const std::string& p) {
  const json* b = r.find(c, p, "binarize", false);
  const std::string bp = p + "/binarize";
  if (!b || !r.require_object(*b, bp)) return std::nullopt;
  r.allowed(*b, bp, {"steepness", "threshold"});
  BinarizeConfig out;
  assign(out.steepness, r.number(*b, bp, "steepness"));
  assign(out.threshold, r.number(*b, bp, "threshold"));
  if (!(out.steepness > 0.0)) r.fail(bp + "/steepness", "must be > 0");
  return out;
}

void read_constraint(Reader& r, const json& c, const std::string& p, ExperimentKind experiment,
                     std::size_t image_side, ConstraintSpec& spec, TargetSource& source) {
  r.allowed(c, p,
            {"name", "kind", "locations", "interval", "target", "lower", "upper", "target_curve", "epsilon",
             "relation", "damping", "binarize"});
  assign(spec.name, r.string(c, p, "name", true));
  auto kind = r.named<ConstraintKind>(c, p, "kind", parse_kind, true);
  if (!kind) return;
  spec.kind = *kind;
  assign(spec.relation, r.named<Relation>(c, p, "relation", parse_relation));
  if (auto d = r.number(c, p, "damping")) {
    if (*d < 0.0) r.fail(p + "/damping", "must be >= 0");
    spec.damping = *d;
  }
  assign(spec.locations, r.numbers(c, p, "locations"));
  if (const json* iv = r.find(c, p, "interval", false)) {
    const std::string ip = p + "/interval";
    if (r.require_object(*iv, ip)) {
      r.allowed(*iv, ip, {"lo", "hi", "samples"});
      Interval out;
      assign(out.lo, r.number(*iv, ip, "lo", true));
      assign(out.hi, r.number(*iv, ip, "hi", true));
      assign(out.samples, r.count(*iv, ip, "samples"));
      if (!(out.lo < out.hi)) r.fail(ip, "lo must be < hi");
      spec.interval = out;
    }
  }

  const bool functional = spec.is_functional();
  if (functional && experiment != ExperimentKind::Microstructure)
    r.fail(p + "/kind", "'" + std::string(kind_name(spec.kind)) + "' constraints apply to the microstructure experiment");
  if (!functional && experiment == ExperimentKind::Microstructure)
    r.fail(p + "/kind", "the microstructure experiment takes only tpcf and porosity constraints");
  if (!functional && spec.locations.empty() && !spec.interval)
    r.fail(p + "/locations", "needs locations or an interval");

  switch (spec.kind) {
    case ConstraintKind::Value:
    case ConstraintKind::Variance:
      assign(spec.target, r.number(c, p, "target", true));
      if (spec.kind == ConstraintKind::Variance && spec.target < 0.0) r.fail(p + "/target", "variance must be >= 0");
      break;
    case ConstraintKind::Derivative:
      assign(spec.target, r.number(c, p, "target", true));
      if (auto eps = r.number(c, p, "epsilon")) {
        if (!(*eps > 0.0)) r.fail(p + "/epsilon", "must be > 0");
        spec.epsilon = *eps;
      } else if (!c.contains("epsilon")) {
        r.fail(p + "/epsilon", "derivative constraints require epsilon");
      }
      break;
    case ConstraintKind::Bound: {
      auto lo = r.number(c, p, "lower"), hi = r.number(c, p, "upper");
      if (!c.contains("lower") || !c.contains("upper"))
        r.fail(p, "bound constraints require an interval target: lower and upper");
      assign(spec.lower, lo);
      assign(spec.upper, hi);
      if (lo && hi && *lo > *hi) r.fail(p + "/lower", "must be <= upper");
      break;
    }
    case ConstraintKind::Porosity: {
      const json* t = r.find(c, p, "target", true);
      if (t && t->is_string() && t->get<std::string>() == "training_mean") {
        source = TargetSource::TrainingMean;
      } else if (t && t->is_number()) {
        spec.target = t->get<double>();
        if (!(spec.target >= 0.0 && spec.target <= 1.0)) r.fail(p + "/target", "porosity must be in [0, 1]");
      } else if (t) {
        r.fail(p + "/target", "expected a number or \"training_mean\"");
      }
      break;
    }
    case ConstraintKind::Tpcf: {
      const json* t = r.find(c, p, "target_curve", true);
      if (t && t->is_string() && t->get<std::string>() == "training_mean") {
        source = TargetSource::TrainingMean;
      } else if (t) {
        if (auto curve = r.numbers(c, p, "target_curve")) {
          spec.target_curve = *curve;
          if (curve->size() != image_side / 2 + 1)
            r.fail(p + "/target_curve", "needs " + std::to_string(image_side / 2 + 1) + " radii for " +
                                            std::to_string(image_side) + "-pixel images");
        }
      }
      spec.binarize = read_binarize(r, c, p).value_or(spec.binarize);
      break;
    }
  }
}

ExperimentConfig build_config(const json& j, std::vector<ConfigIssue>& issues) {
  Reader r(issues);
  ExperimentConfig cfg;
  if (!r.require_object(j, "")) return cfg;
  r.allowed(j, "",
            {"experiment", "seed", "steps", "eval_draws", "log_interval", "output_dir", "constrained", "dataset",
             "model", "vae", "mdmm", "constraints", "eval_grid"});
  auto exp = r.named<ExperimentKind>(j, "", "experiment", parse_experiment, true);
  if (!exp) return cfg;
  cfg.experiment = *exp;
  const bool micro = cfg.experiment == ExperimentKind::Microstructure;
  const bool beam = cfg.experiment == ExperimentKind::Beam;

  assign(cfg.seed, r.count(j, "", "seed"));
  auto steps = r.count(j, "", "steps", true);
  if (steps && *steps < 1) r.fail("/steps", "must be >= 1");
  assign(cfg.steps, steps);
  assign(cfg.eval_draws, r.count(j, "", "eval_draws"));
  if (cfg.eval_draws < 2) r.fail("/eval_draws", "must be >= 2");
  assign(cfg.log_interval, r.count(j, "", "log_interval"));
  if (cfg.log_interval < 1) r.fail("/log_interval", "must be >= 1");
  if (auto out = r.string(j, "", "output_dir", true)) cfg.output_dir = *out;
  assign(cfg.constrained, r.boolean(j, "", "constrained"));

  // Data seeds default to a stream of the run seed.
  cfg.regression.seed = cfg.beam.seed = cfg.microstructure.seed = derive_seed(cfg.seed, kDataStream);
  if (const json* d = r.find(j, "", "dataset", false); d && r.require_object(*d, "/dataset")) {
    if (micro)
      read_microstructure(r, *d, "/dataset", cfg.microstructure);
    else if (beam)
      read_beam(r, *d, "/dataset", cfg.beam);
    else
      read_regression(r, *d, "/dataset", cfg.regression);
  }

  if (beam) {
    cfg.model.hidden = {2048};
    cfg.model.activation = Activation::Gelu;
    cfg.eval_grid = {0.0, 3.0, 301};
  }
  if (const json* m = r.find(j, "", "model", false)) {
    if (micro) r.fail("/model", "the microstructure experiment is configured under /vae");
    if (r.require_object(*m, "/model")) {
      r.allowed(*m, "/model", {"hidden", "activation", "train_draws", "kl_weight", "lr", "lr_final"});
      if (const json* h = r.find(*m, "/model", "hidden", false)) {
        if (!h->is_array() || h->empty()) {
          r.fail("/model/hidden", "expected a non-empty array of layer widths");
        } else {
          cfg.model.hidden.clear();
          for (std::size_t i = 0; i < h->size(); ++i) {
            if (!(*h)[i].is_number_integer() || (*h)[i].get<std::int64_t>() <= 0)
              r.fail("/model/hidden/" + std::to_string(i), "expected a positive integer");
            else
              cfg.model.hidden.push_back((*h)[i].get<std::size_t>());
          }
        }
      }
      assign(cfg.model.activation, r.named<Activation>(*m, "/model", "activation", parse_activation));
      assign(cfg.model.train_draws, r.count(*m, "/model", "train_draws"));
      if (cfg.model.train_draws < 1) r.fail("/model/train_draws", "must be >= 1");
      if (auto kl = r.number(*m, "/model", "kl_weight")) {
        if (*kl < 0.0) r.fail("/model/kl_weight", "must be >= 0");
        cfg.model.kl_weight = *kl;
      }
      assign(cfg.model.lr, r.number(*m, "/model", "lr"));
      if (!(cfg.model.lr > 0.0)) r.fail("/model/lr", "must be > 0");
      if (auto f = r.number(*m, "/model", "lr_final")) {
        if (!(*f > 0.0)) r.fail("/model/lr_final", "must be > 0");
        cfg.model.lr_final = *f;
      }
    }
  }
  if (const json* v = r.find(j, "", "vae", false)) {
    if (!micro) r.fail("/vae", "only the microstructure experiment has a VAE");
    if (r.require_object(*v, "/vae")) {
      r.allowed(*v, "/vae", {"hidden", "latent", "lr", "constraint_samples", "saved_samples"});
      assign(cfg.vae.hidden, r.count(*v, "/vae", "hidden"));
      assign(cfg.vae.latent, r.count(*v, "/vae", "latent"));
      assign(cfg.vae.lr, r.number(*v, "/vae", "lr"));
      assign(cfg.vae.constraint_samples, r.count(*v, "/vae", "constraint_samples"));
      assign(cfg.vae.saved_samples, r.count(*v, "/vae", "saved_samples"));
      if (cfg.vae.hidden == 0) r.fail("/vae/hidden", "must be >= 1");
      if (cfg.vae.latent == 0) r.fail("/vae/latent", "must be >= 1");
      if (cfg.vae.constraint_samples == 0) r.fail("/vae/constraint_samples", "must be >= 1");
      if (!(cfg.vae.lr > 0.0)) r.fail("/vae/lr", "must be > 0");
    }
  }
  if (const json* m = r.find(j, "", "mdmm", false); m && r.require_object(*m, "/mdmm")) {
    r.allowed(*m, "/mdmm", {"lr_multiplier", "damping_eq", "damping_ineq", "initial_slack", "inequality_damping"});
    assign(cfg.mdmm.lr_multiplier, r.number(*m, "/mdmm", "lr_multiplier"));
    assign(cfg.mdmm.damping_eq, r.number(*m, "/mdmm", "damping_eq"));
    assign(cfg.mdmm.damping_ineq, r.number(*m, "/mdmm", "damping_ineq"));
    assign(cfg.mdmm.initial_slack, r.number(*m, "/mdmm", "initial_slack"));
    assign(cfg.mdmm.inequality_damping,
           r.named<InequalityDamping>(*m, "/mdmm", "inequality_damping", parse_inequality_damping));
    if (cfg.mdmm.lr_multiplier < 0.0) r.fail("/mdmm/lr_multiplier", "must be >= 0");
    if (cfg.mdmm.damping_eq < 0.0) r.fail("/mdmm/damping_eq", "must be >= 0");
    if (cfg.mdmm.damping_ineq < 0.0) r.fail("/mdmm/damping_ineq", "must be >= 0");
  }
  if (const json* g = r.find(j, "", "eval_grid", false)) {
    if (micro) r.fail("/eval_grid", "the microstructure experiment has no evaluation grid");
    if (r.require_object(*g, "/eval_grid")) {
      r.allowed(*g, "/eval_grid", {"lo", "hi", "points"});
      assign(cfg.eval_grid.lo, r.number(*g, "/eval_grid", "lo"));
      assign(cfg.eval_grid.hi, r.number(*g, "/eval_grid", "hi"));
      assign(cfg.eval_grid.points, r.count(*g, "/eval_grid", "points"));
      if (!(cfg.eval_grid.lo < cfg.eval_grid.hi)) r.fail("/eval_grid", "lo must be < hi");
      if (cfg.eval_grid.points < 2) r.fail("/eval_grid/points", "must be >= 2");
      if (beam && (cfg.eval_grid.lo < 0.0 || cfg.eval_grid.hi > 3.0))
        r.fail("/eval_grid", "beam grid must lie within [0, 3] (units of L)");
    }
  }

  if (const json* cs = r.find(j, "", "constraints", false)) {
    if (!cs->is_array()) {
      r.fail("/constraints", "expected an array");
    } else {
      std::set<std::string> names;
      for (std::size_t i = 0; i < cs->size(); ++i) {
        const std::string p = "/constraints/" + std::to_string(i);
        if (!r.require_object((*cs)[i], p)) continue;
        ConstraintSpec spec;
        TargetSource source = TargetSource::Given;
        read_constraint(r, (*cs)[i], p, cfg.experiment, cfg.microstructure.size, spec, source);
        if (!spec.name.empty() && !names.insert(spec.name).second) r.fail(p + "/name", "duplicate constraint name");
        cfg.constraints.push_back(std::move(spec));
        cfg.target_sources.push_back(source);
      }
    }
  }
  return cfg;
}

}  // namespace

std::vector<ConfigIssue> validate_config(const json& j) {
  std::vector<ConfigIssue> issues;
  build_config(j, issues);
  return issues;
}

ExperimentConfig parse_config(const json& j) {
  std::vector<ConfigIssue> issues;
  ExperimentConfig cfg = build_config(j, issues);
  if (!issues.empty()) throw ConfigError(issues.front().pointer, issues.front().message);
  return cfg;
}

json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", path.string() + ": " + e.what());
  }
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("/", "override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::string pointer;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::string& k = parts[i];
    pointer += "/" + k;
    const bool last = i + 1 == parts.size();
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(k);
      } catch (const std::exception&) {
        throw ConfigError(pointer, "array index expected");
      }
      if (idx >= node->size()) throw ConfigError(pointer, "array index out of range");
      node = &(*node)[idx];
    } else {
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) throw ConfigError(pointer, "cannot descend into a non-object value");
      node = &(*node)[k];
    }
    if (last) *node = value;
  }
}

// --- output helpers ------------------------------------------------------------------

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["experiment"] = std::string(experiment_name(cfg.experiment));
  j["seed"] = cfg.seed;
  j["steps"] = cfg.steps;
  j["eval_draws"] = cfg.eval_draws;
  j["log_interval"] = cfg.log_interval;
  j["output_dir"] = cfg.output_dir.string();
  j["constrained"] = cfg.constrained;
  switch (cfg.experiment) {
    case ExperimentKind::Microstructure: {
      const auto& m = cfg.microstructure;
      j["dataset"] = {{"size", m.size},
                      {"n_samples", m.n_samples},
                      {"correlation_length", m.correlation_length},
                      {"target_porosity", m.target_porosity},
                      {"seed", m.seed}};
      j["vae"] = {{"hidden", cfg.vae.hidden},
                  {"latent", cfg.vae.latent},
                  {"lr", cfg.vae.lr},
                  {"constraint_samples", cfg.vae.constraint_samples},
                  {"saved_samples", cfg.vae.saved_samples}};
      break;
    }
    case ExperimentKind::Beam: {
      const auto& b = cfg.beam;
      json regions = json::array();
      for (auto [lo, hi] : b.obs_regions) regions.push_back({lo, hi});
      j["dataset"] = {{"E", b.youngs_modulus}, {"I", b.inertia},   {"L", b.length},
                      {"P", b.load},           {"n_obs", b.n_obs}, {"obs_regions", regions},
                      {"noise_sd", b.noise_sd}, {"seed", b.seed}};
      break;
    }
    default: {
      const auto& g = cfg.regression;
      json regions = json::array();
      for (const Region& reg : g.regions)
        regions.push_back({{"x_lo", reg.x_lo}, {"x_hi", reg.x_hi}, {"noise_sd", reg.noise_sd}, {"n_points", reg.n_points}});
      j["dataset"] = {{"p0", g.p0}, {"p1", g.p1}, {"p2", g.p2}, {"regions", regions}, {"seed", g.seed}};
    }
  }
  if (cfg.experiment != ExperimentKind::Microstructure) {
    j["model"] = {{"hidden", cfg.model.hidden},
                  {"activation", std::string(activation_name(cfg.model.activation))},
                  {"train_draws", cfg.model.train_draws},
                  {"lr", cfg.model.lr}};
    if (cfg.model.kl_weight) j["model"]["kl_weight"] = *cfg.model.kl_weight;
    if (cfg.model.lr_final) j["model"]["lr_final"] = *cfg.model.lr_final;
    j["eval_grid"] = {{"lo", cfg.eval_grid.lo}, {"hi", cfg.eval_grid.hi}, {"points", cfg.eval_grid.points}};
  }
  j["mdmm"] = {{"lr_multiplier", cfg.mdmm.lr_multiplier},
               {"damping_eq", cfg.mdmm.damping_eq},
               {"damping_ineq", cfg.mdmm.damping_ineq},
               {"initial_slack", cfg.mdmm.initial_slack},
               {"inequality_damping", std::string(inequality_damping_name(cfg.mdmm.inequality_damping))}};
  j["constraints"] = json::array();
  for (std::size_t i = 0; i < cfg.constraints.size(); ++i) {
    const ConstraintSpec& s = cfg.constraints[i];
    const bool from_data = cfg.target_sources[i] == TargetSource::TrainingMean;
    json c{{"name", s.name}, {"kind", std::string(kind_name(s.kind))}, {"relation", std::string(relation_name(s.relation))}};
    if (!s.locations.empty()) c["locations"] = s.locations;
    if (s.interval) c["interval"] = {{"lo", s.interval->lo}, {"hi", s.interval->hi}, {"samples", s.interval->samples}};
    if (s.damping) c["damping"] = *s.damping;
    switch (s.kind) {
      case ConstraintKind::Bound:
        c["lower"] = s.lower;
        c["upper"] = s.upper;
        break;
      case ConstraintKind::Derivative:
        c["target"] = s.target;
        c["epsilon"] = s.epsilon;
        break;
      case ConstraintKind::Tpcf:
        c["target_curve"] = from_data ? json("training_mean") : json(s.target_curve);
        c["binarize"] = {{"steepness", s.binarize.steepness}, {"threshold", s.binarize.threshold}};
        break;
      case ConstraintKind::Porosity: c["target"] = from_data ? json("training_mean") : json(s.target); break;
      default: c["target"] = s.target;
    }
    j["constraints"].push_back(c);
  }
  return j;
}

// metrics.csv is a pure function of the config and seed; wall-clock goes to timing.csv.
class MetricsLog {
 public:
  MetricsLog(const fs::path& dir, const std::vector<ConstraintSpec>& specs)
      : metrics_(dir / "metrics.csv", std::ios::binary), timing_(dir / "timing.csv", std::ios::binary),
        start_(std::chrono::steady_clock::now()) {
    if (!metrics_) throw Error("cannot write " + (dir / "metrics.csv").string());
    metrics_ << "step,data_loss";
    for (const auto& s : specs) metrics_ << ',' << s.name << "_residual," << s.name << "_multiplier";
    metrics_ << '\n';
    timing_ << "step,wall_ms\n";
  }

  void row(std::size_t step, double data_loss, const std::vector<double>& residuals,
           const std::vector<double>& multipliers) {
    metrics_ << step << ',' << fmt(data_loss);
    for (std::size_t i = 0; i < residuals.size(); ++i) metrics_ << ',' << fmt(residuals[i]) << ',' << fmt(multipliers[i]);
    metrics_ << '\n';
    const auto ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    timing_ << step << ',' << std::fixed << std::setprecision(3) << ms << std::defaultfloat << '\n';
  }

 private:
  std::ofstream metrics_;
  std::ofstream timing_;
  std::chrono::steady_clock::time_point start_;
};

double step_lr(double lr, std::optional<double> lr_final, std::size_t step, std::size_t steps) {
  if (!lr_final || steps < 2) return lr;
  const double t = static_cast<double>(step - 1) / static_cast<double>(steps - 1);
  return lr * std::pow(*lr_final / lr, t);
}

bool log_step(const ExperimentConfig& cfg, std::size_t step) {
  return step % cfg.log_interval == 0 || step == cfg.steps;
}

void write_infeasibility(const fs::path& dir, const ExperimentConfig& cfg, const std::vector<ConstraintReport>& reports) {
  json j;
  j["experiment"] = std::string(experiment_name(cfg.experiment));
  j["eval_draws"] = cfg.eval_draws;
  j["constrained"] = cfg.constrained;
  j["inequality_damping"] = std::string(inequality_damping_name(cfg.mdmm.inequality_damping));
  j["constraints"] = json::array();
  for (const auto& r : reports)
    j["constraints"].push_back({{"name", r.name},
                                {"kind", std::string(kind_name(r.kind))},
                                {"residual", r.residual},
                                {"infeasibility", std::abs(r.residual)}});
  write_text(dir / "infeasibility.json", j.dump(2) + "\n");
}

// --- Bayesian network experiments ---------------------------------------------------

RunResult run_bnn(const ExperimentConfig& cfg) {
  const fs::path& dir = cfg.output_dir;
  const bool beam = cfg.experiment == ExperimentKind::Beam;
  Dataset data = beam ? gen_beam(cfg.beam) : gen_regression(cfg.regression);
  save_dataset(dir / "data.csv", data);
  // Beam inputs are in units of L and targets in units of P L^3 / (E I).
  const double x_scale = beam ? cfg.beam.length : 1.0;
  const double y_scale = beam ? cfg.beam.deflection_scale() : 1.0;
  if (beam)
    write_text(dir / "dataset.json",
               json{{"x_unit_m", x_scale}, {"deflection_scale_m", y_scale}, {"n_obs", data.size()}}.dump(2) + "\n");

  std::vector<double> xs(data.x), ys(data.y);
  for (double& v : xs) v /= x_scale;
  for (double& v : ys) v /= y_scale;
  const Tensor x = as_column(xs), y = Tensor::vector(ys);

  BayesianMLP net =
      BayesianMLP::initialized(1, cfg.model.hidden, cfg.model.activation, derive_seed(cfg.seed, kInitStream));
  std::vector<ConstraintSpec> specs = cfg.constraints;
  MultiplierState state(cfg.mdmm);
  if (cfg.constrained)
    for (auto& s : specs) state.register_constraint(s);
  Adam opt(AdamConfig{cfg.model.lr});
  const double kl_weight = cfg.model.kl_weight.value_or(1.0 / static_cast<double>(data.size()));
  Rng rng(derive_seed(cfg.seed, kTrainStream));
  MetricsLog log(dir, specs);

  std::vector<double> residuals(specs.size()), multipliers(specs.size());
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    opt.set_lr(step_lr(cfg.model.lr, cfg.model.lr_final, step, cfg.steps));
    Tape tape;
    ParameterBinding params(tape);
    BoundNetwork bound = net.bind(params);
    ElboEstimate elbo = elbo_loss(net, bound, x, y, cfg.model.train_draws, kl_weight, rng);
    if (!std::isfinite(elbo.loss.item())) throw RunAborted(step, "data_loss", "non-finite data loss");
    std::vector<ConstraintTerm> terms;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      ConstraintResidual r = evaluate(elbo.draws, specs[i]);
      if (!std::isfinite(r.value)) throw RunAborted(step, specs[i].name, "non-finite constraint residual");
      residuals[i] = r.value;
      if (cfg.constrained) terms.push_back({*specs[i].weight_id, r.value_var});
    }
    MdmmObjective obj = total_loss(elbo.loss, terms, state);
    try {
      tape.backward(obj.loss);
      params.check_gradients();
      mdmm_step(opt, params, state, obj);
    } catch (const NonFiniteError& e) {
      throw RunAborted(step, e.op(), e.what());
    }
    net.clamp_log_var();
    if (log_step(cfg, step)) {
      for (std::size_t i = 0; i < specs.size(); ++i)
        multipliers[i] = cfg.constrained ? state.multiplier(*specs[i].weight_id) : 0.0;
      log.row(step, elbo.loss.item(), residuals, multipliers);
    }
  }
  net.save(dir / "model.json");

  RunResult result;
  const std::uint64_t eval_seed = derive_seed(cfg.seed, kEvalStream);
  const std::vector<double> grid = cfg.eval_grid.values();
  result.predictions = predict(net, as_column(grid), cfg.eval_draws, eval_seed);
  for (double g : grid) result.grid.push_back(g * x_scale);
  for (double& m : result.predictions.mean) m *= y_scale;
  for (double& v : result.predictions.epistemic_var) v *= y_scale * y_scale;
  for (double& v : result.predictions.aleatoric_var) v *= y_scale * y_scale;
  // Same weight draws as the predictions.
  for (const auto& s : specs) {
    ConstraintResidual r = evaluate(net, s, cfg.eval_draws, eval_seed);
    result.constraints.push_back({s.name, s.kind, r.value, r.per_point});
  }

  std::ostringstream pred;
  pred << "x,mean,epistemic_var,aleatoric_var\n";
  for (std::size_t i = 0; i < grid.size(); ++i)
    pred << fmt(result.grid[i]) << ',' << fmt(result.predictions.mean[i]) << ','
         << fmt(result.predictions.epistemic_var[i]) << ',' << fmt(result.predictions.aleatoric_var[i]) << '\n';
  write_text(dir / "predictions.csv", pred.str());
  write_infeasibility(dir, cfg, result.constraints);
  return result;
}

// --- microstructure experiment ---------------------------------------------------

TpcfCurve mean_tpcf(const std::vector<BinaryImage>& images, const BinarizeConfig& bin) {
  TpcfCurve acc;
  for (const auto& img : images) {
    TpcfCurve c = tpcf(img.pixels(), bin);
    if (acc.values.empty()) acc.values.assign(c.values.size(), 0.0);
    for (std::size_t r = 0; r < c.values.size(); ++r) acc.values[r] += c.values[r];
  }
  for (double& v : acc.values) v /= static_cast<double>(images.size());
  return acc;
}

double mean_porosity(const std::vector<BinaryImage>& images) {
  double acc = 0.0;
  for (const auto& img : images) acc += porosity(img.pixels());
  return acc / static_cast<double>(images.size());
}

std::vector<Tensor> pixels_of(const std::vector<BinaryImage>& images) {
  std::vector<Tensor> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(img.pixels());
  return out;
}

RunResult run_microstructure(const ExperimentConfig& cfg) {
  const fs::path& dir = cfg.output_dir;
  const std::vector<BinaryImage> training = gen_microstructures(cfg.microstructure);
  save_microstructures(dir / "training", training, cfg.microstructure);
  const Tensor batch = image_batch(training);

  // TPCF compliance is always measured against the training-set mean curve.
  BinarizeConfig report_bin;
  std::vector<ConstraintSpec> specs = cfg.constraints;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].kind == ConstraintKind::Tpcf) report_bin = specs[i].binarize;
    if (cfg.target_sources[i] != TargetSource::TrainingMean) continue;
    if (specs[i].kind == ConstraintKind::Tpcf)
      specs[i].target_curve = mean_tpcf(training, specs[i].binarize).values;
    else
      specs[i].target = mean_porosity(training);
  }
  const TpcfCurve target = mean_tpcf(training, report_bin);
  target.save_csv(dir / "tpcf_target.csv");

  DenseVAE vae = DenseVAE::initialized(cfg.microstructure.size, derive_seed(cfg.seed, kInitStream), cfg.vae.hidden,
                                       cfg.vae.latent);
  MultiplierState state(cfg.mdmm);
  if (cfg.constrained)
    for (auto& s : specs) state.register_constraint(s);
  Adam opt(AdamConfig{cfg.vae.lr});
  const std::uint64_t train_seed = derive_seed(cfg.seed, kTrainStream);
  MetricsLog log(dir, specs);
  const std::span<const ConstraintSpec> active =
      cfg.constrained ? std::span<const ConstraintSpec>(specs) : std::span<const ConstraintSpec>();

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    VaeStepMetrics m;
    try {
      m = constrained_train_step(vae, opt, batch, active, state, derive_seed(train_seed, step),
                                 cfg.vae.constraint_samples);
    } catch (const NonFiniteError& e) {
      throw RunAborted(step, e.op(), e.what());
    }
    if (!std::isfinite(m.loss)) throw RunAborted(step, "data_loss", "non-finite loss");
    if (!log_step(cfg, step)) continue;
    std::vector<double> residuals = m.residuals, multipliers = m.multipliers;
    if (!cfg.constrained) {
      // Reported only; the same number of fresh samples the constrained step would use.
      const auto samples = pixels_of(generate(vae, cfg.vae.constraint_samples, derive_seed(train_seed, step)));
      residuals.clear();
      for (const auto& s : specs) residuals.push_back(eval_functional(samples, s).value);
      multipliers.assign(specs.size(), 0.0);
    }
    log.row(step, m.recon + m.kl, residuals, multipliers);
  }
  vae.save(dir / "vae.json");

  RunResult result;
  const std::vector<BinaryImage> generated = generate(vae, cfg.eval_draws, derive_seed(cfg.seed, kEvalStream));
  const std::vector<Tensor> gen_pixels = pixels_of(generated);
  std::vector<BinaryImage> saved(generated.begin(),
                                 generated.begin() + static_cast<std::ptrdiff_t>(
                                                         std::min(cfg.vae.saved_samples, generated.size())));
  save_microstructures(dir / "generated", saved, cfg.microstructure);

  std::vector<double> per_sample;
  for (const auto& img : generated) {
    const TpcfCurve c = tpcf(img.pixels(), report_bin);
    double l1 = 0.0;
    for (std::size_t r = 0; r < c.values.size(); ++r) l1 += std::abs(c.values[r] - target.values[r]);
    per_sample.push_back(l1);
  }
  double l1 = 0.0;
  for (double v : per_sample) l1 += v;
  result.tpcf_l1 = l1 / static_cast<double>(per_sample.size());
  result.generated_porosity = mean_porosity(generated);
  result.training_porosity = mean_porosity(training);
  const TpcfCurve gen_curve = mean_tpcf(generated, report_bin);
  gen_curve.save_csv(dir / "tpcf_generated.csv");

  for (const auto& s : specs) {
    ConstraintResidual r = eval_functional(gen_pixels, s);
    result.constraints.push_back({s.name, s.kind, r.value, {}});
  }
  json compliance{{"l1_error", *result.tpcf_l1},
                  {"l1_definition", "mean over generated samples of sum_r |S2(r) - target(r)|"},
                  {"eval_samples", generated.size()},
                  {"training_samples", training.size()},
                  {"target_curve", target.values},
                  {"generated_mean_curve", gen_curve.values},
                  {"generated_porosity", *result.generated_porosity},
                  {"training_porosity", *result.training_porosity}};
  write_text(dir / "tpcf_compliance.json", compliance.dump(2) + "\n");
  write_infeasibility(dir, cfg, result.constraints);
  return result;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  write_text(cfg.output_dir / "config.json", config_to_json(cfg).dump(2) + "\n");
  return cfg.experiment == ExperimentKind::Microstructure ? run_microstructure(cfg) : run_bnn(cfg);
}

// --- comparison --------------------------------------------------------------------

namespace {

struct PredictionTable {
  std::vector<double> x, mean;
};

PredictionTable read_predictions(const fs::path& dir) {
  const fs::path path = dir / "predictions.csv";
  std::ifstream in(path);
  if (!in) throw Error("missing file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "x,mean,epistemic_var,aleatoric_var")
    throw ParseError(path.string(), 1, "expected header 'x,mean,epistemic_var,aleatoric_var'");
  PredictionTable t;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
      throw ParseError(path.string(), lineno, "expected four comma-separated values");
    try {
      t.x.push_back(std::stod(a));
      t.mean.push_back(std::stod(b));
    } catch (const std::exception&) {
      throw ParseError(path.string(), lineno, "malformed number");
    }
  }
  return t;
}

json read_json_file(const fs::path& path) {
  if (!fs::exists(path)) throw Error("missing file " + path.string());
  return load_json(path);
}

ExperimentConfig read_run_config(const fs::path& dir) { return parse_config(read_json_file(dir / "config.json")); }

double beam_mse(const fs::path& dir, const ExperimentConfig& cfg, const PredictionTable& t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.x.size(); ++i) {
    const double d = t.mean[i] - beam_deflection(std::clamp(t.x[i], 0.0, 3.0 * cfg.beam.length), cfg.beam);
    acc += d * d;
  }
  (void)dir;
  return acc / static_cast<double>(t.x.size());
}

std::map<std::string, double> infeasibilities(const fs::path& dir) {
  const json j = read_json_file(dir / "infeasibility.json");
  std::map<std::string, double> out;
  for (const auto& c : j.at("constraints")) out[c.at("name").get<std::string>()] = c.at("infeasibility").get<double>();
  return out;
}

double ratio(double value, double baseline) {
  if (value == baseline) return 1.0;
  return value / baseline;
}

}  // namespace

std::vector<ComparisonRow> compare_runs(const std::vector<fs::path>& runs, const fs::path& baseline) {
  const ExperimentConfig base_cfg = read_run_config(baseline);
  std::vector<ComparisonRow> rows;
  const bool micro = base_cfg.experiment == ExperimentKind::Microstructure;
  const bool beam = base_cfg.experiment == ExperimentKind::Beam;
  PredictionTable base_pred;
  if (!micro) base_pred = read_predictions(baseline);

  for (const fs::path& run : runs) {
    const ExperimentConfig cfg = read_run_config(run);
    if ((cfg.experiment == ExperimentKind::Microstructure) != micro ||
        (cfg.experiment == ExperimentKind::Beam) != beam)
      throw Error("cannot compare " + std::string(experiment_name(cfg.experiment)) + " run " + run.string() +
                  " against " + std::string(experiment_name(base_cfg.experiment)) + " baseline");
    const std::string name = run.string();
    if (micro) {
      const double v = read_json_file(run / "tpcf_compliance.json").at("l1_error").get<double>();
      const double b = read_json_file(baseline / "tpcf_compliance.json").at("l1_error").get<double>();
      rows.push_back({name, "tpcf_l1", v, b, ratio(v, b)});
      continue;
    }
    const PredictionTable pred = read_predictions(run);
    if (pred.x != base_pred.x) throw Error("grid mismatch between " + run.string() + " and " + baseline.string());
    if (beam) {
      const double v = beam_mse(run, cfg, pred), b = beam_mse(baseline, base_cfg, base_pred);
      rows.push_back({name, "mse", v, b, ratio(v, b)});
      continue;
    }
    const auto mine = infeasibilities(run), theirs = infeasibilities(baseline);
    for (const auto& [cname, v] : mine) {
      auto it = theirs.find(cname);
      if (it == theirs.end()) continue;
      rows.push_back({name, "infeasibility:" + cname, v, it->second, ratio(v, it->second)});
    }
  }
  return rows;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << "run,metric,value,baseline,ratio\n";
  for (const auto& r : rows)
    os << r.run << ',' << r.metric << ',' << fmt(r.value) << ',' << fmt(r.baseline) << ',' << fmt(r.ratio) << '\n';
  return os.str();
}

}  // namespace benn
