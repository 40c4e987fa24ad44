#include "rhm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "rhm/errors.hpp"
#include "rhm/format.hpp"
#include "rhm/hamiltonian.hpp"
#include "rhm/rng.hpp"

namespace rhm {

namespace {

namespace fs = std::filesystem;

const std::vector<std::string> kExperiments = {
    "quad_bilinear", "tracelog", "rgpca", "srwd", "stochastic_qb"};

const std::vector<std::string> kSolverTags = {
    "rhm_sd_f", "rhm_sd", "rhm_con", "rhm_cg", "rhm_tr",
    "rhm_sgd",  "rhm_scon", "rgda",   "rceg"};

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::vector<std::string> problem_keys(const std::string& experiment) {
  if (experiment == "quad_bilinear") return {"d", "c_q", "c_l"};
  if (experiment == "tracelog") return {"d"};
  if (experiment == "rgpca") return {"d", "n", "alpha", "mu0", "mu1"};
  if (experiment == "srwd") return {"d", "n", "r", "k", "eps"};
  if (experiment == "stochastic_qb") return {"d", "c_q", "c_l", "n", "spread"};
  throw ConfigError("unknown experiment: " + experiment);
}

// Defaults for parameters whose natural desk scale depends on the experiment.
void apply_experiment_defaults(ExperimentConfig& c) {
  if (c.experiment == "tracelog") {
    c.d = 5;
  } else if (c.experiment == "rgpca") {
    c.d = 10;
    c.n = 8;
  } else if (c.experiment == "srwd") {
    c.d = 10;
    c.n = 40;
  } else if (c.experiment == "stochastic_qb") {
    c.d = 5;
    c.n = 16;
  }
}

SolverConfig default_config(const std::string& tag) {
  SolverConfig c;
  if (tag == "rhm_sd_f") {
    c.step_rule = StepRule::Fixed;
  } else if (tag == "rhm_sd") {
    c.step_rule = StepRule::Armijo;
    c.eta = 1.0;
  } else if (tag == "rhm_con") {
    c.step_rule = StepRule::Fixed;
  } else if (tag == "rhm_cg") {
    c.step_rule = StepRule::StrongWolfe;
    c.eta = 1.0;
  } else if (tag == "rhm_tr") {
    // trust region ignores the step rule
  } else if (tag == "rhm_sgd" || tag == "rhm_scon") {
    c.step_rule = StepRule::Decaying;
  } else if (tag == "rgda" || tag == "rceg") {
    c.step_rule = StepRule::Fixed;
  } else {
    throw ConfigError("unknown solver tag: " + tag);
  }
  return c;
}

std::vector<StepRule> allowed_rules(const std::string& tag) {
  if (tag == "rhm_sd") return {StepRule::Fixed, StepRule::Armijo};
  if (tag == "rhm_cg") return {StepRule::StrongWolfe};
  if (tag == "rhm_sgd" || tag == "rhm_scon")
    return {StepRule::Fixed, StepRule::Decaying};
  if (tag == "rhm_tr") return {};  // not configurable
  return {StepRule::Fixed};        // rhm_sd_f, rhm_con, rgda, rceg
}

StepRule parse_step_rule(const std::string& value, const std::string& key) {
  if (value == "fixed") return StepRule::Fixed;
  if (value == "decaying") return StepRule::Decaying;
  if (value == "armijo") return StepRule::Armijo;
  if (value == "wolfe") return StepRule::StrongWolfe;
  throw ConfigError(key + ": unknown step rule '" + value +
                    "' (expected fixed, decaying, armijo, or wolfe)");
}

std::string step_rule_key(StepRule rule) {
  switch (rule) {
    case StepRule::Fixed: return "fixed";
    case StepRule::Decaying: return "decaying";
    case StepRule::Armijo: return "armijo";
    case StepRule::StrongWolfe: return "wolfe";
  }
  return "fixed";
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

int parse_bounded_int(const std::string& value, const std::string& key,
                      long long lo, long long hi) {
  long long v;
  try {
    v = parse_int(value);
  } catch (const ConfigError&) {
    throw ConfigError(key + ": malformed integer '" + value + "'");
  }
  if (v < lo || v > hi)
    throw ConfigError(key + " out of range: " + std::to_string(v));
  return static_cast<int>(v);
}

double parse_checked_double(const std::string& value, const std::string& key) {
  try {
    return parse_double(value);
  } catch (const ConfigError&) {
    throw ConfigError(key + ": malformed number '" + value + "'");
  }
}

void apply_solver_key(SolverConfig& c, const std::string& tag,
                      const std::string& skey, const std::string& value,
                      const std::string& key) {
  if (skey == "max_iters") {
    c.max_iters = parse_bounded_int(value, key, 0, 1'000'000'000);
  } else if (skey == "grad_tol") {
    c.grad_tol = parse_checked_double(value, key);
    if (!(c.grad_tol >= 0)) throw ConfigError(key + " must be >= 0");
  } else if (skey == "step_rule") {
    StepRule rule = parse_step_rule(value, key);
    const std::vector<StepRule> allowed = allowed_rules(tag);
    if (!std::count(allowed.begin(), allowed.end(), rule))
      throw ConfigError(key + ": rule '" + value + "' is not valid for " + tag);
    c.step_rule = rule;
  } else if (skey == "eta") {
    c.eta = parse_checked_double(value, key);
    if (!(c.eta > 0)) throw ConfigError(key + " must be > 0");
  } else if (skey == "r1") {
    c.r1 = parse_checked_double(value, key);
    if (!(c.r1 > 0 && c.r1 < 1)) throw ConfigError(key + " must be in (0, 1)");
  } else if (skey == "r2") {
    c.r2 = parse_checked_double(value, key);
    if (!(c.r2 > 0 && c.r2 < 0.5))
      throw ConfigError(key + " must be in (0, 0.5)");
  } else if (skey == "rho") {
    c.rho = parse_checked_double(value, key);
    if (!(c.rho > 0 && c.rho < 1)) throw ConfigError(key + " must be in (0, 1)");
  } else if (skey == "decay_delta") {
    c.decay_delta = parse_checked_double(value, key);
    if (!(c.decay_delta > 0)) throw ConfigError(key + " must be > 0");
  } else if (skey == "gamma") {
    c.gamma = parse_checked_double(value, key);
    if (!(c.gamma >= 0)) throw ConfigError(key + " must be >= 0");
  } else if (skey == "batch_s") {
    c.batch_s = parse_bounded_int(value, key, 1, 1'000'000'000);
  } else if (skey == "batch_s_prime") {
    c.batch_s_prime = parse_bounded_int(value, key, 1, 1'000'000'000);
  } else if (skey == "use_retraction") {
    c.use_retraction = parse_bool(value, key);
  } else if (skey == "tr_delta0") {
    c.tr_delta0 = parse_checked_double(value, key);
    if (!(c.tr_delta0 > 0)) throw ConfigError(key + " must be > 0");
  } else if (skey == "tr_delta_max") {
    c.tr_delta_max = parse_checked_double(value, key);
    if (!(c.tr_delta_max > 0)) throw ConfigError(key + " must be > 0");
  } else if (skey == "tr_rho_accept") {
    c.tr_rho_accept = parse_checked_double(value, key);
    if (!(c.tr_rho_accept > 0 && c.tr_rho_accept < 1))
      throw ConfigError(key + " must be in (0, 1)");
  } else if (skey == "max_linesearch") {
    c.max_linesearch = parse_bounded_int(value, key, 1, 1'000'000);
  } else {
    throw ConfigError("unknown key: " + key);
  }
}

void validate(const ExperimentConfig& c) {
  const std::string& exp = c.experiment;
  if (c.d < 1) throw ConfigError("d must be >= 1");
  if (exp == "quad_bilinear" || exp == "stochastic_qb") {
    if (c.c_q < 0) throw ConfigError("c_q must be >= 0");
    if (c.c_l < 0) throw ConfigError("c_l must be >= 0");
    if (c.c_q == 0 && c.c_l == 0)
      throw ConfigError("c_q and c_l cannot both be zero");
  }
  if (exp == "stochastic_qb") {
    if (c.n < 2) throw ConfigError("n must be >= 2 for stochastic_qb");
    if (c.spread < 0) throw ConfigError("spread must be >= 0");
  }
  if (exp == "rgpca") {
    if (c.d < 2) throw ConfigError("d must be >= 2 for rgpca");
    if (c.n < 1) throw ConfigError("n must be >= 1");
    if (!(c.alpha > 0)) throw ConfigError("alpha must be > 0");
    if (!(c.mu0 > 0)) throw ConfigError("mu0 must be > 0");
    if (!(c.mu1 > c.mu0)) throw ConfigError("mu1 must be > mu0");
  }
  if (exp == "srwd") {
    if (c.n < 1) throw ConfigError("n must be >= 1");
    if (c.k < 1 || c.k > c.d) throw ConfigError("k must be in [1, d]");
    if (c.r < 1 || c.r > c.d) throw ConfigError("r must be in [1, d]");
    if (!(c.eps > 0)) throw ConfigError("eps must be > 0");
  }
  for (const SolverSpec& s : c.solvers) {
    const SolverConfig& sc = s.config;
    if (s.tag == "rceg" && exp == "srwd")
      throw ConfigError(
          "rceg needs exponential and logarithm maps; the srwd geometries "
          "have neither");
    if ((s.tag == "rhm_sgd" || s.tag == "rhm_scon") && exp != "stochastic_qb")
      throw ConfigError(s.tag + " needs a finite-sum problem; use stochastic_qb");
    if (exp == "stochastic_qb" &&
        (s.tag == "rhm_sgd" || s.tag == "rhm_scon")) {
      if (sc.batch_s > c.n)
        throw ConfigError(s.tag + ".batch_s exceeds the sample count");
      if (sc.batch_s_prime > c.n)
        throw ConfigError(s.tag + ".batch_s_prime exceeds the sample count");
    }
    if (sc.step_rule == StepRule::StrongWolfe && !(sc.r1 < sc.r2))
      throw ConfigError(s.tag + ": wolfe needs r1 < r2");
    if (!(sc.tr_delta0 <= sc.tr_delta_max))
      throw ConfigError(s.tag + ": tr_delta0 must be <= tr_delta_max");
  }
}

struct RawEntry {
  std::string key;
  std::string value;
  int line = 0;
};

std::vector<RawEntry> tokenize_config(const std::string& text) {
  std::vector<RawEntry> entries;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string_view sv = trim(line);
    if (sv.empty()) continue;
    std::size_t eq = sv.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key = value");
    std::string key(trim(sv.substr(0, eq)));
    std::string value(trim(sv.substr(eq + 1)));
    if (key.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    entries.push_back({std::move(key), std::move(value), lineno});
  }
  return entries;
}

std::vector<std::string> split_tag_list(const std::string& value) {
  std::vector<std::string> tags;
  for (const std::string& cell : split_csv_line(value)) {
    std::string tag(trim(cell));
    if (!tag.empty()) tags.push_back(std::move(tag));
  }
  return tags;
}

std::string csv_header(bool has_gap) {
  return has_gap ? "iter,time_s,step,grad_norm,hamiltonian,opt_gap"
                 : "iter,time_s,step,grad_norm,hamiltonian";
}

void append_row(std::string& out, const TraceRecord& r, bool has_gap,
                bool stable_time) {
  out += std::to_string(r.iter);
  out += ',';
  out += format_double(stable_time ? 0.0 : r.time_s);
  out += ',';
  out += format_double(r.step);
  out += ',';
  out += format_double(r.grad_norm);
  out += ',';
  out += format_double(r.hamiltonian);
  if (has_gap) {
    out += ',';
    out += format_double(r.opt_gap);
  }
  out += '\n';
}

std::string trace_to_csv(const SolverTrace& trace, bool has_gap,
                         bool stable_time) {
  std::string out = csv_header(has_gap);
  out += '\n';
  for (const TraceRecord& r : trace.records)
    append_row(out, r, has_gap, stable_time);
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << content;
  out.flush();
  if (!out) throw Error("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

bool rel_close(double a, double b, double tol) {
  if (a == b) return true;
  if (std::isnan(a) && std::isnan(b)) return true;
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

SolverSummary summarize(const std::string& tag, const SolverTrace& trace,
                        bool stable_time) {
  SolverSummary s;
  s.tag = tag;
  s.status = trace.status;
  s.error_message = trace.error_message;
  if (!trace.records.empty()) {
    const TraceRecord& last = trace.records.back();
    s.iterations = last.iter;
    s.final_grad_norm = last.grad_norm;
    s.final_opt_gap = last.opt_gap;
    s.wall_time_s = stable_time ? 0.0 : last.time_s;
  } else {
    s.final_grad_norm = std::numeric_limits<double>::quiet_NaN();
    s.final_opt_gap = std::numeric_limits<double>::quiet_NaN();
  }
  return s;
}

}  // namespace

std::vector<std::string> known_experiments() { return kExperiments; }
std::vector<std::string> known_solver_tags() { return kSolverTags; }

ExperimentConfig parse_config_text(const std::string& text) {
  std::vector<RawEntry> entries = tokenize_config(text);

  ExperimentConfig cfg;
  bool exp_seen = false;
  for (const RawEntry& e : entries) {
    if (e.key != "experiment") continue;
    if (exp_seen) throw ConfigError("duplicate key: experiment");
    if (!contains(kExperiments, e.value))
      throw ConfigError("unknown experiment: '" + e.value + "'");
    cfg.experiment = e.value;
    exp_seen = true;
  }
  if (!exp_seen) throw ConfigError("missing required key: experiment");
  apply_experiment_defaults(cfg);

  bool solvers_seen = false;
  for (const RawEntry& e : entries) {
    if (e.key != "solvers") continue;
    if (solvers_seen) throw ConfigError("duplicate key: solvers");
    solvers_seen = true;
    for (const std::string& tag : split_tag_list(e.value)) {
      if (!contains(kSolverTags, tag))
        throw ConfigError("unknown solver tag: '" + tag + "'");
      for (const SolverSpec& s : cfg.solvers)
        if (s.tag == tag) throw ConfigError("duplicate solver tag: " + tag);
      cfg.solvers.push_back({tag, default_config(tag)});
    }
  }

  const std::vector<std::string> pkeys = problem_keys(cfg.experiment);
  std::set<std::string> seen;
  for (const RawEntry& e : entries) {
    if (e.key == "experiment" || e.key == "solvers") continue;
    if (!seen.insert(e.key).second)
      throw ConfigError("duplicate key: " + e.key);

    std::size_t dot = e.key.find('.');
    if (dot != std::string::npos) {
      std::string tag = e.key.substr(0, dot);
      std::string skey = e.key.substr(dot + 1);
      if (!contains(kSolverTags, tag))
        throw ConfigError("unknown key: " + e.key);
      SolverSpec* spec = nullptr;
      for (SolverSpec& s : cfg.solvers)
        if (s.tag == tag) spec = &s;
      if (!spec)
        throw ConfigError("key '" + e.key + "' refers to solver '" + tag +
                          "' which is not in the solvers list");
      apply_solver_key(spec->config, tag, skey, e.value, e.key);
      continue;
    }

    auto require_applies = [&]() {
      if (!contains(pkeys, e.key))
        throw ConfigError("key '" + e.key + "' does not apply to experiment '" +
                          cfg.experiment + "'");
    };
    if (e.key == "seed") {
      try {
        cfg.seed = parse_uint64(e.value);
      } catch (const ConfigError&) {
        throw ConfigError("seed: malformed unsigned integer '" + e.value + "'");
      }
    } else if (e.key == "out_dir") {
      cfg.out_dir = e.value;
    } else if (e.key == "stable_time") {
      cfg.stable_time = parse_bool(e.value, e.key);
    } else if (e.key == "d") {
      require_applies();
      cfg.d = parse_bounded_int(e.value, e.key, 1, 100'000);
    } else if (e.key == "n") {
      require_applies();
      cfg.n = parse_bounded_int(e.value, e.key, 1, 100'000'000);
    } else if (e.key == "r") {
      require_applies();
      cfg.r = parse_bounded_int(e.value, e.key, 1, 100'000);
    } else if (e.key == "k") {
      require_applies();
      cfg.k = parse_bounded_int(e.value, e.key, 1, 100'000);
    } else if (e.key == "c_q") {
      require_applies();
      cfg.c_q = parse_checked_double(e.value, e.key);
      if (cfg.c_q < 0) throw ConfigError("c_q must be >= 0");
    } else if (e.key == "c_l") {
      require_applies();
      cfg.c_l = parse_checked_double(e.value, e.key);
      if (cfg.c_l < 0) throw ConfigError("c_l must be >= 0");
    } else if (e.key == "alpha") {
      require_applies();
      cfg.alpha = parse_checked_double(e.value, e.key);
    } else if (e.key == "mu0") {
      require_applies();
      cfg.mu0 = parse_checked_double(e.value, e.key);
    } else if (e.key == "mu1") {
      require_applies();
      cfg.mu1 = parse_checked_double(e.value, e.key);
    } else if (e.key == "eps") {
      require_applies();
      cfg.eps = parse_checked_double(e.value, e.key);
    } else if (e.key == "spread") {
      require_applies();
      cfg.spread = parse_checked_double(e.value, e.key);
    } else {
      throw ConfigError("unknown key: " + e.key);
    }
  }

  validate(cfg);
  for (SolverSpec& s : cfg.solvers) s.config.seed = cfg.seed;
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  std::ostringstream out;
  out << "experiment = " << config.experiment << "\n";
  for (const std::string& key : problem_keys(config.experiment)) {
    out << key << " = ";
    if (key == "d") out << config.d;
    else if (key == "n") out << config.n;
    else if (key == "r") out << config.r;
    else if (key == "k") out << config.k;
    else if (key == "c_q") out << format_double(config.c_q);
    else if (key == "c_l") out << format_double(config.c_l);
    else if (key == "alpha") out << format_double(config.alpha);
    else if (key == "mu0") out << format_double(config.mu0);
    else if (key == "mu1") out << format_double(config.mu1);
    else if (key == "eps") out << format_double(config.eps);
    else if (key == "spread") out << format_double(config.spread);
    out << "\n";
  }
  out << "seed = " << config.seed << "\n";
  if (!config.out_dir.empty()) out << "out_dir = " << config.out_dir << "\n";
  out << "stable_time = " << (config.stable_time ? "true" : "false") << "\n";
  if (config.solvers.empty()) return out.str();

  out << "solvers = ";
  for (std::size_t i = 0; i < config.solvers.size(); ++i) {
    if (i) out << ", ";
    out << config.solvers[i].tag;
  }
  out << "\n";
  for (const SolverSpec& spec : config.solvers) {
    const SolverConfig d = default_config(spec.tag);
    const SolverConfig& c = spec.config;
    auto emit = [&](const char* k, const std::string& v) {
      out << spec.tag << "." << k << " = " << v << "\n";
    };
    if (c.max_iters != d.max_iters)
      emit("max_iters", std::to_string(c.max_iters));
    if (c.grad_tol != d.grad_tol) emit("grad_tol", format_double(c.grad_tol));
    if (c.step_rule != d.step_rule)
      emit("step_rule", step_rule_key(c.step_rule));
    if (c.eta != d.eta) emit("eta", format_double(c.eta));
    if (c.r1 != d.r1) emit("r1", format_double(c.r1));
    if (c.r2 != d.r2) emit("r2", format_double(c.r2));
    if (c.rho != d.rho) emit("rho", format_double(c.rho));
    if (c.decay_delta != d.decay_delta)
      emit("decay_delta", format_double(c.decay_delta));
    if (c.gamma != d.gamma) emit("gamma", format_double(c.gamma));
    if (c.batch_s != d.batch_s) emit("batch_s", std::to_string(c.batch_s));
    if (c.batch_s_prime != d.batch_s_prime)
      emit("batch_s_prime", std::to_string(c.batch_s_prime));
    if (c.use_retraction != d.use_retraction)
      emit("use_retraction", c.use_retraction ? "true" : "false");
    if (c.tr_delta0 != d.tr_delta0)
      emit("tr_delta0", format_double(c.tr_delta0));
    if (c.tr_delta_max != d.tr_delta_max)
      emit("tr_delta_max", format_double(c.tr_delta_max));
    if (c.tr_rho_accept != d.tr_rho_accept)
      emit("tr_rho_accept", format_double(c.tr_rho_accept));
    if (c.max_linesearch != d.max_linesearch)
      emit("max_linesearch", std::to_string(c.max_linesearch));
  }
  return out.str();
}

BuiltExperiment build_experiment(const ExperimentConfig& config) {
  BuiltExperiment built;
  const std::uint64_t data_seed = mix_seed(config.seed, 1);
  if (config.experiment == "quad_bilinear") {
    built.problem =
        std::make_unique<QuadBilinear>(config.d, config.c_q, config.c_l);
  } else if (config.experiment == "tracelog") {
    built.problem = std::make_unique<TraceLog>(config.d);
  } else if (config.experiment == "rgpca") {
    RgpcaData data = random_spd_dataset(config.n, config.d, config.mu0,
                                        config.mu1, data_seed);
    built.problem = std::make_unique<Rgpca>(std::move(data), config.alpha,
                                            config.mu0, config.mu1);
  } else if (config.experiment == "srwd") {
    SrwdData data = fragmented_hypercube(config.n, config.d, config.k, data_seed);
    built.problem = std::make_unique<Srwd>(std::move(data), config.r, config.eps);
  } else if (config.experiment == "stochastic_qb") {
    built.problem = std::make_unique<QbFiniteSum>(
        config.d, config.c_q, config.c_l, config.n, config.spread, data_seed);
  } else {
    throw ConfigError("unknown experiment: " + config.experiment);
  }
  Rng rng(mix_seed(config.seed, 2));
  built.p0 = built.problem->domain().random_point(rng);
  return built;
}

SolverTrace run_solver(const MinMaxProblem& problem, const Point& p0,
                       const SolverSpec& spec) {
  const std::string& tag = spec.tag;
  if (tag == "rgda") return rgda(problem, p0, spec.config);
  if (tag == "rceg") return rceg(problem, p0, spec.config);
  HamiltonianOracle oracle(problem);
  if (tag == "rhm_sd_f" || tag == "rhm_sd")
    return rhm_sd(oracle, p0, spec.config);
  if (tag == "rhm_con") return rhm_con(oracle, p0, spec.config);
  if (tag == "rhm_cg") return rhm_cg(oracle, p0, spec.config);
  if (tag == "rhm_tr") return rhm_tr(oracle, p0, spec.config);
  if (tag == "rhm_sgd") return rhm_sgd(oracle, p0, spec.config);
  if (tag == "rhm_scon") return rhm_scon(oracle, p0, spec.config);
  throw ConfigError("unknown solver tag: " + tag);
}

bool RunSummary::all_ok() const {
  for (const SolverSummary& s : solvers)
    if (s.status != SolveStatus::Converged && s.status != SolveStatus::MaxIters)
      return false;
  return true;
}

RunSummary run_experiment(const ExperimentConfig& config, bool parallel) {
  if (config.out_dir.empty())
    throw ConfigError(
        "no output directory: pass --out, set RHM_OUT, or set out_dir");

  BuiltExperiment built = build_experiment(config);
  const bool has_gap = built.problem->has_opt_gap();

  fs::create_directories(config.out_dir);

  struct Slot {
    SolverTrace trace;
    std::string error;
    bool threw = false;
  };
  std::vector<Slot> slots(config.solvers.size());
  auto work = [&](std::size_t i) {
    try {
      slots[i].trace = run_solver(*built.problem, built.p0, config.solvers[i]);
    } catch (const std::exception& e) {
      slots[i].threw = true;
      slots[i].error = e.what();
    }
  };
  if (parallel && config.solvers.size() > 1) {
    std::vector<std::thread> threads;
    threads.reserve(config.solvers.size());
    for (std::size_t i = 0; i < config.solvers.size(); ++i)
      threads.emplace_back(work, i);
    for (std::thread& t : threads) t.join();
  } else {
    for (std::size_t i = 0; i < config.solvers.size(); ++i) work(i);
  }

  RunSummary summary;
  nlohmann::ordered_json jsolvers = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < config.solvers.size(); ++i) {
    const SolverSpec& spec = config.solvers[i];
    SolverSummary s;
    if (slots[i].threw) {
      s = summarize(spec.tag, SolverTrace{}, config.stable_time);
      s.status = SolveStatus::Error;
      s.error_message = slots[i].error;
    } else {
      s = summarize(spec.tag, slots[i].trace, config.stable_time);
    }

    write_file(fs::path(config.out_dir) / (spec.tag + ".csv"),
               trace_to_csv(slots[i].trace, has_gap, config.stable_time));

    nlohmann::ordered_json js;
    js["status"] = to_string(s.status);
    js["iterations"] = s.iterations;
    js["final_grad_norm"] = s.final_grad_norm;
    if (has_gap) js["final_opt_gap"] = s.final_opt_gap;
    js["wall_time_s"] = s.wall_time_s;
    js["error"] = s.error_message;
    jsolvers[spec.tag] = std::move(js);

    summary.solvers.push_back(std::move(s));
  }

  nlohmann::ordered_json top;
  top["experiment"] = config.experiment;
  top["seed"] = config.seed;
  top["solvers"] = std::move(jsolvers);
  write_file(fs::path(config.out_dir) / "summary.json", top.dump(2) + "\n");

  if (config.experiment == "rgpca") {
    RgpcaData data = random_spd_dataset(config.n, config.d, config.mu0,
                                        config.mu1, mix_seed(config.seed, 1));
    std::ostringstream csv;
    data.to_csv(csv);
    write_file(fs::path(config.out_dir) / "dataset.csv", csv.str());
  } else if (config.experiment == "srwd") {
    SrwdData data = fragmented_hypercube(config.n, config.d, config.k,
                                         mix_seed(config.seed, 1));
    std::ostringstream csv;
    data.to_csv(csv);
    write_file(fs::path(config.out_dir) / "dataset.csv", csv.str());
  }

  return summary;
}

GoldenReport verify_golden(const ExperimentConfig& config,
                           const std::string& golden_dir) {
  BuiltExperiment built = build_experiment(config);
  const bool has_gap = built.problem->has_opt_gap();
  const std::vector<std::string> cols =
      has_gap ? std::vector<std::string>{"iter", "time_s", "step", "grad_norm",
                                         "hamiltonian", "opt_gap"}
              : std::vector<std::string>{"iter", "time_s", "step", "grad_norm",
                                         "hamiltonian"};

  GoldenReport report;
  int files = 0;
  for (const SolverSpec& spec : config.solvers) {
    const fs::path path = fs::path(golden_dir) / (spec.tag + ".csv");
    if (!fs::exists(path))
      throw MissingGolden("missing golden trace: " + path.string());
    const std::vector<std::string> lines = split_lines(read_file(path));
    if (lines.empty() || lines[0] != csv_header(has_gap)) {
      report.message = spec.tag + ".csv: header mismatch";
      return report;
    }

    SolverTrace trace;
    try {
      trace = run_solver(*built.problem, built.p0, spec);
    } catch (const Error& e) {
      report.message = spec.tag + ": solver failed: " + e.what();
      return report;
    }

    if (lines.size() - 1 != trace.records.size()) {
      report.message = spec.tag + ".csv: golden has " +
                       std::to_string(lines.size() - 1) + " rows, current has " +
                       std::to_string(trace.records.size());
      return report;
    }
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
      const std::vector<std::string> cells = split_csv_line(lines[1 + i]);
      if (cells.size() != cols.size()) {
        report.message =
            spec.tag + ".csv: row " + std::to_string(i) + ": cell count";
        return report;
      }
      const TraceRecord& r = trace.records[i];
      for (std::size_t j = 0; j < cols.size(); ++j) {
        if (cols[j] == "time_s") continue;
        if (cols[j] == "iter") {
          if (parse_int(cells[j]) != r.iter) {
            report.message = spec.tag + ".csv: row " + std::to_string(i) +
                             ", column iter: golden " + cells[j] +
                             ", current " + std::to_string(r.iter);
            return report;
          }
          continue;
        }
        double current = 0.0;
        if (cols[j] == "step") current = r.step;
        else if (cols[j] == "grad_norm") current = r.grad_norm;
        else if (cols[j] == "hamiltonian") current = r.hamiltonian;
        else current = r.opt_gap;
        const double golden = parse_double(cells[j]);
        if (!rel_close(golden, current, 1e-9)) {
          report.message = spec.tag + ".csv: row " + std::to_string(i) +
                           ", column " + cols[j] + ": golden " + cells[j] +
                           ", current " + format_double(current);
          return report;
        }
      }
    }
    ++files;
  }
  report.pass = true;
  report.message = std::to_string(files) + " trace(s) match";
  return report;
}

}  // namespace rhm
