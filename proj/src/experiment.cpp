#include "dissipasynth/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "dissipasynth/analysis.hpp"

namespace dissipasynth {

namespace fs = std::filesystem;

namespace {

const Json* find(const Json& j, const char* key) {
  if (!j.is_object()) return nullptr;
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

const Json& need(const Json& j, const char* key, const std::string& where) {
  const Json* v = find(j, key);
  if (!v) throw ConfigError(where + ": missing \"" + key + "\"");
  return *v;
}

double number(const Json& v, const std::string& what) {
  if (!v.is_number()) throw ConfigError(what + " must be a number");
  return v.get<double>();
}

int positive_int(const Json& v, const std::string& what) {
  if (!v.is_number_integer() || v.get<long long>() < 1 || v.get<long long>() > 1000000)
    throw ConfigError(what + " must be a positive integer");
  return v.get<int>();
}

std::uint64_t seed_value(const Json& v, const std::string& what) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    throw ConfigError(what + " must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

Matrix matrix(const Json& v, const std::string& what, Eigen::Index rows = -1,
              Eigen::Index cols = -1) {
  try {
    Matrix m = matrix_from_json(v, what, rows, cols);
    if (rows >= 0 && cols >= 0) require_shape(m, rows, cols, what);
    return m;
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  } catch (const DimensionError& e) {
    throw ConfigError(e.what());
  }
}

Matrix optional_matrix(const Json& j, const char* key, Eigen::Index rows, Eigen::Index cols) {
  const Json* v = find(j, key);
  return v ? matrix(*v, std::string("plant.") + key, rows, cols) : Matrix(Matrix::Zero(rows, cols));
}

Plant parse_plant(const Json& j) {
  Plant p;
  p.A = matrix(need(j, "A", "plant"), "plant.A");
  const auto n = p.A.rows();
  p.B = matrix(need(j, "B", "plant"), "plant.B");
  p.B1 = matrix(need(j, "B1", "plant"), "plant.B1");
  p.C1 = matrix(need(j, "C1", "plant"), "plant.C1");
  p.C = matrix(need(j, "C", "plant"), "plant.C");
  const auto m = p.B.cols(), pw = p.B1.cols(), q = p.C1.rows(), l = p.C.rows();
  if (p.B.rows() != n || p.B1.rows() != n || p.C1.cols() != n || p.C.cols() != n)
    throw ConfigError("plant: B, B1, C1 and C must match the size of A");
  p.D1 = optional_matrix(j, "D1", q, pw);
  p.E = optional_matrix(j, "E", q, m);
  p.F = optional_matrix(j, "F", l, pw);
  try {
    p.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("plant: ") + e.what());
  }
  return p;
}

Json load_json(const fs::path& path) {
  try {
    return read_json_file(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
}

void parse_recording(const Json& j, const fs::path& base, ExperimentConfig& cfg) {
  const std::string where = "recording";
  cfg.N = positive_int(need(j, "N", where), "recording.N");
  const auto n = cfg.plant.n(), m = cfg.plant.m();
  cfg.x0 = Vector::Zero(n);
  if (const Json* x0 = find(j, "x0")) {
    Matrix v = matrix(*x0, "recording.x0");
    if (v.size() != n) throw ConfigError("recording.x0 must have n entries");
    cfg.x0 = Eigen::Map<const Vector>(v.data(), n);
  }
  if (const Json* in = find(j, "input")) {
    const std::string policy = in->value("policy", std::string("prbs"));
    if (const Json* a = find(*in, "amplitude")) cfg.input.amplitude = number(*a, "input.amplitude");
    if (const Json* f = find(*in, "frequency")) cfg.input.frequency = number(*f, "input.frequency");
    if (policy == "prbs") {
      cfg.input.policy = InputSpec::Policy::prbs;
    } else if (policy == "sine") {
      cfg.input.policy = InputSpec::Policy::sine;
    } else if (policy == "values" || policy == "file") {
      cfg.input.policy = InputSpec::Policy::values;
      const Json src = policy == "file"
                           ? need(load_json(base / need(*in, "file", "input").get<std::string>()), "u",
                                  "input file")
                           : need(*in, "values", "input");
      cfg.input.values = matrix(src, "input values", m, cfg.N);
    } else {
      throw ConfigError("input.policy must be prbs, sine, values or file");
    }
  }
  const Json& noise = need(j, "noise", where);
  cfg.energy_eps = number(need(noise, "energy_eps", "noise"), "noise.energy_eps");
  if (!(cfg.energy_eps > 0.0)) throw ConfigError("energy_eps must be positive");
  if (const Json* s = find(noise, "seed")) cfg.noise_seed = seed_value(*s, "noise.seed");
  if (const Json* f = find(noise, "fill")) {
    cfg.noise_fill = number(*f, "noise.fill");
    if (cfg.noise_fill < 0.0 || cfg.noise_fill > 1.0) throw ConfigError("noise.fill must lie in [0, 1]");
  }
}

void parse_supply(const Json& j, ExperimentConfig& cfg) {
  const Json* h = find(j, "hinf");
  const Json* g = find(j, "general");
  if ((h != nullptr) == (g != nullptr)) throw ConfigError("supply: exactly one of hinf or general");
  if (h) {
    const Json* gamma = find(*h, "gamma");
    const bool minimize = find(*h, "minimize") && (*h)["minimize"].is_boolean() && (*h)["minimize"].get<bool>();
    if ((gamma != nullptr) == minimize) throw ConfigError("supply.hinf: give either gamma or minimize=true");
    if (gamma) {
      cfg.supply.mode = SupplySpec::Mode::hinf_gamma;
      cfg.supply.gamma = number(*gamma, "supply.hinf.gamma");
      if (!(cfg.supply.gamma > 0.0)) throw ConfigError("supply.hinf.gamma must be positive");
    } else {
      cfg.supply.mode = SupplySpec::Mode::hinf_minimize;
    }
    return;
  }
  const auto p = cfg.plant.p(), q = cfg.plant.q();
  cfg.supply.mode = SupplySpec::Mode::general;
  cfg.supply.Q = matrix(need(*g, "Q", "supply.general"), "supply.Q", p, p);
  cfg.supply.S = matrix(need(*g, "S", "supply.general"), "supply.S", p, q);
  cfg.supply.R = matrix(need(*g, "R", "supply.general"), "supply.R", q, q);
}

void parse_synthesis(const Json& j, ExperimentConfig& cfg) {
  if (const Json* a = find(j, "alpha")) {
    const std::string strategy = a->value("strategy", std::string("default"));
    if (strategy == "default") {
      cfg.alpha.kind = AlphaStrategy::Kind::grid_then_golden;
    } else if (strategy == "grid") {
      cfg.alpha.kind = AlphaStrategy::Kind::grid;
    } else if (strategy == "golden") {
      cfg.alpha.kind = AlphaStrategy::Kind::golden;
    } else {
      throw ConfigError("synthesis.alpha.strategy must be default, grid or golden");
    }
    if (const Json* v = find(*a, "lo")) cfg.alpha.lo = number(*v, "alpha.lo");
    if (const Json* v = find(*a, "hi")) cfg.alpha.hi = number(*v, "alpha.hi");
    if (const Json* v = find(*a, "steps")) cfg.alpha.steps = positive_int(*v, "alpha.steps");
    if (const Json* v = find(*a, "iters")) cfg.alpha.iters = positive_int(*v, "alpha.iters");
    if (!(cfg.alpha.lo > 0.0) || !(cfg.alpha.hi >= cfg.alpha.lo))
      throw ConfigError("synthesis.alpha: need 0 < lo <= hi");
  }
  if (const Json* t = find(j, "tolerances")) {
    if (const Json* v = find(*t, "feas_tol")) cfg.options.sdp.feas_tol = number(*v, "feas_tol");
    if (const Json* v = find(*t, "gap_tol")) cfg.options.sdp.gap_tol = number(*v, "gap_tol");
    if (const Json* v = find(*t, "max_iter")) cfg.options.sdp.max_iter = positive_int(*v, "max_iter");
    if (const Json* v = find(*t, "accept_slack")) cfg.options.accept_slack = number(*v, "accept_slack");
    if (const Json* v = find(*t, "gamma_backoff")) cfg.options.gamma_backoff = number(*v, "gamma_backoff");
    if (const Json* v = find(*t, "storage_bound")) {
      cfg.options.storage_bound = number(*v, "storage_bound");
      if (!(cfg.options.storage_bound >= 0.0)) throw ConfigError("storage_bound must be nonnegative");
    }
  }
  if (const Json* u = find(j, "U")) {
    if (!(u->is_string() && u->get<std::string>() == "identity"))
      cfg.U = matrix(*u, "synthesis.U", cfg.plant.n(), cfg.plant.n());
  }
}

}  // namespace

AlphaStrategy parse_alpha_grid(const std::string& text) {
  double lo = 0.0, hi = 0.0;
  int steps = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lf:%lf:%d%c", &lo, &hi, &steps, &tail) != 3)
    throw ConfigError("--alpha-grid expects lo:hi:steps");
  if (!(lo > 0.0) || !(hi >= lo) || steps < 1) throw ConfigError("--alpha-grid: need 0 < lo <= hi, steps >= 1");
  return AlphaStrategy::grid(lo, hi, steps);
}

ExperimentConfig parse_config(const Json& j, const fs::path& base, const CliOverrides& ov) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig cfg;
  if (const Json* s = find(j, "seed")) cfg.seed = seed_value(*s, "seed");
  if (const Json* pf = find(j, "plant_file")) {
    if (find(j, "plant")) throw ConfigError("give plant or plant_file, not both");
    cfg.plant = parse_plant(load_json(base / pf->get<std::string>()));
  } else {
    cfg.plant = parse_plant(need(j, "plant", "config"));
  }
  parse_recording(need(j, "recording", "config"), base, cfg);
  parse_supply(need(j, "supply", "config"), cfg);
  if (const Json* s = find(j, "synthesis")) parse_synthesis(*s, cfg);
  if (const Json* v = find(j, "verification")) {
    if (const Json* s = find(*v, "samples")) {
      if (!s->is_number_integer() || s->get<long long>() < 0) throw ConfigError("verification.samples must be >= 0");
      cfg.samples = s->get<int>();
    }
    if (const Json* g = find(*v, "grid_size")) cfg.grid_size = positive_int(*g, "verification.grid_size");
    if (cfg.grid_size < 2) throw ConfigError("verification.grid_size must be at least 2");
    if (const Json* s = find(*v, "seed")) cfg.verify_seed = seed_value(*s, "verification.seed");
  }
  if (const Json* o = find(j, "output_dir")) cfg.output_dir = o->get<std::string>();

  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.out) cfg.output_dir = *ov.out;
  if (ov.alpha_grid) cfg.alpha = *ov.alpha_grid;
  if (ov.solver_tol) {
    if (!(*ov.solver_tol > 0.0)) throw ConfigError("DISSIPASYNTH_SOLVER_TOL must be positive");
    cfg.options.sdp.feas_tol = *ov.solver_tol;
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path, const CliOverrides& ov) {
  const Json j = load_json(path);
  try {
    return parse_config(j, path.parent_path(), ov);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

DataRecord generate_record(const ExperimentConfig& cfg) {
  const auto m = cfg.plant.m(), p = cfg.plant.p();
  const auto N = static_cast<Eigen::Index>(cfg.N);
  Matrix Um(m, N);
  switch (cfg.input.policy) {
    case InputSpec::Policy::prbs: {
      std::mt19937_64 rng(cfg.input_seed());
      std::bernoulli_distribution coin(0.5);
      for (Eigen::Index k = 0; k < N; ++k)
        for (Eigen::Index i = 0; i < m; ++i) Um(i, k) = coin(rng) ? cfg.input.amplitude : -cfg.input.amplitude;
      break;
    }
    case InputSpec::Policy::sine:
      for (Eigen::Index k = 0; k < N; ++k)
        for (Eigen::Index i = 0; i < m; ++i)
          Um(i, k) = cfg.input.amplitude *
                     std::sin(cfg.input.frequency * static_cast<double>((i + 1) * k) + 0.5 * static_cast<double>(i));
      break;
    case InputSpec::Policy::values:
      Um = cfg.input.values;
      break;
  }

  Matrix W = Matrix::Zero(p, N);
  if (cfg.noise_fill > 0.0) {
    std::mt19937_64 rng(cfg.effective_noise_seed());
    std::uniform_real_distribution<double> u(-cfg.energy_eps, cfg.energy_eps);
    for (Eigen::Index k = 0; k < N; ++k)
      for (Eigen::Index i = 0; i < p; ++i) W(i, k) = u(rng);
    // Largest singular value of W bounds sqrt(lambda_max(sum w w^T)).
    const double sigma = W.size() ? Eigen::JacobiSVD<Matrix>(W).singularValues()(0) : 0.0;
    const double cap = cfg.noise_fill * cfg.energy_eps * std::sqrt(static_cast<double>(N));
    if (sigma > cap) W *= cap / sigma;
  }

  std::vector<Vector> us, ws;
  for (Eigen::Index k = 0; k < N; ++k) {
    us.emplace_back(Um.col(k));
    ws.emplace_back(W.col(k));
  }
  return record(cfg.plant, us, ws, cfg.x0);
}

namespace {

SupplyRate configured_supply(const ExperimentConfig& cfg) {
  const auto p = cfg.plant.p(), q = cfg.plant.q();
  switch (cfg.supply.mode) {
    case SupplySpec::Mode::hinf_gamma:
      return hinf_supply(cfg.supply.gamma, p, q);
    case SupplySpec::Mode::hinf_minimize:
      return hinf_supply(1.0, p, q);
    case SupplySpec::Mode::general:
      return supply_factor(cfg.supply.Q, cfg.supply.S, cfg.supply.R);
  }
  return {};
}

SynthesisIngredients build_ingredients(const ExperimentConfig& cfg, const DataRecord& rec,
                                       AssumptionReport* report) {
  if (rec.n() != cfg.plant.n() || rec.m() != cfg.plant.m())
    throw ConfigError("record dimensions do not match the plant");
  if (rec.horizon() != cfg.N) throw ConfigError("record length does not match recording.N");
  const DisturbanceBound bound = energy_phi(cfg.energy_eps, rec.horizon(), cfg.plant.p());
  ConsistencySet cs = build_phi_tilde(rec, bound, cfg.plant.B1);
  const AssumptionReport rep = check_assumptions(rec, cs);
  if (report) *report = rep;
  if (!rep.rank_ok) throw ConfigError("data not informative: rank [X-; U-] = " + std::to_string(rep.rank));
  if (!rep.k22_negdef) throw ConfigError("data not informative: K22 block is not negative definite");
  if (!rep.sigma_nonempty) throw ConfigError("consistency set is empty");
  nominal_system(cs);
  residual_factor(cs);
  return SynthesisIngredients::from_plant(std::move(cs), configured_supply(cfg), cfg.plant);
}

}  // namespace

SynthesisIngredients ingredients(const ExperimentConfig& cfg, const DataRecord& rec) {
  return build_ingredients(cfg, rec, nullptr);
}

std::optional<Stage> parse_stage(const std::string& name) {
  if (name == "run") return Stage::run;
  if (name == "record") return Stage::record;
  if (name == "synth") return Stage::synth;
  if (name == "verify") return Stage::verify;
  if (name == "sweep") return Stage::sweep;
  return std::nullopt;
}

namespace {

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::run: return "run";
    case Stage::record: return "record";
    case Stage::synth: return "synth";
    case Stage::verify: return "verify";
    case Stage::sweep: return "sweep";
  }
  return "?";
}

class Runner {
 public:
  Runner(const ExperimentConfig& cfg, std::ostream& events) : cfg_(cfg), events_(events) {}

  void emit(Json ev) { events_ << ev.dump() << '\n' << std::flush; }

  fs::path out(const char* name) const { return cfg_.output_dir / name; }

  int record() {
    const DataRecord rec = generate_record(cfg_);
    write_json_file(out("record.json"), to_json(rec, cfg_.plant.p()));
    emit({{"event", "wrote"}, {"file", "record.json"}, {"N", rec.horizon()}});
    return kExitOk;
  }

  DataRecord load_record() const {
    const fs::path path = out("record.json");
    if (!fs::exists(path)) throw ConfigError("missing intermediate file " + path.string());
    const Json j = read_json_file(path);
    if (j.value("p", -1) != cfg_.plant.p()) throw ConfigError("record.json: p does not match the plant");
    return record_from_json(j);
  }

  Objective objective() const {
    return cfg_.supply.mode == SupplySpec::Mode::hinf_minimize ? Objective::minimize_gamma_sq
                                                               : Objective::feasibility;
  }

  int synth() {
    const DataRecord rec = load_record();
    AssumptionReport rep;
    const SynthesisIngredients ing = build_ingredients(cfg_, rec, &rep);
    write_json_file(out("consistency.json"), to_json(ing.cs, rep));
    emit({{"event", "consistency"}, {"ntilde", ing.cs.ntilde()}});
    try {
      const SynthesisResult res = search_alpha(ing, cfg_.alpha, objective(), cfg_.options, Exec::parallel, cfg_.U);
      write_text_file(out("alpha_trace.csv"), alpha_trace_csv(res.trace));
      Json j;
      j["objective"] = objective() == Objective::minimize_gamma_sq ? "minimize_gamma" : "feasibility";
      j["alpha"] = res.vars.alpha;
      j["gamma"] = res.gamma ? Json(*res.gamma)
                             : cfg_.supply.mode == SupplySpec::Mode::hinf_gamma ? Json(cfg_.supply.gamma)
                                                                                : Json(nullptr);
      j["slack"] = res.slack;
      j["vars"] = to_json(res.vars);
      j["U"] = matrix_to_json(res.U);
      j["controller"] = to_json(res.controller);
      write_json_file(out("result.json"), j);
      emit({{"event", "synthesized"}, {"alpha", res.vars.alpha}, {"gamma", j["gamma"]},
            {"trace_points", res.trace.size()}});
      return kExitOk;
    } catch (const SynthesisInfeasible& e) {
      write_text_file(out("alpha_trace.csv"), alpha_trace_csv(e.trace()));
      fs::remove(out("result.json"));
      emit({{"event", "infeasible"}, {"message", e.what()}, {"trace_points", e.trace().size()}});
      return kExitInfeasible;
    }
  }

  int verify() {
    const DataRecord rec = load_record();
    const fs::path rpath = out("result.json");
    if (!fs::exists(rpath)) throw ConfigError("missing intermediate file " + rpath.string());
    const Json res = read_json_file(rpath);
    const Controller ctrl = controller_from_json(need(res, "controller", "result.json"));
    SynthesisIngredients ing = build_ingredients(cfg_, rec, nullptr);
    try {
      ctrl.validate_against(cfg_.plant);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("result.json controller: ") + e.what());
    }
    if (cfg_.supply.mode == SupplySpec::Mode::hinf_minimize) {
      const Json& g = need(res, "gamma", "result.json");
      if (!g.is_number() || !(g.get<double>() > 0.0)) throw ConfigError("result.json: gamma must be positive");
      ing.supply = hinf_supply(g.get<double>(), cfg_.plant.p(), cfg_.plant.q());
    }
    const WorstCaseReport rep = worst_case_check(ing, ctrl, cfg_.samples, cfg_.effective_verify_seed(),
                                                 Exec::parallel, cfg_.grid_size, cfg_.options.sdp);
    Json j = to_json(rep);
    j["gamma"] = res.contains("gamma") ? res["gamma"] : Json(nullptr);
    write_json_file(out("report.json"), j);
    for (std::size_t i = 0; i < rep.verdicts.size(); ++i) {
      char name[64];
      if (i == 0) {
        std::snprintf(name, sizeof(name), "gain_curve.csv");
      } else {
        std::snprintf(name, sizeof(name), "gain_curve_sample_%03zu.csv", i);
      }
      write_text_file(out(name), gain_curve_csv(rep.verdicts[i].curve));
    }
    emit({{"event", "verified"}, {"all_certified", rep.all_certified},
          {"worst_peak_gain", number_or_null(rep.worst_peak_gain)}, {"samples", rep.samples}});
    return kExitOk;
  }

  int sweep() {
    const DataRecord rec = load_record();
    const SynthesisIngredients ing = build_ingredients(cfg_, rec, nullptr);
    try {
      const SynthesisResult res = search_alpha(ing, cfg_.alpha, objective(), cfg_.options, Exec::parallel, cfg_.U);
      write_text_file(out("alpha_trace.csv"), alpha_trace_csv(res.trace));
      emit({{"event", "sweep"}, {"trace_points", res.trace.size()}, {"best_alpha", res.vars.alpha}});
      return kExitOk;
    } catch (const SynthesisInfeasible& e) {
      write_text_file(out("alpha_trace.csv"), alpha_trace_csv(e.trace()));
      emit({{"event", "infeasible"}, {"message", e.what()}, {"trace_points", e.trace().size()}});
      return kExitInfeasible;
    }
  }

  int run() {
    int code = record();
    if (code == kExitOk) code = synth();
    if (code == kExitOk) code = verify();
    return code;
  }

 private:
  const ExperimentConfig& cfg_;
  std::ostream& events_;
};

void error_event(std::ostream& events, const char* kind, const std::string& message) {
  events << Json{{"event", "error"}, {"kind", kind}, {"message", message}}.dump() << '\n' << std::flush;
}

}  // namespace

int run_stage(Stage stage, const fs::path& config_path, const CliOverrides& overrides,
              std::ostream& events) {
  try {
    const ExperimentConfig cfg = load_config(config_path, overrides);
    Runner runner(cfg, events);
    const auto t0 = std::chrono::steady_clock::now();
    runner.emit({{"event", "start"}, {"stage", stage_name(stage)}, {"config", config_path.string()},
                 {"seed", cfg.seed}});
    int code = kExitOk;
    switch (stage) {
      case Stage::run: code = runner.run(); break;
      case Stage::record: code = runner.record(); break;
      case Stage::synth: code = runner.synth(); break;
      case Stage::verify: code = runner.verify(); break;
      case Stage::sweep: code = runner.sweep(); break;
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    runner.emit({{"event", "done"}, {"stage", stage_name(stage)}, {"exit", code}, {"elapsed_ms", ms}});
    return code;
  } catch (const ConfigError& e) {
    error_event(events, "config", e.what());
  } catch (const FormatError& e) {
    error_event(events, "format", e.what());
  } catch (const PreconditionError& e) {
    error_event(events, "precondition", e.what());
  } catch (const DimensionError& e) {
    error_event(events, "dimension", e.what());
  } catch (const NumericalError& e) {
    error_event(events, "numerical", e.what());
  } catch (const Json::exception& e) {
    error_event(events, "format", e.what());
  } catch (const fs::filesystem_error& e) {
    error_event(events, "io", e.what());
  }
  return kExitConfig;
}

}  // namespace dissipasynth
