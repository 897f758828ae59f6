#include "sev/run.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <locale>
#include <map>
#include <sstream>

#include "sev/errors.hpp"
#include "sev/version.hpp"

namespace sev {

using json = nlohmann::json;

Task parse_task(const std::string& name) {
  if (name == "verify") return Task::verify;
  if (name == "hardy") return Task::hardy;
  if (name == "spectrum") return Task::spectrum;
  if (name == "solve") return Task::solve;
  if (name == "multi") return Task::multi;
  if (name == "normalized") return Task::normalized;
  if (name == "normalized-multi") return Task::normalized_multi;
  throw config_error("unknown task '" + name + "'");
}

namespace {

const json* find(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

double num_or(const json& j, const char* key, double fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_number()) throw config_error(std::string("field '") + key + "' must be a number");
  return v->get<double>();
}

int int_or(const json& j, const char* key, int fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_number_integer())
    throw config_error(std::string("field '") + key + "' must be an integer");
  return v->get<int>();
}

bool bool_or(const json& j, const char* key, bool fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_boolean()) throw config_error(std::string("field '") + key + "' must be a boolean");
  return v->get<bool>();
}

std::array<double, 3> triple(const json& j, const char* key) {
  const json* v = find(j, key);
  if (!v || !v->is_array() || v->size() != 3)
    throw config_error(std::string("field '") + key + "' must be an array of 3 numbers");
  return {(*v)[0].get<double>(), (*v)[1].get<double>(), (*v)[2].get<double>()};
}

// gamma/theta entries: plain number or {"csv": "path"}
void parse_table_field(const json& block, const char* key, double& scalar,
                       std::filesystem::path& csv, const std::filesystem::path& base) {
  const json* v = find(block, key);
  if (!v) return;
  if (v->is_number()) {
    scalar = v->get<double>();
    return;
  }
  if (v->is_object() && find(*v, "csv")) {
    std::filesystem::path p = (*find(*v, "csv")).get<std::string>();
    csv = p.is_absolute() ? p : base / p;
    return;
  }
  throw config_error(std::string("field '") + key + "' must be a number or {\"csv\": path}");
}

Vec load_node_table(const std::filesystem::path& path, Eigen::Index n) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot read node table " + path.string());
  std::map<Eigen::Index, double> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Eigen::Index idx;
    char comma;
    double val;
    if (!(ls >> idx >> comma >> val))
      throw config_error("malformed node table line in " + path.string() + ": " + line);
    entries[idx] = val;
  }
  Vec out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto it = entries.find(i);
    if (it == entries.end())
      throw config_error("node table " + path.string() + " misses index " +
                         std::to_string(i));
    out[i] = it->second;
  }
  return out;
}

json versions() {
  return json{{"artifact", SEV_VERSION_STRING},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                            std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)}};
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

}  // namespace

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw config_error("config root must be a JSON object");
  RunConfig cfg;
  cfg.echo = doc;

  const json* task = find(doc, "task");
  if (task && task->is_string()) cfg.task = parse_task(task->get<std::string>());

  const json* dom = find(doc, "domain");
  if (!dom || !dom->is_object()) throw config_error("config needs a 'domain' block");
  const std::string variant = find(*dom, "variant")
                                  ? (*find(*dom, "variant")).get<std::string>()
                                  : std::string("ball");
  if (variant == "ball") {
    cfg.domain = DomainSpec::ball(num_or(*dom, "radius", 1.0), int_or(*dom, "dim", 3));
  } else if (variant == "box") {
    cfg.domain = DomainSpec::box(triple(*dom, "lo"), triple(*dom, "hi"));
  } else {
    throw config_error("domain variant must be 'ball' or 'box'");
  }
  cfg.resolution = int_or(*dom, "resolution", 0);
  if (cfg.resolution < 8) throw config_error("domain.resolution must be at least 8");

  if (const json* reg = find(doc, "region_k")) {
    const std::string rv = find(*reg, "variant")
                               ? (*find(*reg, "variant")).get<std::string>()
                               : std::string("empty");
    if (rv == "empty") cfg.region = RegionK::empty();
    else if (rv == "annulus")
      cfg.region = RegionK::annulus(num_or(*reg, "r_lo", 0.0), num_or(*reg, "r_hi", 0.0));
    else if (rv == "subbox") cfg.region = RegionK::subbox(triple(*reg, "lo"), triple(*reg, "hi"));
    else throw config_error("region_k variant must be 'empty', 'annulus' or 'subbox'");
  }

  if (const json* pot = find(doc, "potentials")) {
    cfg.mu = num_or(*pot, "mu", 0.0);
    cfg.nu = num_or(*pot, "nu", 0.0);
    cfg.lambda = num_or(*pot, "lambda", 0.0);
  }

  double p = 4.0, u0 = 1.0;
  bool odd = true;
  bool zero_family = false;
  if (const json* nl = find(doc, "nonlinearity")) {
    const std::string family = find(*nl, "family")
                                   ? (*find(*nl, "family")).get<std::string>()
                                   : std::string("saturating");
    if (family == "zero") zero_family = true;
    else if (family != "saturating")
      throw config_error("nonlinearity family must be 'saturating' or 'zero'");
    p = num_or(*nl, "p", 4.0);
    u0 = num_or(*nl, "u0", 1.0);
    odd = bool_or(*nl, "odd", true);
    parse_table_field(*nl, "gamma", cfg.gamma_const, cfg.gamma_csv, base_dir);
    parse_table_field(*nl, "theta", cfg.theta_const, cfg.theta_csv, base_dir);
  }
  if (zero_family) {
    cfg.gamma_const = 0.0;
    cfg.theta_const = 0.0;
    cfg.gamma_csv.clear();
    cfg.theta_csv.clear();
  }
  cfg.spec = NonlinearitySpec::make(p, Vec::Constant(1, cfg.gamma_const),
                                    Vec::Constant(1, cfg.theta_const), u0, odd);

  if (const json* sol = find(doc, "solver")) {
    cfg.solver.max_iter = int_or(*sol, "max_iter", cfg.solver.max_iter);
    cfg.solver.cerami_tol = num_or(*sol, "cerami_tol", cfg.solver.cerami_tol);
    cfg.solver.step_init = num_or(*sol, "step_init", cfg.solver.step_init);
    cfg.solver.step_shrink = num_or(*sol, "step_shrink", cfg.solver.step_shrink);
    cfg.solver.armijo = num_or(*sol, "armijo", cfg.solver.armijo);
    cfg.solver.path_nodes = int_or(*sol, "path_nodes", cfg.solver.path_nodes);
    cfg.solver.norm_cap = num_or(*sol, "norm_cap", cfg.solver.norm_cap);
    cfg.solver.separation_rel = num_or(*sol, "separation_tol", cfg.solver.separation_rel);
    cfg.solver.seed = static_cast<std::uint64_t>(
        int_or(*sol, "seed", static_cast<int>(cfg.solver.seed)));
    cfg.solver.newton_max = int_or(*sol, "newton_max", cfg.solver.newton_max);
    if (const json* m = find(*sol, "method")) cfg.method = m->get<std::string>();
    if (cfg.solver.path_nodes < 11)
      throw config_error("solver.path_nodes must be at least 11");
  }
  // accepted both at top level and inside the solver block; the block wins
  if (const json* m = find(doc, "method"))
    if (!find(doc, "solver") || !find(*find(doc, "solver"), "method"))
      cfg.method = m->get<std::string>();
  if (cfg.method != "mountain-pass" && cfg.method != "nehari")
    throw config_error("solver.method must be 'mountain-pass' or 'nehari'");

  cfg.rho = num_or(doc, "rho", 1.0);
  if (!(cfg.rho > 0.0)) throw config_error("rho must be positive");
  cfg.count = int_or(doc, "count", 1);
  if (cfg.count < 1) throw config_error("count must be at least 1");
  if (const json* sp = find(doc, "spectrum")) {
    cfg.spectrum_k = int_or(*sp, "k", cfg.spectrum_k);
    cfg.spectrum_tol = num_or(*sp, "tol", cfg.spectrum_tol);
  }
  if (cfg.spectrum_k < 1) throw config_error("spectrum.k must be at least 1");
  if (const json* o = find(doc, "output")) {
    if (const json* d = find(*o, "dir")) {
      std::filesystem::path p = d->get<std::string>();
      cfg.out_dir = p.is_absolute() ? p : base_dir / p;
    }
  }
  return cfg;
}

void emit_solution(const SolutionReport& report, const Grid& grid,
                   const std::filesystem::path& dir, const std::string& base,
                   const json& summary, bool log_iterates) {
  std::ofstream csv(dir / (base + ".csv"));
  if (!csv) throw config_error("cannot write " + (dir / (base + ".csv")).string());
  csv.imbue(std::locale::classic());
  csv << std::setprecision(17);
  if (grid.radial()) {
    csv << "r,u,d,abs_x\n";
    for (Eigen::Index i = 0; i < grid.n(); ++i)
      csv << grid.coords(i, 0) << "," << report.u[i] << "," << grid.dist_boundary[i] << ","
          << grid.dist_origin[i] << "\n";
  } else {
    csv << "x,y,z,u,d,abs_x\n";
    for (Eigen::Index i = 0; i < grid.n(); ++i)
      csv << grid.coords(i, 0) << "," << grid.coords(i, 1) << "," << grid.coords(i, 2)
          << "," << report.u[i] << "," << grid.dist_boundary[i] << ","
          << grid.dist_origin[i] << "\n";
  }
  if (!summary.is_null()) write_json(dir / (base + "_summary.json"), summary);
  if (log_iterates) {
    std::ofstream nd(dir / (base + "_iterates.ndjson"));
    if (!nd) throw config_error("cannot write iterate log");
    for (const IterRecord& r : report.trace)
      nd << json{{"iteration", r.iter},
                 {"energy", r.energy},
                 {"residual", r.residual},
                 {"step", r.step}}
                .dump()
         << "\n";
  }
}

namespace {

json solution_json(const SolutionReport& rep) {
  json j{{"energy", rep.energy},
         {"cerami_residual", rep.cerami_residual},
         {"nehari_residual", rep.nehari_residual},
         {"iterations", rep.iterations},
         {"converged", rep.converged},
         {"seed", rep.seed_note},
         {"level_bracket",
          {{"sphere_radius", rep.bracket.sphere_radius},
           {"sphere_inf", rep.bracket.sphere_inf},
           {"ray_level", rep.bracket.q_ray_level}}}};
  if (std::isfinite(rep.multiplier)) {
    j["multiplier"] = rep.multiplier;
    j["mass_drift"] = rep.mass_drift;
  }
  return j;
}

struct GateEntry {
  std::string clause;
  bool pass = false;
  std::string message;
};

struct GateResult {
  std::vector<GateEntry> entries;
  json report;
  bool passed() const {
    return std::all_of(entries.begin(), entries.end(),
                       [](const GateEntry& e) { return e.pass; });
  }
};

// everything the task pipeline shares after parsing
struct Workspace {
  RunConfig cfg;
  std::shared_ptr<Grid> grid;
  std::shared_ptr<OperatorSet> ops;
  std::vector<std::uint8_t> mask;
  bool log_iterates = false;
};

void finalize_tables(Workspace& ws) {
  RunConfig& cfg = ws.cfg;
  Vec gamma = cfg.gamma_csv.empty() ? Vec::Constant(1, cfg.gamma_const)
                                    : load_node_table(cfg.gamma_csv, ws.grid->n());
  Vec theta = cfg.theta_csv.empty() ? Vec::Constant(1, cfg.theta_const)
                                    : load_node_table(cfg.theta_csv, ws.grid->n());
  cfg.spec = NonlinearitySpec::make(cfg.spec.p, std::move(gamma), std::move(theta),
                                    cfg.spec.u0, cfg.spec.odd);
}

bool mask_any(const std::vector<std::uint8_t>& m) {
  return std::any_of(m.begin(), m.end(), [](std::uint8_t v) { return v != 0; });
}

bool mask_all(const std::vector<std::uint8_t>& m) {
  return std::all_of(m.begin(), m.end(), [](std::uint8_t v) { return v != 0; });
}

// condition checks shared by the verify task and the solve gate
GateResult evaluate_gate(Workspace& ws) {
  const RunConfig& cfg = ws.cfg;
  GateResult gate;
  json& rep = gate.report;

  {
    const ConditionCReport c = check_condition_C(cfg.domain);
    gate.entries.push_back({"C", c.holds, c.reason});
    rep["condition_C"] = {{"holds", c.holds}, {"reason", c.reason}};
  }
  {
    GateEntry e{"N", false, ""};
    try {
      const double margin = check_condition_N(cfg.mu, cfg.nu, cfg.domain.dim);
      e.pass = margin > 0.0;
      e.message = e.pass ? "joint smallness margin positive"
                         : "joint smallness margin nonpositive";
      rep["condition_N"] = {{"margin", margin}, {"holds", e.pass}};
    } catch (const hypothesis_error& ex) {
      e.message = ex.what();
      rep["condition_N"] = {{"holds", false}, {"error", ex.what()}};
    }
    gate.entries.push_back(e);
  }
  {
    GateEntry e{"F", false, ""};
    try {
      const FConditionReport fr = verify_conditions(cfg.spec, *ws.grid, ws.mask);
      e.pass = fr.all_pass();
      json arr = json::array();
      for (const FCondition& c : fr.conditions) {
        arr.push_back({{"name", c.name},
                       {"pass", c.pass},
                       {"worst", c.worst},
                       {"fitted", c.fitted},
                       {"note", c.note}});
        if (!c.pass) e.message += (e.message.empty() ? "" : "; ") + c.name;
      }
      if (e.pass) e.message = "all structural conditions hold on samples";
      rep["conditions_F"] = arr;
    } catch (const hypothesis_error& ex) {
      e.clause = ex.clause;
      e.message = ex.what();
      rep["conditions_F"] = {{"error", ex.what()}};
    }
    gate.entries.push_back(e);
  }
  {
    const GNExponents gn = gn_exponents(cfg.spec.p, cfg.domain.dim);
    rep["interpolation"] = {{"delta_p", gn.delta_p},
                            {"delta_p_times_p", gn.delta_p_p},
                            {"mass_subcritical", gn.mass_subcritical}};
    if (cfg.task == Task::normalized || cfg.task == Task::normalized_multi) {
      bool active_power = false;
      for (size_t i = 0; i < ws.mask.size(); ++i)
        if (ws.mask[i] && cfg.spec.gamma_at(static_cast<Eigen::Index>(i)) > 0.0)
          active_power = true;
      const bool pass = !active_power || gn.mass_subcritical;
      gate.entries.push_back({"mass-subcritical", pass,
                              pass ? "power is mass-subcritical (or inactive)"
                                   : "power is mass-supercritical"});
    }
  }
  if (cfg.task == Task::solve || cfg.task == Task::multi) {
    const bool pass = cfg.lambda >= 0.0;
    gate.entries.push_back({"lambda-sign", pass,
                            pass ? "spectral shift is nonnegative"
                                 : "spectral shift must be nonnegative"});
  }
  if (cfg.task == Task::multi || cfg.task == Task::normalized_multi) {
    gate.entries.push_back({"odd-symmetry", cfg.spec.odd,
                            cfg.spec.odd ? "reaction term declared odd"
                                         : "multiplicity needs an odd reaction term"});
  }

  // resonance clearance on the complement of K
  if ((cfg.task == Task::solve || cfg.task == Task::multi) && !mask_all(ws.mask)) {
    GateEntry e{"A", false, ""};
    try {
      const OperatorSet rops = restrict_to_complement(*ws.ops, ws.mask);
      Vec theta_r(rops.n());
      for (Eigen::Index i = 0; i < rops.n(); ++i)
        theta_r[i] = cfg.spec.theta_at(rops.nodes[static_cast<size_t>(i)]);
      const double tsup = theta_r.cwiseAbs().maxCoeff();
      int k = std::min<int>(cfg.spectrum_k, static_cast<int>(rops.n()));
      double margin = std::numeric_limits<double>::quiet_NaN();
      while (true) {
        const SpectrumReport sr = spectrum_A(rops, cfg.mu, cfg.nu, theta_r, k,
                                             cfg.spectrum_tol);
        rep["condition_A"] = {{"lambda_1", sr.eigenvalues[0]},
                              {"theta_sup", sr.theta_sup},
                              {"eigenvalues_computed", k}};
        try {
          margin = check_condition_A(cfg.lambda, sr);
          break;
        } catch (const inconclusive_error&) {
          if (k >= rops.n()) throw;
          k = std::min<int>(2 * k, static_cast<int>(rops.n()));
        }
      }
      const double tol = condition_A_tol(cfg.lambda);
      const bool sufficient = condition_A_sufficient(cfg.lambda, tsup);
      e.pass = margin > tol || sufficient;
      e.message = e.pass ? (sufficient ? "shift dominates the off-region slope"
                                       : "resonance margin clears the tolerance")
                         : "shift resonates with the spectrum on the complement";
      rep["condition_A"]["margin"] = margin;
      rep["condition_A"]["tolerance"] = tol;
      rep["condition_A"]["sufficient"] = sufficient;
      rep["condition_A"]["satisfied"] = e.pass;
    } catch (const inconclusive_error& ex) {
      e.message = ex.what();
    } catch (const empty_problem_error&) {
      e.pass = true;
      e.message = "no complement region; vacuous";
    }
    gate.entries.push_back(e);
  }

  json checks = json::array();
  for (const GateEntry& e : gate.entries)
    checks.push_back({{"clause", e.clause}, {"pass", e.pass}, {"message", e.message}});
  rep["checks"] = checks;
  rep["passed"] = gate.passed();
  return gate;
}

json base_summary(const Workspace& ws, const GateResult* gate) {
  json j{{"task", ws.cfg.echo.value("task", "")},
         {"config", ws.cfg.echo},
         {"versions", versions()}};
  if (gate) j["conditions"] = gate->report;
  return j;
}

int task_verify(Workspace& ws, std::ostream& out) {
  GateResult gate = evaluate_gate(ws);
  json doc = gate.report;
  doc["versions"] = versions();
  doc["config"] = ws.cfg.echo;
  write_json(ws.cfg.out_dir / "verify.json", doc);
  for (const GateEntry& e : gate.entries)
    out << (e.pass ? "  pass  " : "  FAIL  ") << e.clause << ": " << e.message << "\n";
  return gate.passed() ? 0 : 3;
}

int task_hardy(Workspace& ws, std::ostream& out) {
  const int M = ws.cfg.resolution;
  std::vector<int> res;
  for (int r : {M / 4, M / 2, M})
    if (r >= 8 && (res.empty() || r > res.back())) res.push_back(r);

  json refinement;
  std::vector<double> orig, bdry;
  for (int r : res) {
    auto g = std::make_shared<Grid>(build_grid(ws.cfg.domain, r));
    const OperatorSet ops = assemble(g);
    orig.push_back(hardy_constant_origin(ops));
    bdry.push_back(hardy_constant_boundary(ops));
  }
  bool monotone = true;
  for (size_t i = 1; i < orig.size(); ++i)
    if (orig[i] > orig[i - 1] || bdry[i] > bdry[i - 1]) monotone = false;

  const int N = ws.cfg.domain.dim;
  json doc{{"origin", orig.back()},
           {"boundary", bdry.back()},
           {"origin_limit", 0.25 * (N - 2) * (N - 2)},
           {"boundary_limit", 0.25},
           {"refinement",
            {{"resolutions", res},
             {"origin", orig},
             {"boundary", bdry},
             {"decreasing", monotone}}},
           {"versions", versions()},
           {"config", ws.cfg.echo}};
  write_json(ws.cfg.out_dir / "hardy.json", doc);
  out << "  origin " << orig.back() << " (limit " << 0.25 * (N - 2) * (N - 2)
      << "), boundary " << bdry.back() << " (limit 0.25)\n";
  return 0;
}

int task_spectrum(Workspace& ws, std::ostream& out) {
  const OperatorSet rops = restrict_to_complement(*ws.ops, ws.mask);
  Vec theta_r(rops.n());
  for (Eigen::Index i = 0; i < rops.n(); ++i)
    theta_r[i] = ws.cfg.spec.theta_at(rops.nodes[static_cast<size_t>(i)]);
  const int k = std::min<int>(ws.cfg.spectrum_k, static_cast<int>(rops.n()));
  const SpectrumReport sr = spectrum_A(rops, ws.cfg.mu, ws.cfg.nu, theta_r, k,
                                       ws.cfg.spectrum_tol);

  json doc{{"eigenvalues", std::vector<double>(sr.eigenvalues.data(),
                                               sr.eigenvalues.data() + sr.eigenvalues.size())},
           {"theta_sup", sr.theta_sup},
           {"spectral_lower_bound", -sr.theta_sup},
           {"versions", versions()},
           {"config", ws.cfg.echo}};
  if (sr.residuals.size() > 0)
    doc["residuals"] = std::vector<double>(sr.residuals.data(),
                                           sr.residuals.data() + sr.residuals.size());
  try {
    doc["condition_A_margin"] = check_condition_A(ws.cfg.lambda, sr);
  } catch (const inconclusive_error&) {
    doc["condition_A_margin"] = nullptr;
  }
  write_json(ws.cfg.out_dir / "spectrum.json", doc);
  out << "  lambda_1 = " << sr.eigenvalues[0] << ", bound " << -sr.theta_sup << "\n";
  return 0;
}

int run_solve_family(Workspace& ws, std::ostream& out, std::ostream& err, bool force) {
  GateResult gate = evaluate_gate(ws);
  write_json(ws.cfg.out_dir / "verify.json", gate.report);
  if (!gate.passed()) {
    for (const GateEntry& e : gate.entries)
      if (!e.pass) err << "hypothesis failed [" << e.clause << "]: " << e.message << "\n";
    if (!force) return 3;
    err << "--force given; solving anyway\n";
  }

  const RunConfig& cfg = ws.cfg;
  SolverConfig scfg = cfg.solver;
  scfg.keep_trace = ws.log_iterates;

  if (cfg.task == Task::solve) {
    const ProblemContext ctx(ws.ops, cfg.spec, cfg.lambda, cfg.mu, cfg.nu, ws.mask);
    SolutionReport rep;
    if (cfg.method == "nehari") {
      if (!mask_any(ws.mask))
        throw hypothesis_error("superlinear-region",
                               "constraint-set solve needs a nonempty region");
      // the descent runs on the full space; ws.mask only switches the reaction
      rep = nehari_solve(ctx, scfg, std::vector<std::uint8_t>(ws.mask.size(), 1));
    } else {
      rep = mountain_pass(ctx, scfg);
    }
    json summary = base_summary(ws, &gate);
    summary["solution"] = solution_json(rep);
    emit_solution(rep, *ws.grid, cfg.out_dir, "solution", summary, ws.log_iterates);
    out << "  energy " << rep.energy << ", residual " << rep.cerami_residual
        << (rep.converged ? "" : " (not converged)") << "\n";
    return rep.converged ? 0 : 4;
  }

  if (cfg.task == Task::multi) {
    const ProblemContext ctx(ws.ops, cfg.spec, cfg.lambda, cfg.mu, cfg.nu, ws.mask);
    const auto reps = multi_solve(ctx, scfg, cfg.count);
    json summary = base_summary(ws, &gate);
    json list = json::array();
    for (size_t i = 0; i < reps.size(); ++i) {
      json sj = solution_json(reps[i]);
      sj["file"] = "solution_" + std::to_string(i) + ".csv";
      list.push_back(sj);
    }
    summary["solutions"] = list;
    summary["requested"] = cfg.count;
    summary["found"] = reps.size();
    write_json(cfg.out_dir / "summary.json", summary);
    for (size_t i = 0; i < reps.size(); ++i)
      emit_solution(reps[i], *ws.grid, cfg.out_dir, "solution_" + std::to_string(i),
                    json(), ws.log_iterates);
    out << "  found " << reps.size() << " of " << cfg.count << " solutions\n";
    return static_cast<int>(reps.size()) == cfg.count ? 0 : 4;
  }

  // constrained tasks ignore the spectral shift
  const ProblemContext ctx(ws.ops, cfg.spec, 0.0, cfg.mu, cfg.nu, ws.mask);
  if (cfg.task == Task::normalized) {
    SolutionReport rep = normalized_solve(ctx, scfg, cfg.rho);
    json summary = base_summary(ws, &gate);
    summary["solution"] = solution_json(rep);
    emit_solution(rep, *ws.grid, cfg.out_dir, "solution", summary, ws.log_iterates);
    out << "  energy " << rep.energy << ", multiplier " << rep.multiplier
        << (rep.converged ? "" : " (not converged)") << "\n";
    return rep.converged ? 0 : 4;
  }

  const auto reps = normalized_multi(ctx, scfg, cfg.rho, cfg.count);
  json summary = base_summary(ws, &gate);
  json list = json::array();
  for (size_t i = 0; i < reps.size(); ++i) {
    json sj = solution_json(reps[i]);
    sj["file"] = "solution_" + std::to_string(i) + ".csv";
    list.push_back(sj);
  }
  summary["solutions"] = list;
  summary["requested"] = cfg.count;
  summary["found"] = reps.size();
  write_json(cfg.out_dir / "summary.json", summary);
  for (size_t i = 0; i < reps.size(); ++i)
    emit_solution(reps[i], *ws.grid, cfg.out_dir, "solution_" + std::to_string(i), json(),
                  ws.log_iterates);
  out << "  found " << reps.size() << " of " << cfg.count << " solutions\n";
  return static_cast<int>(reps.size()) == cfg.count ? 0 : 4;
}

}  // namespace

int run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    std::ifstream in(opts.config_path);
    if (!in) throw config_error("cannot read config " + opts.config_path.string());
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& ex) {
      throw config_error(std::string("config is not valid JSON: ") + ex.what());
    }

    Workspace ws;
    ws.cfg = parse_run_config(doc, opts.config_path.parent_path());
    if (!opts.task.empty()) {
      ws.cfg.task = parse_task(opts.task);
      ws.cfg.echo["task"] = opts.task;
    }
    if (!opts.out_dir.empty()) {
      ws.cfg.out_dir = opts.out_dir;
      ws.cfg.echo["output"]["dir"] = opts.out_dir.string();
    }
    ws.log_iterates = opts.log_iterates;

    std::error_code ec;
    std::filesystem::create_directories(ws.cfg.out_dir, ec);
    if (ec) throw config_error("cannot create output directory " + ws.cfg.out_dir.string());

    ws.grid = std::make_shared<Grid>(build_grid(ws.cfg.domain, ws.cfg.resolution));
    finalize_tables(ws);
    ws.mask = k_mask(*ws.grid, ws.cfg.region);
    ws.ops = std::make_shared<OperatorSet>(assemble(ws.grid));

    out << "task " << ws.cfg.echo.value("task", "verify") << " on " << ws.grid->n()
        << " nodes\n";
    switch (ws.cfg.task) {
      case Task::verify: return task_verify(ws, out);
      case Task::hardy: return task_hardy(ws, out);
      case Task::spectrum: return task_spectrum(ws, out);
      default: return run_solve_family(ws, out, err, opts.force);
    }
  } catch (const hypothesis_error& ex) {
    err << "hypothesis failure [" << ex.clause << "]: " << ex.what() << "\n";
    return 3;
  } catch (const config_error& ex) {
    err << "config error: " << ex.what() << "\n";
    return 2;
  } catch (const domain_error& ex) {
    err << "config error: " << ex.what() << "\n";
    return 2;
  } catch (const inconclusive_error& ex) {
    err << "solver failure: " << ex.what() << "\n";
    return 4;
  } catch (const solver_error& ex) {
    err << "solver failure: " << ex.what() << "\n";
    return 4;
  } catch (const theory_error& ex) {
    err << "theory violation (internal bug): " << ex.what() << "\n";
    return 5;
  } catch (const std::exception& ex) {
    err << "internal error: " << ex.what() << "\n";
    return 5;
  }
}

}  // namespace sev
