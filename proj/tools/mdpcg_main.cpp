// mdpcg: file-driven front end for MDP congestion game equilibria,
// sensitivity analysis, Braess-paradox detection, perturbation sweeps,
// and the deterministic cycle-game comparison.
//
// Exit codes: 0 ok, 1 validation failed, 2 parse error, 3 solver error,
// 4 degenerate equilibrium, 5 non-invertible transformation.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <thread>

#include "mdpcg/cycle.hpp"
#include "mdpcg/io.hpp"
#include "mdpcg/sensitivity.hpp"
#include "mdpcg/solver.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace mdpcg;

int exit_code_for(const Error& err) {
  switch (err.code()) {
    case ErrorCode::ParseError:
      return 2;
    case ErrorCode::NotStrictlyPositive:
      return 4;
    case ErrorCode::NotInvertible:
      return 5;
    default:
      return 3;
  }
}

json to_json(const Vector& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

json to_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vector(m.row(i))));
  return rows;
}

const char* solver_name(SolverKind kind) {
  return kind == SolverKind::InteriorKKT ? "interior_kkt" : "frank_wolfe";
}

json equilibrium_json(const GameSpec& spec, const Equilibrium& eq, const Vector& eps) {
  json out;
  out["y"] = to_json(eq.y);
  out["nu"] = to_json(eq.nu);
  out["lambda"] = eq.lambda;
  out["mu"] = to_json(eq.mu);
  out["social_cost"] = eq.y.dot(spec.costs().value(eq.y, eps));
  out["kkt_residual"] = eq.kkt_residual;
  out["wardrop_gap"] = eq.wardrop_gap;
  out["solver"] = solver_name(eq.solver);
  out["assumption4_ok"] = eq.assumption4_ok;
  return out;
}

int sweep_threads() {
  const char* env = std::getenv("MDPCG_THREADS");
  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  int threads = hw > 0 ? hw : 1;
  if (env != nullptr) {
    const int parsed = std::atoi(env);
    if (parsed > 0) threads = std::min(threads, parsed);
  }
  return threads;
}

// Shortest decimal that round-trips; CSV cells.
std::string format_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

int cmd_validate(const std::string& path) {
  const GameDocument doc = load_game_file(path);
  const ValidationReport report = validate_assumptions(doc.spec);
  json out;
  out["strongly_connected"] = report.strongly_connected;
  out["incidence_rank"] = report.incidence_rank;
  out["rank_ok"] = report.rank_ok;
  out["costs_monotone"] = report.costs_monotone;
  out["kernel_stochastic"] = report.kernel_stochastic;
  out["messages"] = report.messages;
  std::cout << out.dump(2) << "\n";
  return report.all_ok() ? 0 : 1;
}

Equilibrium solve_with(const GameSpec& spec, const Vector& eps, const std::string& solver,
                       double tol) {
  if (solver == "kkt") return solve_interior_kkt(spec, eps);
  if (solver == "fw") return solve_frank_wolfe(spec, eps, tol);
  return solve_auto(spec, eps, tol);
}

int cmd_solve(const std::string& path, const std::string& solver, double tol) {
  const GameDocument doc = load_game_file(path);
  const Equilibrium eq = solve_with(doc.spec, doc.perturbation, solver, tol);
  std::cout << equilibrium_json(doc.spec, eq, doc.perturbation).dump(2) << "\n";
  return 0;
}

// Sensitivity base point: the interior equilibrium when it exists; otherwise
// (affine games) the equality-reduced stationary point, flagged, matching the
// regime in which the closed forms are derived.
Equilibrium analysis_equilibrium(const GameSpec& spec, const Vector& eps) {
  if (spec.costs().kind() == CostKind::Affine) {
    Equilibrium eq = solve_relaxed_kkt(spec, eps);
    if (!eq.assumption4_ok) {
      std::cerr << "warning: equilibrium is not strictly positive (min y = " << eq.min_y
                << "); reporting the equality-reduced analysis, assumption4_ok=false\n";
    }
    return eq;
  }
  return solve_frank_wolfe(spec, eps);
}

int cmd_sensitivity(const std::string& path) {
  const GameDocument doc = load_game_file(path);
  const Equilibrium eq = analysis_equilibrium(doc.spec, doc.perturbation);
  const SensitivityResult sens = compute_sensitivity_relaxed(doc.spec, eq, doc.perturbation);
  const BraessReport braess = braess_from_gradient(sens.dJ_deps);

  json out = equilibrium_json(doc.spec, eq, doc.perturbation);
  out["assumption4_ok"] = sens.assumption4_ok;
  out["grad_J"] = to_json(sens.dJ_deps);
  out["dy_deps"] = to_json(sens.dy_deps);
  out["dl_deps"] = to_json(sens.dl_deps);
  out["braess"] = json{{"possible", braess.paradox_possible},
                       {"worst_direction", to_json(braess.worst_direction)},
                       {"rate", braess.predicted_rate}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_sweep(const std::string& path, int arc, const std::string& direction_csv, double eps_max,
              int steps, const std::string& out_path) {
  const GameDocument doc = load_game_file(path);
  const int K = doc.spec.num_hyperarcs();

  Vector direction = Vector::Zero(K);
  if (!direction_csv.empty()) {
    std::stringstream ss(direction_csv);
    std::string cell;
    int k = 0;
    while (std::getline(ss, cell, ',')) {
      if (k >= K) throw ParseError("--direction has more than K entries");
      direction(k++) = std::stod(cell);
    }
    if (k != K) throw ParseError("--direction needs exactly K entries");
  } else {
    if (arc < 1 || arc > K) throw ParseError("--arc must be in 1..K");
    direction(arc - 1) = 1.0;
  }

  const SweepTable table = perturbation_sweep(doc.spec, direction, eps_max, steps,
                                              &doc.perturbation, sweep_threads());

  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::binary);
    if (!file) throw ParseError("cannot open output file: " + out_path);
    os = &file;
  }
  *os << "eps,social_cost,pred_dJ,lambda,assumption4_ok";
  for (int k = 1; k <= K; ++k) *os << ",y_" << k;
  *os << "\n";
  for (const SweepPoint& row : table.rows) {
    *os << format_double(row.t) << "," << format_double(row.social_cost) << ","
        << format_double(row.directional_dJ) << "," << format_double(row.lambda) << ","
        << (row.assumption4_ok ? 1 : 0);
    for (int k = 0; k < K; ++k) *os << "," << format_double(row.y(k));
    *os << "\n";
  }
  if (table.aborted) {
    *os << "# aborted\n";
    os->flush();
    std::cerr << "error: " << table.abort_message << "\n";
    return 3;
  }
  return 0;
}

int cmd_cycle(const std::string& path) {
  const GameDocument doc = load_game_file(path);
  const PrimalGraph primal = derive_primal_graph(doc.spec);
  const TransformationT transform = build_transformation(doc.spec, primal);
  if (!transform.invertible) {
    throw NotInvertible("transformation not invertible: " +
                        std::to_string(primal.edges.size()) + " primal edges vs " +
                        std::to_string(doc.spec.num_hyperarcs()) + " hyperarcs");
  }
  const Equilibrium eq = solve_auto(doc.spec, doc.perturbation);
  const CycleEquilibrium cycle =
      map_equilibrium(doc.spec, eq, primal, transform, doc.perturbation);
  const StochasticityBound bound =
      stochasticity_bound_check(doc.spec, eq, doc.perturbation);

  json out;
  json edges = json::array();
  for (const auto& [tail, head] : primal.edges) {
    edges.push_back(json::array({tail + 1, head + 1}));
  }
  out["edges"] = std::move(edges);
  out["D"] = to_json(primal.D);
  out["T"] = to_json(transform.T);
  out["sigma_max"] = transform.sigma_max;
  out["z"] = to_json(cycle.z);
  out["cycle_kkt_residual"] = cycle.kkt_residual;
  out["theorem2"] =
      json{{"lhs", bound.lhs}, {"rhs", bound.rhs}, {"holds", bound.holds}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MDP congestion games: equilibria, sensitivity, Braess detection"};
  app.require_subcommand(1);

  std::string path, solver = "auto", direction_csv, out_path;
  double tol = 1e-8, eps_max = 0.5;
  int arc = 0, steps = 20;

  CLI::App* validate = app.add_subcommand("validate", "check game assumptions");
  validate->add_option("file", path)->required();

  CLI::App* solve = app.add_subcommand("solve", "compute the Wardrop equilibrium");
  solve->add_option("file", path)->required();
  solve->add_option("--tol", tol, "solver tolerance");
  solve->add_option("--solver", solver, "auto|kkt|fw")
      ->check(CLI::IsMember({"auto", "kkt", "fw"}));

  CLI::App* sensitivity = app.add_subcommand("sensitivity", "equilibrium sensitivity + Braess");
  sensitivity->add_option("file", path)->required();

  CLI::App* sweep = app.add_subcommand("sweep", "perturbation sweep along a direction");
  sweep->add_option("file", path)->required();
  sweep->add_option("--arc", arc, "1-based hyperarc index to perturb");
  sweep->add_option("--direction", direction_csv, "comma-separated direction of length K");
  sweep->add_option("--max", eps_max, "largest perturbation magnitude");
  sweep->add_option("--steps", steps, "number of increments");
  sweep->add_option("--out", out_path, "CSV output path (stdout if omitted)");

  CLI::App* cycle = app.add_subcommand("cycle", "cycle-game mapping and stochasticity bound");
  cycle->add_option("file", path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(path);
    if (solve->parsed()) return cmd_solve(path, solver, tol);
    if (sensitivity->parsed()) return cmd_sensitivity(path);
    if (sweep->parsed()) return cmd_sweep(path, arc, direction_csv, eps_max, steps, out_path);
    if (cycle->parsed()) return cmd_cycle(path);
  } catch (const Error& err) {
    json diagnostic;
    diagnostic["error"] = err.what();
    std::cerr << "error: " << err.what() << "\n";
    std::cout << diagnostic.dump(2) << "\n";
    return exit_code_for(err);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 3;
  }
  return 0;
}
