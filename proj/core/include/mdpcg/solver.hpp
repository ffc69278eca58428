#pragma once

#include <vector>

#include "mdpcg/game.hpp"

namespace mdpcg {

enum class SolverKind { InteriorKKT, FrankWolfe };

/// Wardrop equilibrium with duals and certificates. nu has S-1 entries,
/// relative to the removed incidence row.
struct Equilibrium {
  Vector y;
  Vector nu;
  double lambda = 0.0;
  Vector mu;
  double kkt_residual = 0.0;
  double wardrop_gap = 0.0;
  SolverKind solver = SolverKind::InteriorKKT;
  int iterations = 0;
  double min_y = 0.0;
  double min_mu = 0.0;
  bool assumption4_ok = false;  // min(y) > 1e-9 * M / K
};

struct Duals {
  Vector nu;
  double lambda = 0.0;
  Vector mu;
};

/// Stationary point of the equality-reduced problem: solves the symmetric
/// (K+S)-dimensional system [diag(a), -N; N^T, 0][y; nu; lambda] =
/// [-(b+eps); 0; M] with N = [E_reduced^T, 1]. Affine costs only.
/// Throws SingularSystem.
struct KktPoint {
  Vector y;
  Vector nu;
  double lambda = 0.0;
};
KktPoint solve_kkt_system(const GameSpec& spec, const Vector& eps);

/// Interior equilibrium via the direct KKT solve; valid (and exact) when the
/// resulting flow is strictly positive, in which case mu* = 0. Throws
/// NotInterior when some entry is nonpositive -- callers fall back to
/// solve_frank_wolfe.
Equilibrium solve_interior_kkt(const GameSpec& spec, const Vector& eps);

/// Same linear solve but returned unconditionally, with assumption4_ok
/// recording whether the strict-positivity condition held. Flows with
/// nonpositive entries are stationary points of the equality-reduced game
/// only, not feasible equilibria of the full game.
Equilibrium solve_relaxed_kkt(const GameSpec& spec, const Vector& eps);

struct FrankWolfeExtras {
  const Vector* start = nullptr;               // feasible start; oracle vertex if null
  std::vector<double>* potential_trace = nullptr;  // records F(y_k) per iteration
  bool polish = true;                          // support-restricted KKT refinement
};

/// Frank-Wolfe on the potential over {Ey=0, 1^T y=M, y>=0}. Exact line
/// search for affine costs, 2/(k+2) otherwise; stops when the FW gap drops
/// below tol * M * max(1, |lambda_est|). Throws MaxIterations.
Equilibrium solve_frank_wolfe(const GameSpec& spec, const Vector& eps, double tol = 1e-10,
                              int max_iter = 50000, const FrankWolfeExtras& extras = {});

/// Interior KKT when affine, falling back to Frank-Wolfe on NotInterior.
Equilibrium solve_auto(const GameSpec& spec, const Vector& eps, double tol = 1e-10);

/// argmin c^T y over {Ey=0, 1^T y=M, y>=0} via relative value iteration on
/// the average-cost MDP with stage costs c; returns the induced policy's
/// stationary distribution scaled by M (cheapest recurrent class if the
/// induced chain is multichain). Throws OracleNoConverge, DegenerateOracle.
Vector mdp_linear_oracle(const GameSpec& spec, const Vector& c);

/// lambda = y^T l / M; nu by least squares on the support
/// {k : y_k > 1e-7 * M/K}; mu = l - E_r^T nu - lambda 1.
/// Throws NegativeMultiplier if mu is significantly negative.
Duals recover_duals(const GameSpec& spec, const Vector& y, const Vector& eps);

/// Infinity norm of (l - E_r^T nu - lambda 1 - mu; E_r y; 1^T y - M; mu^T y).
double kkt_residual(const GameSpec& spec, const Equilibrium& eq, const Vector& eps);

/// Population-level VI gap l(y)^T y - min_{y' feasible} l(y)^T y'.
double wardrop_gap(const GameSpec& spec, const Vector& y, const Vector& eps);

}  // namespace mdpcg
