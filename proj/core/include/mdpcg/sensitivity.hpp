#pragma once

#include <string>
#include <vector>

#include "mdpcg/solver.hpp"

namespace mdpcg {

/// Closed-form equilibrium sensitivities to cost perturbations:
///   ddual = (N^T G^-1 N)^-1 N^T G^-1 J        (rows: nu then lambda)
///   dl    = N * ddual
///   dy    = G^-1 (dl - J)
///   dJ    = dy^T l* + dl^T y*
/// with G = grad_y l, J = grad_eps l, N = [E_reduced^T, 1] at the base point.
struct SensitivityResult {
  Matrix dy_deps;     // K x K
  Matrix dl_deps;     // K x K
  Matrix ddual_deps;  // S x K
  Vector dJ_deps;     // K
  Matrix G;           // K x K
  Matrix J_mat;       // K x K
  Matrix N;           // K x S
  bool assumption4_ok = true;
};

struct BraessReport {
  bool paradox_possible = false;
  Vector worst_direction;  // unit vector in the nonnegative orthant
  double predicted_rate = 0.0;
};

/// Full sensitivity bundle. Requires min(y) > 1e-9 * M/K (throws
/// NotStrictlyPositive) and a positive definite G (symmetric part, for
/// general costs). Throws IllConditioned when cond(N^T G^-1 N) > 1e12.
SensitivityResult compute_sensitivity(const GameSpec& spec, const Equilibrium& eq,
                                      const Vector& eps);

/// Sensitivity of the equality-reduced system evaluated regardless of the
/// sign of y (assumption4_ok=false when the base flow is not strictly
/// positive). Only the positivity gate is waived; everything else matches
/// compute_sensitivity.
SensitivityResult compute_sensitivity_relaxed(const GameSpec& spec, const Equilibrium& eq,
                                              const Vector& eps);

Matrix flow_sensitivity(const GameSpec& spec, const Equilibrium& eq, const Vector& eps);
Matrix cost_sensitivity(const GameSpec& spec, const Equilibrium& eq, const Vector& eps);
Matrix dual_sensitivity(const GameSpec& spec, const Equilibrium& eq, const Vector& eps);
Vector social_cost_sensitivity(const GameSpec& spec, const Equilibrium& eq, const Vector& eps);

BraessReport detect_braess(const GameSpec& spec, const Equilibrium& eq, const Vector& eps);

/// Braess classification of a social-cost gradient: a significantly negative
/// component makes a cost increase that lowers social cost possible.
BraessReport braess_from_gradient(const Vector& dJ);

struct SweepPoint {
  double t = 0.0;
  double social_cost = 0.0;
  double lambda = 0.0;
  Vector y;
  double directional_dJ = 0.0;  // grad_J . direction; NaN when not computable
  bool assumption4_ok = false;
};

struct SweepTable {
  Vector direction;
  std::vector<SweepPoint> rows;
  bool aborted = false;        // a solver failure truncated the sweep
  std::string abort_message;
};

/// Solves the game at eps = base + t_i * direction for t_i = i*eps_max/steps
/// (a single row when eps_max == 0), recording social cost, lambda, flows,
/// and the directional social-cost sensitivity. Points where the flow is not
/// strictly positive are flagged, not failed. `threads` > 1 solves points in
/// parallel; rows are always in index order.
SweepTable perturbation_sweep(const GameSpec& spec, const Vector& direction, double eps_max,
                              int steps, const Vector* base_eps = nullptr, int threads = 1);

/// Re-derives all four Jacobians by central differences (re-solving at
/// eps +- h e_k) and returns the maximum Frobenius-norm discrepancy against
/// the closed forms, relative to max(1, ||closed form||_F).
double finite_difference_check(const GameSpec& spec, const Equilibrium& eq, const Vector& eps,
                               double h = 1e-5);

}  // namespace mdpcg
