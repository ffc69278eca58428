#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mdpcg/errors.hpp"

namespace mdpcg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// One hyperarc (state-action pair): tail state plus the distribution over
/// head states induced by the transition kernel. Head order is preserved as
/// given; it fixes the primal-graph edge enumeration.
struct Hyperarc {
  int state = 0;  // 0-based tail
  std::string action;
  std::vector<std::pair<int, double>> heads;  // (head state, probability)
};

enum class CostKind { Affine, GeneralDifferentiable };

/// Hooks for arbitrary differentiable congestion costs l(y, eps).
struct GeneralCost {
  std::function<Vector(const Vector&, const Vector&)> value;           // l(y, eps)
  std::function<Matrix(const Vector&, const Vector&)> flow_jacobian;   // grad_y l
  std::function<Matrix(const Vector&, const Vector&)> perturbation_jacobian;  // grad_eps l
};

/// Per-hyperarc congestion costs. Affine: l_k(y_k) = a_k*y_k + b_k + eps_k
/// (additive perturbation, grad_eps l = I). General: user-supplied hooks.
class CostModel {
 public:
  static CostModel affine(Vector slope, Vector intercept);
  static CostModel general(int dim, GeneralCost hooks);

  CostKind kind() const { return kind_; }
  int dim() const { return dim_; }
  const Vector& slope() const { return slope_; }
  const Vector& intercept() const { return intercept_; }

  Vector value(const Vector& y, const Vector& eps) const;
  Matrix flow_jacobian(const Vector& y, const Vector& eps) const;
  Matrix perturbation_jacobian(const Vector& y, const Vector& eps) const;

 private:
  CostModel() = default;
  CostKind kind_ = CostKind::Affine;
  int dim_ = 0;
  Vector slope_, intercept_;
  GeneralCost hooks_;
};

/// An MDP congestion game on a directed hypergraph: S states, K hyperarcs
/// in a fixed canonical order (the constructor's hyperarc order), a
/// column-stochastic kernel, congestion costs, and total population mass.
/// Immutable after construction; safe to share across threads.
class GameSpec {
 public:
  GameSpec(int num_states, std::vector<Hyperarc> hyperarcs, CostModel costs, double mass);

  int num_states() const { return num_states_; }
  int num_hyperarcs() const { return static_cast<int>(hyperarcs_.size()); }
  const std::vector<Hyperarc>& hyperarcs() const { return hyperarcs_; }
  const CostModel& costs() const { return costs_; }
  double mass() const { return mass_; }

  /// S x K kernel, column (s,a) holds the head distribution. Columns sum to 1.
  const Matrix& kernel() const { return kernel_; }

  /// Actions available at state s, as indices into hyperarcs().
  const std::vector<std::vector<int>>& actions_of() const { return actions_of_; }

 private:
  int num_states_ = 0;
  std::vector<Hyperarc> hyperarcs_;
  CostModel costs_;
  double mass_ = 0.0;
  Matrix kernel_;
  std::vector<std::vector<int>> actions_of_;
};

/// Hypergraph incidence E (S x K) with entries [s'==s] - P_{s',(s,a)}
/// and its reduced full-row-rank form (last row removed).
struct IncidenceMatrix {
  Matrix full;
  Matrix reduced;
  int removed_row = -1;
};

struct ValidationReport {
  bool strongly_connected = false;
  int incidence_rank = 0;
  bool rank_ok = false;
  bool costs_monotone = false;
  bool kernel_stochastic = false;
  std::vector<std::string> messages;

  bool all_ok() const {
    return strongly_connected && rank_ok && costs_monotone && kernel_stochastic;
  }
};

IncidenceMatrix build_incidence(const GameSpec& spec);

/// Certifies rank(E) == S-1 and removes the last row. Throws RankDeficient.
IncidenceMatrix reduce_incidence(const IncidenceMatrix& incidence);

ValidationReport validate_assumptions(const GameSpec& spec);

/// l(y, eps); affine kind returns a.*y + b + eps. Throws NegativeMass.
Vector cost_eval(const GameSpec& spec, const Vector& y, const Vector& eps);

/// Potential F(y, eps) = sum_k integral_0^{y_k} l_k(u, eps) du.
/// Closed form for affine costs; adaptive quadrature (abs tol 1e-10) otherwise.
double potential_eval(const GameSpec& spec, const Vector& y, const Vector& eps);

/// Numerical rank with threshold max(S,K) * sigma_max * 1e-12.
int numerical_rank(const Matrix& m);

/// Strongly connected components of a directed graph (adjacency lists),
/// in reverse topological order of the component DAG.
std::vector<std::vector<int>> strongly_connected_components(
    const std::vector<std::vector<int>>& adjacency);

}  // namespace mdpcg
