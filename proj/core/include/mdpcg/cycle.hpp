#pragma once

#include <utility>
#include <vector>

#include "mdpcg/sensitivity.hpp"

namespace mdpcg {

/// Deterministic primal graph of the hypergraph: one signed-incidence column
/// per distinct (tail, head) transition. Edge order is first appearance when
/// scanning hyperarcs in canonical order and heads in their listed order.
struct PrimalGraph {
  std::vector<std::pair<int, int>> edges;  // (tail, head)
  Matrix D;                                // S x |edges|, +1 tail / -1 head
};

/// Nonnegative column-stochastic T with E = D * T. Column (s,a) spreads the
/// hyperarc's mass over the primal edges leaving s.
struct TransformationT {
  Matrix T;  // |edges| x K
  bool invertible = false;
  double sigma_max = 0.0;  // ||T||_2
};

/// Equilibrium of the cycle game on the primal graph, z* = T y*, with the
/// transformed costs T^-T o l o T^-1.
struct CycleEquilibrium {
  Vector z;
  Vector nu;  // S-1, same duals as the hypergraph game
  double lambda = 0.0;
  double kkt_residual = 0.0;  // transformed stationarity + flow + mass stack
};

/// Throws SelfLoopUnsupported if some hyperarc puts mass on its own tail
/// while S > 1 (signed incidence cannot encode it). For S == 1 the edge set
/// is empty.
PrimalGraph derive_primal_graph(const GameSpec& spec);

/// Never throws for shape: a non-square T is returned with invertible=false.
/// The invertibility gate is |edges| == K and condition number < 1e12.
TransformationT build_transformation(const GameSpec& spec, const PrimalGraph& primal);

/// Maps a strictly positive equilibrium through T and verifies the
/// transformed KKT stack. Throws NotInvertible / NotStrictlyPositive.
CycleEquilibrium map_equilibrium(const GameSpec& spec, const Equilibrium& eq,
                                 const PrimalGraph& primal, const TransformationT& transform,
                                 const Vector& eps);

struct StochasticityBound {
  double lhs = 0.0;  // ||grad_eps J_cycle||_2
  double rhs = 0.0;  // ||T||_2 * ||grad_eps J||_2
  bool holds = false;
};

/// Evaluates the cycle game's social-cost sensitivity directly on the
/// transformed game (G_c = T^-T G T^-1, N_c = [D_reduced^T, 1], additive
/// edge perturbation) and checks ||grad J_c|| <= ||T|| * ||grad J||.
StochasticityBound stochasticity_bound_check(const GameSpec& spec, const Equilibrium& eq,
                                             const Vector& eps);

}  // namespace mdpcg
