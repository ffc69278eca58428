// Shared in-memory copies of the bundled games and frozen reference values.
#pragma once

#include <doctest.h>

#include "mdpcg/game.hpp"

namespace mdpcg::testing {

// Wheatstone network: four states, six hyperarcs, the third stochastic
// (s2 -> {s3: 0.9, s4: 0.1}); affine costs; unit mass.
inline GameSpec wheatstone() {
  std::vector<Hyperarc> arcs = {
      {0, "to_s2", {{1, 1.0}}},
      {1, "to_s4", {{3, 1.0}}},
      {1, "bridge", {{2, 0.9}, {3, 0.1}}},
      {2, "to_s4", {{3, 1.0}}},
      {0, "to_s3", {{2, 1.0}}},
      {3, "return", {{0, 1.0}}},
  };
  Vector a(6), b(6);
  a << 9, 0.1, 0.1, 9, 0.1, 0.1;
  b << 1, 1, 0, 1, 0.1, 0;
  return GameSpec(4, std::move(arcs), CostModel::affine(std::move(a), std::move(b)), 1.0);
}

// Three states; the first hyperarc splits 40/60 over two edges; the
// transformation to the primal graph is square and invertible.
inline GameSpec fig2_game() {
  std::vector<Hyperarc> arcs = {
      {1, "split", {{2, 0.4}, {0, 0.6}}},
      {1, "to_s1", {{0, 1.0}}},
      {2, "to_s2", {{1, 1.0}}},
      {0, "to_s3", {{2, 1.0}}},
  };
  Vector a = Vector::Ones(4);
  Vector b(4);
  b << 0.1, 0.2, 0.3, 0.4;
  return GameSpec(3, std::move(arcs), CostModel::affine(std::move(a), std::move(b)), 1.0);
}

// Two states swapping deterministically; the feasible set is a single point.
inline GameSpec swap_game(double b1 = 0.2, double b2 = 0.4) {
  std::vector<Hyperarc> arcs = {
      {0, "go", {{1, 1.0}}},
      {1, "go", {{0, 1.0}}},
  };
  Vector a = Vector::Ones(2);
  Vector b(2);
  b << b1, b2;
  return GameSpec(2, std::move(arcs), CostModel::affine(std::move(a), std::move(b)), 2.0);
}

// One state, one self-loop action, l(y) = y + 1, unit mass.
inline GameSpec selfloop_game() {
  std::vector<Hyperarc> arcs = {{0, "stay", {{0, 1.0}}}};
  return GameSpec(1, std::move(arcs), CostModel::affine(Vector::Ones(1), Vector::Ones(1)), 1.0);
}

// Stationary point of the equality-reduced Wheatstone problem (also the
// tangent-space projected-gradient limit); y has nonpositive entries, so the
// full game's equilibrium lies on the boundary instead.
inline Vector wheatstone_reduced_y() {
  Vector y(6);
  y << -0.00022515223016816854, 0.39053007700610143, -0.39075522923626954, 0.0991053480217398,
      0.4507850543343823, 0.45055990210421415;
  return y;
}

inline constexpr double kWheatstoneReducedLambda = 0.6940275426131727;

// Social-cost gradient of the reduced system at the base point; agrees with
// the published three-decimal vector.
inline Vector wheatstone_grad_J() {
  Vector g(6);
  g << 0.022797925368598326, 0.5014836825212153, -0.47868575715261924, 0.023323953673161573,
      0.45414113511052034, 0.47693906047911866;
  return g;
}

// Boundary equilibrium of the full Wheatstone game: the bridge is unused,
// upper path carries alpha, lower path beta, return arc the total.
inline Vector wheatstone_boundary_y() {
  const double alpha = (1.0 / 3.0 - 0.9 / 9.1) / 2.0;
  const double beta = (1.0 / 3.0 + 0.9 / 9.1) / 2.0;
  Vector y(6);
  y << alpha, alpha, 0.0, beta, beta, 1.0 / 3.0;
  return y;
}

inline Matrix wheatstone_incidence() {
  Matrix e(4, 6);
  e << 1, 0, 0, 0, 1, -1,
      -1, 1, 1, 0, 0, 0,
       0, 0, -0.9, 1, -1, 0,
       0, -1, -0.1, -1, 0, 1;
  return e;
}

inline Matrix fig2_primal_incidence() {
  Matrix d(3, 4);
  d << 0, -1, 0, 1,
       1, 1, -1, 0,
      -1, 0, 1, -1;
  return d;
}

inline Matrix fig2_transformation() {
  Matrix t(4, 4);
  t << 0.4, 0, 0, 0,
       0.6, 1, 0, 0,
       0, 0, 1, 0,
       0, 0, 0, 1;
  return t;
}

}  // namespace mdpcg::testing
