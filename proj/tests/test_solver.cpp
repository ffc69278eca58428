#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "mdpcg/solver.hpp"
#include "oracles.hpp"

using namespace mdpcg;
using namespace mdpcg::testing;

namespace {

Vector zero_eps(const GameSpec& spec) { return Vector::Zero(spec.num_hyperarcs()); }

double max_cost(const GameSpec& spec, const Vector& y, const Vector& eps) {
  return spec.costs().value(y, eps).lpNorm<Eigen::Infinity>();
}

}  // namespace

TEST_CASE("interior KKT solves the symmetric swap exactly") {
  const GameSpec spec = swap_game(0.0, 0.0);
  const Equilibrium eq = solve_interior_kkt(spec, zero_eps(spec));
  CHECK(eq.y(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(eq.y(1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(eq.lambda == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(eq.nu(0)) <= 1e-14);
  CHECK(eq.mu.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(eq.kkt_residual <= 1e-12);
}

TEST_CASE("interior KKT solves the single self-loop game") {
  const GameSpec spec = selfloop_game();
  const Equilibrium eq = solve_interior_kkt(spec, zero_eps(spec));
  CHECK(eq.y(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(eq.lambda == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(eq.nu.size() == 0);
}

TEST_CASE("wheatstone is not strictly positive: interior solve signals fallback") {
  const GameSpec spec = wheatstone();
  CHECK_THROWS_AS(solve_interior_kkt(spec, zero_eps(spec)), NotInterior);
}

TEST_CASE("reduced stationary point matches the projected-gradient oracle") {
  const GameSpec spec = wheatstone();
  const Equilibrium eq = solve_relaxed_kkt(spec, zero_eps(spec));
  CHECK_FALSE(eq.assumption4_ok);
  CHECK((eq.y - wheatstone_reduced_y()).lpNorm<Eigen::Infinity>() <= 1e-10);
  CHECK(eq.lambda == doctest::Approx(kWheatstoneReducedLambda).epsilon(1e-12));

  const Vector pgd = projected_gradient_oracle(spec, zero_eps(spec));
  CHECK((eq.y - pgd).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("KKT solve rejects singular systems") {
  std::vector<Hyperarc> arcs = {
      {0, "stay", {{0, 1.0}}},
      {1, "stay", {{1, 1.0}}},
  };
  GameSpec spec(2, arcs, CostModel::affine(Vector::Ones(2), Vector::Zero(2)), 1.0);
  CHECK_THROWS_AS(solve_kkt_system(spec, Vector::Zero(2)), SingularSystem);
}

TEST_CASE("frank-wolfe finds the boundary wheatstone equilibrium") {
  const GameSpec spec = wheatstone();
  const Equilibrium eq = solve_frank_wolfe(spec, zero_eps(spec), 1e-10);
  CHECK((eq.y - wheatstone_boundary_y()).lpNorm<Eigen::Infinity>() <= 1e-8);
  CHECK(eq.y.minCoeff() >= 0.0);
  CHECK(eq.kkt_residual <= 1e-6);
  CHECK(eq.wardrop_gap <= 1e-6 * spec.mass() * max_cost(spec, eq.y, zero_eps(spec)));
  CHECK(eq.mu(2) == doctest::Approx(0.70882783882783889).epsilon(1e-6));
  CHECK(eq.mu.minCoeff() >= 0.0);
  CHECK(std::abs(eq.mu.dot(eq.y)) <= 1e-8 * spec.mass() * max_cost(spec, eq.y, zero_eps(spec)));
}

TEST_CASE("cross-solver agreement on interior fixtures") {
  for (const GameSpec& spec : {fig2_game(), swap_game(), selfloop_game()}) {
    const Vector eps = zero_eps(spec);
    const Equilibrium kkt = solve_interior_kkt(spec, eps);
    const Equilibrium fw = solve_frank_wolfe(spec, eps, 1e-10);
    CHECK((kkt.y - fw.y).lpNorm<Eigen::Infinity>() <= 1e-5);
    CHECK(fw.kkt_residual <= 1e-6);
  }
}

TEST_CASE("cross-solver agreement on random interior games") {
  std::uint64_t seed = 100;
  for (int i = 0; i < 5; ++i) {
    std::uint64_t used = 0;
    const GameSpec spec = random_interior_game(seed, &used);
    seed = used + 1;
    const Vector eps = zero_eps(spec);
    const Equilibrium kkt = solve_interior_kkt(spec, eps);
    const Equilibrium fw = solve_frank_wolfe(spec, eps, 1e-10);
    CHECK((kkt.y - fw.y).lpNorm<Eigen::Infinity>() <= 1e-5);
  }
}

TEST_CASE("frank-wolfe reaches the same point from random starting vertices") {
  const GameSpec spec = fig2_game();
  const Vector eps = zero_eps(spec);
  const Vector reference = solve_frank_wolfe(spec, eps, 1e-10).y;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int run = 0; run < 20; ++run) {
    Vector c(spec.num_hyperarcs());
    for (int k = 0; k < c.size(); ++k) c(k) = unit(rng);
    const Vector start = mdp_linear_oracle(spec, c);
    FrankWolfeExtras extras;
    extras.start = &start;
    const Equilibrium eq = solve_frank_wolfe(spec, eps, 1e-10, 50000, extras);
    CHECK((eq.y - reference).lpNorm<Eigen::Infinity>() <= 1e-5);
  }
}

TEST_CASE("frank-wolfe potential is nonincreasing under exact line search") {
  const GameSpec spec = wheatstone();
  std::vector<double> trace;
  FrankWolfeExtras extras;
  extras.potential_trace = &trace;
  extras.polish = false;
  const Equilibrium eq = solve_frank_wolfe(spec, zero_eps(spec), 1e-9, 50000, extras);
  REQUIRE(trace.size() >= 2);
  for (size_t i = 1; i < trace.size(); ++i) {
    CHECK(trace[i] <= trace[i - 1] + 1e-12 * (1.0 + std::abs(trace[i - 1])));
  }
  CHECK(eq.wardrop_gap <= 1e-6 * spec.mass() * max_cost(spec, eq.y, zero_eps(spec)));
}

TEST_CASE("frank-wolfe social cost drops when the bridge is taxed") {
  // Reduced-system social cost at eps = 0.25 e3 sits below the base value.
  const GameSpec spec = wheatstone();
  Vector eps = zero_eps(spec);
  eps(2) = 0.25;
  const Equilibrium base = solve_relaxed_kkt(spec, zero_eps(spec));
  const Equilibrium taxed = solve_relaxed_kkt(spec, eps);
  const double j_base = base.y.dot(spec.costs().value(base.y, zero_eps(spec)));
  const double j_taxed = taxed.y.dot(spec.costs().value(taxed.y, eps));
  CHECK(j_taxed < j_base);
}

TEST_CASE("frank-wolfe reports MaxIterations when starved") {
  // General costs use the 2/(k+2) step, so a tiny budget with polish
  // disabled cannot certify a tight gap tolerance. Heavy congestion keeps
  // the optimum strictly inside a face, away from any single vertex.
  const GameSpec affine = fig2_game();
  const Vector a = Vector::Constant(4, 30.0);
  const Vector b = affine.costs().intercept();
  GeneralCost hooks;
  hooks.value = [a, b](const Vector& y, const Vector& eps) -> Vector {
    return a.cwiseProduct(y.array().cube().matrix()) + b + eps;
  };
  hooks.flow_jacobian = [a](const Vector& y, const Vector&) -> Matrix {
    return (3.0 * a.cwiseProduct(y.cwiseProduct(y))).asDiagonal();
  };
  hooks.perturbation_jacobian = [](const Vector& y, const Vector&) -> Matrix {
    return Matrix::Identity(y.size(), y.size());
  };
  const GameSpec spec(affine.num_states(), affine.hyperarcs(), CostModel::general(4, hooks),
                      affine.mass());
  FrankWolfeExtras extras;
  extras.polish = false;
  CHECK_THROWS_AS(solve_frank_wolfe(spec, Vector::Zero(4), 1e-12, 10, extras), MaxIterations);
}

TEST_CASE("oracle on the swap returns the unique feasible point") {
  const GameSpec spec = swap_game();
  Vector c(2);
  c << 0.0, 1.0;
  const Vector y = mdp_linear_oracle(spec, c);
  CHECK(y(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(y(1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("oracle returns a feasible vertex for zero costs") {
  const GameSpec spec = wheatstone();
  const Vector y = mdp_linear_oracle(spec, Vector::Zero(6));
  const IncidenceMatrix im = build_incidence(spec);
  CHECK((im.full * y).lpNorm<Eigen::Infinity>() <= 1e-9);
  CHECK(y.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(y.minCoeff() >= 0.0);
}

TEST_CASE("oracle finds the cheapest cycle at zero flow costs") {
  const GameSpec spec = wheatstone();
  Vector c(6);
  c << 1, 1, 0, 1, 0.1, 0;  // costs at y = 0
  const Vector y = mdp_linear_oracle(spec, c);
  // Lower path s1 -> s3 -> s4 -> s1 (arcs 5, 4, 6), one third each.
  Vector expected = Vector::Zero(6);
  expected(3) = expected(4) = expected(5) = 1.0 / 3.0;
  CHECK((y - expected).lpNorm<Eigen::Infinity>() <= 1e-9);

  // Exhaustive policy enumeration confirms optimality.
  const auto vertices = enumerate_policy_vertices(spec, c);
  CHECK(vertices.size() >= 4);
  const double oracle_cost = c.dot(y) / spec.mass();
  for (const auto& vertex : vertices) {
    CHECK(oracle_cost <= vertex.average_cost + 1e-9);
  }
}

TEST_CASE("oracle matches enumeration on all bundled games and random games") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uint64_t seed = 900;
  std::vector<GameSpec> games = {wheatstone(), fig2_game(), swap_game(), selfloop_game()};
  for (int i = 0; i < 4; ++i) {
    std::uint64_t used = 0;
    games.push_back(random_interior_game(seed, &used));
    seed = used + 1;
  }
  for (const GameSpec& spec : games) {
    for (int trial = 0; trial < 5; ++trial) {
      Vector c(spec.num_hyperarcs());
      for (int k = 0; k < c.size(); ++k) c(k) = unit(rng);
      const Vector y = mdp_linear_oracle(spec, c);
      const double oracle_cost = c.dot(y) / spec.mass();
      for (const auto& vertex : enumerate_policy_vertices(spec, c)) {
        CHECK(oracle_cost <= vertex.average_cost + 1e-9);
      }
    }
  }
}

TEST_CASE("dual recovery at the reduced wheatstone point gives zero multipliers") {
  const GameSpec spec = wheatstone();
  const Vector eps = zero_eps(spec);
  const Equilibrium eq = solve_relaxed_kkt(spec, eps);
  const Duals duals = recover_duals(spec, eq.y, eps);
  CHECK(duals.mu.lpNorm<Eigen::Infinity>() <= 1e-7);
  CHECK(duals.lambda == doctest::Approx(eq.lambda).epsilon(1e-8));
  CHECK((duals.nu - eq.nu).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("dual recovery on the swap") {
  const GameSpec spec = swap_game();
  Vector y(2);
  y << 1.0, 1.0;
  const Duals duals = recover_duals(spec, y, zero_eps(spec));
  CHECK(duals.lambda == doctest::Approx(1.3).epsilon(1e-14));
  CHECK(duals.nu(0) == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(duals.mu.lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("kkt residual is machine zero on the exact swap solution") {
  const GameSpec spec = swap_game(0.0, 0.0);
  Equilibrium eq;
  eq.y = Vector::Ones(2);
  eq.nu = Vector::Zero(1);
  eq.lambda = 1.0;
  eq.mu = Vector::Zero(2);
  CHECK(kkt_residual(spec, eq, zero_eps(spec)) == 0.0);
}

TEST_CASE("kkt residual is large at a non-equilibrium vertex") {
  const GameSpec spec = wheatstone();
  const Vector eps = zero_eps(spec);
  // Expensive pure cycle s1 -> s2 -> s4 -> s1 (arcs 1, 2, 6).
  Vector y = Vector::Zero(6);
  y(0) = y(1) = y(5) = 1.0 / 3.0;
  Equilibrium eq;
  eq.y = y;
  eq.lambda = spec.costs().value(y, eps).dot(y) / spec.mass();
  eq.nu = Vector::Zero(3);
  eq.mu = Vector::Zero(6);
  // Least-squares duals without the complementarity clamp.
  const IncidenceMatrix im = build_incidence(spec);
  const Vector ell = spec.costs().value(y, eps);
  Matrix lhs(3, 3);
  Vector rhs(3);
  int row = 0;
  for (int k : {0, 1, 5}) {
    lhs.row(row) = im.reduced.col(k).transpose();
    rhs(row) = ell(k) - eq.lambda;
    ++row;
  }
  eq.nu = lhs.colPivHouseholderQr().solve(rhs);
  CHECK(kkt_residual(spec, eq, eps) > 0.01);
}

TEST_CASE("wardrop gap certifies equilibria and rejects non-equilibria") {
  const GameSpec spec = wheatstone();
  const Vector eps = zero_eps(spec);
  const Equilibrium eq = solve_frank_wolfe(spec, eps, 1e-10);
  CHECK(wardrop_gap(spec, eq.y, eps) <= 1e-6 * spec.mass() * max_cost(spec, eq.y, eps));

  const GameSpec swap = swap_game();
  Vector point(2);
  point << 1.0, 1.0;
  CHECK(wardrop_gap(swap, point, Vector::Zero(2)) == doctest::Approx(0.0).epsilon(1e-12));

  Vector cheap_cycle = Vector::Zero(6);
  cheap_cycle(3) = cheap_cycle(4) = cheap_cycle(5) = 1.0 / 3.0;
  CHECK(wardrop_gap(spec, cheap_cycle, eps) > 0.01);
}

TEST_CASE("auto solver picks the interior path when it exists") {
  const Equilibrium fig2 = solve_auto(fig2_game(), Vector::Zero(4));
  CHECK(fig2.solver == SolverKind::InteriorKKT);
  CHECK(fig2.assumption4_ok);

  const Equilibrium wheat = solve_auto(wheatstone(), Vector::Zero(6));
  CHECK(wheat.solver == SolverKind::FrankWolfe);
  CHECK(wheat.y.minCoeff() >= 0.0);
}

TEST_CASE("equilibrium invariants hold on every returned equilibrium") {
  std::uint64_t seed = 3000;
  std::vector<GameSpec> games = {fig2_game(), swap_game(), selfloop_game(), wheatstone()};
  for (int i = 0; i < 3; ++i) {
    std::uint64_t used = 0;
    games.push_back(random_interior_game(seed, &used));
    seed = used + 1;
  }
  for (const GameSpec& spec : games) {
    const Vector eps = zero_eps(spec);
    const Equilibrium eq = solve_auto(spec, eps);
    const IncidenceMatrix im = build_incidence(spec);
    const double M = spec.mass();
    CHECK((im.reduced * eq.y).lpNorm<Eigen::Infinity>() <= 1e-8 * M);
    CHECK(std::abs(eq.y.sum() - M) <= 1e-8 * M);
    CHECK(eq.y.minCoeff() >= -1e-10);
    const double scale = max_cost(spec, eq.y, eps);
    CHECK(eq.mu.dot(eq.y) <= 1e-8 * M * scale);
    CHECK(eq.mu.minCoeff() >= -1e-8 * scale);
    CHECK(eq.kkt_residual <= 1e-6);
    CHECK(eq.wardrop_gap <= 1e-6 * M * scale);
  }
}
