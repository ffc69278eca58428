#include "mdpcg/sensitivity.hpp"

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

namespace mdpcg {

namespace {

constexpr double kInteriorFrac = 1e-9;
constexpr double kConditionGate = 1e12;

Matrix constraint_matrix(const GameSpec& spec) {
  const IncidenceMatrix im = build_incidence(spec);
  const int K = spec.num_hyperarcs();
  const int S = spec.num_states();
  Matrix N(K, S);
  N.leftCols(S - 1) = im.reduced.transpose();
  N.col(S - 1).setOnes();
  return N;
}

void check_positive_definite(const GameSpec& spec, const Matrix& G) {
  if (spec.costs().kind() == CostKind::Affine) {
    if (spec.costs().slope().minCoeff() <= 0.0) {
      throw IllConditioned("affine cost slopes are not strictly positive");
    }
    return;
  }
  const Matrix sym = 0.5 * (G + G.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.eigenvalues().minCoeff() <= 0.0) {
    throw IllConditioned("cost Jacobian symmetric part is not positive definite");
  }
}

SensitivityResult sensitivity_impl(const GameSpec& spec, const Equilibrium& eq, const Vector& eps,
                                   bool require_positive) {
  const int K = spec.num_hyperarcs();
  const int S = spec.num_states();
  const double interior_tol = kInteriorFrac * spec.mass() / K;
  const bool interior = eq.y.minCoeff() > interior_tol;
  if (require_positive && !interior) {
    std::ostringstream os;
    os << "equilibrium min flow " << eq.y.minCoeff() << " is not strictly positive";
    throw NotStrictlyPositive(os.str());
  }

  SensitivityResult r;
  r.assumption4_ok = interior;
  r.N = constraint_matrix(spec);
  r.G = spec.costs().flow_jacobian(eq.y, eps);
  r.J_mat = spec.costs().perturbation_jacobian(eq.y, eps);
  check_positive_definite(spec, r.G);

  Matrix Ginv_N(K, S);
  Matrix Ginv_J(K, K);
  if (spec.costs().kind() == CostKind::Affine) {
    const Vector inv_slope = spec.costs().slope().cwiseInverse();
    Ginv_N = inv_slope.asDiagonal() * r.N;
    Ginv_J = inv_slope.asDiagonal() * r.J_mat;
  } else {
    const Eigen::PartialPivLU<Matrix> lu(r.G);
    Ginv_N = lu.solve(r.N);
    Ginv_J = lu.solve(r.J_mat);
  }

  const Matrix schur = r.N.transpose() * Ginv_N;  // S x S, positive definite
  {
    Eigen::JacobiSVD<Matrix> svd(schur);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    if (!(smin > 0.0) || sv(0) / smin > kConditionGate) {
      throw IllConditioned("N^T G^-1 N condition number beyond 1e12");
    }
  }

  r.ddual_deps = Eigen::PartialPivLU<Matrix>(schur).solve(r.N.transpose() * Ginv_J);
  r.dl_deps = r.N * r.ddual_deps;
  r.dy_deps = Ginv_N * r.ddual_deps - Ginv_J;

  const Vector ell = spec.costs().value(eq.y, eps);
  r.dJ_deps = r.dy_deps.transpose() * ell + r.dl_deps.transpose() * eq.y;
  return r;
}

double fro_discrepancy(const Matrix& numeric, const Matrix& closed) {
  return (numeric - closed).norm() / std::max(1.0, closed.norm());
}

}  // namespace

SensitivityResult compute_sensitivity(const GameSpec& spec, const Equilibrium& eq,
                                      const Vector& eps) {
  return sensitivity_impl(spec, eq, eps, true);
}

SensitivityResult compute_sensitivity_relaxed(const GameSpec& spec, const Equilibrium& eq,
                                              const Vector& eps) {
  return sensitivity_impl(spec, eq, eps, false);
}

Matrix flow_sensitivity(const GameSpec& spec, const Equilibrium& eq, const Vector& eps) {
  return compute_sensitivity(spec, eq, eps).dy_deps;
}

Matrix cost_sensitivity(const GameSpec& spec, const Equilibrium& eq, const Vector& eps) {
  return compute_sensitivity(spec, eq, eps).dl_deps;
}

Matrix dual_sensitivity(const GameSpec& spec, const Equilibrium& eq, const Vector& eps) {
  return compute_sensitivity(spec, eq, eps).ddual_deps;
}

Vector social_cost_sensitivity(const GameSpec& spec, const Equilibrium& eq, const Vector& eps) {
  return compute_sensitivity(spec, eq, eps).dJ_deps;
}

BraessReport braess_from_gradient(const Vector& dJ) {
  BraessReport report;
  const double scale = dJ.lpNorm<Eigen::Infinity>();
  int argmin = 0;
  dJ.minCoeff(&argmin);
  report.paradox_possible = dJ(argmin) < -1e-9 * scale;
  if (report.paradox_possible) {
    Vector negative = (-dJ).cwiseMax(0.0);
    report.worst_direction = negative / negative.norm();
  } else {
    report.worst_direction = Vector::Zero(dJ.size());
    report.worst_direction(argmin) = 1.0;
  }
  report.predicted_rate = report.worst_direction.dot(dJ);
  return report;
}

BraessReport detect_braess(const GameSpec& spec, const Equilibrium& eq, const Vector& eps) {
  return braess_from_gradient(social_cost_sensitivity(spec, eq, eps));
}

SweepTable perturbation_sweep(const GameSpec& spec, const Vector& direction, double eps_max,
                              int steps, const Vector* base_eps, int threads) {
  const int K = spec.num_hyperarcs();
  if (direction.size() != K) throw InvalidArgument("sweep direction has wrong dimension");
  if (direction.size() > 0 && direction.minCoeff() < 0.0) {
    throw InvalidArgument("sweep direction must be nonnegative");
  }
  if (steps < 2) throw InvalidArgument("sweep needs at least 2 steps");
  if (eps_max < 0.0) throw InvalidArgument("sweep eps_max must be nonnegative");

  const Vector base = base_eps != nullptr ? *base_eps : Vector::Zero(K);
  std::vector<double> abscissae;
  for (int i = 0; i <= steps; ++i) {
    const double t = eps_max * i / steps;
    if (abscissae.empty() || t != abscissae.back()) abscissae.push_back(t);
  }

  const int n = static_cast<int>(abscissae.size());
  std::vector<SweepPoint> rows(n);
  std::vector<std::string> errors(n);

  auto solve_point = [&](int i) {
    const double t = abscissae[i];
    const Vector eps = base + t * direction;
    SweepPoint& row = rows[i];
    row.t = t;
    try {
      Equilibrium eq;
      if (spec.costs().kind() == CostKind::Affine) {
        // Sensitivity-pipeline semantics: the equality-reduced solution,
        // flagged when it leaves the nonnegative orthant.
        eq = solve_relaxed_kkt(spec, eps);
      } else {
        eq = solve_frank_wolfe(spec, eps, 1e-10);
      }
      row.y = eq.y;
      row.lambda = eq.lambda;
      row.social_cost = eq.y.dot(spec.costs().value(eq.y, eps));
      row.assumption4_ok = eq.assumption4_ok;
      try {
        const SensitivityResult sens = compute_sensitivity_relaxed(spec, eq, eps);
        row.directional_dJ = sens.dJ_deps.dot(direction);
      } catch (const Error&) {
        row.directional_dJ = std::numeric_limits<double>::quiet_NaN();
      }
    } catch (const Error& err) {
      errors[i] = err.what();
    }
  };

  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) solve_point(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) solve_point(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  SweepTable table;
  table.direction = direction;
  for (int i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      table.aborted = true;
      table.abort_message = errors[i];
      break;
    }
    table.rows.push_back(std::move(rows[i]));
  }
  return table;
}

double finite_difference_check(const GameSpec& spec, const Equilibrium& eq, const Vector& eps,
                               double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) {
    throw InvalidArgument("finite-difference step must lie in [1e-7, 1e-3]");
  }
  const int K = spec.num_hyperarcs();
  const int S = spec.num_states();
  const SensitivityResult closed = compute_sensitivity_relaxed(spec, eq, eps);
  const bool affine = spec.costs().kind() == CostKind::Affine;

  auto solve_at = [&](const Vector& e) -> Equilibrium {
    if (affine) return solve_relaxed_kkt(spec, e);
    return solve_frank_wolfe(spec, e, 1e-12, 200000);
  };

  Matrix dy(K, K), dl(K, K), ddual(S, K);
  Vector dJ(K);
  for (int k = 0; k < K; ++k) {
    Vector delta = Vector::Zero(K);
    delta(k) = h;
    const Equilibrium plus = solve_at(eps + delta);
    const Equilibrium minus = solve_at(eps - delta);
    const Vector ell_plus = spec.costs().value(plus.y, eps + delta);
    const Vector ell_minus = spec.costs().value(minus.y, eps - delta);
    dy.col(k) = (plus.y - minus.y) / (2.0 * h);
    dl.col(k) = (ell_plus - ell_minus) / (2.0 * h);
    if (S > 1) ddual.col(k).head(S - 1) = (plus.nu - minus.nu) / (2.0 * h);
    ddual(S - 1, k) = (plus.lambda - minus.lambda) / (2.0 * h);
    dJ(k) = (plus.y.dot(ell_plus) - minus.y.dot(ell_minus)) / (2.0 * h);
  }

  double worst = fro_discrepancy(dy, closed.dy_deps);
  worst = std::max(worst, fro_discrepancy(dl, closed.dl_deps));
  worst = std::max(worst, fro_discrepancy(ddual, closed.ddual_deps));
  worst = std::max(worst, fro_discrepancy(dJ, closed.dJ_deps));
  return worst;
}

}  // namespace mdpcg
