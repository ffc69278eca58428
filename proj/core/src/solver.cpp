#include "mdpcg/solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace mdpcg {

namespace {

constexpr double kInteriorFrac = 1e-9;    // assumption-4 gate: min y > 1e-9 * M/K
constexpr double kSupportFrac = 1e-7;     // dual-recovery support: y > 1e-7 * M/K
constexpr double kRviDamping = 0.5;       // aperiodicity transform weight on I
constexpr double kRviSpanTol = 1e-10;
constexpr int kRviMaxSweeps = 100000;
constexpr double kPowerIterTol = 1e-12;
constexpr int kPowerIterMax = 200000;

Matrix stacked_constraints(const GameSpec& spec) {
  // N = [E_reduced^T, 1], K x S.
  const IncidenceMatrix im = build_incidence(spec);
  const int K = spec.num_hyperarcs();
  const int S = spec.num_states();
  Matrix N(K, S);
  N.leftCols(S - 1) = im.reduced.transpose();
  N.col(S - 1).setOnes();
  return N;
}

double cost_scale(const Vector& ell) {
  return std::max(1.0, ell.lpNorm<Eigen::Infinity>());
}

struct RestrictedSolve {
  Vector y;  // full K, zeros off support
  Vector nu;
  double lambda = 0.0;
  bool ok = false;
};

// Equality KKT solve restricted to a support set; affine costs.
RestrictedSolve solve_restricted_affine(const GameSpec& spec, const Matrix& N,
                                        const std::vector<int>& support, const Vector& eps) {
  const int S = spec.num_states();
  const int K = spec.num_hyperarcs();
  const int n = static_cast<int>(support.size());
  RestrictedSolve out;
  if (n < 1) return out;

  const Vector& a = spec.costs().slope();
  const Vector& b = spec.costs().intercept();
  Matrix sys = Matrix::Zero(n + S, n + S);
  Vector rhs = Vector::Zero(n + S);
  for (int i = 0; i < n; ++i) {
    sys(i, i) = a(support[i]);
    sys.row(i).segment(n, S) = -N.row(support[i]);
    sys.col(i).segment(n, S) = N.row(support[i]).transpose();
    rhs(i) = -(b(support[i]) + eps(support[i]));
  }
  rhs(n + S - 1) = spec.mass();

  Eigen::FullPivLU<Matrix> lu(sys);
  if (!lu.isInvertible()) return out;
  const Vector sol = lu.solve(rhs);
  out.y = Vector::Zero(K);
  for (int i = 0; i < n; ++i) out.y(support[i]) = sol(i);
  out.nu = sol.segment(n, S - 1);
  out.lambda = sol(n + S - 1);
  out.ok = true;
  return out;
}

// Newton refinement of the support-restricted stationarity system for
// general differentiable costs.
RestrictedSolve solve_restricted_newton(const GameSpec& spec, const Matrix& N,
                                        const std::vector<int>& support, const Vector& eps,
                                        const Vector& y_start, const Vector& nu_start,
                                        double lambda_start) {
  const int S = spec.num_states();
  const int K = spec.num_hyperarcs();
  const int n = static_cast<int>(support.size());
  RestrictedSolve out;
  if (n < 1) return out;

  Vector y = Vector::Zero(K);
  for (int i = 0; i < n; ++i) y(support[i]) = std::max(y_start(support[i]), 0.0);
  Vector nu = nu_start;
  double lambda = lambda_start;

  Vector target = Vector::Zero(S);
  target(S - 1) = spec.mass();

  for (int step = 0; step < 25; ++step) {
    const Vector ell = spec.costs().value(y, eps);
    Vector dual_stack(S);
    dual_stack << nu, lambda;
    Vector f(n + S);
    for (int i = 0; i < n; ++i) {
      f(i) = ell(support[i]) - N.row(support[i]).dot(dual_stack);
    }
    Vector cons = -target;
    for (int i = 0; i < n; ++i) cons += N.row(support[i]).transpose() * y(support[i]);
    f.segment(n, S) = cons;

    const double res = f.lpNorm<Eigen::Infinity>();
    if (res <= 1e-12 * cost_scale(ell)) {
      out.y = y;
      out.nu = nu;
      out.lambda = lambda;
      out.ok = true;
      return out;
    }

    const Matrix G = spec.costs().flow_jacobian(y, eps);
    Matrix sys = Matrix::Zero(n + S, n + S);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) sys(i, j) = G(support[i], support[j]);
      sys.row(i).segment(n, S) = -N.row(support[i]);
      sys.col(i).segment(n, S) = N.row(support[i]).transpose();
    }
    Eigen::FullPivLU<Matrix> lu(sys);
    if (!lu.isInvertible()) return out;
    const Vector delta = lu.solve(-f);
    for (int i = 0; i < n; ++i) y(support[i]) += delta(i);
    nu += delta.segment(n, S - 1);
    lambda += delta(n + S - 1);
  }
  return out;
}

// Support-restricted KKT polish: returns an exact equilibrium when the
// active set identified by the iterate checks out, nothing otherwise.
struct PolishResult {
  bool ok = false;
  Vector y;
  Vector nu;
  double lambda = 0.0;
  Vector mu;
};

PolishResult try_polish(const GameSpec& spec, const Matrix& N, const Vector& y_iter,
                        const Vector& nu_guess, double lambda_guess, const Vector& eps) {
  const int K = spec.num_hyperarcs();
  const double support_tol = kSupportFrac * spec.mass() / K;
  std::vector<int> support;
  for (int k = 0; k < K; ++k) {
    if (y_iter(k) > support_tol) support.push_back(k);
  }

  PolishResult out;
  const bool affine = spec.costs().kind() == CostKind::Affine;
  while (static_cast<int>(support.size()) >= 1) {
    RestrictedSolve rs =
        affine ? solve_restricted_affine(spec, N, support, eps)
               : solve_restricted_newton(spec, N, support, eps, y_iter, nu_guess, lambda_guess);
    if (!rs.ok) return out;
    // Drop the most negative support entry and retry.
    int worst = -1;
    double worst_val = 0.0;
    for (int idx : support) {
      if (rs.y(idx) < worst_val) {
        worst_val = rs.y(idx);
        worst = idx;
      }
    }
    if (worst >= 0) {
      support.erase(std::find(support.begin(), support.end(), worst));
      continue;
    }
    // Support flows positive; verify off-support multipliers.
    const Vector ell = spec.costs().value(rs.y, eps);
    Vector dual_stack(spec.num_states());
    dual_stack << rs.nu, rs.lambda;
    Vector mu = ell - N * dual_stack;
    const double scale = cost_scale(ell);
    for (int idx : support) mu(idx) = 0.0;
    if (mu.minCoeff() < -1e-9 * scale) return out;
    mu = mu.cwiseMax(0.0);
    out.ok = true;
    out.y = rs.y;
    out.nu = rs.nu;
    out.lambda = rs.lambda;
    out.mu = mu;
    return out;
  }
  return out;
}

Equilibrium finish_equilibrium(const GameSpec& spec, const Vector& eps, Vector y, SolverKind kind,
                               int iterations) {
  Equilibrium eq;
  eq.y = std::move(y);
  const Duals duals = recover_duals(spec, eq.y, eps);
  eq.nu = duals.nu;
  eq.lambda = duals.lambda;
  eq.mu = duals.mu;
  eq.solver = kind;
  eq.iterations = iterations;
  eq.kkt_residual = kkt_residual(spec, eq, eps);
  eq.wardrop_gap = wardrop_gap(spec, eq.y, eps);
  eq.min_y = eq.y.minCoeff();
  eq.min_mu = eq.mu.size() > 0 ? eq.mu.minCoeff() : 0.0;
  eq.assumption4_ok = eq.min_y > kInteriorFrac * spec.mass() / spec.num_hyperarcs();
  return eq;
}

}  // namespace

KktPoint solve_kkt_system(const GameSpec& spec, const Vector& eps) {
  if (spec.costs().kind() != CostKind::Affine) {
    throw InvalidArgument("direct KKT solve requires affine costs");
  }
  const int S = spec.num_states();
  const int K = spec.num_hyperarcs();
  const Matrix N = stacked_constraints(spec);
  const Vector& a = spec.costs().slope();
  const Vector& b = spec.costs().intercept();

  Matrix sys = Matrix::Zero(K + S, K + S);
  sys.topLeftCorner(K, K) = a.asDiagonal();
  sys.topRightCorner(K, S) = -N;
  sys.bottomLeftCorner(S, K) = N.transpose();
  Vector rhs = Vector::Zero(K + S);
  rhs.head(K) = -(b + eps);
  rhs(K + S - 1) = spec.mass();

  Eigen::FullPivLU<Matrix> lu(sys);
  if (!lu.isInvertible()) {
    throw SingularSystem("KKT matrix is singular (check cost slopes and incidence rank)");
  }
  KktPoint pt;
  const Vector sol = lu.solve(rhs);
  pt.y = sol.head(K);
  pt.nu = sol.segment(K, S - 1);
  pt.lambda = sol(K + S - 1);
  return pt;
}

Equilibrium solve_relaxed_kkt(const GameSpec& spec, const Vector& eps) {
  const KktPoint pt = solve_kkt_system(spec, eps);
  Equilibrium eq;
  eq.y = pt.y;
  eq.nu = pt.nu;
  eq.lambda = pt.lambda;
  eq.mu = Vector::Zero(spec.num_hyperarcs());
  eq.solver = SolverKind::InteriorKKT;
  eq.iterations = 1;
  eq.kkt_residual = kkt_residual(spec, eq, eps);
  eq.wardrop_gap = wardrop_gap(spec, eq.y, eps);
  eq.min_y = eq.y.minCoeff();
  eq.min_mu = 0.0;
  eq.assumption4_ok = eq.min_y > kInteriorFrac * spec.mass() / spec.num_hyperarcs();
  return eq;
}

Equilibrium solve_interior_kkt(const GameSpec& spec, const Vector& eps) {
  Equilibrium eq = solve_relaxed_kkt(spec, eps);
  if (!eq.assumption4_ok) {
    std::ostringstream os;
    os << "interior KKT solve produced min(y) = " << eq.min_y
       << "; equilibrium is not strictly positive, use solve_frank_wolfe";
    throw NotInterior(os.str());
  }
  return eq;
}

Vector mdp_linear_oracle(const GameSpec& spec, const Vector& c) {
  const int S = spec.num_states();
  const int K = spec.num_hyperarcs();
  const Matrix& P = spec.kernel();
  const auto& actions = spec.actions_of();

  // Relative value iteration on the damped kernel (same stationary
  // distributions and average costs, guaranteed aperiodic).
  Vector v = Vector::Zero(S);
  Vector w(S);
  bool converged = false;
  for (int sweep = 0; sweep < kRviMaxSweeps; ++sweep) {
    for (int s = 0; s < S; ++s) {
      double best = std::numeric_limits<double>::infinity();
      for (int k : actions[s]) {
        const double q = c(k) + kRviDamping * v(s) + (1.0 - kRviDamping) * P.col(k).dot(v);
        best = std::min(best, q);
      }
      w(s) = best;
    }
    const Vector diff = w - v;
    const double span = diff.maxCoeff() - diff.minCoeff();
    v = w.array() - w(0);
    if (span <= kRviSpanTol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw OracleNoConverge("relative value iteration span above tolerance at sweep cap");
  }

  // Greedy policy (ties broken by canonical hyperarc order).
  std::vector<int> policy(S, -1);
  for (int s = 0; s < S; ++s) {
    double best = std::numeric_limits<double>::infinity();
    for (int k : actions[s]) {
      const double q = c(k) + (1.0 - kRviDamping) * P.col(k).dot(v);
      if (q < best - 1e-14) {
        best = q;
        policy[s] = k;
      }
    }
  }

  // Recurrent classes of the induced chain.
  std::vector<std::vector<int>> adj(S);
  for (int s = 0; s < S; ++s) {
    for (const auto& [head, prob] : spec.hyperarcs()[policy[s]].heads) {
      if (prob > 0.0) adj[s].push_back(head);
    }
  }
  const auto components = strongly_connected_components(adj);
  std::vector<std::vector<int>> recurrent;
  for (const auto& comp : components) {
    std::vector<char> in_comp(S, 0);
    for (int s : comp) in_comp[s] = 1;
    bool closed = true;
    for (int s : comp) {
      for (int head : adj[s]) {
        if (!in_comp[head]) {
          closed = false;
          break;
        }
      }
      if (!closed) break;
    }
    if (closed) recurrent.push_back(comp);
  }

  // Stationary distribution per recurrent class (power iteration on the
  // damped class chain; residual checked on the undamped chain).
  double best_cost = std::numeric_limits<double>::infinity();
  Vector best_y;
  for (const auto& comp : recurrent) {
    const int n = static_cast<int>(comp.size());
    std::vector<int> pos(S, -1);
    for (int i = 0; i < n; ++i) pos[comp[i]] = i;
    Matrix chain = Matrix::Zero(n, n);  // column-stochastic on the class
    for (int i = 0; i < n; ++i) {
      const int s = comp[i];
      for (const auto& [head, prob] : spec.hyperarcs()[policy[s]].heads) {
        chain(pos[head], i) += prob;
      }
    }
    Vector mu = Vector::Constant(n, 1.0 / n);
    bool ok = false;
    for (int it = 0; it < kPowerIterMax; ++it) {
      const Vector next = chain * mu;
      if ((next - mu).lpNorm<Eigen::Infinity>() <= kPowerIterTol) {
        mu = next;
        ok = true;
        break;
      }
      mu = kRviDamping * mu + (1.0 - kRviDamping) * next;
      mu /= mu.sum();
    }
    if (!ok) {
      throw OracleNoConverge("stationary distribution power iteration did not converge");
    }
    mu /= mu.sum();
    double avg = 0.0;
    for (int i = 0; i < n; ++i) avg += mu(i) * c(policy[comp[i]]);
    if (avg < best_cost) {
      best_cost = avg;
      best_y = Vector::Zero(K);
      for (int i = 0; i < n; ++i) best_y(policy[comp[i]]) = spec.mass() * mu(i);
    }
  }
  if (best_y.size() == 0) {
    throw DegenerateOracle("induced chain has no recurrent class");
  }

  const IncidenceMatrix im = build_incidence(spec);
  const double feas = (im.full * best_y).lpNorm<Eigen::Infinity>();
  const double mass_err = std::abs(best_y.sum() - spec.mass());
  if (feas > 1e-9 * spec.mass() || mass_err > 1e-9 * spec.mass()) {
    std::ostringstream os;
    os << "oracle vertex infeasible: |Ey| = " << feas << ", mass error = " << mass_err;
    throw DegenerateOracle(os.str());
  }
  return best_y;
}

Duals recover_duals(const GameSpec& spec, const Vector& y, const Vector& eps) {
  const int S = spec.num_states();
  const int K = spec.num_hyperarcs();
  const Vector ell = spec.costs().value(y, eps);
  const Matrix N = stacked_constraints(spec);

  Duals duals;
  duals.lambda = ell.dot(y) / spec.mass();

  const double support_tol = kSupportFrac * spec.mass() / K;
  std::vector<int> support;
  for (int k = 0; k < K; ++k) {
    if (y(k) > support_tol) support.push_back(k);
  }
  if (support.empty()) support.resize(K), std::iota(support.begin(), support.end(), 0);

  Matrix lhs(static_cast<int>(support.size()), S - 1);
  Vector rhs(static_cast<int>(support.size()));
  for (size_t i = 0; i < support.size(); ++i) {
    lhs.row(static_cast<int>(i)) = N.row(support[i]).head(S - 1);
    rhs(static_cast<int>(i)) = ell(support[i]) - duals.lambda;
  }
  duals.nu = S > 1 ? lhs.colPivHouseholderQr().solve(rhs).eval() : Vector(0);

  Vector dual_stack(S);
  dual_stack << duals.nu, duals.lambda;
  duals.mu = ell - N * dual_stack;

  const double scale = cost_scale(ell);
  if (duals.mu.minCoeff() < -1e-6 * scale) {
    std::ostringstream os;
    os << "recovered multiplier min = " << duals.mu.minCoeff()
       << "; flow is not an equilibrium";
    throw NegativeMultiplier(os.str());
  }
  for (int k = 0; k < K; ++k) {
    if (duals.mu(k) < 0.0 && duals.mu(k) >= -1e-8) duals.mu(k) = 0.0;
  }
  return duals;
}

double kkt_residual(const GameSpec& spec, const Equilibrium& eq, const Vector& eps) {
  const int S = spec.num_states();
  const Vector ell = spec.costs().value(eq.y, eps);
  const Matrix N = stacked_constraints(spec);
  Vector dual_stack(S);
  dual_stack << eq.nu, eq.lambda;

  const Vector stationarity = ell - N * dual_stack - eq.mu;
  const Vector flow = N.transpose() * eq.y;  // [E_r y; 1^T y]
  double res = stationarity.lpNorm<Eigen::Infinity>();
  if (S > 1) res = std::max(res, flow.head(S - 1).lpNorm<Eigen::Infinity>());
  res = std::max(res, std::abs(flow(S - 1) - spec.mass()));
  res = std::max(res, std::abs(eq.mu.dot(eq.y)));
  return res;
}

double wardrop_gap(const GameSpec& spec, const Vector& y, const Vector& eps) {
  const Vector ell = spec.costs().value(y, eps);
  const Vector vertex = mdp_linear_oracle(spec, ell);
  return ell.dot(y) - ell.dot(vertex);
}

Equilibrium solve_frank_wolfe(const GameSpec& spec, const Vector& eps, double tol, int max_iter,
                              const FrankWolfeExtras& extras) {
  if (!(tol > 0.0)) throw InvalidArgument("frank-wolfe tolerance must be positive");
  const int K = spec.num_hyperarcs();
  const double M = spec.mass();
  const Matrix N = stacked_constraints(spec);
  const bool affine = spec.costs().kind() == CostKind::Affine;

  Vector y;
  if (extras.start != nullptr) {
    y = *extras.start;
    if (y.size() != K || y.minCoeff() < -1e-12 ||
        std::abs(y.sum() - M) > 1e-9 * M) {
      throw InvalidArgument("frank-wolfe start is not a feasible flow");
    }
  } else {
    y = mdp_linear_oracle(spec, spec.costs().value(Vector::Zero(K), eps));
  }

  double gap = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < max_iter; ++it) {
    const Vector ell = spec.costs().value(y, eps);
    if (extras.potential_trace != nullptr) {
      extras.potential_trace->push_back(potential_eval(spec, y.cwiseMax(0.0), eps));
    }
    const Vector vertex = mdp_linear_oracle(spec, ell);
    gap = ell.dot(y - vertex);
    const double lambda_est = ell.dot(y) / M;
    const double scale = M * std::max(1.0, std::abs(lambda_est));
    if (gap <= tol * scale) break;

    if (extras.polish && gap <= 1e-4 * scale && it % 20 == 0) {
      Duals guess;
      try {
        guess = recover_duals(spec, y, eps);
      } catch (const NegativeMultiplier&) {
        guess.nu = Vector::Zero(spec.num_states() - 1);
        guess.lambda = lambda_est;
      }
      const PolishResult polished = try_polish(spec, N, y, guess.nu, guess.lambda, eps);
      if (polished.ok) {
        return finish_equilibrium(spec, eps, polished.y, SolverKind::FrankWolfe, it);
      }
    }

    const Vector d = vertex - y;
    double gamma;
    if (affine) {
      const double curvature = d.dot(spec.costs().slope().cwiseProduct(d));
      gamma = curvature > 0.0 ? std::clamp(gap / curvature, 0.0, 1.0) : 1.0;
    } else {
      gamma = 2.0 / (it + 2.0);
    }
    y += gamma * d;
  }

  if (extras.polish) {
    Duals guess;
    try {
      guess = recover_duals(spec, y, eps);
    } catch (const NegativeMultiplier&) {
      guess.nu = Vector::Zero(spec.num_states() - 1);
      guess.lambda = spec.costs().value(y, eps).dot(y) / M;
    }
    const PolishResult polished = try_polish(spec, N, y, guess.nu, guess.lambda, eps);
    if (polished.ok) {
      return finish_equilibrium(spec, eps, polished.y, SolverKind::FrankWolfe, it);
    }
  }

  {
    const Vector ell = spec.costs().value(y, eps);
    const double scale = M * std::max(1.0, std::abs(ell.dot(y) / M));
    if (gap > tol * scale) {
      std::ostringstream os;
      os << "frank-wolfe gap " << gap << " above tolerance " << tol * scale << " after "
         << it << " iterations";
      throw MaxIterations(os.str());
    }
  }
  return finish_equilibrium(spec, eps, y.cwiseMax(0.0), SolverKind::FrankWolfe, it);
}

Equilibrium solve_auto(const GameSpec& spec, const Vector& eps, double tol) {
  if (spec.costs().kind() == CostKind::Affine) {
    try {
      return solve_interior_kkt(spec, eps);
    } catch (const NotInterior&) {
      // boundary equilibrium: fall through to Frank-Wolfe
    }
  }
  return solve_frank_wolfe(spec, eps, tol);
}

}  // namespace mdpcg
