#include "mdpcg/cycle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace mdpcg {

namespace {

constexpr double kConditionGate = 1e12;
constexpr double kFactorTol = 1e-12;  // E = DT verification
constexpr double kInteriorFrac = 1e-9;

void require_strictly_positive(const GameSpec& spec, const Equilibrium& eq) {
  const double tol = kInteriorFrac * spec.mass() / spec.num_hyperarcs();
  if (!(eq.y.minCoeff() > tol)) {
    std::ostringstream os;
    os << "equilibrium min flow " << eq.y.minCoeff() << " is not strictly positive";
    throw NotStrictlyPositive(os.str());
  }
}

void require_invertible(const TransformationT& transform, int K) {
  if (!transform.invertible) {
    std::ostringstream os;
    os << "transformation is not invertible: " << transform.T.rows() << " edges vs " << K
       << " hyperarcs";
    throw NotInvertible(os.str());
  }
}

Matrix reduced_edge_constraints(const PrimalGraph& primal) {
  // N_c = [D_reduced^T, 1], |edges| x S.
  const int S = static_cast<int>(primal.D.rows());
  const int E = static_cast<int>(primal.D.cols());
  Matrix Nc(E, S);
  Nc.leftCols(S - 1) = primal.D.topRows(S - 1).transpose();
  Nc.col(S - 1).setOnes();
  return Nc;
}

}  // namespace

PrimalGraph derive_primal_graph(const GameSpec& spec) {
  const int S = spec.num_states();
  PrimalGraph graph;
  std::map<std::pair<int, int>, int> seen;
  for (const Hyperarc& arc : spec.hyperarcs()) {
    for (const auto& [head, prob] : arc.heads) {
      if (prob <= 0.0) continue;
      if (head == arc.state) {
        if (S > 1) {
          std::ostringstream os;
          os << "hyperarc at state " << arc.state + 1 << " (action '" << arc.action
             << "') has a self-loop; signed incidence cannot encode it";
          throw SelfLoopUnsupported(os.str());
        }
        continue;  // S == 1: no edges
      }
      const auto key = std::make_pair(arc.state, head);
      if (seen.emplace(key, static_cast<int>(graph.edges.size())).second) {
        graph.edges.push_back(key);
      }
    }
  }
  graph.D = Matrix::Zero(S, static_cast<int>(graph.edges.size()));
  for (size_t j = 0; j < graph.edges.size(); ++j) {
    graph.D(graph.edges[j].first, static_cast<int>(j)) = 1.0;
    graph.D(graph.edges[j].second, static_cast<int>(j)) = -1.0;
  }
  return graph;
}

TransformationT build_transformation(const GameSpec& spec, const PrimalGraph& primal) {
  const int K = spec.num_hyperarcs();
  const int E = static_cast<int>(primal.edges.size());
  std::map<std::pair<int, int>, int> index;
  for (int j = 0; j < E; ++j) index[primal.edges[j]] = j;

  TransformationT out;
  out.T = Matrix::Zero(E, K);
  for (int k = 0; k < K; ++k) {
    const Hyperarc& arc = spec.hyperarcs()[k];
    for (const auto& [head, prob] : arc.heads) {
      if (prob <= 0.0 || head == arc.state) continue;
      out.T(index.at({arc.state, head}), k) += prob;
    }
  }

  const IncidenceMatrix im = build_incidence(spec);
  const double factor_err = (primal.D * out.T - im.full).lpNorm<Eigen::Infinity>();
  if (factor_err > kFactorTol) {
    std::ostringstream os;
    os << "incidence factorization E = DT violated by " << factor_err;
    throw InvalidArgument(os.str());
  }

  if (out.T.size() > 0) {
    Eigen::JacobiSVD<Matrix> svd(out.T);
    const auto& sv = svd.singularValues();
    out.sigma_max = sv(0);
    const double smin = sv(sv.size() - 1);
    out.invertible = E == K && smin > 0.0 && sv(0) / smin < kConditionGate;
  }
  return out;
}

CycleEquilibrium map_equilibrium(const GameSpec& spec, const Equilibrium& eq,
                                 const PrimalGraph& primal, const TransformationT& transform,
                                 const Vector& eps) {
  require_invertible(transform, spec.num_hyperarcs());
  require_strictly_positive(spec, eq);
  const int S = spec.num_states();
  const int E = static_cast<int>(primal.edges.size());

  const Eigen::PartialPivLU<Matrix> lu(transform.T);
  CycleEquilibrium cycle;
  cycle.z = transform.T * eq.y;
  cycle.nu = eq.nu;
  cycle.lambda = eq.lambda;

  // Transformed KKT stack: T^-T l(T^-1 z) - D_r^T nu - lambda 1 = 0,
  // D z = 0, 1^T T^-1 z = M.
  const Vector y_back = lu.solve(cycle.z);
  const Vector ell = spec.costs().value(y_back, eps);
  const Vector transformed_cost = transform.T.transpose().partialPivLu().solve(ell);
  Vector stationarity = transformed_cost - eq.lambda * Vector::Ones(E);
  if (S > 1) {
    stationarity -= primal.D.topRows(S - 1).transpose() * eq.nu;
  }
  double residual = stationarity.lpNorm<Eigen::Infinity>();
  residual = std::max(residual, (primal.D * cycle.z).lpNorm<Eigen::Infinity>());
  residual = std::max(residual, std::abs(y_back.sum() - spec.mass()));
  cycle.kkt_residual = residual;
  if (residual > 1e-8) {
    std::ostringstream os;
    os << "transformed KKT residual " << residual << " exceeds 1e-8";
    throw InvalidArgument(os.str());
  }
  return cycle;
}

StochasticityBound stochasticity_bound_check(const GameSpec& spec, const Equilibrium& eq,
                                             const Vector& eps) {
  const PrimalGraph primal = derive_primal_graph(spec);
  const TransformationT transform = build_transformation(spec, primal);
  require_invertible(transform, spec.num_hyperarcs());
  require_strictly_positive(spec, eq);

  const SensitivityResult sens = compute_sensitivity(spec, eq, eps);
  const int E = static_cast<int>(primal.edges.size());

  const Matrix Tinv = transform.T.partialPivLu().inverse();
  const Matrix Gc = Tinv.transpose() * sens.G * Tinv;
  {
    const Matrix sym = 0.5 * (Gc + Gc.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.eigenvalues().minCoeff() <= 0.0) {
      throw IllConditioned("transformed cost Jacobian is not positive definite");
    }
  }

  const Matrix Nc = reduced_edge_constraints(primal);
  const Eigen::PartialPivLU<Matrix> gc_lu(Gc);
  const Matrix Ginv_N = gc_lu.solve(Nc);
  const Matrix Ginv_I = gc_lu.solve(Matrix::Identity(E, E));
  const Matrix schur = Nc.transpose() * Ginv_N;
  const Matrix ddual = Eigen::PartialPivLU<Matrix>(schur).solve(Nc.transpose() * Ginv_I);
  const Matrix dl = Nc * ddual;
  const Matrix dz = Ginv_N * ddual - Ginv_I;

  const Vector z = transform.T * eq.y;
  const Vector ell_c = Tinv.transpose() * spec.costs().value(eq.y, eps);
  const Vector dJc = dz.transpose() * ell_c + dl.transpose() * z;

  StochasticityBound bound;
  bound.lhs = dJc.norm();
  bound.rhs = transform.sigma_max * sens.dJ_deps.norm();
  bound.holds = bound.lhs <= bound.rhs * (1.0 + 1e-9);
  return bound;
}

}  // namespace mdpcg
