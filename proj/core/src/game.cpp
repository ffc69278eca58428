#include "mdpcg/game.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace mdpcg {

namespace {

constexpr double kKernelTol = 1e-12;
constexpr double kMassEps = 1e-12;  // tolerated negative noise in flows

void check_nonnegative_flow(const Vector& y) {
  if (y.size() > 0 && y.minCoeff() < -kMassEps) {
    std::ostringstream os;
    os << "flow has negative entry " << y.minCoeff();
    throw NegativeMass(os.str());
  }
}

// Adaptive Simpson on [a,b] with absolute tolerance.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  if (a == b) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

}  // namespace

CostModel CostModel::affine(Vector slope, Vector intercept) {
  if (slope.size() != intercept.size()) {
    throw InvalidArgument("affine cost slope/intercept size mismatch");
  }
  CostModel m;
  m.kind_ = CostKind::Affine;
  m.dim_ = static_cast<int>(slope.size());
  m.slope_ = std::move(slope);
  m.intercept_ = std::move(intercept);
  return m;
}

CostModel CostModel::general(int dim, GeneralCost hooks) {
  if (!hooks.value || !hooks.flow_jacobian || !hooks.perturbation_jacobian) {
    throw InvalidArgument("general cost model requires all three hooks");
  }
  CostModel m;
  m.kind_ = CostKind::GeneralDifferentiable;
  m.dim_ = dim;
  m.hooks_ = std::move(hooks);
  return m;
}

Vector CostModel::value(const Vector& y, const Vector& eps) const {
  if (kind_ == CostKind::Affine) {
    return slope_.cwiseProduct(y) + intercept_ + eps;
  }
  return hooks_.value(y, eps);
}

Matrix CostModel::flow_jacobian(const Vector& y, const Vector& eps) const {
  if (kind_ == CostKind::Affine) {
    return slope_.asDiagonal();
  }
  return hooks_.flow_jacobian(y, eps);
}

Matrix CostModel::perturbation_jacobian(const Vector& y, const Vector& eps) const {
  if (kind_ == CostKind::Affine) {
    return Matrix::Identity(dim_, dim_);
  }
  return hooks_.perturbation_jacobian(y, eps);
}

GameSpec::GameSpec(int num_states, std::vector<Hyperarc> hyperarcs, CostModel costs, double mass)
    : num_states_(num_states), hyperarcs_(std::move(hyperarcs)), costs_(std::move(costs)),
      mass_(mass) {
  if (num_states_ < 1) throw InvalidArgument("num_states must be positive");
  if (hyperarcs_.empty()) throw InvalidArgument("game needs at least one hyperarc");
  if (!(mass_ > 0.0)) throw InvalidArgument("total mass must be positive");
  const int K = num_hyperarcs();
  if (costs_.dim() != K) throw InvalidArgument("cost model dimension does not match hyperarcs");

  kernel_ = Matrix::Zero(num_states_, K);
  actions_of_.assign(num_states_, {});
  for (int k = 0; k < K; ++k) {
    Hyperarc& arc = hyperarcs_[k];
    if (arc.state < 0 || arc.state >= num_states_) {
      throw InvalidArgument("hyperarc " + std::to_string(k + 1) + " has out-of-range tail state");
    }
    if (arc.heads.empty()) {
      throw InvalidArgument("hyperarc " + std::to_string(k + 1) + " has no head states");
    }
    double sum = 0.0;
    for (auto& [head, prob] : arc.heads) {
      if (head < 0 || head >= num_states_) {
        throw InvalidArgument("hyperarc " + std::to_string(k + 1) +
                              " has out-of-range head state");
      }
      if (prob < 0.0) {
        throw KernelNotStochastic("hyperarc " + std::to_string(k + 1) +
                                  " has a negative head probability");
      }
      sum += prob;
    }
    if (std::abs(sum - 1.0) > kKernelTol) {
      std::ostringstream os;
      os << "hyperarc " << k + 1 << " head probabilities sum to " << sum;
      throw KernelNotStochastic(os.str());
    }
    for (auto& [head, prob] : arc.heads) {
      prob /= sum;  // renormalize within tolerance
      kernel_(head, k) += prob;
    }
    actions_of_[arc.state].push_back(k);
  }
  for (int s = 0; s < num_states_; ++s) {
    if (actions_of_[s].empty()) {
      throw InvalidArgument("state " + std::to_string(s + 1) + " has no actions");
    }
  }
}

IncidenceMatrix build_incidence(const GameSpec& spec) {
  const int S = spec.num_states();
  const int K = spec.num_hyperarcs();
  IncidenceMatrix im;
  im.full = -spec.kernel();
  for (int k = 0; k < K; ++k) {
    im.full(spec.hyperarcs()[k].state, k) += 1.0;  // E = (I (x) 1^T) - P
  }
  im.removed_row = S - 1;
  im.reduced = im.full.topRows(S - 1);
  return im;
}

IncidenceMatrix reduce_incidence(const IncidenceMatrix& incidence) {
  const int S = static_cast<int>(incidence.full.rows());
  const int rank = numerical_rank(incidence.full);
  if (rank < S - 1) {
    std::ostringstream os;
    os << "incidence rank " << rank << " below " << S - 1;
    throw RankDeficient(os.str());
  }
  IncidenceMatrix out = incidence;
  out.removed_row = S - 1;
  out.reduced = incidence.full.topRows(S - 1);
  return out;
}

int numerical_rank(const Matrix& m) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  const double thresh = std::max(m.rows(), m.cols()) * sv(0) * 1e-12;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > thresh) ++rank;
  }
  return rank;
}

std::vector<std::vector<int>> strongly_connected_components(
    const std::vector<std::vector<int>>& adjacency) {
  // Iterative Tarjan.
  const int n = static_cast<int>(adjacency.size());
  std::vector<int> index(n, -1), low(n, 0), on_stack(n, 0);
  std::vector<int> stack;
  std::vector<std::vector<int>> components;
  int next_index = 0;

  struct Frame {
    int v;
    size_t edge;
  };
  for (int root = 0; root < n; ++root) {
    if (index[root] != -1) continue;
    std::vector<Frame> call_stack{{root, 0}};
    index[root] = low[root] = next_index++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call_stack.empty()) {
      Frame& f = call_stack.back();
      if (f.edge < adjacency[f.v].size()) {
        const int w = adjacency[f.v][f.edge++];
        if (index[w] == -1) {
          index[w] = low[w] = next_index++;
          stack.push_back(w);
          on_stack[w] = 1;
          call_stack.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
      } else {
        const int v = f.v;
        call_stack.pop_back();
        if (!call_stack.empty()) {
          low[call_stack.back().v] = std::min(low[call_stack.back().v], low[v]);
        }
        if (low[v] == index[v]) {
          std::vector<int> comp;
          int w;
          do {
            w = stack.back();
            stack.pop_back();
            on_stack[w] = 0;
            comp.push_back(w);
          } while (w != v);
          components.push_back(std::move(comp));
        }
      }
    }
  }
  return components;
}

ValidationReport validate_assumptions(const GameSpec& spec) {
  ValidationReport report;
  const int S = spec.num_states();
  const int K = spec.num_hyperarcs();

  // Kernel stochasticity (holds by construction; reported for completeness).
  report.kernel_stochastic = true;
  for (int k = 0; k < K; ++k) {
    if (std::abs(spec.kernel().col(k).sum() - 1.0) > 1e-12) {
      report.kernel_stochastic = false;
      report.messages.push_back("kernel column " + std::to_string(k + 1) +
                                " is not normalized");
    }
  }

  // Strong connectivity of the primal graph (edge s->s' iff some action
  // reaches s' from s with positive probability).
  std::vector<std::vector<int>> adj(S);
  for (int k = 0; k < K; ++k) {
    const int tail = spec.hyperarcs()[k].state;
    for (const auto& [head, prob] : spec.hyperarcs()[k].heads) {
      if (prob > 0.0) adj[tail].push_back(head);
    }
  }
  report.strongly_connected = strongly_connected_components(adj).size() == 1;
  if (!report.strongly_connected) {
    report.messages.push_back("primal graph is not strongly connected");
  }

  const IncidenceMatrix im = build_incidence(spec);
  report.incidence_rank = numerical_rank(im.full);
  report.rank_ok = report.incidence_rank == S - 1;
  if (!report.rank_ok) {
    report.messages.push_back("incidence rank " + std::to_string(report.incidence_rank) +
                              " != " + std::to_string(S - 1));
  }

  if (spec.costs().kind() == CostKind::Affine) {
    report.costs_monotone = spec.costs().slope().minCoeff() > 0.0;
    if (!report.costs_monotone) {
      report.messages.push_back("affine cost slopes must be strictly positive");
    }
  } else {
    // Check the symmetric part of grad_y l at a uniform feasible-scale point.
    const Vector y = Vector::Constant(K, spec.mass() / K);
    const Matrix G = spec.costs().flow_jacobian(y, Vector::Zero(K));
    const Matrix sym = 0.5 * (G + G.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    report.costs_monotone = es.eigenvalues().minCoeff() > 0.0;
    if (!report.costs_monotone) {
      report.messages.push_back("cost Jacobian symmetric part is not positive definite");
    }
  }

  if (report.all_ok()) {
    report.messages.push_back("all assumptions hold");
  }
  return report;
}

Vector cost_eval(const GameSpec& spec, const Vector& y, const Vector& eps) {
  check_nonnegative_flow(y);
  return spec.costs().value(y, eps);
}

double potential_eval(const GameSpec& spec, const Vector& y, const Vector& eps) {
  check_nonnegative_flow(y);
  const int K = spec.num_hyperarcs();
  if (spec.costs().kind() == CostKind::Affine) {
    const Vector& a = spec.costs().slope();
    const Vector& b = spec.costs().intercept();
    return 0.5 * y.dot(a.cwiseProduct(y)) + (b + eps).dot(y);
  }
  // Separable line integral: coordinate k along u * e_k.
  double total = 0.0;
  Vector probe = Vector::Zero(K);
  for (int k = 0; k < K; ++k) {
    probe.setZero();
    auto integrand = [&](double u) {
      probe(k) = u;
      return spec.costs().value(probe, eps)(k);
    };
    total += integrate(integrand, 0.0, y(k), 1e-10);
    probe(k) = 0.0;
  }
  return total;
}

}  // namespace mdpcg
