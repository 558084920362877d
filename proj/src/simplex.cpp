#include "simplex.hpp"

#include <algorithm>
#include <cmath>

namespace stagg::detail {

namespace {

constexpr double kPivotTolerance = 1e-9;

double power_of_two(double s) { return std::exp2(std::round(std::log2(s))); }

}  // namespace

BoundedSimplex::BoundedSimplex(const Milp& model, const SolverOptions& options) : options_(options) {
  m_ = model.num_rows();
  n_ = model.num_variables();
  A_ = model.matrix();
  row_scale_ = Eigen::VectorXd::Ones(m_);
  col_scale_ = Eigen::VectorXd::Ones(n_);

  // geometric-mean scaling, rounded to powers of two so it introduces no round-off
  for (int pass = 0; pass < 4; ++pass) {
    Eigen::VectorXd rmax = Eigen::VectorXd::Zero(m_), rmin = Eigen::VectorXd::Constant(m_, kInf);
    for (int j = 0; j < n_; ++j) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(A_, j); it; ++it) {
        const double a = std::abs(it.value()) * row_scale_(it.row()) * col_scale_(j);
        rmax(it.row()) = std::max(rmax(it.row()), a);
        rmin(it.row()) = std::min(rmin(it.row()), a);
      }
    }
    for (int i = 0; i < m_; ++i) {
      if (rmax(i) > 0.0) row_scale_(i) /= std::sqrt(rmax(i) * rmin(i));
    }
    for (int j = 0; j < n_; ++j) {
      double cmax = 0.0, cmin = kInf;
      for (Eigen::SparseMatrix<double>::InnerIterator it(A_, j); it; ++it) {
        const double a = std::abs(it.value()) * row_scale_(it.row()) * col_scale_(j);
        cmax = std::max(cmax, a);
        cmin = std::min(cmin, a);
      }
      if (cmax > 0.0) col_scale_(j) /= std::sqrt(cmax * cmin);
    }
  }
  for (int i = 0; i < m_; ++i) row_scale_(i) = power_of_two(row_scale_(i));
  for (int j = 0; j < n_; ++j) col_scale_(j) = power_of_two(col_scale_(j));
  for (int j = 0; j < n_; ++j) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(A_, j); it; ++it) {
      it.valueRef() *= row_scale_(it.row()) * col_scale_(j);
    }
  }

  const int N = n_ + m_;
  cost_.assign(static_cast<std::size_t>(N), 0.0);
  lo0_.resize(static_cast<std::size_t>(N));
  hi0_.resize(static_cast<std::size_t>(N));
  double cmax = 0.0;
  for (int j = 0; j < n_; ++j) {
    const Variable& v = model.variables()[static_cast<std::size_t>(j)];
    cost_[static_cast<std::size_t>(j)] = v.cost * col_scale_(j);
    cmax = std::max(cmax, std::abs(cost_[static_cast<std::size_t>(j)]));
    lo0_[static_cast<std::size_t>(j)] = v.lo / col_scale_(j);
    hi0_[static_cast<std::size_t>(j)] = v.hi / col_scale_(j);
  }
  if (cmax > 0.0) obj_scale_ = power_of_two(1.0 / cmax);
  for (double& c : cost_) c *= obj_scale_;
  for (int i = 0; i < m_; ++i) {
    const Row& r = model.rows()[static_cast<std::size_t>(i)];
    lo0_[static_cast<std::size_t>(n_ + i)] = r.lo * row_scale_(i);
    hi0_[static_cast<std::size_t>(n_ + i)] = r.hi * row_scale_(i);
  }
  constant_ = model.objective_constant;
  reset_bounds();
  x_.assign(static_cast<std::size_t>(N), 0.0);
}

void BoundedSimplex::set_bounds(int j, double lo, double hi) {
  lo_[static_cast<std::size_t>(j)] = lo / col_scale_(j);
  hi_[static_cast<std::size_t>(j)] = hi / col_scale_(j);
}

void BoundedSimplex::reset_bounds() {
  lo_ = lo0_;
  hi_ = hi0_;
}

double BoundedSimplex::objective() const {
  double v = 0.0;
  for (int j = 0; j < n_; ++j) v += cost_[static_cast<std::size_t>(j)] * x_[static_cast<std::size_t>(j)];
  return v / obj_scale_ + constant_;
}

std::vector<double> BoundedSimplex::primal() const {
  std::vector<double> x(static_cast<std::size_t>(n_));
  for (int j = 0; j < n_; ++j) x[static_cast<std::size_t>(j)] = x_[static_cast<std::size_t>(j)] * col_scale_(j);
  return x;
}

void BoundedSimplex::place_nonbasic(int j) {
  const auto u = static_cast<std::size_t>(j);
  VarState& s = basis_.state[u];
  if (s == VarState::upper && hi_[u] < kInf) {
    x_[u] = hi_[u];
  } else if (lo_[u] > -kInf) {
    s = VarState::lower;
    x_[u] = lo_[u];
  } else if (hi_[u] < kInf) {
    s = VarState::upper;
    x_[u] = hi_[u];
  } else {
    s = VarState::free;
    x_[u] = 0.0;
  }
}

void BoundedSimplex::slack_basis() {
  const int N = n_ + m_;
  basis_.state.resize(static_cast<std::size_t>(N), VarState::lower);
  for (int j = 0; j < n_; ++j) {
    if (basis_.state[static_cast<std::size_t>(j)] == VarState::basic) basis_.state[static_cast<std::size_t>(j)] = VarState::lower;
  }
  basis_.head.resize(static_cast<std::size_t>(m_));
  for (int i = 0; i < m_; ++i) {
    basis_.head[static_cast<std::size_t>(i)] = n_ + i;
    basis_.state[static_cast<std::size_t>(n_ + i)] = VarState::basic;
  }
}

bool BoundedSimplex::factor() {
  etas_.clear();
  if (m_ == 0) return true;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(A_.nonZeros() / std::max(1, n_) * m_ + m_));
  for (int i = 0; i < m_; ++i) {
    const int j = basis_.head[static_cast<std::size_t>(i)];
    if (j >= n_) {
      t.emplace_back(j - n_, i, -1.0);
    } else {
      for (Eigen::SparseMatrix<double>::InnerIterator it(A_, j); it; ++it) t.emplace_back(it.row(), i, it.value());
    }
  }
  Eigen::SparseMatrix<double> B(m_, m_);
  B.setFromTriplets(t.begin(), t.end());
  B.makeCompressed();
  lu_.analyzePattern(B);
  lu_.factorize(B);
  return lu_.info() == Eigen::Success;
}

Eigen::VectorXd BoundedSimplex::column(int j) const {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(m_);
  if (j >= n_) {
    a(j - n_) = -1.0;
  } else {
    for (Eigen::SparseMatrix<double>::InnerIterator it(A_, j); it; ++it) a(it.row()) = it.value();
  }
  return a;
}

Eigen::VectorXd BoundedSimplex::ftran(Eigen::VectorXd v) const {
  if (m_ == 0) return v;
  Eigen::VectorXd w = lu_.solve(v);
  for (const Eta& e : etas_) {
    const double t = w(e.r);
    if (t == 0.0) continue;
    const double tp = t / e.pivot;
    w(e.r) = tp;
    for (std::size_t k = 0; k < e.idx.size(); ++k) w(e.idx[k]) -= e.val[k] * tp;
  }
  return w;
}

Eigen::VectorXd BoundedSimplex::btran(Eigen::VectorXd c) const {
  if (m_ == 0) return c;
  for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
    double s = c(it->r);
    for (std::size_t k = 0; k < it->idx.size(); ++k) s -= it->val[k] * c(it->idx[k]);
    c(it->r) = s / it->pivot;
  }
  return lu_.transpose().solve(c);
}

void BoundedSimplex::recompute_basics() {
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m_);
  for (int j = 0; j < n_ + m_; ++j) {
    const auto u = static_cast<std::size_t>(j);
    if (basis_.state[u] == VarState::basic || x_[u] == 0.0) continue;
    if (j >= n_) {
      rhs(j - n_) += x_[u];
    } else {
      for (Eigen::SparseMatrix<double>::InnerIterator it(A_, j); it; ++it) rhs(it.row()) -= it.value() * x_[u];
    }
  }
  const Eigen::VectorXd xb = ftran(rhs);
  for (int i = 0; i < m_; ++i) x_[static_cast<std::size_t>(basis_.head[static_cast<std::size_t>(i)])] = xb(i);
}

// > 0 above the upper bound, < 0 below the lower bound, 0 within tolerance
double BoundedSimplex::infeasibility(int j) const {
  const auto u = static_cast<std::size_t>(j);
  if (x_[u] < lo_[u] - ftol(lo_[u])) return x_[u] - lo_[u];
  if (x_[u] > hi_[u] + ftol(hi_[u])) return x_[u] - hi_[u];
  return 0.0;
}

LpStatus BoundedSimplex::solve(std::int64_t max_iterations, Clock::time_point deadline, const Basis* warm) {
  iterations_ = 0;
  const int N = n_ + m_;
  for (int j = 0; j < N; ++j) {
    if (lo_[static_cast<std::size_t>(j)] > hi_[static_cast<std::size_t>(j)] + ftol(hi_[static_cast<std::size_t>(j)])) {
      return LpStatus::infeasible;
    }
  }

  if (warm && static_cast<int>(warm->head.size()) == m_ && static_cast<int>(warm->state.size()) == N) {
    basis_ = *warm;
  } else {
    basis_.state.assign(static_cast<std::size_t>(N), VarState::lower);
    slack_basis();
  }
  for (int j = 0; j < N; ++j) {
    if (basis_.state[static_cast<std::size_t>(j)] != VarState::basic) place_nonbasic(j);
  }
  if (!factor()) {
    slack_basis();
    for (int j = 0; j < n_; ++j) place_nonbasic(j);
    factor();
  }
  recompute_basics();

  int pivots_since_factor = 0;
  int degenerate_run = 0;
  int numerical_retries = 0;
  Eigen::VectorXd cb(m_);

  while (true) {
    if (iterations_ >= max_iterations) return LpStatus::limit;
    if ((iterations_ & 63) == 0 && Clock::now() > deadline) return LpStatus::limit;
    if (pivots_since_factor >= options_.refactor_interval) {
      if (!factor()) {
        slack_basis();
        for (int j = 0; j < n_; ++j) place_nonbasic(j);
        factor();
      }
      recompute_basics();
      pivots_since_factor = 0;
    }

    bool phase_one = false;
    for (int i = 0; i < m_; ++i) {
      const int j = basis_.head[static_cast<std::size_t>(i)];
      const double inf = infeasibility(j);
      if (inf != 0.0) {
        phase_one = true;
        break;
      }
    }
    for (int i = 0; i < m_; ++i) {
      const int j = basis_.head[static_cast<std::size_t>(i)];
      if (phase_one) {
        const double inf = infeasibility(j);
        cb(i) = inf < 0.0 ? -1.0 : (inf > 0.0 ? 1.0 : 0.0);
      } else {
        cb(i) = cost_[static_cast<std::size_t>(j)];
      }
    }
    const Eigen::VectorXd y = btran(cb);

    // pricing
    const bool bland = degenerate_run > options_.stall_threshold;
    const double dtol = options_.optimality_tolerance;
    int q = -1;
    double best = 0.0;
    int dir = 0;
    for (int j = 0; j < N; ++j) {
      const auto u = static_cast<std::size_t>(j);
      const VarState s = basis_.state[u];
      if (s == VarState::basic) continue;
      if (lo_[u] == hi_[u]) continue;
      double d = phase_one ? 0.0 : cost_[u];
      if (j >= n_) {
        d += y(j - n_);
      } else {
        for (Eigen::SparseMatrix<double>::InnerIterator it(A_, j); it; ++it) d -= y(it.row()) * it.value();
      }
      int want = 0;
      if (s == VarState::lower && d < -dtol) want = 1;
      else if (s == VarState::upper && d > dtol) want = -1;
      else if (s == VarState::free && std::abs(d) > dtol) want = d < 0.0 ? 1 : -1;
      if (want == 0) continue;
      if (bland) {
        q = j;
        dir = want;
        break;
      }
      if (std::abs(d) > best) {
        best = std::abs(d);
        q = j;
        dir = want;
      }
    }

    if (q < 0) {
      if (pivots_since_factor > 0) {
        pivots_since_factor = options_.refactor_interval;  // confirm on a fresh factorization
        continue;
      }
      return phase_one ? LpStatus::infeasible : LpStatus::optimal;
    }

    const Eigen::VectorXd alpha = ftran(column(q));
    const auto uq = static_cast<std::size_t>(q);
    const double range = hi_[uq] - lo_[uq];

    // ratio test: basic i moves at rate rho = -dir * alpha_i per unit step
    int leave = -1;
    double leave_bound = 0.0;
    bool leave_upper = false;
    double theta = kInf;
    {
      double relaxed_min = kInf;
      double exact_min = kInf;
      struct Cand {
        int pos;
        double exact;
        double bound;
        bool upper;
      };
      std::vector<Cand> cands;
      for (int i = 0; i < m_; ++i) {
        if (std::abs(alpha(i)) <= kPivotTolerance) continue;
        const int j = basis_.head[static_cast<std::size_t>(i)];
        const auto u = static_cast<std::size_t>(j);
        const double rho = -dir * alpha(i);
        const double xi = x_[u];
        double b;
        bool upper;
        if (rho < 0.0) {
          if (xi > hi_[u] + ftol(hi_[u])) {
            b = hi_[u];
            upper = true;
          } else if (lo_[u] > -kInf && xi >= lo_[u] - ftol(lo_[u])) {
            b = lo_[u];
            upper = false;
          } else {
            continue;
          }
        } else {
          if (xi < lo_[u] - ftol(lo_[u])) {
            b = lo_[u];
            upper = false;
          } else if (hi_[u] < kInf && xi <= hi_[u] + ftol(hi_[u])) {
            b = hi_[u];
            upper = true;
          } else {
            continue;
          }
        }
        const double exact = (b - xi) / rho;
        const double relaxed = (b - xi + (rho > 0.0 ? ftol(b) : -ftol(b))) / rho;
        relaxed_min = std::min(relaxed_min, relaxed);
        exact_min = std::min(exact_min, exact);
        cands.push_back({i, exact, b, upper});
      }
      if (bland) {
        int best_var = -1;
        for (const Cand& c : cands) {
          if (c.exact <= exact_min + 1e-12) {
            const int j = basis_.head[static_cast<std::size_t>(c.pos)];
            if (best_var < 0 || j < best_var) {
              best_var = j;
              leave = c.pos;
              leave_bound = c.bound;
              leave_upper = c.upper;
              theta = std::max(0.0, c.exact);
            }
          }
        }
      } else {
        double best_alpha = 0.0;
        for (const Cand& c : cands) {
          if (c.exact <= relaxed_min && std::abs(alpha(c.pos)) > best_alpha) {
            best_alpha = std::abs(alpha(c.pos));
            leave = c.pos;
            leave_bound = c.bound;
            leave_upper = c.upper;
            theta = std::max(0.0, c.exact);
          }
        }
      }
      if (range < kInf && (leave < 0 || range <= theta)) {
        leave = -1;
        theta = range;
      }
    }

    if (leave < 0 && theta == kInf) {
      if (!phase_one) return LpStatus::unbounded;
      if (++numerical_retries > 5) return LpStatus::limit;
      pivots_since_factor = options_.refactor_interval;
      continue;
    }

    ++iterations_;
    degenerate_run = theta <= 1e-12 ? degenerate_run + 1 : 0;

    if (theta > 0.0) {
      for (int i = 0; i < m_; ++i) {
        if (alpha(i) != 0.0) x_[static_cast<std::size_t>(basis_.head[static_cast<std::size_t>(i)])] -= dir * theta * alpha(i);
      }
      x_[uq] += dir * theta;
    }

    if (leave < 0) {
      basis_.state[uq] = dir > 0 ? VarState::upper : VarState::lower;
      x_[uq] = dir > 0 ? hi_[uq] : lo_[uq];
      continue;
    }

    const int out = basis_.head[static_cast<std::size_t>(leave)];
    x_[static_cast<std::size_t>(out)] = leave_bound;
    basis_.state[static_cast<std::size_t>(out)] = leave_upper ? VarState::upper : VarState::lower;
    basis_.head[static_cast<std::size_t>(leave)] = q;
    basis_.state[uq] = VarState::basic;

    Eta e;
    e.r = leave;
    e.pivot = alpha(leave);
    for (int i = 0; i < m_; ++i) {
      if (i != leave && alpha(i) != 0.0) {
        e.idx.push_back(i);
        e.val.push_back(alpha(i));
      }
    }
    etas_.push_back(std::move(e));
    ++pivots_since_factor;
  }
}

}  // namespace stagg::detail
