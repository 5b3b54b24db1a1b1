#pragma once

// Dense strictly convex QP:  minimize 1/2 x^T B x - c^T x
// subject to lower <= x <= upper and optionally 1^T x = s or 1^T x <= s.
//
// solve_small targets the tiny coefficient problems (d <= 24): exact
// enumeration of active sets when the face count is manageable, a primal
// active-set method otherwise. solve_box_eq targets portfolio-sized
// problems with the sum constraint: accelerated projected gradient followed
// by an active-set polish.

#include "linpool/core.hpp"

#include <limits>
#include <numeric>

namespace linpool {

enum class SumConstraint { None, Equal, AtMost };

enum class QpMethod { Auto, Enumeration, ActiveSet };

struct QpProblem {
    MatrixXd B;
    VectorXd c;
    VectorXd lower;  // empty means -inf everywhere
    VectorXd upper;  // empty means +inf everywhere
    SumConstraint sum = SumConstraint::None;
    double sum_value = 1.0;

    Index dim() const { return c.size(); }
};

struct QpResult {
    VectorXd x;
    double objective = 0.0;
    std::vector<int> bound_state;  // -1 at lower, +1 at upper, 0 free
    bool sum_active = false;
    bool regularized = false;       // solved on a Tikhonov-damped copy of B
    QpMethod method = QpMethod::Auto;
    int iterations = 0;
    double kkt_residual = 0.0;      // |x - P(x - grad)|
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double qp_objective(const MatrixXd& B, const VectorXd& c, const VectorXd& x) {
    return 0.5 * x.dot(B * x) - c.dot(x);
}

namespace detail {

struct Prepared {
    MatrixXd B;
    VectorXd c, lo, hi;
    SumConstraint sum;
    double s;
    bool regularized = false;
    double lambda_max = 0.0;
};

inline Prepared prepare(const QpProblem& prob) {
    const Index d = prob.dim();
    if (d < 1) fail(ErrorKind::Shape, "QP must have at least one variable");
    if (prob.B.rows() != d || prob.B.cols() != d) fail(ErrorKind::Shape, "QP: B must be d x d");
    Prepared pr;
    pr.c = prob.c;
    pr.lo = prob.lower.size() == 0 ? VectorXd::Constant(d, -kInf) : prob.lower;
    pr.hi = prob.upper.size() == 0 ? VectorXd::Constant(d, kInf) : prob.upper;
    if (pr.lo.size() != d || pr.hi.size() != d) fail(ErrorKind::Shape, "QP: bound vectors must have length d");
    if (!pr.c.allFinite() || !prob.B.allFinite()) fail(ErrorKind::Data, "QP: non-finite input");
    for (Index j = 0; j < d; ++j) {
        if (std::isnan(pr.lo(j)) || std::isnan(pr.hi(j)) || pr.lo(j) > pr.hi(j) || pr.lo(j) == kInf ||
            pr.hi(j) == -kInf)
            fail(ErrorKind::Infeasible, "QP: inconsistent bounds on variable " + std::to_string(j));
    }
    pr.sum = prob.sum;
    pr.s = prob.sum_value;
    if (pr.sum != SumConstraint::None) {
        const double lo_sum = pr.lo.sum();
        const double hi_sum = pr.hi.sum();
        const double tol = 1e-12 * std::max(1.0, std::abs(pr.s));
        if (lo_sum > pr.s + tol)
            fail(ErrorKind::Infeasible, "QP: lower bounds sum above the sum constraint");
        if (pr.sum == SumConstraint::Equal && hi_sum < pr.s - tol)
            fail(ErrorKind::Infeasible, "QP: upper bounds cannot reach the required sum");
    }

    pr.B = 0.5 * (prob.B + prob.B.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(pr.B, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    if (!(lmax > 0.0) || lmin < -1e-12 * lmax)
        fail(ErrorKind::NotStrictlyConvex, "QP: B is not positive definite (lambda_min=" + std::to_string(lmin) + ")");
    if (lmin <= 1e-12 * lmax) {
        const double ridge = 1e-12 * pr.B.trace() / static_cast<double>(d);
        pr.B.diagonal().array() += ridge;
        pr.regularized = true;
        warn("QP: ill-conditioned quadratic term, solving with Tikhonov damping");
    }
    pr.lambda_max = lmax;
    return pr;
}

/// Euclidean projection onto {lo <= x <= hi, 1^T x = s}: x_i = clip(v_i - tau),
/// with tau found on the sorted breakpoints of the piecewise-linear sum.
inline VectorXd project_sum_box(const VectorXd& v, const VectorXd& lo, const VectorXd& hi, double s) {
    const Index d = v.size();
    auto total = [&](double tau) {
        double acc = 0.0;
        for (Index i = 0; i < d; ++i) acc += std::clamp(v(i) - tau, lo(i), hi(i));
        return acc;
    };
    std::vector<double> bp;
    bp.reserve(static_cast<std::size_t>(2 * d));
    Index free_left = 0;  // coordinates unbounded above (still moving as tau -> -inf)
    Index free_right = 0; // coordinates unbounded below (still moving as tau -> +inf)
    for (Index i = 0; i < d; ++i) {
        if (std::isfinite(hi(i))) bp.push_back(v(i) - hi(i)); else ++free_left;
        if (std::isfinite(lo(i))) bp.push_back(v(i) - lo(i)); else ++free_right;
    }
    std::sort(bp.begin(), bp.end());
    double tau = 0.0;
    if (bp.empty()) {
        tau = (v.sum() - s) / static_cast<double>(d);
    } else {
        // total() is nonincreasing in tau and linear between breakpoints.
        const double first = total(bp.front());
        const double last = total(bp.back());
        if (s >= first) {
            if (free_left == 0) tau = bp.front();
            else tau = bp.front() - (s - first) / static_cast<double>(free_left);
        } else if (s <= last) {
            if (free_right == 0) tau = bp.back();
            else tau = bp.back() + (last - s) / static_cast<double>(free_right);
        } else {
            std::size_t lo_i = 0, hi_i = bp.size() - 1;
            while (hi_i - lo_i > 1) {
                const std::size_t mid = (lo_i + hi_i) / 2;
                if (total(bp[mid]) >= s) lo_i = mid; else hi_i = mid;
            }
            const double t0 = bp[lo_i], t1 = bp[hi_i];
            const double f0 = total(t0), f1 = total(t1);
            tau = f0 == f1 ? t0 : t0 + (f0 - s) * (t1 - t0) / (f0 - f1);
        }
    }
    VectorXd x(d);
    for (Index i = 0; i < d; ++i) x(i) = std::clamp(v(i) - tau, lo(i), hi(i));
    return x;
}

inline VectorXd project_feasible(const VectorXd& v, const Prepared& pr) {
    if (pr.sum == SumConstraint::Equal) return project_sum_box(v, pr.lo, pr.hi, pr.s);
    VectorXd x = v.cwiseMax(pr.lo).cwiseMin(pr.hi);
    if (pr.sum == SumConstraint::AtMost && x.sum() > pr.s) return project_sum_box(v, pr.lo, pr.hi, pr.s);
    return x;
}

inline double kkt_residual(const Prepared& pr, const VectorXd& x) {
    const VectorXd g = pr.B * x - pr.c;
    return (x - project_feasible(x - g, pr)).norm();
}

inline double bound_tol(double bound) { return 1e-12 * std::max(1.0, std::abs(bound)); }

inline QpResult finish(const Prepared& pr, VectorXd x, QpMethod method, int iterations) {
    QpResult res;
    const Index d = x.size();
    res.bound_state.assign(static_cast<std::size_t>(d), 0);
    for (Index j = 0; j < d; ++j) {
        x(j) = std::clamp(x(j), pr.lo(j), pr.hi(j));
        if (std::isfinite(pr.lo(j)) && x(j) <= pr.lo(j) + bound_tol(pr.lo(j))) res.bound_state[static_cast<std::size_t>(j)] = -1;
        else if (std::isfinite(pr.hi(j)) && x(j) >= pr.hi(j) - bound_tol(pr.hi(j))) res.bound_state[static_cast<std::size_t>(j)] = 1;
    }
    res.sum_active = pr.sum == SumConstraint::Equal ||
                     (pr.sum == SumConstraint::AtMost && x.sum() >= pr.s - 1e-12 * std::max(1.0, std::abs(pr.s)));
    res.objective = qp_objective(pr.B, pr.c, x);
    res.kkt_residual = kkt_residual(pr, x);
    res.regularized = pr.regularized;
    res.method = method;
    res.iterations = iterations;
    res.x = std::move(x);
    return res;
}

/// Minimizer of the objective on the face where `pinned` variables sit at
/// `values` and the sum constraint is active if `sum_active`. Returns false
/// when the face is empty or degenerate.
inline bool face_minimizer(const Prepared& pr, const std::vector<int>& state, bool sum_active, VectorXd& x) {
    const Index d = pr.c.size();
    std::vector<Index> free_idx;
    x.resize(d);
    for (Index j = 0; j < d; ++j) {
        const int st = state[static_cast<std::size_t>(j)];
        if (st < 0) x(j) = pr.lo(j);
        else if (st > 0) x(j) = pr.hi(j);
        else free_idx.push_back(j);
    }
    const Index nf = static_cast<Index>(free_idx.size());
    if (nf == 0) {
        if (sum_active) return std::abs(x.sum() - pr.s) <= 1e-12 * std::max(1.0, std::abs(pr.s));
        return true;
    }
    MatrixXd Bff(nf, nf);
    VectorXd rhs(nf);
    for (Index a = 0; a < nf; ++a) {
        const Index ia = free_idx[static_cast<std::size_t>(a)];
        rhs(a) = pr.c(ia);
        for (Index j = 0; j < d; ++j)
            if (state[static_cast<std::size_t>(j)] != 0) rhs(a) -= pr.B(ia, j) * x(j);
        for (Index b = 0; b < nf; ++b) Bff(a, b) = pr.B(ia, free_idx[static_cast<std::size_t>(b)]);
    }
    Eigen::LLT<MatrixXd> llt(Bff);
    if (llt.info() != Eigen::Success) return false;
    VectorXd y = llt.solve(rhs);
    if (sum_active) {
        const VectorXd z = llt.solve(VectorXd::Ones(nf));
        double pinned_sum = 0.0;
        for (Index j = 0; j < d; ++j)
            if (state[static_cast<std::size_t>(j)] != 0) pinned_sum += x(j);
        const double target = pr.s - pinned_sum;
        const double mu = (y.sum() - target) / z.sum();
        y -= mu * z;
    }
    for (Index a = 0; a < nf; ++a) x(free_idx[static_cast<std::size_t>(a)]) = y(a);
    return y.allFinite();
}

inline bool feasible(const Prepared& pr, const VectorXd& x) {
    for (Index j = 0; j < x.size(); ++j) {
        if (x(j) < pr.lo(j) - bound_tol(pr.lo(j))) return false;
        if (x(j) > pr.hi(j) + bound_tol(pr.hi(j))) return false;
    }
    if (pr.sum == SumConstraint::AtMost && x.sum() > pr.s + 1e-12 * std::max(1.0, std::abs(pr.s))) return false;
    return true;
}

inline double enumeration_count(const Prepared& pr) {
    double count = pr.sum == SumConstraint::AtMost ? 2.0 : 1.0;
    for (Index j = 0; j < pr.c.size(); ++j)
        count *= 1.0 + (std::isfinite(pr.lo(j)) ? 1.0 : 0.0) + (std::isfinite(pr.hi(j)) ? 1.0 : 0.0);
    return count;
}

/// Every face of the feasible polytope is visited; the optimum lies in the
/// relative interior of exactly one face, where it is that face's
/// unconstrained minimizer, so the best feasible face minimizer is global.
inline QpResult enumerate(const Prepared& pr) {
    const Index d = pr.c.size();
    std::vector<std::vector<int>> options(static_cast<std::size_t>(d));
    for (Index j = 0; j < d; ++j) {
        auto& o = options[static_cast<std::size_t>(j)];
        o.push_back(0);
        if (std::isfinite(pr.lo(j))) o.push_back(-1);
        if (std::isfinite(pr.hi(j)) && pr.hi(j) != pr.lo(j)) o.push_back(1);
    }
    std::vector<bool> sum_options;
    if (pr.sum == SumConstraint::Equal) sum_options = {true};
    else if (pr.sum == SumConstraint::AtMost) sum_options = {false, true};
    else sum_options = {false};

    std::vector<std::size_t> digit(static_cast<std::size_t>(d), 0);
    std::vector<int> state(static_cast<std::size_t>(d), 0);
    VectorXd best, x;
    double best_obj = kInf;
    int visited = 0;
    for (;;) {
        for (Index j = 0; j < d; ++j) state[static_cast<std::size_t>(j)] = options[static_cast<std::size_t>(j)][digit[static_cast<std::size_t>(j)]];
        for (bool sum_active : sum_options) {
            ++visited;
            if (!face_minimizer(pr, state, sum_active, x)) continue;
            if (!feasible(pr, x)) continue;
            const double obj = qp_objective(pr.B, pr.c, x);
            if (obj < best_obj) {
                best_obj = obj;
                best = x;
            }
        }
        Index j = 0;
        for (; j < d; ++j) {
            auto& dg = digit[static_cast<std::size_t>(j)];
            if (++dg < options[static_cast<std::size_t>(j)].size()) break;
            dg = 0;
        }
        if (j == d) break;
    }
    if (best.size() == 0) fail(ErrorKind::Infeasible, "QP: no feasible point found");
    return finish(pr, best, QpMethod::Enumeration, visited);
}

/// Primal active-set method with constraints a_i^T x >= b_i.
inline QpResult active_set(const Prepared& pr, int max_iter = 0) {
    const Index d = pr.c.size();
    std::vector<VectorXd> rows;
    std::vector<double> rhs;
    for (Index j = 0; j < d; ++j) {
        if (std::isfinite(pr.lo(j))) {
            rows.push_back(VectorXd::Unit(d, j));
            rhs.push_back(pr.lo(j));
        }
        if (std::isfinite(pr.hi(j))) {
            rows.push_back(-VectorXd::Unit(d, j));
            rhs.push_back(-pr.hi(j));
        }
    }
    if (pr.sum == SumConstraint::AtMost) {
        rows.push_back(-VectorXd::Ones(d));
        rhs.push_back(-pr.s);
    }
    const Index m = static_cast<Index>(rows.size());
    const bool has_eq = pr.sum == SumConstraint::Equal;

    VectorXd x = project_feasible(VectorXd::Zero(d), pr);
    std::vector<Index> work;

    auto working_matrix = [&](const std::vector<Index>& w) {
        const Index rows_n = static_cast<Index>(w.size()) + (has_eq ? 1 : 0);
        MatrixXd A(rows_n, d);
        Index r = 0;
        if (has_eq) A.row(r++) = VectorXd::Ones(d).transpose();
        for (Index i : w) A.row(r++) = rows[static_cast<std::size_t>(i)].transpose();
        return A;
    };
    auto independent_with = [&](const std::vector<Index>& w, Index cand) {
        std::vector<Index> w2 = w;
        w2.push_back(cand);
        const MatrixXd A = working_matrix(w2);
        Eigen::FullPivLU<MatrixXd> lu(A);
        return lu.rank() == A.rows();
    };
    for (Index i = 0; i < m; ++i) {
        const double slack = rows[static_cast<std::size_t>(i)].dot(x) - rhs[static_cast<std::size_t>(i)];
        if (std::abs(slack) <= 1e-12 * std::max(1.0, std::abs(rhs[static_cast<std::size_t>(i)])) && independent_with(work, i))
            work.push_back(i);
    }

    if (max_iter <= 0) max_iter = 50 * static_cast<int>(d + m) + 100;
    int it = 0;
    for (; it < max_iter; ++it) {
        const VectorXd g = pr.B * x - pr.c;
        const MatrixXd A = working_matrix(work);
        const Index na = A.rows();
        MatrixXd K = MatrixXd::Zero(d + na, d + na);
        K.topLeftCorner(d, d) = pr.B;
        K.topRightCorner(d, na) = A.transpose();
        K.bottomLeftCorner(na, d) = A;
        VectorXd r = VectorXd::Zero(d + na);
        r.head(d) = -g;
        const VectorXd sol = K.fullPivLu().solve(r);
        const VectorXd step = sol.head(d);
        const double xscale = std::max(1.0, x.cwiseAbs().maxCoeff());
        if (step.norm() <= 1e-13 * xscale) {
            // g = A^T lambda with lambda = -sol.tail; inequality multipliers must be >= 0.
            const VectorXd lambda = -sol.tail(na);
            const Index offset = has_eq ? 1 : 0;
            Index worst = -1;
            double worst_val = -1e-12 * std::max(1.0, g.cwiseAbs().maxCoeff());
            for (Index q = 0; q < static_cast<Index>(work.size()); ++q) {
                if (lambda(q + offset) < worst_val) {
                    worst_val = lambda(q + offset);
                    worst = q;
                }
            }
            if (worst < 0) break;
            work.erase(work.begin() + worst);
            continue;
        }
        double alpha = 1.0;
        Index blocking = -1;
        for (Index i = 0; i < m; ++i) {
            if (std::find(work.begin(), work.end(), i) != work.end()) continue;
            const double ap = rows[static_cast<std::size_t>(i)].dot(step);
            if (ap >= 0.0) continue;
            const double slack = rows[static_cast<std::size_t>(i)].dot(x) - rhs[static_cast<std::size_t>(i)];
            const double a_i = std::max(0.0, slack) / -ap;
            if (a_i < alpha) {
                alpha = a_i;
                blocking = i;
            }
        }
        x += alpha * step;
        if (blocking >= 0) work.push_back(blocking);
    }
    if (it == max_iter) warn("QP: active-set iteration limit reached");
    return finish(pr, x, QpMethod::ActiveSet, it);
}

}  // namespace detail

/// Small dense QP. With QpMethod::Auto, problems of dimension <= 16 whose
/// face count is at most 2^17 are solved by exhaustive face enumeration,
/// the rest by the primal active-set method.
inline QpResult solve_small(const QpProblem& prob, QpMethod method = QpMethod::Auto) {
    if (prob.dim() > 24) fail(ErrorKind::Shape, "solve_small supports at most 24 variables");
    const detail::Prepared pr = detail::prepare(prob);
    if (method == QpMethod::Auto)
        method = (prob.dim() <= 16 && detail::enumeration_count(pr) <= 131072.0) ? QpMethod::Enumeration
                                                                                 : QpMethod::ActiveSet;
    return method == QpMethod::Enumeration ? detail::enumerate(pr) : detail::active_set(pr);
}

struct BoxEqOptions {
    double tolerance = 1e-7;  // KKT residual relative to the problem scale
    int max_iterations = 200000;
};

/// Box + equality QP for portfolio problems: projected gradient with
/// Nesterov extrapolation, exact line search along the projected direction,
/// adaptive restart, and a final polish on the identified active set.
inline QpResult solve_box_eq(const QpProblem& prob, const BoxEqOptions& opt = {}) {
    if (prob.sum != SumConstraint::Equal) fail(ErrorKind::Shape, "solve_box_eq requires the equality constraint");
    const detail::Prepared pr = detail::prepare(prob);
    const Index d = prob.dim();
    const double L = pr.lambda_max * (1.0 + 1e-12) + (pr.regularized ? 1e-12 * pr.B.trace() / static_cast<double>(d) : 0.0);
    const double scale = std::max({pr.lambda_max, pr.c.cwiseAbs().maxCoeff(), 1e-300});
    const double tol = opt.tolerance * scale;

    VectorXd x = detail::project_feasible(VectorXd::Constant(d, pr.s / static_cast<double>(d)), pr);
    VectorXd y = x;
    double t = 1.0;
    double fx = qp_objective(pr.B, pr.c, x);
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        const VectorXd gy = pr.B * y - pr.c;
        const VectorXd target = detail::project_feasible(y - gy / L, pr);
        const VectorXd dir = target - y;
        const double curv = dir.dot(pr.B * dir);
        double alpha = 1.0;
        if (curv > 0.0) alpha = std::clamp(-gy.dot(dir) / curv, 0.0, 1.0);
        VectorXd x_next = y + alpha * dir;
        double f_next = qp_objective(pr.B, pr.c, x_next);
        if (f_next > fx) {
            // Restart from the last iterate with a plain projected step.
            t = 1.0;
            const VectorXd gx = pr.B * x - pr.c;
            const VectorXd tx = detail::project_feasible(x - gx / L, pr);
            const VectorXd dx = tx - x;
            const double cx = dx.dot(pr.B * dx);
            const double ax = cx > 0.0 ? std::clamp(-gx.dot(dx) / cx, 0.0, 1.0) : 1.0;
            x_next = x + ax * dx;
            f_next = qp_objective(pr.B, pr.c, x_next);
            y = x_next;
        } else {
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            y = x_next + ((t - 1.0) / t_next) * (x_next - x);
            y = detail::project_feasible(y, pr);
            t = t_next;
        }
        x = std::move(x_next);
        fx = f_next;
        if ((it % 10) == 0 && L * (x - detail::project_feasible(x - (pr.B * x - pr.c) / L, pr)).norm() <= tol) break;
    }

    // Polish: pin variables at their identified bounds and solve the face exactly.
    std::vector<int> state(static_cast<std::size_t>(d), 0);
    const double gap = 1e-9 * std::max(1.0, x.cwiseAbs().maxCoeff());
    for (Index j = 0; j < d; ++j) {
        if (std::isfinite(pr.lo(j)) && x(j) <= pr.lo(j) + gap) state[static_cast<std::size_t>(j)] = -1;
        else if (std::isfinite(pr.hi(j)) && x(j) >= pr.hi(j) - gap) state[static_cast<std::size_t>(j)] = 1;
    }
    VectorXd polished;
    if (detail::face_minimizer(pr, state, true, polished) && detail::feasible(pr, polished)) {
        const double before = detail::kkt_residual(pr, x);
        const double after = detail::kkt_residual(pr, polished);
        if (after <= before && qp_objective(pr.B, pr.c, polished) <= fx + 1e-14 * std::max(1.0, std::abs(fx)))
            x = polished;
    }
    QpResult res = detail::finish(pr, x, QpMethod::Auto, it);
    if (res.kkt_residual > tol) warn("QP: box+equality solver stopped with KKT residual " + std::to_string(res.kkt_residual));
    return res;
}

}  // namespace linpool
