#pragma once

// Reference implementations used only by the tests. They trade speed for
// directness and share no code paths with the library solvers.

#include "linpool/qp.hpp"

namespace oracle {

using linpool::Index;
using linpool::MatrixXd;
using linpool::VectorXd;

/// Minimizer of 1/2 x'Bx - c'x over lo <= x <= hi with optional sum
/// constraint, found by checking the KKT conditions on every assignment of
/// {free, at lower, at upper} and every state of the sum constraint. The
/// KKT system of each face is solved by full-pivot LU.
inline VectorXd kkt_enumeration(const MatrixXd& B, const VectorXd& c, const VectorXd& lo, const VectorXd& hi,
                                linpool::SumConstraint sum, double s) {
    const Index d = c.size();
    const double tol = 1e-9;
    std::vector<int> st(static_cast<std::size_t>(d), 0);  // 0 free, 1 lower, 2 upper
    VectorXd best;
    double best_obj = std::numeric_limits<double>::infinity();
    const int states_per_var = 3;
    long total = 1;
    for (Index j = 0; j < d; ++j) total *= states_per_var;
    for (long code = 0; code < total; ++code) {
        long rem = code;
        bool valid = true;
        for (Index j = 0; j < d; ++j) {
            st[static_cast<std::size_t>(j)] = static_cast<int>(rem % states_per_var);
            rem /= states_per_var;
            if (st[static_cast<std::size_t>(j)] == 1 && !std::isfinite(lo(j))) valid = false;
            if (st[static_cast<std::size_t>(j)] == 2 && !std::isfinite(hi(j))) valid = false;
        }
        if (!valid) continue;
        std::vector<bool> sum_states;
        if (sum == linpool::SumConstraint::Equal) sum_states = {true};
        else if (sum == linpool::SumConstraint::AtMost) sum_states = {false, true};
        else sum_states = {false};
        for (bool active : sum_states) {
            // Unknowns: x (d), nu (1 if active). Pinned variables get identity rows.
            const Index m = d + (active ? 1 : 0);
            MatrixXd K = MatrixXd::Zero(m, m);
            VectorXd r = VectorXd::Zero(m);
            for (Index j = 0; j < d; ++j) {
                const int sj = st[static_cast<std::size_t>(j)];
                if (sj == 0) {
                    K.row(j).head(d) = B.row(j);
                    r(j) = c(j);
                    if (active) K(j, d) = 1.0;
                } else {
                    K(j, j) = 1.0;
                    r(j) = sj == 1 ? lo(j) : hi(j);
                }
            }
            if (active) {
                K.row(d).head(d).setOnes();
                r(d) = s;
            }
            Eigen::FullPivLU<MatrixXd> lu(K);
            if (lu.rank() < m) continue;
            const VectorXd sol = lu.solve(r);
            const VectorXd x = sol.head(d);
            const double nu = active ? sol(d) : 0.0;
            // Primal feasibility.
            bool ok = true;
            for (Index j = 0; j < d && ok; ++j) ok = x(j) >= lo(j) - tol && x(j) <= hi(j) + tol;
            if (sum == linpool::SumConstraint::AtMost && !active) ok = ok && x.sum() <= s + tol;
            if (!ok) continue;
            // Dual feasibility: g + nu 1 - l + u = 0 with l, u >= 0 and nu >= 0 for <=.
            const VectorXd g = B * x - c;
            if (sum == linpool::SumConstraint::AtMost && active && nu < -tol) continue;
            for (Index j = 0; j < d && ok; ++j) {
                const double gj = g(j) + nu;
                const int sj = st[static_cast<std::size_t>(j)];
                if (sj == 0) ok = std::abs(gj) <= 1e-7 * (1.0 + std::abs(c(j)));
                else if (sj == 1) ok = gj >= -tol;
                else ok = gj <= tol;
            }
            if (!ok) continue;
            const double obj = 0.5 * x.dot(B * x) - c.dot(x);
            if (obj < best_obj) {
                best_obj = obj;
                best = x;
            }
        }
    }
    return best;
}

/// Euclidean projection onto {lo <= x <= hi, 1'x = s} by bisection on the
/// shift; finite bounds required.
inline VectorXd project_bisect(const VectorXd& v, const VectorXd& lo, const VectorXd& hi, double s) {
    auto total = [&](double t) { return (v.array() - t).max(lo.array()).min(hi.array()).sum(); };
    double a = (v - hi).minCoeff() - 1.0, b = (v - lo).maxCoeff() + 1.0;
    for (int it = 0; it < 200; ++it) {
        const double m = 0.5 * (a + b);
        if (total(m) > s) a = m; else b = m;
    }
    const double t = 0.5 * (a + b);
    return (v.array() - t).max(lo.array()).min(hi.array()).matrix();
}

/// Plain projected gradient with step 1/L for a long fixed horizon.
inline VectorXd projected_gradient(const MatrixXd& B, const VectorXd& c, const VectorXd& lo, const VectorXd& hi, double s,
                                   int iterations = 200000) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(B, Eigen::EigenvaluesOnly);
    const double L = eig.eigenvalues().maxCoeff();
    VectorXd x = project_bisect(VectorXd::Constant(c.size(), s / static_cast<double>(c.size())), lo, hi, s);
    for (int it = 0; it < iterations; ++it) {
        const VectorXd next = project_bisect(x - (B * x - c) / L, lo, hi, s);
        if ((next - x).norm() < 1e-15 * (1.0 + x.norm())) {
            x = next;
            break;
        }
        x = next;
    }
    return x;
}

/// Diagonal of E[p u u'] in the eigenbasis of M for u = y/|y|, y ~ N(0, diag(lambda)):
///   p * int_0^inf lambda_i / (1 + 2 lambda_i t) prod_j (1 + 2 lambda_j t)^{-1/2} dt,
/// integrated with t = w / (1 - w) and composite Simpson on [0, 1].
inline VectorXd sign_shape_diagonal(const VectorXd& lambda, int intervals = 20000) {
    const Index p = lambda.size();
    VectorXd out = VectorXd::Zero(p);
    auto integrand = [&](double w, Index i) {
        if (w >= 1.0) return 0.0;
        const double t = w / (1.0 - w);
        const double jac = 1.0 / ((1.0 - w) * (1.0 - w));
        double log_prod = 0.0;
        for (Index j = 0; j < p; ++j) log_prod -= 0.5 * std::log1p(2.0 * lambda(j) * t);
        return lambda(i) / (1.0 + 2.0 * lambda(i) * t) * std::exp(log_prod) * jac;
    };
    const double h = 1.0 / intervals;
    for (Index i = 0; i < p; ++i) {
        double acc = integrand(0.0, i) + integrand(1.0, i);
        for (int k = 1; k < intervals; ++k) acc += (k % 2 ? 4.0 : 2.0) * integrand(k * h, i);
        out(i) = static_cast<double>(p) * acc * h / 3.0;
    }
    return out;
}

}  // namespace oracle
