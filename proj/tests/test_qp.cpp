#include "linpool/qp.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace linpool;

namespace {

MatrixXd random_pd(Index d, Rng& r, double cond_floor = 0.05) {
    MatrixXd a(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) a(i, j) = r.normal();
    return a * a.transpose() / static_cast<double>(d) + cond_floor * MatrixXd::Identity(d, d);
}

QpProblem random_problem(Index d, Rng& r, SumConstraint sum) {
    QpProblem q;
    q.B = random_pd(d, r);
    q.c = VectorXd(d);
    for (Index j = 0; j < d; ++j) q.c(j) = r.normal();
    q.lower = VectorXd(d);
    q.upper = VectorXd(d);
    for (Index j = 0; j < d; ++j) {
        const bool free_lo = r.uniform() < 0.2, free_hi = r.uniform() < 0.3;
        const double base = r.uniform(-0.5, 0.1);
        q.lower(j) = free_lo ? -kInf : base;
        q.upper(j) = free_hi ? kInf : base + r.uniform(0.1, 1.5);
    }
    q.sum = sum;
    if (sum != SumConstraint::None) {
        double lo = 0.0;
        for (Index j = 0; j < d; ++j) lo += std::isfinite(q.lower(j)) ? q.lower(j) : -1.0;
        q.sum_value = lo + r.uniform(0.2, 1.0);
        double hi = 0.0;
        for (Index j = 0; j < d; ++j) hi += std::isfinite(q.upper(j)) ? q.upper(j) : 1e9;
        if (sum == SumConstraint::Equal && hi < q.sum_value) q.sum_value = 0.5 * (lo + hi);
    }
    return q;
}

}  // namespace

TEST(Qp, SimpleNonnegativity) {
    QpProblem q;
    q.B = MatrixXd::Identity(2, 2);
    q.c = VectorXd(2);
    q.c << 1.0, -1.0;
    q.lower = VectorXd::Zero(2);
    const auto res = solve_small(q);
    EXPECT_NEAR(res.x(0), 1.0, 1e-14);
    EXPECT_NEAR(res.x(1), 0.0, 1e-14);
    EXPECT_EQ(res.bound_state[1], -1);
}

TEST(Qp, SimplexProjection) {
    // min 1/2|x - v|^2 on the simplex.
    QpProblem q;
    q.B = MatrixXd::Identity(3, 3);
    q.c = VectorXd(3);
    q.c << 0.9, 0.5, -1.0;
    q.lower = VectorXd::Zero(3);
    q.sum = SumConstraint::Equal;
    const auto res = solve_small(q);
    EXPECT_NEAR(res.x(0), 0.7, 1e-14);
    EXPECT_NEAR(res.x(1), 0.3, 1e-14);
    EXPECT_NEAR(res.x(2), 0.0, 1e-14);
}

TEST(Qp, EnumerationAndActiveSetMatchKktOracle) {
    Rng r(21);
    for (int inst = 0; inst < 300; ++inst) {
        const Index d = 1 + static_cast<Index>(r.uniform() * 6);
        const SumConstraint sum = static_cast<SumConstraint>(inst % 3);
        const QpProblem q = random_problem(d, r, sum);
        const VectorXd ref = oracle::kkt_enumeration(q.B, q.c, q.lower, q.upper, q.sum, q.sum_value);
        ASSERT_EQ(ref.size(), d) << "oracle found no KKT point, instance " << inst;
        const auto e = solve_small(q, QpMethod::Enumeration);
        const auto a = solve_small(q, QpMethod::ActiveSet);
        EXPECT_LT((e.x - ref).cwiseAbs().maxCoeff(), 1e-9) << inst;
        EXPECT_LT((a.x - ref).cwiseAbs().maxCoeff(), 1e-9) << inst;
    }
}

TEST(Qp, ActiveSetHandlesLargerProblems) {
    Rng r(22);
    for (int inst = 0; inst < 20; ++inst) {
        const QpProblem q = random_problem(20, r, SumConstraint::Equal);
        const auto a = solve_small(q);
        EXPECT_EQ(a.method, QpMethod::ActiveSet);
        EXPECT_LT(a.kkt_residual, 1e-9);
    }
}

TEST(Qp, InfeasibleAndNonConvexDetected) {
    QpProblem q;
    q.B = MatrixXd::Identity(2, 2);
    q.c = VectorXd::Zero(2);
    q.lower = VectorXd::Constant(2, 1.0);
    q.sum = SumConstraint::Equal;
    q.sum_value = 1.0;
    try {
        solve_small(q);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Infeasible);
    }
    QpProblem n;
    n.B = MatrixXd::Identity(2, 2);
    n.B(1, 1) = -1.0;
    n.c = VectorXd::Zero(2);
    try {
        solve_small(n);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NotStrictlyConvex);
    }
}

TEST(Qp, SingularPsdIsDamped) {
    QpProblem q;
    q.B = MatrixXd::Ones(2, 2);
    q.c = VectorXd::Ones(2);
    q.lower = VectorXd::Zero(2);
    q.sum = SumConstraint::Equal;
    auto saved = warning_sink();
    warning_sink() = [](std::string_view) {};
    const auto res = solve_small(q);
    warning_sink() = saved;
    EXPECT_TRUE(res.regularized);
    EXPECT_NEAR(res.x.sum(), 1.0, 1e-12);
}

TEST(Qp, ProjectionIsEuclidean) {
    Rng r(23);
    for (int t = 0; t < 200; ++t) {
        const Index d = 2 + static_cast<Index>(r.uniform() * 10);
        VectorXd v(d), lo(d), hi(d);
        for (Index j = 0; j < d; ++j) {
            v(j) = 2 * r.normal();
            lo(j) = r.uniform(-1, 0);
            hi(j) = lo(j) + r.uniform(0.1, 2);
        }
        const double s = 0.5 * (lo.sum() + hi.sum());
        const VectorXd x = detail::project_sum_box(v, lo, hi, s);
        const VectorXd y = oracle::project_bisect(v, lo, hi, s);
        EXPECT_LT((x - y).norm(), 1e-9);
        EXPECT_NEAR(x.sum(), s, 1e-10);
    }
}

TEST(BoxEq, MatchesProjectedGradientOracle) {
    Rng r(24);
    for (int inst = 0; inst < 30; ++inst) {
        const Index d = 5 + static_cast<Index>(r.uniform() * 25);
        QpProblem q;
        q.B = random_pd(d, r, 0.1);
        q.c = VectorXd(d);
        for (Index j = 0; j < d; ++j) q.c(j) = r.normal();
        q.lower = VectorXd::Zero(d);
        q.upper = VectorXd::Constant(d, std::max(1.5 / static_cast<double>(d), r.uniform(0.1, 0.6)));
        q.sum = SumConstraint::Equal;
        const auto res = solve_box_eq(q);
        const VectorXd ref = oracle::projected_gradient(q.B, q.c, q.lower, q.upper, 1.0);
        EXPECT_NEAR(res.objective, qp_objective(q.B, q.c, ref), 1e-6 * std::max(1.0, std::abs(res.objective)));
        EXPECT_NEAR(res.x.sum(), 1.0, 1e-10);
        EXPECT_GE(res.x.minCoeff(), -1e-12);
        EXPECT_LE(res.x.maxCoeff(), q.upper(0) + 1e-12);
    }
}

TEST(BoxEq, AgreesWithSmallSolver) {
    Rng r(25);
    for (int inst = 0; inst < 30; ++inst) {
        const QpProblem q = random_problem(6, r, SumConstraint::Equal);
        const auto a = solve_box_eq(q);
        const auto b = solve_small(q);
        EXPECT_NEAR(a.objective, b.objective, 1e-9 * std::max(1.0, std::abs(b.objective)));
    }
}

TEST(BoxEq, RequiresEquality) {
    QpProblem q;
    q.B = MatrixXd::Identity(2, 2);
    q.c = VectorXd::Zero(2);
    EXPECT_THROW(solve_box_eq(q), Error);
}

TEST(Qp, UnboundedReproducesNewtonStep) {
    Rng r(26);
    for (int inst = 0; inst < 50; ++inst) {
        const Index d = 1 + static_cast<Index>(r.uniform() * 10);
        QpProblem q;
        q.B = random_pd(d, r);
        q.c = VectorXd(d);
        for (Index j = 0; j < d; ++j) q.c(j) = r.normal();
        const VectorXd expect = q.B.ldlt().solve(q.c);
        const auto res = solve_small(q);
        EXPECT_LE((res.x - expect).norm(), 1e-10 * expect.norm()) << inst;
    }
}

TEST(Qp, LocalPerturbationsNeverImprove) {
    Rng r(27);
    const double h = 1e-4;
    for (int inst = 0; inst < 200; ++inst) {
        const Index d = 2 + static_cast<Index>(r.uniform() * 7);
        const SumConstraint sum = inst % 2 ? SumConstraint::Equal : SumConstraint::None;
        const QpProblem q = random_problem(d, r, sum);
        const auto res = solve_small(q);
        const double f0 = qp_objective(q.B, q.c, res.x);
        auto feasible = [&](const VectorXd& x) {
            return (x.array() >= q.lower.array()).all() && (x.array() <= q.upper.array()).all();
        };
        for (Index i = 0; i < d; ++i) {
            for (double s : {h, -h}) {
                if (sum == SumConstraint::None) {
                    VectorXd x = res.x;
                    x(i) += s;
                    if (feasible(x)) {
                        EXPECT_GE(qp_objective(q.B, q.c, x), f0 - 1e-13) << inst;
                    }
                } else {
                    // Moves along the equality: transfer mass between two coordinates.
                    for (Index j = 0; j < d; ++j) {
                        if (j == i) continue;
                        VectorXd x = res.x;
                        x(i) += s;
                        x(j) -= s;
                        if (feasible(x)) {
                            EXPECT_GE(qp_objective(q.B, q.c, x), f0 - 1e-13) << inst;
                        }
                    }
                }
            }
        }
    }
}

TEST(Qp, AddingSumConstraintNeverLowersObjective) {
    Rng r(28);
    for (int inst = 0; inst < 200; ++inst) {
        const Index d = 1 + static_cast<Index>(r.uniform() * 8);
        QpProblem q = random_problem(d, r, SumConstraint::Equal);
        const double constrained = solve_small(q).objective;
        q.sum = SumConstraint::None;
        const double free_sum = solve_small(q).objective;
        EXPECT_GE(constrained, free_sum - 1e-12 * std::max(1.0, std::abs(free_sum))) << inst;
    }
}
