#include "linpool/estimators.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace linpool;

namespace {

MatrixXd gaussian_matrix(Index n, Index p, std::uint64_t seed) {
    Rng r(seed);
    MatrixXd x(n, p);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j) x(i, j) = r.normal();
    return x;
}

}  // namespace

TEST(Scm, MatchesNaiveLoop) {
    const MatrixXd x = gaussian_matrix(7, 3, 1);
    const MatrixXd s = sample_covariance(RealDataset(x));
    for (Index a = 0; a < 3; ++a)
        for (Index b = 0; b < 3; ++b) {
            double ma = 0, mb = 0;
            for (Index i = 0; i < 7; ++i) ma += x(i, a) / 7, mb += x(i, b) / 7;
            double acc = 0;
            for (Index i = 0; i < 7; ++i) acc += (x(i, a) - ma) * (x(i, b) - mb);
            EXPECT_NEAR(s(a, b), acc / 6, 1e-14);
        }
}

TEST(Scm, KnownMeanDividesByN) {
    MatrixXd x(2, 1);
    x << 1.0, 3.0;
    VectorXd mu = VectorXd::Zero(1);
    EXPECT_DOUBLE_EQ(sample_covariance(RealDataset(x, mu))(0, 0), 5.0);
    EXPECT_DOUBLE_EQ(sample_covariance(RealDataset(x))(0, 0), 2.0);
}

TEST(Scm, ComplexIsHermitian) {
    Rng r(2);
    MatrixXcd x(6, 3);
    for (Index i = 0; i < 6; ++i)
        for (Index j = 0; j < 3; ++j) x(i, j) = cdouble(r.normal(), r.normal());
    const MatrixXcd s = sample_covariance(ComplexDataset(x));
    EXPECT_LT((s - s.adjoint()).norm(), 1e-15);
    EXPECT_GT(min_eigenvalue<cdouble>(s), -1e-12);
}

TEST(Scm, SingleSampleNeedsKnownMean) {
    EXPECT_THROW(sample_covariance(RealDataset(MatrixXd::Ones(1, 2))), Error);
}

TEST(SpatialMedian, OneDimensionalIsOrdinaryMedian) {
    MatrixXd x(5, 1);
    x << 3.0, -1.0, 10.0, 2.0, 0.5;
    EXPECT_NEAR(spatial_median(RealDataset(x))(0), 2.0, 1e-8);
}

TEST(SpatialMedian, AnchoredAtDataPoint) {
    // The centre point carries enough mass that the minimizer sits on it.
    MatrixXd x(5, 2);
    x << 0, 0, 1, 0, -1, 0, 0, 1, 0, -1.2;
    const auto res = spatial_median_solve<double>(x);
    EXPECT_TRUE(res.converged);
    EXPECT_LT(res.median.norm(), 1e-8);
}

TEST(SpatialMedian, SatisfiesOptimality) {
    const MatrixXd x = gaussian_matrix(40, 4, 3);
    const VectorXd m = spatial_median(RealDataset(x));
    VectorXd g = VectorXd::Zero(4);
    for (Index i = 0; i < 40; ++i) g += (x.row(i).transpose() - m).normalized();
    EXPECT_LT(g.norm() / 40, 1e-8);
    // Objective cannot be lowered by small perturbations.
    auto obj = [&](const VectorXd& c) { return (x.rowwise() - c.transpose()).rowwise().norm().sum(); };
    Rng r(4);
    for (int k = 0; k < 20; ++k) {
        VectorXd d(4);
        for (Index j = 0; j < 4; ++j) d(j) = r.normal() * 1e-3;
        EXPECT_GE(obj(m + d), obj(m) - 1e-10);
    }
}

TEST(SpatialMedian, TranslationAndRotationEquivariant) {
    const MatrixXd x = gaussian_matrix(25, 3, 5);
    const VectorXd shift = VectorXd::LinSpaced(3, -2, 5);
    const Eigen::HouseholderQR<MatrixXd> qr(gaussian_matrix(3, 3, 6));
    const MatrixXd Q = qr.householderQ();
    const VectorXd m = spatial_median(RealDataset(x));
    const MatrixXd y = (x * Q.transpose()).rowwise() + shift.transpose();
    const VectorXd my = spatial_median(RealDataset(y));
    EXPECT_LT((my - (Q * m + shift)).norm(), 1e-7);
}

TEST(Sscm, TraceIsPAndDropsCentreSamples) {
    MatrixXd x = gaussian_matrix(10, 4, 7);
    VectorXd mu = x.row(0).transpose();  // sample 0 sits on the known centre
    std::string warned;
    auto saved = warning_sink();
    warning_sink() = [&](std::string_view m) { warned = std::string(m); };
    const auto s = sign_statistics(RealDataset(x, mu));
    warning_sink() = saved;
    EXPECT_EQ(s.n_effective, 9);
    EXPECT_FALSE(warned.empty());
    EXPECT_NEAR(s.shape.trace(), 4.0, 1e-12);
    EXPECT_LT((s.shape - s.shape.transpose()).norm(), 1e-15);
}

TEST(Sscm, ScaleInvariant) {
    const MatrixXd x = gaussian_matrix(15, 3, 8);
    const MatrixXd a = sscm_shape(RealDataset(x));
    const MatrixXd b = sscm_shape(RealDataset(x * 7.5));
    EXPECT_LT((a - b).norm(), 1e-9);
}

TEST(Kurtosis, LowerBounds) {
    EXPECT_DOUBLE_EQ(kurtosis_lower_bound(4, Field::Real), -1.0 / 3.0);
    EXPECT_DOUBLE_EQ(kurtosis_lower_bound(4, Field::Complex), -0.2);
}

TEST(Kurtosis, MatchesFormulaOnSmallSample) {
    const MatrixXd x = gaussian_matrix(9, 2, 9);
    double acc = 0;
    for (Index j = 0; j < 2; ++j) {
        const Eigen::ArrayXd c = x.col(j).array() - x.col(j).mean();
        acc += (c.pow(4).mean()) / std::pow(c.square().mean(), 2);
    }
    const double g2 = acc / 2 - 3;
    const double n = 9, N = (n - 1) / ((n - 2) * (n - 3));
    EXPECT_NEAR(kurtosis_raw(RealDataset(x)), N / 3 * ((n + 1) * g2 + 6), 1e-13);
}

TEST(Kurtosis, ClampedAtBound) {
    MatrixXd x(10, 1);
    for (Index i = 0; i < 10; ++i) x(i, 0) = i % 2 ? 1.0 : -1.0;
    const double raw = kurtosis_raw(RealDataset(x));
    EXPECT_LT(raw, kurtosis_lower_bound(1, Field::Real));
    EXPECT_DOUBLE_EQ(kurtosis_estimate(RealDataset(x)), 0.99 * kurtosis_lower_bound(1, Field::Real));
}

TEST(Kurtosis, ConstantColumnsSkipped) {
    MatrixXd x = gaussian_matrix(30, 2, 10);
    x.col(1).setConstant(4.0);
    MatrixXd only = x.leftCols(1);
    EXPECT_NEAR(kurtosis_raw(RealDataset(x)), kurtosis_raw(RealDataset(only)), 1e-14);
    EXPECT_EQ(kurtosis_raw(RealDataset(MatrixXd::Ones(5, 2))), 0.0);
}

TEST(Kurtosis, ConsistentForStudentT) {
    EllipticalLaw law(Family::StudentT, CovarianceModel::ar1(5, 1.0, 0.3), 14.0);
    Rng r(11);
    const auto d = sample<double>(law, 200000, r);
    EXPECT_NEAR(kurtosis_estimate(d), law.kurtosis(), 0.03);
}

TEST(Kurtosis, ConsistentForComplexT) {
    EllipticalLaw law(Family::ComplexStudentT, CovarianceModel::ar1(4, 1.0, cdouble(0.2, 0.3)), 14.0);
    Rng r(12);
    const auto d = sample<cdouble>(law, 200000, r);
    EXPECT_NEAR(kurtosis_estimate(d), law.kurtosis(), 0.03);
}

TEST(Zou, ExactEqualsApproximateForEqualDistances) {
    const VectorXd dist = VectorXd::Constant(12, 3.0);
    EXPECT_NEAR(zou_correction(dist), zou_correction(dist, true), 1e-15);
    EXPECT_DOUBLE_EQ(zou_correction(dist, true), 1.0 / 144 + 2.0 / 1728);
}

TEST(Zou, ScaleFree) {
    Rng r(13);
    VectorXd dist(20);
    for (Index i = 0; i < 20; ++i) dist(i) = 0.5 + r.uniform();
    EXPECT_NEAR(zou_correction(dist), zou_correction(dist * 1e6), 1e-15);
}

TEST(Sphericity, RawEstimateUnbiasedWithKnownMean) {
    // E[tr(shape^2)]/p = p/n + (n-1)/n tr(E shape^2)/p, so the raw estimate
    // is unbiased for tr(L_sgn^2)/p; L_sgn comes from quadrature.
    const Index p = 10, n = 8;
    const auto model = CovarianceModel::ar1(p, 1.0, 0.6);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(materialize(model));
    VectorXd lam = eig.eigenvalues() * (static_cast<double>(p) / eig.eigenvalues().sum());
    const double target = oracle::sign_shape_diagonal(lam).squaredNorm() / static_cast<double>(p);
    EllipticalLaw law(Family::Gaussian, model);
    Rng r(14);
    const int trials = 20000;
    double acc = 0, acc2 = 0;
    for (int t = 0; t < trials; ++t) {
        const auto d = sample<double>(law, n, r, true);
        const double g = sphericity_estimate(d).raw;
        acc += g;
        acc2 += g * g;
    }
    const double mean = acc / trials;
    const double se = std::sqrt((acc2 / trials - mean * mean) / trials);
    EXPECT_NEAR(mean, target, 4 * se);
}

TEST(Sphericity, CorrectedIsClampedToRange) {
    const auto d = RealDataset(gaussian_matrix(6, 20, 15));
    const auto s = sphericity_estimate(d);
    EXPECT_GE(s.corrected, 1.0);
    EXPECT_LE(s.corrected, 20.0);
    EXPECT_GT(s.correction, 0.0);
}

TEST(Delta, MonteCarloMatchesFormula) {
    struct Case {
        Family family;
        double nu;
        bool known;
    };
    for (const Case c : {Case{Family::Gaussian, 0, false}, Case{Family::StudentT, 12, false},
                         Case{Family::Gaussian, 0, true}}) {
        const Index p = 6, n = 12;
        const auto model = CovarianceModel::ar1(p, 2.0, 0.5);
        EllipticalLaw law(c.family, model, c.nu);
        const MatrixXd M = materialize(model);
        const double eta = M.trace() / p, gamma = sphericity_of<double>(M);
        const double expected = delta_estimate(eta, law.kurtosis(), gamma, n, p, Field::Real,
                                               c.known ? std::optional<double>(n) : std::nullopt);
        Rng r(16);
        const int trials = 40000;
        double acc = 0, acc2 = 0;
        for (int t = 0; t < trials; ++t) {
            const auto d = sample<double>(law, n, r, c.known);
            const double e = (sample_covariance(d) - M).squaredNorm() / p;
            acc += e;
            acc2 += e * e;
        }
        const double mean = acc / trials;
        const double se = std::sqrt((acc2 / trials - mean * mean) / trials);
        EXPECT_NEAR(mean, expected, 4 * se) << static_cast<int>(c.family) << " known=" << c.known;
    }
}

TEST(Delta, ComplexMonteCarloMatchesFormula) {
    const Index p = 5, n = 10;
    const auto model = CovarianceModel::ar1(p, 1.0, std::polar(0.5, 1.0));
    EllipticalLaw law(Family::ComplexStudentT, model, 12.0);
    const MatrixXcd M = materialize_complex(model);
    const double eta = M.trace().real() / p, gamma = sphericity_of<cdouble>(M);
    const double expected = delta_estimate(eta, law.kurtosis(), gamma, n, p, Field::Complex);
    Rng r(17);
    const int trials = 40000;
    double acc = 0, acc2 = 0;
    for (int t = 0; t < trials; ++t) {
        const auto d = sample<cdouble>(law, n, r);
        const double e = (sample_covariance(d) - M).squaredNorm() / p;
        acc += e;
        acc2 += e * e;
    }
    const double mean = acc / trials;
    const double se = std::sqrt((acc2 / trials - mean * mean) / trials);
    EXPECT_NEAR(mean, expected, 4 * se);
}

TEST(Delta, NonPositiveIsConditioningError) {
    try {
        delta_estimate(1.0, -10.0, 1.0, 5, 3, Field::Real);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Conditioning);
    }
}

TEST(PoolingStats, StructureAndOracle) {
    std::vector<RealDataset> data;
    Rng r(18);
    for (int k = 0; k < 3; ++k)
        data.push_back(sample<double>(EllipticalLaw(Family::Gaussian, CovarianceModel::ar1(8, 1.0 + k, 0.2 * k)),
                                      10 + 5 * k, r));
    const auto cls = all_class_statistics(data);
    const auto st = pooling_statistics(cls);
    st.validate();
    for (Index k = 0; k < 3; ++k) {
        EXPECT_NEAR(st.C(k, k), cls[static_cast<std::size_t>(k)].gamma_star * std::pow(st.f(k), 2), 1e-12);
        EXPECT_GT(st.D(k), 0.0);
    }
    // D + C and its identity-augmented version are positive definite.
    EXPECT_GT(min_eigenvalue<double>(st.system(false)), 0.0);
    EXPECT_GT(min_eigenvalue<double>(st.system(true)), 0.0);

    std::vector<MatrixXd> covs;
    for (int k = 0; k < 2; ++k) covs.push_back(materialize(CovarianceModel::ar1(5, 1.0 + k, 0.3)));
    const auto o = oracle_statistics(covs, {0.0, 0.0}, {10, 10});
    EXPECT_NEAR(o.C(0, 1), (covs[0] * covs[1]).trace() / 5, 1e-12);
    EXPECT_NEAR(o.C(1, 1), (covs[1] * covs[1]).trace() / 5, 1e-12);
}

TEST(PoolingStats, ShapeMismatchNamesClass) {
    std::vector<RealDataset> data{RealDataset(gaussian_matrix(5, 3, 1)), RealDataset(gaussian_matrix(5, 4, 2))};
    try {
        all_class_statistics(data);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("class 1"), std::string::npos);
        EXPECT_EQ(e.kind(), ErrorKind::Shape);
    }
}

TEST(Estimators, InvariantToSampleOrder) {
    EllipticalLaw law(Family::StudentT, CovarianceModel::ar1(7, 1.5, 0.4), 9.0);
    Rng r(18);
    const auto d = sample<double>(law, 15, r);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(15);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + 15, r);
    const RealDataset e(perm * d.X);
    const auto a = class_statistics(d), b = class_statistics(e);
    const double tol = 1e-12;
    EXPECT_LT((a.scm - b.scm).norm(), tol * a.scm.norm());
    EXPECT_LT((a.center - b.center).norm(), 1e-8);
    EXPECT_LT((a.sscm_shape - b.sscm_shape).norm(), 1e-8);
    EXPECT_NEAR(a.eta, b.eta, tol * a.eta);
    EXPECT_NEAR(a.kappa, b.kappa, 1e-12);
    EXPECT_NEAR(a.gamma_star, b.gamma_star, 1e-8);
    EXPECT_NEAR(a.delta, b.delta, 1e-8 * a.delta);
}
