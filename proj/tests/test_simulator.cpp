#include "linpool/simulator.hpp"

#include <gtest/gtest.h>

using namespace linpool;

namespace {

ExperimentSpec small_spec(Index trials = 20) {
    ExperimentSpec s;
    s.name = "small";
    s.trials = trials;
    s.seed = 3;
    s.estimators = {"scm", "linpool", "linpool-c", "unconstrained", "oracle", "bartz", "linpool-oracle"};
    s.classes.push_back({EllipticalLaw(Family::StudentT, CovarianceModel::ar1(12, 1.0, 0.4), 8.0), 8, std::nullopt});
    s.classes.push_back({EllipticalLaw(Family::StudentT, CovarianceModel::ar1(12, 2.0, 0.6), 8.0), 20, std::nullopt});
    return s;
}

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

TEST(Nmse, OracleIsExactlyZero) {
    const auto t = run_nmse(small_spec());
    const auto& r = t.row("oracle");
    EXPECT_EQ(r.total_mean, 0.0);
    EXPECT_EQ(t.failed_trials, 0);
}

TEST(Nmse, PoolingBeatsScmOnSmallSetup) {
    const auto t = run_nmse(small_spec(60));
    EXPECT_LT(t.row("linpool").total_mean, t.row("scm").total_mean);
    EXPECT_LT(t.row("linpool-oracle").total_mean, t.row("scm").total_mean);
}

TEST(Nmse, ThreadCountDoesNotChangeOutput) {
    auto s = small_spec();
    const auto a = nmse_csv(run_nmse(s));
    s.threads = 4;
    const auto b = nmse_csv(run_nmse(s));
    const auto c = nmse_csv(run_nmse(s));
    EXPECT_EQ(a, b);
    EXPECT_EQ(b, c);
}

TEST(Nmse, ScmMatchesScaledMseFormula) {
    // Gaussian, M = I, p = 50, n = 26: NMSE(S) = delta = (p + 1) / (n - 1).
    ExperimentSpec s;
    s.trials = 400;
    s.estimators = {"scm"};
    s.classes.push_back({EllipticalLaw(Family::Gaussian, CovarianceModel::ar1(50, 1.0, 0.0)), 26, std::nullopt});
    const auto t = run_nmse(s);
    EXPECT_NEAR(t.row("scm").total_mean, 51.0 / 25.0, 0.05 * 51.0 / 25.0);
}

TEST(Nmse, EstimatedStatisticsBracketPopulationValues) {
    auto s = setups::table1("ar1", 100, 11);
    s.estimators = {"scm"};
    s.record_statistics = true;
    const auto t = run_nmse(s);
    ASSERT_EQ(static_cast<Index>(t.statistics.size()), 100);
    std::vector<MatrixXd> truth;
    std::vector<double> kap;
    std::vector<Index> ns;
    for (const auto& c : s.classes) {
        truth.push_back(materialize(c.law.covariance));
        kap.push_back(c.law.kurtosis());
        ns.push_back(c.n);
    }
    const auto pop = oracle_statistics(truth, kap, ns);
    int inside = 0, total = 0;
    auto check = [&](auto getter, double value) {
        std::vector<double> v;
        for (const auto& st : t.statistics) v.push_back(getter(st));
        ++total;
        if (value >= quantile(v, 0.25) && value <= quantile(v, 0.75)) ++inside;
    };
    for (Index k = 0; k < 4; ++k) check([k](const PoolingStatistics& st) { return st.D(k); }, pop.D(k));
    for (Index i = 0; i < 4; ++i)
        for (Index j = i; j < 4; ++j) check([i, j](const PoolingStatistics& st) { return st.C(i, j); }, pop.C(i, j));
    EXPECT_EQ(total, 14);
    EXPECT_GE(inside, 12);
}

TEST(Nmse, CsvLayout) {
    auto s = setups::table1("ar1", 1);
    s.estimators = {"scm"};
    const auto csv = nmse_csv(run_nmse(s));
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "estimator,class1,class1_std,class2,class2_std,class3,class3_std,class4,class4_std,total,total_std");
    const auto lng = nmse_long_csv(run_nmse(s));
    EXPECT_EQ(lng.substr(0, lng.find('\n')), "experiment,estimator,class,nmse,std");
    EXPECT_NE(lng.find("table1_ar1,scm,total,"), std::string::npos);
}

TEST(Nmse, ValidationErrors) {
    auto s = small_spec();
    s.estimators = {"nope"};
    EXPECT_THROW(run_nmse(s), Error);
    s = small_spec();
    s.classes[1].law = EllipticalLaw(Family::Gaussian, CovarianceModel::ar1(5, 1.0, 0.1));
    EXPECT_THROW(run_nmse(s), Error);
    s = small_spec();
    s.trials = 0;
    EXPECT_THROW(run_nmse(s), Error);
}

TEST(Setups, VaryingKStructure) {
    const auto s = setups::varying_k(8, 1);
    ASSERT_EQ(s.K(), 8);
    EXPECT_EQ(s.mean_mode, MeanMode::ResampledPerTrial);
    EXPECT_FALSE(s.classes[0].rho_range.has_value());
    for (Index k = 1; k <= 8; ++k) {
        const auto& m = s.classes[static_cast<std::size_t>(k - 1)].law.covariance;
        EXPECT_EQ(std::holds_alternative<CompoundSymmetry>(m.kind()), k % 4 == 0);
    }
    EXPECT_NO_THROW(run_nmse(s));
}

TEST(Setups, ComplexAr1Phase) {
    const auto s = setups::complex_ar1(10, 1);
    const auto& m = std::get<Ar1>(s.classes[2].law.covariance.kind());
    EXPECT_NEAR(std::abs(m.rho), 0.5, 1e-15);
    EXPECT_NEAR(std::abs(std::arg(m.rho)), M_PI, 1e-12);
    EXPECT_TRUE(s.is_complex());
}

TEST(Sscm, SphereHasNoBias) {
    double bias = 0, se = 0;
    detail::sscm_bias(VectorXd::Ones(30), 400, 20, 1, 1, bias, se);
    EXPECT_LT(bias, 0.01);
}

TEST(Sscm, BiasShrinksWithDimension) {
    SscmAsymptoticsSpec spec;
    spec.dims = {25, 50, 100, 200};
    spec.bias_trials = 400;
    spec.distance_trials = 20;
    const auto rows = run_sscm_asymptotics(spec);
    ASSERT_EQ(rows.size(), 4u);
    // Decreasing, and bias * sqrt(p) stays bounded by its value at the smallest p.
    const double scaled0 = rows[0].relative_bias * std::sqrt(25.0);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_LT(rows[i].relative_bias, rows[i - 1].relative_bias) << rows[i].p;
        EXPECT_LE(rows[i].relative_bias * std::sqrt(static_cast<double>(rows[i].p)), 1.5 * scaled0) << rows[i].p;
    }
}

TEST(Sscm, DistanceNearTwoOverN) {
    SscmAsymptoticsSpec spec;
    spec.dims = {200};
    spec.bias_trials = 2;
    spec.bias_samples = 1;
    spec.distance_n = {10, 20};
    spec.distance_trials = 200;
    const auto rows = run_sscm_asymptotics(spec);
    for (const auto& r : rows) EXPECT_NEAR(r.distance, 2.0 / static_cast<double>(r.n), 0.2 * 2.0 / static_cast<double>(r.n));
    EXPECT_EQ(sscm_csv(rows).substr(0, 2), "p,");
}
