#pragma once

// Monte Carlo NMSE experiments and SSCM asymptotics checks.

#include "linpool/multitarget.hpp"

#include <map>

namespace linpool {

enum class MeanMode { FixedAcrossTrials, ResampledPerTrial };

struct ClassSpec {
    EllipticalLaw law;
    Index n = 0;
    // When set, the model's |rho| is redrawn uniformly from [lo, hi] each trial.
    std::optional<std::pair<double, double>> rho_range;
};

struct ExperimentSpec {
    std::string name = "experiment";
    std::vector<ClassSpec> classes;
    Index trials = 200;
    std::vector<std::string> estimators{"scm", "linpool", "linpool-c"};
    MeanMode mean_mode = MeanMode::FixedAcrossTrials;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    bool record_statistics = false;
    EstimatorOptions estimator_options{};

    Index K() const { return static_cast<Index>(classes.size()); }
    bool is_complex() const { return !classes.empty() && is_complex_family(classes.front().law.family); }
};

inline const std::vector<std::string>& known_estimators() {
    static const std::vector<std::string> names{"scm",    "linpool", "linpool-c",      "unconstrained",
                                                "oracle", "bartz",   "linpool-oracle"};
    return names;
}

inline void validate(const ExperimentSpec& spec) {
    if (spec.classes.empty()) fail(ErrorKind::Config, "experiment needs at least one class");
    if (spec.trials < 1) fail(ErrorKind::Config, "trials must be >= 1");
    if (spec.estimators.empty()) fail(ErrorKind::Config, "no estimators requested");
    const Index p = spec.classes.front().law.dim();
    const bool cplx = spec.is_complex();
    for (std::size_t k = 0; k < spec.classes.size(); ++k) {
        const auto& c = spec.classes[k];
        c.law.validate();
        if (c.law.dim() != p) fail(ErrorKind::Config, "class " + std::to_string(k + 1) + " has a different dimension");
        if (is_complex_family(c.law.family) != cplx) fail(ErrorKind::Config, "classes mix real and complex laws");
        if (c.n < 2) fail(ErrorKind::Config, "class " + std::to_string(k + 1) + " needs n >= 2");
        if (c.rho_range && !(c.rho_range->first <= c.rho_range->second))
            fail(ErrorKind::Config, "rho range must satisfy lo <= hi");
    }
    for (const auto& e : spec.estimators) {
        if (std::find(known_estimators().begin(), known_estimators().end(), e) == known_estimators().end())
            fail(ErrorKind::Config, "unknown estimator '" + e + "'");
        if (e == "bartz" && cplx) fail(ErrorKind::Config, "bartz estimator supports real data only");
    }
}

struct NmseRow {
    std::string estimator;
    std::vector<double> mean;  // per class
    std::vector<double> std;
    double total_mean = 0.0;
    double total_std = 0.0;
};

struct NmseTable {
    std::string name;
    Index K = 0;
    Index trials = 0;
    Index failed_trials = 0;
    std::vector<NmseRow> rows;
    std::vector<PoolingStatistics> statistics;  // per successful trial, if recorded

    const NmseRow& row(const std::string& est) const {
        for (const auto& r : rows)
            if (r.estimator == est) return r;
        fail(ErrorKind::Config, "estimator '" + est + "' not in table");
    }
};

namespace detail {

inline CovarianceModel with_rho(const CovarianceModel& m, double magnitude) {
    return std::visit(
        [&](const auto& k) -> CovarianceModel {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, Ar1>) {
                const double phase = std::abs(k.rho) > 0.0 ? std::arg(k.rho) : 0.0;
                return CovarianceModel(Ar1{k.sigma2, std::polar(magnitude, phase)}, m.dim());
            } else if constexpr (std::is_same_v<K, CompoundSymmetry>) {
                return CovarianceModel(CompoundSymmetry{k.sigma2, magnitude}, m.dim());
            } else if constexpr (std::is_same_v<K, Banded1>) {
                return CovarianceModel(Banded1{k.sigma2, magnitude}, m.dim());
            } else {
                fail(ErrorKind::Config, "rho randomization needs an AR1, CS or Banded1 model");
            }
        },
        m.kind());
}

template <typename Scalar>
Vector<Scalar> standard_normal_vector(Index p, Rng& rng) {
    Vector<Scalar> v(p);
    for (Index j = 0; j < p; ++j) {
        if constexpr (is_complex_v<Scalar>)
            v(j) = Scalar(rng.normal() * M_SQRT1_2, rng.normal() * M_SQRT1_2);
        else
            v(j) = rng.normal();
    }
    return v;
}

template <typename Scalar>
double nmse(const Matrix<Scalar>& est, const Matrix<Scalar>& truth) {
    return (est - truth).squaredNorm() / truth.squaredNorm();
}

struct TrialOutcome {
    bool ok = false;
    std::vector<std::vector<double>> nmse;  // [estimator][class]
    PoolingStatistics stats;
};

template <typename Scalar>
TrialOutcome run_trial(const ExperimentSpec& spec, const std::vector<VectorXcd>& fixed_means, Index trial) {
    TrialOutcome out;
    Rng rng(spec.seed, static_cast<std::uint64_t>(trial) + 1);
    const Index K = spec.K();
    const Index p = spec.classes.front().law.dim();

    std::vector<Dataset<Scalar>> data;
    std::vector<Matrix<Scalar>> truth;
    std::vector<double> kappas;
    std::vector<Index> sizes;
    for (Index k = 0; k < K; ++k) {
        const ClassSpec& cs = spec.classes[static_cast<std::size_t>(k)];
        EllipticalLaw law = cs.law;
        if (cs.rho_range) law.covariance = with_rho(law.covariance, rng.uniform(cs.rho_range->first, cs.rho_range->second));
        if (spec.mean_mode == MeanMode::ResampledPerTrial)
            law.mean = standard_normal_vector<Scalar>(p, rng).template cast<cdouble>();
        else
            law.mean = fixed_means[static_cast<std::size_t>(k)];
        truth.push_back(materialize<Scalar>(law.covariance));
        data.push_back(sample<Scalar>(law, cs.n, rng));
        kappas.push_back(law.kurtosis());
        sizes.push_back(cs.n);
    }

    std::vector<ClassStatistics<Scalar>> per_class;
    PoolingStatistics stats;
    std::vector<Matrix<Scalar>> scms;
    auto ensure_stats = [&] {
        if (!per_class.empty()) return;
        per_class = all_class_statistics(data, spec.estimator_options);
        stats = pooling_statistics(per_class);
        for (const auto& c : per_class) scms.push_back(c.scm);
    };

    for (const auto& name : spec.estimators) {
        std::vector<Matrix<Scalar>> est;
        if (name == "oracle") {
            est = truth;
        } else if (name == "scm") {
            for (const auto& d : data) est.push_back(sample_covariance(d));
        } else if (name == "linpool" || name == "linpool-c" || name == "unconstrained") {
            ensure_stats();
            PoolingConfig cfg = name == "linpool-c" ? PoolingConfig::linpool_convex() : PoolingConfig::linpool();
            if (name == "unconstrained") cfg.variant = PoolingVariant::Unconstrained;
            est = combine(scms, solve_constrained(stats, cfg));
        } else if (name == "linpool-oracle") {
            ensure_stats();
            est = combine(scms, solve_constrained(oracle_statistics(truth, kappas, sizes), PoolingConfig::linpool()));
        } else if (name == "bartz") {
            if constexpr (is_complex_v<Scalar>) {
                fail(ErrorKind::Config, "bartz estimator supports real data only");
            } else {
                ensure_stats();
                for (Index k = 0; k < K; ++k) {
                    std::vector<MatrixXd> targets;
                    for (Index j = 0; j < K; ++j)
                        if (j != k) targets.push_back(scms[static_cast<std::size_t>(j)]);
                    targets.push_back(per_class[static_cast<std::size_t>(k)].eta * MatrixXd::Identity(p, p));
                    est.push_back(bartz_estimate(data[static_cast<std::size_t>(k)], targets).estimate);
                }
            }
        }
        std::vector<double> e;
        for (Index k = 0; k < K; ++k)
            e.push_back(nmse(est[static_cast<std::size_t>(k)], truth[static_cast<std::size_t>(k)]));
        out.nmse.push_back(std::move(e));
    }
    if (spec.record_statistics) {
        ensure_stats();
        out.stats = stats;
    }
    out.ok = true;
    return out;
}

inline void mean_std(const std::vector<double>& v, double& mean, double& sd) {
    CompensatedSum s;
    for (double x : v) s.add(x);
    mean = v.empty() ? 0.0 : s.value() / static_cast<double>(v.size());
    CompensatedSum ss;
    for (double x : v) ss.add((x - mean) * (x - mean));
    sd = v.size() > 1 ? std::sqrt(ss.value() / static_cast<double>(v.size() - 1)) : 0.0;
}

template <typename Scalar>
NmseTable run_nmse_impl(const ExperimentSpec& spec) {
    const Index K = spec.K();
    const Index p = spec.classes.front().law.dim();
    std::vector<VectorXcd> fixed_means;
    Rng mean_rng(spec.seed, 0);
    for (Index k = 0; k < K; ++k)
        fixed_means.push_back(standard_normal_vector<Scalar>(p, mean_rng).template cast<cdouble>());

    std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(spec.trials));
    parallel_for(outcomes.size(), spec.threads, [&](std::size_t t) {
        try {
            outcomes[t] = run_trial<Scalar>(spec, fixed_means, static_cast<Index>(t));
        } catch (const Error& e) {
            warn("trial " + std::to_string(t) + " aborted: " + e.what());
            outcomes[t].ok = false;
        }
    });

    NmseTable table;
    table.name = spec.name;
    table.K = K;
    table.trials = spec.trials;
    for (const auto& o : outcomes) {
        if (!o.ok) ++table.failed_trials;
        else if (spec.record_statistics) table.statistics.push_back(o.stats);
    }
    for (std::size_t e = 0; e < spec.estimators.size(); ++e) {
        NmseRow row;
        row.estimator = spec.estimators[e];
        std::vector<double> totals;
        std::vector<std::vector<double>> per_class(static_cast<std::size_t>(K));
        for (const auto& o : outcomes) {
            if (!o.ok) continue;
            CompensatedSum tot;
            for (Index k = 0; k < K; ++k) {
                per_class[static_cast<std::size_t>(k)].push_back(o.nmse[e][static_cast<std::size_t>(k)]);
                tot.add(o.nmse[e][static_cast<std::size_t>(k)]);
            }
            totals.push_back(tot.value());
        }
        row.mean.resize(static_cast<std::size_t>(K));
        row.std.resize(static_cast<std::size_t>(K));
        for (std::size_t k = 0; k < per_class.size(); ++k) mean_std(per_class[k], row.mean[k], row.std[k]);
        mean_std(totals, row.total_mean, row.total_std);
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace detail

/// Per-class and total NMSE with standard deviations across trials. Trials
/// use independent streams (seed, trial + 1), so the table does not depend
/// on the thread count.
inline NmseTable run_nmse(const ExperimentSpec& spec) {
    validate(spec);
    return spec.is_complex() ? detail::run_nmse_impl<cdouble>(spec) : detail::run_nmse_impl<double>(spec);
}

inline std::string nmse_csv(const NmseTable& t) {
    std::string out = "estimator";
    for (Index k = 0; k < t.K; ++k) out += ",class" + std::to_string(k + 1) + ",class" + std::to_string(k + 1) + "_std";
    out += ",total,total_std\n";
    char buf[40];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.6g", v);
        return std::string(buf);
    };
    for (const auto& r : t.rows) {
        out += r.estimator;
        for (std::size_t k = 0; k < r.mean.size(); ++k) out += "," + num(r.mean[k]) + "," + num(r.std[k]);
        out += "," + num(r.total_mean) + "," + num(r.total_std) + "\n";
    }
    return out;
}

/// Long format: experiment,estimator,class,nmse,std (class "total" for the sum).
inline std::string nmse_long_csv(const NmseTable& t, bool header = true) {
    std::string out = header ? "experiment,estimator,class,nmse,std\n" : "";
    char buf[80];
    for (const auto& r : t.rows) {
        for (std::size_t k = 0; k < r.mean.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6g\n", k + 1, r.mean[k], r.std[k]);
            out += t.name + "," + r.estimator + "," + buf;
        }
        std::snprintf(buf, sizeof buf, "total,%.6g,%.6g\n", r.total_mean, r.total_std);
        out += t.name + "," + r.estimator + "," + buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bundled setups: p = 100, t with nu = 8, sigma_k^2 = k, rho = 0.3 ... 0.6.

namespace setups {

inline ExperimentSpec table1(const std::string& structure, Index trials = 200, std::uint64_t seed = 1) {
    const std::vector<Index> n{20, 100, 20, 100};
    const std::vector<double> rho{0.3, 0.4, 0.5, 0.6};
    ExperimentSpec spec;
    spec.name = "table1_" + structure;
    spec.trials = trials;
    spec.seed = seed;
    for (std::size_t k = 0; k < 4; ++k) {
        const double s2 = static_cast<double>(k + 1);
        const bool cs = structure == "cs" || (structure == "mixed" && k >= 2);
        if (structure != "ar1" && structure != "cs" && structure != "mixed")
            fail(ErrorKind::Config, "unknown table1 structure '" + structure + "'");
        CovarianceModel m = cs ? CovarianceModel::compound_symmetry(100, s2, rho[k]) : CovarianceModel::ar1(100, s2, rho[k]);
        spec.classes.push_back({EllipticalLaw(Family::StudentT, m, 8.0), n[k], std::nullopt});
    }
    return spec;
}

/// Complex AR1 with rho_k = |rho_k| exp(j 2 pi |rho_k|), n_k = n for all k.
inline ExperimentSpec complex_ar1(Index n, Index trials = 100, std::uint64_t seed = 1) {
    ExperimentSpec spec;
    spec.name = "complex_ar1_n" + std::to_string(n);
    spec.trials = trials;
    spec.seed = seed;
    spec.estimators = {"scm", "linpool", "linpool-c"};
    const std::vector<double> mag{0.3, 0.4, 0.5, 0.6};
    for (std::size_t k = 0; k < 4; ++k) {
        const cdouble rho = std::polar(mag[k], 2.0 * M_PI * mag[k]);
        spec.classes.push_back(
            {EllipticalLaw(Family::ComplexStudentT, CovarianceModel::ar1(100, static_cast<double>(k + 1), rho), 8.0), n,
             std::nullopt});
    }
    return spec;
}

/// K classes with n = 40: class 1 AR1(0.5); classes 4, 8, 12, 16 CS; others
/// AR1; rho_k ~ U[0.1, 0.6] per trial for k >= 2; means redrawn per trial.
inline ExperimentSpec varying_k(Index K, Index trials = 200, std::uint64_t seed = 1) {
    if (K < 1) fail(ErrorKind::Config, "K must be >= 1");
    ExperimentSpec spec;
    spec.name = "varying_k" + std::to_string(K);
    spec.trials = trials;
    spec.seed = seed;
    spec.mean_mode = MeanMode::ResampledPerTrial;
    spec.estimators = {"scm", "linpool"};
    for (Index k = 1; k <= K; ++k) {
        ClassSpec c{EllipticalLaw(Family::StudentT,
                                  (k % 4 == 0) ? CovarianceModel::compound_symmetry(100, 1.0, 0.35)
                                               : CovarianceModel::ar1(100, 1.0, 0.5),
                                  8.0),
                    40, std::nullopt};
        if (k >= 2) c.rho_range = std::make_pair(0.1, 0.6);
        spec.classes.push_back(std::move(c));
    }
    return spec;
}

}  // namespace setups

// ---------------------------------------------------------------------------
// SSCM asymptotics

struct SscmAsymptoticsSpec {
    std::function<CovarianceModel(Index)> model = [](Index p) { return CovarianceModel::ar1(p, 1.0, 0.5); };
    std::vector<Index> dims{25, 100, 400};
    Index bias_trials = 2000;
    Index bias_samples = 50;       // samples per bias trial
    std::vector<Index> distance_n{20};
    Index distance_trials = 200;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

struct SscmAsymptoticsRow {
    Index p = 0;
    double relative_bias = 0.0;     // |E[shape] - Lambda|_F / |Lambda|_F
    double relative_bias_se = 0.0;
    Index n = 0;
    double distance = 0.0;          // E|shape - Lambda_SCM|_F^2 / |Lambda|_F^2
    double distance_se = 0.0;
};

namespace detail {

/// Relative bias of the known-mean SSCM shape. Sampling is done in the
/// eigenbasis of M, where E[shape] is diagonal by sign symmetry, so only
/// the diagonal is averaged. The squared norm is debiased by subtracting
/// the Monte Carlo variance of the diagonal means.
inline void sscm_bias(const VectorXd& eigenvalues, Index trials, Index per_trial, std::uint64_t seed, unsigned threads,
                      double& rel_bias, double& rel_se) {
    const Index p = eigenvalues.size();
    const double pd = static_cast<double>(p);
    const VectorXd lambda = eigenvalues * (pd / eigenvalues.sum());
    const VectorXd root = lambda.cwiseSqrt();

    // Per-trial diagonal means; merged in trial order.
    std::vector<VectorXd> diag(static_cast<std::size_t>(trials));
    parallel_for(diag.size(), threads, [&](std::size_t t) {
        Rng rng(seed, 1000003ULL + t);
        VectorXd acc = VectorXd::Zero(p);
        VectorXd y(p);
        for (Index i = 0; i < per_trial; ++i) {
            for (Index j = 0; j < p; ++j) y(j) = root(j) * rng.normal();
            acc += y.cwiseAbs2() * (pd / y.squaredNorm());
        }
        diag[t] = acc / static_cast<double>(per_trial);
    });
    VectorXd mean = VectorXd::Zero(p);
    for (const auto& d : diag) mean += d;
    mean /= static_cast<double>(trials);
    VectorXd var = VectorXd::Zero(p);
    for (const auto& d : diag) var += (d - mean).cwiseAbs2();
    var /= static_cast<double>(trials - 1);
    const VectorXd mean_var = var / static_cast<double>(trials);  // variance of the mean per entry
    const double raw = (mean - lambda).squaredNorm();
    const double debiased = std::max(0.0, raw - mean_var.sum());
    const double norm = lambda.norm();
    rel_bias = std::sqrt(debiased) / norm;
    // Delta-method standard error of the squared norm, mapped to the norm.
    const double se_sq = 2.0 * std::sqrt((mean - lambda).cwiseAbs2().dot(mean_var));
    rel_se = rel_bias > 0.0 ? se_sq / (2.0 * rel_bias * norm * norm) : std::sqrt(se_sq) / norm;
}

/// Mean of |shape - Lambda_SCM|_F^2 / |Lambda|_F^2 for Gaussian data with
/// known zero mean, using the n x n Gram matrix of the samples.
inline void sscm_distance(const VectorXd& eigenvalues, Index n, Index trials, std::uint64_t seed, unsigned threads,
                          double& mean, double& se) {
    const Index p = eigenvalues.size();
    const double pd = static_cast<double>(p);
    const double eta = eigenvalues.sum() / pd;
    const VectorXd root = eigenvalues.cwiseSqrt();
    const double lambda_norm2 = eigenvalues.squaredNorm() / (eta * eta);
    std::vector<double> vals(static_cast<std::size_t>(trials));
    parallel_for(vals.size(), threads, [&](std::size_t t) {
        Rng rng(seed, 2000003ULL + t);
        MatrixXd Y(n, p);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < p; ++j) Y(i, j) = root(j) * rng.normal();
        const VectorXd norms2 = Y.rowwise().squaredNorm();
        // shape - Lambda_SCM = sum_i w_i y_i y_i^T
        const VectorXd w = (pd / static_cast<double>(n)) * norms2.cwiseInverse().array() -
                           1.0 / (static_cast<double>(n) * eta);
        const MatrixXd G = Y * Y.transpose();
        const double dist2 = w.dot(G.cwiseAbs2() * w);
        vals[t] = dist2 / lambda_norm2;
    });
    double sd = 0.0;
    mean_std(vals, mean, sd);
    se = sd / std::sqrt(static_cast<double>(trials));
}

}  // namespace detail

inline std::vector<SscmAsymptoticsRow> run_sscm_asymptotics(const SscmAsymptoticsSpec& spec) {
    if (spec.bias_trials < 2 || spec.bias_samples < 1 || spec.distance_trials < 2)
        fail(ErrorKind::Config, "sscm asymptotics needs at least 2 trials");
    std::vector<SscmAsymptoticsRow> rows;
    for (Index p : spec.dims) {
        const CovarianceModel model = spec.model(p);
        detail::validate(model);
        if (model.is_complex()) fail(ErrorKind::Config, "sscm asymptotics supports real models only");
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(materialize(model), Eigen::EigenvaluesOnly);
        const VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
        double bias = 0.0, bias_se = 0.0;
        detail::sscm_bias(ev, spec.bias_trials, spec.bias_samples, spec.seed + static_cast<std::uint64_t>(p),
                          spec.threads, bias, bias_se);
        for (Index n : spec.distance_n) {
            SscmAsymptoticsRow r;
            r.p = p;
            r.relative_bias = bias;
            r.relative_bias_se = bias_se;
            r.n = n;
            detail::sscm_distance(ev, n, spec.distance_trials, spec.seed + static_cast<std::uint64_t>(p * 7919 + n),
                                  spec.threads, r.distance, r.distance_se);
            rows.push_back(r);
        }
    }
    return rows;
}

inline std::string sscm_csv(const std::vector<SscmAsymptoticsRow>& rows) {
    std::string out = "p,relative_bias,relative_bias_se,n,distance,distance_se,limit_2_over_n\n";
    char buf[200];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%ld,%.6g,%.3g,%ld,%.6g,%.3g,%.6g\n", static_cast<long>(r.p), r.relative_bias,
                      r.relative_bias_se, static_cast<long>(r.n), r.distance, r.distance_se,
                      2.0 / static_cast<double>(r.n));
        out += buf;
    }
    return out;
}

}  // namespace linpool
