#pragma once

// Single-class shrinkage toward several targets. Each target T_m is turned
// into a surrogate class by drawing L Gaussian samples with covariance T_m;
// the data SCM and the surrogate SCMs are then pooled with an identity term
// and only the data class's estimate is kept.
//
// Also provides the convex multi-target baseline with plug-in
// q_ij = tr((T_i - S)(T_j - S)) and a shared b.

#include "linpool/pooling.hpp"

namespace linpool {

enum class TargetKind { ConstantCorrelation, SingleFactorMarket, Identity, Explicit };

struct TargetSpec {
    TargetKind kind = TargetKind::Identity;
    MatrixXd matrix;  // Explicit only

    static TargetSpec constant_correlation() { return {TargetKind::ConstantCorrelation, {}}; }
    static TargetSpec single_factor() { return {TargetKind::SingleFactorMarket, {}}; }
    static TargetSpec identity() { return {TargetKind::Identity, {}}; }
    static TargetSpec explicit_matrix(MatrixXd m) { return {TargetKind::Explicit, std::move(m)}; }
};

inline std::string target_name(TargetKind k) {
    switch (k) {
        case TargetKind::ConstantCorrelation: return "constant-correlation";
        case TargetKind::SingleFactorMarket: return "single-factor";
        case TargetKind::Identity: return "identity";
        case TargetKind::Explicit: return "explicit";
    }
    return "?";
}

/// Constant correlation: T_ii = s_ii, T_ij = rbar sqrt(s_ii s_jj), rbar the
/// mean off-diagonal sample correlation (pairs with a zero variance skipped).
inline MatrixXd constant_correlation_target(const MatrixXd& S) {
    const Index p = S.rows();
    if (p == 1) return S;
    const VectorXd sd = S.diagonal().cwiseMax(0.0).cwiseSqrt();
    double acc = 0.0;
    Index pairs = 0;
    for (Index i = 0; i < p; ++i)
        for (Index j = i + 1; j < p; ++j) {
            const double denom = sd(i) * sd(j);
            if (denom <= 0.0) continue;
            acc += S(i, j) / denom;
            ++pairs;
        }
    const double rbar = pairs > 0 ? acc / static_cast<double>(pairs) : 0.0;
    MatrixXd T = rbar * sd * sd.transpose();
    T.diagonal() = S.diagonal();
    return T;
}

/// One-factor model on the equal-weighted market return m_t = mean_i x_ti:
/// T = var(m) beta beta^T + diag(residual variances), so diag(T) = diag(S).
inline MatrixXd single_factor_target(const MatrixXd& X) {
    const Index n = X.rows();
    if (n < 2) fail(ErrorKind::InsufficientData, "single-factor target needs n >= 2");
    const MatrixXd centered = X.rowwise() - X.colwise().mean();
    const VectorXd market = centered.rowwise().mean();
    const double denom = static_cast<double>(n - 1);
    const double var_m = market.squaredNorm() / denom;
    const MatrixXd S = (centered.transpose() * centered) / denom;
    if (var_m <= 0.0) return MatrixXd(S.diagonal().asDiagonal());
    const VectorXd cov_im = centered.transpose() * market / denom;
    const VectorXd beta = cov_im / var_m;
    MatrixXd T = var_m * beta * beta.transpose();
    T.diagonal() = S.diagonal();
    return 0.5 * (T + T.transpose());
}

inline MatrixXd build_target(const RealDataset& data, const TargetSpec& spec) {
    if (data.n() < 2) fail(ErrorKind::InsufficientData, "target construction needs n >= 2");
    switch (spec.kind) {
        case TargetKind::ConstantCorrelation: return constant_correlation_target(sample_covariance(data));
        case TargetKind::SingleFactorMarket: return single_factor_target(data.X);
        case TargetKind::Identity: {
            const MatrixXd S = sample_covariance(data);
            return scale_estimate(S) * MatrixXd::Identity(data.p(), data.p());
        }
        case TargetKind::Explicit:
            if (spec.matrix.rows() != data.p() || spec.matrix.cols() != data.p())
                fail(ErrorKind::Shape, "explicit target has wrong dimension");
            if (min_eigenvalue<double>(hermitian_part(spec.matrix)) < -1e-10 * std::max(1.0, spec.matrix.norm()))
                fail(ErrorKind::InvalidModel, "explicit target must be PSD");
            return hermitian_part(spec.matrix);
    }
    fail(ErrorKind::Config, "unknown target kind");
}

struct MultiTargetConfig {
    PoolingConfig pooling = PoolingConfig::linpool();
    Index surrogate_samples = 1000;  // L
    EstimatorOptions estimator{};
};

struct MultiTargetResult {
    MatrixXd estimate;
    CoefficientSet coefficients;  // single column: (a_S, a_T1..a_TM, a_I)
    PoolingStatistics stats;
    std::vector<MatrixXd> targets;
};

/// Multi-target shrinkage with already built PSD targets. Surrogate draws
/// use streams split off `rng`, one per target, so they never share state
/// with data generation.
inline MultiTargetResult multitarget_pool_matrices(const RealDataset& data, const std::vector<MatrixXd>& targets,
                                                   const MultiTargetConfig& cfg, Rng& rng) {
    if (data.n() < 2) fail(ErrorKind::InsufficientData, "multi-target shrinkage needs n >= 2");
    if (cfg.surrogate_samples < 4) fail(ErrorKind::Config, "surrogate sample count must be >= 4");
    const Index p = data.p();
    std::vector<RealDataset> classes;
    classes.reserve(targets.size() + 1);
    classes.push_back(data);
    for (std::size_t m = 0; m < targets.size(); ++m) {
        const MatrixXd& T = targets[m];
        if (T.rows() != p || T.cols() != p) fail(ErrorKind::Shape, "target " + std::to_string(m) + " has wrong dimension");
        Rng stream = rng.split(m + 1);
        const MatrixXd root = psd_sqrt<double>(hermitian_part(T));
        MatrixXd Z(cfg.surrogate_samples, p);
        for (Index i = 0; i < Z.rows(); ++i)
            for (Index j = 0; j < p; ++j) Z(i, j) = stream.normal();
        classes.emplace_back(Z * root);
    }
    const auto per_class = all_class_statistics(classes, cfg.estimator);
    MultiTargetResult res;
    res.stats = pooling_statistics(per_class);
    PoolingConfig pc = cfg.pooling;
    if (!pc.with_identity()) pc.variant = PoolingVariant::NonnegQPWithIdentity;
    if (!pc.identity_lower_bounds.empty() && pc.identity_lower_bounds.size() != per_class.size())
        pc.identity_lower_bounds.assign(per_class.size(), pc.identity_lower_bounds.front());

    // Only the data class is needed; restrict the solve to its column.
    const CoefficientSet all = solve_constrained(res.stats, pc);
    res.coefficients.has_identity = all.has_identity;
    res.coefficients.regularized = all.regularized;
    res.coefficients.weights = all.weights.col(0);
    res.coefficients.used_qp_fallback = {all.used_qp_fallback.front()};

    std::vector<MatrixXd> scms;
    for (const auto& c : per_class) scms.push_back(c.scm);
    res.estimate = combine(scms, res.coefficients).front();
    res.targets = targets;
    return res;
}

inline MultiTargetResult multitarget_pool(const RealDataset& data, const std::vector<TargetSpec>& specs,
                                          const MultiTargetConfig& cfg, Rng& rng,
                                          const RealDataset* target_window = nullptr) {
    const RealDataset& source = target_window ? *target_window : data;
    std::vector<MatrixXd> targets;
    targets.reserve(specs.size());
    for (const auto& s : specs) targets.push_back(build_target(source, s));
    return multitarget_pool_matrices(data, targets, cfg, rng);
}

// ---------------------------------------------------------------------------
// Convex multi-target baseline

struct BartzResult {
    MatrixXd estimate;
    VectorXd weights;  // target weights; the SCM weight is 1 - sum
    double scm_weight = 1.0;
};

/// Estimate a0 S + sum a_k T_k with a >= 0, sum a <= 1, a0 = 1 - sum a.
/// Data are centred by the sample mean and S = X^T X / n.
inline BartzResult bartz_estimate(const RealDataset& data, const std::vector<MatrixXd>& targets) {
    const Index n = data.n();
    const Index p = data.p();
    if (n < 2) fail(ErrorKind::InsufficientData, "convex multi-target baseline needs n >= 2");
    const MatrixXd Xc = data.X.rowwise() - data.X.colwise().mean();
    const double nd = static_cast<double>(n);
    const MatrixXd S = (Xc.transpose() * Xc) / nd;

    BartzResult res;
    const Index K = static_cast<Index>(targets.size());
    if (K == 0) {
        res.estimate = S;
        res.weights.resize(0);
        return res;
    }
    // b = sum_ij 1/(n(n-1)) sum_s (x_si x_sj - S_ij)^2.
    CompensatedSum b_acc;
    for (Index s = 0; s < n; ++s) {
        const VectorXd x = Xc.row(s).transpose();
        b_acc.add((x * x.transpose() - S).squaredNorm());
    }
    const double b = b_acc.value() / (nd * (nd - 1.0));

    std::vector<MatrixXd> diffs;
    for (const auto& T : targets) {
        if (T.rows() != p || T.cols() != p) fail(ErrorKind::Shape, "target has wrong dimension");
        diffs.push_back(T - S);
    }
    MatrixXd Q(K, K);
    for (Index i = 0; i < K; ++i)
        for (Index j = 0; j <= i; ++j)
            Q(i, j) = Q(j, i) = trace_product<double>(diffs[static_cast<std::size_t>(i)], diffs[static_cast<std::size_t>(j)]);

    // Q is PSD and can be singular (a target equal to S gives a zero row).
    const double ridge = Q.trace() > 0.0 ? 1e-10 * Q.trace() / static_cast<double>(K) : 1.0;
    QpProblem prob;
    prob.B = Q;
    prob.B.diagonal().array() += ridge;
    prob.c = VectorXd::Constant(K, b);
    prob.lower = VectorXd::Zero(K);
    prob.sum = SumConstraint::AtMost;
    prob.sum_value = 1.0;
    const QpResult qp = solve_small(prob);
    res.weights = qp.x;
    res.scm_weight = 1.0 - qp.x.sum();
    res.estimate = res.scm_weight * S;
    for (Index k = 0; k < K; ++k) res.estimate += qp.x(k) * targets[static_cast<std::size_t>(k)];
    res.estimate = hermitian_part(res.estimate);
    return res;
}

}  // namespace linpool
