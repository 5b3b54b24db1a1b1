#pragma once

// Linear pooling of class SCMs: each class covariance is estimated as
//     Sigma_k = sum_j a_jk S_j (+ a_Ik I)
// with weights minimizing p (a^T (D + C) a - 2 c_k^T a + c_kk).

#include "linpool/estimators.hpp"
#include "linpool/qp.hpp"

namespace linpool {

enum class PoolingVariant {
    Unconstrained,         // closed form, weights may be negative
    NonnegQP,              // a >= 0
    NonnegQPWithIdentity,  // a >= 0, a_I >= aLB
    ConvexCombination,     // a >= 0, a_I >= aLB, 1^T a = 1 (identity weight included)
};

struct PoolingConfig {
    PoolingVariant variant = PoolingVariant::NonnegQPWithIdentity;
    bool unconstrained_with_identity = false;  // Unconstrained variant only
    double identity_lower_bound = 1e-8;
    std::vector<double> identity_lower_bounds;  // per class; overrides the scalar when non-empty
    std::optional<double> identity_scale_alpha; // aLB_k = alpha * eta_k when set
    double violation_tolerance = 1e-12;
    QpMethod qp_method = QpMethod::Auto;

    bool with_identity() const {
        return variant == PoolingVariant::NonnegQPWithIdentity || variant == PoolingVariant::ConvexCombination ||
               (variant == PoolingVariant::Unconstrained && unconstrained_with_identity);
    }

    static PoolingConfig linpool() { return {}; }
    static PoolingConfig linpool_convex() {
        PoolingConfig c;
        c.variant = PoolingVariant::ConvexCombination;
        return c;
    }
};

inline std::string variant_name(PoolingVariant v) {
    switch (v) {
        case PoolingVariant::Unconstrained: return "unconstrained";
        case PoolingVariant::NonnegQP: return "nonneg";
        case PoolingVariant::NonnegQPWithIdentity: return "nonneg-identity";
        case PoolingVariant::ConvexCombination: return "convex";
    }
    return "?";
}

/// Weights per class. Column k holds the weights of the estimate for class
/// k; with identity the last row is the identity weight a_I.
struct CoefficientSet {
    MatrixXd weights;
    std::vector<bool> used_qp_fallback;
    bool has_identity = false;
    bool regularized = false;

    Index K() const { return weights.cols(); }
    VectorXd column(Index k) const { return weights.col(k); }
};

/// Scaled MSE objective p (a^T B a - 2 b^T a + c_kk) for class k, where
/// (B, b) is (D + C, c_k) or the identity-augmented pair when a has K + 1
/// entries.
inline double mse_objective(const VectorXd& a, const PoolingStatistics& stats, Index k) {
    const Index K = stats.K();
    const bool with_identity = a.size() == K + 1;
    if (!with_identity && a.size() != K) fail(ErrorKind::Shape, "weight vector has wrong length");
    const MatrixXd B = stats.system(with_identity);
    const VectorXd b = stats.rhs(k, with_identity);
    return static_cast<double>(stats.p) * (a.dot(B * a) - 2.0 * b.dot(a) + stats.C(k, k));
}

namespace detail {

inline double identity_bound_for(const PoolingConfig& cfg, const PoolingStatistics& stats, Index k) {
    double v = cfg.identity_lower_bound;
    if (!cfg.identity_lower_bounds.empty()) {
        if (static_cast<Index>(cfg.identity_lower_bounds.size()) != stats.K())
            fail(ErrorKind::Shape, "per-class identity lower bounds must have K entries");
        v = cfg.identity_lower_bounds[static_cast<std::size_t>(k)];
    } else if (cfg.identity_scale_alpha) {
        const double alpha = *cfg.identity_scale_alpha;
        if (alpha < 0.0 || alpha > 1.0) fail(ErrorKind::Config, "identity scale alpha must lie in [0, 1]");
        v = alpha * stats.f(k);
    }
    if (!(v > 0.0)) fail(ErrorKind::Config, "identity lower bound must be positive");
    return v;
}

/// Solves B x = R column-wise; damps B once if it is numerically singular.
inline MatrixXd spd_solve(const MatrixXd& B, const MatrixXd& R, bool& regularized) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(B, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    MatrixXd work = B;
    if (!(lmax > 0.0) || lmin <= 1e-12 * lmax) {
        work.diagonal().array() += 1e-12 * B.trace() / static_cast<double>(B.rows());
        regularized = true;
        warn("pooling: D + C is ill-conditioned, using Tikhonov damping");
    }
    Eigen::LLT<MatrixXd> llt(work);
    if (llt.info() != Eigen::Success) fail(ErrorKind::Conditioning, "pooling: D + C is singular");
    return llt.solve(R);
}

}  // namespace detail

/// Closed-form weights A = (D + C)^{-1} C, or with identity
/// A = (D~ + C~)^{-1} [C f]^T.
inline CoefficientSet solve_unconstrained(const PoolingStatistics& stats, bool with_identity) {
    stats.validate();
    const Index K = stats.K();
    const MatrixXd B = stats.system(with_identity);
    MatrixXd R(with_identity ? K + 1 : K, K);
    if (with_identity) R << stats.C, stats.f.transpose();
    else R = stats.C;
    CoefficientSet out;
    out.has_identity = with_identity;
    out.weights = detail::spd_solve(B, R, out.regularized);
    out.used_qp_fallback.assign(static_cast<std::size_t>(K), false);
    return out;
}

/// Constrained weights per class: the closed form is kept when it already
/// satisfies the constraints, otherwise the QP is solved.
inline CoefficientSet solve_constrained(const PoolingStatistics& stats, const PoolingConfig& cfg) {
    if (cfg.variant == PoolingVariant::Unconstrained) return solve_unconstrained(stats, cfg.unconstrained_with_identity);
    stats.validate();
    const Index K = stats.K();
    const bool with_identity = cfg.with_identity();
    const bool convex = cfg.variant == PoolingVariant::ConvexCombination;
    const Index d = with_identity ? K + 1 : K;
    const MatrixXd B = stats.system(with_identity);

    CoefficientSet out;
    out.has_identity = with_identity;
    out.weights.resize(d, K);
    out.used_qp_fallback.assign(static_cast<std::size_t>(K), false);

    // Fast-path candidates: unconstrained minimizers (on 1^T a = 1 for the convex variant).
    MatrixXd R(d, K);
    for (Index k = 0; k < K; ++k) R.col(k) = stats.rhs(k, with_identity);
    MatrixXd fast = detail::spd_solve(B, R, out.regularized);
    if (convex) {
        bool dummy = false;
        const VectorXd z = detail::spd_solve(B, VectorXd::Ones(d), dummy);
        for (Index k = 0; k < K; ++k) {
            const double mu = (fast.col(k).sum() - 1.0) / z.sum();
            fast.col(k) -= mu * z;
        }
    }

    for (Index k = 0; k < K; ++k) {
        const double alb = with_identity ? detail::identity_bound_for(cfg, stats, k) : 0.0;
        VectorXd a = fast.col(k);
        bool violated = (a.head(K).array() < -cfg.violation_tolerance).any();
        if (with_identity && a(K) < alb - cfg.violation_tolerance) violated = true;
        if (!violated) {
            // Clip rounding-level excursions so the invariants hold exactly.
            a.head(K) = a.head(K).cwiseMax(0.0);
            if (with_identity) a(K) = std::max(a(K), alb);
            if (convex) {
                const double excess = a.sum() - 1.0;
                if (std::abs(excess) > 0.0) {
                    // Remove the excess from the largest weight; it stays within bounds.
                    Index big = 0;
                    a.maxCoeff(&big);
                    a(big) -= excess;
                }
            }
            out.weights.col(k) = a;
            continue;
        }
        QpProblem prob;
        prob.B = B;
        prob.c = stats.rhs(k, with_identity);
        prob.lower = VectorXd::Zero(d);
        if (with_identity) prob.lower(K) = alb;
        if (convex) prob.sum = SumConstraint::Equal;
        const QpResult res = solve_small(prob, cfg.qp_method);
        out.weights.col(k) = res.x;
        out.used_qp_fallback[static_cast<std::size_t>(k)] = true;
        out.regularized = out.regularized || res.regularized;
    }
    return out;
}

/// Pooled estimates sum_j a_jk S_j (+ a_Ik I) for every class.
template <typename Scalar>
std::vector<Matrix<Scalar>> combine(const std::vector<Matrix<Scalar>>& scms, const CoefficientSet& coef) {
    const Index K = static_cast<Index>(scms.size());
    if (coef.weights.rows() != K + (coef.has_identity ? 1 : 0))
        fail(ErrorKind::Shape, "coefficient rows do not match the number of SCMs");
    const Index p = scms.front().rows();
    std::vector<Matrix<Scalar>> out;
    out.reserve(static_cast<std::size_t>(coef.K()));
    for (Index k = 0; k < coef.K(); ++k) {
        Matrix<Scalar> est = Matrix<Scalar>::Zero(p, p);
        for (Index j = 0; j < K; ++j) est += coef.weights(j, k) * scms[static_cast<std::size_t>(j)];
        if (coef.has_identity) est.diagonal().array() += coef.weights(K, k);
        out.push_back(hermitian_part(est));
    }
    return out;
}

template <typename Scalar>
struct PoolingResult {
    std::vector<Matrix<Scalar>> estimates;
    CoefficientSet coefficients;
    PoolingStatistics stats;
};

/// Full pipeline from raw class data.
template <typename Scalar>
PoolingResult<Scalar> pool(const std::vector<Dataset<Scalar>>& classes, const PoolingConfig& cfg,
                           const EstimatorOptions& opt = {}) {
    for (const auto& d : classes)
        if (d.n() < 2 && !d.known_mean)
            fail(ErrorKind::InsufficientData, "every class needs at least two samples");
    const auto per_class = all_class_statistics(classes, opt);
    PoolingResult<Scalar> res;
    res.stats = pooling_statistics(per_class);
    res.coefficients = solve_constrained(res.stats, cfg);
    std::vector<Matrix<Scalar>> scms;
    scms.reserve(per_class.size());
    for (const auto& c : per_class) scms.push_back(c.scm);
    res.estimates = combine(scms, res.coefficients);
    return res;
}

/// Pooling with externally supplied statistics (e.g. population values).
template <typename Scalar>
PoolingResult<Scalar> pool(const std::vector<Matrix<Scalar>>& scms, const PoolingStatistics& stats,
                           const PoolingConfig& cfg) {
    PoolingResult<Scalar> res;
    res.stats = stats;
    res.coefficients = solve_constrained(stats, cfg);
    res.estimates = combine(scms, res.coefficients);
    return res;
}

}  // namespace linpool
