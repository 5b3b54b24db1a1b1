#pragma once

// Per-class statistics: SCM, spatial median, spatial sign covariance,
// scale, elliptical kurtosis, corrected sphericity, scaled MSE of the SCM,
// and the pooled K x K inner-product matrix.

#include "linpool/models.hpp"

#include <numeric>

namespace linpool {

// ---------------------------------------------------------------------------
// Sample covariance

/// Unbiased SCM with the sample mean, or (1/n) sum (x-mu)(x-mu)^H when the
/// mean is known.
template <typename Scalar>
Matrix<Scalar> sample_covariance(const Dataset<Scalar>& data) {
    const Index n = data.n();
    Matrix<Scalar> centered;
    double divisor = 0.0;
    if (data.known_mean) {
        centered = data.X.rowwise() - data.known_mean->transpose();
        divisor = static_cast<double>(n);
    } else {
        if (n < 2) fail(ErrorKind::InsufficientData, "sample covariance needs n >= 2 without a known mean");
        centered = data.X.rowwise() - data.X.colwise().mean();
        divisor = static_cast<double>(n - 1);
    }
    // sum_i x_i x_i^H with rows x_i^T is X^T conj(X).
    Matrix<Scalar> s = centered.transpose() * centered.conjugate();
    s /= divisor;
    return hermitian_part(s);
}

/// Divisor of the SCM (n-1, or n for a known mean).
template <typename Scalar>
double scm_divisor(const Dataset<Scalar>& data) {
    return data.known_mean ? static_cast<double>(data.n()) : static_cast<double>(data.n() - 1);
}

// ---------------------------------------------------------------------------
// Spatial median

struct SpatialMedianOptions {
    double gradient_tolerance = 1e-9;  // on the mean unit-vector residual
    int max_iterations = 500;
};

template <typename Scalar>
struct SpatialMedianResult {
    Vector<Scalar> median;
    int iterations = 0;
    double residual = 0.0;  // |sum of unit vectors| / n at the solution, net of anchor mass
    bool converged = false;
};

/// Minimizer of sum_i |x_i - m| by the Weiszfeld iteration with the
/// Vardi-Zhang modification: when an iterate lands on data points, the
/// step is damped by the coinciding mass so the iteration leaves the anchor
/// along the subgradient direction, or stops there if it is optimal.
template <typename Scalar>
SpatialMedianResult<Scalar> spatial_median_solve(const Matrix<Scalar>& X, const SpatialMedianOptions& opt = {}) {
    const Index n = X.rows();
    const Index p = X.cols();
    SpatialMedianResult<Scalar> out;
    if (n == 1) {
        out.median = X.row(0).transpose();
        out.converged = true;
        return out;
    }

    Vector<Scalar> m = X.colwise().mean().transpose();
    const double scale = std::max((X.rowwise() - m.transpose()).rowwise().norm().maxCoeff(), 1e-300);
    const double coincide = 1e-12 * scale;
    VectorXd dist(n);

    for (int it = 0; it < opt.max_iterations; ++it) {
        dist = (X.rowwise() - m.transpose()).rowwise().norm();
        double anchor_mass = 0.0;
        double weight_sum = 0.0;
        Vector<Scalar> weighted = Vector<Scalar>::Zero(p);
        Vector<Scalar> residual = Vector<Scalar>::Zero(p);  // sum of unit vectors toward the data
        for (Index i = 0; i < n; ++i) {
            if (dist(i) <= coincide) {
                anchor_mass += 1.0;
                continue;
            }
            const double w = 1.0 / dist(i);
            weight_sum += w;
            weighted += w * X.row(i).transpose();
            residual += w * (X.row(i).transpose() - m);
        }
        const double rnorm = residual.norm();
        out.residual = std::max(0.0, rnorm - anchor_mass) / static_cast<double>(n);
        out.iterations = it;
        if (rnorm <= anchor_mass || out.residual <= opt.gradient_tolerance || weight_sum == 0.0) {
            out.converged = true;
            break;
        }
        const Vector<Scalar> plain = weighted / weight_sum;
        Vector<Scalar> next;
        if (anchor_mass > 0.0) {
            const double beta = std::min(1.0, anchor_mass / rnorm);
            next = (1.0 - beta) * plain + beta * m;
        } else {
            next = plain;
        }
        const double step = (next - m).norm();
        m = next;
        if (step <= 1e-15 * scale) {
            out.converged = true;
            break;
        }
    }
    out.median = m;
    return out;
}

template <typename Scalar>
Vector<Scalar> spatial_median(const Dataset<Scalar>& data, const SpatialMedianOptions& opt = {}) {
    return spatial_median_solve<Scalar>(data.X, opt).median;
}

// ---------------------------------------------------------------------------
// Spatial sign covariance

template <typename Scalar>
struct SignStatistics {
    Matrix<Scalar> shape;   // p * SSCM, trace p
    Vector<Scalar> center;  // known mean or spatial median
    VectorXd distances;     // |x_i - center| of the retained samples
    Index n_effective = 0;  // samples with nonzero distance
    bool mean_estimated = false;
};

/// Shape estimate p/n sum u_i u_i^H with u_i = (x_i - mu)/|x_i - mu|.
/// Samples that coincide with the center are dropped and n reduced.
template <typename Scalar>
SignStatistics<Scalar> sign_statistics(const Dataset<Scalar>& data, const SpatialMedianOptions& opt = {}) {
    SignStatistics<Scalar> out;
    out.mean_estimated = !data.known_mean.has_value();
    out.center = data.known_mean ? *data.known_mean : spatial_median(data, opt);
    const Matrix<Scalar> centered = data.X.rowwise() - out.center.transpose();
    const VectorXd norms = centered.rowwise().norm();
    const double zero = 1e-13 * std::max(norms.maxCoeff(), 1e-300);

    std::vector<Index> keep;
    for (Index i = 0; i < data.n(); ++i)
        if (norms(i) > zero) keep.push_back(i);
    out.n_effective = static_cast<Index>(keep.size());
    if (out.n_effective == 0) fail(ErrorKind::InsufficientData, "all samples coincide with the center");
    if (out.n_effective < data.n())
        warn("SSCM: dropped " + std::to_string(data.n() - out.n_effective) + " sample(s) at the center");

    const Index p = data.p();
    Matrix<Scalar> unit(out.n_effective, p);
    out.distances.resize(out.n_effective);
    for (Index r = 0; r < out.n_effective; ++r) {
        const Index i = keep[static_cast<std::size_t>(r)];
        unit.row(r) = centered.row(i) / norms(i);
        out.distances(r) = norms(i);
    }
    Matrix<Scalar> shape = unit.transpose() * unit.conjugate();
    shape *= static_cast<double>(p) / static_cast<double>(out.n_effective);
    out.shape = hermitian_part(shape);
    return out;
}

template <typename Scalar>
Matrix<Scalar> sscm_shape(const Dataset<Scalar>& data) {
    return sign_statistics(data).shape;
}

// ---------------------------------------------------------------------------
// Scale and kurtosis

template <typename Scalar>
double scale_estimate(const Matrix<Scalar>& scm) {
    return real_part(scm.trace()) / static_cast<double>(scm.rows());
}

inline double kurtosis_lower_bound(Index p, Field field) {
    const double pd = static_cast<double>(p);
    return field == Field::Real ? -2.0 / (pd + 2.0) : -1.0 / (pd + 1.0);
}

/// Raw average marginal kurtosis estimate before clamping. Real data use
/// the bias-corrected (n+1) g2 form; complex data use the uncorrected
/// average of E|x|^4 / (E|x|^2)^2 halved, minus one. Constant columns are
/// skipped; a dataset with no varying column yields 0.
template <typename Scalar>
double kurtosis_raw(const Dataset<Scalar>& data) {
    const Index n = data.n();
    constexpr bool cplx = is_complex_v<Scalar>;
    if (!cplx && n < 4) fail(ErrorKind::InsufficientData, "real kurtosis estimate needs n >= 4");
    if (cplx && n < 2) fail(ErrorKind::InsufficientData, "complex kurtosis estimate needs n >= 2");

    const Matrix<Scalar> centered = data.X.rowwise() - data.X.colwise().mean();
    const Eigen::ArrayXXd sq = centered.cwiseAbs2().array();
    const Eigen::ArrayXd m2 = sq.colwise().mean();
    const Eigen::ArrayXd m4 = sq.square().colwise().mean();
    const double tiny = 1e-300;
    double ratio_sum = 0.0;
    Index used = 0;
    for (Index j = 0; j < data.p(); ++j) {
        if (m2(j) <= tiny) continue;
        ratio_sum += m4(j) / (m2(j) * m2(j));
        ++used;
    }
    if (used == 0) return 0.0;
    const double avg_ratio = ratio_sum / static_cast<double>(used);
    const double nd = static_cast<double>(n);
    if constexpr (cplx) {
        return 0.5 * avg_ratio - 1.0;
    } else {
        const double g2 = avg_ratio - 3.0;
        const double N = (nd - 1.0) / ((nd - 2.0) * (nd - 3.0));
        return N / 3.0 * ((nd + 1.0) * g2 + 6.0);
    }
}

/// Elliptical kurtosis estimate clamped to >= 0.99 times the theoretical
/// lower bound (-2/(p+2) real, -1/(p+1) complex).
template <typename Scalar>
double kurtosis_estimate(const Dataset<Scalar>& data) {
    const double raw = kurtosis_raw(data);
    const double floor = 0.99 * kurtosis_lower_bound(data.p(), field_of<Scalar>());
    return std::max(raw, floor);
}

// ---------------------------------------------------------------------------
// Sphericity

/// Finite-sample correction for spatial-median centering,
///   d = n^-2 (2 - 2 t + t^2) + n^-3 (8 t - 6 t^2 + 2 q2 q3 / q1^5 - 2 q3 / q1^3),
/// with t = q2 / q1^2 and q_m the mean of |x_i - mu|^-m. The approximate
/// form is n^-2 + 2 n^-3.
inline double zou_correction(const VectorXd& distances, bool approximate = false) {
    const double n = static_cast<double>(distances.size());
    if (n < 1) fail(ErrorKind::InsufficientData, "correction needs at least one sample");
    if (approximate) return 1.0 / (n * n) + 2.0 / (n * n * n);
    if ((distances.array() <= 0.0).any()) fail(ErrorKind::Data, "zero distance in correction term");
    const Eigen::ArrayXd inv = distances.array().inverse();
    // Scale-free: normalize by the mean distance before forming powers.
    const double unit = inv.mean();
    const Eigen::ArrayXd v = inv / unit;
    const double q1 = v.mean();
    const double q2 = v.square().mean();
    const double q3 = v.cube().mean();
    const double t = q2 / (q1 * q1);
    const double a = 2.0 - 2.0 * t + t * t;
    const double b = 8.0 * t - 6.0 * t * t + 2.0 * q2 * q3 / std::pow(q1, 5) - 2.0 * q3 / (q1 * q1 * q1);
    return a / (n * n) + b / (n * n * n);
}

template <typename Scalar>
double zou_correction(const Dataset<Scalar>& data, bool approximate = false) {
    if (approximate) return zou_correction(VectorXd::Ones(data.n()), true);
    return zou_correction(sign_statistics(data).distances, false);
}

struct SphericityEstimate {
    double raw = 0.0;        // n/(n-1) (tr(L^2)/p - p/n)
    double corrected = 0.0;  // raw - p d (estimated center only), clamped to [1, p]
    double correction = 0.0; // d, or 0 for a known mean
};

template <typename Scalar>
SphericityEstimate sphericity_from_signs(const SignStatistics<Scalar>& sign, bool approximate_correction = false) {
    const double n = static_cast<double>(sign.n_effective);
    if (sign.n_effective < 2) fail(ErrorKind::InsufficientData, "sphericity estimate needs n >= 2");
    const double p = static_cast<double>(sign.shape.rows());
    SphericityEstimate out;
    out.raw = n / (n - 1.0) * (sign.shape.squaredNorm() / p - p / n);
    double g = out.raw;
    if (sign.mean_estimated) {
        out.correction = zou_correction(sign.distances, approximate_correction);
        g -= p * out.correction;
    }
    out.corrected = std::clamp(g, 1.0, p);
    return out;
}

template <typename Scalar>
SphericityEstimate sphericity_estimate(const Dataset<Scalar>& data, bool approximate_correction = false) {
    return sphericity_from_signs(sign_statistics(data), approximate_correction);
}

// ---------------------------------------------------------------------------
// Scaled MSE of the SCM

/// delta = eta^2 ((1/dof + kappa/n)(p + gamma) + kappa gamma / n) in the real
/// field and eta^2 ((1/dof + kappa/n) p + kappa gamma / n) in the complex
/// field, where dof is the SCM divisor (n-1 with an estimated mean, n with a
/// known one).
inline double delta_estimate(double eta, double kappa, double gamma, double n, double p, Field field,
                             std::optional<double> scm_dof = std::nullopt) {
    if (n < 2 && !scm_dof) fail(ErrorKind::InsufficientData, "scaled MSE needs n >= 2");
    const double dof = scm_dof.value_or(n - 1.0);
    const double lead = 1.0 / dof + kappa / n;
    const double body = field == Field::Real ? lead * (p + gamma) + kappa * gamma / n : lead * p + kappa * gamma / n;
    const double delta = eta * eta * body;
    if (!(delta > 0.0) || !std::isfinite(delta))
        fail(ErrorKind::Conditioning, "estimated scaled MSE is not positive (kappa=" + std::to_string(kappa) +
                                          ", n=" + std::to_string(n) + ")");
    return delta;
}

// ---------------------------------------------------------------------------
// Per-class and pooled statistics

struct EstimatorOptions {
    bool approximate_correction = false;
    SpatialMedianOptions median{};
};

template <typename Scalar>
struct ClassStatistics {
    Matrix<Scalar> scm;
    Matrix<Scalar> sscm_shape;
    Vector<Scalar> center;
    Index n = 0;
    double eta = 0.0;
    double kappa = 0.0;
    double gamma = 0.0;       // uncorrected
    double gamma_star = 0.0;  // corrected and clamped
    double delta = 0.0;
};

template <typename Scalar>
ClassStatistics<Scalar> class_statistics(const Dataset<Scalar>& data, const EstimatorOptions& opt = {}) {
    ClassStatistics<Scalar> st;
    st.n = data.n();
    if (!data.known_mean && data.n() < 2) fail(ErrorKind::InsufficientData, "class needs n >= 2");
    st.scm = sample_covariance(data);
    st.eta = scale_estimate(st.scm);
    st.kappa = kurtosis_estimate(data);
    SignStatistics<Scalar> sign = sign_statistics(data, opt.median);
    const SphericityEstimate sph = sphericity_from_signs(sign, opt.approximate_correction);
    st.gamma = sph.raw;
    st.gamma_star = sph.corrected;
    st.sscm_shape = std::move(sign.shape);
    st.center = std::move(sign.center);
    st.delta = delta_estimate(st.eta, st.kappa, st.gamma_star, static_cast<double>(data.n()),
                              static_cast<double>(data.p()), field_of<Scalar>(), scm_divisor(data));
    return st;
}

/// Everything the coefficient problem needs: C (K x K), D = diag(delta),
/// and the scales f.
struct PoolingStatistics {
    MatrixXd C;
    VectorXd D;
    VectorXd f;
    Index p = 0;
    std::vector<Index> n;
    bool projected = false;  // C was repaired to keep C - f f^T PSD

    Index K() const { return C.rows(); }

    void validate() const {
        const Index k = C.rows();
        if (C.cols() != k || D.size() != k || f.size() != k) fail(ErrorKind::Shape, "pooling statistics size mismatch");
        if ((C - C.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, C.cwiseAbs().maxCoeff()))
            fail(ErrorKind::Shape, "C must be symmetric");
        if ((D.array() <= 0.0).any()) fail(ErrorKind::Conditioning, "D must be strictly positive");
    }

    /// D + C, optionally augmented with the identity row/column [f; 1].
    MatrixXd system(bool with_identity) const {
        const Index k = K();
        MatrixXd B = C;
        B.diagonal() += D;
        if (!with_identity) return B;
        MatrixXd out(k + 1, k + 1);
        out.topLeftCorner(k, k) = B;
        out.topRightCorner(k, 1) = f;
        out.bottomLeftCorner(1, k) = f.transpose();
        out(k, k) = 1.0;
        return out;
    }

    /// Right-hand side for class k: c_k, or (c_k; eta_k) with identity.
    VectorXd rhs(Index k, bool with_identity) const {
        VectorXd c = C.col(k);
        if (!with_identity) return c;
        VectorXd out(c.size() + 1);
        out << c, f(k);
        return out;
    }
};

/// Estimated statistics: off-diagonal c_ij = tr((eta_i L_i)(eta_j L_j))/p
/// from spatial-median-centred SSCMs, diagonal c_ii = gamma*_i eta_i^2.
template <typename Scalar>
PoolingStatistics pooling_statistics(const std::vector<ClassStatistics<Scalar>>& classes) {
    const Index K = static_cast<Index>(classes.size());
    if (K < 1) fail(ErrorKind::Shape, "need at least one class");
    const Index p = classes.front().scm.rows();
    for (const auto& c : classes)
        if (c.scm.rows() != p) fail(ErrorKind::Shape, "classes have different dimensions");

    PoolingStatistics st;
    st.p = p;
    st.C.resize(K, K);
    st.D.resize(K);
    st.f.resize(K);
    const double pd = static_cast<double>(p);
    for (Index i = 0; i < K; ++i) {
        const auto& ci = classes[static_cast<std::size_t>(i)];
        st.D(i) = ci.delta;
        st.f(i) = ci.eta;
        st.n.push_back(ci.n);
        st.C(i, i) = ci.gamma_star * ci.eta * ci.eta;
        for (Index j = 0; j < i; ++j) {
            const auto& cj = classes[static_cast<std::size_t>(j)];
            const double v = ci.eta * cj.eta * trace_product(ci.sscm_shape, cj.sscm_shape) / pd;
            st.C(i, j) = st.C(j, i) = v;
        }
    }
    // C - f f^T estimates the Gram matrix of Sigma_i - eta_i I and so should be
    // PSD; mixing SSCM off-diagonals with clamped diagonals can break that at
    // tiny n. When the augmented system is no longer positive definite, clip
    // the negative eigenvalues of C - f f^T; D > 0 then restores definiteness.
    Eigen::SelfAdjointEigenSolver<MatrixXd> sys(st.system(true), Eigen::EigenvaluesOnly);
    if (!(sys.eigenvalues().minCoeff() > 1e-12 * sys.eigenvalues().maxCoeff())) {
        const MatrixXd centred = st.C - st.f * st.f.transpose();
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(centred);
        st.C = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).asDiagonal() * eig.eigenvectors().transpose() +
               st.f * st.f.transpose();
        st.C = (0.5 * (st.C + st.C.transpose())).eval();
        st.projected = true;
        warn("pooling: estimated C - f f^T was indefinite, projected onto the PSD cone");
    }
    return st;
}

template <typename Scalar>
std::vector<ClassStatistics<Scalar>> all_class_statistics(const std::vector<Dataset<Scalar>>& classes,
                                                          const EstimatorOptions& opt = {}) {
    if (classes.empty()) fail(ErrorKind::Shape, "need at least one class");
    const Index p = classes.front().p();
    for (std::size_t k = 0; k < classes.size(); ++k)
        if (classes[k].p() != p)
            fail(ErrorKind::Shape, "class " + std::to_string(k) + " has dimension " + std::to_string(classes[k].p()) +
                                       ", expected " + std::to_string(p));
    std::vector<ClassStatistics<Scalar>> out;
    out.reserve(classes.size());
    for (const auto& d : classes) out.push_back(class_statistics(d, opt));
    return out;
}

template <typename Scalar>
PoolingStatistics pooling_statistics(const std::vector<Dataset<Scalar>>& classes, const EstimatorOptions& opt = {}) {
    return pooling_statistics(all_class_statistics(classes, opt));
}

/// Population statistics from true covariances, kurtoses and sample sizes.
/// Used for oracle weights and for validating estimated statistics.
template <typename Scalar>
PoolingStatistics oracle_statistics(const std::vector<Matrix<Scalar>>& covariances, const std::vector<double>& kappas,
                                    const std::vector<Index>& sizes, bool known_means = false) {
    const Index K = static_cast<Index>(covariances.size());
    if (K < 1 || kappas.size() != covariances.size() || sizes.size() != covariances.size())
        fail(ErrorKind::Shape, "oracle statistics: inconsistent inputs");
    const Index p = covariances.front().rows();
    const double pd = static_cast<double>(p);
    PoolingStatistics st;
    st.p = p;
    st.C.resize(K, K);
    st.D.resize(K);
    st.f.resize(K);
    for (Index i = 0; i < K; ++i) {
        const auto& Mi = covariances[static_cast<std::size_t>(i)];
        if (Mi.rows() != p) fail(ErrorKind::Shape, "oracle statistics: dimension mismatch");
        const double eta = scale_estimate(Mi);
        const double gamma = sphericity_of<Scalar>(Mi);
        const double n = static_cast<double>(sizes[static_cast<std::size_t>(i)]);
        st.f(i) = eta;
        st.n.push_back(sizes[static_cast<std::size_t>(i)]);
        st.D(i) = delta_estimate(eta, kappas[static_cast<std::size_t>(i)], gamma, n, pd, field_of<Scalar>(),
                                 known_means ? std::optional<double>(n) : std::nullopt);
        for (Index j = 0; j <= i; ++j) {
            const double v = trace_product(Mi, covariances[static_cast<std::size_t>(j)]) / pd;
            st.C(i, j) = st.C(j, i) = v;
        }
    }
    return st;
}

}  // namespace linpool
