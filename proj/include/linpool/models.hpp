#pragma once

// Parametric covariance families, their closed-form sphericities, and
// elliptical sampling through the stochastic representation
//     x = mu + r * M^{1/2} * u,   u uniform on the unit sphere, E[r^2] = p.

#include "linpool/core.hpp"

#include <optional>
#include <sstream>
#include <variant>

namespace linpool {

// ---------------------------------------------------------------------------
// Covariance models

struct Ar1 {
    double sigma2 = 1.0;
    cdouble rho = 0.0;  // complex rho gives the Hermitian Toeplitz variant
};

struct CompoundSymmetry {
    double sigma2 = 1.0;
    double rho = 0.0;
};

struct Banded1 {
    double sigma2 = 1.0;
    double rho = 0.0;
};

struct Spiked {
    MatrixXd low_rank;  // PSD, rank r <= p
    double alpha = 1.0;
};

struct ExplicitCovariance {
    MatrixXcd matrix;  // Hermitian PD; zero imaginary part for real models
};

class CovarianceModel {
public:
    using Kind = std::variant<Ar1, CompoundSymmetry, Banded1, Spiked, ExplicitCovariance>;

    CovarianceModel(Kind kind, Index p) : kind_(std::move(kind)), p_(p) {}

    static CovarianceModel ar1(Index p, double sigma2, cdouble rho) { return {Ar1{sigma2, rho}, p}; }
    static CovarianceModel compound_symmetry(Index p, double sigma2, double rho) {
        return {CompoundSymmetry{sigma2, rho}, p};
    }
    static CovarianceModel banded1(Index p, double sigma2, double rho) { return {Banded1{sigma2, rho}, p}; }
    static CovarianceModel spiked(MatrixXd low_rank, double alpha) {
        const Index p = low_rank.rows();
        return {Spiked{std::move(low_rank), alpha}, p};
    }
    static CovarianceModel explicit_matrix(const MatrixXcd& m) { return {ExplicitCovariance{m}, m.rows()}; }
    static CovarianceModel explicit_matrix(const MatrixXd& m) {
        return {ExplicitCovariance{m.cast<cdouble>()}, m.rows()};
    }

    const Kind& kind() const { return kind_; }
    Index dim() const { return p_; }

    /// True when the materialized matrix has nonzero imaginary entries.
    bool is_complex() const {
        return std::visit(
            [](const auto& k) -> bool {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, Ar1>)
                    return k.rho.imag() != 0.0;
                else if constexpr (std::is_same_v<K, ExplicitCovariance>)
                    return k.matrix.imag().cwiseAbs().maxCoeff() != 0.0;
                else
                    return false;
            },
            kind_);
    }

    std::string name() const {
        return std::visit(
            [](const auto& k) -> std::string {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, Ar1>) return "AR1";
                else if constexpr (std::is_same_v<K, CompoundSymmetry>) return "CS";
                else if constexpr (std::is_same_v<K, Banded1>) return "Banded1";
                else if constexpr (std::is_same_v<K, Spiked>) return "Spiked";
                else return "Explicit";
            },
            kind_);
    }

private:
    Kind kind_;
    Index p_;
};

namespace detail {

inline void require_model(bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::InvalidModel, msg);
}

inline void validate(const CovarianceModel& model) {
    const Index p = model.dim();
    require_model(p >= 1, "covariance model dimension must be >= 1");
    std::visit(
        [p](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, Ar1>) {
                require_model(k.sigma2 > 0.0, "AR1: sigma2 must be positive");
                require_model(std::abs(k.rho) < 1.0, "AR1: |rho| must be < 1");
            } else if constexpr (std::is_same_v<K, CompoundSymmetry>) {
                require_model(k.sigma2 > 0.0, "CS: sigma2 must be positive");
                const double lower = p > 1 ? -1.0 / static_cast<double>(p - 1) : -1.0;
                std::ostringstream os;
                os << "CS: rho must lie in (" << lower << ", 1), got " << k.rho;
                require_model(k.rho > lower && k.rho < 1.0, os.str());
            } else if constexpr (std::is_same_v<K, Banded1>) {
                require_model(k.sigma2 > 0.0, "Banded1: sigma2 must be positive");
                // Smallest eigenvalue is sigma2 * (1 + 2 rho cos(p pi/(p+1))).
                const double c = std::cos(static_cast<double>(p) * M_PI / static_cast<double>(p + 1));
                require_model(p == 1 || 1.0 + 2.0 * std::abs(k.rho) * c > 0.0,
                              "Banded1: |rho| too large for positive definiteness");
            } else if constexpr (std::is_same_v<K, Spiked>) {
                require_model(k.alpha > 0.0, "Spiked: alpha must be positive");
                require_model(k.low_rank.rows() == p && k.low_rank.cols() == p, "Spiked: low-rank part must be p x p");
                require_model((k.low_rank - k.low_rank.transpose()).cwiseAbs().maxCoeff() <=
                                  1e-12 * std::max(1.0, k.low_rank.cwiseAbs().maxCoeff()),
                              "Spiked: low-rank part must be symmetric");
                require_model(min_eigenvalue<double>(k.low_rank) >= -1e-10 * std::max(1.0, k.low_rank.norm()),
                              "Spiked: low-rank part must be PSD");
            } else {
                require_model(k.matrix.rows() == p && k.matrix.cols() == p, "Explicit: matrix must be square");
                require_model((k.matrix - k.matrix.adjoint()).cwiseAbs().maxCoeff() <=
                                  1e-12 * std::max(1.0, k.matrix.cwiseAbs().maxCoeff()),
                              "Explicit: matrix must be Hermitian");
                Eigen::LLT<MatrixXcd> llt(k.matrix);
                require_model(llt.info() == Eigen::Success, "Explicit: matrix must be positive definite");
            }
        },
        model.kind());
}

}  // namespace detail

/// Dense covariance matrix of the model. Complex AR1 follows
/// M_ij = sigma2 * rho^(j-i) for i <= j, Hermitian below the diagonal.
inline MatrixXcd materialize_complex(const CovarianceModel& model) {
    detail::validate(model);
    const Index p = model.dim();
    MatrixXcd m = std::visit(
        [p](const auto& k) -> MatrixXcd {
            using K = std::decay_t<decltype(k)>;
            MatrixXcd out = MatrixXcd::Zero(p, p);
            if constexpr (std::is_same_v<K, Ar1>) {
                cdouble power = 1.0;
                for (Index lag = 0; lag < p; ++lag) {
                    for (Index i = 0; i + lag < p; ++i) {
                        out(i, i + lag) = k.sigma2 * power;
                        out(i + lag, i) = k.sigma2 * std::conj(power);
                    }
                    power *= k.rho;
                }
            } else if constexpr (std::is_same_v<K, CompoundSymmetry>) {
                out.setConstant(k.sigma2 * k.rho);
                out.diagonal().setConstant(k.sigma2);
            } else if constexpr (std::is_same_v<K, Banded1>) {
                out.diagonal().setConstant(k.sigma2);
                for (Index i = 0; i + 1 < p; ++i) out(i, i + 1) = out(i + 1, i) = k.sigma2 * k.rho;
            } else if constexpr (std::is_same_v<K, Spiked>) {
                out = hermitian_part(k.low_rank).template cast<cdouble>();
                out.diagonal().array() += k.alpha;
            } else {
                out = hermitian_part(k.matrix);
            }
            return out;
        },
        model.kind());
    return m;
}

template <typename Scalar>
Matrix<Scalar> materialize(const CovarianceModel& model) {
    MatrixXcd m = materialize_complex(model);
    if constexpr (is_complex_v<Scalar>) {
        return m;
    } else {
        if (model.is_complex())
            fail(ErrorKind::InvalidModel, "complex covariance model requested in the real field");
        return m.real();
    }
}

inline MatrixXd materialize(const CovarianceModel& model) { return materialize<double>(model); }

/// Sphericity p tr(M^2) / tr(M)^2 computed directly from a Hermitian matrix.
template <typename Scalar>
double sphericity_of(const Matrix<Scalar>& m) {
    const double p = static_cast<double>(m.rows());
    const double tr = real_part(m.trace());
    return p * m.squaredNorm() / (tr * tr);
}

/// Closed-form sphericity for AR1, Banded1, CS and Explicit models. Spiked
/// models have no closed form in terms of their parameters; materialize
/// them and use sphericity_of instead.
inline double sphericity_closed_form(const CovarianceModel& model) {
    detail::validate(model);
    const double p = static_cast<double>(model.dim());
    return std::visit(
        [p](const auto& k) -> double {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, Ar1>) {
                const double r2 = std::norm(k.rho);
                if (r2 == 0.0) return 1.0;
                const double num = p - p * r2 * r2 - 2.0 * r2 + 2.0 * std::pow(r2, p + 1.0);
                return num / (p * (r2 - 1.0) * (r2 - 1.0));
            } else if constexpr (std::is_same_v<K, Banded1>) {
                return 1.0 + 2.0 * (1.0 - 1.0 / p) * k.rho * k.rho;
            } else if constexpr (std::is_same_v<K, CompoundSymmetry>) {
                return 1.0 + (p - 1.0) * k.rho * k.rho;
            } else if constexpr (std::is_same_v<K, ExplicitCovariance>) {
                return sphericity_of<cdouble>(k.matrix);
            } else {
                fail(ErrorKind::UnsupportedClosedForm,
                     "Spiked model has no parametric closed-form sphericity; use the explicit matrix");
            }
        },
        model.kind());
}

/// Large-p limit of the AR1 sphericity, (1 + |rho|^2) / (1 - |rho|^2).
inline double ar1_sphericity_limit(cdouble rho) {
    const double r2 = std::norm(rho);
    return (1.0 + r2) / (1.0 - r2);
}

// ---------------------------------------------------------------------------
// Elliptical laws

enum class Family { Gaussian, StudentT, ComplexGaussian, ComplexStudentT };

inline bool is_complex_family(Family f) { return f == Family::ComplexGaussian || f == Family::ComplexStudentT; }

struct EllipticalLaw {
    Family family = Family::Gaussian;
    double dof = 0.0;  // Student-t only; must exceed 4
    VectorXcd mean;    // empty means zero mean
    CovarianceModel covariance;

    EllipticalLaw(Family f, CovarianceModel cov, double nu = 0.0, VectorXcd mu = {})
        : family(f), dof(nu), mean(std::move(mu)), covariance(std::move(cov)) {}

    Index dim() const { return covariance.dim(); }

    /// Population elliptical kurtosis: 0 for Gaussian laws, 2/(nu-4) for t.
    double kurtosis() const {
        if (family == Family::StudentT || family == Family::ComplexStudentT) return 2.0 / (dof - 4.0);
        return 0.0;
    }

    void validate() const {
        if ((family == Family::StudentT || family == Family::ComplexStudentT) && !(dof > 4.0))
            fail(ErrorKind::InvalidModel, "Student-t degrees of freedom must exceed 4 for finite fourth moments");
        if (mean.size() != 0 && mean.size() != dim())
            fail(ErrorKind::InvalidModel, "law mean has wrong dimension");
        if (!is_complex_family(family) && mean.size() != 0 && mean.imag().cwiseAbs().maxCoeff() != 0.0)
            fail(ErrorKind::InvalidModel, "real law with complex mean");
        if (!is_complex_family(family) && covariance.is_complex())
            fail(ErrorKind::InvalidModel, "real law with complex covariance model");
        detail::validate(covariance);
    }
};

// ---------------------------------------------------------------------------
// Datasets

/// One class's observations: rows are samples. An optional known mean
/// replaces sample-mean / spatial-median centering.
template <typename Scalar>
struct Dataset {
    Matrix<Scalar> X;
    std::optional<Vector<Scalar>> known_mean;

    Dataset() = default;
    explicit Dataset(Matrix<Scalar> x, std::optional<Vector<Scalar>> mu = std::nullopt)
        : X(std::move(x)), known_mean(std::move(mu)) {
        if (X.rows() < 1 || X.cols() < 1) fail(ErrorKind::InsufficientData, "dataset must have n >= 1 and p >= 1");
        if (!X.allFinite()) fail(ErrorKind::Data, "dataset contains non-finite entries");
        if (known_mean && known_mean->size() != X.cols())
            fail(ErrorKind::Shape, "known mean has wrong dimension");
    }

    Index n() const { return X.rows(); }
    Index p() const { return X.cols(); }
};

using RealDataset = Dataset<double>;
using ComplexDataset = Dataset<cdouble>;

/// Draws n i.i.d. observations. Student-t modular variates satisfy
/// r^2 = ((nu-2)/nu) p F(p, nu), so the population covariance is exactly the
/// model matrix. Complex laws use circular standard normals (E|z|^2 = 1).
template <typename Scalar>
Dataset<Scalar> sample(const EllipticalLaw& law, Index n, Rng& rng, bool attach_known_mean = false) {
    law.validate();
    if (n < 1) fail(ErrorKind::InsufficientData, "sample size must be >= 1");
    const bool complex_law = is_complex_family(law.family);
    if (complex_law != is_complex_v<Scalar>)
        fail(ErrorKind::InvalidModel, "law field does not match requested scalar type");

    const Index p = law.dim();
    const Matrix<Scalar> root = psd_sqrt<Scalar>(materialize<Scalar>(law.covariance));
    const bool student = law.family == Family::StudentT || law.family == Family::ComplexStudentT;

    Matrix<Scalar> z(n, p);
    VectorXd radius(n);
    for (Index i = 0; i < n; ++i) {
        double norm2 = 0.0;
        for (Index j = 0; j < p; ++j) {
            if constexpr (is_complex_v<Scalar>) {
                const double re = rng.normal() * M_SQRT1_2;
                const double im = rng.normal() * M_SQRT1_2;
                z(i, j) = Scalar(re, im);
                norm2 += re * re + im * im;
            } else {
                const double v = rng.normal();
                z(i, j) = v;
                norm2 += v * v;
            }
        }
        // u = z / |z| is uniform on the sphere and independent of |z|.
        const double unorm = std::sqrt(norm2);
        z.row(i) /= unorm;
        double r2 = norm2;  // Gaussian: r^2 = |z|^2
        if (student) {
            const double w = rng.chi_squared(law.dof);
            r2 = norm2 * (law.dof - 2.0) / w;
        }
        radius(i) = std::sqrt(r2);
    }
    // Rows are u_i^T; x_i^T = r_i u_i^T M^{1/2}^T.
    Matrix<Scalar> X = radius.asDiagonal() * z * root.transpose();
    std::optional<Vector<Scalar>> mu;
    if (law.mean.size() != 0) {
        Vector<Scalar> m;
        if constexpr (is_complex_v<Scalar>)
            m = law.mean;
        else
            m = law.mean.real();
        X.rowwise() += m.transpose();
        if (attach_known_mean) mu = m;
    } else if (attach_known_mean) {
        mu = Vector<Scalar>::Zero(p);
    }
    return Dataset<Scalar>(std::move(X), std::move(mu));
}

}  // namespace linpool
