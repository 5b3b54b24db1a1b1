#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <iostream>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <type_traits>
#include <vector>

namespace linpool {

using Index = Eigen::Index;
using cdouble = std::complex<double>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Eigen::MatrixXd;
using VectorXd = Eigen::VectorXd;
using MatrixXcd = Eigen::MatrixXcd;
using VectorXcd = Eigen::VectorXcd;

template <typename T>
inline constexpr bool is_complex_v = false;
template <typename T>
inline constexpr bool is_complex_v<std::complex<T>> = true;

enum class Field { Real, Complex };

template <typename Scalar>
constexpr Field field_of() {
    return is_complex_v<Scalar> ? Field::Complex : Field::Real;
}

// ---------------------------------------------------------------------------
// Errors. Each kind maps onto one CLI exit code.

enum class ErrorKind {
    InvalidModel,
    InsufficientData,
    Shape,
    NotStrictlyConvex,
    Infeasible,
    Conditioning,
    UnsupportedClosedForm,
    Config,
    Data,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

// ---------------------------------------------------------------------------
// Warnings go through a replaceable sink so tests can capture them.

inline std::function<void(std::string_view)>& warning_sink() {
    static std::function<void(std::string_view)> sink = [](std::string_view msg) {
        std::cerr << "warning: " << msg << '\n';
    };
    return sink;
}

inline void warn(std::string_view msg) {
    if (auto& sink = warning_sink()) sink(msg);
}

// ---------------------------------------------------------------------------
// Seeded random streams. A stream is identified by (seed, stream id); two
// streams with different ids are statistically independent, and a stream's
// output never depends on which thread consumes it.

class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
        std::uint64_t s = seed;
        const std::uint64_t a = splitmix(s);
        const std::uint64_t b = splitmix(s);
        std::uint64_t t = stream ^ 0x6a09e667f3bcc909ULL;
        const std::uint64_t c = splitmix(t) ^ a;
        const std::uint64_t d = splitmix(t) ^ b;
        std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                          static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                          static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32),
                          static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(d >> 32)};
        engine_.seed(seq);
    }

    /// Child stream, independent of this one and of siblings with other ids.
    Rng split(std::uint64_t id) { return Rng(engine_(), id); }

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double chi_squared(double dof) {
        std::chi_squared_distribution<double> dist(dof);
        return dist(engine_);
    }

private:
    static std::uint64_t splitmix(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// ---------------------------------------------------------------------------
// Small numerical helpers shared across modules.

/// Neumaier compensated sum.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double real_part(double x) { return x; }
inline double real_part(cdouble x) { return x.real(); }

/// Hermitian part, removing rounding asymmetry.
template <typename Derived>
auto hermitian_part(const Eigen::MatrixBase<Derived>& m) {
    using Scalar = typename Derived::Scalar;
    Matrix<Scalar> out = (m + m.adjoint()) * 0.5;
    return out;
}

/// Real trace of A*B for Hermitian A, B without forming the product.
template <typename Scalar>
double trace_product(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
    // tr(AB) = sum_ij A_ij B_ji = sum_ij A_ij conj(B_ij) for Hermitian B.
    return real_part((a.array() * b.conjugate().array()).sum());
}

/// Symmetric PSD square root via eigendecomposition; negative eigenvalues
/// from rounding or rank deficiency are clamped to zero.
template <typename Scalar>
Matrix<Scalar> psd_sqrt(const Matrix<Scalar>& m) {
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(m);
    if (eig.info() != Eigen::Success) fail(ErrorKind::Conditioning, "eigendecomposition failed");
    VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().adjoint();
}

template <typename Scalar>
double min_eigenvalue(const Matrix<Scalar>& m) {
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(m, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

/// Runs body(i) for i in [0, count) on up to `threads` workers. Each index
/// is handled exactly once; callers write results into per-index slots.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < count; i += threads) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace linpool
