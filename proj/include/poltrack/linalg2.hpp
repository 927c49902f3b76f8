#pragma once

// Exact-size complex 2x2 linear algebra used by every other poltrack module.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <stdexcept>

namespace poltrack {

using C64 = std::complex<double>;

inline constexpr C64 kJ{0.0, 1.0};

/// Thrown when a 2x2 inverse is requested for a (numerically) singular matrix.
class SingularMatrix : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Length-2 complex column vector (one sample per polarization).
struct Vec2 {
    C64 a{};
    C64 b{};

    constexpr C64& operator[](std::size_t i) { return i == 0 ? a : b; }
    constexpr const C64& operator[](std::size_t i) const { return i == 0 ? a : b; }

    friend constexpr bool operator==(const Vec2&, const Vec2&) = default;

    friend Vec2 operator+(const Vec2& x, const Vec2& y) { return {x.a + y.a, x.b + y.b}; }
    friend Vec2 operator-(const Vec2& x, const Vec2& y) { return {x.a - y.a, x.b - y.b}; }
    friend Vec2 operator*(C64 s, const Vec2& x) { return {s * x.a, s * x.b}; }
    friend Vec2 operator*(const Vec2& x, C64 s) { return {s * x.a, s * x.b}; }
};

inline double norm2(const Vec2& v) { return std::norm(v.a) + std::norm(v.b); }

/// Inner product x^H y.
inline C64 dot(const Vec2& x, const Vec2& y) { return std::conj(x.a) * y.a + std::conj(x.b) * y.b; }

/// Row-major complex 2x2 matrix.
struct Mat2 {
    C64 m00{}, m01{}, m10{}, m11{};

    static constexpr Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    static constexpr Mat2 zero() { return {}; }
    static constexpr Mat2 diag(C64 d0, C64 d1) { return {d0, 0.0, 0.0, d1}; }
    static constexpr Mat2 from_columns(const Vec2& c0, const Vec2& c1) { return {c0.a, c1.a, c0.b, c1.b}; }

    constexpr C64 operator()(std::size_t r, std::size_t c) const
    {
        return r == 0 ? (c == 0 ? m00 : m01) : (c == 0 ? m10 : m11);
    }
    constexpr C64& operator()(std::size_t r, std::size_t c)
    {
        return r == 0 ? (c == 0 ? m00 : m01) : (c == 0 ? m10 : m11);
    }

    constexpr Vec2 col(std::size_t c) const { return c == 0 ? Vec2{m00, m10} : Vec2{m01, m11}; }

    friend constexpr bool operator==(const Mat2&, const Mat2&) = default;

    friend Mat2 operator*(const Mat2& x, const Mat2& y)
    {
        return {x.m00 * y.m00 + x.m01 * y.m10, x.m00 * y.m01 + x.m01 * y.m11,
                x.m10 * y.m00 + x.m11 * y.m10, x.m10 * y.m01 + x.m11 * y.m11};
    }
    friend Vec2 operator*(const Mat2& x, const Vec2& v)
    {
        return {x.m00 * v.a + x.m01 * v.b, x.m10 * v.a + x.m11 * v.b};
    }
    friend Mat2 operator+(const Mat2& x, const Mat2& y)
    {
        return {x.m00 + y.m00, x.m01 + y.m01, x.m10 + y.m10, x.m11 + y.m11};
    }
    friend Mat2 operator-(const Mat2& x, const Mat2& y)
    {
        return {x.m00 - y.m00, x.m01 - y.m01, x.m10 - y.m10, x.m11 - y.m11};
    }
    friend Mat2 operator*(C64 s, const Mat2& x) { return {s * x.m00, s * x.m01, s * x.m10, s * x.m11}; }
    Mat2& operator+=(const Mat2& y) { return *this = *this + y; }
};

inline Mat2 adjoint(const Mat2& m)
{
    return {std::conj(m.m00), std::conj(m.m10), std::conj(m.m01), std::conj(m.m11)};
}

inline C64 det(const Mat2& m) { return m.m00 * m.m11 - m.m01 * m.m10; }

inline C64 trace(const Mat2& m) { return m.m00 + m.m11; }

/// Outer product x y^H.
inline Mat2 outer(const Vec2& x, const Vec2& y)
{
    return {x.a * std::conj(y.a), x.a * std::conj(y.b), x.b * std::conj(y.a), x.b * std::conj(y.b)};
}

inline double frob_norm(const Mat2& m)
{
    return std::sqrt(std::norm(m.m00) + std::norm(m.m01) + std::norm(m.m10) + std::norm(m.m11));
}

inline bool is_finite(const Mat2& m)
{
    for (C64 z : {m.m00, m.m01, m.m10, m.m11}) {
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    }
    return true;
}

/// Cheap Frobenius condition estimate ||m||_F ||m^-1||_F = ||m||_F^2 / |det m|.
inline double condition_estimate(const Mat2& m)
{
    const double d = std::abs(det(m));
    const double f = frob_norm(m);
    return d > 0.0 ? f * f / d : std::numeric_limits<double>::infinity();
}

inline constexpr double kMaxCondition = 1e12;

/// Inverse of a 2x2 matrix. Throws SingularMatrix when |det| <= 1e-300 or the
/// condition estimate exceeds 1e12.
inline Mat2 inv2(const Mat2& m)
{
    const C64 d = det(m);
    if (std::abs(d) <= 1e-300 || !(condition_estimate(m) <= kMaxCondition)) {
        throw SingularMatrix("inv2: matrix is singular or ill-conditioned");
    }
    const C64 r = 1.0 / d;
    return {r * m.m11, -r * m.m01, -r * m.m10, r * m.m00};
}

struct Svd2 {
    Mat2 u;
    std::array<double, 2> sigma{};  // descending
    Mat2 v;

    Mat2 reconstruct() const { return u * Mat2::diag(sigma[0], sigma[1]) * adjoint(v); }
};

namespace detail {

// Unit vector orthogonal to unit vector w with det([w, perp(w)]) = 1.
inline Vec2 perp(const Vec2& w) { return {-std::conj(w.b), std::conj(w.a)}; }

inline Vec2 normalized(const Vec2& w) { return (1.0 / std::sqrt(norm2(w))) * w; }

}  // namespace detail

/// Closed-form SVD m = u diag(sigma) v^H.
///
/// The right singular vectors come from the analytic eigendecomposition of the
/// Hermitian m^H m. The first left vector is m v1 / sigma1 and the second is the
/// orthogonal complement of the first, phase-aligned with m v2. Both factors are
/// unitary to rounding for every input, and rank-deficient inputs get a
/// deterministic complement column.
inline Svd2 svd2(const Mat2& m)
{
    const double a = std::norm(m.m00) + std::norm(m.m10);
    const double d = std::norm(m.m01) + std::norm(m.m11);
    const C64 b = std::conj(m.m00) * m.m01 + std::conj(m.m10) * m.m11;

    const double h = 0.5 * (a - d);
    const double r = std::hypot(h, std::abs(b));

    Vec2 v1{1.0, 0.0};
    if (r > 0.0) {
        // Pick the eigenvector formula that avoids cancellation.
        v1 = h >= 0.0 ? Vec2{r + h, std::conj(b)} : Vec2{b, r - h};
        v1 = detail::normalized(v1);
    }
    const Vec2 v2 = detail::perp(v1);

    const Vec2 mv1 = m * v1;
    const Vec2 mv2 = m * v2;
    double s1 = std::sqrt(norm2(mv1));

    Svd2 out;
    if (s1 == 0.0) {
        out.u = Mat2::identity();
        out.v = Mat2::from_columns(v1, v2);
        out.sigma = {0.0, 0.0};
        return out;
    }
    const Vec2 u1 = (1.0 / s1) * mv1;
    Vec2 u2 = detail::perp(u1);
    const C64 proj = dot(u2, mv2);
    double s2 = std::abs(proj);
    if (s2 > 1e-14 * s1) {
        u2 = (proj / s2) * u2;
    } else {
        s2 = 0.0;
    }

    out.u = Mat2::from_columns(u1, u2);
    out.v = Mat2::from_columns(v1, v2);
    out.sigma = {s1, s2};
    if (s2 > s1) {
        // Only possible through rounding when s1 ~ s2; keep the ordering contract.
        out.u = Mat2::from_columns(u2, u1);
        out.v = Mat2::from_columns(v2, v1);
        out.sigma = {s2, s1};
    }
    return out;
}

/// Nearest unitary matrix (polar factor) u v^H.
inline Mat2 nearest_unitary(const Mat2& m)
{
    const Svd2 s = svd2(m);
    return s.u * adjoint(s.v);
}

struct Vec3R {
    double x{}, y{}, z{};
};

/// exp(-j alpha . sigma) for the Pauli basis sigma1 = diag(1,-1),
/// sigma2 = [[0,1],[1,0]], sigma3 = [[0,-j],[j,0]], in closed form.
inline Mat2 pauli_exp(const Vec3R& alpha)
{
    const double n = std::sqrt(alpha.x * alpha.x + alpha.y * alpha.y + alpha.z * alpha.z);
    const double c = std::cos(n);
    const double sinc = n < 1e-12 ? 1.0 : std::sin(n) / n;
    // -j sinc (alpha . sigma)
    const C64 t1{0.0, -sinc * alpha.x};
    const C64 off_upper{-sinc * alpha.z, -sinc * alpha.y};  // -j sinc (a2 - j a3)
    const C64 off_lower{sinc * alpha.z, -sinc * alpha.y};   // -j sinc (a2 + j a3)
    return {c + t1, off_upper, off_lower, c - t1};
}

/// Haar-distributed 2x2 unitary: Gram-Schmidt on a complex Ginibre matrix.
/// The triangular factor produced by Gram-Schmidt has a real positive
/// diagonal, which is the phase convention that makes the result Haar.
template <class Rng>
Mat2 haar_unitary(Rng& rng)
{
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto draw = [&] { return C64{gauss(rng), gauss(rng)}; };
    Vec2 g1{draw(), draw()};
    Vec2 g2{draw(), draw()};
    const Vec2 q1 = detail::normalized(g1);
    const Vec2 q2 = detail::normalized(g2 - dot(q1, g2) * q1);
    return Mat2::from_columns(q1, q2);
}

inline double unitarity_defect(const Mat2& m) { return frob_norm(adjoint(m) * m - Mat2::identity()); }

inline bool is_unitary(const Mat2& m, double tol) { return unitarity_defect(m) <= tol; }

}  // namespace poltrack
