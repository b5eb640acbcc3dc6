#pragma once

#include <cmath>
#include <complex>
#include <limits>

namespace flexlab {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
inline bool operator==(Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 perp(Vec2 a) { return {-a.y, a.x}; }

struct Mat2 {
  double a11 = 0.0, a12 = 0.0, a21 = 0.0, a22 = 0.0;

  static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  static Mat2 scalar(double s) { return {s, 0.0, 0.0, s}; }
  static Mat2 diag(double a, double b) { return {a, 0.0, 0.0, b}; }
  static Mat2 rotation(double t) {
    const double c = std::cos(t), s = std::sin(t);
    return {c, -s, s, c};
  }
  static Mat2 outer(Vec2 a, Vec2 b) { return {a.x * b.x, a.x * b.y, a.y * b.x, a.y * b.y}; }
};

inline Mat2 operator+(const Mat2& a, const Mat2& b) {
  return {a.a11 + b.a11, a.a12 + b.a12, a.a21 + b.a21, a.a22 + b.a22};
}
inline Mat2 operator-(const Mat2& a, const Mat2& b) {
  return {a.a11 - b.a11, a.a12 - b.a12, a.a21 - b.a21, a.a22 - b.a22};
}
inline Mat2 operator*(double s, const Mat2& a) { return {s * a.a11, s * a.a12, s * a.a21, s * a.a22}; }
inline Mat2 operator*(const Mat2& a, const Mat2& b) {
  return {a.a11 * b.a11 + a.a12 * b.a21, a.a11 * b.a12 + a.a12 * b.a22,
          a.a21 * b.a11 + a.a22 * b.a21, a.a21 * b.a12 + a.a22 * b.a22};
}
inline Vec2 operator*(const Mat2& a, Vec2 v) {
  return {a.a11 * v.x + a.a12 * v.y, a.a21 * v.x + a.a22 * v.y};
}
inline bool operator==(const Mat2& a, const Mat2& b) {
  return a.a11 == b.a11 && a.a12 == b.a12 && a.a21 == b.a21 && a.a22 == b.a22;
}

inline double det(const Mat2& a) { return a.a11 * a.a22 - a.a12 * a.a21; }
inline double trace(const Mat2& a) { return a.a11 + a.a22; }
inline Mat2 transpose(const Mat2& a) { return {a.a11, a.a21, a.a12, a.a22}; }
inline Mat2 inverse(const Mat2& a) {
  const double d = det(a);
  return {a.a22 / d, -a.a12 / d, -a.a21 / d, a.a11 / d};
}
inline Mat2 lerp(const Mat2& a, const Mat2& b, double w) {
  return {a.a11 + w * (b.a11 - a.a11), a.a12 + w * (b.a12 - a.a12),
          a.a21 + w * (b.a21 - a.a21), a.a22 + w * (b.a22 - a.a22)};
}

// Singular values in closed form: with s = |(a11+a22, a21-a12)| and
// d = |(a11-a22, a21+a12)|, sigma_max = (s+d)/2 and sigma_min = |s-d|/2.
struct Singular {
  double max;
  double min;
};
inline Singular singular_values(const Mat2& a) {
  const double s = std::hypot(a.a11 + a.a22, a.a21 - a.a12);
  const double d = std::hypot(a.a11 - a.a22, a.a21 + a.a12);
  return {0.5 * (s + d), 0.5 * std::abs(s - d)};
}
inline double op_norm(const Mat2& a) { return singular_values(a).max; }

enum class EigKind { RealDistinct, RealDouble, Complex };

struct EigPair {
  EigKind kind = EigKind::RealDistinct;
  std::complex<double> first;   // larger modulus
  std::complex<double> second;  // smaller modulus
};

// Roots of x^2 - tr x + det. The smaller real root is recovered as det/big
// to avoid cancellation.
inline EigPair eig2(double tr, double dt) {
  const double disc = tr * tr - 4.0 * dt;
  const double tol = 1e-14 * std::max(tr * tr, std::abs(dt));
  EigPair e;
  if (std::abs(disc) <= tol) {
    e.kind = EigKind::RealDouble;
    e.first = e.second = tr / 2.0;
  } else if (disc > 0.0) {
    e.kind = EigKind::RealDistinct;
    const double big = 0.5 * (tr + std::copysign(std::sqrt(disc), tr));
    e.first = big;
    e.second = big != 0.0 ? dt / big : 0.0;
  } else {
    e.kind = EigKind::Complex;
    const double im = 0.5 * std::sqrt(-disc);
    e.first = {tr / 2.0, im};
    e.second = {tr / 2.0, -im};
  }
  return e;
}
inline EigPair eig2(const Mat2& m) { return eig2(trace(m), det(m)); }

// Unit eigenvector for a real eigenvalue of m.
inline Vec2 eigenvector(const Mat2& m, double ev) {
  const Vec2 r1{m.a12, ev - m.a11};
  const Vec2 r2{ev - m.a22, m.a21};
  const Vec2 v = norm(r1) >= norm(r2) ? r1 : r2;
  const double n = norm(v);
  if (n == 0.0) return {1.0, 0.0};
  return (1.0 / n) * v;
}

// A point x = exp(ls) * d with |d| = 1. Keeps radii far below the double
// range representable; the origin is ls = -inf.
struct ScaledPoint {
  double ls = -std::numeric_limits<double>::infinity();
  Vec2 d{0.0, 0.0};

  static ScaledPoint from(Vec2 p) {
    const double r = norm(p);
    if (r == 0.0) return {};
    return {std::log(r), (1.0 / r) * p};
  }
  static ScaledPoint polar(double log_r, double angle) {
    return {log_r, {std::cos(angle), std::sin(angle)}};
  }
  // exp(ls) * v for an arbitrary nonzero v.
  static ScaledPoint make(double ls, Vec2 v) {
    const double r = norm(v);
    if (r == 0.0) return {};
    return {ls + std::log(r), (1.0 / r) * v};
  }
  bool is_origin() const { return d.x == 0.0 && d.y == 0.0; }
  Vec2 to_vec() const { return is_origin() ? Vec2{} : std::exp(ls) * d; }
  double log_radius() const { return ls; }
  // Coordinates relative to the scale exp(ref).
  Vec2 at_scale(double ref) const { return is_origin() ? Vec2{} : std::exp(ls - ref) * d; }
  ScaledPoint shifted(double dl) const { return is_origin() ? *this : ScaledPoint{ls + dl, d}; }
};

inline ScaledPoint apply(const Mat2& a, const ScaledPoint& p) {
  if (p.is_origin()) return p;
  return ScaledPoint::make(p.ls, a * p.d);
}

// Euclidean distance between two scaled points, measured in units of exp(ref).
inline double distance_at_scale(const ScaledPoint& a, const ScaledPoint& b, double ref) {
  return norm(a.at_scale(ref) - b.at_scale(ref));
}

}  // namespace flexlab
