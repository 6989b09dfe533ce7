#pragma once

#include <cmath>

namespace tda {

// Forward-mode dual number: value plus one tangent. Pushing duals through the
// analytic gradient code yields exact Hessian-vector products (one parameter
// direction per sweep), with no finite-difference truncation error.
struct Dual {
  double v = 0.0;
  double t = 0.0;

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit lift of constants
  Dual(double value, double tangent) : v(value), t(tangent) {}
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.t + b.t}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.t - b.t}; }
inline Dual operator-(Dual a) { return {-a.v, -a.t}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.t * b.v + a.v * b.t}; }
inline Dual operator/(Dual a, Dual b) {
  const double inv = 1.0 / b.v;
  const double val = a.v * inv;
  return {val, (a.t - val * b.t) * inv};
}

inline Dual& operator+=(Dual& a, Dual b) { a = a + b; return a; }
inline Dual& operator-=(Dual& a, Dual b) { a = a - b; return a; }
inline Dual& operator*=(Dual& a, Dual b) { a = a * b; return a; }

inline bool operator<(Dual a, Dual b) { return a.v < b.v; }
inline bool operator>(Dual a, Dual b) { return a.v > b.v; }

inline Dual exp(Dual a) {
  const double e = std::exp(a.v);
  return {e, e * a.t};
}
inline Dual log(Dual a) { return {std::log(a.v), a.t / a.v}; }
inline Dual tanh(Dual a) {
  const double th = std::tanh(a.v);
  return {th, (1.0 - th * th) * a.t};
}
inline Dual sqrt(Dual a) {
  const double s = std::sqrt(a.v);
  return {s, 0.5 * a.t / s};
}

// relu: derivative taken as 0 at the kink.
inline Dual relu(Dual a) { return a.v > 0.0 ? a : Dual{0.0, 0.0}; }
inline double relu(double a) { return a > 0.0 ? a : 0.0; }

inline double value_of(double x) { return x; }
inline double value_of(Dual x) { return x.v; }

}  // namespace tda
