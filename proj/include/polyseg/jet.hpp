#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace polyseg {

/// Truncated Taylor series f(t0 + s) = sum_k c[k] s^k, k <= order. Arithmetic is exact
/// up to the truncation, so derivatives of composed closed forms come out without
/// finite differences.
class Jet {
 public:
  explicit Jet(int order = 0) : c_(order + 1, 0.0) {}

  static Jet constant(double v, int order) {
    Jet j(order);
    j.c_[0] = v;
    return j;
  }

  /// The identity s -> t0 + s.
  static Jet variable(double t0, int order) {
    Jet j(order);
    j.c_[0] = t0;
    if (order >= 1) j.c_[1] = 1.0;
    return j;
  }

  static Jet sin(double t0, int order) {
    Jet j(order);
    double f = 1.0;
    for (int k = 0; k <= order; ++k) {
      if (k > 0) f *= k;
      j.c_[k] = sin_derivative(t0, k) / f;
    }
    return j;
  }

  static Jet cos(double t0, int order) {
    Jet j(order);
    double f = 1.0;
    for (int k = 0; k <= order; ++k) {
      if (k > 0) f *= k;
      j.c_[k] = sin_derivative(t0, k + 1) / f;
    }
    return j;
  }

  int order() const { return static_cast<int>(c_.size()) - 1; }
  double operator[](int k) const { return k <= order() ? c_[k] : 0.0; }
  double& operator[](int k) { return c_[k]; }

  /// k-th derivative at t0.
  double derivative_at(int k) const {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return (*this)[k] * f;
  }

  /// d/ds; the order drops by one.
  Jet derivative() const {
    Jet d(std::max(order() - 1, 0));
    for (int k = 1; k <= order(); ++k) d.c_[k - 1] = k * c_[k];
    if (order() == 0) d.c_[0] = 0.0;
    return d;
  }

  Jet truncated(int order) const {
    Jet j(order);
    for (int k = 0; k <= std::min(order, this->order()); ++k) j.c_[k] = c_[k];
    return j;
  }

  friend Jet operator+(const Jet& a, const Jet& b) {
    Jet r(std::min(a.order(), b.order()));
    for (int k = 0; k <= r.order(); ++k) r.c_[k] = a.c_[k] + b.c_[k];
    return r;
  }
  friend Jet operator-(const Jet& a, const Jet& b) {
    Jet r(std::min(a.order(), b.order()));
    for (int k = 0; k <= r.order(); ++k) r.c_[k] = a.c_[k] - b.c_[k];
    return r;
  }
  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r(std::min(a.order(), b.order()));
    for (int k = 0; k <= r.order(); ++k)
      for (int i = 0; i <= k; ++i) r.c_[k] += a.c_[i] * b.c_[k - i];
    return r;
  }
  friend Jet operator*(double s, Jet a) {
    for (double& v : a.c_) v *= s;
    return a;
  }
  friend Jet operator/(const Jet& a, const Jet& b) {
    Jet r(std::min(a.order(), b.order()));
    for (int k = 0; k <= r.order(); ++k) {
      double v = a.c_[k];
      for (int i = 1; i <= k; ++i) v -= b.c_[i] * r.c_[k - i];
      r.c_[k] = v / b.c_[0];
    }
    return r;
  }

 private:
  static double sin_derivative(double t, int k) {
    switch (k % 4) {
      case 0: return std::sin(t);
      case 1: return std::cos(t);
      case 2: return -std::sin(t);
      default: return -std::cos(t);
    }
  }

  std::vector<double> c_;
};

}  // namespace polyseg
