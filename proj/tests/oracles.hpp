#pragma once

// Slow reference implementations used only by the tests. Written from the
// definitions with explicit loops and long double accumulation, sharing no
// code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n) {
  Vec out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      out[i * n + j] = s;
    }
  return out;
}

struct Zoh {
  double a_bar, b_bar;
};

inline Zoh zoh(double delta, double a, double b) {
  const long double z = static_cast<long double>(delta) * a;
  const long double a_bar = std::exp(z);
  const long double b_bar = z == 0.0L ? static_cast<long double>(delta) * b : (a_bar - 1.0L) / a * b;
  return {static_cast<double>(a_bar), static_cast<double>(b_bar)};
}

/// y_t = Σ_{i≤t} Σ_n c_n a_n^{t−i} b_n x_i, evaluated by direct powers.
inline Vec kernel_sum(const Vec& a, const Vec& b, const Vec& c, const Vec& x) {
  Vec y(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    long double s = 0.0L;
    for (std::size_t i = 0; i <= t; ++i)
      for (std::size_t n = 0; n < a.size(); ++n)
        s += static_cast<long double>(c[n]) * std::pow(static_cast<long double>(a[n]), static_cast<long double>(t - i)) *
             b[n] * x[i];
    y[t] = static_cast<double>(s);
  }
  return y;
}

inline double softplus(double x) { return static_cast<double>(std::log1p(std::exp(static_cast<long double>(x)))); }
inline double sigmoid(double x) { return static_cast<double>(1.0L / (1.0L + std::exp(-static_cast<long double>(x)))); }
inline double silu(double x) { return x * sigmoid(x); }

/// Selective scan over u[L×D] with projections W_delta[D×D], W_B/W_C[D×N],
/// A[D×N], one scalar state per (d, n).
inline Vec selective(const Vec& u, std::size_t L, std::size_t D, std::size_t N, const Vec& w_delta,
                     const Vec& b_delta, const Vec& w_b, const Vec& w_c, const Vec& A, const Vec& d_skip) {
  Vec y(L * D);
  std::vector<long double> h(D * N, 0.0L);
  for (std::size_t t = 0; t < L; ++t) {
    Vec Bt(N, 0.0), Ct(N, 0.0), dt(D, 0.0);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t e = 0; e < D; ++e) {
        Bt[n] += u[t * D + e] * w_b[e * N + n];
        Ct[n] += u[t * D + e] * w_c[e * N + n];
      }
    for (std::size_t d = 0; d < D; ++d) {
      double pre = b_delta[d];
      for (std::size_t e = 0; e < D; ++e) pre += u[t * D + e] * w_delta[e * D + d];
      dt[d] = softplus(pre);
    }
    for (std::size_t d = 0; d < D; ++d) {
      long double out = static_cast<long double>(d_skip[d]) * u[t * D + d];
      for (std::size_t n = 0; n < N; ++n) {
        const Zoh z = zoh(dt[d], A[d * N + n], Bt[n]);
        h[d * N + n] = z.a_bar * h[d * N + n] + static_cast<long double>(z.b_bar) * u[t * D + d];
        out += Ct[n] * h[d * N + n];
      }
      y[t * D + d] = static_cast<double>(out);
    }
  }
  return y;
}

inline double mean(const Vec& v) {
  long double s = 0.0L;
  for (double x : v) s += x;
  return static_cast<double>(s / v.size());
}

inline double pop_std(const Vec& v) {
  const long double m = mean(v);
  long double s = 0.0L;
  for (double x : v) s += (x - m) * (x - m);
  return static_cast<double>(std::sqrt(s / v.size()));
}

inline double cv(const Vec& v, double eps) {
  const double lo = *std::min_element(v.begin(), v.end());
  Vec shifted;
  for (double x : v) shifted.push_back(x - lo);
  return pop_std(shifted) / (mean(shifted) + eps);
}

inline Vec layer_norm(const Vec& x, double eps) {
  const double m = mean(x), s = pop_std(x);
  Vec out;
  for (double v : x) out.push_back(static_cast<double>((v - m) / std::sqrt(static_cast<long double>(s) * s + eps)));
  return out;
}

}  // namespace oracle
