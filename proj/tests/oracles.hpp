#pragma once

// Independent reference implementations used only by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

// Gaussian elimination with partial pivoting; nullopt when singular.
inline std::optional<std::vector<double>> solve_linear(Matrix a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (std::abs(a[piv][c]) < 1e-12) return std::nullopt;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t i = 0; i < n; ++i) b[i] /= a[i][i];
  return b;
}

struct ExactNash {
  std::vector<double> x;
  std::vector<double> y;
  double value = 0.0;
};

// Support enumeration over equal-size supports (sufficient for
// nondegenerate games). Row player maximizes x'Ay.
inline std::optional<ExactNash> support_enumeration(const Matrix& a) {
  const std::size_t rows = a.size(), cols = a[0].size();
  const double tol = 1e-9;
  for (std::size_t k = 1; k <= std::min(rows, cols); ++k) {
    std::vector<bool> rmask(rows, false), cmask(cols, false);
    std::fill(rmask.begin(), rmask.begin() + k, true);
    do {
      std::fill(cmask.begin(), cmask.end(), false);
      std::fill(cmask.begin(), cmask.begin() + k, true);
      do {
        std::vector<std::size_t> rs, cs;
        for (std::size_t i = 0; i < rows; ++i)
          if (rmask[i]) rs.push_back(i);
        for (std::size_t j = 0; j < cols; ++j)
          if (cmask[j]) cs.push_back(j);
        // y on cs makes rows in rs indifferent at value v; sum y = 1.
        Matrix my(k + 1, std::vector<double>(k + 1, 0.0));
        std::vector<double> by(k + 1, 0.0);
        for (std::size_t r = 0; r < k; ++r) {
          for (std::size_t c = 0; c < k; ++c) my[r][c] = a[rs[r]][cs[c]];
          my[r][k] = -1.0;
        }
        for (std::size_t c = 0; c < k; ++c) my[k][c] = 1.0;
        by[k] = 1.0;
        Matrix mx(k + 1, std::vector<double>(k + 1, 0.0));
        std::vector<double> bx(k + 1, 0.0);
        for (std::size_t c = 0; c < k; ++c) {
          for (std::size_t r = 0; r < k; ++r) mx[c][r] = a[rs[r]][cs[c]];
          mx[c][k] = -1.0;
        }
        for (std::size_t r = 0; r < k; ++r) mx[k][r] = 1.0;
        bx[k] = 1.0;
        const auto sy = solve_linear(my, by);
        const auto sx = solve_linear(mx, bx);
        if (sy && sx) {
          std::vector<double> x(rows, 0.0), y(cols, 0.0);
          bool ok = true;
          for (std::size_t r = 0; r < k; ++r) {
            x[rs[r]] = (*sx)[r];
            ok = ok && (*sx)[r] >= -tol;
          }
          for (std::size_t c = 0; c < k; ++c) {
            y[cs[c]] = (*sy)[c];
            ok = ok && (*sy)[c] >= -tol;
          }
          const double v = (*sy)[k];
          // No profitable deviation outside the supports.
          for (std::size_t i = 0; ok && i < rows; ++i) {
            double u = 0.0;
            for (std::size_t j = 0; j < cols; ++j) u += a[i][j] * y[j];
            ok = u <= v + 1e-7;
          }
          for (std::size_t j = 0; ok && j < cols; ++j) {
            double u = 0.0;
            for (std::size_t i = 0; i < rows; ++i) u += a[i][j] * x[i];
            ok = u >= v - 1e-7;
          }
          if (ok) return ExactNash{x, y, v};
        }
      } while (std::prev_permutation(cmask.begin(), cmask.end()));
    } while (std::prev_permutation(rmask.begin(), rmask.end()));
  }
  return std::nullopt;
}

// Central differences of f around x.
inline std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                             std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Upgoing return, written as a forward recursion over the tail:
// G_t = r_t + g * (Q_{t+1} >= V_{t+1} ? G_{t+1} : V_{t+1}),
// Q_{t+1} = r_{t+1} + g * V_{t+2}, and G_{T-1} = r_{T-1} + g * V_T.
inline double upgo_return(const std::vector<double>& rewards, const std::vector<double>& values,
                          double g, std::size_t t) {
  const std::size_t n = rewards.size();
  if (t + 1 == n) return rewards[t] + g * values[n];
  const double q = rewards[t + 1] + g * values[t + 2];
  const double tail = q >= values[t + 1] ? upgo_return(rewards, values, g, t + 1) : values[t + 1];
  return rewards[t] + g * tail;
}

// Discounted sum of rewards from t plus the discounted bootstrap.
inline double mc_return(const std::vector<double>& rewards, double bootstrap, double g, std::size_t t) {
  double ret = bootstrap;
  for (std::size_t k = rewards.size(); k-- > t;) ret = rewards[k] + g * ret;
  return ret;
}

// Minimizes the ELO cross-entropy of a two-model matrix in closed form:
// expected score equals the observed p.
inline double two_model_elo(double p) { return 400.0 * std::log10(p / (1.0 - p)); }

// Chi-square survival function via the regularized upper incomplete gamma.
inline double chi2_sf(double x, int dof) {
  const double a = dof / 2.0, z = x / 2.0;
  if (z <= 0.0) return 1.0;
  if (z < a + 1.0) {
    double sum = 1.0 / a, term = sum;
    for (int n = 1; n < 500; ++n) {
      term *= z / (a + n);
      sum += term;
      if (term < sum * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-z + a * std::log(z) - std::lgamma(a));
  }
  // Continued fraction (Lentz).
  double b = z + 1.0 - a, c = 1.0 / std::numeric_limits<double>::min(), d = 1.0 / b, h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-z + a * std::log(z) - std::lgamma(a)) * h;
}

}  // namespace oracle
