#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "netgraph.hpp"
#include "numkernel.hpp"

namespace roadeb {

// eigenvalues 4 sin^2(pi k / (2r)), k = 0..r-1, of the path Laplacian on r vertices
inline std::vector<double> path_laplacian_eigs(int r) {
  std::vector<double> v;
  for (int k = 0; k < r; ++k) {
    double s = std::sin(std::numbers::pi * k / (2.0 * r));
    v.push_back(4.0 * s * s);
  }
  return v;
}

inline Matrix path_laplacian(int r) {
  Matrix L = Matrix::Zero(r, r);
  for (int i = 0; i + 1 < r; ++i) {
    L(i, i) += 1; L(i + 1, i + 1) += 1;
    L(i, i + 1) -= 1; L(i + 1, i) -= 1;
  }
  return L;
}

namespace detail {
inline void require_positive_resolution(const HighResGraph& hr) {
  for (int v : hr.resolution().r)
    if (v < 1) throw InputError("approximation undefined at zero resolution");
}
} // namespace detail

// Block-diagonal approximation in sub-edge order: path Laplacians on the interior
// sub-edges of each edge, line-graph degrees on the two boundary sub-edges.
inline Matrix approx_line_laplacian(const HighResGraph& hr) {
  detail::require_positive_resolution(hr);
  const Matrix& L = hr.line_laplacian();
  Matrix Lt = Matrix::Zero(hr.q_r(), hr.q_r());
  for (int i = 0; i < hr.q(); ++i) {
    int f = hr.first(i), c = hr.count(i);
    if (c > 2) Lt.block(f + 1, f + 1, c - 2, c - 2) = path_laplacian(c - 2);
    Lt(f, f) = L(f, f);
    Lt(f + c - 1, f + c - 1) = L(f + c - 1, f + c - 1);
  }
  return Lt;
}

inline std::vector<double> approx_line_eigs(const HighResGraph& hr) {
  detail::require_positive_resolution(hr);
  const Matrix& L = hr.line_laplacian();
  std::vector<double> v;
  for (int i = 0; i < hr.q(); ++i) {
    auto blk = path_laplacian_eigs(hr.r(i) - 1);
    v.insert(v.end(), blk.begin(), blk.end());
  }
  for (int i = 0; i < hr.q(); ++i) {
    int f = hr.first(i), c = hr.count(i);
    v.push_back(L(f, f));
    v.push_back(L(f + c - 1, f + c - 1));
  }
  std::sort(v.begin(), v.end());
  return v;
}

inline std::vector<double> exact_line_eigs(const HighResGraph& hr) {
  Vector e = sym_eigenvalues(SymMatrix(hr.line_laplacian()));
  return {e.data(), e.data() + e.size()};
}

struct DeltaDiagnostics {
  int rank = 0;
  double norm = 0;
  int rank_bound = 0;
  double norm_bound = 2.0;
  double weyl_gap = 0;
  bool rank_ok = false;
  bool norm_ok = false;
  bool weyl_ok = false;
};

inline constexpr double kBoundSlack = 1e-10;

inline DeltaDiagnostics delta_measure(const HighResGraph& hr) {
  Matrix D = hr.line_laplacian() - approx_line_laplacian(hr);
  DeltaDiagnostics d;
  d.rank = numerical_rank(D);
  d.norm = spectral_norm_sym(SymMatrix(D));
  d.rank_bound = 6 * hr.q();
  auto ex = exact_line_eigs(hr);
  auto ap = approx_line_eigs(hr);
  for (std::size_t k = 0; k < ex.size(); ++k) d.weyl_gap = std::max(d.weyl_gap, std::abs(ex[k] - ap[k]));
  d.rank_ok = d.rank <= d.rank_bound;
  d.norm_ok = d.norm <= d.norm_bound + kBoundSlack;
  d.weyl_ok = d.weyl_gap <= 2.0 + kBoundSlack;
  return d;
}

// asserts rank <= 6q and ||Delta||_2 <= 2
inline DeltaDiagnostics delta_diagnostics(const HighResGraph& hr) {
  auto d = delta_measure(hr);
  if (!d.rank_ok)
    throw NumericalError("rank(Delta) = " + std::to_string(d.rank) + " exceeds " +
                         std::to_string(d.rank_bound));
  if (!d.norm_ok)
    throw NumericalError("||Delta||_2 = " + std::to_string(d.norm) + " exceeds 2");
  return d;
}

inline double kappa(int s, int t) {
  if (s < 1) throw InputError("kappa requires s >= 1");
  if (t < 0) throw InputError("kappa requires t >= 0");
  return std::exp(std::lgamma(s - 0.5) + std::lgamma(t + 0.5) - std::lgamma(double(t + s))) /
         std::numbers::pi;
}

struct SeriesCheck {
  int s = 0, t = 0, r = 0;
  double lambda = 0;
  double direct = 0;
  double target = 0;
  double relative_error = 0;
};

// sum_{j=1}^{r-1} h_j^s (1-h_j)^t  vs  r lambda_eff^{-1/2} kappa_{s,t},
// h_j = 1 / (1 + lambda_eff sin^2(pi (j-1) / (2r))), lambda_eff = 4 lambda sigma^2 / n
inline SeriesCheck series_check(int r, double lambda, double n, double sigma, int s, int t) {
  if (lambda < 100 || lambda > double(r) * r / 100.0)
    throw InputError("series_check needs 100 <= lambda <= r^2/100");
  double le = 4.0 * lambda * sigma * sigma / n;
  double sum = 0.0;
  for (int j = 1; j <= r - 1; ++j) {
    double sn = std::sin(std::numbers::pi * (j - 1) / (2.0 * r));
    double h = 1.0 / (1.0 + le * sn * sn);
    sum += std::pow(h, s) * std::pow(1.0 - h, t);
  }
  SeriesCheck c{s, t, r, lambda, sum, r * kappa(s, t) / std::sqrt(le), 0};
  c.relative_error = std::abs(c.direct - c.target) / c.target;
  return c;
}

struct SpectralReport {
  std::vector<double> exact_eigs;
  std::vector<double> approx_eigs;
  DeltaDiagnostics delta;
  std::vector<SeriesCheck> series_checks;
};

inline SpectralReport spectral_report(const HighResGraph& hr) {
  SpectralReport rep;
  rep.exact_eigs = exact_line_eigs(hr);
  rep.approx_eigs = approx_line_eigs(hr);
  rep.delta = delta_measure(hr);
  return rep;
}

} // namespace roadeb
