#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "netgraph.hpp"
#include "numkernel.hpp"

namespace roadeb {

inline constexpr double kTraceEps = 1e-8;

// Per-sub-edge sample means and sample counts.
struct Observations {
  Vector mean;
  Vector n;
};

class CovarianceModel {
public:
  enum class Kind { DiagonalPerEdge, LinearFamily };

  // Sigma = diag(sigma2[edge(k)] / n_k)
  static CovarianceModel diagonal_per_edge(const HighResGraph& hr, Vector sigma2, Vector n) {
    if (sigma2.size() != hr.q()) throw InputError("sigma2 must have one entry per edge");
    if (n.size() != hr.q_r()) throw InputError("n must have one entry per sub-edge");
    CovarianceModel c;
    c.kind_ = Kind::DiagonalPerEdge;
    c.sigma2_ = std::move(sigma2);
    c.n_ = std::move(n);
    c.owner_.resize(hr.q_r());
    for (int k = 0; k < hr.q_r(); ++k) c.owner_[k] = hr.owner(k);
    return c;
  }

  static CovarianceModel diagonal_per_edge(const HighResGraph& hr, Vector sigma2, double n) {
    return diagonal_per_edge(hr, std::move(sigma2), Vector::Constant(hr.q_r(), n));
  }

  // Sigma(theta) = sum_k theta_k E_k
  static CovarianceModel linear_family(std::vector<Matrix> basis, Vector theta) {
    if (basis.empty() || static_cast<Eigen::Index>(basis.size()) != theta.size())
      throw InputError("linear family needs one theta per basis matrix");
    for (auto& e : basis)
      if (e.rows() != basis[0].rows() || e.cols() != basis[0].rows())
        throw InputError("basis matrices must be square and of equal size");
    CovarianceModel c;
    c.kind_ = Kind::LinearFamily;
    c.basis_ = std::move(basis);
    c.theta_ = std::move(theta);
    return c;
  }

  // the per-edge diagonal family written as a linear family with E_i = diag(1{edge(k)=i}/n_k)
  static CovarianceModel diagonal_family(const HighResGraph& hr, const Vector& n, Vector theta) {
    std::vector<Matrix> basis;
    for (int i = 0; i < hr.q(); ++i) {
      Matrix e = Matrix::Zero(hr.q_r(), hr.q_r());
      for (int k = hr.first(i); k < hr.first(i) + hr.count(i); ++k) e(k, k) = 1.0 / n(k);
      basis.push_back(std::move(e));
    }
    return linear_family(std::move(basis), std::move(theta));
  }

  Kind kind() const { return kind_; }
  const Vector& sigma2() const { return sigma2_; }
  const Vector& theta() const { return theta_; }
  const std::vector<Matrix>& basis() const { return basis_; }

  CovarianceModel with_theta(Vector theta) const {
    CovarianceModel c = *this;
    c.theta_ = std::move(theta);
    return c;
  }

  Eigen::Index dim() const {
    return kind_ == Kind::DiagonalPerEdge ? n_.size() : basis_.front().rows();
  }

  Matrix matrix() const {
    if (kind_ == Kind::DiagonalPerEdge) {
      Vector d(n_.size());
      for (Eigen::Index k = 0; k < n_.size(); ++k) d(k) = sigma2_(owner_[k]) / n_(k);
      return d.asDiagonal();
    }
    Matrix s = Matrix::Zero(dim(), dim());
    for (std::size_t k = 0; k < basis_.size(); ++k) s += theta_(k) * basis_[k];
    return symmetrize(s);
  }

private:
  Kind kind_ = Kind::DiagonalPerEdge;
  Vector sigma2_, n_, theta_;
  std::vector<int> owner_;
  std::vector<Matrix> basis_;
};

enum class Level { HighResolution, Original };

struct GaussianPosterior {
  Vector mean;
  Matrix covariance;
  Level level = Level::HighResolution;
};

// H = (I + lambda Sigma Lbar)^{-1}
inline Matrix smoother_from(double lambda, const Matrix& sigma, const Matrix& lbar) {
  if (lambda < 0) throw InputError("smoother requires lambda >= 0");
  if (sigma.rows() != lbar.rows()) throw InputError("smoother: dimension mismatch");
  const Eigen::Index m = lbar.rows();
  Matrix A = Matrix::Identity(m, m) + lambda * sigma * lbar;
  Matrix H = solve_general(A, Matrix::Identity(m, m));
  double res = (A * H - Matrix::Identity(m, m)).cwiseAbs().maxCoeff();
  if (!(res <= 1e-9)) throw NumericalError("smoother: singular system");
  return H;
}

inline Matrix smoother(double lambda, const CovarianceModel& cov, const Matrix& lbar) {
  return smoother_from(lambda, cov.matrix(), lbar);
}

inline GaussianPosterior posterior(double lambda, const CovarianceModel& cov, const Matrix& lbar,
                                   const Vector& x) {
  if (!(lambda > 0)) throw InputError("prior requires positive lambda");
  if (x.size() != lbar.rows()) throw InputError("posterior: dimension mismatch");
  Matrix sigma = cov.matrix();
  Matrix H = smoother_from(lambda, sigma, lbar);
  return {H * x, symmetrize(H * sigma), Level::HighResolution};
}

namespace detail {

// H(lambda, w) = (I + lambda diag(w_k / n_k) Lbar)^{-1}
inline Matrix weighted_smoother(double lambda, const Vector& w, const Vector& n, const Matrix& lbar) {
  Vector d = w.cwiseQuotient(n);
  return smoother_from(lambda, Matrix(d.asDiagonal()), lbar);
}

// x - H x, written as H (lambda D Lbar x) since I - H = H (lambda D Lbar); exact
// zero whenever Lbar x is
inline Vector smoother_residual(const Matrix& H, double lambda, const Vector& d, const Matrix& lbar,
                                const Vector& x) {
  return H * (lambda * d.cwiseProduct(lbar * x));
}

inline Vector expand(const HighResGraph& hr, const Vector& per_edge) {
  Vector v(hr.q_r());
  for (int k = 0; k < hr.q_r(); ++k) v(k) = per_edge(hr.owner(k));
  return v;
}

} // namespace detail

// Closed-form per-edge variance estimator at H(lambda, 1).
// With per-sub-edge counts: sigma2_i = sum_{k in i} n_k r_k^2 / tr(I - H_i).
inline Vector eb_variances(const Vector& x, const HighResGraph& hr, double lambda, const Vector& n) {
  if (!(lambda > 0)) throw InputError("eb_variances requires positive lambda");
  if (x.size() != hr.q_r() || n.size() != hr.q_r())
    throw InputError("eb_variances: dimension mismatch");
  Matrix H = detail::weighted_smoother(lambda, Vector::Ones(hr.q_r()), n, hr.line_laplacian());
  Vector res = detail::smoother_residual(H, lambda, n.cwiseInverse(), hr.line_laplacian(), x);
  Vector s2(hr.q());
  for (int i = 0; i < hr.q(); ++i) {
    int f = hr.first(i), c = hr.count(i);
    double tr = c - H.block(f, f, c, c).trace();
    if (!(tr > kTraceEps)) throw NumericalError("degenerate smoother; increase lambda");
    double xr = res.segment(f, c).norm();
    if (xr <= 1e-11 * x.segment(f, c).norm()) {
      s2(i) = 0.0;
      continue;
    }
    double num = 0.0;
    for (int k = f; k < f + c; ++k) num += n(k) * res(k) * res(k);
    s2(i) = num / tr;
  }
  return s2;
}

inline Vector eb_variances(const Vector& x, const HighResGraph& hr, double lambda, double n) {
  return eb_variances(x, hr, lambda, Vector::Constant(hr.q_r(), n));
}

// Everything GCV computes at one grid point.
struct GcvEval {
  double lambda = 0;
  double value = 0;
  Vector sigma2;          // per edge
  double theta_bar = 0;   // sub-edge weighted mean of sigma2
  Matrix H;               // H(lambda / theta_bar, sigma2)
  Vector residual;        // x - H x
};

inline GcvEval gcv_eval(double lambda, const Vector& x, const HighResGraph& hr, const Vector& n) {
  GcvEval g;
  g.lambda = lambda;
  g.sigma2 = eb_variances(x, hr, lambda, n);
  Vector s = detail::expand(hr, g.sigma2);
  g.theta_bar = s.mean();
  Vector w = g.theta_bar > 0 ? Vector(s / g.theta_bar) : Vector::Ones(hr.q_r());
  g.H = detail::weighted_smoother(lambda, w, n, hr.line_laplacian());
  const double qr = hr.q_r();
  double tr = qr - g.H.trace();
  if (!(tr > kTraceEps)) throw NumericalError("GCV undefined");
  g.residual = detail::smoother_residual(g.H, lambda, w.cwiseQuotient(n), hr.line_laplacian(), x);
  double num = g.residual.squaredNorm() / qr;
  double den = tr / qr;
  g.value = num / (den * den);
  return g;
}

inline double gcv(double lambda, const Vector& x, const HighResGraph& hr, const Vector& n) {
  return gcv_eval(lambda, x, hr, n).value;
}

inline double gcv(double lambda, const Vector& x, const HighResGraph& hr, double n) {
  return gcv(lambda, x, hr, Vector::Constant(hr.q_r(), n));
}

// 40 log-spaced points on [n, max(min r, 1)^2 n 10], n = smallest sub-edge count
inline std::vector<double> default_grid(const HighResGraph& hr, const Vector& n, int count = 40) {
  double nmin = n.minCoeff();
  int rmin = *std::min_element(hr.resolution().r.begin(), hr.resolution().r.end());
  rmin = std::max(rmin, 1);
  double lo = nmin, hi = double(rmin) * rmin * nmin * 10.0;
  std::vector<double> grid;
  for (int i = 0; i < count; ++i) {
    double t = count == 1 ? 0.0 : double(i) / (count - 1);
    grid.push_back(std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo))));
  }
  return grid;
}

inline std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0) || !(hi >= lo) || count < 1) throw InputError("invalid lambda grid");
  std::vector<double> grid;
  for (int i = 0; i < count; ++i) {
    double t = count == 1 ? 0.0 : double(i) / (count - 1);
    grid.push_back(std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo))));
  }
  return grid;
}

struct LambdaSelection {
  double lambda_hat = 0;
  std::vector<std::pair<double, double>> curve; // admissible (lambda, GCV) pairs
};

inline constexpr double kGcvTieTol = 1e-13;

inline LambdaSelection select_lambda(const std::vector<double>& grid, const Vector& x,
                                     const HighResGraph& hr, const Vector& n, int threads = 1) {
  if (grid.empty()) throw InputError("empty lambda grid");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] >= grid[i - 1])) throw InputError("lambda grid must be sorted ascending");
  const std::size_t m = grid.size();
  std::vector<std::optional<double>> vals(m);
  auto work = [&](std::size_t from, std::size_t step) {
    for (std::size_t i = from; i < m; i += step) {
      try {
        vals[i] = gcv(grid[i], x, hr, n);
      } catch (const NumericalError&) {
      }
    }
  };
  threads = std::max(1, std::min<int>(threads, static_cast<int>(m)));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  LambdaSelection sel;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    if (!vals[i]) continue;
    sel.curve.push_back({grid[i], *vals[i]});
    best = std::min(best, *vals[i]);
  }
  if (sel.curve.empty()) throw NumericalError("all grid points degenerate");
  // values within rounding of the minimum count as ties; the smallest lambda wins
  const double tie = kGcvTieTol * x.squaredNorm() / static_cast<double>(x.size());
  for (const auto& pt : sel.curve)
    if (pt.second <= best + tie) { sel.lambda_hat = pt.first; break; }
  return sel;
}

inline GaussianPosterior project_posterior(const GaussianPosterior& p, const HighResGraph& hr) {
  if (p.level != Level::HighResolution) throw InputError("project_posterior: level mismatch");
  const Matrix& S = hr.projection();
  return {S * p.mean, symmetrize(S * p.covariance * S.transpose()), Level::Original};
}

struct PathMoments {
  double mean = 0;
  double variance = 0;
};

// path given as 0-based edge indices
inline PathMoments path_posterior(const GaussianPosterior& pg, const std::vector<int>& path) {
  if (pg.level != Level::Original) throw InputError("path_posterior: level mismatch");
  if (path.empty()) throw InputError("empty path");
  Vector a = Vector::Zero(pg.mean.size());
  for (int e : path) {
    if (e < 0 || e >= a.size()) throw InputError("path edge out of range");
    a(e) += 1.0;
  }
  return {a.dot(pg.mean), std::max(0.0, a.dot(pg.covariance * a))};
}

struct PipelineOptions {
  std::vector<double> grid;   // empty: default grid
  bool no_smoothing = false;
  int threads = 1;
};

struct PipelineResult {
  double lambda_hat = 0;       // dimensionless grid value
  double prior_precision = 0;  // lambda_hat / theta_bar, units 1/s^2
  double theta_bar = 0;
  Vector sigma2_hat;           // per edge, single-observation variance of a sub-edge
  Vector sigma_diag;           // diagonal of Sigma-hat, per sub-edge
  Matrix H;
  GaussianPosterior posterior_hr;
  GaussianPosterior posterior_g;
  std::vector<std::pair<double, double>> gcv_curve;
};

inline PipelineResult estimate_pipeline(const HighResGraph& hr, const Observations& obs,
                                        const PipelineOptions& opt = {}) {
  const int qr = hr.q_r();
  if (obs.mean.size() != qr || obs.n.size() != qr)
    throw InputError("observations must cover every sub-edge");
  if (obs.n.minCoeff() < 1) throw InputError("every sub-edge needs n >= 1");
  std::vector<double> grid = opt.grid.empty() ? default_grid(hr, obs.n) : opt.grid;

  PipelineResult out;
  GcvEval g;
  if (opt.no_smoothing) {
    out.lambda_hat = 0.0;
    g.sigma2 = eb_variances(obs.mean, hr, grid.front(), obs.n);
    g.H = Matrix::Identity(qr, qr);
    g.residual = Vector::Zero(qr);
    g.theta_bar = detail::expand(hr, g.sigma2).mean();
  } else {
    auto sel = select_lambda(grid, obs.mean, hr, obs.n, opt.threads);
    out.lambda_hat = sel.lambda_hat;
    out.gcv_curve = std::move(sel.curve);
    g = gcv_eval(out.lambda_hat, obs.mean, hr, obs.n);
  }
  out.theta_bar = g.theta_bar;
  out.prior_precision = g.theta_bar > 0 ? out.lambda_hat / g.theta_bar
                                        : std::numeric_limits<double>::infinity();
  out.sigma2_hat = g.sigma2;
  out.sigma_diag = detail::expand(hr, g.sigma2).cwiseQuotient(obs.n);
  out.H = std::move(g.H);
  out.posterior_hr.mean = obs.mean - g.residual;
  out.posterior_hr.covariance = symmetrize(out.H * out.sigma_diag.asDiagonal());
  out.posterior_hr.level = Level::HighResolution;
  out.posterior_g = project_posterior(out.posterior_hr, hr);
  return out;
}

struct FixedPointResult {
  CovarianceModel model;
  int iterations = 0;
  double residual = 0;
};

// Per-basis stationarity of the marginal likelihood:
// tr((I - H^T) Sigma^{-1} E_k) = r^T Sigma^{-1} E_k Sigma^{-1} r,  r = (I - H) x.
// Returns max_k |lhs_k - rhs_k| / |lhs_k|.
inline double fixed_point_residual(const Vector& x, const CovarianceModel& model, double lambda,
                                   const Matrix& lbar, Vector* lhs_out = nullptr,
                                   Vector* rhs_out = nullptr) {
  Matrix sigma = model.matrix();
  const Eigen::Index m = sigma.rows();
  Matrix H = smoother_from(lambda, sigma, lbar);
  Matrix si = solve_spd(SymMatrix(sigma), Matrix::Identity(m, m));
  Vector r = x - H * x;
  Vector u = si * r;
  Matrix A = (Matrix::Identity(m, m) - H.transpose()) * si;
  const auto& basis = model.basis();
  Vector lhs(basis.size()), rhs(basis.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < basis.size(); ++k) {
    lhs(k) = (A * basis[k]).trace();
    rhs(k) = u.dot(basis[k] * u);
    if (!(std::abs(lhs(k)) > kTraceEps)) throw NumericalError("degenerate smoother");
    worst = std::max(worst, std::abs(lhs(k) - rhs(k)) / std::abs(lhs(k)));
  }
  if (lhs_out) *lhs_out = lhs;
  if (rhs_out) *rhs_out = rhs;
  return worst;
}

inline FixedPointResult eb_fixed_point(const Vector& x, const CovarianceModel& family, double lambda,
                                       const Matrix& lbar, int max_iter = 200, double tol = 1e-8) {
  if (family.kind() != CovarianceModel::Kind::LinearFamily)
    throw InputError("eb_fixed_point needs a linear family");
  if (!(lambda > 0)) throw InputError("eb_fixed_point requires positive lambda");
  if (x.size() != lbar.rows() || family.dim() != lbar.rows())
    throw InputError("eb_fixed_point: dimension mismatch");
  CovarianceModel cur = family;
  Vector theta = family.theta();
  if (theta.size() == 0 || theta.minCoeff() <= 0) throw InputError("initial theta must be positive");
  double residual = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    Vector lhs, rhs;
    residual = fixed_point_residual(x, cur, lambda, lbar, &lhs, &rhs);
    Vector next = theta.cwiseProduct(rhs).cwiseQuotient(lhs);
    if (!next.allFinite() || next.minCoeff() <= 0)
      throw NumericalError("fixed point left the positive cone");
    double change = (next - theta).cwiseAbs().cwiseQuotient(theta).maxCoeff();
    theta = next;
    cur = cur.with_theta(theta);
    if (change <= tol) {
      residual = fixed_point_residual(x, cur, lambda, lbar);
      return {cur, it, residual};
    }
  }
  throw NumericalError("fixed point did not converge; last residual " + std::to_string(residual));
}

} // namespace roadeb
