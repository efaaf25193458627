#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <iostream>
#include <optional>
#include <vector>

#include "kfh/graph.hpp"

namespace kfh {

struct EigenDecomposition {
  Vector eigenvalues;  // ascending
  Matrix eigenvectors; // orthonormal columns
};

/// Dense symmetric eigendecomposition M = U diag(mu) U^T.
/// Rejects non-symmetric or non-finite input.
inline EigenDecomposition eig_sym(const SymmetricMatrix& m) {
  detail::require(m.rows() == m.cols(), "eig_sym requires a square matrix");
  detail::require(m.allFinite(), "eig_sym requires finite entries");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  detail::require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
                  "eig_sym requires a symmetric matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  detail::require(solver.info() == Eigen::Success, "eigendecomposition failed");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// Tikhonov smoother X_hat = q (L + qI)^{-1} X via a direct linear solve.
/// This is the inverse-formulation path; the Spectrum-based functions
/// below are the spectral path, and the two are cross-checked in tests.
inline Matrix tikhonov_smooth(const SymmetricMatrix& l, const Matrix& x, double q) {
  detail::require(q > 0.0, "tikhonov_smooth requires q > 0");
  detail::require(x.rows() == l.rows(), "feature row count must match Laplacian order");
  if (std::isinf(q)) return x;
  SymmetricMatrix shifted = l;
  shifted.diagonal().array() += q;
  return Eigen::LDLT<Matrix>(shifted).solve(q * x);
}

/// Cached spectral summary of (L, X): eigenvalues of L (clamped to zero
/// below a relative threshold) and per-eigenmode signal energies
/// S_i = ||U_i^T X||^2. Everything the q-selection losses need.
struct Spectrum {
  Vector eigenvalues;
  Vector mode_energies;
  double total_energy = 0.0;     // sum S_i = ||X||_F^2
  double nonkernel_energy = 0.0; // sum over mu_i > 0
  double dirichlet_total = 0.0;  // sum mu_i S_i = tr(X^T L X)
  double zero_tol = 0.0;

  int size() const { return static_cast<int>(eigenvalues.size()); }
  int kernel_count() const {
    int k = 0;
    for (int i = 0; i < size(); ++i)
      if (eigenvalues[i] == 0.0) ++k;
    return k;
  }
};

inline Spectrum spectrum_of(const SymmetricMatrix& l, const Matrix& x) {
  detail::require(x.rows() == l.rows(), "feature row count must match Laplacian order");
  EigenDecomposition eig = eig_sym(l);
  Spectrum s;
  const double mu_max = eig.eigenvalues.size() ? eig.eigenvalues.maxCoeff() : 0.0;
  s.zero_tol = 1e-9 * std::max(mu_max, 1.0);
  s.eigenvalues = eig.eigenvalues;
  for (int i = 0; i < s.size(); ++i) {
    detail::require(s.eigenvalues[i] >= -s.zero_tol, "matrix is not positive semidefinite");
    if (s.eigenvalues[i] < s.zero_tol) s.eigenvalues[i] = 0.0;
  }
  const Matrix coeffs = eig.eigenvectors.transpose() * x;
  s.mode_energies = coeffs.rowwise().squaredNorm();
  s.total_energy = s.mode_energies.sum();
  for (int i = 0; i < s.size(); ++i) {
    if (s.eigenvalues[i] > 0.0) s.nonkernel_energy += s.mode_energies[i];
    s.dirichlet_total += s.eigenvalues[i] * s.mode_energies[i];
  }
  return s;
}

namespace detail {
inline double gain(double mu, double q) { return std::isinf(q) ? 1.0 : q / (mu + q); }
}  // namespace detail

/// Normalized reconstruction loss sum (1-h_i)^2 S_i / sum_{mu>0} S_i,
/// h_i = q/(mu_i+q). The denominator is the q -> 0+ limit of the
/// residual; 0 when all signal energy sits in the Laplacian kernel.
inline double recon_loss(const Spectrum& s, double q) {
  detail::require(q > 0.0, "recon_loss requires q > 0");
  // Relative cutoff: projection noise puts ~1e-30 of a constant signal's
  // energy outside the kernel.
  if (s.nonkernel_energy <= 1e-12 * s.total_energy) return 0.0;
  double num = 0.0;
  for (int i = 0; i < s.size(); ++i) {
    const double r = 1.0 - detail::gain(s.eigenvalues[i], q);
    num += r * r * s.mode_energies[i];
  }
  return num / s.nonkernel_energy;
}

/// Normalized Dirichlet loss sum mu_i (1-h_i)^2 S_i / sum mu_i S_i;
/// 0 for constant (kernel-only) signals.
inline double dirichlet_loss(const Spectrum& s, double q) {
  detail::require(q > 0.0, "dirichlet_loss requires q > 0");
  const double mu_max = s.size() ? s.eigenvalues.maxCoeff() : 0.0;
  if (s.dirichlet_total <= 1e-12 * mu_max * s.total_energy) return 0.0;
  double num = 0.0;
  for (int i = 0; i < s.size(); ++i) {
    const double r = 1.0 - detail::gain(s.eigenvalues[i], q);
    num += s.eigenvalues[i] * r * r * s.mode_energies[i];
  }
  return num / s.dirichlet_total;
}

/// Effective degrees of freedom (1/size) sum_{mu_i > 0} q/(mu_i + q).
inline double degrees_of_freedom(const Spectrum& s, double q, int size) {
  detail::require(q > 0.0, "degrees_of_freedom requires q > 0");
  detail::require(size >= 1, "size must be positive");
  double sum = 0.0;
  for (int i = 0; i < s.size(); ++i)
    if (s.eigenvalues[i] > 0.0) sum += detail::gain(s.eigenvalues[i], q);
  return sum / static_cast<double>(size);
}

/// J(q) = (L_rec + L_dir)/2 on the node side, plus the same on the edge
/// side, plus phi (df_node + df_edge). A missing edge spectrum (no edge
/// features) contributes zero to every edge term.
inline double objective_j(const Spectrum& node_spec, const std::optional<Spectrum>& edge_spec, double q,
                          double phi, int n, int m) {
  detail::require(phi >= 0.0, "phi must be nonnegative");
  double j = 0.5 * (recon_loss(node_spec, q) + dirichlet_loss(node_spec, q));
  j += phi * degrees_of_freedom(node_spec, q, n);
  if (edge_spec) {
    j += 0.5 * (recon_loss(*edge_spec, q) + dirichlet_loss(*edge_spec, q));
    j += phi * degrees_of_freedom(*edge_spec, q, m);
  }
  return j;
}

struct QCurvePoint {
  double q = 0.0;
  double recon_node = 0.0, dir_node = 0.0;
  double recon_edge = 0.0, dir_edge = 0.0;
  double df_node = 0.0, df_edge = 0.0;
  double j = 0.0;
};

/// Evaluated q grid with the selected minimizer. phi is the trade-off
/// weight used.
struct QCurve {
  std::vector<QCurvePoint> points;
  double q_star = 0.0;
  std::size_t q_star_index = 0;
  double phi = 0.0;
};

inline std::vector<double> log_grid(double lo, double hi, int points) {
  detail::require(lo > 0.0 && hi > lo && points >= 2, "log grid requires 0 < lo < hi and >= 2 points");
  std::vector<double> grid(points);
  const double step = (std::log(hi) - std::log(lo)) / (points - 1);
  for (int i = 0; i < points; ++i) grid[i] = std::exp(std::log(lo) + step * i);
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

namespace detail {

inline QCurve curve_from_spectra(const Spectrum& node_spec, const std::optional<Spectrum>& edge_spec,
                                 int n, int m, const std::vector<double>& q_grid, double phi) {
  require(!q_grid.empty(), "q grid must be nonempty");
  for (std::size_t i = 0; i < q_grid.size(); ++i) {
    require(q_grid[i] > 0.0, "q grid values must be positive");
    if (i > 0) require(q_grid[i] > q_grid[i - 1], "q grid must be strictly increasing");
  }
  QCurve curve;
  curve.phi = phi;
  for (double q : q_grid) {
    QCurvePoint pt;
    pt.q = q;
    pt.recon_node = recon_loss(node_spec, q);
    pt.dir_node = dirichlet_loss(node_spec, q);
    pt.df_node = degrees_of_freedom(node_spec, q, n);
    if (edge_spec) {
      pt.recon_edge = recon_loss(*edge_spec, q);
      pt.dir_edge = dirichlet_loss(*edge_spec, q);
      pt.df_edge = degrees_of_freedom(*edge_spec, q, m);
    }
    pt.j = 0.5 * (pt.recon_node + pt.dir_node) + 0.5 * (pt.recon_edge + pt.dir_edge) +
           phi * (pt.df_node + pt.df_edge);
    curve.points.push_back(pt);
  }
  // Ascending grid + strict comparison: ties resolve to the smaller q.
  curve.q_star_index = 0;
  for (std::size_t i = 1; i < curve.points.size(); ++i)
    if (curve.points[i].j < curve.points[curve.q_star_index].j) curve.q_star_index = i;
  curve.q_star = curve.points[curve.q_star_index].q;
  return curve;
}

}  // namespace detail

/// Evaluate J over the grid with one eigendecomposition of L (and of the
/// line-graph Laplacian when edge features are present) and pick the
/// minimizer; ties go to the smaller q.
inline QCurve select_q(const Graph& g, const std::vector<double>& q_grid, double phi) {
  const Spectrum node_spec = spectrum_of(laplacian(g), g.node_features());
  std::optional<Spectrum> edge_spec;
  if (g.edge_count() >= 1 && g.edge_feature_dim() > 0) {
    if (g.edge_count() > 2000)
      std::cerr << "select_q: line-graph eigendecomposition on m = " << g.edge_count()
                << " edges is cubic; expect a long run\n";
    const Graph lg = line_graph(g);
    edge_spec = spectrum_of(laplacian(lg), lg.node_features());
  }
  return detail::curve_from_spectra(node_spec, edge_spec, g.node_count(), g.edge_count(), q_grid, phi);
}

/// Dataset variant: per-graph curves averaged pointwise over the grid
/// before the argmin.
inline QCurve select_q_dataset(const std::vector<Graph>& graphs, const std::vector<double>& q_grid,
                               double phi) {
  detail::require(!graphs.empty(), "dataset must be nonempty");
  QCurve mean;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    QCurve c = select_q(graphs[gi], q_grid, phi);
    if (gi == 0) {
      mean = std::move(c);
      continue;
    }
    for (std::size_t i = 0; i < mean.points.size(); ++i) {
      QCurvePoint& a = mean.points[i];
      const QCurvePoint& b = c.points[i];
      a.recon_node += b.recon_node;
      a.dir_node += b.dir_node;
      a.recon_edge += b.recon_edge;
      a.dir_edge += b.dir_edge;
      a.df_node += b.df_node;
      a.df_edge += b.df_edge;
      a.j += b.j;
    }
  }
  const double inv = 1.0 / static_cast<double>(graphs.size());
  for (QCurvePoint& pt : mean.points) {
    pt.recon_node *= inv;
    pt.dir_node *= inv;
    pt.recon_edge *= inv;
    pt.dir_edge *= inv;
    pt.df_node *= inv;
    pt.df_edge *= inv;
    pt.j *= inv;
  }
  mean.q_star_index = 0;
  for (std::size_t i = 1; i < mean.points.size(); ++i)
    if (mean.points[i].j < mean.points[mean.q_star_index].j) mean.q_star_index = i;
  mean.q_star = mean.points[mean.q_star_index].q;
  return mean;
}

}  // namespace kfh
