// Copyright (c) 2026 The FermiForge Authors
// SPDX-License-Identifier: Apache-2.0
//
// P1 finite elements for weighted second-order operators
//   L u = -d^{-1} div(A d grad u) + q u
// with Dirichlet solves, variational (superconvergent) Neumann traces,
// Dirichlet-to-Neumann matrices on a boundary Fourier basis, and a Green
// operator. All volume integrals use the one-point centroid rule; the
// nonlinear solver differentiates the same rule, so assembled linearizations
// are exact Jacobians of the discrete forward problem.

#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "fermiforge/geometry.hpp"
#include "fermiforge/metric.hpp"

namespace fermi {

using Field = Eigen::VectorXd;
using CField = Eigen::VectorXcd;
using SpMat = Eigen::SparseMatrix<double>;

// --- boundary functions on a truncated Fourier basis --------------------------

struct BoundaryFunction {
  // coeff[c][n + n_modes] multiplies e^{i n theta} on component c.
  int n_modes = 32;
  std::vector<Eigen::VectorXcd> coeff;

  static BoundaryFunction zero(int components, int n_modes = 32) {
    BoundaryFunction f;
    f.n_modes = n_modes;
    f.coeff.assign(components, Eigen::VectorXcd::Zero(2 * n_modes + 1));
    return f;
  }
  // A single complex exponential amp * e^{i n theta} on one component.
  static BoundaryFunction mode(int components, int comp, int n, cplx amp,
                               int n_modes = 32) {
    BoundaryFunction f = zero(components, n_modes);
    f.coeff[comp][n + n_modes] = amp;
    return f;
  }
  // amp * cos(n theta) resp. amp * sin(n theta), real-valued.
  static BoundaryFunction cosine(int components, int comp, int n, double amp,
                                 int n_modes = 32) {
    BoundaryFunction f = zero(components, n_modes);
    if (n == 0) {
      f.coeff[comp][n_modes] = amp;
    } else {
      f.coeff[comp][n + n_modes] = 0.5 * amp;
      f.coeff[comp][-n + n_modes] = 0.5 * amp;
    }
    return f;
  }
  static BoundaryFunction sine(int components, int comp, int n, double amp,
                               int n_modes = 32) {
    BoundaryFunction f = zero(components, n_modes);
    f.coeff[comp][n + n_modes] = cplx(0, -0.5 * amp);
    f.coeff[comp][-n + n_modes] = cplx(0, 0.5 * amp);
    return f;
  }

  cplx eval(int comp, double theta) const {
    cplx s = 0;
    for (int n = -n_modes; n <= n_modes; ++n)
      s += coeff[comp][n + n_modes] * std::exp(kI * (double(n) * theta));
    return s;
  }
  bool is_real(double tol = 1e-12) const {
    for (const auto& c : coeff)
      for (int n = 0; n <= n_modes; ++n)
        if (std::abs(c[n + n_modes] - std::conj(c[-n + n_modes])) > tol)
          return false;
    return true;
  }
  BoundaryFunction& operator+=(const BoundaryFunction& o) {
    for (size_t c = 0; c < coeff.size(); ++c) coeff[c] += o.coeff[c];
    return *this;
  }
  BoundaryFunction scaled(cplx a) const {
    BoundaryFunction f = *this;
    for (auto& c : f.coeff) c *= a;
    return f;
  }

  // Nodal samples at the mesh boundary nodes (exact angles), zero elsewhere.
  CField sample(const Mesh& mesh) const {
    CField v = CField::Zero(mesh.num_nodes());
    for (size_t c = 0; c < mesh.boundary.size(); ++c) {
      const auto& bc = mesh.boundary[c];
      for (size_t j = 0; j < bc.nodes.size(); ++j)
        v[bc.nodes[j]] = eval(static_cast<int>(c), bc.angle[j]);
    }
    return v;
  }
  Field sample_real(const Mesh& mesh) const { return sample(mesh).real(); }
};

// Discrete Fourier projection of per-node boundary values (the boundary nodes
// of each component are equally spaced in angle, so this is exact up to
// aliasing).
inline BoundaryFunction project_to_fourier(const Mesh& mesh, const CField& nodal,
                                           int n_modes) {
  BoundaryFunction f =
      BoundaryFunction::zero(static_cast<int>(mesh.boundary.size()), n_modes);
  for (size_t c = 0; c < mesh.boundary.size(); ++c) {
    const auto& bc = mesh.boundary[c];
    const int M = static_cast<int>(bc.nodes.size());
    if (M < 2 * n_modes + 2)
      throw ValidationError("boundary Fourier truncation under-resolved");
    for (int n = -n_modes; n <= n_modes; ++n) {
      cplx s = 0;
      for (int j = 0; j < M; ++j)
        s += nodal[bc.nodes[j]] * std::exp(-kI * (double(n) * bc.angle[j]));
      f.coeff[c][n + n_modes] = s / double(M);
    }
  }
  return f;
}

// --- assembled operator --------------------------------------------------------

struct TriCoeff {
  Mat2 A;
  double d = 1.0;
  double q = 0.0;
};

struct DiscreteOperator {
  const Mesh* mesh = nullptr;
  SpMat K;                      // full symmetric system (all nodes)
  std::vector<TriCoeff> coeff;  // centroid values, kept for flux work
  std::vector<int> interior;    // interior node ids
  std::vector<int> slot;        // node -> interior slot, -1 on the boundary
  SpMat K_II, K_IB;
  std::shared_ptr<Eigen::SparseLU<SpMat>> lu;
  double cond_estimate = 0.0;

  int n() const { return mesh->num_nodes(); }
};

namespace detail {

inline std::array<Vec2, 3> p1_gradients(const Mesh& m, int t, double& area) {
  const auto& tr = m.tris[t];
  area = m.tri_area(t);
  if (!(area > 1e-16)) throw SolverError("degenerate triangle in assembly");
  std::array<Vec2, 3> g;
  for (int i = 0; i < 3; ++i) {
    Vec2 e = m.nodes[tr[(i + 2) % 3]] - m.nodes[tr[(i + 1) % 3]];
    g[i] = Vec2(-e.y(), e.x()) / (2.0 * area);
  }
  return g;
}

inline double estimate_condition(const DiscreteOperator& op) {
  if (op.interior.empty()) return 1.0;
  // One-sided power estimate of ||K_II^{-1}|| times ||K_II||_inf.
  double norm_k = 0;
  for (int r = 0; r < op.K_II.outerSize(); ++r) {
    double s = 0;
    for (SpMat::InnerIterator it(op.K_II, r); it; ++it) s += std::abs(it.value());
    norm_k = std::max(norm_k, s);
  }
  Eigen::VectorXd v = Eigen::VectorXd::Ones(op.K_II.rows());
  for (int i = 0; i < v.size(); ++i)
    if (i % 2) v[i] = -1;
  double inv_norm = 0;
  for (int it = 0; it < 3; ++it) {
    Eigen::VectorXd y = op.lu->solve(v);
    double ny = y.lpNorm<Eigen::Infinity>();
    inv_norm = std::max(inv_norm, ny / v.lpNorm<Eigen::Infinity>());
    if (ny == 0) break;
    v = y;
  }
  return norm_k * inv_norm;
}

}  // namespace detail

// Assembles L from per-triangle centroid coefficients.
inline DiscreteOperator assemble_operator_tri(
    const Mesh& mesh, const std::function<TriCoeff(int)>& coeff_at) {
  DiscreteOperator op;
  op.mesh = &mesh;
  const int n = mesh.num_nodes();
  op.coeff.resize(mesh.num_tris());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh.num_tris() * 9);
  for (int t = 0; t < mesh.num_tris(); ++t) {
    double area;
    auto grad = detail::p1_gradients(mesh, t, area);
    TriCoeff c = coeff_at(t);
    if (!(c.d > 0)) throw SolverError("non-positive weight in assembly");
    op.coeff[t] = c;
    const auto& tr = mesh.tris[t];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double v = area * c.d * grad[i].dot(c.A * grad[j]) +
                   area * c.d * c.q / 9.0;
        trips.emplace_back(tr[i], tr[j], v);
      }
  }
  op.K.resize(n, n);
  op.K.setFromTriplets(trips.begin(), trips.end());

  op.slot.assign(n, -1);
  for (int i = 0; i < n; ++i)
    if (!mesh.is_boundary(i)) {
      op.slot[i] = static_cast<int>(op.interior.size());
      op.interior.push_back(i);
    }
  const int ni = static_cast<int>(op.interior.size());
  std::vector<Eigen::Triplet<double>> tII, tIB;
  for (int r = 0; r < op.K.outerSize(); ++r)
    for (SpMat::InnerIterator it(op.K, r); it; ++it) {
      int i = static_cast<int>(it.row()), j = static_cast<int>(it.col());
      if (op.slot[i] < 0) continue;
      if (op.slot[j] >= 0)
        tII.emplace_back(op.slot[i], op.slot[j], it.value());
      else
        tIB.emplace_back(op.slot[i], j, it.value());
    }
  op.K_II.resize(ni, ni);
  op.K_II.setFromTriplets(tII.begin(), tII.end());
  op.K_IB.resize(ni, n);
  op.K_IB.setFromTriplets(tIB.begin(), tIB.end());

  op.lu = std::make_shared<Eigen::SparseLU<SpMat>>();
  op.lu->compute(op.K_II);
  if (op.lu->info() != Eigen::Success)
    throw EigenvalueCollisionError(
        "eigenvalue collision: Dirichlet system is numerically singular");
  op.cond_estimate = detail::estimate_condition(op);
  if (op.cond_estimate > 1e12)
    throw EigenvalueCollisionError(
        "eigenvalue collision: condition estimate " +
        std::to_string(op.cond_estimate));
  return op;
}

// Coefficients given as callables, evaluated at triangle centroids.
inline DiscreteOperator assemble_operator(
    const Mesh& mesh, const std::function<Mat2(const Vec2&)>& A,
    const std::function<double(const Vec2&)>& d,
    const std::function<double(const Vec2&)>& q) {
  return assemble_operator_tri(mesh, [&](int t) {
    Vec2 xc = mesh.centroid(t);
    return TriCoeff{A(xc), d(xc), q(xc)};
  });
}

// Coefficients given per node, interpolated to centroids.
inline DiscreteOperator assemble_operator(const Mesh& mesh,
                                          const std::vector<Mat2>& A,
                                          const Field& d, const Field& q) {
  return assemble_operator_tri(mesh, [&](int t) {
    const auto& tr = mesh.tris[t];
    TriCoeff c;
    c.A = (A[tr[0]] + A[tr[1]] + A[tr[2]]) / 3.0;
    c.d = (d[tr[0]] + d[tr[1]] + d[tr[2]]) / 3.0;
    c.q = (q[tr[0]] + q[tr[1]] + q[tr[2]]) / 3.0;
    return c;
  });
}

// Laplace-Beltrami operator (positive convention) plus potential for a metric
// family at s = 0: A = g^{-1}, d = det(g)^{1/2}.
inline DiscreteOperator assemble_lb_operator(
    const Mesh& mesh, const MetricFamily& fam,
    const std::function<double(const Vec2&)>& q) {
  return assemble_operator_tri(mesh, [&](int t) {
    Vec2 xc = mesh.centroid(t);
    Jets0 j = fam.jets0(xc);
    return TriCoeff{j.k, j.d, q(xc)};
  });
}

// Weighted load vector: (rho, phi_i) with measure d dx, centroid rule.
inline Field assemble_load(const DiscreteOperator& op, const Field& rho) {
  const Mesh& m = *op.mesh;
  Field b = Field::Zero(m.num_nodes());
  for (int t = 0; t < m.num_tris(); ++t) {
    const auto& tr = m.tris[t];
    double rc = (rho[tr[0]] + rho[tr[1]] + rho[tr[2]]) / 3.0;
    double w = m.tri_area(t) * op.coeff[t].d * rc / 3.0;
    for (int i = 0; i < 3; ++i) b[tr[i]] += w;
  }
  return b;
}

namespace detail {

inline Field solve_constrained(const DiscreteOperator& op,
                               const Field& boundary_values,
                               const Field& load) {
  const int n = op.n();
  Field u = Field::Zero(n);
  for (int i = 0; i < n; ++i)
    if (op.slot[i] < 0) u[i] = boundary_values[i];
  Eigen::VectorXd rhs(op.interior.size());
  for (size_t s = 0; s < op.interior.size(); ++s) rhs[s] = load[op.interior[s]];
  rhs -= op.K_IB * u;
  Eigen::VectorXd ui = op.lu->solve(rhs);
  double denom = std::max(rhs.norm(), 1e-300);
  if ((op.K_II * ui - rhs).norm() / denom > 1e-8)
    throw SolverError("interior solve residual too large");
  for (size_t s = 0; s < op.interior.size(); ++s) u[op.interior[s]] = ui[s];
  return u;
}

}  // namespace detail

inline Field solve_dirichlet_nodal(const DiscreteOperator& op,
                                   const Field& boundary_values) {
  return detail::solve_constrained(op, boundary_values,
                                   Field::Zero(op.n()));
}

inline Field solve_dirichlet(const DiscreteOperator& op,
                             const BoundaryFunction& f) {
  if (!f.is_real(1e-9))
    throw ValidationError("solve_dirichlet: boundary data must be real; use "
                          "solve_dirichlet_complex");
  return solve_dirichlet_nodal(op, f.sample_real(*op.mesh));
}

// Complex data handled as two real solves on the shared factorization.
inline CField solve_dirichlet_complex(const DiscreteOperator& op,
                                      const BoundaryFunction& f) {
  CField bc = f.sample(*op.mesh);
  Field ur = solve_dirichlet_nodal(op, bc.real());
  Field ui = solve_dirichlet_nodal(op, bc.imag());
  return ur + kI * ui.cast<cplx>().eval();
}

inline Field green_solve(const DiscreteOperator& op, const Field& rhs) {
  return detail::solve_constrained(op, Field::Zero(op.n()),
                                   assemble_load(op, rhs));
}

// --- boundary geometry helpers -------------------------------------------------

// Metric length density dS_g / dtheta at a boundary node.
inline double boundary_weight(const Mesh& mesh,
                              const std::function<Mat2(const Vec2&)>& g,
                              int comp, int local) {
  const auto& bc = mesh.boundary[comp];
  double th = bc.angle[local];
  Vec2 tang(-std::sin(th), std::cos(th));
  Mat2 G = g(mesh.nodes[bc.nodes[local]]);
  return bc.radius * std::sqrt(tang.dot(G * tang));
}

// Integral of (nodal) boundary data against dS_g, trapezoid in the angle.
inline double boundary_integral(const Mesh& mesh,
                                const std::function<Mat2(const Vec2&)>& g,
                                const Field& values) {
  double total = 0;
  for (size_t c = 0; c < mesh.boundary.size(); ++c) {
    const auto& bc = mesh.boundary[c];
    double dth = 2.0 * kPi / bc.nodes.size();
    for (size_t j = 0; j < bc.nodes.size(); ++j)
      total += values[bc.nodes[j]] *
               boundary_weight(mesh, g, static_cast<int>(c), static_cast<int>(j)) *
               dth;
  }
  return total;
}

inline cplx boundary_integral(const Mesh& mesh,
                              const std::function<Mat2(const Vec2&)>& g,
                              const CField& values) {
  return boundary_integral(mesh, g, Field(values.real())) +
         kI * boundary_integral(mesh, g, Field(values.imag()));
}

// --- Neumann traces -------------------------------------------------------------

// Variational flux recovery: finds the P1 boundary function t with
// (t, phi)_{dS_g} = a(u, phi) - (load, phi) for all boundary hats phi. For the
// operators assembled here this is the conormal derivative with respect to the
// coefficient metric, one order more accurate than one-sided differencing.
inline Field neumann_trace_nodal(const DiscreteOperator& op, const Field& u,
                                 const std::function<Mat2(const Vec2&)>& g,
                                 const Field* load = nullptr) {
  const Mesh& mesh = *op.mesh;
  Field moments = op.K * u;
  if (load) moments -= *load;
  Field t = Field::Zero(mesh.num_nodes());
  for (size_t c = 0; c < mesh.boundary.size(); ++c) {
    const auto& bc = mesh.boundary[c];
    const int M = static_cast<int>(bc.nodes.size());
    // Cyclic P1 mass matrix on the component with the dS_g weight.
    SpMat Mass(M, M);
    std::vector<Eigen::Triplet<double>> trips;
    for (int j = 0; j < M; ++j) {
      int jn = (j + 1) % M;
      double len =
          (mesh.nodes[bc.nodes[jn]] - mesh.nodes[bc.nodes[j]]).norm();
      double dth = 2.0 * kPi / M;
      double wa = boundary_weight(mesh, g, static_cast<int>(c), j) * dth / len;
      double wb = boundary_weight(mesh, g, static_cast<int>(c), jn) * dth / len;
      // P1 segment mass with linearly varying weight.
      trips.emplace_back(j, j, len * (3 * wa + wb) / 12.0);
      trips.emplace_back(j, jn, len * (wa + wb) / 12.0);
      trips.emplace_back(jn, j, len * (wa + wb) / 12.0);
      trips.emplace_back(jn, jn, len * (wa + 3 * wb) / 12.0);
    }
    Mass.setFromTriplets(trips.begin(), trips.end());
    Eigen::VectorXd rhs(M);
    for (int j = 0; j < M; ++j) rhs[j] = moments[bc.nodes[j]];
    Eigen::SparseLU<SpMat> lu(Mass);
    if (lu.info() != Eigen::Success)
      throw SolverError("boundary mass factorization failed");
    Eigen::VectorXd tc = lu.solve(rhs);
    for (int j = 0; j < M; ++j) t[bc.nodes[j]] = tc[j];
  }
  return t;
}

inline CField neumann_trace_nodal_complex(
    const DiscreteOperator& op, const CField& u,
    const std::function<Mat2(const Vec2&)>& g) {
  Field tr = neumann_trace_nodal(op, u.real(), g);
  Field ti = neumann_trace_nodal(op, u.imag(), g);
  return tr + kI * ti.cast<cplx>().eval();
}

inline BoundaryFunction neumann_trace(const DiscreteOperator& op, const Field& u,
                                      const std::function<Mat2(const Vec2&)>& g,
                                      int n_modes = 32) {
  Field t = neumann_trace_nodal(op, u, g);
  return project_to_fourier(*op.mesh, t.cast<cplx>(), n_modes);
}

// One-sided reference trace: conormal from the raw P1 gradient of the
// triangles behind each boundary node. Kept for the convergence comparison.
inline Field naive_neumann_trace_nodal(const DiscreteOperator& op,
                                       const Field& u) {
  const Mesh& mesh = *op.mesh;
  Field t = Field::Zero(mesh.num_nodes());
  Field wsum = Field::Zero(mesh.num_nodes());
  for (int k = 0; k < mesh.num_tris(); ++k) {
    const auto& tr = mesh.tris[k];
    bool touches = mesh.is_boundary(tr[0]) || mesh.is_boundary(tr[1]) ||
                   mesh.is_boundary(tr[2]);
    if (!touches) continue;
    double area;
    auto grad = detail::p1_gradients(mesh, k, area);
    Vec2 gu = u[tr[0]] * grad[0] + u[tr[1]] * grad[1] + u[tr[2]] * grad[2];
    Vec2 flux = op.coeff[k].d * (op.coeff[k].A * gu);
    for (int i = 0; i < 3; ++i)
      if (mesh.is_boundary(tr[i])) {
        int c = mesh.boundary_flag[tr[i]];
        const auto& bcomp = mesh.boundary[c];
        // Euclid outward normal of the circle at that node.
        Vec2 x = mesh.nodes[tr[i]];
        Vec2 nrm = x / std::max(x.norm(), 1e-300);
        if (bcomp.orientation < 0) nrm = -nrm;
        // Conormal density against dS_g ~ handled by caller comparisons; the
        // naive estimate is just flux . n / (dS_g/dl weight at the node).
        t[tr[i]] += area * flux.dot(nrm);
        wsum[tr[i]] += area;
      }
  }
  for (int i = 0; i < mesh.num_nodes(); ++i)
    if (wsum[i] > 0) t[i] /= wsum[i];
  return t;
}

// --- DN matrices ----------------------------------------------------------------

// Real orthonormal trigonometric basis per component:
//   b_0 = 1/sqrt(2 pi R), b_{2n-1} = cos(n th)/sqrt(pi R),
//   b_{2n} = sin(n th)/sqrt(pi R).
inline double real_basis_eval(int b, double theta, double radius) {
  if (b == 0) return 1.0 / std::sqrt(2.0 * kPi * radius);
  int n = (b + 1) / 2;
  double s = 1.0 / std::sqrt(kPi * radius);
  return b % 2 ? s * std::cos(n * theta) : s * std::sin(n * theta);
}

struct DNMatrix {
  Eigen::MatrixXd M;  // stacked over components, (2N+1) rows/cols each
  int n_modes = 0;
  std::vector<double> radii;
  std::string operator_tag;
  int mesh_level = 0;

  int block(int comp) const { return comp * (2 * n_modes + 1); }
};

inline DNMatrix dn_matrix(const DiscreteOperator& op,
                          const std::function<Mat2(const Vec2&)>& g,
                          int n_modes = 32, const std::string& tag = "") {
  const Mesh& mesh = *op.mesh;
  const int ncomp = static_cast<int>(mesh.boundary.size());
  const int per = 2 * n_modes + 1;
  for (const auto& bc : mesh.boundary)
    if (static_cast<int>(bc.nodes.size()) < 2 * per / 2 + 2)
      throw ValidationError("dn_matrix: boundary Fourier truncation "
                            "under-resolved at this mesh level");
  DNMatrix dn;
  dn.n_modes = n_modes;
  dn.operator_tag = tag;
  dn.mesh_level = mesh.level;
  for (const auto& bc : mesh.boundary) dn.radii.push_back(bc.radius);
  dn.M.setZero(ncomp * per, ncomp * per);

  for (int c = 0; c < ncomp; ++c) {
    const auto& bc = mesh.boundary[c];
    for (int b = 0; b < per; ++b) {
      Field bdata = Field::Zero(mesh.num_nodes());
      for (size_t j = 0; j < bc.nodes.size(); ++j)
        bdata[bc.nodes[j]] = real_basis_eval(b, bc.angle[j], bc.radius);
      Field u = solve_dirichlet_nodal(op, bdata);
      Field t = neumann_trace_nodal(op, u, g);
      // Project the trace on every component against Euclid arc length.
      for (int c2 = 0; c2 < ncomp; ++c2) {
        const auto& bc2 = mesh.boundary[c2];
        double dl = 2.0 * kPi * bc2.radius / bc2.nodes.size();
        for (int b2 = 0; b2 < per; ++b2) {
          double acc = 0;
          for (size_t j = 0; j < bc2.nodes.size(); ++j)
            acc += t[bc2.nodes[j]] *
                   real_basis_eval(b2, bc2.angle[j], bc2.radius) * dl;
          dn.M(dn.block(c2) + b2, dn.block(c) + b) = acc;
        }
      }
    }
  }
  return dn;
}

// <Lambda f, f> computed through the DN matrix for real data given in the
// orthonormal basis coordinates.
inline double dn_quadratic_form(const DNMatrix& dn, const Eigen::VectorXd& f) {
  return f.dot(dn.M * f);
}

// Energy a(u,u) of the Dirichlet solve, the volume side of the quadratic-form
// identity.
inline double dirichlet_energy(const DiscreteOperator& op, const Field& u) {
  return u.dot(op.K * u);
}

}  // namespace fermi
