// Copyright (c) 2026 The FermiForge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Nonlinear graph solver. A graph s = u(x) over the base surface is minimal
// when u solves
//   -d_u^{-1} div( k_u d_u (1+|grad u|^2_{g_u})^{-1/2} grad u ) + f(u, grad u) = 0,
//   f = 1/2 (1+|grad u|^2)^{-1/2} k1_u(grad u, grad u) + 1/2 (1+|grad u|^2)^{1/2} h_u,
// all metric data evaluated at s = u(x). The discrete residual below is the
// exact gradient of the discrete area functional (same one-point quadrature),
// so Newton minimizes the area directly and the assembled Jacobian is the
// exact Hessian.

#pragma once

#include <optional>

#include "fermiforge/fem.hpp"

namespace fermi {

struct GraphSolution {
  Field u;
  Field boundary_data;
  int newton_iterations = 0;
  double final_residual = 0.0;
  double area = 0.0;
  std::vector<double> residual_history;
  double stability_constant = 0.0;  // ||u||_inf / ||f||_inf
  double quad_constant = 0.0;       // r_{k+1} <= C r_k^2 over the last steps
};

namespace detail {

struct TriState {
  double area;
  std::array<Vec2, 3> grad;
  double theta;  // centroid value of u
  Vec2 p;        // gradient of u on the triangle
  SJets j;
  double Q, W;
  double a1pp;  // k1(p, p)
};

inline TriState tri_state(const MetricFamily& fam, const Mesh& mesh, int t,
                          const Field& u) {
  TriState s;
  s.grad = p1_gradients(mesh, t, s.area);
  const auto& tr = mesh.tris[t];
  s.theta = (u[tr[0]] + u[tr[1]] + u[tr[2]]) / 3.0;
  s.p = u[tr[0]] * s.grad[0] + u[tr[1]] * s.grad[1] + u[tr[2]] * s.grad[2];
  s.j = fam.jets_at(mesh.centroid(t), s.theta);
  s.Q = s.p.dot(s.j.k * s.p);
  s.W = 1.0 / std::sqrt(1.0 + s.Q);
  s.a1pp = s.p.dot(s.j.k1 * s.p);
  return s;
}

}  // namespace detail

inline void check_range(const MetricFamily& fam, const Field& u) {
  if (u.size() && u.lpNorm<Eigen::Infinity>() > fam.s_max)
    throw ValidationError("graph leaves the Fermi collar |u| <= s_max");
}

// Discrete area of the graph, one-point gradient rule per triangle.
inline double graph_area(const MetricFamily& fam, const Mesh& mesh,
                         const Field& u) {
  check_range(fam, u);
  double a = 0;
  for (int t = 0; t < mesh.num_tris(); ++t) {
    auto s = detail::tri_state(fam, mesh, t, u);
    a += s.area * s.j.d * std::sqrt(1.0 + s.Q);
  }
  return a;
}

// Weak-form residual of the minimal surface equation; entry i is the
// derivative of the discrete area with respect to u_i (boundary rows carry
// the flux pairing).
inline Field msq_residual_weak(const MetricFamily& fam, const Mesh& mesh,
                               const Field& u) {
  check_range(fam, u);
  Field R = Field::Zero(mesh.num_nodes());
  for (int t = 0; t < mesh.num_tris(); ++t) {
    auto s = detail::tri_state(fam, mesh, t, u);
    const auto& tr = mesh.tris[t];
    Vec2 Ap = s.j.k * s.p;
    double fterm = 0.5 * s.W * s.a1pp + 0.5 * (1.0 / s.W) * s.j.h;
    for (int i = 0; i < 3; ++i)
      R[tr[i]] += s.area * (s.j.d * s.W * Ap.dot(s.grad[i]) +
                            s.j.d * fterm / 3.0);
  }
  return R;
}

// Strong-form residual estimate: weak residual divided by the lumped weighted
// mass, so a constant source of size c reports as c.
inline Field msq_residual(const MetricFamily& fam, const Mesh& mesh,
                          const Field& u) {
  Field R = msq_residual_weak(fam, mesh, u);
  Field mass = Field::Zero(mesh.num_nodes());
  for (int t = 0; t < mesh.num_tris(); ++t) {
    auto s = detail::tri_state(fam, mesh, t, u);
    for (int i = 0; i < 3; ++i) mass[mesh.tris[t][i]] += s.area * s.j.d / 3.0;
  }
  for (int i = 0; i < mesh.num_nodes(); ++i) R[i] /= mass[i];
  return R;
}

// Exact Hessian of the discrete area (equivalently the exact Jacobian of the
// weak residual).
inline SpMat msq_jacobian(const MetricFamily& fam, const Mesh& mesh,
                          const Field& u) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh.num_tris() * 9);
  for (int t = 0; t < mesh.num_tris(); ++t) {
    auto s = detail::tri_state(fam, mesh, t, u);
    const auto& tr = mesh.tris[t];
    Vec2 Ap = s.j.k * s.p;
    Vec2 A1p = s.j.k1 * s.p;
    double a2pp = s.p.dot(s.j.k2 * s.p);
    double fterm = 0.5 * s.W * s.a1pp + 0.5 * (1.0 / s.W) * s.j.h;
    for (int jv = 0; jv < 3; ++jv) {
      const Vec2& qj = s.grad[jv];
      double dQ = s.a1pp / 3.0 + 2.0 * Ap.dot(qj);
      double dW = -0.5 * s.W * s.W * s.W * dQ;
      double dWinv = 0.5 * (1.0 / s.W) * dQ * s.W * s.W;  // d sqrt(1+Q)
      double dfterm = 0.5 * dW * s.a1pp +
                      0.5 * s.W * (a2pp / 3.0 + 2.0 * A1p.dot(qj)) +
                      0.5 * dWinv * s.j.h + 0.5 * (1.0 / s.W) * s.j.h1 / 3.0;
      for (int iv = 0; iv < 3; ++iv) {
        const Vec2& qi = s.grad[iv];
        double v = 0;
        // principal part
        v += s.j.d1 / 3.0 * s.W * Ap.dot(qi);
        v += s.j.d * dW * Ap.dot(qi);
        v += s.j.d * s.W * (A1p / 3.0 + s.j.k * qj).dot(qi);
        // zeroth-order part
        v += (s.j.d * dfterm + s.j.d1 / 3.0 * fterm) / 3.0;
        trips.emplace_back(tr[iv], tr[jv], s.area * v);
      }
    }
  }
  SpMat J(mesh.num_nodes(), mesh.num_nodes());
  J.setFromTriplets(trips.begin(), trips.end());
  return J;
}

// First variation of the area at u in direction w, boundary term included:
// this is the exact pairing gradient(area) . w of the discrete functional,
// which coincides with the quadrature of the displayed variation integral.
inline double first_variation(const MetricFamily& fam, const Mesh& mesh,
                              const Field& u, const Field& w) {
  return msq_residual_weak(fam, mesh, u).dot(w);
}

inline SpMat restrict_interior(const Mesh& mesh, const SpMat& K,
                               const std::vector<int>& slot, int ni) {
  std::vector<Eigen::Triplet<double>> trips;
  for (int r = 0; r < K.outerSize(); ++r)
    for (SpMat::InnerIterator it(K, r); it; ++it) {
      int i = slot[it.row()], j = slot[it.col()];
      if (i >= 0 && j >= 0) trips.emplace_back(i, j, it.value());
    }
  SpMat out(ni, ni);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

inline GraphSolution solve_minimal_graph(const MetricFamily& fam,
                                         const Mesh& mesh,
                                         const Field& boundary_nodal,
                                         double tol = 1e-12,
                                         int max_iter = 40) {
  GraphSolution sol;
  sol.boundary_data = boundary_nodal;

  std::vector<int> slot(mesh.num_nodes(), -1);
  std::vector<int> interior;
  for (int i = 0; i < mesh.num_nodes(); ++i)
    if (!mesh.is_boundary(i)) {
      slot[i] = static_cast<int>(interior.size());
      interior.push_back(i);
    }
  const int ni = static_cast<int>(interior.size());

  // Harmonic lift of the data as the initial guess.
  DiscreteOperator lb = assemble_lb_operator(mesh, fam,
                                             [](const Vec2&) { return 0.0; });
  Field u = solve_dirichlet_nodal(lb, boundary_nodal);
  check_range(fam, u);

  auto interior_norm = [&](const Field& R) {
    double s = 0;
    for (int i : interior) s += R[i] * R[i];
    return std::sqrt(s);
  };

  Field R = msq_residual_weak(fam, mesh, u);
  double rnorm = interior_norm(R);
  sol.residual_history.push_back(rnorm);
  int it = 0;
  while (rnorm > tol && it < max_iter) {
    SpMat J = msq_jacobian(fam, mesh, u);
    SpMat J_II = restrict_interior(mesh, J, slot, ni);
    Eigen::SparseLU<SpMat> lu(J_II);
    if (lu.info() != Eigen::Success)
      throw EigenvalueCollisionError(
          "eigenvalue collision in the linearized operator");
    Eigen::VectorXd rhs(ni);
    for (int s = 0; s < ni; ++s) rhs[s] = R[interior[s]];
    Eigen::VectorXd step = lu.solve(rhs);

    // Backtracking on the residual norm, factor 1/2, at most 20 halvings.
    double lambda = 1.0;
    Field u_next;
    double rnext = 0;
    int halvings = 0;
    for (; halvings <= 20; ++halvings) {
      u_next = u;
      for (int s = 0; s < ni; ++s) u_next[interior[s]] -= lambda * step[s];
      if (u_next.lpNorm<Eigen::Infinity>() <= fam.s_max) {
        Field Rn = msq_residual_weak(fam, mesh, u_next);
        rnext = interior_norm(Rn);
        if (rnext < rnorm || rnext <= tol) {
          R = Rn;
          break;
        }
      }
      lambda *= 0.5;
    }
    if (halvings > 20)
      throw SolverError("Newton divergence: backtracking failed");
    u = u_next;
    rnorm = rnext;
    sol.residual_history.push_back(rnorm);
    ++it;
  }
  if (rnorm > tol)
    throw SolverError("Newton divergence: residual " + std::to_string(rnorm));
  check_range(fam, u);

  sol.u = u;
  sol.newton_iterations = it;
  sol.final_residual = rnorm;
  sol.area = graph_area(fam, mesh, u);
  double fn = 0;
  for (int i = 0; i < mesh.num_nodes(); ++i)
    if (mesh.is_boundary(i)) fn = std::max(fn, std::abs(boundary_nodal[i]));
  sol.stability_constant = fn > 0 ? u.lpNorm<Eigen::Infinity>() / fn : 0.0;
  const auto& h = sol.residual_history;
  for (size_t k = 0; k + 1 < h.size(); ++k)
    if (h[k] > 0 && h[k + 1] > 1e-15)
      sol.quad_constant = std::max(sol.quad_constant, h[k + 1] / (h[k] * h[k]));
  return sol;
}

inline GraphSolution solve_minimal_graph(const MetricFamily& fam,
                                         const Mesh& mesh,
                                         const BoundaryFunction& f,
                                         double tol = 1e-12) {
  return solve_minimal_graph(fam, mesh, f.sample_real(mesh), tol);
}

// --- the nonlinear DN map -----------------------------------------------------

// Nodal conormal derivative of the converged graph with respect to the metric
// at s = u: recovered variationally from the area gradient, then converted
// from the flux density to the pointwise conormal derivative.
inline Field nonlinear_dn_nodal(const MetricFamily& fam, const Mesh& mesh,
                                const GraphSolution& sol) {
  const Field R = msq_residual_weak(fam, mesh, sol.u);
  Field lambda = Field::Zero(mesh.num_nodes());
  for (size_t c = 0; c < mesh.boundary.size(); ++c) {
    const auto& bc = mesh.boundary[c];
    const int M = static_cast<int>(bc.nodes.size());
    // Nodal flux density rho with respect to Euclid arc length:
    // sum_b rho_b (phi_b, phi_j)_dl = R_j.
    SpMat Mass(M, M);
    std::vector<Eigen::Triplet<double>> trips;
    for (int j = 0; j < M; ++j) {
      int jn = (j + 1) % M;
      double len = (mesh.nodes[bc.nodes[jn]] - mesh.nodes[bc.nodes[j]]).norm();
      trips.emplace_back(j, j, len / 3.0);
      trips.emplace_back(jn, jn, len / 3.0);
      trips.emplace_back(j, jn, len / 6.0);
      trips.emplace_back(jn, j, len / 6.0);
    }
    Mass.setFromTriplets(trips.begin(), trips.end());
    Eigen::VectorXd rhs(M);
    for (int j = 0; j < M; ++j) rhs[j] = R[bc.nodes[j]];
    Eigen::SparseLU<SpMat> lu(Mass);
    Eigen::VectorXd rho = lu.solve(rhs);

    // Tangential derivative along the circle by centered differences in the
    // angle (the nodes are equally spaced).
    Eigen::VectorXd dtau(M);
    double dth = 2.0 * kPi * bc.orientation / M;
    for (int j = 0; j < M; ++j) {
      int jp = (j + 1) % M, jm = (j + M - 1) % M;
      dtau[j] = (sol.u[bc.nodes[jp]] - sol.u[bc.nodes[jm]]) /
                (2.0 * dth * bc.radius);
    }

    for (int j = 0; j < M; ++j) {
      Vec2 x = mesh.nodes[bc.nodes[j]];
      double th = bc.angle[j];
      Vec2 nrm(std::cos(th), std::sin(th));
      if (bc.orientation < 0) nrm = -nrm;
      Vec2 tau(-std::sin(th) * bc.orientation, std::cos(th) * bc.orientation);
      SJets jj = fam.jets_at(x, sol.u[bc.nodes[j]]);
      double knn = nrm.dot(jj.k * nrm);
      double knt = nrm.dot(jj.k * tau);
      double ktt = tau.dot(jj.k * tau);
      double beta = dtau[j];
      // Solve rho = d W(alpha) (alpha knn + beta knt) for the normal
      // derivative alpha; W couples back through |grad u|^2_g.
      double alpha = rho[j] / (jj.d * knn);
      for (int n = 0; n < 30; ++n) {
        double Q = alpha * alpha * knn + 2 * alpha * beta * knt +
                   beta * beta * ktt;
        double W = 1.0 / std::sqrt(1.0 + Q);
        double F = jj.d * W * (alpha * knn + beta * knt) - rho[j];
        double dQ = 2 * alpha * knn + 2 * beta * knt;
        double dF = jj.d * (W * knn - 0.5 * W * W * W * dQ *
                                          (alpha * knn + beta * knt));
        double step = F / dF;
        alpha -= step;
        if (std::abs(step) < 1e-14 * (1.0 + std::abs(alpha))) break;
      }
      // Conormal derivative with the g_u-unit outer normal.
      lambda[bc.nodes[j]] =
          (alpha * knn + beta * knt) / std::sqrt(knn);
    }
  }
  return lambda;
}

inline Field nonlinear_dn_nodal(const MetricFamily& fam, const Mesh& mesh,
                                const Field& boundary_nodal,
                                double tol = 1e-12) {
  GraphSolution sol = solve_minimal_graph(fam, mesh, boundary_nodal, tol);
  return nonlinear_dn_nodal(fam, mesh, sol);
}

struct VolumeDnReport {
  double fd_of_area = 0.0;
  double boundary_pairing = 0.0;
  double difference = 0.0;
};

// Compares the centered difference of areas of re-solved minimal graphs
// against the boundary flux pairing of the base solution. Criticality of the
// interior equations makes the two agree up to O(t^2) and solver tolerance.
inline VolumeDnReport dn_from_volumes(const MetricFamily& fam, const Mesh& mesh,
                                      const Field& f_nodal, const Field& w_nodal,
                                      double t = 1e-3, double tol = 1e-12) {
  VolumeDnReport rep;
  GraphSolution up = solve_minimal_graph(fam, mesh, Field(f_nodal + t * w_nodal), tol);
  GraphSolution um = solve_minimal_graph(fam, mesh, Field(f_nodal - t * w_nodal), tol);
  rep.fd_of_area = (up.area - um.area) / (2.0 * t);
  GraphSolution u0 = solve_minimal_graph(fam, mesh, f_nodal, tol);
  Field R = msq_residual_weak(fam, mesh, u0.u);
  double pair = 0;
  for (int i = 0; i < mesh.num_nodes(); ++i)
    if (mesh.is_boundary(i)) pair += R[i] * w_nodal[i];
  rep.boundary_pairing = pair;
  rep.difference = std::abs(rep.fd_of_area - rep.boundary_pairing);
  return rep;
}

}  // namespace fermi
