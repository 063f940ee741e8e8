// Copyright (c) 2026 The FermiForge Authors
// SPDX-License-Identifier: Apache-2.0
//
// The cascade of linearized problems at u = 0. With L = Delta_g + h1/2:
//   L v^j = 0,                    v^j = f_j on the boundary,
//   L w^{jk}  = -I2(v),           w^{jk} = 0,
//   L w^{jkl} = -I3(v, w),        w^{jkl} = 0,
// where I2 and I3 collect the symmetrized quadratic and cubic sources built
// from the metric jets: the operators P^j = -div_g(v^j g k1 grad .) and
// P^{jk}, the tensors k1, k2 and the scalars h1, h2, h3, d2. Round-bracket
// index groups sum over the three assignments of the bracketed indices,
// e.g. P^{(jl} v^{k)} = P^{jl} v^k + P^{jk} v^l + P^{kl} v^j.
//
// The same file carries centered finite-difference cross-checks against the
// nonlinear solver and the numerical verification of the second- and
// third-order boundary integral identities, with the H, R, B groups of the
// third identity reported term by term.

#pragma once

#include <map>

#include "fermiforge/forward.hpp"

namespace fermi {

struct LinearizeContext {
  const MetricFamily* fam = nullptr;
  const Mesh* mesh = nullptr;
  DiscreteOperator L;           // Delta_g + h1/2
  std::vector<Jets0> tri_jets;  // at triangle centroids
  std::vector<Jets0> node_jets;
};

inline LinearizeContext make_linearize_context(const MetricFamily& fam,
                                               const Mesh& mesh) {
  LinearizeContext ctx;
  ctx.fam = &fam;
  ctx.mesh = &mesh;
  ctx.tri_jets.resize(mesh.num_tris());
  for (int t = 0; t < mesh.num_tris(); ++t)
    ctx.tri_jets[t] = fam.jets0(mesh.centroid(t));
  ctx.node_jets = metric_jets(fam, mesh);
  ctx.L = assemble_operator_tri(mesh, [&](int t) {
    const Jets0& j = ctx.tri_jets[t];
    return TriCoeff{j.k, j.d, 0.5 * j.h1};
  });
  return ctx;
}

namespace detail {

inline double tri_mean(const Mesh& m, int t, const Field& f) {
  const auto& tr = m.tris[t];
  return (f[tr[0]] + f[tr[1]] + f[tr[2]]) / 3.0;
}

inline Vec2 tri_grad(const Mesh& m, int t, const Field& f) {
  double area;
  auto g = p1_gradients(m, t, area);
  const auto& tr = m.tris[t];
  return f[tr[0]] * g[0] + f[tr[1]] * g[1] + f[tr[2]] * g[2];
}

// Assignments (A,B | C) of three bracketed indices: the unordered pair slots
// and the singleton slot.
inline constexpr int kTriple[3][3] = {{0, 1, 2}, {0, 2, 1}, {1, 2, 0}};

}  // namespace detail

inline Field solve_first_lin(const LinearizeContext& ctx, const Field& f_nodal) {
  return solve_dirichlet_nodal(ctx.L, f_nodal);
}
inline Field solve_first_lin(const LinearizeContext& ctx,
                             const BoundaryFunction& f) {
  return solve_dirichlet(ctx.L, f);
}

// Weak application of P^j: row i carries int d v_j (k1 grad F) . grad phi_i dx,
// which against interior test functions is (P^j F, phi_i) in the d dx pairing.
inline Field apply_Pj_weak(const LinearizeContext& ctx, const Field& vj,
                           const Field& F) {
  const Mesh& m = *ctx.mesh;
  Field out = Field::Zero(m.num_nodes());
  for (int t = 0; t < m.num_tris(); ++t) {
    double area;
    auto grad = detail::p1_gradients(m, t, area);
    const Jets0& j = ctx.tri_jets[t];
    Vec2 k1gF = j.k1 * detail::tri_grad(m, t, F);
    double v_c = detail::tri_mean(m, t, vj);
    const auto& tr = m.tris[t];
    for (int i = 0; i < 3; ++i)
      out[tr[i]] += area * j.d * v_c * k1gF.dot(grad[i]);
  }
  return out;
}

// Strong-form estimate of P^j F (weak vector over the lumped weighted mass);
// interior rows only are meaningful.
inline Field apply_Pj(const LinearizeContext& ctx, const Field& vj,
                      const Field& F) {
  const Mesh& m = *ctx.mesh;
  Field out = apply_Pj_weak(ctx, vj, F);
  Field mass = Field::Zero(m.num_nodes());
  for (int t = 0; t < m.num_tris(); ++t)
    for (int i = 0; i < 3; ++i)
      mass[m.tris[t][i]] += m.tri_area(t) * ctx.tri_jets[t].d / 3.0;
  for (int i = 0; i < m.num_nodes(); ++i) out[i] /= mass[i];
  return out;
}

// Weak form of I2 = P^{(j} v^{k)} + k1(grad v^j, grad v^k) + h2/2 v^j v^k.
inline Field second_source_weak(const LinearizeContext& ctx, const Field& vj,
                                const Field& vk) {
  const Mesh& m = *ctx.mesh;
  Field out = Field::Zero(m.num_nodes());
  for (int t = 0; t < m.num_tris(); ++t) {
    double area;
    auto grad = detail::p1_gradients(m, t, area);
    const Jets0& jt = ctx.tri_jets[t];
    Vec2 gj = detail::tri_grad(m, t, vj);
    Vec2 gk = detail::tri_grad(m, t, vk);
    double vjc = detail::tri_mean(m, t, vj);
    double vkc = detail::tri_mean(m, t, vk);
    double zero_order = gj.dot(jt.k1 * gk) + 0.5 * jt.h2 * vjc * vkc;
    Vec2 flux = vjc * (jt.k1 * gk) + vkc * (jt.k1 * gj);
    const auto& tr = m.tris[t];
    for (int i = 0; i < 3; ++i)
      out[tr[i]] += area * jt.d * (flux.dot(grad[i]) + zero_order / 3.0);
  }
  return out;
}

inline Field solve_with_weak_source(const LinearizeContext& ctx,
                                    const Field& weak_rhs) {
  const DiscreteOperator& op = ctx.L;
  Eigen::VectorXd rhs(op.interior.size());
  for (size_t s = 0; s < op.interior.size(); ++s)
    rhs[s] = weak_rhs[op.interior[s]];
  Eigen::VectorXd wi = op.lu->solve(rhs);
  Field w = Field::Zero(op.n());
  for (size_t s = 0; s < op.interior.size(); ++s) w[op.interior[s]] = wi[s];
  return w;
}

inline Field solve_second_lin(const LinearizeContext& ctx, const Field& vj,
                              const Field& vk) {
  return solve_with_weak_source(ctx, Field(-second_source_weak(ctx, vj, vk)));
}

// Weak form of I3 for the index triple (j,k,l): v = {v^j, v^k, v^l},
// w = {w^{jk}, w^{jl}, w^{kl}}.
inline Field third_source_weak(const LinearizeContext& ctx,
                               const std::array<const Field*, 3>& v,
                               const std::array<const Field*, 3>& w) {
  const Mesh& m = *ctx.mesh;
  using detail::kTriple;
  // Nodal beta_a = d^{-1} d2 v^A v^B feeding the gradient term of P^{AB}.
  std::array<Field, 3> beta;
  for (int a = 0; a < 3; ++a) {
    const Field& vA = *v[kTriple[a][0]];
    const Field& vB = *v[kTriple[a][1]];
    beta[a].resize(m.num_nodes());
    for (int i = 0; i < m.num_nodes(); ++i)
      beta[a][i] = ctx.node_jets[i].d2 / ctx.node_jets[i].d * vA[i] * vB[i];
  }

  Field out = Field::Zero(m.num_nodes());
  for (int t = 0; t < m.num_tris(); ++t) {
    double area;
    auto grad = detail::p1_gradients(m, t, area);
    const Jets0& jt = ctx.tri_jets[t];
    const auto& tr = m.tris[t];
    std::array<Vec2, 3> gv, gw;
    std::array<double, 3> vc, wc;
    for (int a = 0; a < 3; ++a) {
      gv[a] = detail::tri_grad(m, t, *v[a]);
      vc[a] = detail::tri_mean(m, t, *v[a]);
      gw[a] = detail::tri_grad(m, t, *w[a]);
      wc[a] = detail::tri_mean(m, t, *w[a]);
    }
    Vec2 flux = Vec2::Zero();
    double zero_order = 0.5 * jt.h3 * vc[0] * vc[1] * vc[2];
    for (int a = 0; a < 3; ++a) {
      int A = kTriple[a][0], B = kTriple[a][1], C = kTriple[a][2];
      double gAB = gv[A].dot(jt.k * gv[B]);
      Vec2 gbeta = detail::tri_grad(m, t, beta[a]);
      // P^{AB} v^C: divergence parts as fluxes, the beta term at order zero.
      flux += vc[A] * vc[B] * (jt.k2 * gv[C]);
      flux += wc[a] * (jt.k1 * gv[C]);
      flux -= gAB * (jt.k * gv[C]);
      zero_order -= (jt.k * gbeta).dot(gv[C]);
      // P^{C} w^{AB}.
      flux += vc[C] * (jt.k1 * gw[a]);
      // Tensor and scalar couplings.
      zero_order += gv[A].dot(jt.k2 * gv[B]) * vc[C];
      zero_order += gv[C].dot(jt.k1 * gw[a]);
      zero_order += 0.5 * jt.h1 * gAB * vc[C];
      zero_order += 0.5 * jt.h2 * wc[a] * vc[C];
    }
    for (int i = 0; i < 3; ++i)
      out[tr[i]] += area * jt.d * (flux.dot(grad[i]) + zero_order / 3.0);
  }
  return out;
}

inline Field solve_third_lin(const LinearizeContext& ctx,
                             const std::array<const Field*, 3>& v,
                             const std::array<const Field*, 3>& w) {
  return solve_with_weak_source(ctx, Field(-third_source_weak(ctx, v, w)));
}

// --- finite-difference cross-checks against the nonlinear solver ---------------

inline Field fd_first_lin(const MetricFamily& fam, const Mesh& mesh,
                          const Field& f, double eps, double tol = 1e-12) {
  GraphSolution p = solve_minimal_graph(fam, mesh, Field(eps * f), tol);
  GraphSolution m = solve_minimal_graph(fam, mesh, Field(-eps * f), tol);
  return (p.u - m.u) / (2 * eps);
}

inline Field fd_second_lin(const MetricFamily& fam, const Mesh& mesh,
                           const Field& fj, const Field& fk, double eps,
                           double tol = 1e-12) {
  auto u = [&](double sj, double sk) {
    return solve_minimal_graph(fam, mesh, Field(sj * eps * fj + sk * eps * fk),
                               tol)
        .u;
  };
  return (u(1, 1) - u(1, -1) - u(-1, 1) + u(-1, -1)) / (4 * eps * eps);
}

inline Field fd_third_lin(const MetricFamily& fam, const Mesh& mesh,
                          const Field& fj, const Field& fk, const Field& fl,
                          double eps, double tol = 1e-12) {
  Field acc = Field::Zero(mesh.num_nodes());
  for (int sj : {-1, 1})
    for (int sk : {-1, 1})
      for (int sl : {-1, 1}) {
        Field data = eps * (sj * fj + sk * fk + sl * fl);
        acc += double(sj * sk * sl) *
               solve_minimal_graph(fam, mesh, data, tol).u;
      }
  return acc / (8 * eps * eps * eps);
}

// Mixed centered differences of the nonlinear DN trace.
inline Field fd_dn_second(const MetricFamily& fam, const Mesh& mesh,
                          const Field& fj, const Field& fk, double eps,
                          double tol = 1e-12) {
  auto dn = [&](double sj, double sk) {
    return nonlinear_dn_nodal(fam, mesh,
                              Field(sj * eps * fj + sk * eps * fk), tol);
  };
  return (dn(1, 1) - dn(1, -1) - dn(-1, 1) + dn(-1, -1)) / (4 * eps * eps);
}

inline Field fd_dn_third(const MetricFamily& fam, const Mesh& mesh,
                         const Field& fj, const Field& fk, const Field& fl,
                         double eps, double tol = 1e-12) {
  Field acc = Field::Zero(mesh.num_nodes());
  for (int sj : {-1, 1})
    for (int sk : {-1, 1})
      for (int sl : {-1, 1}) {
        Field data = eps * (sj * fj + sk * fk + sl * fl);
        acc += double(sj * sk * sl) * nonlinear_dn_nodal(fam, mesh, data, tol);
      }
  return acc / (8 * eps * eps * eps);
}

// --- boundary trace data for the identity verification -------------------------

struct TraceData {
  Field dnormal;   // operator conormal, variational recovery
  Field dtangent;  // arc-length derivative along each circle
  Field grad_x, grad_y;  // reconstructed Euclid gradient at boundary nodes
};

inline TraceData boundary_trace_data(const LinearizeContext& ctx,
                                     const Field& u, const Field* load) {
  const Mesh& mesh = *ctx.mesh;
  auto gfun = [&](const Vec2& x) { return ctx.fam->jets0(x).g; };
  TraceData td;
  td.dnormal = neumann_trace_nodal(ctx.L, u, gfun, load);
  td.dtangent = Field::Zero(mesh.num_nodes());
  td.grad_x = Field::Zero(mesh.num_nodes());
  td.grad_y = Field::Zero(mesh.num_nodes());
  for (size_t c = 0; c < mesh.boundary.size(); ++c) {
    const auto& bc = mesh.boundary[c];
    const int M = static_cast<int>(bc.nodes.size());
    double dth = 2.0 * kPi * bc.orientation / M;
    for (int j = 0; j < M; ++j) {
      int jp = (j + 1) % M, jm = (j + M - 1) % M;
      double dt = (u[bc.nodes[jp]] - u[bc.nodes[jm]]) / (2 * dth * bc.radius);
      td.dtangent[bc.nodes[j]] = dt;
      double th = bc.angle[j];
      Vec2 nrm(std::cos(th), std::sin(th));
      if (bc.orientation < 0) nrm = -nrm;
      Vec2 tau(-std::sin(th) * bc.orientation,
               std::cos(th) * bc.orientation);
      // Conormal t = d (k grad u).n / w_g, tangential derivative dt known;
      // solve the 2x2 relation for the normal component alpha.
      const Jets0& jn = ctx.node_jets[bc.nodes[j]];
      double w_g = std::sqrt(tau.dot(jn.g * tau));
      double knn = nrm.dot(jn.k * nrm);
      double knt = nrm.dot(jn.k * tau);
      double alpha =
          (td.dnormal[bc.nodes[j]] * w_g / jn.d - dt * knt) / knn;
      Vec2 grad = alpha * nrm + dt * tau;
      td.grad_x[bc.nodes[j]] = grad.x();
      td.grad_y[bc.nodes[j]] = grad.y();
    }
  }
  return td;
}

inline Vec2 boundary_grad(const TraceData& td, int node) {
  return Vec2(td.grad_x[node], td.grad_y[node]);
}

// --- integral identities ---------------------------------------------------------

struct IdentityReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;  // |lhs - rhs| / max(|lhs|, |rhs|)
  std::vector<std::pair<std::string, double>> terms;

  double term(const std::string& name) const {
    for (const auto& [k, v] : terms)
      if (k == name) return v;
    throw ValidationError("unknown identity term: " + name);
  }
};

namespace detail {

inline double finish(IdentityReport& rep) {
  rep.residual = std::abs(rep.lhs - rep.rhs) /
                 std::max({std::abs(rep.lhs), std::abs(rep.rhs), 1e-300});
  return rep.residual;
}

// int_Sigma expr dV with dV = d dx, centroid rule.
template <class F>
double volume_integral(const LinearizeContext& ctx, F&& expr) {
  double acc = 0;
  const Mesh& m = *ctx.mesh;
  for (int t = 0; t < m.num_tris(); ++t)
    acc += m.tri_area(t) * ctx.tri_jets[t].d * expr(t);
  return acc;
}

// int_dSigma expr dS_g, trapezoid over every circle.
template <class F>
double boundary_integral_g(const LinearizeContext& ctx, F&& expr) {
  const Mesh& m = *ctx.mesh;
  double acc = 0;
  for (size_t c = 0; c < m.boundary.size(); ++c) {
    const auto& bc = m.boundary[c];
    double dth = 2.0 * kPi / bc.nodes.size();
    for (size_t j = 0; j < bc.nodes.size(); ++j) {
      int node = bc.nodes[j];
      double th = bc.angle[j];
      Vec2 tau(-std::sin(th), std::cos(th));
      double w_g = std::sqrt(tau.dot(ctx.node_jets[node].g * tau));
      acc += expr(static_cast<int>(c), static_cast<int>(j)) * bc.radius *
             w_g * dth;
    }
  }
  return acc;
}

}  // namespace detail

// Second-order identity with indices (j,k,m) = (1,2,3). With the positive
// Laplacian and the outward conormal, pairing the second linearization
// against v^m gives
//   int f_3 D^2_{eps} Lambda dS_g = int I2 v^3 dV
//     = three k1 volume terms + 1/2 int h2 v1 v2 v3 dV - boundary term.
inline IdentityReport verify_identity_2(const MetricFamily& fam,
                                        const Mesh& mesh, const Field& f1,
                                        const Field& f2, const Field& f3,
                                        double eps = 1e-2, double tol = 1e-12) {
  LinearizeContext ctx = make_linearize_context(fam, mesh);
  Field v1 = solve_first_lin(ctx, f1);
  Field v2 = solve_first_lin(ctx, f2);
  Field v3 = solve_first_lin(ctx, f3);

  IdentityReport rep;
  // LHS from the nonlinear DN map by mixed centered differences.
  Field d2dn = fd_dn_second(fam, mesh, f1, f2, eps, tol);
  rep.lhs = detail::boundary_integral_g(
      ctx, [&](int c, int j) {
        int node = mesh.boundary[c].nodes[j];
        return f3[node] * d2dn[node];
      });

  using detail::tri_grad;
  using detail::tri_mean;
  auto k1_term = [&](const Field& va, const Field& vb, const Field& vcf) {
    return detail::volume_integral(ctx, [&](int t) {
      return tri_mean(mesh, t, va) *
             tri_grad(mesh, t, vb).dot(ctx.tri_jets[t].k1 *
                                       tri_grad(mesh, t, vcf));
    });
  };
  double t1 = k1_term(v3, v2, v1);
  double t2 = k1_term(v2, v1, v3);
  double t3 = k1_term(v1, v2, v3);
  double t4 = 0.5 * detail::volume_integral(ctx, [&](int t) {
    return ctx.tri_jets[t].h2 * tri_mean(mesh, t, v1) * tri_mean(mesh, t, v2) *
           tri_mean(mesh, t, v3);
  });

  TraceData td1 = boundary_trace_data(ctx, v1, nullptr);
  TraceData td2 = boundary_trace_data(ctx, v2, nullptr);
  double t5 = -detail::boundary_integral_g(ctx, [&](int c, int j) {
    int node = mesh.boundary[c].nodes[j];
    double th = mesh.boundary[c].angle[j];
    Vec2 nrm(std::cos(th), std::sin(th));
    if (mesh.boundary[c].orientation < 0) nrm = -nrm;
    const Jets0& jn = ctx.node_jets[node];
    double knn = nrm.dot(jn.k * nrm);
    Vec2 gnu = nrm / std::sqrt(knn);  // covector of the g-unit conormal
    double k1n1 = gnu.dot(jn.k1 * boundary_grad(td1, node));
    double k1n2 = gnu.dot(jn.k1 * boundary_grad(td2, node));
    return v3[node] * (k1n1 * v2[node] + k1n2 * v1[node]);
  });

  rep.terms = {{"k1_v3_g21", t1}, {"k1_v2_g13", t2}, {"k1_v1_g23", t3},
               {"h2_cubic", t4},  {"boundary_k1", t5}};
  rep.rhs = t1 + t2 + t3 + t4 + t5;
  detail::finish(rep);
  return rep;
}

// Third-order identity with indices (j,k,l,m) = (1,2,3,4). Pairing the third
// linearization against v^m with the positive Laplacian and the outward
// conormal gives
//   int f_4 D^3_{eps} Lambda dS_g = int I3 v^4 dV
//     = -(three g x g principal terms) + H + R + B,
// where integrating the divergence-form pieces of P^{AB} and P^{A} by parts
// produces the volume groups H (no second linearizations, jets of order >= 2)
// and R (second linearizations and h1, h2) plus the boundary group B. Each
// group is reported term by term.
inline IdentityReport verify_identity_3(const MetricFamily& fam,
                                        const Mesh& mesh, const Field& f1,
                                        const Field& f2, const Field& f3,
                                        const Field& f4, double eps = 1e-2,
                                        double tol = 1e-12) {
  LinearizeContext ctx = make_linearize_context(fam, mesh);
  std::array<Field, 3> v = {solve_first_lin(ctx, f1), solve_first_lin(ctx, f2),
                            solve_first_lin(ctx, f3)};
  Field vm = solve_first_lin(ctx, f4);
  // w[a] pairs with detail::kTriple[a]: w^{12}, w^{13}, w^{23}.
  std::array<Field, 3> wsrc, w;
  for (int a = 0; a < 3; ++a) {
    int A = detail::kTriple[a][0], B = detail::kTriple[a][1];
    wsrc[a] = second_source_weak(ctx, v[A], v[B]);
    w[a] = solve_with_weak_source(ctx, Field(-wsrc[a]));
  }

  IdentityReport rep;
  Field d3dn = fd_dn_third(fam, mesh, f1, f2, f3, eps, tol);
  rep.lhs = detail::boundary_integral_g(ctx, [&](int c, int j) {
    int node = mesh.boundary[c].nodes[j];
    return f4[node] * d3dn[node];
  });

  using detail::kTriple;
  using detail::tri_grad;
  using detail::tri_mean;

  auto gg = [&](const Field& a, const Field& b, const Field& c2,
                const Field& d2) {
    return detail::volume_integral(ctx, [&](int t) {
      const Mat2& k = ctx.tri_jets[t].k;
      return tri_grad(mesh, t, a).dot(k * tri_grad(mesh, t, b)) *
             tri_grad(mesh, t, c2).dot(k * tri_grad(mesh, t, d2));
    });
  };
  double gg1 = gg(v[0], v[1], v[2], vm);
  double gg2 = gg(v[0], v[2], v[1], vm);
  double gg3 = gg(v[2], v[1], v[0], vm);

  // Nodal beta_a = d^{-1} d2 v^A v^B.
  std::array<Field, 3> beta;
  for (int a = 0; a < 3; ++a) {
    beta[a].resize(mesh.num_nodes());
    for (int i = 0; i < mesh.num_nodes(); ++i)
      beta[a][i] = ctx.node_jets[i].d2 / ctx.node_jets[i].d *
                   v[kTriple[a][0]][i] * v[kTriple[a][1]][i];
  }

  double H1 = 0, H2 = 0, H3 = 0, H4 = 0;
  double R1 = 0, R2 = 0, R3 = 0, R4 = 0, R5 = 0;
  for (int a = 0; a < 3; ++a) {
    int A = kTriple[a][0], B = kTriple[a][1], C = kTriple[a][2];
    // H: the beta gradient term of P^{AB} and the k2 couplings.
    H1 -= detail::volume_integral(ctx, [&](int t) {
      return tri_mean(mesh, t, vm) *
             tri_grad(mesh, t, beta[a]).dot(ctx.tri_jets[t].k *
                                            tri_grad(mesh, t, v[C]));
    });
    H2 += detail::volume_integral(ctx, [&](int t) {
      return tri_mean(mesh, t, v[A]) * tri_mean(mesh, t, v[B]) *
             tri_grad(mesh, t, v[C]).dot(ctx.tri_jets[t].k2 *
                                         tri_grad(mesh, t, vm));
    });
    H3 += detail::volume_integral(ctx, [&](int t) {
      return tri_mean(mesh, t, vm) * tri_mean(mesh, t, v[C]) *
             tri_grad(mesh, t, v[A]).dot(ctx.tri_jets[t].k2 *
                                         tri_grad(mesh, t, v[B]));
    });
    // R: everything carrying a second linearization, plus h1 and h2.
    R1 += detail::volume_integral(ctx, [&](int t) {
      return tri_mean(mesh, t, w[a]) *
             tri_grad(mesh, t, v[C]).dot(ctx.tri_jets[t].k1 *
                                         tri_grad(mesh, t, vm));
    });
    R2 += detail::volume_integral(ctx, [&](int t) {
      return tri_mean(mesh, t, v[C]) *
             tri_grad(mesh, t, w[a]).dot(ctx.tri_jets[t].k1 *
                                         tri_grad(mesh, t, vm));
    });
    R3 += detail::volume_integral(ctx, [&](int t) {
      return tri_mean(mesh, t, vm) *
             tri_grad(mesh, t, v[C]).dot(ctx.tri_jets[t].k1 *
                                         tri_grad(mesh, t, w[a]));
    });
    R4 += 0.5 * detail::volume_integral(ctx, [&](int t) {
      return ctx.tri_jets[t].h1 * tri_mean(mesh, t, vm) *
             tri_mean(mesh, t, v[C]) *
             tri_grad(mesh, t, v[A]).dot(ctx.tri_jets[t].k *
                                         tri_grad(mesh, t, v[B]));
    });
    R5 += 0.5 * detail::volume_integral(ctx, [&](int t) {
      return ctx.tri_jets[t].h2 * tri_mean(mesh, t, vm) *
             tri_mean(mesh, t, w[a]) * tri_mean(mesh, t, v[C]);
    });
  }
  H4 = 0.5 * detail::volume_integral(ctx, [&](int t) {
    return ctx.tri_jets[t].h3 * tri_mean(mesh, t, vm) *
           tri_mean(mesh, t, v[0]) * tri_mean(mesh, t, v[1]) *
           tri_mean(mesh, t, v[2]);
  });

  // Boundary traces for B.
  std::array<TraceData, 3> tdv;
  TraceData tdm = boundary_trace_data(ctx, vm, nullptr);
  std::array<TraceData, 3> tdw;
  for (int a = 0; a < 3; ++a) {
    tdv[a] = boundary_trace_data(ctx, v[a], nullptr);
    Field load = -wsrc[a];
    tdw[a] = boundary_trace_data(ctx, w[a], &load);
  }
  double B1 = 0, B2 = 0, B3 = 0, B4 = 0;
  for (int a = 0; a < 3; ++a) {
    int A = kTriple[a][0], B = kTriple[a][1], C = kTriple[a][2];
    auto bterm = [&](auto&& expr) {
      return detail::boundary_integral_g(ctx, [&](int c, int j) {
        int node = mesh.boundary[c].nodes[j];
        double th = mesh.boundary[c].angle[j];
        Vec2 nrm(std::cos(th), std::sin(th));
        if (mesh.boundary[c].orientation < 0) nrm = -nrm;
        const Jets0& jn = ctx.node_jets[node];
        Vec2 gnu = nrm / std::sqrt(nrm.dot(jn.k * nrm));
        return expr(node, gnu, jn);
      });
    };
    B1 -= bterm([&](int node, const Vec2& gnu, const Jets0& jn) {
      return vm[node] * v[A][node] * v[B][node] *
             gnu.dot(jn.k2 * boundary_grad(tdv[C], node));
    });
    B2 -= bterm([&](int node, const Vec2& gnu, const Jets0& jn) {
      return vm[node] * w[a][node] *
             gnu.dot(jn.k1 * boundary_grad(tdv[C], node));
    });
    B3 += bterm([&](int node, const Vec2& gnu, const Jets0& jn) {
      double gab = boundary_grad(tdv[A], node)
                       .dot(jn.k * boundary_grad(tdv[B], node));
      // Conormal derivative of v^C with the g-unit normal.
      double dnu = gnu.dot(jn.k * boundary_grad(tdv[C], node));
      return vm[node] * gab * dnu;
    });
    B4 -= bterm([&](int node, const Vec2& gnu, const Jets0& jn) {
      return vm[node] * v[C][node] *
             gnu.dot(jn.k1 * boundary_grad(tdw[a], node));
    });
  }

  double H = H1 + H2 + H3 + H4;
  double R = R1 + R2 + R3 + R4 + R5;
  double Bt = B1 + B2 + B3 + B4;
  rep.terms = {{"gg_12_3m", gg1}, {"gg_13_2m", gg2}, {"gg_32_1m", gg3},
               {"H", H},          {"H1", H1},        {"H2", H2},
               {"H3", H3},        {"H4", H4},        {"R", R},
               {"R1", R1},        {"R2", R2},        {"R3", R3},
               {"R4", R4},        {"R5", R5},        {"B", Bt},
               {"B1", B1},        {"B2", B2},        {"B3", B3},
               {"B4", B4}};
  rep.rhs = -(gg1 + gg2 + gg3) + H + R + Bt;
  detail::finish(rep);
  return rep;
}

}  // namespace fermi
