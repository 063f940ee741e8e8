// Copyright (c) 2026 The FermiForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fermiforge/fit.hpp"
#include "fermiforge/forward.hpp"

using namespace fermi;

namespace {

Field nodal_boundary(const Mesh& mesh, const std::function<double(double)>& f) {
  Field v = Field::Zero(mesh.num_nodes());
  for (const auto& bc : mesh.boundary)
    for (size_t j = 0; j < bc.nodes.size(); ++j)
      v[bc.nodes[j]] = f(bc.angle[j]);
  return v;
}

}  // namespace

TEST_CASE("zero data solves immediately with zero residual", "[forward]") {
  Mesh mesh = build_mesh(Domain::unit_disk(), 2);
  MetricFamily fam = make_family("diagexp");
  GraphSolution sol =
      solve_minimal_graph(fam, mesh, Field(Field::Zero(mesh.num_nodes())));
  REQUIRE(sol.u.lpNorm<Eigen::Infinity>() == 0.0);
  REQUIRE(sol.newton_iterations == 0);
  REQUIRE(sol.final_residual <= 1e-14);
}

TEST_CASE("linear graphs over the euclidean family are minimal", "[forward]") {
  Mesh mesh = build_mesh(Domain::unit_disk(), 2);
  MetricFamily fam = make_family("euclidean");
  Field u(mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i)
    u[i] = 0.1 * mesh.nodes[i].x() + 0.05;
  Field r = msq_residual(fam, mesh, u);
  double m = 0;
  for (int i = 0; i < mesh.num_nodes(); ++i)
    if (!mesh.is_boundary(i)) m = std::max(m, std::abs(r[i]));
  REQUIRE(m < 1e-13);

  GraphSolution sol = solve_minimal_graph(
      fam, mesh, nodal_boundary(mesh, [](double th) { return 0.1 * std::cos(th); }));
  double err = 0;
  for (int i = 0; i < mesh.num_nodes(); ++i)
    err = std::max(err, std::abs(sol.u[i] - 0.1 * mesh.nodes[i].x()));
  REQUIRE(err < 1e-12);
}

TEST_CASE("s-independent families reduce to the classical graph equation",
          "[forward]") {
  Mesh mesh = build_mesh(Domain::unit_disk(), 2);
  MetricFamily fam = make_family("euclidean");
  Field u(mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const Vec2& x = mesh.nodes[i];
    u[i] = 0.2 * std::sin(x.x()) * std::cos(0.5 * x.y());
  }
  Field r = msq_residual_weak(fam, mesh, u);
  // Classical weak residual of div(grad u / sqrt(1+|grad u|^2)) with the same
  // quadrature.
  Field rc = Field::Zero(mesh.num_nodes());
  for (int t = 0; t < mesh.num_tris(); ++t) {
    double area;
    auto grad = fermi::detail::p1_gradients(mesh, t, area);
    const auto& tr = mesh.tris[t];
    Vec2 p = u[tr[0]] * grad[0] + u[tr[1]] * grad[1] + u[tr[2]] * grad[2];
    double W = 1.0 / std::sqrt(1.0 + p.squaredNorm());
    for (int i = 0; i < 3; ++i) rc[tr[i]] += area * W * p.dot(grad[i]);
  }
  REQUIRE((r - rc).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("minimal families have zero residual at u = 0, broken ones do not",
          "[forward]") {
  Mesh mesh = build_mesh(Domain::unit_disk(), 2);
  Field zero = Field::Zero(mesh.num_nodes());
  for (const char* name : {"euclidean", "diagexp", "static_conformal"}) {
    Field r = msq_residual(make_family(name), mesh, zero);
    REQUIRE(r.lpNorm<Eigen::Infinity>() <= 1e-12);
  }
  double t0 = 0.8;
  Field rb = msq_residual(make_family("broken", {{"t0", t0}}), mesh, zero);
  // f(0,0) = h/2, so the strong-form residual reports half the injected trace.
  REQUIRE(rb.lpNorm<Eigen::Infinity>() == Catch::Approx(0.5 * t0).margin(1e-10));
}

TEST_CASE("the assembled Jacobian is the exact derivative of the residual",
          "[forward]") {
  Mesh mesh = build_mesh(Domain::unit_disk(), 1);
  MetricFamily fam = make_family("diagexp");
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(-0.05, 0.05);
  Field u(mesh.num_nodes()), w(mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    u[i] = 0.15 * std::sin(mesh.nodes[i].x() + 0.3) + uni(rng) * 0.1;
    w[i] = uni(rng);
  }
  SpMat J = msq_jacobian(fam, mesh, u);
  double eps = 1e-6;
  Field fd = (msq_residual_weak(fam, mesh, Field(u + eps * w)) -
              msq_residual_weak(fam, mesh, Field(u - eps * w))) /
             (2 * eps);
  Field jw = J * w;
  REQUIRE((fd - jw).lpNorm<Eigen::Infinity>() <
          1e-8 * std::max(1.0, jw.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("Newton converges with a quadratic tail on catalog data", "[forward]") {
  Mesh mesh = build_mesh(Domain::unit_disk(), 3);
  MetricFamily fam = make_family("diagexp");
  GraphSolution sol = solve_minimal_graph(
      fam, mesh, nodal_boundary(mesh, [](double th) { return 0.2 * std::cos(th); }));
  REQUIRE(sol.final_residual <= 1e-12);
  REQUIRE(sol.newton_iterations >= 2);
  REQUIRE(sol.stability_constant < 10.0);
  // Superlinear contraction somewhere in the terminal phase.
  bool superlinear = false;
  const auto& h = sol.residual_history;
  for (size_t k = 0; k + 1 < h.size(); ++k)
    if (h[k] < 1e-2 && h[k] > 1e-10 && h[k + 1] < std::pow(h[k], 1.7))
      superlinear = true;
  REQUIRE(superlinear);
}

TEST_CASE("area reproduces closed-form values", "[forward]") {
  Mesh mesh = build_mesh(Domain::unit_disk(), 3);
  MetricFamily fam = make_family("euclidean");
  Field zero = Field::Zero(mesh.num_nodes());
  REQUIRE(graph_area(fam, mesh, zero) == Catch::Approx(kPi).margin(1e-3));

  double a = 0.3;
  Field tilt(mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i) tilt[i] = a * mesh.nodes[i].x();
  REQUIRE(graph_area(fam, mesh, tilt) ==
          Catch::Approx(kPi * std::sqrt(1 + a * a)).margin(2e-3));

  // Catalog family at u = 0: the area is the quadrature of det(g)^{1/2}; an
  // independent 3-point midpoint rule agrees to discretization error.
  MetricFamily cat = make_family("diagexp");
  double a0 = graph_area(cat, mesh, zero);
  double a3 = 0;
  for (int t = 0; t < mesh.num_tris(); ++t) {
    const auto& tr = mesh.tris[t];
    for (int e = 0; e < 3; ++e) {
      Vec2 mid = 0.5 * (mesh.nodes[tr[e]] + mesh.nodes[tr[(e + 1) % 3]]);
      a3 += mesh.tri_area(t) / 3.0 * cat.jets_at(mid, 0.0).d;
    }
  }
  REQUIRE(a0 == Catch::Approx(a3).margin(2e-4));
}

TEST_CASE("first variation: criticality and exact area derivative", "[forward]") {
  Mesh mesh = build_mesh(Domain::unit_disk(), 2);
  MetricFamily fam = make_family("diagexp");
  GraphSolution sol = solve_minimal_graph(
      fam, mesh, nodal_boundary(mesh, [](double th) { return 0.1 * std::sin(th); }));

  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss;
  Field w = Field::Zero(mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i)
    if (!mesh.is_boundary(i)) w[i] = 0.1 * gauss(rng);

  // Criticality: interior first variation vanishes up to Newton tolerance.
  REQUIRE(std::abs(first_variation(fam, mesh, sol.u, w)) < 1e-9);

  // Exact derivative of the discrete area in any direction.
  Field wfull(mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i) wfull[i] = 0.05 * gauss(rng);
  double t = 1e-5;
  double fd = (graph_area(fam, mesh, Field(sol.u + t * wfull)) -
               graph_area(fam, mesh, Field(sol.u - t * wfull))) /
              (2 * t);
  double fv = first_variation(fam, mesh, sol.u, wfull);
  REQUIRE(std::abs(fd - fv) < 1e-8);

  // At u = 0 over a minimal family both the interior part and the boundary
  // term vanish.
  Field zero = Field::Zero(mesh.num_nodes());
  REQUIRE(std::abs(first_variation(fam, mesh, zero, wfull)) < 1e-13);
}

TEST_CASE("nonlinear DN of a linear euclidean graph is the tilted cosine",
          "[forward]") {
  Mesh mesh = build_mesh(Domain::unit_disk(), 3);
  MetricFamily fam = make_family("euclidean");
  GraphSolution sol = solve_minimal_graph(
      fam, mesh, nodal_boundary(mesh, [](double th) { return 0.1 * std::cos(th); }));
  Field lam = nonlinear_dn_nodal(fam, mesh, sol);
  const auto& bc = mesh.boundary[0];
  for (size_t j = 0; j < bc.nodes.size(); ++j)
    REQUIRE(lam[bc.nodes[j]] ==
            Catch::Approx(0.1 * std::cos(bc.angle[j])).margin(5e-4));
  // f = 0 gives the zero trace exactly.
  GraphSolution z =
      solve_minimal_graph(fam, mesh, Field(Field::Zero(mesh.num_nodes())));
  REQUIRE(nonlinear_dn_nodal(fam, mesh, z).lpNorm<Eigen::Infinity>() < 1e-13);
}

TEST_CASE("volumes determine the DN pairing", "[forward]") {
  Mesh mesh = build_mesh(Domain::unit_disk(), 3);

  SECTION("euclidean closed form") {
    MetricFamily fam = make_family("euclidean");
    Field f = nodal_boundary(mesh, [](double th) { return 0.1 * std::cos(th); });
    Field w = nodal_boundary(mesh, [](double th) { return std::cos(th); });
    auto rep = dn_from_volumes(fam, mesh, f, w, 1e-3);
    double expect = 0.1 / std::sqrt(1.01) * kPi;
    REQUIRE(rep.difference < 1e-6);
    REQUIRE(rep.boundary_pairing == Catch::Approx(expect).margin(2e-3));
  }
  SECTION("catalog family") {
    MetricFamily fam = make_family("diagexp");
    Field f = nodal_boundary(mesh, [](double th) { return 0.05 * std::cos(th); });
    Field w = nodal_boundary(mesh, [](double th) { return std::sin(th); });
    auto rep = dn_from_volumes(fam, mesh, f, w, 1e-3);
    REQUIRE(rep.difference < 1e-6);
  }
  SECTION("zero data pairs to zero") {
    MetricFamily fam = make_family("diagexp");
    Field f = Field::Zero(mesh.num_nodes());
    Field w = nodal_boundary(mesh, [](double th) { return std::sin(2 * th); });
    auto rep = dn_from_volumes(fam, mesh, f, w, 1e-3);
    REQUIRE(std::abs(rep.fd_of_area) < 5e-8);
    REQUIRE(std::abs(rep.boundary_pairing) < 1e-12);
  }
}

TEST_CASE("range violations are rejected", "[forward]") {
  Mesh mesh = build_mesh(Domain::unit_disk(), 1);
  MetricFamily fam = make_family("euclidean");
  REQUIRE_THROWS_AS(
      solve_minimal_graph(fam, mesh,
                          Field(Field::Constant(mesh.num_nodes(), 0.6))),
      ValidationError);
}
