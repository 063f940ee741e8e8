// Copyright (c) 2026 The FermiForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>
#include <sstream>

#include "fermiforge/geometry.hpp"

using namespace fermi;

TEST_CASE("disk mesh places boundary nodes on the unit circle", "[geometry]") {
  Mesh m = build_mesh(Domain::unit_disk(), 0);
  REQUIRE(m.boundary.size() == 1);
  for (int id : m.boundary[0].nodes)
    REQUIRE(std::abs(m.nodes[id].norm() - 1.0) < 1e-14);
}

TEST_CASE("triangles are positively oriented and conforming", "[geometry]") {
  for (const Domain& dom : {Domain::unit_disk(), Domain::annulus(0.5)}) {
    Mesh m = build_mesh(dom, 2);
    for (int t = 0; t < m.num_tris(); ++t) REQUIRE(m.tri_area(t) > 0.0);
    // Every directed edge appears at most once; interior undirected edges
    // exactly twice (once per direction).
    std::set<std::pair<int, int>> directed;
    std::map<std::pair<int, int>, int> undirected;
    for (const auto& tr : m.tris)
      for (int e = 0; e < 3; ++e) {
        int a = tr[e], b = tr[(e + 1) % 3];
        REQUIRE(directed.insert({a, b}).second);
        undirected[{std::min(a, b), std::max(a, b)}]++;
      }
    for (const auto& [edge, count] : undirected) {
      bool bdry_edge = m.is_boundary(edge.first) && m.is_boundary(edge.second);
      if (!bdry_edge) REQUIRE(count == 2);
    }
  }
}

TEST_CASE("refinement halves the max edge length", "[geometry]") {
  for (const Domain& dom : {Domain::unit_disk(), Domain::annulus(0.5)}) {
    double prev = build_mesh(dom, 0).max_edge_length();
    for (int level = 1; level <= 3; ++level) {
      double cur = build_mesh(dom, level).max_edge_length();
      REQUIRE(cur <= 0.55 * prev);
      prev = cur;
    }
  }
}

TEST_CASE("boundary node count doubles per level", "[geometry]") {
  for (const Domain& dom : {Domain::unit_disk(), Domain::annulus(0.5)}) {
    for (int level = 0; level < 3; ++level) {
      Mesh a = build_mesh(dom, level);
      Mesh b = build_mesh(dom, level + 1);
      for (size_t c = 0; c < a.boundary.size(); ++c)
        REQUIRE(b.boundary[c].nodes.size() == 2 * a.boundary[c].nodes.size());
    }
  }
}

TEST_CASE("triangle quality is bounded below across levels", "[geometry]") {
  for (const Domain& dom : {Domain::unit_disk(), Domain::annulus(0.5)}) {
    for (int level = 0; level <= 3; ++level) {
      Mesh m = build_mesh(dom, level);
      REQUIRE(m.min_angle() > 0.35);  // ~20 degrees
    }
  }
}

TEST_CASE("annulus has two opposite-oriented boundary circles", "[geometry]") {
  Mesh m = build_mesh(Domain::annulus(0.5), 2);
  REQUIRE(m.boundary.size() == 2);
  REQUIRE(m.boundary[0].orientation == +1);
  REQUIRE(m.boundary[1].orientation == -1);
  REQUIRE(m.boundary[0].radius == Catch::Approx(1.0));
  REQUIRE(m.boundary[1].radius == Catch::Approx(0.5));
  // Signed angular increments reverse between the components.
  auto step = [&](const BoundaryComponent& bc) {
    double d = bc.angle[1] - bc.angle[0];
    if (d > kPi) d -= 2 * kPi;
    if (d < -kPi) d += 2 * kPi;
    return d;
  };
  REQUIRE(step(m.boundary[0]) > 0.0);
  REQUIRE(step(m.boundary[1]) < 0.0);
}

TEST_CASE("mesh level bounds are enforced", "[geometry]") {
  REQUIRE_THROWS_AS(build_mesh(Domain::unit_disk(), -1), ValidationError);
  REQUIRE_THROWS_AS(build_mesh(Domain::unit_disk(), kMaxMeshLevel + 1),
                    ResourceError);
  REQUIRE_THROWS_AS(Domain::annulus(1.5), ValidationError);
}

TEST_CASE("mesh text round-trip preserves everything", "[geometry]") {
  Mesh m = build_mesh(Domain::annulus(0.4), 1);
  std::stringstream ss;
  write_mesh(m, ss);
  Mesh r = read_mesh(ss);
  REQUIRE(r.num_nodes() == m.num_nodes());
  REQUIRE(r.num_tris() == m.num_tris());
  REQUIRE(r.boundary.size() == m.boundary.size());
  for (int i = 0; i < m.num_nodes(); ++i)
    REQUIRE((r.nodes[i] - m.nodes[i]).norm() < 1e-15);
  for (int t = 0; t < m.num_tris(); ++t) REQUIRE(r.tris[t] == m.tris[t]);
  for (size_t c = 0; c < m.boundary.size(); ++c) {
    REQUIRE(r.boundary[c].nodes == m.boundary[c].nodes);
    REQUIRE(r.boundary[c].orientation == m.boundary[c].orientation);
  }
}
