// Copyright (c) 2026 The FermiForge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Planar domains (unit disk, annulus) and structured triangulations of them.
// The disk mesh is a spiderweb of concentric rings (ring i carries 6i nodes),
// the annulus mesh a polar tensor grid. Both place boundary nodes exactly on
// the circles and halve the maximum edge length per refinement level.

#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fermiforge/common.hpp"

namespace fermi {

enum class DomainKind { UnitDisk, Annulus };

struct Domain {
  DomainKind kind = DomainKind::UnitDisk;
  double inner_radius = 0.0;  // annulus only, in (0,1)

  static Domain unit_disk() { return Domain{DomainKind::UnitDisk, 0.0}; }
  static Domain annulus(double rho) {
    if (!(rho > 0.0 && rho < 1.0))
      throw ValidationError("annulus inner radius must lie in (0,1)");
    return Domain{DomainKind::Annulus, rho};
  }
  int num_boundary_components() const {
    return kind == DomainKind::UnitDisk ? 1 : 2;
  }
};

struct BoundaryComponent {
  std::vector<int> nodes;   // ordered traversal, domain on the left
  std::vector<double> angle;  // exact angle of each node
  double radius = 1.0;
  int orientation = +1;  // +1 outer circle (ccw), -1 inner circle (cw)
};

struct Mesh {
  Domain domain;
  int level = 0;
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> tris;
  std::vector<BoundaryComponent> boundary;
  std::vector<int> boundary_flag;  // component index per node, -1 interior

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_tris() const { return static_cast<int>(tris.size()); }
  bool is_boundary(int i) const { return boundary_flag[i] >= 0; }

  double tri_area(int t) const {
    const auto& tr = tris[t];
    Vec2 e1 = nodes[tr[1]] - nodes[tr[0]];
    Vec2 e2 = nodes[tr[2]] - nodes[tr[0]];
    return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
  }
  Vec2 centroid(int t) const {
    const auto& tr = tris[t];
    return (nodes[tr[0]] + nodes[tr[1]] + nodes[tr[2]]) / 3.0;
  }
  double max_edge_length() const {
    double m = 0;
    for (const auto& tr : tris)
      for (int e = 0; e < 3; ++e)
        m = std::max(m, (nodes[tr[e]] - nodes[tr[(e + 1) % 3]]).norm());
    return m;
  }
  double min_angle() const {
    double m = kPi;
    for (const auto& tr : tris) {
      for (int v = 0; v < 3; ++v) {
        Vec2 a = nodes[tr[(v + 1) % 3]] - nodes[tr[v]];
        Vec2 b = nodes[tr[(v + 2) % 3]] - nodes[tr[v]];
        double c = a.dot(b) / (a.norm() * b.norm());
        m = std::min(m, std::acos(std::clamp(c, -1.0, 1.0)));
      }
    }
    return m;
  }
};

namespace detail {

inline void orient_positively(Mesh& m) {
  for (auto& tr : m.tris) {
    Vec2 e1 = m.nodes[tr[1]] - m.nodes[tr[0]];
    Vec2 e2 = m.nodes[tr[2]] - m.nodes[tr[0]];
    if (e1.x() * e2.y() - e1.y() * e2.x() < 0.0) std::swap(tr[1], tr[2]);
  }
}

// Triangulates the strip between two concentric node rings by merging the
// two angular sequences.
inline void triangulate_ring_strip(Mesh& m, const std::vector<int>& inner,
                                   const std::vector<int>& outer) {
  const size_t ni = inner.size(), no = outer.size();
  auto ang = [](size_t k, size_t n) {
    return 2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
  };
  size_t i = 0, j = 0;
  while (i < ni || j < no) {
    bool advance_outer;
    if (i == ni)
      advance_outer = true;
    else if (j == no)
      advance_outer = false;
    else
      advance_outer = ang(j + 1, no) <= ang(i + 1, ni);
    if (advance_outer) {
      m.tris.push_back({outer[j % no], outer[(j + 1) % no], inner[i % ni]});
      ++j;
    } else {
      m.tris.push_back({inner[(i + 1) % ni], inner[i % ni], outer[j % no]});
      ++i;
    }
  }
}

inline Mesh build_disk_mesh(int level) {
  Mesh m;
  m.domain = Domain::unit_disk();
  m.level = level;
  const int nr = 4 << level;
  std::vector<std::vector<int>> ring(nr + 1);
  m.nodes.push_back(Vec2(0, 0));
  ring[0] = {0};
  for (int i = 1; i <= nr; ++i) {
    const int n = 6 * i;
    const double r = static_cast<double>(i) / nr;
    for (int k = 0; k < n; ++k) {
      double th = 2.0 * kPi * k / n;
      ring[i].push_back(m.num_nodes());
      m.nodes.push_back(Vec2(r * std::cos(th), r * std::sin(th)));
    }
  }
  // Central fan, then ring strips.
  for (int k = 0; k < 6; ++k)
    m.tris.push_back({0, ring[1][k], ring[1][(k + 1) % 6]});
  for (int i = 1; i < nr; ++i) triangulate_ring_strip(m, ring[i], ring[i + 1]);
  orient_positively(m);

  BoundaryComponent bc;
  bc.radius = 1.0;
  bc.orientation = +1;
  bc.nodes = ring[nr];
  for (int k = 0; k < 6 * nr; ++k) bc.angle.push_back(2.0 * kPi * k / (6 * nr));
  m.boundary.push_back(bc);
  m.boundary_flag.assign(m.num_nodes(), -1);
  for (int id : bc.nodes) m.boundary_flag[id] = 0;
  return m;
}

inline Mesh build_annulus_mesh(double rho, int level) {
  Mesh m;
  m.domain = Domain::annulus(rho);
  m.level = level;
  const int nrad = 4 << level;
  // Angular count chosen once at level 0 so cells are near-isotropic, then
  // doubled per level.
  int n0 = static_cast<int>(std::lround(kPi * (1.0 + rho) / ((1.0 - rho) / 4.0)));
  n0 = std::max(12, n0 + (n0 % 2));
  const int nang = n0 << level;

  auto id = [&](int i, int k) { return i * nang + (k % nang); };
  for (int i = 0; i <= nrad; ++i) {
    double r = rho + (1.0 - rho) * i / nrad;
    for (int k = 0; k < nang; ++k) {
      double th = 2.0 * kPi * k / nang;
      m.nodes.push_back(Vec2(r * std::cos(th), r * std::sin(th)));
    }
  }
  for (int i = 0; i < nrad; ++i) {
    for (int k = 0; k < nang; ++k) {
      m.tris.push_back({id(i, k), id(i + 1, k), id(i + 1, k + 1)});
      m.tris.push_back({id(i, k), id(i + 1, k + 1), id(i, k + 1)});
    }
  }
  orient_positively(m);

  BoundaryComponent outer, inner;
  outer.radius = 1.0;
  outer.orientation = +1;
  inner.radius = rho;
  inner.orientation = -1;
  for (int k = 0; k < nang; ++k) {
    outer.nodes.push_back(id(nrad, k));
    outer.angle.push_back(2.0 * kPi * k / nang);
  }
  // Inner circle traversed clockwise so the annulus stays on the left.
  for (int k = 0; k < nang; ++k) {
    int kk = (nang - k) % nang;
    inner.nodes.push_back(id(0, kk));
    inner.angle.push_back(2.0 * kPi * kk / nang);
  }
  m.boundary.push_back(outer);
  m.boundary.push_back(inner);
  m.boundary_flag.assign(m.num_nodes(), -1);
  for (int idn : outer.nodes) m.boundary_flag[idn] = 0;
  for (int idn : inner.nodes) m.boundary_flag[idn] = 1;
  return m;
}

}  // namespace detail

inline constexpr int kMaxMeshLevel = 7;

inline Mesh build_mesh(const Domain& domain, int level) {
  if (level < 0) throw ValidationError("mesh level must be >= 0");
  if (level > kMaxMeshLevel)
    throw ResourceError("mesh level exceeds the documented cap of 7");
  return domain.kind == DomainKind::UnitDisk
             ? detail::build_disk_mesh(level)
             : detail::build_annulus_mesh(domain.inner_radius, level);
}

// Outward Euclidean unit normal at a boundary node.
inline Vec2 boundary_normal(const Mesh& m, int component, int local) {
  const auto& bc = m.boundary[component];
  double th = bc.angle[local];
  Vec2 rad(std::cos(th), std::sin(th));
  return bc.orientation > 0 ? rad : Vec2(-rad);
}

// --- plain-text export/import -----------------------------------------------
//
//   nodes tris components level kind inner_radius
//   x y                (one node per line)
//   a b c              (one triangle per line)
//   radius orientation id0 id1 ...   (one boundary component per line)

inline void write_mesh(const Mesh& m, std::ostream& os) {
  os.precision(17);
  os << m.num_nodes() << ' ' << m.num_tris() << ' ' << m.boundary.size() << ' '
     << m.level << ' ' << (m.domain.kind == DomainKind::UnitDisk ? 0 : 1)
     << ' ' << m.domain.inner_radius << '\n';
  for (const auto& p : m.nodes) os << p.x() << ' ' << p.y() << '\n';
  for (const auto& t : m.tris) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  for (const auto& bc : m.boundary) {
    os << bc.radius << ' ' << bc.orientation;
    for (int id : bc.nodes) os << ' ' << id;
    os << '\n';
  }
}

inline Mesh read_mesh(std::istream& is) {
  Mesh m;
  int nn, nt, nc, kind;
  if (!(is >> nn >> nt >> nc >> m.level >> kind >> m.domain.inner_radius))
    throw ValidationError("mesh header parse failure");
  m.domain.kind = kind == 0 ? DomainKind::UnitDisk : DomainKind::Annulus;
  m.nodes.resize(nn);
  for (auto& p : m.nodes) is >> p.x() >> p.y();
  m.tris.resize(nt);
  for (auto& t : m.tris) is >> t[0] >> t[1] >> t[2];
  std::string line;
  std::getline(is, line);
  for (int c = 0; c < nc; ++c) {
    std::getline(is, line);
    std::istringstream ls(line);
    BoundaryComponent bc;
    ls >> bc.radius >> bc.orientation;
    int id;
    while (ls >> id) {
      bc.nodes.push_back(id);
      bc.angle.push_back(std::atan2(m.nodes[id].y(), m.nodes[id].x()));
      if (bc.angle.back() < 0) bc.angle.back() += 2.0 * kPi;
    }
    m.boundary.push_back(bc);
  }
  m.boundary_flag.assign(nn, -1);
  for (size_t c = 0; c < m.boundary.size(); ++c)
    for (int id : m.boundary[c].nodes) m.boundary_flag[id] = static_cast<int>(c);
  if (!is) throw ValidationError("mesh body parse failure");
  return m;
}

inline void save_mesh(const Mesh& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot open mesh file for writing: " + path);
  write_mesh(m, f);
}

inline Mesh load_mesh(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open mesh file: " + path);
  return read_mesh(f);
}

}  // namespace fermi
