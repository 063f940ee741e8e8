// Copyright (c) 2026 The FermiForge Authors
// SPDX-License-Identifier: Apache-2.0
//
// One-parameter metric families s -> g(x,s) on a planar domain, with the
// s-jets at s = 0 that drive the linearized equations:
//   k = g^{-1},  k^(l) = d^l/ds^l g^{-1},  h^(l) = d^l/ds^l Tr(g^{-1} dg/ds),
//   d = det(g)^{1/2} and its second s-derivative.
// Catalog families carry closed-form jets; anything else falls back to
// centered finite differences in s.

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fermiforge/geometry.hpp"

namespace fermi {

// Jets at s = 0.
struct Jets0 {
  Mat2 g, k, k1, k2;
  double h0 = 0, h1 = 0, h2 = 0, h3 = 0;
  double d = 1, d2 = 0;
};

// Jets at arbitrary s, to the order the nonlinear solver needs.
struct SJets {
  Mat2 g, k, k1, k2;
  double d = 1, d1 = 0;
  double h = 0, h1 = 0;
};

struct MetricFamily {
  std::string name;
  std::map<std::string, double> params;
  double s_max = 0.5;
  bool closed_jets = false;

  std::function<Mat2(const Vec2&, double)> eval;
  // Present iff closed_jets.
  std::function<Jets0(const Vec2&)> jets0_fn;
  std::function<SJets(const Vec2&, double)> jets_at_fn;

  Jets0 jets0(const Vec2& x) const;
  SJets jets_at(const Vec2& x, double s) const;
  double minimality_tol() const { return closed_jets ? 1e-10 : 1e-6; }
};

namespace detail {

inline void check_spd(const Mat2& g, const Vec2& x, double s) {
  if (!(g(0, 0) > 0.0 && g.determinant() > 0.0) ||
      std::abs(g(0, 1) - g(1, 0)) > 1e-12)
    throw SolverError("metric family is not SPD at (" + std::to_string(x.x()) +
                      "," + std::to_string(x.y()) + "), s=" + std::to_string(s));
}

// 4th-order centered stencils, derivatives 1..4.
template <class F>
inline std::array<double, 5> central_derivs(F&& f, double delta) {
  double fm3 = f(-3 * delta), fm2 = f(-2 * delta), fm1 = f(-delta), f0 = f(0.0),
         fp1 = f(delta), fp2 = f(2 * delta), fp3 = f(3 * delta);
  std::array<double, 5> d{};
  d[0] = f0;
  d[1] = (-fp2 + 8 * fp1 - 8 * fm1 + fm2) / (12 * delta);
  d[2] = (-fp2 + 16 * fp1 - 30 * f0 + 16 * fm1 - fm2) / (12 * delta * delta);
  d[3] = (-fp3 + 8 * fp2 - 13 * fp1 + 13 * fm1 - 8 * fm2 + fm3) /
         (8 * delta * delta * delta);
  d[4] = (-fp3 + 12 * fp2 - 39 * fp1 + 56 * f0 - 39 * fm1 + 12 * fm2 - fm3) /
         (6 * delta * delta * delta * delta);
  return d;
}

inline constexpr double kJetStep = 1e-3;

inline Jets0 numeric_jets0(const MetricFamily& fam, const Vec2& x) {
  Jets0 j;
  j.g = fam.eval(x, 0.0);
  check_spd(j.g, x, 0.0);
  j.k = j.g.inverse();
  // Matrix jets entrywise from k(s) = g(x,s)^{-1}.
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      auto entry = [&](double s) {
        Mat2 gs = fam.eval(x, s);
        return gs.inverse()(r, c);
      };
      auto d = central_derivs(entry, kJetStep);
      j.k1(r, c) = d[1];
      j.k2(r, c) = d[2];
    }
  // Scalar jets: h^(l) = d^(l+1)/ds^(l+1) log det g, d = sqrt(det g).
  auto logdet = [&](double s) { return std::log(fam.eval(x, s).determinant()); };
  auto ld = central_derivs(logdet, kJetStep);
  j.h0 = ld[1];
  j.h1 = ld[2];
  j.h2 = ld[3];
  // The direct 4th derivative sits at the roundoff floor; differentiate the
  // FD first derivative at a wider step instead.
  auto logdet1 = [&](double s) {
    return (-logdet(s + 2 * kJetStep) + 8 * logdet(s + kJetStep) -
            8 * logdet(s - kJetStep) + logdet(s - 2 * kJetStep)) /
           (12 * kJetStep);
  };
  j.h3 = central_derivs(logdet1, 1e-2)[3];
  auto sqdet = [&](double s) { return std::sqrt(fam.eval(x, s).determinant()); };
  auto sd = central_derivs(sqdet, kJetStep);
  j.d = sd[0];
  j.d2 = sd[2];
  return j;
}

inline SJets numeric_jets_at(const MetricFamily& fam, const Vec2& x, double s) {
  SJets j;
  j.g = fam.eval(x, s);
  check_spd(j.g, x, s);
  j.k = j.g.inverse();
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      auto entry = [&](double t) { return fam.eval(x, s + t).inverse()(r, c); };
      auto d = central_derivs(entry, kJetStep);
      j.k1(r, c) = d[1];
      j.k2(r, c) = d[2];
    }
  auto logdet = [&](double t) {
    return std::log(fam.eval(x, s + t).determinant());
  };
  auto ld = central_derivs(logdet, kJetStep);
  j.h = ld[1];
  j.h1 = ld[2];
  auto sqdet = [&](double t) {
    return std::sqrt(fam.eval(x, s + t).determinant());
  };
  auto sd = central_derivs(sqdet, kJetStep);
  j.d = sd[0];
  j.d1 = sd[1];
  return j;
}

}  // namespace detail

inline Jets0 MetricFamily::jets0(const Vec2& x) const {
  if (closed_jets) return jets0_fn(x);
  return detail::numeric_jets0(*this, x);
}

inline SJets MetricFamily::jets_at(const Vec2& x, double s) const {
  if (closed_jets) return jets_at_fn(x, s);
  return detail::numeric_jets_at(*this, x, s);
}

// --- catalog -----------------------------------------------------------------

namespace detail {

struct DiagExpProfiles {
  // Spatial profiles of the four exponent coefficients; all bounded by the
  // amplitude parameters.
  std::function<double(const Vec2&)> alpha, beta, gamma1, gamma2, delta1,
      delta2;
};

inline double get_param(const std::map<std::string, double>& p,
                        const std::string& key, double dflt) {
  auto it = p.find(key);
  return it == p.end() ? dflt : it->second;
}

// diag(e^{l1}, e^{l2}) with l1 = s a + s^2 b + s^3 c1 + s^4 e1 and
// l2 = -s a + s^2 b + s^3 c2 + s^4 e2. Trace(g^{-1} dg/ds) = l1' + l2'; the
// opposite signs on a make the family minimal at s = 0.
inline MetricFamily make_diagexp(const std::map<std::string, double>& params,
                                 DiagExpProfiles prof, const std::string& name) {
  MetricFamily fam;
  fam.name = name;
  fam.params = params;
  fam.closed_jets = true;
  auto lam = [prof](const Vec2& x, double s, int which) {
    double a = prof.alpha(x), b = prof.beta(x);
    double c = which == 0 ? prof.gamma1(x) : prof.gamma2(x);
    double e = which == 0 ? prof.delta1(x) : prof.delta2(x);
    double sgn = which == 0 ? 1.0 : -1.0;
    return sgn * s * a + s * s * b + s * s * s * c + s * s * s * s * e;
  };
  auto lam1 = [prof](const Vec2& x, double s, int which) {
    double a = prof.alpha(x), b = prof.beta(x);
    double c = which == 0 ? prof.gamma1(x) : prof.gamma2(x);
    double e = which == 0 ? prof.delta1(x) : prof.delta2(x);
    double sgn = which == 0 ? 1.0 : -1.0;
    return sgn * a + 2 * s * b + 3 * s * s * c + 4 * s * s * s * e;
  };
  auto lam2 = [prof](const Vec2& x, double s, int which) {
    double b = prof.beta(x);
    double c = which == 0 ? prof.gamma1(x) : prof.gamma2(x);
    double e = which == 0 ? prof.delta1(x) : prof.delta2(x);
    return 2 * b + 6 * s * c + 12 * s * s * e;
  };
  fam.eval = [lam](const Vec2& x, double s) {
    Mat2 g = Mat2::Zero();
    g(0, 0) = std::exp(lam(x, s, 0));
    g(1, 1) = std::exp(lam(x, s, 1));
    return g;
  };
  fam.jets0_fn = [prof](const Vec2& x) {
    Jets0 j;
    double a = prof.alpha(x), b = prof.beta(x);
    double c1 = prof.gamma1(x), c2 = prof.gamma2(x);
    double e1 = prof.delta1(x), e2 = prof.delta2(x);
    j.g = Mat2::Identity();
    j.k = Mat2::Identity();
    j.k1 = Mat2::Zero();
    j.k1(0, 0) = -a;
    j.k1(1, 1) = a;
    j.k2 = (a * a - 2 * b) * Mat2::Identity();
    j.h0 = 0;
    j.h1 = 4 * b;
    j.h2 = 6 * (c1 + c2);
    j.h3 = 24 * (e1 + e2);
    j.d = 1;
    j.d2 = 2 * b;
    return j;
  };
  fam.jets_at_fn = [lam, lam1, lam2](const Vec2& x, double s) {
    SJets j;
    double l[2] = {lam(x, s, 0), lam(x, s, 1)};
    double lp[2] = {lam1(x, s, 0), lam1(x, s, 1)};
    double lpp[2] = {lam2(x, s, 0), lam2(x, s, 1)};
    j.g = Mat2::Zero();
    j.k = Mat2::Zero();
    j.k1 = Mat2::Zero();
    j.k2 = Mat2::Zero();
    for (int i = 0; i < 2; ++i) {
      double ei = std::exp(l[i]), eki = std::exp(-l[i]);
      j.g(i, i) = ei;
      j.k(i, i) = eki;
      j.k1(i, i) = -lp[i] * eki;
      j.k2(i, i) = (lp[i] * lp[i] - lpp[i]) * eki;
    }
    j.d = std::exp(0.5 * (l[0] + l[1]));
    j.d1 = 0.5 * (lp[0] + lp[1]) * j.d;
    j.h = lp[0] + lp[1];
    j.h1 = lpp[0] + lpp[1];
    return j;
  };
  return fam;
}

}  // namespace detail

// Builds a catalog family by name. The optional domain is used by the
// boundary-flat variants to pick a cutoff that vanishes on every boundary
// circle. Catalog names:
//   euclidean          g = I
//   static_conformal   g = (1 + amp (1-r^2)^2) I, s-independent
//   diagexp            generic minimal family, closed-form jets
//   diagexp_bflat      diagexp with all s-dependence cut off at the boundary
//   broken             g = diag(e^{t0 s}, 1); Trace residual t0, not minimal
inline MetricFamily make_family(
    const std::string& name, const std::map<std::string, double>& params = {},
    const Domain& domain = Domain::unit_disk()) {
  using detail::get_param;
  if (name == "euclidean") {
    MetricFamily fam;
    fam.name = name;
    fam.closed_jets = true;
    fam.eval = [](const Vec2&, double) { return Mat2::Identity(); };
    fam.jets0_fn = [](const Vec2&) {
      Jets0 j;
      j.g = j.k = Mat2::Identity();
      j.k1 = j.k2 = Mat2::Zero();
      return j;
    };
    fam.jets_at_fn = [](const Vec2&, double) {
      SJets j;
      j.g = j.k = Mat2::Identity();
      j.k1 = j.k2 = Mat2::Zero();
      return j;
    };
    return fam;
  }
  if (name == "static_conformal") {
    double amp = get_param(params, "amp", 0.3);
    auto c = [amp](const Vec2& x) {
      double r2 = x.squaredNorm();
      return 1.0 + amp * sqr(1.0 - r2);
    };
    MetricFamily fam;
    fam.name = name;
    fam.params = params;
    fam.closed_jets = true;
    fam.eval = [c](const Vec2& x, double) { return Mat2(c(x) * Mat2::Identity()); };
    fam.jets0_fn = [c](const Vec2& x) {
      Jets0 j;
      double cc = c(x);
      j.g = cc * Mat2::Identity();
      j.k = (1.0 / cc) * Mat2::Identity();
      j.k1 = j.k2 = Mat2::Zero();
      j.d = cc;
      return j;
    };
    fam.jets_at_fn = [c](const Vec2& x, double) {
      SJets j;
      double cc = c(x);
      j.g = cc * Mat2::Identity();
      j.k = (1.0 / cc) * Mat2::Identity();
      j.k1 = j.k2 = Mat2::Zero();
      j.d = cc;
      return j;
    };
    return fam;
  }
  if (name == "diagexp" || name == "diagexp_bflat") {
    double aa = get_param(params, "alpha", 0.8);
    double ab = get_param(params, "beta", 0.6);
    double ag = get_param(params, "gamma", 0.5);
    double ad = get_param(params, "delta", 0.4);
    std::function<double(const Vec2&)> cutoff = [](const Vec2&) { return 1.0; };
    if (name == "diagexp_bflat") {
      if (domain.kind == DomainKind::UnitDisk) {
        cutoff = [](const Vec2& x) {
          double r2 = x.squaredNorm();
          return r2 >= 1.0 ? 0.0 : sqr(1.0 - r2) * (1.0 - r2);
        };
      } else {
        double rho2 = sqr(domain.inner_radius);
        double mid = sqr(0.5 * (1.0 - rho2));
        cutoff = [rho2, mid](const Vec2& x) {
          double r2 = x.squaredNorm();
          if (r2 <= rho2 || r2 >= 1.0) return 0.0;
          double v = (1.0 - r2) * (r2 - rho2) / mid;
          return v * v * v;
        };
      }
    }
    detail::DiagExpProfiles prof;
    prof.alpha = [aa, cutoff](const Vec2& x) {
      return aa * cutoff(x) * std::sin(1.3 * x.x() + 0.4) *
             std::cos(1.1 * x.y() - 0.2);
    };
    prof.beta = [ab, cutoff](const Vec2& x) {
      return ab * cutoff(x) *
             (0.4 + 0.3 * std::sin(1.2 * x.x() - 0.3) *
                        std::sin(0.9 * x.y() + 0.6));
    };
    prof.gamma1 = [ag, cutoff](const Vec2& x) {
      return ag * cutoff(x) * std::cos(0.8 * x.x() + 0.5 * x.y());
    };
    prof.gamma2 = [ag, cutoff](const Vec2& x) {
      return ag * cutoff(x) * std::sin(0.7 * x.x() - 0.6 * x.y() + 0.3);
    };
    prof.delta1 = [ad, cutoff](const Vec2& x) {
      return ad * cutoff(x) * std::cos(x.x() + 0.2 * x.y());
    };
    prof.delta2 = [ad, cutoff](const Vec2& x) {
      return ad * cutoff(x) * std::cos(0.5 * x.x() - x.y() + 0.7);
    };
    return detail::make_diagexp(params, prof, name);
  }
  if (name == "broken") {
    double t0 = get_param(params, "t0", 1.0);
    MetricFamily fam;
    fam.name = name;
    fam.params = params;
    fam.closed_jets = true;
    fam.eval = [t0](const Vec2&, double s) {
      Mat2 g = Mat2::Identity();
      g(0, 0) = std::exp(t0 * s);
      return g;
    };
    fam.jets0_fn = [t0](const Vec2&) {
      Jets0 j;
      j.g = j.k = Mat2::Identity();
      j.k1 = Mat2::Zero();
      j.k1(0, 0) = -t0;
      j.k2 = Mat2::Zero();
      j.k2(0, 0) = t0 * t0;
      j.h0 = t0;
      j.h1 = 0;
      j.h2 = 0;
      j.h3 = 0;
      j.d = 1;
      j.d2 = t0 * t0 / 4.0;
      return j;
    };
    fam.jets_at_fn = [t0](const Vec2&, double s) {
      SJets j;
      double e = std::exp(t0 * s);
      j.g = Mat2::Identity();
      j.g(0, 0) = e;
      j.k = Mat2::Identity();
      j.k(0, 0) = 1.0 / e;
      j.k1 = Mat2::Zero();
      j.k1(0, 0) = -t0 / e;
      j.k2 = Mat2::Zero();
      j.k2(0, 0) = t0 * t0 / e;
      j.d = std::exp(0.5 * t0 * s);
      j.d1 = 0.5 * t0 * j.d;
      j.h = t0;
      j.h1 = 0;
      return j;
    };
    return fam;
  }
  throw ValidationError("unknown metric family: " + name);
}

// Per-node jets at s = 0, validating SPD-ness along the way.
inline std::vector<Jets0> metric_jets(const MetricFamily& fam, const Mesh& mesh) {
  std::vector<Jets0> jets(mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    detail::check_spd(fam.eval(mesh.nodes[i], 0.0), mesh.nodes[i], 0.0);
    jets[i] = fam.jets0(mesh.nodes[i]);
  }
  return jets;
}

struct MinimalityReport {
  bool minimal = false;
  double max_trace_residual = 0.0;   // max |Tr(g^{-1} dg/ds)| at s = 0
  double max_k1_trace_residual = 0.0;  // max |Tr(g k1)|
};

// A family is a valid base point for the solver iff u = 0 solves the
// equation, i.e. Tr(g^{-1} dg/ds) = 0 at s = 0 (equivalently Tr(g k1) = 0).
inline MinimalityReport check_minimality(const MetricFamily& fam,
                                         const Mesh& mesh) {
  MinimalityReport rep;
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    Jets0 j = fam.jets0(mesh.nodes[i]);
    rep.max_trace_residual = std::max(rep.max_trace_residual, std::abs(j.h0));
    double tr = (j.g * j.k1).trace();
    rep.max_k1_trace_residual = std::max(rep.max_k1_trace_residual, std::abs(tr));
  }
  double tol = fam.minimality_tol();
  rep.minimal =
      rep.max_trace_residual <= tol && rep.max_k1_trace_residual <= tol;
  return rep;
}

// --- symmetric (2,0)-tensor fields ------------------------------------------

struct TensorField2 {
  Eigen::VectorXd k11, k12, k22;  // per-node entries, K12 == K21
  bool trace_free_flag = false;

  int size() const { return static_cast<int>(k11.size()); }
  Mat2 at(int i) const {
    Mat2 K;
    K << k11[i], k12[i], k12[i], k22[i];
    return K;
  }
  // kappa = K11 - K22 + i (K12 + K21), the complex scalar that carries the
  // trace-free part in holomorphic coordinates.
  Eigen::VectorXcd kappa() const {
    Eigen::VectorXcd out(size());
    for (int i = 0; i < size(); ++i)
      out[i] = cplx(k11[i] - k22[i], 2.0 * k12[i]);
    return out;
  }
  double max_trace_residual(const std::vector<Jets0>& jets) const {
    double m = 0;
    for (int i = 0; i < size(); ++i) {
      const Mat2& g = jets[i].g;
      m = std::max(m, std::abs(g(0, 0) * k11[i] + 2 * g(0, 1) * k12[i] +
                               g(1, 1) * k22[i]));
    }
    return m;
  }
};

}  // namespace fermi
