// Copyright (c) 2026 The FermiForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "fermiforge/common.hpp"

namespace fermi {

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  int points_used = 0;
};

// Least-squares fit of log(y) against log(h). Non-positive samples are
// dropped (they carry no slope information on a log axis).
inline FitResult loglog_fit(const std::vector<double>& h,
                            const std::vector<double>& y) {
  if (h.size() != y.size())
    throw ValidationError("loglog_fit: size mismatch");
  std::vector<double> lx, ly;
  for (size_t i = 0; i < h.size(); ++i) {
    if (h[i] > 0.0 && y[i] > 0.0) {
      lx.push_back(std::log(h[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  FitResult fit;
  fit.points_used = static_cast<int>(lx.size());
  if (lx.size() < 2) return fit;
  double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
    syy += ly[i] * ly[i];
  }
  double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-300) return fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_tot = syy - sy * sy / n;
  double ss_res = 0;
  for (size_t i = 0; i < lx.size(); ++i)
    ss_res += sqr(ly[i] - fit.slope * lx[i] - fit.intercept);
  fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

// Observed convergence order between two resolutions.
inline double observed_order(double err_coarse, double err_fine,
                             double ratio = 2.0) {
  return std::log(err_coarse / err_fine) / std::log(ratio);
}

struct RichardsonResult {
  double limit = 0.0;
  double fitted_order = 0.0;  // order of the leading correction term
};

// Extrapolates y(h) -> y(0) assuming y = y0 + C h^p. The order p is fitted
// from the last three samples when possible, otherwise p = 1 is used.
inline RichardsonResult richardson(const std::vector<double>& h,
                                   const std::vector<double>& y) {
  if (h.size() != y.size() || h.size() < 2)
    throw ValidationError("richardson: need at least two samples");
  // Sort by decreasing h without disturbing the caller's vectors.
  std::vector<size_t> idx(h.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return h[a] > h[b]; });
  RichardsonResult out;
  double p = 1.0;
  if (h.size() >= 3) {
    size_t a = idx[idx.size() - 3], b = idx[idx.size() - 2],
           c = idx[idx.size() - 1];
    double d1 = y[a] - y[b], d2 = y[b] - y[c];
    double r1 = h[a] / h[b];
    if (d2 != 0.0 && d1 / d2 > 0.0 && r1 > 1.0)
      p = std::log(d1 / d2) / std::log(r1);
    if (!(p > 0.05 && p < 6.0)) p = 1.0;
  }
  size_t b = idx[idx.size() - 2], c = idx[idx.size() - 1];
  double r = std::pow(h[b] / h[c], p);
  out.limit = (r * y[c] - y[b]) / (r - 1.0);
  out.fitted_order = p;
  return out;
}

}  // namespace fermi
