// Copyright (c) 2026 The FermiForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace fermi {

using cplx = std::complex<double>;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr cplx kI{0.0, 1.0};

// Error taxonomy. The CLI maps these to exit codes:
// validation -> 2, resource/resolution -> 3, failed solve or assertion -> 1.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// The assembled operator is numerically singular, i.e. 0 sits in the
// Dirichlet spectrum up to conditioning.
struct EigenvalueCollisionError : SolverError {
  using SolverError::SolverError;
};
// Oscillatory quadrature asked for at a frequency the grid cannot carry.
struct UnderResolvedError : ResourceError {
  using ResourceError::ResourceError;
};

inline int max_threads() {
  if (const char* env = std::getenv("FERMI_FORGE_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Index-parallel loop. Work items must be independent; results should be
// written into preallocated slots so the output order is deterministic.
template <class F>
void parallel_for(int n, F&& body) {
  int nthreads = std::min(max_threads(), n);
  if (nthreads <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (int t = 0; t < nthreads; ++t) {
    pool.emplace_back([&, t]() {
      for (int i = t; i < n; i += nthreads) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline double sqr(double x) { return x * x; }

}  // namespace fermi
