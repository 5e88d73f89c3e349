// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "mafem/assembly.hpp"
#include "mafem/core.hpp"

namespace mafem
{

// Cluster J = {n+1, ..., n+size} of the discrete spectrum (1-based indices).
struct ClusterSpec
{
  int n = 0;
  int size = 1;
  // Minimal relative gap to the neighbours lambda_n and lambda_{n+size+1}.
  double separation_guard = 1e-6;

  int first() const { return n + 1; }
  int last() const { return n + size; }
};

struct EigenCluster
{
  std::vector<int> indices;
  std::vector<double> values;
  std::vector<Vec> sigma;
  std::vector<Vec> u;

  std::optional<double> lower_neighbor;  // lambda_{h,n}
  std::optional<double> upper_neighbor;  // lambda_{h,n+size+1}
  double lower_gap = 1.0;                // relative gaps to the neighbours
  double upper_gap = 1.0;
  bool separated = true;
  double max_residual = 0;               // relative residual of both equations

  int size() const { return static_cast<int>(values.size()); }
};

struct EigenSolverOptions
{
  Index dense_limit = 400;  // dense Schur eigensolver up to this dim(M_h)
  double tolerance = 1e-12;  // relative Ritz residual
  int block_size = 3;
  int max_iterations = 2000;
  double degeneracy_gap = 1e-8;
};

// The lowest `count` eigenpairs of (B A^{-1} B^T) u = lambda M u, with
// M-orthonormal eigenvectors as columns.
std::pair<Vec, Mat> lowest_eigenpairs(const MixedSolver &solver, int count,
                                      const EigenSolverOptions &options = {});

EigenCluster solve_cluster(const MixedSolver &solver, const ClusterSpec &spec,
                           const EigenSolverOptions &options = {});

// Deterministic orthonormal basis of span(U) (columns M-orthonormal): rotates
// so fixed coefficient functionals of the result are lower triangular with a
// positive diagonal.
Mat canonical_basis(const Mat &U);

// (G_h(T_h^lambda g), T_h^lambda g): the discrete source problem with datum lambda g.
std::pair<Vec, Vec> solve_source(const MixedSolver &solver, const Vec &g, double lambda);

}  // namespace mafem
