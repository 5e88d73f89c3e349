// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <utility>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "mafem/core.hpp"
#include "mafem/fespace.hpp"
#include "mafem/mesh.hpp"

namespace mafem
{

using ScalarFunction = std::function<double(const Vec2 &)>;
using VectorFunction = std::function<Vec2(const Vec2 &)>;

// Discrete mixed Laplacian: a(s,t) = (s,t) -> A, b(t,v) = (div t, v) -> B, (u,v) -> M.
struct MixedSystem
{
  SparseMatrix A;  // n_sigma x n_sigma, SPD
  SparseMatrix B;  // n_u x n_sigma
  SparseMatrix M;  // n_u x n_u, block diagonal SPD
};

MixedSystem assemble(const Mesh &mesh, const DofMap &dofs);

// Factorizations reused by every solve on one mesh. The Cholesky factor of A
// is computed eagerly; the LU factor of the saddle-point matrix lazily.
class MixedSolver
{
public:
  explicit MixedSolver(MixedSystem system);

  const MixedSystem &system() const { return system_; }
  Index n_sigma() const { return static_cast<Index>(system_.A.rows()); }
  Index n_u() const { return static_cast<Index>(system_.M.rows()); }

  Vec solve_a(const Vec &rhs) const;
  Mat solve_a(const Mat &rhs) const;
  // [A B^T; B 0] [s; u] = [f; g]
  std::pair<Vec, Vec> solve_saddle(const Vec &f, const Vec &g) const;
  // (B A^{-1} B^T)^{-1} r
  Vec apply_schur_inverse(const Vec &r) const;

private:
  void factor_saddle() const;

  MixedSystem system_;
  Eigen::SimplicialLLT<SparseMatrix> chol_a_;
  mutable std::unique_ptr<Eigen::SparseLU<SparseMatrix>> saddle_lu_;
};

// G_h(w): the Sigma_h solution of A g + B^T w = 0.
Vec discrete_gradient(const MixedSolver &solver, const Vec &w);
Vec discrete_gradient(const MixedSystem &system, const Vec &w);

// Load vector (f, v_a) for the M_h basis, with the given quadrature order
// (default 2k+2).
Vec load_vector(const Mesh &mesh, const DofMap &dofs, const ScalarFunction &f, int order = -1);
// Coefficients c with M c = load_vector(f).
Vec l2_project(const Mesh &mesh, const DofMap &dofs, const ScalarFunction &f, int order = -1);

// Element-local solve with the block-diagonal mass matrix.
Vec solve_mass(const MixedSystem &system, const DofMap &dofs, const Vec &rhs);

double m_inner(const MixedSystem &system, const Vec &u, const Vec &v);
double a_inner(const MixedSystem &system, const Vec &s, const Vec &t);

void write_matrix_market(std::ostream &out, const SparseMatrix &matrix);

}  // namespace mafem
