// SPDX-License-Identifier: Apache-2.0

#include "mafem/assembly.hpp"

#include <iomanip>
#include <ostream>

#include <Eigen/Cholesky>

#include "mafem/quadrature.hpp"

namespace mafem
{

MixedSystem assemble(const Mesh &mesh, const DofMap &dofs)
{
  const int k = dofs.degree.k;
  const int ns = dofs.sigma_per_element;
  const int nu = dofs.u_per_element;
  const auto rule = triangle_rule(2 * k + 2);

  std::vector<Eigen::Triplet<double>> ta, tb, tm;
  const auto nt = static_cast<std::size_t>(mesh.num_triangles());
  ta.reserve(nt * ns * ns);
  tb.reserve(nt * nu * ns);
  tm.reserve(nt * nu * nu);

  for (Index t = 0; t < mesh.num_triangles(); ++t)
  {
    const auto geo = ElementGeometry::of(mesh, t);
    Mat a = Mat::Zero(ns, ns), b = Mat::Zero(nu, ns), m = Mat::Zero(nu, nu);
    for (std::size_t q = 0; q < rule.size(); ++q)
    {
      const auto sb = eval_basis(dofs.degree, geo, rule.points[q]);
      const auto ub = eval_scalar_basis(dofs.degree, geo, rule.points[q]);
      const double w = rule.weights[q] * geo.det;
      a.noalias() += w * sb.value.transpose() * sb.value;
      b.noalias() += w * ub.value.transpose() * sb.div;
      m.noalias() += w * ub.value.transpose() * ub.value;
    }
    a = 0.5 * (a + a.transpose()).eval();
    m = 0.5 * (m + m.transpose()).eval();

    const auto ids = dofs.sigma_dofs(t);
    const auto signs = dofs.sigma_signs(t);
    for (int i = 0; i < ns; ++i)
    {
      for (int j = 0; j < ns; ++j)
      {
        ta.emplace_back(ids[i], ids[j], signs[i] * signs[j] * a(i, j));
      }
    }
    for (int r = 0; r < nu; ++r)
    {
      for (int j = 0; j < ns; ++j)
      {
        tb.emplace_back(dofs.u_dof(t, r), ids[j], signs[j] * b(r, j));
      }
      for (int c = 0; c < nu; ++c)
      {
        tm.emplace_back(dofs.u_dof(t, r), dofs.u_dof(t, c), m(r, c));
      }
    }
  }

  MixedSystem sys;
  sys.A.resize(dofs.n_sigma, dofs.n_sigma);
  sys.B.resize(dofs.n_u, dofs.n_sigma);
  sys.M.resize(dofs.n_u, dofs.n_u);
  sys.A.setFromTriplets(ta.begin(), ta.end());
  sys.B.setFromTriplets(tb.begin(), tb.end());
  sys.M.setFromTriplets(tm.begin(), tm.end());
  sys.A.makeCompressed();
  sys.B.makeCompressed();
  sys.M.makeCompressed();
  return sys;
}

MixedSolver::MixedSolver(MixedSystem system) : system_(std::move(system))
{
  chol_a_.compute(system_.A);
  if (chol_a_.info() != Eigen::Success)
  {
    throw SolverError("Cholesky factorization of the H(div) mass matrix failed");
  }
}

Vec MixedSolver::solve_a(const Vec &rhs) const { return chol_a_.solve(rhs); }

Mat MixedSolver::solve_a(const Mat &rhs) const { return chol_a_.solve(rhs); }

void MixedSolver::factor_saddle() const
{
  const Index ns = n_sigma(), nu = n_u();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(system_.A.nonZeros() + 2 * system_.B.nonZeros());
  for (int c = 0; c < system_.A.outerSize(); ++c)
  {
    for (SparseMatrix::InnerIterator it(system_.A, c); it; ++it)
    {
      trip.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (int c = 0; c < system_.B.outerSize(); ++c)
  {
    for (SparseMatrix::InnerIterator it(system_.B, c); it; ++it)
    {
      trip.emplace_back(ns + it.row(), it.col(), it.value());
      trip.emplace_back(it.col(), ns + it.row(), it.value());
    }
  }
  SparseMatrix saddle(ns + nu, ns + nu);
  saddle.setFromTriplets(trip.begin(), trip.end());
  saddle.makeCompressed();
  saddle_lu_ = std::make_unique<Eigen::SparseLU<SparseMatrix>>();
  saddle_lu_->analyzePattern(saddle);
  saddle_lu_->factorize(saddle);
  if (saddle_lu_->info() != Eigen::Success)
  {
    throw SolverError("saddle-point factorization failed: " + saddle_lu_->lastErrorMessage());
  }
}

std::pair<Vec, Vec> MixedSolver::solve_saddle(const Vec &f, const Vec &g) const
{
  if (!saddle_lu_)
  {
    factor_saddle();
  }
  const Index ns = n_sigma(), nu = n_u();
  Vec rhs(ns + nu);
  rhs << f, g;
  const Vec x = saddle_lu_->solve(rhs);
  return {x.head(ns), x.tail(nu)};
}

Vec MixedSolver::apply_schur_inverse(const Vec &r) const
{
  // A s + B^T u = 0, B s = -r  =>  B A^{-1} B^T u = r
  return solve_saddle(Vec::Zero(n_sigma()), -r).second;
}

Vec discrete_gradient(const MixedSolver &solver, const Vec &w)
{
  if (w.size() != solver.n_u())
  {
    throw Error("discrete_gradient: size mismatch");
  }
  return -solver.solve_a(Vec(solver.system().B.transpose() * w));
}

Vec discrete_gradient(const MixedSystem &system, const Vec &w)
{
  return discrete_gradient(MixedSolver(system), w);
}

Vec load_vector(const Mesh &mesh, const DofMap &dofs, const ScalarFunction &f, int order)
{
  const auto rule = triangle_rule(order < 0 ? 2 * dofs.degree.k + 2 : order);
  Vec out = Vec::Zero(dofs.n_u);
  for (Index t = 0; t < mesh.num_triangles(); ++t)
  {
    const auto geo = ElementGeometry::of(mesh, t);
    for (std::size_t q = 0; q < rule.size(); ++q)
    {
      const auto ub = eval_scalar_basis(dofs.degree, geo, rule.points[q]);
      const double fx = f(geo.map_barycentric(rule.points[q]));
      out.segment(static_cast<Eigen::Index>(t) * dofs.u_per_element, dofs.u_per_element) +=
          (rule.weights[q] * geo.det * fx) * ub.value.transpose();
    }
  }
  return out;
}

Vec solve_mass(const MixedSystem &system, const DofMap &dofs, const Vec &rhs)
{
  const int nu = dofs.u_per_element;
  Vec out(rhs.size());
  const Index nt = static_cast<Index>(rhs.size() / nu);
  for (Index t = 0; t < nt; ++t)
  {
    const Eigen::Index off = static_cast<Eigen::Index>(t) * nu;
    const Mat block = Mat(system.M.block(off, off, nu, nu));
    out.segment(off, nu) = block.llt().solve(rhs.segment(off, nu));
  }
  return out;
}

Vec l2_project(const Mesh &mesh, const DofMap &dofs, const ScalarFunction &f, int order)
{
  // The mass matrix is block diagonal, so the projection is element-local.
  const auto rule = triangle_rule(2 * dofs.degree.k);
  Vec out = load_vector(mesh, dofs, f, order);
  const int nu = dofs.u_per_element;
  for (Index t = 0; t < mesh.num_triangles(); ++t)
  {
    const auto geo = ElementGeometry::of(mesh, t);
    Mat m = Mat::Zero(nu, nu);
    for (std::size_t q = 0; q < rule.size(); ++q)
    {
      const auto ub = eval_scalar_basis(dofs.degree, geo, rule.points[q]);
      m.noalias() += (rule.weights[q] * geo.det) * ub.value.transpose() * ub.value;
    }
    const Eigen::Index off = static_cast<Eigen::Index>(t) * nu;
    out.segment(off, nu) = m.llt().solve(Vec(out.segment(off, nu)));
  }
  return out;
}

double m_inner(const MixedSystem &system, const Vec &u, const Vec &v) { return u.dot(system.M * v); }

double a_inner(const MixedSystem &system, const Vec &s, const Vec &t) { return s.dot(system.A * t); }

void write_matrix_market(std::ostream &out, const SparseMatrix &matrix)
{
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << matrix.rows() << ' ' << matrix.cols() << ' ' << matrix.nonZeros() << '\n';
  out << std::setprecision(17);
  for (int c = 0; c < matrix.outerSize(); ++c)
  {
    for (SparseMatrix::InnerIterator it(matrix, c); it; ++it)
    {
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
    }
  }
}

}  // namespace mafem
