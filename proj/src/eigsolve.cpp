// SPDX-License-Identifier: Apache-2.0

#include "mafem/eigsolve.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace mafem
{

namespace
{

std::pair<Vec, Mat> dense_eigenpairs(const MixedSolver &solver, int count)
{
  const auto &sys = solver.system();
  const Mat bt = Mat(sys.B.transpose());
  const Mat x = solver.solve_a(bt);
  Mat schur = sys.B * x;
  schur = 0.5 * (schur + schur.transpose()).eval();
  const Mat mass = Mat(sys.M);
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(schur, mass);
  if (es.info() != Eigen::Success)
  {
    throw SolverError("dense generalized eigensolver did not converge");
  }
  return {es.eigenvalues().head(count), es.eigenvectors().leftCols(count)};
}

// M-orthonormalize the columns of X against the columns of V and among
// themselves (two rounds of classical Gram-Schmidt). Columns that vanish are dropped.
Mat orthonormalize_against(const SparseMatrix &mass, const Mat &V, Mat X)
{
  for (int round = 0; round < 2; ++round)
  {
    if (V.cols() > 0)
    {
      X -= V * (V.transpose() * (mass * X));
    }
  }
  Mat out(X.rows(), 0);
  for (Eigen::Index c = 0; c < X.cols(); ++c)
  {
    Vec x = X.col(c);
    const double before = std::sqrt(x.dot(mass * x));
    for (int round = 0; round < 2; ++round)
    {
      if (V.cols() > 0)
      {
        x -= V * (V.transpose() * (mass * x));
      }
      if (out.cols() > 0)
      {
        x -= out * (out.transpose() * (mass * x));
      }
    }
    const double norm = std::sqrt(x.dot(mass * x));
    if (norm > 1e-10 * std::max(before, 1e-300))
    {
      out.conservativeResize(Eigen::NoChange, out.cols() + 1);
      out.col(out.cols() - 1) = x / norm;
    }
  }
  return out;
}

// Block Krylov subspace iteration with Rayleigh-Ritz and thick restart for the
// largest eigenvalues of the M-selfadjoint operator S^{-1} M, i.e. the
// smallest of S u = lambda M u.
std::pair<Vec, Mat> krylov_eigenpairs(const MixedSolver &solver, int count,
                                      const EigenSolverOptions &opt)
{
  const auto &mass = solver.system().M;
  const Eigen::Index n = mass.rows();
  const int block = std::max(1, opt.block_size);
  const Eigen::Index max_basis = std::min<Eigen::Index>(n, std::max(3 * count + 2 * block, 30));
  const int keep = std::min<int>(static_cast<int>(max_basis) - block, count + block + 2);

  auto apply = [&](const Mat &X) {
    Mat Y(X.rows(), X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c)
    {
      Y.col(c) = solver.apply_schur_inverse(mass * X.col(c));
    }
    return Y;
  };

  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Mat start(n, block);
  for (Eigen::Index c = 0; c < block; ++c)
  {
    for (Eigen::Index i = 0; i < n; ++i)
    {
      start(i, c) = 1.0 + dist(rng);
    }
  }
  Mat V = orthonormalize_against(mass, Mat(n, 0), start);
  Mat W = apply(V);

  for (int iter = 0; iter < opt.max_iterations; ++iter)
  {
    Mat H = V.transpose() * (mass * W);
    H = 0.5 * (H + H.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    // descending order of theta = 1/lambda
    const Eigen::Index m = H.rows();
    const Vec theta = es.eigenvalues().reverse();
    const Mat Y = es.eigenvectors().rowwise().reverse();
    const int wanted = static_cast<int>(std::min<Eigen::Index>(count, m));

    const Mat VY = V * Y.leftCols(wanted);
    const Mat WY = W * Y.leftCols(wanted);
    Mat R = WY - VY * theta.head(wanted).asDiagonal();
    std::vector<int> unconverged;
    for (int i = 0; i < wanted; ++i)
    {
      const double res = std::sqrt(std::max(0.0, R.col(i).dot(mass * R.col(i))));
      if (!(res <= opt.tolerance * std::abs(theta(i))))
      {
        unconverged.push_back(i);
      }
    }
    if (wanted == count && unconverged.empty())
    {
      return {theta.head(count).cwiseInverse(), VY};
    }
    if (m >= n)
    {
      // Invariant subspace is the whole space; Rayleigh-Ritz is exact.
      return {theta.head(count).cwiseInverse(), VY};
    }

    // Expansion directions: residuals of the leading unconverged Ritz pairs,
    // or fresh Krylov directions while the basis is smaller than the request.
    Mat dirs;
    if (wanted < count || unconverged.empty())
    {
      dirs = W.rightCols(std::min<Eigen::Index>(block, W.cols()));
    }
    else
    {
      const int nd = std::min<int>(block, static_cast<int>(unconverged.size()));
      dirs.resize(n, nd);
      for (int i = 0; i < nd; ++i)
      {
        dirs.col(i) = R.col(unconverged[i]);
      }
    }

    if (m + dirs.cols() > max_basis)
    {
      const int k = std::min<int>(keep, static_cast<int>(m));
      V = V * Y.leftCols(k);
      W = W * Y.leftCols(k);
    }
    Mat fresh = orthonormalize_against(mass, V, dirs);
    if (fresh.cols() == 0)
    {
      // Residual directions already lie in the basis; perturb deterministically.
      Mat extra(n, 1);
      for (Eigen::Index i = 0; i < n; ++i)
      {
        extra(i, 0) = dist(rng);
      }
      fresh = orthonormalize_against(mass, V, extra);
      if (fresh.cols() == 0)
      {
        return {theta.head(count).cwiseInverse(), VY};
      }
    }
    const Mat Wf = apply(fresh);
    V.conservativeResize(Eigen::NoChange, V.cols() + fresh.cols());
    V.rightCols(fresh.cols()) = fresh;
    W.conservativeResize(Eigen::NoChange, W.cols() + fresh.cols());
    W.rightCols(fresh.cols()) = Wf;
  }
  throw SolverError("Krylov eigensolver did not converge");
}

}  // namespace

std::pair<Vec, Mat> lowest_eigenpairs(const MixedSolver &solver, int count,
                                      const EigenSolverOptions &options)
{
  const Index nu = solver.n_u();
  if (count < 1 || count > nu)
  {
    throw ConfigError("requested " + std::to_string(count) + " eigenpairs of a space of dimension " +
                      std::to_string(nu));
  }
  auto [values, vectors] = nu <= options.dense_limit ? dense_eigenpairs(solver, count)
                                                     : krylov_eigenpairs(solver, count, options);

  // Final Rayleigh-Ritz in the Schur form: makes |sigma|_a^2 = lambda exact
  // up to rounding and restores M-orthonormality.
  const auto &sys = solver.system();
  const Mat sigma = -solver.solve_a(Mat(sys.B.transpose() * vectors));
  Mat stiff = sigma.transpose() * (sys.A * sigma);
  stiff = 0.5 * (stiff + stiff.transpose()).eval();
  Mat gram = vectors.transpose() * (sys.M * vectors);
  gram = 0.5 * (gram + gram.transpose()).eval();
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(stiff, gram);
  return {es.eigenvalues(), vectors * es.eigenvectors()};
}

Mat canonical_basis(const Mat &U)
{
  const Eigen::Index n = U.rows(), g = U.cols();
  if (g <= 1)
  {
    Mat out = U;
    if (g == 1)
    {
      // Sign fixed by the largest-magnitude coefficient (first on ties).
      Eigen::Index imax = 0;
      for (Eigen::Index i = 1; i < n; ++i)
      {
        if (std::abs(U(i, 0)) > std::abs(U(imax, 0)) * (1 + 1e-9))
        {
          imax = i;
        }
      }
      if (U(imax, 0) < 0)
      {
        out = -out;
      }
    }
    return out;
  }
  const Eigen::Index r = std::min<Eigen::Index>(n, 8 * g);
  Mat C(r, g);
  for (Eigen::Index i = 0; i < r; ++i)
  {
    C.row(i) = U.row((i * n) / r);
  }
  // Greedy row selection on the residual norms. Symmetric meshes produce exact
  // ties, so near-ties go to the lowest row index.
  Mat residual = C;
  Mat Cp(g, g);
  for (Eigen::Index i = 0; i < g; ++i)
  {
    const Vec norms = residual.rowwise().norm();
    const double top = norms.maxCoeff();
    Eigen::Index pick = 0;
    while (norms(pick) < (1 - 1e-6) * top)
    {
      ++pick;
    }
    Cp.row(i) = C.row(pick);
    const Vec dir = residual.row(pick).transpose() / norms(pick);
    residual -= (residual * dir) * dir.transpose();
  }
  Eigen::HouseholderQR<Mat> qr(Cp.transpose());
  Mat Q = qr.householderQ() * Mat::Identity(g, g);
  const Mat R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < g; ++i)
  {
    if (R(i, i) < 0)
    {
      Q.col(i) = -Q.col(i);
    }
  }
  return U * Q;
}

EigenCluster solve_cluster(const MixedSolver &solver, const ClusterSpec &spec,
                           const EigenSolverOptions &options)
{
  if (spec.n < 0 || spec.size < 1)
  {
    throw ConfigError("cluster needs n >= 0 and size >= 1");
  }
  const Index nu = solver.n_u();
  if (spec.last() > nu)
  {
    throw ConfigError("cluster index " + std::to_string(spec.last()) +
                      " exceeds dim(M_h) = " + std::to_string(nu));
  }
  const int count = std::min<int>(spec.last() + 1, nu);
  auto [values, vectors] = lowest_eigenpairs(solver, count, options);

  // Deterministic bases inside numerically multiple eigenvalues.
  for (int i = 0; i < count;)
  {
    int j = i + 1;
    while (j < count && values(j) - values(j - 1) < options.degeneracy_gap * std::abs(values(j)))
    {
      ++j;
    }
    if (j - i > 1)
    {
      vectors.middleCols(i, j - i) = canonical_basis(vectors.middleCols(i, j - i));
    }
    else
    {
      vectors.col(i) = canonical_basis(vectors.col(i));
    }
    i = j;
  }

  const auto &sys = solver.system();
  EigenCluster cluster;
  for (int j = spec.n; j < spec.last(); ++j)
  {
    Vec u = vectors.col(j);
    u /= std::sqrt(u.dot(sys.M * u));
    Vec sigma = discrete_gradient(solver, u);
    const double lambda = sigma.dot(sys.A * sigma);
    const Vec btu = sys.B.transpose() * u;
    const double r1 = (sys.A * sigma + btu).norm() / std::max(btu.norm(), 1e-300);
    const Vec mu = lambda * (sys.M * u);
    const double r2 = (sys.B * sigma + mu).norm() / std::max(mu.norm(), 1e-300);
    cluster.max_residual = std::max({cluster.max_residual, r1, r2});
    cluster.indices.push_back(j + 1);
    cluster.values.push_back(lambda);
    cluster.sigma.push_back(std::move(sigma));
    cluster.u.push_back(std::move(u));
  }
  if (spec.n > 0)
  {
    cluster.lower_neighbor = values(spec.n - 1);
    cluster.lower_gap = (cluster.values.front() - values(spec.n - 1)) / cluster.values.front();
  }
  if (count > spec.last())
  {
    cluster.upper_neighbor = values(spec.last());
    cluster.upper_gap = (values(spec.last()) - cluster.values.back()) / cluster.values.back();
  }
  cluster.separated =
      cluster.lower_gap >= spec.separation_guard && cluster.upper_gap >= spec.separation_guard;
  if (cluster.max_residual > 1e-8)
  {
    throw SolverError("eigenpair residual " + std::to_string(cluster.max_residual) +
                      " exceeds 1e-8");
  }
  return cluster;
}

std::pair<Vec, Vec> solve_source(const MixedSolver &solver, const Vec &g, double lambda)
{
  if (g.size() != solver.n_u())
  {
    throw Error("solve_source: size mismatch");
  }
  const Vec rhs = -lambda * (solver.system().M * g);
  return solver.solve_saddle(Vec::Zero(solver.n_sigma()), rhs);
}

}  // namespace mafem
