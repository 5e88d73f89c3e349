// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SparseCore>

namespace mafem
{

using Index = std::int32_t;

template <typename Scalar>
using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Matrix2 = Eigen::Matrix<Scalar, 2, 2>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vec2 = Vector2<double>;
using Mat2 = Matrix2<double>;
using Vec = VectorX<double>;
using Mat = MatrixX<double>;
using SparseMatrix = Eigen::SparseMatrix<double>;

// Error categories map onto CLI exit codes: configuration problems (2),
// numerical failures (3), failed verification (4).
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class MeshError : public Error
{
public:
  using Error::Error;
};

class ConfigError : public Error
{
public:
  using Error::Error;
};

class SolverError : public Error
{
public:
  using Error::Error;
};

class VerificationError : public Error
{
public:
  using Error::Error;
};

}  // namespace mafem
