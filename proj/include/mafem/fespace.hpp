// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mafem/core.hpp"
#include "mafem/mesh.hpp"

namespace mafem
{

enum class Family
{
  RT,
  BDM,
};

// RT_k pairs with discontinuous P_k; BDM_{k+1} would pair with P_k.
struct FeDegree
{
  Family family = Family::RT;
  int k = 0;

  bool operator==(const FeDegree &) const = default;
};

std::optional<FeDegree> parse_degree(const std::string &name);
std::string to_string(const FeDegree &degree);
// Throws ConfigError for pairs without an implementation (BDM, RT_k with k > 2).
void require_supported(const FeDegree &degree);

int local_sigma_dofs(const FeDegree &degree);
int local_u_dofs(const FeDegree &degree);

// Affine map x = origin + J xhat from the reference triangle (0,0),(1,0),(0,1).
struct ElementGeometry
{
  Vec2 origin;
  Mat2 jacobian;
  Mat2 inverse;
  double det = 0;
  double diameter = 0;

  static ElementGeometry of(const Mesh &mesh, Index t);
  Vec2 map(const Vec2 &ref) const { return origin + jacobian * ref; }
  Vec2 map_barycentric(const Eigen::Vector3d &bary) const { return map({bary(1), bary(2)}); }
  double area() const { return 0.5 * det; }
};

// Physical-space values of the local (unsigned) Sigma_h basis at one point:
// contravariant Piola values, divergences, and scalar curls d2 s1 - d1 s2.
struct SigmaBasisValues
{
  Eigen::Matrix<double, 2, Eigen::Dynamic> value;
  Eigen::RowVectorXd div;
  Eigen::RowVectorXd curl;
};

// Physical-space values and gradients of the local M_h basis at one point.
struct ScalarBasisValues
{
  Eigen::RowVectorXd value;
  Eigen::Matrix<double, 2, Eigen::Dynamic> grad;
};

SigmaBasisValues eval_basis(const FeDegree &degree, const ElementGeometry &geo,
                            const Eigen::Vector3d &bary);
ScalarBasisValues eval_scalar_basis(const FeDegree &degree, const ElementGeometry &geo,
                                    const Eigen::Vector3d &bary);

// Degrees of freedom. Sigma_h: k+1 normal-flux moments per edge (shared, signed
// by the global edge orientation) followed by k(k+1) interior moments per
// triangle. M_h: (k+1)(k+2)/2 element-local coefficients per triangle.
struct DofMap
{
  FeDegree degree;
  Index n_sigma = 0;
  Index n_u = 0;
  int sigma_per_element = 0;
  int u_per_element = 0;
  EdgeTopology topology;
  std::vector<Index> sigma_ids;   // triangle-major, sigma_per_element entries each
  std::vector<double> sigma_sign;  // +-1 per local dof

  std::span<const Index> sigma_dofs(Index t) const
  {
    return {sigma_ids.data() + static_cast<std::size_t>(t) * sigma_per_element,
            static_cast<std::size_t>(sigma_per_element)};
  }
  std::span<const double> sigma_signs(Index t) const
  {
    return {sigma_sign.data() + static_cast<std::size_t>(t) * sigma_per_element,
            static_cast<std::size_t>(sigma_per_element)};
  }
  Index u_dof(Index t, int a) const { return t * u_per_element + a; }
};

DofMap build_dofmap(const Mesh &mesh, const FeDegree &degree);

// Signed local coefficient vectors of a global Sigma_h / M_h vector on triangle t.
Vec local_sigma(const DofMap &dofs, const Vec &sigma, Index t);
Vec local_u(const DofMap &dofs, const Vec &u, Index t);

struct SigmaPointValue
{
  Vec2 value;
  double div;
  double curl;
};

struct ScalarPointValue
{
  double value;
  Vec2 grad;
};

SigmaPointValue evaluate_sigma(const Mesh &mesh, const DofMap &dofs, const Vec &sigma, Index t,
                               const Eigen::Vector3d &bary);
ScalarPointValue evaluate_u(const Mesh &mesh, const DofMap &dofs, const Vec &u, Index t,
                            const Eigen::Vector3d &bary);

}  // namespace mafem
