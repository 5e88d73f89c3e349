// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "mafem/core.hpp"

namespace mafem
{

// Gauss-Legendre nodes and weights on [0,1]; exact for polynomials of degree 2n-1.
template <typename Scalar = double>
struct GaussRule1D
{
  std::vector<Scalar> points;
  std::vector<Scalar> weights;
};

template <typename Scalar = double>
GaussRule1D<Scalar> gauss_legendre(int n)
{
  GaussRule1D<Scalar> rule;
  rule.points.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i)
  {
    // Newton iteration on P_n from the Chebyshev-like initial guess.
    Scalar x = std::cos(std::numbers::pi_v<Scalar> * (i + Scalar(0.75)) / (n + Scalar(0.5)));
    Scalar dp = 0;
    for (int it = 0; it < 100; ++it)
    {
      Scalar p0 = 1, p1 = x;
      for (int k = 2; k <= n; ++k)
      {
        const Scalar p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1)
      {
        p0 = 1;
      }
      dp = n * (x * p1 - p0) / (x * x - 1);
      const Scalar dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16)
      {
        break;
      }
    }
    // Recompute derivative at the converged node.
    Scalar p0 = 1, p1 = x;
    for (int k = 2; k <= n; ++k)
    {
      const Scalar p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = (n == 1) ? Scalar(1) : n * (x * p1 - p0) / (x * x - 1);
    rule.points[n - 1 - i] = (x + 1) / 2;
    rule.weights[n - 1 - i] = Scalar(1) / ((1 - x * x) * dp * dp);
  }
  return rule;
}

// Gauss rule on [0,1] exact up to the given polynomial order.
template <typename Scalar = double>
GaussRule1D<Scalar> edge_rule(int order)
{
  return gauss_legendre<Scalar>(std::max(1, (order + 2) / 2));
}

// Triangle rule on the reference triangle (0,0),(1,0),(0,1). Points are the
// barycentric coordinates (l0,l1,l2); weights sum to the reference area 1/2.
template <typename Scalar = double>
struct QuadratureRule
{
  std::vector<Eigen::Matrix<Scalar, 3, 1>> points;
  std::vector<Scalar> weights;
  int order = 0;

  std::size_t size() const { return weights.size(); }
  // Reference coordinates (xhat, yhat) of point q.
  Vector2<Scalar> reference_point(std::size_t q) const
  {
    return {points[q](1), points[q](2)};
  }
};

// Collapsed (Duffy) tensor Gauss rule; exact for polynomials of total degree <= order.
template <typename Scalar = double>
QuadratureRule<Scalar> triangle_rule(int order)
{
  // The collapse Jacobian adds one degree in the first direction.
  const int n = std::max(1, (order + 3) / 2);
  const auto g = gauss_legendre<Scalar>(n);
  QuadratureRule<Scalar> rule;
  rule.order = order;
  for (int i = 0; i < n; ++i)
  {
    for (int j = 0; j < n; ++j)
    {
      const Scalar s = g.points[i];
      const Scalar t = g.points[j];
      const Scalar x = s;
      const Scalar y = t * (1 - s);
      rule.points.emplace_back(1 - x - y, x, y);
      rule.weights.push_back(g.weights[i] * g.weights[j] * (1 - s));
    }
  }
  return rule;
}

}  // namespace mafem
