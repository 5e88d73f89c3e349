// SPDX-License-Identifier: Apache-2.0

#include "mafem/fespace.hpp"

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include <Eigen/LU>

#include "mafem/quadrature.hpp"

namespace mafem
{

namespace
{

// Monomials x^a y^b with a+b <= degree, ordered by total degree.
struct Monomials
{
  int degree = 0;
  std::vector<std::array<int, 2>> exponents;

  explicit Monomials(int p) : degree(p)
  {
    for (int d = 0; d <= p; ++d)
    {
      for (int a = d; a >= 0; --a)
      {
        exponents.push_back({a, d - a});
      }
    }
  }
  int size() const { return static_cast<int>(exponents.size()); }

  // Rows: value, d/dx, d/dy.
  Eigen::Matrix<double, 3, Eigen::Dynamic> eval(double x, double y) const
  {
    Eigen::Matrix<double, 3, Eigen::Dynamic> out(3, size());
    for (int i = 0; i < size(); ++i)
    {
      const auto [a, b] = exponents[i];
      out(0, i) = std::pow(x, a) * std::pow(y, b);
      out(1, i) = a == 0 ? 0.0 : a * std::pow(x, a - 1) * std::pow(y, b);
      out(2, i) = b == 0 ? 0.0 : b * std::pow(x, a) * std::pow(y, b - 1);
    }
    return out;
  }
};

double shifted_legendre(int m, double s)
{
  const double x = 2 * s - 1;
  double p0 = 1, p1 = x;
  if (m == 0)
  {
    return p0;
  }
  for (int n = 2; n <= m; ++n)
  {
    const double p2 = ((2 * n - 1) * x * p1 - (n - 1) * p0) / n;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

const std::array<Vec2, 3> reference_vertices{Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};

// Reference RT_k element. Basis functions are dual to the moments
//   edge i, m = 0..k:   int_E  phi . n  P_m(s) ds   (E from vertex i+1 to i+2)
//   interior, k >= 1:   int_T  phi . e_c  q dx,  q monomial of degree <= k-1
// and are stored as coefficients over vector monomials of degree <= k+1.
struct ReferenceRT
{
  int k = 0;
  Monomials mono{1};
  // coeff_x / coeff_y: (monomials x local dofs)
  Mat coeff_x, coeff_y;

  explicit ReferenceRT(int degree) : k(degree), mono(degree + 1)
  {
    const int nm = mono.size();
    // Spanning set: P_k^2 plus x * homogeneous P_k.
    std::vector<std::pair<Vec, Vec>> span;
    const Monomials pk(k);
    for (int i = 0; i < pk.size(); ++i)
    {
      Vec cx = Vec::Zero(nm), cy = Vec::Zero(nm);
      cx(i) = 1;
      span.emplace_back(cx, Vec::Zero(nm));
      cy(i) = 1;
      span.emplace_back(Vec::Zero(nm), cy);
    }
    auto index_of = [&](int a, int b) {
      for (int i = 0; i < nm; ++i)
      {
        if (mono.exponents[i] == std::array<int, 2>{a, b})
        {
          return i;
        }
      }
      return -1;
    };
    for (int a = k; a >= 0; --a)
    {
      Vec cx = Vec::Zero(nm), cy = Vec::Zero(nm);
      cx(index_of(a + 1, k - a)) = 1;
      cy(index_of(a, k - a + 1)) = 1;
      span.emplace_back(cx, cy);
    }
    const int n = static_cast<int>(span.size());

    // dofs(j, l) = dof_j applied to span function l
    Mat dofs = Mat::Zero(n, n);
    const auto gauss = gauss_legendre(k + 2);
    int row = 0;
    for (int e = 0; e < 3; ++e)
    {
      const Vec2 a = reference_vertices[(e + 1) % 3], b = reference_vertices[(e + 2) % 3];
      const Vec2 d = b - a;
      const double len = d.norm();
      const Vec2 normal(d.y() / len, -d.x() / len);
      for (int m = 0; m <= k; ++m, ++row)
      {
        for (std::size_t q = 0; q < gauss.points.size(); ++q)
        {
          const double s = gauss.points[q];
          const Vec2 x = a + s * d;
          const auto mv = mono.eval(x.x(), x.y());
          const double w = gauss.weights[q] * len * shifted_legendre(m, s);
          for (int l = 0; l < n; ++l)
          {
            const double vx = mv.row(0).dot(span[l].first);
            const double vy = mv.row(0).dot(span[l].second);
            dofs(row, l) += w * (vx * normal.x() + vy * normal.y());
          }
        }
      }
    }
    if (k >= 1)
    {
      const Monomials q(k - 1);
      const auto rule = triangle_rule(2 * k + 1);
      for (int c = 0; c < 2; ++c)
      {
        for (int p = 0; p < q.size(); ++p, ++row)
        {
          for (std::size_t iq = 0; iq < rule.size(); ++iq)
          {
            const Vec2 x = rule.reference_point(iq);
            const auto mv = mono.eval(x.x(), x.y());
            const double w = rule.weights[iq] * q.eval(x.x(), x.y())(0, p);
            for (int l = 0; l < n; ++l)
            {
              const auto &coef = c == 0 ? span[l].first : span[l].second;
              dofs(row, l) += w * mv.row(0).dot(coef);
            }
          }
        }
      }
    }
    if (row != n)
    {
      throw Error("reference RT element: dof count mismatch");
    }
    const Mat inv = dofs.fullPivLu().inverse();
    Mat sx(nm, n), sy(nm, n);
    for (int l = 0; l < n; ++l)
    {
      sx.col(l) = span[l].first;
      sy.col(l) = span[l].second;
    }
    coeff_x = sx * inv;
    coeff_y = sy * inv;
  }
};

const ReferenceRT &reference_rt(int k)
{
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<ReferenceRT>> cache;
  std::lock_guard lock(mutex);
  auto &slot = cache[k];
  if (!slot)
  {
    slot = std::make_unique<ReferenceRT>(k);
  }
  return *slot;
}

const Monomials &reference_scalar(int k)
{
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<Monomials>> cache;
  std::lock_guard lock(mutex);
  auto &slot = cache[k];
  if (!slot)
  {
    slot = std::make_unique<Monomials>(k);
  }
  return *slot;
}

}  // namespace

std::optional<FeDegree> parse_degree(const std::string &name)
{
  if (name.size() >= 3 && (name.rfind("rt", 0) == 0 || name.rfind("RT", 0) == 0))
  {
    try
    {
      return FeDegree{Family::RT, std::stoi(name.substr(2))};
    }
    catch (const std::exception &)
    {
      return std::nullopt;
    }
  }
  if (name.size() >= 4 && (name.rfind("bdm", 0) == 0 || name.rfind("BDM", 0) == 0))
  {
    try
    {
      return FeDegree{Family::BDM, std::stoi(name.substr(3)) - 1};
    }
    catch (const std::exception &)
    {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

std::string to_string(const FeDegree &degree)
{
  return degree.family == Family::RT ? "rt" + std::to_string(degree.k)
                                     : "bdm" + std::to_string(degree.k + 1);
}

void require_supported(const FeDegree &degree)
{
  if (degree.family != Family::RT)
  {
    throw ConfigError("unsupported element family: " + to_string(degree));
  }
  if (degree.k < 0 || degree.k > 2)
  {
    throw ConfigError("unsupported Raviart-Thomas degree: " + std::to_string(degree.k));
  }
}

int local_sigma_dofs(const FeDegree &degree) { return (degree.k + 1) * (degree.k + 3); }
int local_u_dofs(const FeDegree &degree) { return (degree.k + 1) * (degree.k + 2) / 2; }

ElementGeometry ElementGeometry::of(const Mesh &mesh, Index t)
{
  const auto &tri = mesh.triangles[t];
  ElementGeometry g;
  g.origin = mesh.vertices[tri[0]];
  g.jacobian.col(0) = mesh.vertices[tri[1]] - g.origin;
  g.jacobian.col(1) = mesh.vertices[tri[2]] - g.origin;
  g.det = g.jacobian.determinant();
  if (!(g.det > 0))
  {
    throw MeshError("degenerate or inverted triangle " + std::to_string(t));
  }
  g.inverse = g.jacobian.inverse();
  g.diameter = mafem::diameter(mesh, t);
  return g;
}

SigmaBasisValues eval_basis(const FeDegree &degree, const ElementGeometry &geo,
                            const Eigen::Vector3d &bary)
{
  require_supported(degree);
  const auto &ref = reference_rt(degree.k);
  const auto mv = ref.mono.eval(bary(1), bary(2));
  const int n = static_cast<int>(ref.coeff_x.cols());
  // Reference values and derivatives; row c of ref_d{x,y} is d/dxhat_c.
  const Eigen::RowVectorXd vx = mv.row(0) * ref.coeff_x, vy = mv.row(0) * ref.coeff_y;
  const Eigen::RowVectorXd dxx = mv.row(1) * ref.coeff_x, dxy = mv.row(2) * ref.coeff_x;
  const Eigen::RowVectorXd dyx = mv.row(1) * ref.coeff_y, dyy = mv.row(2) * ref.coeff_y;

  SigmaBasisValues out;
  out.value.resize(2, n);
  out.div.resize(n);
  out.curl.resize(n);
  const Mat2 &J = geo.jacobian;
  const double inv_det = 1.0 / geo.det;
  for (int i = 0; i < n; ++i)
  {
    out.value.col(i) = inv_det * (J * Vec2(vx(i), vy(i)));
    Mat2 dref;
    dref << dxx(i), dxy(i), dyx(i), dyy(i);
    out.div(i) = inv_det * dref.trace();
    const Mat2 dphys = inv_det * J * dref * geo.inverse;
    out.curl(i) = dphys(0, 1) - dphys(1, 0);
  }
  return out;
}

ScalarBasisValues eval_scalar_basis(const FeDegree &degree, const ElementGeometry &geo,
                                    const Eigen::Vector3d &bary)
{
  const auto &mono = reference_scalar(degree.k);
  const auto mv = mono.eval(bary(1), bary(2));
  ScalarBasisValues out;
  out.value = mv.row(0);
  out.grad = geo.inverse.transpose() * mv.bottomRows<2>();
  return out;
}

DofMap build_dofmap(const Mesh &mesh, const FeDegree &degree)
{
  require_supported(degree);
  DofMap dofs;
  dofs.degree = degree;
  dofs.topology = build_edge_topology(mesh);
  const int k = degree.k;
  const Index ne = dofs.topology.num_edges();
  const Index nt = mesh.num_triangles();
  const int interior = k * (k + 1);
  dofs.sigma_per_element = local_sigma_dofs(degree);
  dofs.u_per_element = local_u_dofs(degree);
  dofs.n_sigma = (k + 1) * ne + interior * nt;
  dofs.n_u = dofs.u_per_element * nt;
  dofs.sigma_ids.resize(static_cast<std::size_t>(nt) * dofs.sigma_per_element);
  dofs.sigma_sign.resize(dofs.sigma_ids.size());
  for (Index t = 0; t < nt; ++t)
  {
    std::size_t pos = static_cast<std::size_t>(t) * dofs.sigma_per_element;
    for (int i = 0; i < 3; ++i)
    {
      const auto inc = dofs.topology.edge_of_triangle[t][i];
      for (int m = 0; m <= k; ++m, ++pos)
      {
        dofs.sigma_ids[pos] = (k + 1) * inc.edge + m;
        // Reversing an edge flips its normal, and P_m(1-s) = (-1)^m P_m(s).
        dofs.sigma_sign[pos] = inc.sign > 0 ? 1.0 : (m % 2 == 0 ? -1.0 : 1.0);
      }
    }
    for (int r = 0; r < interior; ++r, ++pos)
    {
      dofs.sigma_ids[pos] = (k + 1) * ne + t * interior + r;
      dofs.sigma_sign[pos] = 1.0;
    }
  }
  return dofs;
}

Vec local_sigma(const DofMap &dofs, const Vec &sigma, Index t)
{
  const auto ids = dofs.sigma_dofs(t);
  const auto signs = dofs.sigma_signs(t);
  Vec out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
  {
    out(i) = signs[i] * sigma(ids[i]);
  }
  return out;
}

Vec local_u(const DofMap &dofs, const Vec &u, Index t)
{
  return u.segment(static_cast<Eigen::Index>(t) * dofs.u_per_element, dofs.u_per_element);
}

SigmaPointValue evaluate_sigma(const Mesh &mesh, const DofMap &dofs, const Vec &sigma, Index t,
                               const Eigen::Vector3d &bary)
{
  const auto geo = ElementGeometry::of(mesh, t);
  const auto basis = eval_basis(dofs.degree, geo, bary);
  const Vec c = local_sigma(dofs, sigma, t);
  return {basis.value * c, basis.div.dot(c), basis.curl.dot(c)};
}

ScalarPointValue evaluate_u(const Mesh &mesh, const DofMap &dofs, const Vec &u, Index t,
                            const Eigen::Vector3d &bary)
{
  const auto geo = ElementGeometry::of(mesh, t);
  const auto basis = eval_scalar_basis(dofs.degree, geo, bary);
  const Vec c = local_u(dofs, u, t);
  return {basis.value.dot(c), basis.grad * c};
}

}  // namespace mafem
