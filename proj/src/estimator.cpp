// SPDX-License-Identifier: Apache-2.0

#include "mafem/estimator.hpp"

#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "mafem/quadrature.hpp"

namespace mafem
{

IndicatorField estimate(const Mesh &mesh, const DofMap &dofs, const std::vector<Vec> &sigma,
                        const std::vector<Vec> &u)
{
  if (sigma.size() != u.size())
  {
    throw Error("estimate: sigma and u member counts differ");
  }
  const int members = static_cast<int>(u.size());
  for (int j = 0; j < members; ++j)
  {
    if (sigma[j].size() != dofs.n_sigma || u[j].size() != dofs.n_u)
    {
      throw Error("estimate: coefficient vectors do not match the mesh");
    }
  }
  const Index nt = mesh.num_triangles();
  const int k = dofs.degree.k;
  const auto rule = triangle_rule(2 * k + 2);
  // Traces of RT_k are of degree k+1; squares need order 2k+2.
  const auto edge_gauss = gauss_legendre(k + 2);
  const auto &topo = dofs.topology;

  IndicatorField field;
  field.volume = Mat::Zero(members, nt);
  field.curl = Mat::Zero(members, nt);
  field.jump = Mat::Zero(members, nt);

  std::vector<Vec> local_s(members), local_s_nb(members);
  for (Index t = 0; t < nt; ++t)
  {
    const auto geo = ElementGeometry::of(mesh, t);
    const double h2 = geo.diameter * geo.diameter;
    for (int j = 0; j < members; ++j)
    {
      local_s[j] = local_sigma(dofs, sigma[j], t);
    }
    for (std::size_t q = 0; q < rule.size(); ++q)
    {
      const auto sb = eval_basis(dofs.degree, geo, rule.points[q]);
      const auto ub = eval_scalar_basis(dofs.degree, geo, rule.points[q]);
      const double w = rule.weights[q] * geo.det;
      for (int j = 0; j < members; ++j)
      {
        const Vec lu = local_u(dofs, u[j], t);
        const Vec2 r = sb.value * local_s[j] - ub.grad * lu;
        const double c = sb.curl.dot(local_s[j]);
        field.volume(j, t) += w * h2 * r.squaredNorm();
        field.curl(j, t) += w * h2 * c * c;
      }
    }

    for (int i = 0; i < 3; ++i)
    {
      const Index e = topo.edge_of_triangle[t][i].edge;
      const auto [a, b] = topo.edges[e];
      const Vec2 pa = mesh.vertices[a], pb = mesh.vertices[b];
      const double len = topo.length[e];
      const Vec2 tangent = topo.tangent[e];
      const auto &tris = topo.triangles_of_edge[e];
      const Index nb = tris[0] == t ? tris[1] : tris[0];
      std::optional<ElementGeometry> nb_geo;
      if (nb >= 0)
      {
        nb_geo = ElementGeometry::of(mesh, nb);
        for (int j = 0; j < members; ++j)
        {
          local_s_nb[j] = local_sigma(dofs, sigma[j], nb);
        }
      }
      for (std::size_t q = 0; q < edge_gauss.points.size(); ++q)
      {
        const Vec2 x = pa + edge_gauss.points[q] * (pb - pa);
        const double w = edge_gauss.weights[q] * len * len;  // h_E * ds
        const auto sb = eval_basis(dofs.degree, geo, barycentric(mesh, t, x));
        std::optional<SigmaBasisValues> nbb;
        if (nb >= 0)
        {
          nbb = eval_basis(dofs.degree, *nb_geo, barycentric(mesh, nb, x));
        }
        for (int j = 0; j < members; ++j)
        {
          double jump = (sb.value * local_s[j]).dot(tangent);
          if (nbb)
          {
            jump -= (nbb->value * local_s_nb[j]).dot(tangent);
          }
          field.jump(j, t) += w * jump * jump;
        }
      }
    }
  }
  return field;
}

double aggregate(const IndicatorField &field, const MarkSet &subset)
{
  const Mat total = field.total();
  double sum = 0;
  for (Index t : subset)
  {
    if (t < 0 || t >= field.elements())
    {
      throw Error("aggregate: element id out of range");
    }
    sum += total.col(t).sum();
  }
  return sum;
}

double aggregate(const IndicatorField &field) { return field.total().sum(); }

void write_indicator_csv(std::ostream &out, const IndicatorField &field,
                         const std::vector<int> &member_indices)
{
  out << "element,member,total,volume,curl,jump\n" << std::setprecision(17);
  for (Index t = 0; t < field.elements(); ++t)
  {
    for (int j = 0; j < field.members(); ++j)
    {
      const int member = j < static_cast<int>(member_indices.size()) ? member_indices[j] : j + 1;
      out << t << ',' << member << ','
          << field.volume(j, t) + field.curl(j, t) + field.jump(j, t) << ',' << field.volume(j, t)
          << ',' << field.curl(j, t) << ',' << field.jump(j, t) << '\n';
    }
  }
}

IndicatorField read_indicator_csv(std::istream &in)
{
  std::string line;
  if (!std::getline(in, line) || line.rfind("element,member,total", 0) != 0)
  {
    throw Error("indicator CSV: missing header");
  }
  struct Row
  {
    Index element;
    int member;
    double volume, curl, jump;
  };
  std::vector<Row> rows;
  std::map<int, int> member_slot;
  Index max_element = -1;
  while (std::getline(in, line))
  {
    if (line.empty())
    {
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ','))
    {
      cells.push_back(cell);
    }
    if (cells.size() != 6)
    {
      throw Error("indicator CSV: expected 6 columns in '" + line + "'");
    }
    Row r{static_cast<Index>(std::stol(cells[0])), std::stoi(cells[1]), std::stod(cells[3]),
          std::stod(cells[4]), std::stod(cells[5])};
    const double total = std::stod(cells[2]);
    const double sum = r.volume + r.curl + r.jump;
    if (r.volume < 0 || r.curl < 0 || r.jump < 0 ||
        std::abs(total - sum) > 1e-12 * std::max(std::abs(total), 1e-300))
    {
      throw Error("indicator CSV: inconsistent or negative entry in '" + line + "'");
    }
    member_slot.emplace(r.member, 0);
    max_element = std::max(max_element, r.element);
    rows.push_back(r);
  }
  int slot = 0;
  for (auto &[member, s] : member_slot)
  {
    s = slot++;
  }
  IndicatorField field;
  field.volume = Mat::Zero(slot, max_element + 1);
  field.curl = field.volume;
  field.jump = field.volume;
  for (const auto &r : rows)
  {
    const int j = member_slot[r.member];
    field.volume(j, r.element) = r.volume;
    field.curl(j, r.element) = r.curl;
    field.jump(j, r.element) = r.jump;
  }
  return field;
}

}  // namespace mafem
