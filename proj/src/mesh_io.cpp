// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>

#include "mafem/mesh.hpp"

namespace mafem
{

namespace detail
{
Mesh make_mesh_with_refinement_edges(std::vector<Vec2> vertices, std::vector<Triangle> triangles,
                                     const std::vector<int> &refedge, std::vector<int> generation);
}

void write_mesh(std::ostream &out, const Mesh &mesh)
{
  out << mesh.num_vertices() << ' ' << mesh.num_triangles() << '\n';
  out << std::setprecision(17);
  for (const auto &v : mesh.vertices)
  {
    out << v.x() << ' ' << v.y() << '\n';
  }
  for (Index t = 0; t < mesh.num_triangles(); ++t)
  {
    const auto &tri = mesh.triangles[t];
    out << tri[0] << ' ' << tri[1] << ' ' << tri[2] << ' ' << Mesh::refinement_edge << ' '
        << mesh.generation[t] << '\n';
  }
}

Mesh read_mesh(std::istream &in)
{
  long nv = -1, nt = -1;
  if (!(in >> nv >> nt) || nv < 3 || nt < 1)
  {
    throw MeshError("mesh file: bad header, expected 'V T'");
  }
  std::vector<Vec2> vertices(nv);
  for (auto &v : vertices)
  {
    if (!(in >> v.x() >> v.y()))
    {
      throw MeshError("mesh file: truncated vertex list");
    }
  }
  std::vector<Triangle> triangles(nt);
  std::vector<int> refedge(nt), generation(nt);
  for (long t = 0; t < nt; ++t)
  {
    auto &tri = triangles[t];
    if (!(in >> tri[0] >> tri[1] >> tri[2] >> refedge[t] >> generation[t]))
    {
      throw MeshError("mesh file: truncated triangle list");
    }
    if (generation[t] < 0)
    {
      throw MeshError("mesh file: negative generation");
    }
  }
  return detail::make_mesh_with_refinement_edges(std::move(vertices), std::move(triangles), refedge,
                                                 std::move(generation));
}

void write_mesh_file(const std::string &filename, const Mesh &mesh)
{
  std::ofstream out(filename);
  if (!out)
  {
    throw Error("cannot open " + filename + " for writing");
  }
  write_mesh(out, mesh);
}

Mesh read_mesh_file(const std::string &filename)
{
  std::ifstream in(filename);
  if (!in)
  {
    throw MeshError("cannot open mesh file " + filename);
  }
  return read_mesh(in);
}

void write_vtk(std::ostream &out, const Mesh &mesh, const std::vector<double> *cell_data,
               const std::string &cell_data_name)
{
  out << "# vtk DataFile Version 3.0\nmafem mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.num_vertices() << " double\n" << std::setprecision(17);
  for (const auto &v : mesh.vertices)
  {
    out << v.x() << ' ' << v.y() << " 0\n";
  }
  out << "CELLS " << mesh.num_triangles() << ' ' << 4 * mesh.num_triangles() << '\n';
  for (const auto &tri : mesh.triangles)
  {
    out << "3 " << tri[0] << ' ' << tri[1] << ' ' << tri[2] << '\n';
  }
  out << "CELL_TYPES " << mesh.num_triangles() << '\n';
  for (Index t = 0; t < mesh.num_triangles(); ++t)
  {
    out << "5\n";
  }
  out << "CELL_DATA " << mesh.num_triangles() << '\n';
  out << "SCALARS generation int 1\nLOOKUP_TABLE default\n";
  for (int g : mesh.generation)
  {
    out << g << '\n';
  }
  if (cell_data)
  {
    out << "SCALARS " << cell_data_name << " double 1\nLOOKUP_TABLE default\n";
    for (double x : *cell_data)
    {
      out << x << '\n';
    }
  }
}

}  // namespace mafem
