// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mafem/core.hpp"

namespace mafem
{

using Triangle = std::array<Index, 3>;

// Coarse triangulation all NVB descendants are keyed against.
struct InitialMesh
{
  std::vector<Vec2> vertices;
  std::vector<Triangle> triangles;
};

// Conforming triangulation produced by newest-vertex bisection.
//
// Triangles are stored counter-clockwise with the newest vertex first, so the
// refinement edge is always local edge 0, the edge (v1,v2) opposite v0. Every
// triangle also carries its bisection path from a root of the initial mesh:
// the characters '0'/'1' select the first/second child of each bisection.
struct Mesh
{
  std::vector<Vec2> vertices;
  std::vector<Triangle> triangles;
  std::vector<int> generation;
  std::vector<std::optional<Index>> parent;
  std::vector<Index> root;
  std::vector<std::string> path;
  std::shared_ptr<const InitialMesh> initial;

  Index num_vertices() const { return static_cast<Index>(vertices.size()); }
  Index num_triangles() const { return static_cast<Index>(triangles.size()); }
  static constexpr int refinement_edge = 0;
};

// Global edge list with orientation from lower to higher vertex index.
// Local edge i of a triangle joins local vertices i+1 and i+2 (mod 3).
struct EdgeTopology
{
  struct Incidence
  {
    Index edge;
    int sign;  // +1 if local direction (v_{i+1} -> v_{i+2}) matches the global one
  };

  std::vector<std::array<Index, 2>> edges;
  std::vector<std::array<Incidence, 3>> edge_of_triangle;
  std::vector<std::array<Index, 2>> triangles_of_edge;  // second entry -1 on the boundary
  std::vector<Vec2> tangent;
  std::vector<double> length;

  Index num_edges() const { return static_cast<Index>(edges.size()); }
  bool is_boundary(Index e) const { return triangles_of_edge[e][1] < 0; }
};

using MarkSet = std::vector<Index>;

enum class Domain
{
  UnitSquare,
  LShape,
};

std::optional<Domain> parse_domain(const std::string &name);

// Validates the triangulation and assigns refinement edges by the longest-edge rule.
Mesh load_initial_mesh(std::vector<Vec2> vertices, std::vector<Triangle> triangles);
Mesh load_initial_mesh(Domain domain);

EdgeTopology build_edge_topology(const Mesh &mesh);

// Smallest conforming NVB refinement in which every marked triangle is bisected.
Mesh refine(const Mesh &mesh, const MarkSet &marked);
Mesh refine_all(const Mesh &mesh);
// Two bisection sweeps; halves the mesh size of a uniform mesh.
Mesh uniform_refine(const Mesh &mesh, int times = 1);

// Smallest common refinement of two NVB refinements of the same initial mesh.
Mesh overlay(const Mesh &t1, const Mesh &t2);

double signed_area(const Mesh &mesh, Index t);
double diameter(const Mesh &mesh, Index t);
double max_diameter(const Mesh &mesh);
double min_angle(const Mesh &mesh);

// Triangles sharing a vertex pair more than twice, or vertices in the interior of an edge.
bool is_conforming(const Mesh &mesh);
bool is_valid_mark_set(const Mesh &mesh, const MarkSet &marked);

// Every fine triangle lies inside its recorded parent in the coarse mesh.
bool is_nested(const Mesh &coarse, const Mesh &fine, double tol = 1e-12);

// Every fine triangle descends from a coarse triangle in the bisection forest
// (any number of refinement steps apart).
bool is_refinement(const Mesh &coarse, const Mesh &fine);

// Barycentric coordinates of x with respect to triangle t.
Eigen::Vector3d barycentric(const Mesh &mesh, Index t, const Vec2 &x);

// Plain text: "V T", V lines "x y", T lines "v0 v1 v2 refedge generation".
void write_mesh(std::ostream &out, const Mesh &mesh);
Mesh read_mesh(std::istream &in);
void write_mesh_file(const std::string &filename, const Mesh &mesh);
Mesh read_mesh_file(const std::string &filename);
// Legacy VTK ASCII unstructured grid, optional per-cell scalar.
void write_vtk(std::ostream &out, const Mesh &mesh, const std::vector<double> *cell_data = nullptr,
               const std::string &cell_data_name = "data");

}  // namespace mafem
