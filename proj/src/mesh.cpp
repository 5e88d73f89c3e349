// SPDX-License-Identifier: Apache-2.0

#include "mafem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <unordered_map>

namespace mafem
{

namespace
{

std::uint64_t edge_key(Index a, Index b)
{
  if (a > b)
  {
    std::swap(a, b);
  }
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

double triangle_area(const Vec2 &a, const Vec2 &b, const Vec2 &c)
{
  const Vec2 u = b - a, v = c - a;
  return 0.5 * (u.x() * v.y() - u.y() * v.x());
}

void check_triangles(const std::vector<Vec2> &vertices, const std::vector<Triangle> &triangles)
{
  if (triangles.empty())
  {
    throw MeshError("mesh has no triangles");
  }
  const auto nv = static_cast<Index>(vertices.size());
  for (std::size_t t = 0; t < triangles.size(); ++t)
  {
    const auto &tri = triangles[t];
    for (Index v : tri)
    {
      if (v < 0 || v >= nv)
      {
        throw MeshError("triangle " + std::to_string(t) + " references missing vertex " +
                        std::to_string(v));
      }
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
    {
      throw MeshError("triangle " + std::to_string(t) + " repeats a vertex");
    }
    const Vec2 &a = vertices[tri[0]], &b = vertices[tri[1]], &c = vertices[tri[2]];
    const double scale = std::max({(b - a).squaredNorm(), (c - b).squaredNorm(),
                                   (a - c).squaredNorm()});
    const double area = triangle_area(a, b, c);
    if (area <= 1e-14 * scale)
    {
      throw MeshError("triangle " + std::to_string(t) +
                      (area < 0 ? " is inverted (clockwise)" : " is degenerate"));
    }
  }
}

// Rotate so the longest edge becomes local edge 0. Ties go to the edge with the
// lexicographically smallest sorted vertex pair, so shared edges break ties alike.
Triangle rotate_longest_edge_first(const std::vector<Vec2> &vertices, const Triangle &tri)
{
  int best = 0;
  double best_len = -1;
  std::uint64_t best_key = 0;
  for (int i = 0; i < 3; ++i)
  {
    const Index a = tri[(i + 1) % 3], b = tri[(i + 2) % 3];
    const double len = (vertices[a] - vertices[b]).norm();
    const std::uint64_t key = edge_key(a, b);
    if (len > best_len * (1 + 1e-12) ||
        (std::abs(len - best_len) <= 1e-12 * best_len && key < best_key))
    {
      best = i;
      best_len = len;
      best_key = key;
    }
  }
  return {tri[best], tri[(best + 1) % 3], tri[(best + 2) % 3]};
}

Mesh make_root_mesh(std::vector<Vec2> vertices, std::vector<Triangle> triangles,
                    std::vector<int> generation)
{
  Mesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.triangles = std::move(triangles);
  const auto nt = mesh.triangles.size();
  mesh.generation = std::move(generation);
  mesh.parent.assign(nt, std::nullopt);
  mesh.root.resize(nt);
  for (std::size_t t = 0; t < nt; ++t)
  {
    mesh.root[t] = static_cast<Index>(t);
  }
  mesh.path.assign(nt, std::string());
  mesh.initial = std::make_shared<const InitialMesh>(InitialMesh{mesh.vertices, mesh.triangles});
  if (!is_conforming(mesh))
  {
    throw MeshError("triangulation is not conforming");
  }
  return mesh;
}

// Recursive bisection of one triangle along marked edges. Children of
// (v0,v1,v2) with midpoint m of (v1,v2) are (m,v0,v1) and (m,v2,v0).
template <typename MidpointLookup, typename Emit>
void bisect_recursive(const Triangle &tri, int generation, std::string &path,
                      const MidpointLookup &midpoint, const Emit &emit)
{
  const Index m = midpoint(tri[1], tri[2]);
  if (m < 0)
  {
    emit(tri, generation, path);
    return;
  }
  path.push_back('0');
  bisect_recursive(Triangle{m, tri[0], tri[1]}, generation + 1, path, midpoint, emit);
  path.back() = '1';
  bisect_recursive(Triangle{m, tri[2], tri[0]}, generation + 1, path, midpoint, emit);
  path.pop_back();
}

}  // namespace

std::optional<Domain> parse_domain(const std::string &name)
{
  if (name == "square" || name == "unit_square")
  {
    return Domain::UnitSquare;
  }
  if (name == "lshape" || name == "l_shape" || name == "L")
  {
    return Domain::LShape;
  }
  return std::nullopt;
}

Mesh load_initial_mesh(std::vector<Vec2> vertices, std::vector<Triangle> triangles)
{
  check_triangles(vertices, triangles);
  for (auto &tri : triangles)
  {
    tri = rotate_longest_edge_first(vertices, tri);
  }
  std::vector<int> generation(triangles.size(), 0);
  return make_root_mesh(std::move(vertices), std::move(triangles), std::move(generation));
}

Mesh load_initial_mesh(Domain domain)
{
  switch (domain)
  {
    case Domain::UnitSquare:
      return load_initial_mesh({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{0, 1, 2}, {0, 2, 3}});
    case Domain::LShape:
      // (-1,1)^2 minus [0,1]x[-1,0]: three unit squares split by diagonals.
      return load_initial_mesh(
          {{-1, -1}, {0, -1}, {-1, 0}, {0, 0}, {1, 0}, {-1, 1}, {0, 1}, {1, 1}},
          {{0, 1, 3}, {0, 3, 2}, {2, 3, 5}, {3, 6, 5}, {3, 4, 7}, {3, 7, 6}});
  }
  throw MeshError("unknown domain");
}

EdgeTopology build_edge_topology(const Mesh &mesh)
{
  const Index nt = mesh.num_triangles();
  struct Entry
  {
    std::uint64_t key;
    Index triangle;
    int local;
  };
  std::vector<Entry> entries;
  entries.reserve(3 * static_cast<std::size_t>(nt));
  for (Index t = 0; t < nt; ++t)
  {
    const auto &tri = mesh.triangles[t];
    for (int i = 0; i < 3; ++i)
    {
      entries.push_back({edge_key(tri[(i + 1) % 3], tri[(i + 2) % 3]), t, i});
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry &a, const Entry &b) {
    return a.key != b.key ? a.key < b.key : a.triangle < b.triangle;
  });

  EdgeTopology topo;
  topo.edge_of_triangle.resize(nt);
  for (std::size_t i = 0; i < entries.size();)
  {
    std::size_t j = i;
    while (j < entries.size() && entries[j].key == entries[i].key)
    {
      ++j;
    }
    if (j - i > 2)
    {
      throw MeshError("edge shared by more than two triangles");
    }
    const auto e = static_cast<Index>(topo.edges.size());
    const Index a = static_cast<Index>(entries[i].key >> 32);
    const Index b = static_cast<Index>(entries[i].key & 0xffffffffu);
    topo.edges.push_back({a, b});
    const Vec2 d = mesh.vertices[b] - mesh.vertices[a];
    topo.length.push_back(d.norm());
    topo.tangent.push_back(d / d.norm());
    std::array<Index, 2> tris{-1, -1};
    for (std::size_t k = i; k < j; ++k)
    {
      const auto &ent = entries[k];
      tris[k - i] = ent.triangle;
      const auto &tri = mesh.triangles[ent.triangle];
      const int sign = tri[(ent.local + 1) % 3] == a ? 1 : -1;
      topo.edge_of_triangle[ent.triangle][ent.local] = {e, sign};
    }
    topo.triangles_of_edge.push_back(tris);
    i = j;
  }
  return topo;
}

Mesh refine(const Mesh &mesh, const MarkSet &marked)
{
  if (!is_valid_mark_set(mesh, marked))
  {
    throw MeshError("invalid mark set");
  }
  const EdgeTopology topo = build_edge_topology(mesh);
  const Index ne = topo.num_edges();
  std::vector<char> edge_marked(ne, 0);
  std::vector<Index> worklist;

  auto mark_edge = [&](Index e) {
    if (!edge_marked[e])
    {
      edge_marked[e] = 1;
      for (Index t : topo.triangles_of_edge[e])
      {
        if (t >= 0)
        {
          worklist.push_back(t);
        }
      }
    }
  };

  for (Index t : marked)
  {
    mark_edge(topo.edge_of_triangle[t][0].edge);
  }
  // Closure: a triangle with any marked edge must bisect its refinement edge.
  while (!worklist.empty())
  {
    const Index t = worklist.back();
    worklist.pop_back();
    const auto &inc = topo.edge_of_triangle[t];
    if (edge_marked[inc[1].edge] || edge_marked[inc[2].edge])
    {
      mark_edge(inc[0].edge);
    }
  }

  Mesh out;
  out.vertices = mesh.vertices;
  out.initial = mesh.initial;
  std::unordered_map<std::uint64_t, Index> midpoints;
  for (Index e = 0; e < ne; ++e)
  {
    if (edge_marked[e])
    {
      const auto [a, b] = topo.edges[e];
      midpoints.emplace(edge_key(a, b), out.num_vertices());
      out.vertices.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
    }
  }
  auto midpoint = [&](Index a, Index b) -> Index {
    const auto it = midpoints.find(edge_key(a, b));
    return it == midpoints.end() ? -1 : it->second;
  };

  const auto reserve = mesh.triangles.size() + 2 * midpoints.size();
  out.triangles.reserve(reserve);
  for (Index t = 0; t < mesh.num_triangles(); ++t)
  {
    std::string path = mesh.path[t];
    bisect_recursive(mesh.triangles[t], mesh.generation[t], path, midpoint,
                     [&](const Triangle &tri, int gen, const std::string &p) {
                       out.triangles.push_back(tri);
                       out.generation.push_back(gen);
                       out.parent.emplace_back(t);
                       out.root.push_back(mesh.root[t]);
                       out.path.push_back(p);
                     });
  }
  return out;
}

Mesh refine_all(const Mesh &mesh)
{
  MarkSet all(mesh.triangles.size());
  for (std::size_t t = 0; t < all.size(); ++t)
  {
    all[t] = static_cast<Index>(t);
  }
  return refine(mesh, all);
}

Mesh uniform_refine(const Mesh &mesh, int times)
{
  Mesh out = mesh;
  for (int i = 0; i < times; ++i)
  {
    const Mesh once = refine_all(out);
    Mesh twice = refine_all(once);
    // Parents point into the input of this sweep.
    for (auto &p : twice.parent)
    {
      p = once.parent[*p];
    }
    out = std::move(twice);
  }
  return out;
}

Mesh overlay(const Mesh &t1, const Mesh &t2)
{
  if (!t1.initial || !t2.initial)
  {
    throw MeshError("overlay requires meshes with an initial mesh");
  }
  const InitialMesh &base = *t1.initial;
  if (t1.initial != t2.initial &&
      (base.vertices != t2.initial->vertices || base.triangles != t2.initial->triangles))
  {
    throw MeshError("overlay inputs do not share an initial mesh");
  }

  // Leaf paths per root; a node of the union forest is internal iff some
  // stored path extends it.
  std::vector<std::vector<std::string>> leaves(base.triangles.size());
  for (const Mesh *m : {&t1, &t2})
  {
    for (Index t = 0; t < m->num_triangles(); ++t)
    {
      leaves[m->root[t]].push_back(m->path[t]);
    }
  }
  for (auto &l : leaves)
  {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }

  Mesh out;
  out.vertices = base.vertices;
  out.initial = t1.initial;
  std::unordered_map<std::uint64_t, Index> midpoints;
  auto midpoint = [&](Index a, Index b) {
    const auto [it, inserted] = midpoints.emplace(edge_key(a, b), out.num_vertices());
    if (inserted)
    {
      out.vertices.push_back(0.5 * (out.vertices[a] + out.vertices[b]));
    }
    return it->second;
  };

  for (std::size_t r = 0; r < base.triangles.size(); ++r)
  {
    const auto &paths = leaves[r];
    auto is_internal = [&](const std::string &p) {
      auto it = std::lower_bound(paths.begin(), paths.end(), p);
      for (; it != paths.end() && it->compare(0, p.size(), p) == 0; ++it)
      {
        if (it->size() > p.size())
        {
          return true;
        }
      }
      return false;
    };
    std::string path;
    auto visit = [&](auto &&self, const Triangle &tri) -> void {
      if (!is_internal(path))
      {
        out.triangles.push_back(tri);
        out.generation.push_back(static_cast<int>(path.size()));
        out.parent.emplace_back(std::nullopt);
        out.root.push_back(static_cast<Index>(r));
        out.path.push_back(path);
        return;
      }
      const Index m = midpoint(tri[1], tri[2]);
      path.push_back('0');
      self(self, Triangle{m, tri[0], tri[1]});
      path.back() = '1';
      self(self, Triangle{m, tri[2], tri[0]});
      path.pop_back();
    };
    visit(visit, base.triangles[r]);
  }
  if (!is_conforming(out))
  {
    throw MeshError("overlay produced a non-conforming mesh");
  }
  return out;
}

double signed_area(const Mesh &mesh, Index t)
{
  const auto &tri = mesh.triangles[t];
  return triangle_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
}

double diameter(const Mesh &mesh, Index t)
{
  const auto &tri = mesh.triangles[t];
  const Vec2 &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]], &c = mesh.vertices[tri[2]];
  return std::max({(b - a).norm(), (c - b).norm(), (a - c).norm()});
}

double max_diameter(const Mesh &mesh)
{
  double h = 0;
  for (Index t = 0; t < mesh.num_triangles(); ++t)
  {
    h = std::max(h, diameter(mesh, t));
  }
  return h;
}

double min_angle(const Mesh &mesh)
{
  double result = std::numbers::pi;
  for (const auto &tri : mesh.triangles)
  {
    for (int i = 0; i < 3; ++i)
    {
      const Vec2 u = mesh.vertices[tri[(i + 1) % 3]] - mesh.vertices[tri[i]];
      const Vec2 v = mesh.vertices[tri[(i + 2) % 3]] - mesh.vertices[tri[i]];
      const double cross = u.x() * v.y() - u.y() * v.x();
      result = std::min(result, std::atan2(std::abs(cross), u.dot(v)));
    }
  }
  return result;
}

bool is_conforming(const Mesh &mesh)
{
  std::unordered_map<std::uint64_t, int> count;
  count.reserve(3 * mesh.triangles.size());
  for (const auto &tri : mesh.triangles)
  {
    for (int i = 0; i < 3; ++i)
    {
      if (++count[edge_key(tri[(i + 1) % 3], tri[(i + 2) % 3])] > 2)
      {
        return false;
      }
    }
  }

  // Hanging vertices can only sit on edges seen from one side.
  Vec2 lo = mesh.vertices.front(), hi = lo;
  for (const auto &v : mesh.vertices)
  {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const double extent = std::max((hi - lo).maxCoeff(), 1e-300);
  const int cells = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.vertices.size()))));
  const double cell = extent / cells * (1 + 1e-9);
  auto cell_of = [&](double x, double origin) {
    return std::clamp(static_cast<int>((x - origin) / cell), 0, cells - 1);
  };
  std::vector<std::vector<Index>> buckets(static_cast<std::size_t>(cells) * cells);
  for (Index v = 0; v < mesh.num_vertices(); ++v)
  {
    const auto &p = mesh.vertices[v];
    buckets[cell_of(p.x(), lo.x()) * cells + cell_of(p.y(), lo.y())].push_back(v);
  }

  for (const auto &[key, n] : count)
  {
    if (n != 1)
    {
      continue;
    }
    const Index a = static_cast<Index>(key >> 32);
    const Index b = static_cast<Index>(key & 0xffffffffu);
    const Vec2 pa = mesh.vertices[a], pb = mesh.vertices[b];
    const Vec2 d = pb - pa;
    const double len2 = d.squaredNorm();
    const int x0 = cell_of(std::min(pa.x(), pb.x()), lo.x()), x1 = cell_of(std::max(pa.x(), pb.x()), lo.x());
    const int y0 = cell_of(std::min(pa.y(), pb.y()), lo.y()), y1 = cell_of(std::max(pa.y(), pb.y()), lo.y());
    for (int cx = x0; cx <= x1; ++cx)
    {
      for (int cy = y0; cy <= y1; ++cy)
      {
        for (Index v : buckets[cx * cells + cy])
        {
          if (v == a || v == b)
          {
            continue;
          }
          const Vec2 w = mesh.vertices[v] - pa;
          const double s = w.dot(d) / len2;
          const double cross = d.x() * w.y() - d.y() * w.x();
          if (s > 1e-12 && s < 1 - 1e-12 && std::abs(cross) <= 1e-12 * len2)
          {
            return false;
          }
        }
      }
    }
  }
  return true;
}

bool is_valid_mark_set(const Mesh &mesh, const MarkSet &marked)
{
  std::vector<char> seen(mesh.triangles.size(), 0);
  for (Index t : marked)
  {
    if (t < 0 || t >= mesh.num_triangles() || seen[t])
    {
      return false;
    }
    seen[t] = 1;
  }
  return true;
}

Eigen::Vector3d barycentric(const Mesh &mesh, Index t, const Vec2 &x)
{
  const auto &tri = mesh.triangles[t];
  const Vec2 &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]], &c = mesh.vertices[tri[2]];
  Mat2 jac;
  jac.col(0) = b - a;
  jac.col(1) = c - a;
  const Vec2 ref = jac.inverse() * (x - a);
  return {1 - ref.x() - ref.y(), ref.x(), ref.y()};
}

bool is_nested(const Mesh &coarse, const Mesh &fine, double tol)
{
  for (Index t = 0; t < fine.num_triangles(); ++t)
  {
    if (!fine.parent[t] || *fine.parent[t] < 0 || *fine.parent[t] >= coarse.num_triangles())
    {
      return false;
    }
    for (Index v : fine.triangles[t])
    {
      if (barycentric(coarse, *fine.parent[t], fine.vertices[v]).minCoeff() < -tol)
      {
        return false;
      }
    }
  }
  return true;
}

bool is_refinement(const Mesh &coarse, const Mesh &fine)
{
  std::set<std::pair<Index, std::string>> leaves;
  for (Index t = 0; t < coarse.num_triangles(); ++t)
  {
    leaves.emplace(coarse.root[t], coarse.path[t]);
  }
  for (Index t = 0; t < fine.num_triangles(); ++t)
  {
    bool found = false;
    for (std::size_t len = 0; len <= fine.path[t].size() && !found; ++len)
    {
      found = leaves.count({fine.root[t], fine.path[t].substr(0, len)}) > 0;
    }
    if (!found)
    {
      return false;
    }
  }
  return true;
}

namespace detail
{

Mesh make_mesh_with_refinement_edges(std::vector<Vec2> vertices, std::vector<Triangle> triangles,
                                     const std::vector<int> &refedge, std::vector<int> generation)
{
  check_triangles(vertices, triangles);
  for (std::size_t t = 0; t < triangles.size(); ++t)
  {
    const int r = refedge[t];
    if (r < 0 || r > 2)
    {
      throw MeshError("refinement edge index must be 0, 1 or 2");
    }
    const auto tri = triangles[t];
    triangles[t] = {tri[r], tri[(r + 1) % 3], tri[(r + 2) % 3]};
  }
  return make_root_mesh(std::move(vertices), std::move(triangles), std::move(generation));
}

}  // namespace detail

}  // namespace mafem
