// SPDX-License-Identifier: Apache-2.0

#include "mafem/adapt.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

namespace mafem
{

void validate(const AfemConfig &config)
{
  if (!(config.theta > 0 && config.theta <= 1))
  {
    throw ConfigError("theta must lie in (0,1], got " + std::to_string(config.theta));
  }
  if (config.cluster.n < 0 || config.cluster.size < 1)
  {
    throw ConfigError("cluster needs n >= 0 and size >= 1");
  }
  if (config.stop.max_levels < 0 || config.stop.max_dofs < 1)
  {
    throw ConfigError("stop criteria must be non-negative");
  }
  require_supported(config.degree);
}

MarkSet dorfler_mark(const Vec &element_indicators, double theta)
{
  if (!(theta > 0 && theta <= 1))
  {
    throw ConfigError("theta must lie in (0,1]");
  }
  const Index n = static_cast<Index>(element_indicators.size());
  if ((element_indicators.array() < 0).any())
  {
    throw Error("dorfler_mark: negative indicator");
  }
  const double total = element_indicators.sum();
  if (!(total > 0))
  {
    return {};
  }
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return element_indicators(a) > element_indicators(b);
  });
  MarkSet marked;
  double sum = 0;
  const double target = theta * total;
  for (Index t : order)
  {
    if (sum >= target || element_indicators(t) <= 0)
    {
      break;
    }
    marked.push_back(t);
    sum += element_indicators(t);
  }
  return marked;
}

MarkSet dorfler_mark(const IndicatorField &field, double theta)
{
  return dorfler_mark(field.element_sums(), theta);
}

bool satisfies_bulk_criterion(const Vec &element_indicators, const MarkSet &marked, double theta)
{
  double sum = 0;
  for (Index t : marked)
  {
    sum += element_indicators(t);
  }
  // Summation order differs from the marking pass; allow rounding.
  return theta * element_indicators.sum() <= sum * (1 + 1e-12);
}

namespace
{

Index count_dofs(const Mesh &mesh, const FeDegree &degree)
{
  const Index ne = build_edge_topology(mesh).num_edges();
  const Index nt = mesh.num_triangles();
  const int k = degree.k;
  return (k + 1) * ne + k * (k + 1) * nt + local_u_dofs(degree) * nt;
}

}  // namespace

AfemHistory run_afem(const AfemConfig &config, const Mesh &initial, const LevelObserver &observer)
{
  validate(config);
  AfemHistory history;
  history.cluster_size = config.cluster.size;
  history.has_diagnostics = config.diagnostics;

  Mesh mesh = initial;
  for (int level = 0;; ++level)
  {
    const auto start = std::chrono::steady_clock::now();
    const DofMap dofs = build_dofmap(mesh, config.degree);
    LevelRecord rec;
    rec.level = level;
    rec.card_T = mesh.num_triangles();
    rec.n_sigma = dofs.n_sigma;
    rec.n_u = dofs.n_u;

    std::optional<MixedSolver> solver;
    EigenCluster cluster;
    try
    {
      solver.emplace(assemble(mesh, dofs));
      cluster = solve_cluster(*solver, config.cluster, config.solver);
    }
    catch (const SolverError &e)
    {
      history.status = AfemStatus::SolverFailure;
      history.message = "level " + std::to_string(level) + ": " + e.what();
      return history;
    }
    rec.lambda = cluster.values;

    const IndicatorField field = estimate(mesh, dofs, cluster);
    rec.eta2 = aggregate(field);
    const MarkSet marked = dorfler_mark(field, config.theta);
    rec.card_M = static_cast<Index>(marked.size());
    if (config.record_timing)
    {
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                        .count();
    }
    if (observer)
    {
      observer(LevelState{level, mesh, dofs, *solver, cluster, field, marked}, rec);
    }
    history.levels.push_back(rec);

    if (!cluster.separated)
    {
      history.status = AfemStatus::SeparationLost;
      history.message = "level " + std::to_string(level) + ": cluster separation guard violated";
      return history;
    }
    if (marked.empty())
    {
      history.status = AfemStatus::Converged;
      history.message = "all indicators vanish";
      return history;
    }
    if (level >= config.stop.max_levels)
    {
      history.message = "max_levels";
      return history;
    }
    if (rec.eta2 <= config.stop.eta2_tolerance)
    {
      history.message = "eta2_tolerance";
      return history;
    }
    Mesh next = refine(mesh, marked);
    if (count_dofs(next, config.degree) > config.stop.max_dofs)
    {
      history.message = "max_dofs";
      return history;
    }
    mesh = std::move(next);
  }
}

}  // namespace mafem
