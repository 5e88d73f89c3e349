// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mafem/adapt.hpp"
#include "oracles.hpp"

using namespace mafem;

namespace
{

using oracle::minimal_bulk_size;

// Distance from the origin to triangle t.
double distance_to_origin(const Mesh &m, Index t)
{
  if (barycentric(m, t, Vec2::Zero()).minCoeff() >= 0)
  {
    return 0;
  }
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i)
  {
    const Vec2 a = m.vertices[m.triangles[t][i]], b = m.vertices[m.triangles[t][(i + 1) % 3]];
    const double s = std::clamp(-a.dot(b - a) / (b - a).squaredNorm(), 0.0, 1.0);
    best = std::min(best, (a + s * (b - a)).norm());
  }
  return best;
}

AfemConfig quick_config()
{
  AfemConfig cfg;
  cfg.theta = 0.5;
  cfg.cluster = {0, 1};
  cfg.stop.max_levels = 12;
  cfg.record_timing = false;
  return cfg;
}

}  // namespace

TEST_CASE("Doerfler marking is minimal")
{
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> uni(0, 1);
  for (int trial = 0; trial < 200; ++trial)
  {
    const int n = 1 + trial % 15;
    Vec eta(n);
    for (int i = 0; i < n; ++i)
    {
      // Quantized values produce ties.
      eta(i) = trial % 3 == 0 ? std::floor(uni(rng) * 4) : uni(rng);
    }
    if (eta.sum() == 0)
    {
      eta(0) = 1;
    }
    const double theta = 0.05 + 0.95 * uni(rng);
    const MarkSet marked = dorfler_mark(eta, theta);
    CHECK(satisfies_bulk_criterion(eta, marked, theta));
    CHECK(static_cast<int>(marked.size()) == minimal_bulk_size(eta, theta));
    // Descending values, ties by ascending id.
    for (std::size_t i = 1; i < marked.size(); ++i)
    {
      const bool ordered = eta(marked[i - 1]) > eta(marked[i]) ||
                           (eta(marked[i - 1]) == eta(marked[i]) && marked[i - 1] < marked[i]);
      CHECK(ordered);
    }
  }
}

TEST_CASE("Doerfler marking edge cases")
{
  CHECK(dorfler_mark(Vec::Zero(5), 0.5).empty());
  const Vec eta = (Vec(4) << 1, 1, 1, 1).finished();
  CHECK(dorfler_mark(eta, 0.5) == MarkSet{0, 1});
  CHECK(dorfler_mark(eta, 1.0) == MarkSet{0, 1, 2, 3});
  const Vec with_zero = (Vec(3) << 0, 2, 1).finished();
  CHECK(dorfler_mark(with_zero, 1.0) == MarkSet{1, 2});
  CHECK_THROWS_AS(dorfler_mark(eta, 0.0), ConfigError);
  CHECK_THROWS_AS(dorfler_mark(eta, 1.5), ConfigError);
  CHECK_FALSE(satisfies_bulk_criterion(eta, {0}, 0.5));
}

TEST_CASE("configuration validation")
{
  AfemConfig cfg = quick_config();
  cfg.theta = 0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg.theta = 1.01;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = quick_config();
  cfg.degree = {Family::BDM, 0};
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = quick_config();
  cfg.cluster.size = 0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  CHECK_THROWS_AS(run_afem(cfg, load_initial_mesh(Domain::UnitSquare)), ConfigError);
}

TEST_CASE("AFEM loop on the L-shape")
{
  const AfemConfig cfg = quick_config();
  int observed = 0;
  const AfemHistory h = run_afem(cfg, load_initial_mesh(Domain::LShape),
                                 [&](const LevelState &s, LevelRecord &rec) {
                                   ++observed;
                                   CHECK(s.mesh.num_triangles() == rec.card_T);
                                   CHECK(satisfies_bulk_criterion(s.indicators.element_sums(),
                                                                  s.marked, cfg.theta));
                                   if (s.level >= 3)
                                   {
                                     // Marks concentrate at the reentrant corner: the fraction of
                                     // marked triangles within 1/4 of the origin exceeds the area
                                     // fraction 3/4 pi (1/4)^2 / 3 of that neighbourhood.
                                     int near = 0;
                                     for (Index t : s.marked)
                                     {
                                       near += distance_to_origin(s.mesh, t) < 0.25 ? 1 : 0;
                                     }
                                     const double area_fraction = 0.75 * std::numbers::pi / 16 / 3;
                                     CHECK(static_cast<double>(near) / s.marked.size() > area_fraction);
                                   }
                                 });
  REQUIRE(h.levels.size() == 13);
  CHECK(observed == 13);
  CHECK(h.status == AfemStatus::Completed);
  CHECK(h.message == "max_levels");
  for (std::size_t l = 1; l < h.levels.size(); ++l)
  {
    CHECK(h.levels[l].card_T > h.levels[l - 1].card_T);
  }
  CHECK(h.levels.back().eta2 < h.levels.front().eta2);
  // The discrete eigenvalue approaches lambda_1 = 9.6397...
  CHECK(std::abs(h.levels.back().lambda[0] - 9.6397) < 0.1);
  CHECK(h.levels.back().wall_ms == 0.0);

  // Deterministic with timing off.
  const AfemHistory again = run_afem(cfg, load_initial_mesh(Domain::LShape));
  CHECK(again.levels == h.levels);
}

TEST_CASE("stopping rules")
{
  AfemConfig cfg = quick_config();
  cfg.stop.max_levels = 50;
  cfg.stop.max_dofs = 300;
  const AfemHistory h = run_afem(cfg, load_initial_mesh(Domain::UnitSquare));
  CHECK(h.message == "max_dofs");
  for (const auto &rec : h.levels)
  {
    CHECK(rec.dofs() <= 300);
  }

  cfg = quick_config();
  cfg.stop.eta2_tolerance = 1e300;
  CHECK(run_afem(cfg, load_initial_mesh(Domain::UnitSquare)).levels.size() == 1);

  // A cluster splitting the degenerate pair lambda_2 = lambda_3 on the square.
  cfg = quick_config();
  cfg.cluster = {1, 1};
  cfg.stop.max_levels = 4;
  const AfemHistory split = run_afem(cfg, uniform_refine(load_initial_mesh(Domain::UnitSquare), 1));
  CHECK(split.status == AfemStatus::SeparationLost);
  CHECK(split.levels.size() == 1);
}

TEST_CASE("history CSV round trip")
{
  AfemConfig cfg = quick_config();
  cfg.cluster = {1, 2};
  cfg.stop.max_levels = 2;
  AfemHistory h = run_afem(cfg, uniform_refine(load_initial_mesh(Domain::UnitSquare), 1),
                           [](const LevelState &, LevelRecord &rec) {
                             rec.d2 = 0.25;
                             rec.mu2 = 1.5;
                           });
  h.has_diagnostics = true;
  std::stringstream ss;
  write_history_csv(ss, h);
  CHECK(ss.str().rfind(history_header(2, true) + "\n", 0) == 0);
  const AfemHistory back = read_history_csv(ss);
  CHECK(back.cluster_size == 2);
  CHECK(back.has_diagnostics);
  CHECK(back.levels == h.levels);

  std::stringstream short_row(history_header(1, false) + "\n0,2,5,2,19.7\n");
  CHECK_THROWS_AS(read_history_csv(short_row), Error);
  std::stringstream bad_header("level,foo\n");
  CHECK_THROWS_AS(read_history_csv(bad_header), Error);
}
