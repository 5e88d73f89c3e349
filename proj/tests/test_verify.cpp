// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "doctest.h"
#include "mafem/verify.hpp"
#include "oracles.hpp"

using namespace mafem;

namespace
{

constexpr double pi = std::numbers::pi;

struct Level
{
  Mesh mesh;
  DofMap dofs;
  std::unique_ptr<MixedSolver> solver;
  EigenCluster cluster;

  Level(const Mesh &m, const ClusterSpec &spec, int k = 0)
      : mesh(m), dofs(build_dofmap(mesh, {Family::RT, k})),
        solver(std::make_unique<MixedSolver>(assemble(mesh, dofs))),
        cluster(solve_cluster(*solver, spec))
  {
  }
};

Mesh square(int level) { return uniform_refine(load_initial_mesh(Domain::UnitSquare), level); }

double cross_inner(const Level &l, const ExactEigenpair &e, const Vec &u, const Vec &s)
{
  return oracle::cross_inner(l.mesh, l.dofs, e, u, s);
}

}  // namespace

TEST_CASE("square reference eigenpairs")
{
  const auto pairs = square_eigenpairs(6);
  const double expected[] = {2, 5, 5, 8, 10, 10};
  for (int i = 0; i < 6; ++i)
  {
    CHECK(pairs[i].lambda == doctest::Approx(expected[i] * pi * pi));
  }
  CHECK(pairs[1].label == "u_1,2");
  CHECK(pairs[2].label == "u_2,1");
  const auto cluster = square_cluster({1, 2});
  REQUIRE(cluster.size() == 2);
  CHECK(cluster[0].label == "u_1,2");

  // -Laplace u = lambda u by central differences; grad by differences.
  const double h = 1e-4;
  for (const auto &e : pairs)
  {
    for (const Vec2 x : {Vec2(0.3, 0.7), Vec2(0.81, 0.12)})
    {
      const Vec2 dx(h, 0), dy(0, h);
      const double lap = (e.u(x + dx) + e.u(x - dx) + e.u(x + dy) + e.u(x - dy) - 4 * e.u(x)) / (h * h);
      CHECK(-lap == doctest::Approx(e.lambda * e.u(x)).epsilon(1e-5).scale(e.lambda));
      const Vec2 g((e.u(x + dx) - e.u(x - dx)) / (2 * h), (e.u(x + dy) - e.u(x - dy)) / (2 * h));
      CHECK((g - e.grad_u(x)).norm() < 1e-5 * e.lambda);
    }
  }
}

TEST_CASE("d(u, 0)^2 = 1 + lambda for normalized eigenfunctions")
{
  const Level l(square(3), {0, 1});
  const FieldEvaluator zero = [](Index, const Eigen::Vector3d &, const Vec2 &) {
    return FieldValue{};
  };
  DistanceOptions opts;
  opts.quad_order = 12;
  for (const auto &e : square_eigenpairs(4))
  {
    CHECK(distance2(l.mesh, 0, continuous_field(e), zero, opts) ==
          doctest::Approx(1 + e.lambda).epsilon(1e-8));
    CHECK(distance2(l.mesh, 0, continuous_field(e), continuous_field(e), opts) == 0.0);
  }
}

TEST_CASE("discrete distance is a metric")
{
  const Level l(square(2), {0, 4});
  const auto &sys = l.solver->system();
  std::mt19937 rng(5);
  std::normal_distribution<double> g;
  auto random_pair = [&]() {
    Vec u(l.dofs.n_u);
    for (Index i = 0; i < u.size(); ++i)
    {
      u(i) = g(rng);
    }
    return std::make_pair(u, discrete_gradient(*l.solver, u));
  };
  for (int trial = 0; trial < 20; ++trial)
  {
    const auto [u1, s1] = random_pair();
    const auto [u2, s2] = random_pair();
    const auto [u3, s3] = random_pair();
    const double d12 = std::sqrt(distance2(sys, u1, s1, u2, s2));
    const double d23 = std::sqrt(distance2(sys, u2, s2, u3, s3));
    const double d13 = std::sqrt(distance2(sys, u1, s1, u3, s3));
    CHECK(d13 <= d12 + d23 + 1e-12);
    CHECK(distance2(sys, u1, s1, u1, s1) == 0.0);
    CHECK(d12 == doctest::Approx(std::sqrt(distance2(sys, u2, s2, u1, s1))));
  }
  // The quadrature version agrees with the matrix version for discrete arguments.
  const auto [u1, s1] = random_pair();
  const auto [u2, s2] = random_pair();
  CHECK(distance2(l.mesh, 0, discrete_field(l.mesh, l.dofs, u1, s1),
                  discrete_field(l.mesh, l.dofs, u2, s2)) ==
        doctest::Approx(distance2(sys, u1, s1, u2, s2)).epsilon(1e-10));
}

TEST_CASE("Lambda_h")
{
  const Level l(square(2), {1, 2});
  const auto &sys = l.solver->system();
  const auto exact = square_cluster({1, 2});

  SUBCASE("discrete eigenfunctions are fixed points")
  {
    for (int j = 0; j < 2; ++j)
    {
      const ProjectedFunction p = lambda_op(*l.solver, l.cluster, l.cluster.u[j], l.cluster.values[j]);
      CHECK((p.u - l.cluster.u[j]).norm() < 1e-10);
      CHECK((p.sigma - l.cluster.sigma[j]).norm() < 1e-10 * l.cluster.sigma[j].norm());
    }
  }
  SUBCASE("P^W and T^lambda commute")
  {
    for (const auto &e : exact)
    {
      const Vec g = l2_project(l.mesh, l.dofs, e.u, 8);
      const Vec t_then_p = project_to_cluster(sys, l.cluster, solve_source(*l.solver, g, e.lambda).second).u;
      const Vec p_then_t = solve_source(*l.solver, project_to_cluster(sys, l.cluster, g).u, e.lambda).second;
      CHECK((t_then_p - p_then_t).norm() < 1e-10 * t_then_p.norm());
    }
  }
  SUBCASE("range, coefficients, and G_h")
  {
    for (const auto &e : exact)
    {
      const ProjectedFunction p = lambda_op(l.mesh, l.dofs, *l.solver, l.cluster, e, 12);
      // Coefficients lambda / lambda_{h,j} (u, u_{h,j}) with (u, u_{h,j}) from an independent loop.
      for (int j = 0; j < 2; ++j)
      {
        const double uu = cross_inner(l, e, l.cluster.u[j], Vec::Zero(l.dofs.n_sigma));
        CHECK(p.gamma(j) == doctest::Approx(e.lambda / l.cluster.values[j] * uu).epsilon(1e-9));
      }
      // The projection residual of T_h u is M-orthogonal to W_h.
      const Vec load = load_vector(l.mesh, l.dofs, e.u, 12);
      const Vec w = source_from_load(*l.solver, load, e.lambda).second;
      for (int j = 0; j < 2; ++j)
      {
        CHECK(std::abs(l.cluster.u[j].dot(sys.M * (w - p.u))) < 1e-12 * w.norm());
      }
      CHECK((p.sigma - discrete_gradient(*l.solver, p.u)).norm() < 1e-10 * p.sigma.norm());
    }
  }
}

TEST_CASE("||u - Lambda_h u|| converges at rate h for RT_0")
{
  const auto e = square_eigenpair(1, 1);
  std::vector<double> h, err;
  for (int level = 2; level <= 5; ++level)
  {
    const Level l(square(level), {0, 1});
    const ProjectedFunction p = lambda_op(l.mesh, l.dofs, *l.solver, l.cluster, e);
    DistanceOptions values;
    const double d = distance2(l.mesh, 0, continuous_field(e),
                               [&](Index t, const Eigen::Vector3d &b, const Vec2 &x) {
                                 return FieldValue{evaluate_u(l.mesh, l.dofs, p.u, t, b).value,
                                                   e.grad_u(x)};
                               });
    h.push_back(max_diameter(l.mesh));
    err.push_back(std::sqrt(d));
  }
  CHECK(fit_rate(h, err).slope == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("delta by reduction matches a grid search")
{
  // Coarse mesh with dim W_h = 2.
  const Level l(square(1), {1, 2});
  const auto exact = square_cluster({1, 2});
  const auto &sys = l.solver->system();
  DistanceOptions opts;
  opts.quad_order = 14;
  std::vector<ProjectedFunction> projected;
  for (const auto &e : exact)
  {
    projected.push_back(lambda_op(l.mesh, l.dofs, *l.solver, l.cluster, e, 14));
  }
  const ClusterGapReport gap = cluster_gap(l.mesh, l.dofs, *l.solver, exact, l.cluster, projected, opts);

  const double best = oracle::delta2_grid_search(l.mesh, l.dofs, sys, exact, l.cluster);
  CHECK(gap.delta == doctest::Approx(std::sqrt(best)).epsilon(1e-6));

  // Best-approximation chain.
  for (int j = 0; j < 2; ++j)
  {
    CHECK(gap.d_best[j] <= gap.d_lambda[j] + 1e-12);
    CHECK(gap.d_best[j] <= gap.delta + 1e-12);
  }
}

TEST_CASE("sup-inf eigenvalue error ignores ordering inside the cluster")
{
  const std::vector<double> exact{5 * pi * pi, 5 * pi * pi};
  const std::vector<double> discrete{49.1, 49.7};
  const std::vector<double> swapped{49.7, 49.1};
  CHECK(sup_inf_eigenvalue_error(exact, discrete) == sup_inf_eigenvalue_error(exact, swapped));
  CHECK(sup_inf_eigenvalue_error({1.0, 2.0}, {2.0, 1.0}) == 0.0);

  const GapCheck zero = eigenvalue_gap_check({0}, {0.0}, {0.0});
  CHECK(zero.passed);
  CHECK(zero.ratios.empty());
}

TEST_CASE("mu on discrete eigenfunctions reproduces eta")
{
  const Level l(square(2), {1, 2});
  std::vector<ProjectedFunction> as_projected;
  for (int j = 0; j < 2; ++j)
  {
    as_projected.push_back({l.cluster.u[j], l.cluster.sigma[j], Vec()});
  }
  const IndicatorField mu = mu_estimator(l.mesh, l.dofs, as_projected);
  const IndicatorField eta = estimate(l.mesh, l.dofs, l.cluster);
  CHECK((mu.total() - eta.total()).norm() == 0.0);

  const IndicatorField zero =
      mu_estimator(l.mesh, l.dofs, {{Vec::Zero(l.dofs.n_u), Vec::Zero(l.dofs.n_sigma), Vec()}});
  CHECK(aggregate(zero) == 0.0);
}

TEST_CASE("estimator comparison on the square cluster {2,3}")
{
  const Level l(square(2), {1, 2});
  const auto exact = square_cluster({1, 2});
  std::vector<ProjectedFunction> projected;
  for (const auto &e : exact)
  {
    projected.push_back(lambda_op(l.mesh, l.dofs, *l.solver, l.cluster, e));
  }
  const IndicatorField eta = estimate(l.mesh, l.dofs, l.cluster);
  const IndicatorField mu = mu_estimator(l.mesh, l.dofs, projected);
  const double A = std::min({exact[0].lambda, l.cluster.values[0], l.cluster.values[1]});
  const double B = std::max({exact[0].lambda, l.cluster.values[0], l.cluster.values[1]});
  const EstimatorComparison c = compare_estimators(eta, mu, A, B);
  CHECK(c.N == 2);
  CHECK(c.lower_holds);
  CHECK(c.upper_holds);
  CHECK(c.elementwise_lower_violations == 0);
}

TEST_CASE("rate fitting and extrapolation")
{
  std::vector<double> n{10, 100, 1000, 10000}, err;
  for (double v : n)
  {
    err.push_back(3.0 / v);
  }
  const RateFit fit = fit_rate(n, err);
  CHECK(fit.slope == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(std::exp(fit.intercept) == doctest::Approx(3.0));
  CHECK(fit.r2 == doctest::Approx(1.0));
  CHECK_THROWS_AS(fit_rate({1.0}, {1.0}), VerificationError);

  // lambda(h) = 5 + 3 h^1.5 is recovered exactly.
  std::vector<double> h{0.4, 0.2, 0.1}, lam;
  for (double x : h)
  {
    lam.push_back(5 + 3 * std::pow(x, 1.5));
  }
  const ReferenceValue r = richardson(lam, h);
  CHECK(r.value == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(r.exponent == doctest::Approx(1.5));
  const ReferenceValue fixed = richardson(lam, h, 2.0);
  CHECK(std::abs(fixed.value - 5.0) > 1e-3);
  CHECK(fixed.error_bar >= std::abs(fixed.value - r.value) - 1e-12);
}

TEST_CASE("superconvergence on the square")
{
  const SuperconvergenceReport r = superconvergence_report(
      load_initial_mesh(Domain::UnitSquare), {Family::RT, 0}, {0, 1}, square_cluster({0, 1}), 2, 4);
  REQUIRE(r.rows.size() == 4);
  CHECK(r.sigma_rate.slope == doctest::Approx(1.0).epsilon(0.1));
  CHECK(r.super_rate.slope == doctest::Approx(2.0).epsilon(0.1));
  CHECK(r.source_rate.slope == doctest::Approx(2.0).epsilon(0.1));
  CHECK(r.passed);
  CHECK_THROWS_AS(superconvergence_report(load_initial_mesh(Domain::UnitSquare), {Family::RT, 0},
                                          {0, 1}, square_cluster({0, 1}), 2, 2),
                  VerificationError);
}

TEST_CASE("contraction trace")
{
  AfemHistory h;
  for (int l = 0; l < 4; ++l)
  {
    LevelRecord rec;
    rec.level = l;
    rec.mu2 = 8.0 / (1 << l);
    rec.d2 = 1.0 / (1 << l);
    h.levels.push_back(rec);
  }
  const ContractionTrace t = contraction_trace(h, 10);
  REQUIRE(t.xi2.size() == 4);
  CHECK(t.xi2[0] == doctest::Approx(18.0));
  CHECK(t.ratios.size() == 3);
  CHECK(t.ratios[1] == doctest::Approx(0.5));
  CHECK(t.contracts_from(0));

  AfemHistory single;
  single.levels.push_back(h.levels[0]);
  CHECK(contraction_trace(single, 1).ratios.empty());

  h.levels[2].mu2.reset();
  CHECK_THROWS_AS(contraction_trace(h, 1), VerificationError);
}

TEST_CASE("diagnostics recorder on an adaptive square run")
{
  AfemConfig cfg;
  cfg.cluster = {0, 1};
  cfg.stop.max_levels = 8;
  cfg.diagnostics = true;
  cfg.record_timing = false;
  DiagnosticsRecorder recorder(square_cluster(cfg.cluster));
  const AfemHistory h = run_afem(cfg, load_initial_mesh(Domain::UnitSquare), recorder.observer());
  REQUIRE(recorder.levels().size() == h.levels.size());
  for (std::size_t l = 0; l < h.levels.size(); ++l)
  {
    const auto &d = recorder.levels()[l];
    REQUIRE(h.levels[l].d2.has_value());
    CHECK(*h.levels[l].xi2 == doctest::Approx(*h.levels[l].mu2 + *h.levels[l].d2));
    CHECK(d.invariants.energy_defect < 1e-8);
    CHECK(d.invariants.orthonormality < 1e-10);
    CHECK(d.invariants.conforming);
    CHECK(d.invariants.nested);
    CHECK(d.comparison.lower_holds);
    CHECK(d.comparison.upper_holds);
    CHECK(d.qo_residual.has_value() == (l > 0));
    // delta dominates the inner infimum for the one member.
    CHECK(d.delta <= std::sqrt(d.d2) + 1e-12);
  }
  CHECK(h.levels.back().xi2 < h.levels.front().xi2);

  DiagnosticsRecorder wrong(square_cluster({1, 2}));
  CHECK_THROWS_AS(run_afem(cfg, load_initial_mesh(Domain::UnitSquare), wrong.observer()),
                  VerificationError);
}

TEST_CASE("verification report output")
{
  VerificationReport r;
  r.add("a", true, "fine", 1.5);
  r.add("b", false, "bad, really");
  r.skip("c", "no diagnostics");
  CHECK_FALSE(r.passed());
  CHECK(r.count(Verdict::Skipped) == 1);
  std::stringstream csv, summary;
  write_report_csv(csv, r);
  CHECK(csv.str() == "name,verdict,value,detail\na,pass,1.5,fine\nb,fail,,bad; really\nc,skipped,,no diagnostics\n");
  write_report_summary(summary, r);
  CHECK(summary.str().find("1 passed, 1 failed, 1 skipped") != std::string::npos);
}
