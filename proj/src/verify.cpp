// SPDX-License-Identifier: Apache-2.0

#include "mafem/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

#include <Eigen/Dense>

#include "mafem/quadrature.hpp"

namespace mafem
{

namespace
{

constexpr double pi = std::numbers::pi;

int default_order(int k, const DistanceOptions &options)
{
  return options.quad_order < 0 ? 2 * k + 4 : options.quad_order;
}

}  // namespace

// ---------------------------------------------------------------------------

ExactEigenpair square_eigenpair(int m, int n)
{
  if (m < 1 || n < 1)
  {
    throw ConfigError("square eigenpair indices must be positive");
  }
  ExactEigenpair e;
  e.lambda = pi * pi * (m * m + n * n);
  e.u = [m, n](const Vec2 &x) { return 2 * std::sin(m * pi * x.x()) * std::sin(n * pi * x.y()); };
  e.grad_u = [m, n](const Vec2 &x) {
    return Vec2(2 * m * pi * std::cos(m * pi * x.x()) * std::sin(n * pi * x.y()),
                2 * n * pi * std::sin(m * pi * x.x()) * std::cos(n * pi * x.y()));
  };
  e.provenance = Provenance::Analytic;
  e.label = "u_" + std::to_string(m) + "," + std::to_string(n);
  return e;
}

std::vector<ExactEigenpair> square_eigenpairs(int count)
{
  std::vector<std::pair<int, int>> modes;
  const int bound = count + 1;
  for (int m = 1; m <= bound; ++m)
  {
    for (int n = 1; n <= bound; ++n)
    {
      modes.emplace_back(m, n);
    }
  }
  std::sort(modes.begin(), modes.end(), [](auto a, auto b) {
    const int la = a.first * a.first + a.second * a.second;
    const int lb = b.first * b.first + b.second * b.second;
    return la != lb ? la < lb : a.first < b.first;
  });
  std::vector<ExactEigenpair> out;
  for (int i = 0; i < count; ++i)
  {
    out.push_back(square_eigenpair(modes[i].first, modes[i].second));
  }
  return out;
}

std::vector<ExactEigenpair> square_cluster(const ClusterSpec &cluster)
{
  auto all = square_eigenpairs(cluster.last());
  return {all.begin() + cluster.n, all.end()};
}

ReferenceValue richardson(const std::vector<double> &samples, const std::vector<double> &h,
                          std::optional<double> exponent)
{
  if (samples.size() != 3 || h.size() != 3)
  {
    throw VerificationError("richardson needs exactly three levels");
  }
  ReferenceValue r;
  r.samples = samples;
  r.h = h;
  const double d1 = samples[1] - samples[0], d2 = samples[2] - samples[1];
  const double ratio = h[1] / h[2];
  if (d1 == 0 || d2 == 0 || d1 / d2 <= 0)
  {
    throw VerificationError("richardson: samples are not monotone");
  }
  r.exponent = std::log(d1 / d2) / std::log(ratio);
  const double p = exponent.value_or(r.exponent);
  const double correction = d2 / (std::pow(ratio, p) - 1);
  r.value = samples[2] + correction;
  r.error_bar = std::abs(correction);
  if (exponent)
  {
    // Disagreement with the fitted-exponent estimate widens the bar.
    const double fitted = samples[2] + d2 / (std::pow(ratio, r.exponent) - 1);
    r.error_bar = std::max(r.error_bar, std::abs(fitted - r.value));
  }
  return r;
}

ReferenceValue lshape_reference(int index, int finest_level)
{
  if (finest_level < 3 || index < 1)
  {
    throw ConfigError("lshape_reference needs finest_level >= 3 and index >= 1");
  }
  const Mesh initial = load_initial_mesh(Domain::LShape);
  std::vector<double> samples, h;
  Mesh m = uniform_refine(initial, finest_level - 3);
  for (int level = finest_level - 3; level <= finest_level; ++level)
  {
    if (level > finest_level - 3)
    {
      m = uniform_refine(m, 1);
    }
    const DofMap dofs = build_dofmap(m, {Family::RT, 0});
    const MixedSolver solver(assemble(m, dofs));
    const auto [values, vectors] = lowest_eigenpairs(solver, index);
    samples.push_back(values(index - 1));
    h.push_back(max_diameter(m));
  }
  ReferenceValue coarse = richardson({samples.begin(), samples.begin() + 3}, {h.begin(), h.begin() + 3});
  ReferenceValue fine = richardson({samples.begin() + 1, samples.end()}, {h.begin() + 1, h.end()});
  // The shift between consecutive triples bounds the extrapolation error.
  fine.error_bar = std::abs(fine.value - coarse.value);
  return fine;
}

// ---------------------------------------------------------------------------

ProjectedFunction project_to_cluster(const MixedSystem &system, const EigenCluster &cluster,
                                     const Vec &w)
{
  if (cluster.size() == 0)
  {
    throw VerificationError("cluster not computed");
  }
  ProjectedFunction p;
  p.gamma.resize(cluster.size());
  p.u = Vec::Zero(system.M.rows());
  p.sigma = Vec::Zero(system.A.rows());
  const Vec Mw = system.M * w;
  for (int j = 0; j < cluster.size(); ++j)
  {
    p.gamma(j) = cluster.u[j].dot(Mw);
    p.u += p.gamma(j) * cluster.u[j];
    p.sigma += p.gamma(j) * cluster.sigma[j];
  }
  return p;
}

std::pair<Vec, Vec> source_from_load(const MixedSolver &solver, const Vec &load, double lambda)
{
  return solver.solve_saddle(Vec::Zero(solver.n_sigma()), -lambda * load);
}

ProjectedFunction lambda_op(const Mesh &mesh, const DofMap &dofs, const MixedSolver &solver,
                            const EigenCluster &cluster, const ExactEigenpair &exact,
                            int quad_order)
{
  const int order = quad_order < 0 ? 2 * dofs.degree.k + 4 : quad_order;
  const Vec load = load_vector(mesh, dofs, exact.u, order);
  const auto [s, w] = source_from_load(solver, load, exact.lambda);
  return project_to_cluster(solver.system(), cluster, w);
}

ProjectedFunction lambda_op(const MixedSolver &solver, const EigenCluster &cluster, const Vec &g,
                            double lambda)
{
  const auto [s, w] = solve_source(solver, g, lambda);
  return project_to_cluster(solver.system(), cluster, w);
}

// ---------------------------------------------------------------------------

FieldEvaluator continuous_field(const ExactEigenpair &exact)
{
  return [exact](Index, const Eigen::Vector3d &, const Vec2 &x) {
    return FieldValue{exact.u(x), exact.grad_u(x)};
  };
}

FieldEvaluator discrete_field(const Mesh &mesh, const DofMap &dofs, const Vec &u, const Vec &sigma)
{
  return [&mesh, &dofs, u, sigma](Index t, const Eigen::Vector3d &bary, const Vec2 &) {
    return FieldValue{evaluate_u(mesh, dofs, u, t, bary).value,
                      evaluate_sigma(mesh, dofs, sigma, t, bary).value};
  };
}

FieldEvaluator coarse_field(const Mesh &fine, const Mesh &coarse, const DofMap &coarse_dofs,
                            const Vec &u, const Vec &sigma)
{
  return [&fine, &coarse, &coarse_dofs, u, sigma](Index t, const Eigen::Vector3d &,
                                                  const Vec2 &x) {
    if (!fine.parent[t])
    {
      throw VerificationError("coarse_field: triangle without parent");
    }
    const Index p = *fine.parent[t];
    const Eigen::Vector3d b = barycentric(coarse, p, x);
    return FieldValue{evaluate_u(coarse, coarse_dofs, u, p, b).value,
                      evaluate_sigma(coarse, coarse_dofs, sigma, p, b).value};
  };
}

FieldEvaluator scaled(const FieldEvaluator &f, double s)
{
  return [f, s](Index t, const Eigen::Vector3d &b, const Vec2 &x) {
    FieldValue v = f(t, b, x);
    return FieldValue{s * v.value, s * v.grad};
  };
}

FieldEvaluator sum(const std::vector<FieldEvaluator> &terms)
{
  return [terms](Index t, const Eigen::Vector3d &b, const Vec2 &x) {
    FieldValue out;
    for (const auto &f : terms)
    {
      const FieldValue v = f(t, b, x);
      out.value += v.value;
      out.grad += v.grad;
    }
    return out;
  };
}

double distance2(const Mesh &mesh, int degree_k, const FieldEvaluator &v, const FieldEvaluator &w,
                 const DistanceOptions &options)
{
  const auto rule = triangle_rule(default_order(degree_k, options));
  double total = 0;
  for (Index t = 0; t < mesh.num_triangles(); ++t)
  {
    const auto &tri = mesh.triangles[t];
    const Vec2 origin = mesh.vertices[tri[0]];
    Mat2 J;
    J.col(0) = mesh.vertices[tri[1]] - origin;
    J.col(1) = mesh.vertices[tri[2]] - origin;
    const double det = J.determinant();
    double local = 0;
    for (std::size_t q = 0; q < rule.size(); ++q)
    {
      const Vec2 x = origin + J * rule.reference_point(q);
      const FieldValue a = v(t, rule.points[q], x), b = w(t, rule.points[q], x);
      const double dv = a.value - b.value;
      local += rule.weights[q] * (options.value_weight * dv * dv + (a.grad - b.grad).squaredNorm());
    }
    total += local * det;
  }
  return total;
}

double distance2(const MixedSystem &system, const Vec &u1, const Vec &s1, const Vec &u2,
                 const Vec &s2)
{
  const Vec du = u1 - u2, ds = s1 - s2;
  return du.dot(system.M * du) + ds.dot(system.A * ds);
}

// ---------------------------------------------------------------------------

double sup_inf_eigenvalue_error(const std::vector<double> &exact, const std::vector<double> &discrete)
{
  double sup = 0;
  for (double l : exact)
  {
    double inf = std::numeric_limits<double>::infinity();
    for (double lh : discrete)
    {
      inf = std::min(inf, std::abs(l - lh));
    }
    sup = std::max(sup, inf);
  }
  return sup;
}

ClusterGapReport cluster_gap(const Mesh &mesh, const DofMap &dofs, const MixedSolver &solver,
                             const std::vector<ExactEigenpair> &exact, const EigenCluster &cluster,
                             const std::vector<ProjectedFunction> &projected,
                             const DistanceOptions &options)
{
  const int N = static_cast<int>(exact.size());
  if (N == 0 || cluster.size() != N)
  {
    throw VerificationError("cluster_gap: card(W) must equal the cluster size");
  }
  const auto &sys = solver.system();
  const double w = options.value_weight;

  // d-Gram matrix of the discrete cluster basis.
  Mat G(N, N);
  for (int a = 0; a < N; ++a)
  {
    for (int b = 0; b < N; ++b)
    {
      G(a, b) = w * cluster.u[a].dot(sys.M * cluster.u[b]) +
                cluster.sigma[a].dot(sys.A * cluster.sigma[b]);
    }
  }
  const Eigen::SelfAdjointEigenSolver<Mat> gram_es(G);
  if (gram_es.eigenvalues().minCoeff() <= 1e-12 * gram_es.eigenvalues().maxCoeff())
  {
    throw VerificationError("cluster_gap: discrete cluster Gram matrix is rank deficient");
  }

  // Cross products <u_i, v_a>_d by quadrature, then the d-orthogonal projection.
  const auto rule = triangle_rule(default_order(dofs.degree.k, options));
  Mat C = Mat::Zero(N, N);
  std::vector<double> uval(N);
  std::vector<Vec2> ugrad(N);
  std::vector<double> vval(N);
  std::vector<Vec2> vgrad(N);
  auto sample = [&](Index t, std::size_t q, const ElementGeometry &geo) {
    const Vec2 x = geo.map_barycentric(rule.points[q]);
    for (int i = 0; i < N; ++i)
    {
      uval[i] = exact[i].u(x);
      ugrad[i] = exact[i].grad_u(x);
      vval[i] = evaluate_u(mesh, dofs, cluster.u[i], t, rule.points[q]).value;
      vgrad[i] = evaluate_sigma(mesh, dofs, cluster.sigma[i], t, rule.points[q]).value;
    }
  };
  for (Index t = 0; t < mesh.num_triangles(); ++t)
  {
    const auto geo = ElementGeometry::of(mesh, t);
    for (std::size_t q = 0; q < rule.size(); ++q)
    {
      sample(t, q, geo);
      const double wq = rule.weights[q] * geo.det;
      for (int i = 0; i < N; ++i)
      {
        for (int a = 0; a < N; ++a)
        {
          C(i, a) += wq * (w * uval[i] * vval[a] + ugrad[i].dot(vgrad[a]));
        }
      }
    }
  }
  const Mat beta = G.ldlt().solve(C.transpose()).transpose();  // row i: coefficients of P u_i

  // Residual form Q_il = <r_i, r_l>_d integrated directly (no cancellation).
  Mat Q = Mat::Zero(N, N);
  std::vector<double> rval(N);
  std::vector<Vec2> rgrad(N);
  for (Index t = 0; t < mesh.num_triangles(); ++t)
  {
    const auto geo = ElementGeometry::of(mesh, t);
    for (std::size_t q = 0; q < rule.size(); ++q)
    {
      sample(t, q, geo);
      const double wq = rule.weights[q] * geo.det;
      for (int i = 0; i < N; ++i)
      {
        rval[i] = uval[i];
        rgrad[i] = ugrad[i];
        for (int a = 0; a < N; ++a)
        {
          rval[i] -= beta(i, a) * vval[a];
          rgrad[i] -= beta(i, a) * vgrad[a];
        }
      }
      for (int i = 0; i < N; ++i)
      {
        for (int l = 0; l < N; ++l)
        {
          Q(i, l) += wq * (w * rval[i] * rval[l] + rgrad[i].dot(rgrad[l]));
        }
      }
    }
  }
  Q = 0.5 * (Q + Q.transpose()).eval();

  ClusterGapReport r;
  r.gap_form = Q;
  r.delta = std::sqrt(std::max(0.0, Eigen::SelfAdjointEigenSolver<Mat>(Q).eigenvalues().maxCoeff()));
  for (int i = 0; i < N; ++i)
  {
    r.d_best.push_back(std::sqrt(std::max(0.0, Q(i, i))));
  }
  for (std::size_t j = 0; j < projected.size(); ++j)
  {
    r.d_lambda.push_back(std::sqrt(
        distance2(mesh, dofs.degree.k, continuous_field(exact[j]),
                  discrete_field(mesh, dofs, projected[j].u, projected[j].sigma), options)));
  }
  std::vector<double> ex;
  for (const auto &e : exact)
  {
    ex.push_back(e.lambda);
  }
  r.eigenvalue_error = sup_inf_eigenvalue_error(ex, cluster.values);
  return r;
}

// ---------------------------------------------------------------------------

IndicatorField mu_estimator(const Mesh &mesh, const DofMap &dofs,
                            const std::vector<ProjectedFunction> &projected)
{
  std::vector<Vec> sigma, u;
  for (const auto &p : projected)
  {
    sigma.push_back(p.sigma);
    u.push_back(p.u);
  }
  return estimate(mesh, dofs, sigma, u);
}

EstimatorComparison compare_estimators(const IndicatorField &eta, const IndicatorField &mu,
                                       double A, double B)
{
  if (eta.elements() != mu.elements() || eta.members() != mu.members())
  {
    throw VerificationError("compare_estimators: shape mismatch");
  }
  EstimatorComparison c;
  c.A = A;
  c.B = B;
  c.N = eta.members();
  const double ratio2 = (B / A) * (B / A);
  const double N = c.N;
  const Vec eta_t = eta.element_sums(), mu_t = mu.element_sums();
  c.eta2 = eta_t.sum();
  c.mu2 = mu_t.sum();
  const double slack = 1 + 1e-10;
  for (Index t = 0; t < eta.elements(); ++t)
  {
    if (mu_t(t) / N > ratio2 * eta_t(t) * slack)
    {
      ++c.elementwise_lower_violations;
    }
    if (eta_t(t) > ratio2 * (2 * N + 4 * N * N) * mu_t(t) * slack)
    {
      ++c.elementwise_upper_violations;
    }
  }
  c.lower_holds = c.mu2 / N <= ratio2 * c.eta2 * slack;
  c.upper_holds = c.eta2 <= ratio2 * (2 * N + 4 * N * N) * c.mu2 * slack;
  return c;
}

// ---------------------------------------------------------------------------

RateFit fit_rate(const std::vector<double> &x, const std::vector<double> &y)
{
  if (x.size() != y.size() || x.size() < 2)
  {
    throw VerificationError("fit_rate needs at least two points");
  }
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    if (!(x[i] > 0) || !(y[i] > 0))
    {
      throw VerificationError("fit_rate: non-positive value");
    }
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    syy += ly * ly;
  }
  RateFit f;
  const double vx = sxx - sx * sx / n, vy = syy - sy * sy / n, cxy = sxy - sx * sy / n;
  if (vx <= 0)
  {
    throw VerificationError("fit_rate: degenerate abscissae");
  }
  f.slope = cxy / vx;
  f.intercept = (sy - f.slope * sx) / n;
  f.r2 = vy > 0 ? cxy * cxy / (vx * vy) : 1.0;
  return f;
}

SuperconvergenceReport superconvergence_report(const Mesh &initial, const FeDegree &degree,
                                               const ClusterSpec &spec,
                                               const std::vector<ExactEigenpair> &exact,
                                               int first_level, int levels)
{
  if (levels < 3)
  {
    throw VerificationError("superconvergence_report needs at least three levels");
  }
  if (static_cast<int>(exact.size()) != spec.size)
  {
    throw VerificationError("superconvergence_report: exact pairs do not match the cluster");
  }
  SuperconvergenceReport report;
  std::vector<double> h, sup, sig, src;
  Mesh mesh = uniform_refine(initial, first_level);
  for (int level = first_level; level < first_level + levels; ++level)
  {
    if (level > first_level)
    {
      mesh = uniform_refine(mesh, 1);
    }
    const DofMap dofs = build_dofmap(mesh, degree);
    const MixedSolver solver(assemble(mesh, dofs));
    const EigenCluster cluster = solve_cluster(solver, spec);
    const int order = 2 * degree.k + 4;
    const auto rule = triangle_rule(order);
    SuperconvergenceRow row;
    row.level = level;
    row.h = max_diameter(mesh);
    row.dofs = dofs.n_sigma + dofs.n_u;
    for (const auto &e : exact)
    {
      const Vec load = load_vector(mesh, dofs, e.u, order);
      const Vec pi_u = solve_mass(solver.system(), dofs, load);
      const auto [ts, tu] = source_from_load(solver, load, e.lambda);
      const ProjectedFunction p = project_to_cluster(solver.system(), cluster, tu);
      const Vec d1 = pi_u - p.u, d2 = pi_u - tu;
      row.super += m_inner(solver.system(), d1, d1);
      row.source_super += m_inner(solver.system(), d2, d2);
      // ||sigma - tau||^2 + ||div sigma - div tau||^2 with div sigma = -lambda u.
      for (Index t = 0; t < mesh.num_triangles(); ++t)
      {
        const auto geo = ElementGeometry::of(mesh, t);
        for (std::size_t q = 0; q < rule.size(); ++q)
        {
          const Vec2 x = geo.map_barycentric(rule.points[q]);
          const auto tau = evaluate_sigma(mesh, dofs, ts, t, rule.points[q]);
          const double ddiv = -e.lambda * e.u(x) - tau.div;
          row.sigma_error +=
              rule.weights[q] * geo.det * ((e.grad_u(x) - tau.value).squaredNorm() + ddiv * ddiv);
        }
      }
    }
    row.super = std::sqrt(row.super);
    row.source_super = std::sqrt(row.source_super);
    row.sigma_error = std::sqrt(row.sigma_error);
    report.rows.push_back(row);
    h.push_back(row.h);
    sup.push_back(row.super);
    sig.push_back(row.sigma_error);
    src.push_back(row.source_super);
  }
  report.super_rate = fit_rate(h, sup);
  report.sigma_rate = fit_rate(h, sig);
  report.source_rate = fit_rate(h, src);
  report.passed = report.super_rate.slope >= report.sigma_rate.slope + 0.5;
  return report;
}

bool ContractionTrace::contracts_from(int from_level) const
{
  for (std::size_t l = std::max(0, from_level); l + 1 < xi2.size(); ++l)
  {
    if (!(xi2[l + 1] < xi2[l]))
    {
      return false;
    }
  }
  return true;
}

ContractionTrace contraction_trace(const AfemHistory &history, double beta)
{
  ContractionTrace trace;
  trace.beta = beta;
  for (const auto &rec : history.levels)
  {
    if (!rec.mu2 || !rec.d2)
    {
      throw VerificationError("contraction_trace: level " + std::to_string(rec.level) +
                              " has no diagnostics");
    }
    trace.xi2.push_back(*rec.mu2 + beta * *rec.d2);
  }
  for (std::size_t l = 0; l + 1 < trace.xi2.size(); ++l)
  {
    trace.ratios.push_back(trace.xi2[l + 1] / trace.xi2[l]);
  }
  return trace;
}

GapCheck eigenvalue_gap_check(const std::vector<int> &levels, const std::vector<double> &errors,
                              const std::vector<double> &delta)
{
  if (levels.size() != errors.size() || levels.size() != delta.size())
  {
    throw VerificationError("eigenvalue_gap_check: size mismatch");
  }
  GapCheck c;
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (std::size_t i = 0; i < levels.size(); ++i)
  {
    if (delta[i] == 0)
    {
      continue;  // both sides vanish for exact coincidence
    }
    const double r = errors[i] / (delta[i] * delta[i]);
    c.levels.push_back(levels[i]);
    c.ratios.push_back(r);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  if (c.ratios.empty())
  {
    c.passed = true;
    c.spread = 1;
    return c;
  }
  c.spread = lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
  c.passed = c.spread < 50;
  return c;
}

double median(std::vector<double> values)
{
  if (values.empty())
  {
    throw VerificationError("median of an empty sequence");
  }
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

bool bounded_around_median(const std::vector<double> &values, double factor)
{
  const double m = median(values);
  for (double v : values)
  {
    if (!(v <= factor * m && v >= m / factor))
    {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------

LevelInvariants check_invariants(const MixedSolver &solver, const EigenCluster &cluster)
{
  const auto &sys = solver.system();
  LevelInvariants inv;
  for (int j = 0; j < cluster.size(); ++j)
  {
    // |sigma|_a^2 against lambda recovered from the second equation.
    const double energy = cluster.sigma[j].dot(sys.A * cluster.sigma[j]);
    const double lambda = -cluster.u[j].dot(sys.B * cluster.sigma[j]) /
                          cluster.u[j].dot(sys.M * cluster.u[j]);
    inv.energy_defect = std::max(inv.energy_defect, std::abs(energy - lambda) / std::abs(lambda));
    inv.energy_defect =
        std::max(inv.energy_defect, std::abs(energy - cluster.values[j]) / std::abs(lambda));
    for (int i = 0; i < cluster.size(); ++i)
    {
      const double g = cluster.u[i].dot(sys.M * cluster.u[j]);
      inv.orthonormality = std::max(inv.orthonormality, std::abs(g - (i == j ? 1.0 : 0.0)));
    }
  }
  return inv;
}

struct DiagnosticsRecorder::Previous
{
  Mesh mesh;
  DofMap dofs;
  std::vector<ProjectedFunction> projected;
  std::vector<double> d2;
};

DiagnosticsRecorder::DiagnosticsRecorder(std::vector<ExactEigenpair> exact, DistanceOptions options)
    : exact_(std::move(exact)), options_(options)
{
}

DiagnosticsRecorder::~DiagnosticsRecorder() = default;

LevelObserver DiagnosticsRecorder::observer()
{
  return [this](const LevelState &state, LevelRecord &rec) { record(state, rec); };
}

void DiagnosticsRecorder::record(const LevelState &state, LevelRecord &rec)
{
  const auto &mesh = state.mesh;
  const auto &dofs = state.dofs;
  const auto &cluster = state.cluster;
  if (static_cast<int>(exact_.size()) != cluster.size())
  {
    throw VerificationError("diagnostics: reference pairs do not match the cluster size");
  }
  const int k = dofs.degree.k;
  LevelDiagnostics diag;
  diag.level = state.level;
  diag.h_max = max_diameter(mesh);
  diag.dofs = dofs.n_sigma + dofs.n_u;
  diag.lambda_h = cluster.values;

  std::vector<ProjectedFunction> projected;
  std::vector<double> d2;
  for (const auto &e : exact_)
  {
    projected.push_back(lambda_op(mesh, dofs, state.solver, cluster, e, default_order(k, options_)));
    const auto &p = projected.back();
    d2.push_back(distance2(mesh, k, continuous_field(e), discrete_field(mesh, dofs, p.u, p.sigma),
                           options_));
    DistanceOptions values_only = options_;
    const double l2 = distance2(
        mesh, k, continuous_field(e),
        [&](Index t, const Eigen::Vector3d &b, const Vec2 &x) {
          return FieldValue{evaluate_u(mesh, dofs, p.u, t, b).value, e.grad_u(x)};
        },
        values_only);
    diag.epsilon = std::max(diag.epsilon, std::sqrt(l2 / options_.value_weight));
  }
  for (double v : d2)
  {
    diag.d2 += v;
  }
  const ClusterGapReport gap =
      cluster_gap(mesh, dofs, state.solver, exact_, cluster, projected, options_);
  diag.delta = gap.delta;
  diag.eigenvalue_error = gap.eigenvalue_error;

  const IndicatorField mu = mu_estimator(mesh, dofs, projected);
  diag.mu2 = aggregate(mu);
  diag.eta2 = aggregate(state.indicators);
  double A = std::numeric_limits<double>::infinity(), B = 0;
  for (const auto &e : exact_)
  {
    A = std::min(A, e.lambda);
    B = std::max(B, e.lambda);
  }
  for (double l : cluster.values)
  {
    A = std::min(A, l);
    B = std::max(B, l);
  }
  diag.comparison = compare_estimators(state.indicators, mu, A, B);

  diag.invariants = check_invariants(state.solver, cluster);
  diag.invariants.conforming = is_conforming(mesh);
  if (previous_)
  {
    diag.invariants.nested = is_nested(previous_->mesh, mesh);
    // d(L_{l+1}u, L_l u)^2 - [d(u, L_l u)^2 - d(u, L_{l+1}u)^2]
    double qo = 0;
    for (std::size_t j = 0; j < exact_.size(); ++j)
    {
      const auto &fine = projected[j];
      const auto &coarse = previous_->projected[j];
      const double between =
          distance2(mesh, k, discrete_field(mesh, dofs, fine.u, fine.sigma),
                    coarse_field(mesh, previous_->mesh, previous_->dofs, coarse.u, coarse.sigma),
                    options_);
      qo += between - (previous_->d2[j] - d2[j]);
    }
    diag.qo_residual = qo;
    double prev_sum = 0;
    for (double v : previous_->d2)
    {
      prev_sum += v;
    }
    diag.d2_previous = prev_sum;
  }
  previous_ = std::make_unique<Previous>(Previous{mesh, dofs, projected, d2});

  rec.d2 = diag.d2;
  rec.delta = diag.delta;
  rec.mu2 = diag.mu2;
  rec.xi2 = diag.mu2 + diag.d2;
  levels_.push_back(std::move(diag));
}

// ---------------------------------------------------------------------------

std::string to_string(Verdict v)
{
  switch (v)
  {
    case Verdict::Pass:
      return "pass";
    case Verdict::Fail:
      return "fail";
    case Verdict::Skipped:
      return "skipped";
  }
  return "?";
}

void VerificationReport::add(std::string name, bool ok, std::string detail,
                             std::optional<double> value)
{
  items.push_back({std::move(name), ok ? Verdict::Pass : Verdict::Fail, std::move(detail), value});
}

void VerificationReport::skip(std::string name, std::string reason)
{
  items.push_back({std::move(name), Verdict::Skipped, std::move(reason), std::nullopt});
}

bool VerificationReport::passed() const { return count(Verdict::Fail) == 0; }

int VerificationReport::count(Verdict v) const
{
  return static_cast<int>(
      std::count_if(items.begin(), items.end(), [v](const auto &i) { return i.verdict == v; }));
}

void write_report_csv(std::ostream &out, const VerificationReport &report)
{
  out << "name,verdict,value,detail\n" << std::setprecision(17);
  for (const auto &item : report.items)
  {
    out << item.name << ',' << to_string(item.verdict) << ',';
    if (item.value)
    {
      out << *item.value;
    }
    std::string detail = item.detail;
    std::replace(detail.begin(), detail.end(), ',', ';');
    out << ',' << detail << '\n';
  }
}

void write_report_summary(std::ostream &out, const VerificationReport &report)
{
  for (const auto &item : report.items)
  {
    out << '[' << to_string(item.verdict) << "] " << item.name;
    if (!item.detail.empty())
    {
      out << ": " << item.detail;
    }
    out << '\n';
  }
  out << report.count(Verdict::Pass) << " passed, " << report.count(Verdict::Fail) << " failed, "
      << report.count(Verdict::Skipped) << " skipped\n";
}

}  // namespace mafem
