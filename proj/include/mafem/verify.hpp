// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mafem/adapt.hpp"
#include "mafem/assembly.hpp"
#include "mafem/eigsolve.hpp"
#include "mafem/estimator.hpp"
#include "mafem/mesh.hpp"

namespace mafem
{

// ---------------------------------------------------------------------------
// Reference eigenpairs

enum class Provenance
{
  Analytic,
  ReferenceMesh,
};

struct ExactEigenpair
{
  double lambda = 0;
  ScalarFunction u;
  VectorFunction grad_u;
  Provenance provenance = Provenance::Analytic;
  std::string label;
};

// 2 sin(m pi x) sin(n pi y) on the unit square, lambda = pi^2 (m^2 + n^2).
ExactEigenpair square_eigenpair(int m, int n);

// The square spectrum in ascending order, degenerate pairs ordered by m.
std::vector<ExactEigenpair> square_eigenpairs(int count);
std::vector<ExactEigenpair> square_cluster(const ClusterSpec &cluster);

struct ReferenceValue
{
  double value = 0;
  double error_bar = 0;
  double exponent = 0;   // fitted convergence order in h
  std::vector<double> samples;
  std::vector<double> h;
};

// Extrapolation from three values on meshes with h_{i+1} = h_i / 2. The
// exponent is fitted from the three samples unless one is given.
ReferenceValue richardson(const std::vector<double> &samples, const std::vector<double> &h,
                          std::optional<double> exponent = std::nullopt);

// Reference for lambda_{index} on the L-shape extrapolated from uniform RT_0
// levels finest-2..finest; the error bar compares with levels finest-3..finest-1.
ReferenceValue lshape_reference(int index, int finest_level);

// Stored value of lambda_1 on the L-shape and its error bar.
inline constexpr double kLShapeLambda1 = 9.6397;
inline constexpr double kLShapeLambda1ErrorBar = 1e-4;

// ---------------------------------------------------------------------------
// Lambda_h = P^W_h o T^lambda_h

struct ProjectedFunction
{
  Vec u;      // Lambda_h u in M_h
  Vec sigma;  // G_h(Lambda_h u)
  Vec gamma;  // coefficients in the discrete cluster basis
};

// P^W_h w: the L2-orthogonal projection onto span{u_{h,j}}.
ProjectedFunction project_to_cluster(const MixedSystem &system, const EigenCluster &cluster,
                                     const Vec &w);

// T^lambda_h applied to a datum given by its load vector (g, v_a).
std::pair<Vec, Vec> source_from_load(const MixedSolver &solver, const Vec &load, double lambda);

ProjectedFunction lambda_op(const Mesh &mesh, const DofMap &dofs, const MixedSolver &solver,
                            const EigenCluster &cluster, const ExactEigenpair &exact,
                            int quad_order = -1);

// Lambda_h applied to a discrete function g in M_h with eigenvalue lambda.
ProjectedFunction lambda_op(const MixedSolver &solver, const EigenCluster &cluster, const Vec &g,
                            double lambda);

// ---------------------------------------------------------------------------
// The metric d

// Value and generalized gradient (G or G_h) of an argument of d.
struct FieldValue
{
  double value = 0;
  Vec2 grad = Vec2::Zero();
};

using FieldEvaluator =
    std::function<FieldValue(Index t, const Eigen::Vector3d &bary, const Vec2 &x)>;

FieldEvaluator continuous_field(const ExactEigenpair &exact);
FieldEvaluator discrete_field(const Mesh &mesh, const DofMap &dofs, const Vec &u, const Vec &sigma);
// A discrete function on the previous mesh of a one-step refinement, evaluated
// on `fine` through the parent map.
FieldEvaluator coarse_field(const Mesh &fine, const Mesh &coarse, const DofMap &coarse_dofs,
                            const Vec &u, const Vec &sigma);
FieldEvaluator scaled(const FieldEvaluator &f, double s);
FieldEvaluator sum(const std::vector<FieldEvaluator> &terms);

struct DistanceOptions
{
  int quad_order = -1;         // default 2k+4
  double value_weight = 1.0;   // weight of ||v-w||^2 (1 gives the plain metric)
};

// d(v,w)^2 = w ||v-w||^2 + |g(v)-g(w)|^2 by quadrature on `mesh`.
double distance2(const Mesh &mesh, int degree_k, const FieldEvaluator &v, const FieldEvaluator &w,
                 const DistanceOptions &options = {});
// Exact version for two discrete functions on one mesh.
double distance2(const MixedSystem &system, const Vec &u1, const Vec &s1, const Vec &u2,
                 const Vec &s2);

// ---------------------------------------------------------------------------
// delta(W, W_h)

struct ClusterGapReport
{
  double delta = 0;
  std::vector<double> d_lambda;  // d(u_j, Lambda_h u_j)
  std::vector<double> d_best;    // inf over W_h of d(u_j, .)
  double eigenvalue_error = 0;   // sup_i inf_j |lambda_i - lambda_{h,j}|
  Mat gap_form;                  // N x N form whose top eigenvalue is delta^2
};

ClusterGapReport cluster_gap(const Mesh &mesh, const DofMap &dofs, const MixedSolver &solver,
                             const std::vector<ExactEigenpair> &exact, const EigenCluster &cluster,
                             const std::vector<ProjectedFunction> &projected,
                             const DistanceOptions &options = {});

double sup_inf_eigenvalue_error(const std::vector<double> &exact, const std::vector<double> &discrete);

// ---------------------------------------------------------------------------
// mu and the estimator comparison

IndicatorField mu_estimator(const Mesh &mesh, const DofMap &dofs,
                            const std::vector<ProjectedFunction> &projected);

struct EstimatorComparison
{
  double A = 0, B = 0;
  int N = 0;
  double mu2 = 0, eta2 = 0;
  bool lower_holds = false;  // N^{-1} sum mu^2 <= (B/A)^2 sum eta^2
  bool upper_holds = false;  // sum eta^2 <= (B/A)^2 (2N + 4N^2) sum mu^2
  Index elementwise_lower_violations = 0;
  Index elementwise_upper_violations = 0;
};

EstimatorComparison compare_estimators(const IndicatorField &eta, const IndicatorField &mu,
                                       double A, double B);

// ---------------------------------------------------------------------------
// Rates, superconvergence, contraction

struct RateFit
{
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};

// Least-squares fit of log y against log x.
RateFit fit_rate(const std::vector<double> &x, const std::vector<double> &y);

struct SuperconvergenceRow
{
  int level = 0;
  double h = 0;
  Index dofs = 0;
  double super = 0;        // ||Pi_h u - Lambda_h u||
  double sigma_error = 0;  // ||sigma - G_h(T^lambda_h u)||_Sigma
  double source_super = 0; // ||Pi_h u - T^lambda_h u||
};

struct SuperconvergenceReport
{
  std::vector<SuperconvergenceRow> rows;
  RateFit super_rate, sigma_rate, source_rate;  // in h
  bool passed = false;                         // super rate >= sigma rate + 0.5
};

SuperconvergenceReport superconvergence_report(const Mesh &initial, const FeDegree &degree,
                                               const ClusterSpec &cluster,
                                               const std::vector<ExactEigenpair> &exact,
                                               int first_level, int levels);

struct ContractionTrace
{
  double beta = 1;
  std::vector<double> xi2;
  std::vector<double> ratios;  // xi2[l+1] / xi2[l]
  // True when xi2 strictly decreases from `from_level` on.
  bool contracts_from(int from_level) const;
};

ContractionTrace contraction_trace(const AfemHistory &history, double beta);

struct GapCheck
{
  std::vector<int> levels;
  std::vector<double> ratios;  // eigenvalue error / delta^2
  double spread = 0;           // max / min
  bool passed = false;         // spread < 50
};

GapCheck eigenvalue_gap_check(const std::vector<int> &levels, const std::vector<double> &errors,
                              const std::vector<double> &delta);

// max / median and median / min stay within `factor` (boundedness of a ratio sequence).
bool bounded_around_median(const std::vector<double> &values, double factor);
double median(std::vector<double> values);

// ---------------------------------------------------------------------------
// Per-level diagnostics collected during run_afem

struct LevelInvariants
{
  double energy_defect = 0;     // max_j | |sigma_j|_a^2 - lambda_j | / lambda_j
  double orthonormality = 0;    // max |(u_i,u_j) - delta_ij|
  bool conforming = false;
  bool nested = true;           // with respect to the previous level
};

struct LevelDiagnostics
{
  int level = 0;
  double h_max = 0;
  Index dofs = 0;
  std::vector<double> lambda_h;
  double d2 = 0;
  double delta = 0;
  double mu2 = 0;
  double eta2 = 0;
  double epsilon = 0;           // max_j ||u_j - Lambda_h u_j||
  double eigenvalue_error = 0;
  std::optional<double> qo_residual;  // quasi-orthogonality defect to the previous level
  std::optional<double> d2_previous;
  EstimatorComparison comparison;
  LevelInvariants invariants;
};

class DiagnosticsRecorder
{
public:
  explicit DiagnosticsRecorder(std::vector<ExactEigenpair> exact, DistanceOptions options = {});
  ~DiagnosticsRecorder();
  DiagnosticsRecorder(const DiagnosticsRecorder &) = delete;
  DiagnosticsRecorder &operator=(const DiagnosticsRecorder &) = delete;

  // Fills d2, delta, mu2 and xi2 (beta = 1) of each level record.
  LevelObserver observer();
  const std::vector<LevelDiagnostics> &levels() const { return levels_; }

private:
  struct Previous;
  void record(const LevelState &state, LevelRecord &rec);

  std::vector<ExactEigenpair> exact_;
  DistanceOptions options_;
  std::vector<LevelDiagnostics> levels_;
  std::unique_ptr<Previous> previous_;
};

LevelInvariants check_invariants(const MixedSolver &solver, const EigenCluster &cluster);

// ---------------------------------------------------------------------------
// Reports

enum class Verdict
{
  Pass,
  Fail,
  Skipped,
};

std::string to_string(Verdict v);

struct VerificationItem
{
  std::string name;
  Verdict verdict = Verdict::Skipped;
  std::string detail;
  std::optional<double> value;
};

struct VerificationReport
{
  std::vector<VerificationItem> items;

  void add(std::string name, bool ok, std::string detail = {}, std::optional<double> value = {});
  void skip(std::string name, std::string reason);
  bool passed() const;  // no item failed
  int count(Verdict v) const;
};

// name,verdict,value,detail
void write_report_csv(std::ostream &out, const VerificationReport &report);
void write_report_summary(std::ostream &out, const VerificationReport &report);

}  // namespace mafem
