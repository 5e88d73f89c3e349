// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mafem/assembly.hpp"
#include "mafem/eigsolve.hpp"
#include "mafem/estimator.hpp"
#include "mafem/fespace.hpp"
#include "mafem/mesh.hpp"

namespace mafem
{

struct StopCriteria
{
  int max_levels = 100;
  Index max_dofs = 200000;  // n_sigma + n_u
  double eta2_tolerance = 0;
};

struct AfemConfig
{
  double theta = 0.5;
  ClusterSpec cluster;
  FeDegree degree;
  StopCriteria stop;
  bool diagnostics = false;
  bool record_timing = true;
  EigenSolverOptions solver;
};

// Throws ConfigError on theta outside (0,1], unsupported degrees, bad clusters.
void validate(const AfemConfig &config);

struct LevelRecord
{
  int level = 0;
  Index card_T = 0;
  Index n_sigma = 0;
  Index n_u = 0;
  std::vector<double> lambda;
  double eta2 = 0;
  Index card_M = 0;
  double wall_ms = 0;
  std::optional<double> d2, delta, mu2, xi2;

  Index dofs() const { return n_sigma + n_u; }
  bool operator==(const LevelRecord &) const = default;
};

enum class AfemStatus
{
  Completed,
  Converged,        // all indicators vanished
  SeparationLost,   // cluster guard violated
  SolverFailure,
};

struct AfemHistory
{
  std::vector<LevelRecord> levels;
  AfemStatus status = AfemStatus::Completed;
  std::string message;
  int cluster_size = 1;
  bool has_diagnostics = false;
};

// Per-level artifacts handed to observers before marking results are applied.
struct LevelState
{
  int level;
  const Mesh &mesh;
  const DofMap &dofs;
  const MixedSolver &solver;
  const EigenCluster &cluster;
  const IndicatorField &indicators;
  const MarkSet &marked;
};

using LevelObserver = std::function<void(const LevelState &, LevelRecord &)>;

// Minimal set carrying a theta-fraction of the summed indicator: elements in
// descending order of their value (ties by ascending id), shortest prefix.
MarkSet dorfler_mark(const Vec &element_indicators, double theta);
MarkSet dorfler_mark(const IndicatorField &field, double theta);

bool satisfies_bulk_criterion(const Vec &element_indicators, const MarkSet &marked, double theta);

AfemHistory run_afem(const AfemConfig &config, const Mesh &initial,
                     const LevelObserver &observer = nullptr);

// level,card_T,n_sigma,n_u,lambda_1..lambda_N,eta2,card_M,wall_ms[,d2,delta,mu2,xi2]
void write_history_csv(std::ostream &out, const AfemHistory &history);
AfemHistory read_history_csv(std::istream &in);
std::string history_header(int cluster_size, bool diagnostics);

}  // namespace mafem
