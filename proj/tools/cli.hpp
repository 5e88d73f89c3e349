// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mafem/adapt.hpp"
#include "mafem/verify.hpp"

namespace mafem::cli
{

enum ExitCode : int
{
  kOk = 0,
  kConfigError = 2,
  kSolverFailure = 3,
  kVerificationFailure = 4,
};

struct RunManifest
{
  std::string domain = "square";  // square, lshape, or empty when mesh_file is set
  std::string mesh_file;
  int initial_refine = 2;  // uniform refinements of the initial mesh before the loop
  FeDegree degree;
  ClusterSpec cluster;
  double theta = 0.5;
  StopCriteria stop;
  bool diagnostics = false;
  bool timing = false;
  bool export_mesh = false;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "afem-out";
};

// "first:last" with 1-based inclusive indices, e.g. "2:3" for {lambda_2, lambda_3}.
ClusterSpec parse_cluster(const std::string &text);
std::string format_cluster(const ClusterSpec &cluster);

// key = value lines of every field that influences results (not the output directory).
std::string canonical_text(const RunManifest &manifest);
std::uint64_t fnv1a(const std::string &bytes);
std::string manifest_hash(const RunManifest &manifest);
std::string hex64(std::uint64_t value);

// Throws ConfigError on invalid values, missing files, or an unwritable output directory.
void validate(const RunManifest &manifest);
Mesh initial_mesh(const RunManifest &manifest);
AfemConfig afem_config(const RunManifest &manifest);

// Relative output directories are placed under AFEM_OUTPUT_ROOT when it is set.
std::filesystem::path resolve_output(const std::filesystem::path &dir);

void write_manifest(const std::filesystem::path &file, const RunManifest &manifest);
// Parses a manifest written by write_manifest; returns the recorded hash.
std::pair<RunManifest, std::string> read_manifest(const std::filesystem::path &file);

struct RunResult
{
  AfemHistory history;
  std::vector<LevelDiagnostics> diagnostics;
};

// Executes the AFEM loop and writes history.csv, indicators/, marks/,
// manifest.txt and, on request, meshes/ and diagnostics.csv.
RunResult cmd_run(const RunManifest &manifest, std::ostream &log);

// Rate table

struct CsvTable
{
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::optional<std::size_t> column(const std::string &name) const;
};

CsvTable read_csv_table(std::istream &in);

struct RateOptions
{
  std::string x = "dofs";            // column, or n_sigma + n_u when absent
  int trailing = 0;                  // number of trailing levels, 0 for all
  std::optional<double> reference;   // turns lambda_j columns into errors
};

struct RateRow
{
  std::string quantity;
  int levels = 0;
  RateFit fit;
};

std::vector<RateRow> rate_table(const CsvTable &table, const RateOptions &options);

// Verification

VerificationReport verify_run(const RunManifest &manifest, std::ostream &log);
// Re-checks the artifacts of a previous run: manifest hash, dumps, bulk criterion,
// history consistency, and diagnostics when present.
VerificationReport verify_run_dir(const std::filesystem::path &dir);

// Entry point; returns the process exit code.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

}  // namespace mafem::cli
