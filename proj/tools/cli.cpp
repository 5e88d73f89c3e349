// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

namespace mafem::cli
{

namespace fs = std::filesystem;

namespace
{

std::string shortest(double v)
{
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string level_name(int level)
{
  std::ostringstream s;
  s << "level_" << std::setw(3) << std::setfill('0') << level;
  return s.str();
}

std::ofstream open_out(const fs::path &file)
{
  std::ofstream out(file);
  if (!out)
  {
    throw ConfigError("cannot write " + file.string());
  }
  out << std::setprecision(17);
  return out;
}

std::ifstream open_in(const fs::path &file)
{
  std::ifstream in(file);
  if (!in)
  {
    throw Error("cannot read " + file.string());
  }
  return in;
}

std::string read_file(const fs::path &file)
{
  std::ifstream in = open_in(file);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string trim(const std::string &s)
{
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::optional<std::vector<ExactEigenpair>> reference_pairs(const RunManifest &m)
{
  if (m.mesh_file.empty() && m.domain == "square")
  {
    return square_cluster(m.cluster);
  }
  return std::nullopt;
}

void write_diagnostics_csv(std::ostream &out, const std::vector<LevelDiagnostics> &levels)
{
  out << "level,h_max,dofs,d2,delta,mu2,eta2,epsilon,eigenvalue_error,qo_residual,"
         "lower_holds,upper_holds,energy_defect,orthonormality,conforming,nested\n";
  for (const auto &d : levels)
  {
    out << d.level << ',' << d.h_max << ',' << d.dofs << ',' << d.d2 << ',' << d.delta << ','
        << d.mu2 << ',' << d.eta2 << ',' << d.epsilon << ',' << d.eigenvalue_error << ',';
    if (d.qo_residual)
    {
      out << *d.qo_residual;
    }
    out << ',' << d.comparison.lower_holds << ',' << d.comparison.upper_holds << ','
        << d.invariants.energy_defect << ',' << d.invariants.orthonormality << ','
        << d.invariants.conforming << ',' << d.invariants.nested << '\n';
  }
}

MarkSet read_marks(const fs::path &file)
{
  std::ifstream in = open_in(file);
  MarkSet marks;
  for (std::string line; std::getline(in, line);)
  {
    line = trim(line);
    if (line.empty())
    {
      continue;
    }
    Index id = 0;
    const auto res = std::from_chars(line.data(), line.data() + line.size(), id);
    if (res.ec != std::errc() || res.ptr != line.data() + line.size() || id < 0)
    {
      throw Error("malformed mark list " + file.string());
    }
    marks.push_back(id);
  }
  return marks;
}

void add_contraction(VerificationReport &report, const AfemHistory &history)
{
  if (history.levels.size() < 4)
  {
    report.skip("contraction", "fewer than four levels");
    return;
  }
  std::string detail;
  bool any = false;
  for (double beta : {0.1, 1.0, 10.0})
  {
    const ContractionTrace t = contraction_trace(history, beta);
    const bool ok = t.contracts_from(2);
    any = any || ok;
    detail += (detail.empty() ? "" : "; ") + std::string("beta=") + shortest(beta) +
              (ok ? " contracts" : " does not contract");
  }
  report.add("contraction", any, detail);
}

void add_gap_check(VerificationReport &report, const std::vector<int> &levels,
                   const std::vector<double> &errors, const std::vector<double> &delta)
{
  std::vector<int> lv;
  std::vector<double> err, del;
  for (std::size_t i = 0; i < levels.size(); ++i)
  {
    if (levels[i] >= 3)
    {
      lv.push_back(levels[i]);
      err.push_back(errors[i]);
      del.push_back(delta[i]);
    }
  }
  if (lv.size() < 2)
  {
    report.skip("eigenvalue error / delta^2", "fewer than two levels from level 3 on");
    return;
  }
  const GapCheck g = eigenvalue_gap_check(lv, err, del);
  report.add("eigenvalue error / delta^2", g.passed, "spread " + shortest(g.spread), g.spread);
}

// Randomized refinement pairs: card(T1 (+) T2) <= card T1 + card T2 - card T0.
void add_overlay_check(VerificationReport &report, const Mesh &initial, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.2);
  auto random_refinement = [&]() {
    Mesh m = initial;
    for (int step = 0; step < 4; ++step)
    {
      MarkSet marks;
      for (Index t = 0; t < m.num_triangles(); ++t)
      {
        if (coin(rng))
        {
          marks.push_back(t);
        }
      }
      m = refine(m, marks);
    }
    return m;
  };
  int failures = 0;
  const int pairs = 10;
  for (int i = 0; i < pairs; ++i)
  {
    const Mesh a = random_refinement();
    const Mesh b = random_refinement();
    const Mesh o = overlay(a, b);
    const bool ok = o.num_triangles() <= a.num_triangles() + b.num_triangles() - initial.num_triangles() &&
                    is_conforming(o) && is_refinement(a, o) && is_refinement(b, o);
    failures += ok ? 0 : 1;
  }
  report.add("overlay cardinality", failures == 0,
             std::to_string(pairs) + " random pairs, seed " + std::to_string(seed));
}

void write_error(std::ostream &err, const std::optional<fs::path> &dir, const std::string &kind,
                 int code, const std::string &message)
{
  const nlohmann::json record = {{"error", kind}, {"exit_code", code}, {"message", message}};
  err << record.dump() << '\n';
  if (dir)
  {
    std::error_code ec;
    fs::create_directories(*dir, ec);
    std::ofstream file(*dir / "error.json");
    if (file)
    {
      file << record.dump(2) << '\n';
    }
  }
}

// Replaces "--config FILE" after a subcommand by the options the file sets, placed
// before the remaining arguments so explicit flags take precedence. Keys without a
// matching option (such as the recorded hash) are ignored.
std::vector<std::string> expand_config(const CLI::App &app, const std::vector<std::string> &args)
{
  if (args.empty())
  {
    return args;
  }
  const CLI::App *cmd = nullptr;
  try
  {
    cmd = app.get_subcommand(args[0]);
  }
  catch (const CLI::OptionNotFound &)
  {
    return args;
  }
  std::vector<std::string> rest;
  std::optional<std::string> file;
  for (std::size_t i = 1; i < args.size(); ++i)
  {
    if (args[i] == "--config" && i + 1 < args.size())
    {
      file = args[++i];
    }
    else if (args[i].rfind("--config=", 0) == 0)
    {
      file = args[i].substr(9);
    }
    else
    {
      rest.push_back(args[i]);
    }
  }
  std::vector<std::string> out{args[0]};
  if (file)
  {
    std::ifstream in(*file);
    if (!in)
    {
      throw CLI::FileError::Missing(*file);
    }
    for (const CLI::ConfigItem &item : CLI::ConfigTOML().from_config(in))
    {
      const std::string name = "--" + item.name;
      if (!item.parents.empty() || item.inputs.empty() || !cmd->get_option_no_throw(name))
      {
        continue;
      }
      out.push_back(name + "=" + item.inputs.front());
    }
  }
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

ClusterSpec parse_cluster(const std::string &text)
{
  const auto colon = text.find(':');
  int first = 0, last = 0;
  auto parse = [&](const std::string &s, int &v) {
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
  };
  const bool ok = colon == std::string::npos
                      ? parse(text, first) && (last = first, true)
                      : parse(text.substr(0, colon), first) && parse(text.substr(colon + 1), last);
  if (!ok || first < 1 || last < first)
  {
    throw ConfigError("invalid cluster '" + text + "', expected first:last with 1 <= first <= last");
  }
  ClusterSpec c;
  c.n = first - 1;
  c.size = last - first + 1;
  return c;
}

std::string format_cluster(const ClusterSpec &cluster)
{
  return std::to_string(cluster.first()) + ":" + std::to_string(cluster.last());
}

std::string canonical_text(const RunManifest &m)
{
  std::ostringstream s;
  if (m.mesh_file.empty())
  {
    s << "domain = " << m.domain << '\n';
  }
  else
  {
    s << "mesh = " << m.mesh_file << '\n';
    s << "mesh-hash = " << hex64(fnv1a(read_file(m.mesh_file))) << '\n';
  }
  s << "initial-refine = " << m.initial_refine << '\n'
    << "degree = " << to_string(m.degree) << '\n'
    << "cluster = " << format_cluster(m.cluster) << '\n'
    << "theta = " << shortest(m.theta) << '\n'
    << "max-levels = " << m.stop.max_levels << '\n'
    << "max-dofs = " << m.stop.max_dofs << '\n'
    << "eta-tol = " << shortest(m.stop.eta2_tolerance) << '\n'
    << "diagnostics = " << (m.diagnostics ? "true" : "false") << '\n'
    << "timing = " << (m.timing ? "true" : "false") << '\n'
    << "export-mesh = " << (m.export_mesh ? "true" : "false") << '\n'
    << "seed = " << m.seed << '\n';
  return s.str();
}

std::uint64_t fnv1a(const std::string &bytes)
{
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes)
  {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t value)
{
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << value;
  return s.str();
}

std::string manifest_hash(const RunManifest &manifest) { return hex64(fnv1a(canonical_text(manifest))); }

void validate(const RunManifest &m)
{
  if (m.mesh_file.empty())
  {
    if (!parse_domain(m.domain))
    {
      throw ConfigError("unknown domain '" + m.domain + "'");
    }
  }
  else if (!fs::is_regular_file(m.mesh_file))
  {
    throw ConfigError("mesh file not found: " + m.mesh_file);
  }
  if (m.initial_refine < 0 || m.initial_refine > 8)
  {
    throw ConfigError("initial-refine must lie in [0,8], got " + std::to_string(m.initial_refine));
  }
  mafem::validate(afem_config(m));
  if (m.diagnostics && !reference_pairs(m))
  {
    throw ConfigError("diagnostics need exact eigenfunctions, available on the square only");
  }
  std::error_code ec;
  fs::create_directories(m.output_dir, ec);
  if (ec || !fs::is_directory(m.output_dir))
  {
    throw ConfigError("cannot create output directory " + m.output_dir.string());
  }
  const fs::path probe = m.output_dir / ".write-test";
  {
    std::ofstream out(probe);
    if (!out)
    {
      throw ConfigError("output directory not writable: " + m.output_dir.string());
    }
  }
  fs::remove(probe, ec);
}

Mesh initial_mesh(const RunManifest &m)
{
  if (!m.mesh_file.empty())
  {
    return uniform_refine(read_mesh_file(m.mesh_file), m.initial_refine);
  }
  const auto domain = parse_domain(m.domain);
  if (!domain)
  {
    throw ConfigError("unknown domain '" + m.domain + "'");
  }
  return uniform_refine(load_initial_mesh(*domain), m.initial_refine);
}

AfemConfig afem_config(const RunManifest &m)
{
  AfemConfig cfg;
  cfg.theta = m.theta;
  cfg.cluster = m.cluster;
  cfg.degree = m.degree;
  cfg.stop = m.stop;
  cfg.diagnostics = m.diagnostics;
  cfg.record_timing = m.timing;
  return cfg;
}

fs::path resolve_output(const fs::path &dir)
{
  const char *root = std::getenv("AFEM_OUTPUT_ROOT");
  if (root && *root && dir.is_relative())
  {
    return fs::path(root) / dir;
  }
  return dir;
}

void write_manifest(const fs::path &file, const RunManifest &m)
{
  std::ofstream out = open_out(file);
  out << canonical_text(m) << "hash = " << manifest_hash(m) << '\n';
}

std::pair<RunManifest, std::string> read_manifest(const fs::path &file)
{
  std::ifstream in = open_in(file);
  std::map<std::string, std::string> kv;
  for (std::string line; std::getline(in, line);)
  {
    const auto eq = line.find('=');
    if (trim(line).empty())
    {
      continue;
    }
    if (eq == std::string::npos)
    {
      throw ConfigError("malformed manifest line: " + line);
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto get = [&](const std::string &key) {
    const auto it = kv.find(key);
    if (it == kv.end())
    {
      throw ConfigError("manifest lacks '" + key + "'");
    }
    return it->second;
  };
  RunManifest m;
  try
  {
    if (kv.count("mesh"))
    {
      m.mesh_file = kv["mesh"];
      m.domain.clear();
    }
    else
    {
      m.domain = get("domain");
    }
    m.initial_refine = std::stoi(get("initial-refine"));
    const auto degree = parse_degree(get("degree"));
    if (!degree)
    {
      throw ConfigError("invalid degree in manifest");
    }
    m.degree = *degree;
    m.cluster = parse_cluster(get("cluster"));
    m.theta = std::stod(get("theta"));
    m.stop.max_levels = std::stoi(get("max-levels"));
    m.stop.max_dofs = std::stoi(get("max-dofs"));
    m.stop.eta2_tolerance = std::stod(get("eta-tol"));
    m.diagnostics = get("diagnostics") == "true";
    m.timing = get("timing") == "true";
    m.export_mesh = get("export-mesh") == "true";
    m.seed = std::stoull(get("seed"));
  }
  catch (const std::logic_error &e)
  {
    throw ConfigError(std::string("malformed manifest value: ") + e.what());
  }
  m.output_dir = file.parent_path();
  return {m, get("hash")};
}

// ---------------------------------------------------------------------------
// run

RunResult cmd_run(const RunManifest &m, std::ostream &log)
{
  validate(m);
  const Mesh initial = initial_mesh(m);
  const AfemConfig cfg = afem_config(m);
  fs::create_directories(m.output_dir / "indicators");
  fs::create_directories(m.output_dir / "marks");
  if (m.export_mesh)
  {
    fs::create_directories(m.output_dir / "meshes");
  }
  write_manifest(m.output_dir / "manifest.txt", m);

  std::vector<int> members;
  for (int j = m.cluster.first(); j <= m.cluster.last(); ++j)
  {
    members.push_back(j);
  }
  std::unique_ptr<DiagnosticsRecorder> recorder;
  LevelObserver diagnostics;
  if (m.diagnostics)
  {
    recorder = std::make_unique<DiagnosticsRecorder>(*reference_pairs(m));
    diagnostics = recorder->observer();
  }
  const auto observer = [&](const LevelState &s, LevelRecord &rec) {
    if (diagnostics)
    {
      diagnostics(s, rec);
    }
    const std::string name = level_name(s.level);
    {
      std::ofstream out = open_out(m.output_dir / "indicators" / (name + ".csv"));
      write_indicator_csv(out, s.indicators, members);
    }
    {
      std::ofstream out = open_out(m.output_dir / "marks" / (name + ".txt"));
      for (Index t : s.marked)
      {
        out << t << '\n';
      }
    }
    if (m.export_mesh)
    {
      write_mesh_file((m.output_dir / "meshes" / (name + ".mesh")).string(), s.mesh);
      std::ofstream vtk = open_out(m.output_dir / "meshes" / (name + ".vtk"));
      const Vec sums = s.indicators.element_sums();
      const std::vector<double> cell(sums.data(), sums.data() + sums.size());
      write_vtk(vtk, s.mesh, &cell);
    }
    log << "level " << s.level << ": card_T=" << rec.card_T << " dofs=" << rec.dofs()
        << " eta2=" << rec.eta2 << " lambda_" << m.cluster.first() << "=" << rec.lambda[0] << '\n';
  };

  RunResult result;
  result.history = run_afem(cfg, initial, observer);
  {
    std::ofstream out = open_out(m.output_dir / "history.csv");
    write_history_csv(out, result.history);
  }
  if (recorder)
  {
    result.diagnostics = recorder->levels();
    std::ofstream out = open_out(m.output_dir / "diagnostics.csv");
    write_diagnostics_csv(out, result.diagnostics);
  }
  return result;
}

// ---------------------------------------------------------------------------
// rates

std::optional<std::size_t> CsvTable::column(const std::string &name) const
{
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end())
  {
    return std::nullopt;
  }
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv_table(std::istream &in)
{
  CsvTable table;
  std::string line;
  if (!std::getline(in, line))
  {
    throw Error("empty CSV");
  }
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');)
  {
    table.header.push_back(trim(cell));
  }
  int row_number = 1;
  while (std::getline(in, line))
  {
    ++row_number;
    if (trim(line).empty())
    {
      continue;
    }
    std::vector<double> row;
    std::stringstream rs(line);
    for (std::string cell; std::getline(rs, cell, ',');)
    {
      cell = trim(cell);
      double v = std::nan("");
      if (!cell.empty())
      {
        const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        {
          throw Error("malformed CSV value '" + cell + "' in row " + std::to_string(row_number));
        }
      }
      row.push_back(v);
    }
    if (line.back() == ',')
    {
      row.push_back(std::nan(""));
    }
    if (row.size() != table.header.size())
    {
      throw Error("CSV row " + std::to_string(row_number) + " has " + std::to_string(row.size()) +
                  " fields, header has " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<RateRow> rate_table(const CsvTable &table, const RateOptions &options)
{
  std::size_t first = 0;
  if (options.trailing > 0 && table.rows.size() > static_cast<std::size_t>(options.trailing))
  {
    first = table.rows.size() - options.trailing;
  }
  const std::size_t n = table.rows.size() - first;
  if (n < 3)
  {
    throw Error("rate fitting needs at least 3 levels, got " + std::to_string(n));
  }
  std::vector<double> x(n);
  const auto xcol = table.column(options.x);
  const auto ns = table.column("n_sigma"), nu = table.column("n_u");
  if (!xcol && !(options.x == "dofs" && ns && nu))
  {
    throw Error("CSV lacks the abscissa column '" + options.x + "'");
  }
  for (std::size_t i = 0; i < n; ++i)
  {
    const auto &row = table.rows[first + i];
    x[i] = xcol ? row[*xcol] : row[*ns] + row[*nu];
  }
  static const std::vector<std::string> skip{"level", "card_T", "n_sigma", "n_u", "card_M", "wall_ms"};
  std::vector<RateRow> out;
  for (std::size_t c = 0; c < table.header.size(); ++c)
  {
    const std::string &name = table.header[c];
    if ((xcol && c == *xcol) || std::find(skip.begin(), skip.end(), name) != skip.end())
    {
      continue;
    }
    const bool is_lambda = name.rfind("lambda_", 0) == 0;
    if (is_lambda && !options.reference)
    {
      continue;
    }
    std::vector<double> y(n);
    bool usable = true;
    for (std::size_t i = 0; i < n; ++i)
    {
      const double v = table.rows[first + i][c];
      y[i] = is_lambda ? std::abs(v - *options.reference) : v;
      usable = usable && std::isfinite(y[i]) && y[i] > 0;
    }
    if (!usable)
    {
      continue;
    }
    out.push_back({is_lambda ? "err_" + name : name, static_cast<int>(n), fit_rate(x, y)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// verify

VerificationReport verify_run(const RunManifest &manifest, std::ostream &log)
{
  RunManifest m = manifest;
  const auto exact = reference_pairs(m);
  m.diagnostics = exact.has_value();
  validate(m);
  const Mesh initial = initial_mesh(m);

  std::unique_ptr<DiagnosticsRecorder> recorder;
  LevelObserver diagnostics;
  if (exact)
  {
    recorder = std::make_unique<DiagnosticsRecorder>(*exact);
    diagnostics = recorder->observer();
  }
  bool bulk = true, conforming = true, nested = true;
  double energy = 0, ortho = 0;
  std::optional<Mesh> previous;
  const auto observer = [&](const LevelState &s, LevelRecord &rec) {
    if (diagnostics)
    {
      diagnostics(s, rec);
    }
    bulk = bulk && satisfies_bulk_criterion(s.indicators.element_sums(), s.marked, m.theta);
    const LevelInvariants inv = check_invariants(s.solver, s.cluster);
    energy = std::max(energy, inv.energy_defect);
    ortho = std::max(ortho, inv.orthonormality);
    conforming = conforming && is_conforming(s.mesh);
    nested = nested && (!previous || is_nested(*previous, s.mesh));
    previous = s.mesh;
    log << "level " << s.level << ": dofs=" << rec.dofs() << " eta2=" << rec.eta2 << '\n';
  };
  const AfemHistory history = run_afem(afem_config(m), initial, observer);
  if (history.status == AfemStatus::SolverFailure)
  {
    throw SolverError(history.message);
  }

  VerificationReport report;
  report.add("cluster separation", history.status != AfemStatus::SeparationLost, history.message);
  report.add("bulk criterion", bulk, std::to_string(history.levels.size()) + " levels");
  report.add("energy identity", energy <= 1e-8, "max relative defect " + shortest(energy), energy);
  report.add("orthonormality", ortho <= 1e-10, "max defect " + shortest(ortho), ortho);
  report.add("conformity", conforming);
  report.add("nestedness", nested);
  add_overlay_check(report, initial, m.seed);

  if (!recorder)
  {
    for (const char *name : {"estimator lower bound", "estimator upper bound", "contraction",
                             "eigenvalue error / delta^2"})
    {
      report.skip(name, "no exact eigenfunctions for this domain");
    }
    return report;
  }
  const auto &levels = recorder->levels();
  bool lower = true, upper = true;
  std::vector<int> lv;
  std::vector<double> err, del;
  for (const auto &d : levels)
  {
    lower = lower && d.comparison.lower_holds;
    upper = upper && d.comparison.upper_holds;
    lv.push_back(d.level);
    err.push_back(d.eigenvalue_error);
    del.push_back(d.delta);
  }
  report.add("estimator lower bound", lower, "all levels");
  report.add("estimator upper bound", upper, "all levels");
  add_contraction(report, history);
  add_gap_check(report, lv, err, del);
  return report;
}

VerificationReport verify_run_dir(const fs::path &dir)
{
  VerificationReport report;
  const auto [m, recorded] = read_manifest(dir / "manifest.txt");
  std::string actual;
  try
  {
    actual = manifest_hash(m);
  }
  catch (const Error &e)
  {
    actual = std::string("unavailable: ") + e.what();
  }
  report.add("manifest hash", actual == recorded, "recorded " + recorded + ", computed " + actual);

  AfemHistory history;
  try
  {
    std::ifstream in = open_in(dir / "history.csv");
    history = read_history_csv(in);
  }
  catch (const Error &e)
  {
    report.add("history", false, e.what());
    return report;
  }
  report.add("history", history.cluster_size == m.cluster.size,
             std::to_string(history.levels.size()) + " levels");

  bool dumps = true, bulk = true, sums = true;
  std::string detail;
  for (const auto &rec : history.levels)
  {
    const std::string name = level_name(rec.level);
    try
    {
      std::ifstream in = open_in(dir / "indicators" / (name + ".csv"));
      const IndicatorField f = read_indicator_csv(in);
      if (f.elements() != rec.card_T || f.members() != history.cluster_size)
      {
        throw Error("shape does not match history");
      }
      const double total = aggregate(f);
      if (std::abs(total - rec.eta2) > 1e-10 * std::max(1.0, std::abs(rec.eta2)))
      {
        sums = false;
        detail += name + ": indicator sum differs from eta2; ";
      }
      const MarkSet marks = read_marks(dir / "marks" / (name + ".txt"));
      if (static_cast<Index>(marks.size()) != rec.card_M ||
          (!marks.empty() && !satisfies_bulk_criterion(f.element_sums(), marks, m.theta)))
      {
        bulk = false;
        detail += name + ": bulk criterion fails; ";
      }
    }
    catch (const Error &e)
    {
      dumps = false;
      detail += name + ": " + e.what() + "; ";
    }
  }
  report.add("indicator dumps", dumps, detail);
  report.add("indicator sums", sums);
  report.add("bulk criterion", bulk);

  if (!history.has_diagnostics)
  {
    report.skip("contraction", "history has no diagnostics");
    report.skip("eigenvalue error / delta^2", "history has no diagnostics");
    return report;
  }
  add_contraction(report, history);
  const auto exact = reference_pairs(m);
  if (!exact)
  {
    report.skip("eigenvalue error / delta^2", "no exact eigenvalues for this domain");
    return report;
  }
  std::vector<double> ev;
  for (const auto &e : *exact)
  {
    ev.push_back(e.lambda);
  }
  std::vector<int> lv;
  std::vector<double> err, del;
  for (const auto &rec : history.levels)
  {
    lv.push_back(rec.level);
    err.push_back(sup_inf_eigenvalue_error(ev, rec.lambda));
    del.push_back(rec.delta.value_or(0));
  }
  add_gap_check(report, lv, err, del);
  return report;
}

// ---------------------------------------------------------------------------
// Command line

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err)
{
  CLI::App app{"Adaptive mixed finite elements for Laplace eigenvalue clusters", "mafem"};
  app.require_subcommand(1);

  // Each manifest subcommand binds its own settings; verify stops earlier by default.
  struct Settings
  {
    RunManifest m;
    std::string config_file, degree = "rt0", cluster = "1:1", out_dir;
  };
  Settings run_s, verify_s;
  verify_s.m.stop.max_levels = 12;
  auto add_manifest_options = [](CLI::App *cmd, Settings &s) {
    RunManifest &m = s.m;
    s.out_dir = m.output_dir.string();
    cmd->add_option("--config", s.config_file, "Flat key = value file with option defaults");
    cmd->add_option("--domain", m.domain, "square or lshape")->capture_default_str();
    cmd->add_option("--mesh", m.mesh_file, "Initial mesh file (overrides --domain)");
    cmd->add_option("--initial-refine", m.initial_refine, "Uniform refinements before the loop")
        ->capture_default_str();
    cmd->add_option("--degree", s.degree, "rt0, rt1 or rt2")->capture_default_str();
    cmd->add_option("--cluster", s.cluster, "Eigenvalue indices first:last, 1-based")->capture_default_str();
    cmd->add_option("--theta", m.theta, "Bulk parameter in (0,1]")->capture_default_str();
    cmd->add_option("--max-levels", m.stop.max_levels)->capture_default_str();
    cmd->add_option("--max-dofs", m.stop.max_dofs)->capture_default_str();
    cmd->add_option("--eta-tol", m.stop.eta2_tolerance, "Stop when eta^2 falls below")->capture_default_str();
    cmd->add_option("--seed", m.seed, "Seed for randomized checks")->capture_default_str();
    cmd->add_option("--out", s.out_dir, "Output directory, relative to AFEM_OUTPUT_ROOT if set")
        ->capture_default_str();
  };

  CLI::App *run = app.add_subcommand("run", "Run an adaptive study");
  add_manifest_options(run, run_s);
  run->add_flag("--diagnostics", run_s.m.diagnostics, "Record d, delta and mu (square only)");
  run->add_flag("--timing,!--no-timing", run_s.m.timing, "Record wall times in the history");
  run->add_flag("--export-mesh", run_s.m.export_mesh, "Write meshes and VTK files per level");

  CLI::App *rates = app.add_subcommand("rates", "Fit convergence rates to history files");
  std::vector<std::string> files;
  RateOptions rate_opts;
  double reference = 0;
  rates->add_option("files", files, "History CSV files")->required()->check(CLI::ExistingFile);
  rates->add_option("--x", rate_opts.x, "Abscissa column")->capture_default_str();
  rates->add_option("--trailing", rate_opts.trailing, "Number of trailing levels, 0 for all")
      ->capture_default_str();
  auto *ref_opt = rates->add_option("--reference", reference, "Reference eigenvalue");

  CLI::App *verify = app.add_subcommand("verify", "Verify a study or the artifacts of a run");
  add_manifest_options(verify, verify_s);
  std::string run_dir;
  verify->add_option("--run-dir", run_dir, "Re-check the artifacts in this directory");

  // Later occurrences override values expanded from a config file.
  for (CLI::App *cmd : {run, verify})
  {
    for (CLI::Option *opt : cmd->get_options())
    {
      opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
  }

  std::optional<fs::path> error_dir;
  try
  {
    std::vector<std::string> reversed = expand_config(app, args);
    std::reverse(reversed.begin(), reversed.end());
    app.parse(reversed);
  }
  catch (const CLI::ParseError &e)
  {
    if (e.get_exit_code() == 0)
    {
      return app.exit(e, out, err);
    }
    write_error(err, std::nullopt, "config", kConfigError, e.what());
    return kConfigError;
  }

  try
  {
    Settings &settings = verify->parsed() ? verify_s : run_s;
    RunManifest &m = settings.m;
    if (!rates->parsed())
    {
      const auto &degree = settings.degree;
      const auto d = parse_degree(degree);
      if (!d)
      {
        throw ConfigError("invalid degree '" + degree + "'");
      }
      m.degree = *d;
      m.cluster = parse_cluster(settings.cluster);
      m.output_dir = resolve_output(settings.out_dir);
      if (!m.mesh_file.empty())
      {
        m.domain.clear();
      }
      error_dir = m.output_dir;
    }

    if (run->parsed())
    {
      const RunResult r = cmd_run(m, err);
      out << "wrote " << r.history.levels.size() << " levels to " << m.output_dir.string()
          << " (manifest " << manifest_hash(m) << ", " << r.history.message << ")\n";
      if (r.history.status == AfemStatus::SolverFailure)
      {
        write_error(err, error_dir, "solver", kSolverFailure, r.history.message);
        return kSolverFailure;
      }
      if (r.history.status == AfemStatus::SeparationLost)
      {
        write_error(err, error_dir, "separation", kSolverFailure, r.history.message);
        return kSolverFailure;
      }
      return kOk;
    }

    if (rates->parsed())
    {
      if (ref_opt->count() > 0)
      {
        rate_opts.reference = reference;
      }
      out << "file,quantity,levels,slope,intercept,r2\n" << std::setprecision(6);
      for (const auto &file : files)
      {
        std::ifstream in = open_in(file);
        for (const auto &row : rate_table(read_csv_table(in), rate_opts))
        {
          out << file << ',' << row.quantity << ',' << row.levels << ',' << row.fit.slope << ','
              << row.fit.intercept << ',' << row.fit.r2 << '\n';
        }
      }
      return kOk;
    }

    VerificationReport report;
    fs::path report_dir;
    if (!run_dir.empty())
    {
      report_dir = resolve_output(run_dir);
      error_dir = report_dir;
      report = verify_run_dir(report_dir);
    }
    else
    {
      report_dir = m.output_dir;
      report = verify_run(m, err);
    }
    {
      std::ofstream csv = open_out(report_dir / "verify.csv");
      write_report_csv(csv, report);
    }
    write_report_summary(out, report);
    if (!report.passed())
    {
      write_error(err, error_dir, "verification", kVerificationFailure,
                  std::to_string(report.count(Verdict::Fail)) + " checks failed");
      return kVerificationFailure;
    }
    return kOk;
  }
  catch (const ConfigError &e)
  {
    write_error(err, error_dir, "config", kConfigError, e.what());
    return kConfigError;
  }
  catch (const MeshError &e)
  {
    write_error(err, error_dir, "config", kConfigError, e.what());
    return kConfigError;
  }
  catch (const VerificationError &e)
  {
    write_error(err, error_dir, "verification", kVerificationFailure, e.what());
    return kVerificationFailure;
  }
  catch (const SolverError &e)
  {
    write_error(err, error_dir, "solver", kSolverFailure, e.what());
    return kSolverFailure;
  }
  catch (const Error &e)
  {
    // Malformed input files.
    write_error(err, error_dir, "input", kConfigError, e.what());
    return kConfigError;
  }
  catch (const std::exception &e)
  {
    write_error(err, error_dir, "solver", kSolverFailure, e.what());
    return kSolverFailure;
  }
}

}  // namespace mafem::cli
