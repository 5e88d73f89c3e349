// SPDX-License-Identifier: Apache-2.0

#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "mafem/adapt.hpp"

namespace mafem
{

namespace
{

std::vector<std::string> split_csv(const std::string &line)
{
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ','))
  {
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',')
  {
    cells.emplace_back();
  }
  return cells;
}

double parse_double(const std::string &cell)
{
  std::size_t pos = 0;
  const double v = std::stod(cell, &pos);
  if (pos != cell.size())
  {
    throw Error("history CSV: bad number '" + cell + "'");
  }
  return v;
}

}  // namespace

std::string history_header(int cluster_size, bool diagnostics)
{
  std::string h = "level,card_T,n_sigma,n_u";
  for (int j = 1; j <= cluster_size; ++j)
  {
    h += ",lambda_" + std::to_string(j);
  }
  h += ",eta2,card_M,wall_ms";
  if (diagnostics)
  {
    h += ",d2,delta,mu2,xi2";
  }
  return h;
}

void write_history_csv(std::ostream &out, const AfemHistory &history)
{
  out << history_header(history.cluster_size, history.has_diagnostics) << '\n';
  out << std::setprecision(17);
  auto opt = [&](const std::optional<double> &v) {
    out << ',';
    if (v)
    {
      out << *v;
    }
  };
  for (const auto &rec : history.levels)
  {
    out << rec.level << ',' << rec.card_T << ',' << rec.n_sigma << ',' << rec.n_u;
    for (double l : rec.lambda)
    {
      out << ',' << l;
    }
    out << ',' << rec.eta2 << ',' << rec.card_M << ',' << rec.wall_ms;
    if (history.has_diagnostics)
    {
      opt(rec.d2);
      opt(rec.delta);
      opt(rec.mu2);
      opt(rec.xi2);
    }
    out << '\n';
  }
}

AfemHistory read_history_csv(std::istream &in)
{
  std::string line;
  if (!std::getline(in, line))
  {
    throw Error("history CSV: empty input");
  }
  const auto header = split_csv(line);
  int cluster_size = 0;
  while (4 + cluster_size < static_cast<int>(header.size()) &&
         header[4 + cluster_size] == "lambda_" + std::to_string(cluster_size + 1))
  {
    ++cluster_size;
  }
  if (cluster_size == 0)
  {
    throw Error("history CSV: no lambda columns");
  }
  AfemHistory history;
  history.cluster_size = cluster_size;
  const bool diagnostics = header.size() == static_cast<std::size_t>(4 + cluster_size + 7);
  if (line != history_header(cluster_size, diagnostics))
  {
    throw Error("history CSV: unexpected header '" + line + "'");
  }
  history.has_diagnostics = diagnostics;

  while (std::getline(in, line))
  {
    if (line.empty())
    {
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
    {
      throw Error("history CSV: row has " + std::to_string(cells.size()) + " columns, expected " +
                  std::to_string(header.size()));
    }
    try
    {
      LevelRecord rec;
      std::size_t c = 0;
      rec.level = std::stoi(cells[c++]);
      rec.card_T = static_cast<Index>(std::stol(cells[c++]));
      rec.n_sigma = static_cast<Index>(std::stol(cells[c++]));
      rec.n_u = static_cast<Index>(std::stol(cells[c++]));
      for (int j = 0; j < cluster_size; ++j)
      {
        rec.lambda.push_back(parse_double(cells[c++]));
      }
      rec.eta2 = parse_double(cells[c++]);
      rec.card_M = static_cast<Index>(std::stol(cells[c++]));
      rec.wall_ms = parse_double(cells[c++]);
      if (diagnostics)
      {
        for (auto *field : {&rec.d2, &rec.delta, &rec.mu2, &rec.xi2})
        {
          const auto &cell = cells[c++];
          if (!cell.empty())
          {
            *field = parse_double(cell);
          }
        }
      }
      history.levels.push_back(std::move(rec));
    }
    catch (const std::invalid_argument &)
    {
      throw Error("history CSV: malformed row '" + line + "'");
    }
    catch (const std::out_of_range &)
    {
      throw Error("history CSV: value out of range in '" + line + "'");
    }
  }
  return history;
}

}  // namespace mafem
