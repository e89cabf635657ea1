#include "f2scil/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "f2scil/error.hpp"

namespace f2scil {

double RunSummary::average() const {
  if (overall.empty()) return 0.0;
  double s = 0.0;
  for (double v : overall) s += v;
  return s / static_cast<double>(overall.size());
}

std::vector<RunSummary> load_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open metrics file " + path.string());
  std::vector<RunSummary> out;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("run_id") || !j.contains("session") || !j.contains("overall"))
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": not a metrics record");
    const std::string id = j["run_id"].get<std::string>();
    auto [it, fresh] = index.emplace(id, out.size());
    if (fresh) out.push_back({id, j.value("method", ""), j.value("seed", std::uint64_t{0}), {}, {}, 1});
    RunSummary& r = out[it->second];
    const auto s = j["session"].get<std::size_t>();
    if (r.overall.size() <= s) {
      r.overall.resize(s + 1, std::numeric_limits<double>::quiet_NaN());
      r.old_acc.resize(s + 1, std::numeric_limits<double>::quiet_NaN());
    }
    r.overall[s] = j["overall"].get<double>();
    if (j.contains("old") && j["old"].is_number()) r.old_acc[s] = j["old"].get<double>();
  }
  if (out.empty()) throw ConfigError("metrics file " + path.string() + " holds no records");
  return out;
}

RunSummary mean_of(const std::vector<RunSummary>& runs) {
  require(!runs.empty(), "mean_of needs at least one run");
  RunSummary m = runs.front();
  m.run_id = runs.size() == 1 ? runs.front().run_id : "mean";
  m.runs = runs.size();
  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (runs[i].overall.size() != m.overall.size())
      throw ConfigError("runs " + runs.front().run_id + " and " + runs[i].run_id + " have different session counts");
    for (std::size_t s = 0; s < m.overall.size(); ++s) {
      m.overall[s] += runs[i].overall[s];
      m.old_acc[s] += runs[i].old_acc[s];
    }
  }
  for (std::size_t s = 0; s < m.overall.size(); ++s) {
    m.overall[s] /= static_cast<double>(runs.size());
    m.old_acc[s] /= static_cast<double>(runs.size());
  }
  return m;
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string signed_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f", 100.0 * v);
  return buf;
}

std::string label(const RunSummary& r) {
  if (r.runs > 1) return r.method + " (mean of " + std::to_string(r.runs) + ")";
  return r.method + " seed " + std::to_string(r.seed);
}

std::size_t max_sessions(const std::vector<RunSummary>& rows) {
  std::size_t n = 0;
  for (const auto& r : rows) n = std::max(n, r.overall.size());
  return n;
}

// Left-aligned first column, right-aligned numeric columns.
std::string layout(const std::vector<std::vector<std::string>>& table) {
  std::vector<std::size_t> width;
  for (const auto& row : table)
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], row[c].size());
    }
  std::ostringstream os;
  for (std::size_t r = 0; r < table.size(); ++r) {
    for (std::size_t c = 0; c < table[r].size(); ++c) {
      const auto& cell = table[r][c];
      const std::string pad(width[c] - cell.size(), ' ');
      os << (c ? "  " : "") << (c == 0 ? cell + pad : pad + cell);
    }
    os << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      os << std::string(total - 2, '-') << '\n';
    }
  }
  return os.str();
}

std::vector<std::string> header(std::size_t sessions, bool improvement) {
  std::vector<std::string> h{"Method"};
  for (std::size_t s = 0; s < sessions; ++s) h.push_back(std::to_string(s));
  h.push_back("Average");
  if (improvement) h.push_back("Improvement");
  return h;
}

std::vector<std::string> values(const RunSummary& r, std::size_t sessions) {
  std::vector<std::string> row{label(r)};
  for (std::size_t s = 0; s < sessions; ++s) row.push_back(s < r.overall.size() ? pct(r.overall[s]) : "");
  row.push_back(pct(r.average()));
  return row;
}

}  // namespace

std::string render_report(const std::vector<RunSummary>& runs) {
  const std::size_t n = max_sessions(runs);
  std::vector<std::vector<std::string>> table{header(n, false)};
  for (const auto& r : runs) table.push_back(values(r, n));
  return layout(table);
}

std::string render_report_csv(const std::vector<RunSummary>& runs) {
  const std::size_t n = max_sessions(runs);
  std::ostringstream os;
  os.precision(17);
  os << "run_id,method,seed";
  for (std::size_t s = 0; s < n; ++s) os << ",session_" << s;
  os << ",average\n";
  for (const auto& r : runs) {
    os << r.run_id << ',' << r.method << ',' << r.seed;
    for (std::size_t s = 0; s < n; ++s) {
      os << ',';
      if (s < r.overall.size()) os << r.overall[s];
    }
    os << ',' << r.average() << '\n';
  }
  return os.str();
}

std::string render_compare(const std::vector<RunSummary>& rows) {
  require(!rows.empty(), "compare needs at least one run");
  const std::size_t n = max_sessions(rows);
  const RunSummary& ref = rows.front();
  std::vector<std::vector<std::string>> table{header(n, true)};
  auto first = values(ref, n);
  first.push_back("reference");
  table.push_back(first);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    auto row = values(rows[i], n);
    row.push_back(signed_pct(ref.average() - rows[i].average()));
    table.push_back(row);
    std::vector<std::string> delta{"  delta (ref - row)"};
    for (std::size_t s = 0; s < n; ++s)
      delta.push_back(s < ref.overall.size() && s < rows[i].overall.size()
                          ? signed_pct(ref.overall[s] - rows[i].overall[s])
                          : "");
    delta.push_back(signed_pct(ref.average() - rows[i].average()));
    delta.push_back("");
    table.push_back(delta);
  }
  return layout(table);
}

std::string render_compare_csv(const std::vector<RunSummary>& rows) {
  require(!rows.empty(), "compare needs at least one run");
  const std::size_t n = max_sessions(rows);
  const RunSummary& ref = rows.front();
  std::ostringstream os;
  os.precision(17);
  os << "method,runs";
  for (std::size_t s = 0; s < n; ++s) os << ",session_" << s;
  os << ",average,improvement\n";
  for (const auto& r : rows) {
    os << r.method << ',' << r.runs;
    for (std::size_t s = 0; s < n; ++s) {
      os << ',';
      if (s < r.overall.size()) os << r.overall[s];
    }
    os << ',' << r.average() << ',';
    if (&r != &ref) os << ref.average() - r.average();
    os << '\n';
  }
  return os.str();
}

}  // namespace f2scil
