#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "zsar/classify/classifier.hpp"
#include "zsar/core/io.hpp"
#include "zsar/eval/experiment.hpp"
#include "zsar/eval/statistics.hpp"

namespace zsar {

// Left-aligned first column, right-aligned others, two spaces between.
inline std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string cell = c < cells.size() ? cells[c] : "";
      const std::string pad(width[c] - cell.size(), ' ');
      if (c) out += "  ";
      out += c == 0 ? cell + pad : pad + cell;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& r : rows) out += line(r);
  return out;
}

inline std::string percent1(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * fraction);
  return buf;
}

// "mean ± std" in percent; the std part is dropped for single runs.
inline std::string accuracy_cell(const SummaryStats& s) {
  if (s.n < 2) return percent1(s.mean);
  return percent1(s.mean) + " ± " + percent1(s.std);
}

inline std::string render_summary_table(const std::vector<std::pair<std::string, SummaryStats>>& rows,
                                        const std::string& label = "Setting") {
  bool multi = false;
  for (const auto& [name, s] : rows) multi = multi || s.n > 1;
  std::vector<std::string> header{label, "Runs", multi ? "Top-1 accuracy (%) ± std" : "Top-1 accuracy (%)"};
  if (multi) header.push_back("E (95%)");
  std::vector<std::vector<std::string>> body;
  for (const auto& [name, s] : rows) {
    std::vector<std::string> r{name, std::to_string(s.n), accuracy_cell(s)};
    if (multi) r.push_back(s.ci_half_width ? percent1(*s.ci_half_width) : "-");
    body.push_back(std::move(r));
  }
  return render_table(header, body);
}

inline std::string render_confusion(const ConfusionMatrix& m) {
  std::vector<std::string> header{"true \\ predicted"};
  header.insert(header.end(), m.classes.begin(), m.classes.end());
  header.push_back("total");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t r = 0; r < m.classes.size(); ++r) {
    std::vector<std::string> row{m.classes[r]};
    for (auto v : m.counts[r]) row.push_back(std::to_string(v));
    row.push_back(std::to_string(m.row_sum(r)));
    rows.push_back(std::move(row));
  }
  return render_table(header, rows);
}

inline SummaryStats summary_from_json(const json& j) {
  SummaryStats s;
  s.mean = j.at("mean").get<double>();
  s.std = j.at("std").get<double>();
  s.n = j.at("n").get<std::size_t>();
  if (j.contains("ci_half_width") && j.at("ci_half_width").is_number()) s.ci_half_width = j.at("ci_half_width").get<double>();
  s.confidence = j.value("confidence", 0.95);
  return s;
}

inline std::string render_sweep(const json& sweep) {
  std::vector<std::pair<std::string, SummaryStats>> ok;
  std::vector<std::string> failed;
  for (const auto& row : sweep.at("rows")) {
    std::string name;
    for (const auto& k : sweep.at("key_columns")) {
      if (!name.empty()) name += ", ";
      name += k.get<std::string>() + "=" + row.at("key").at(k.get<std::string>()).get<std::string>();
    }
    if (row.at("stats").is_null())
      failed.push_back(name + ": " + row.at("error").get<std::string>());
    else
      ok.emplace_back(name, summary_from_json(row.at("stats")));
  }
  std::string out = "Sweep: " + sweep.at("sweep").get<std::string>() + "\n" + render_summary_table(ok);
  for (const auto& f : failed) out += "failed cell " + f + "\n";
  return out;
}

// Human-readable report for a run output directory (evaluation.json) and
// any sweep_*.json files in it.
inline std::string report(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("results directory not found: " + dir.string());
  std::string out;
  const fs::path eval = dir / "evaluation.json";
  if (fs::exists(eval)) {
    const json j = read_json_file(eval);
    const SummaryStats s = summary_from_json(j.at("summary"));
    const std::string name = j.value("dataset", std::string("dataset")) + " / " +
                             j.at("protocol").at("name").get<std::string>();
    out += render_summary_table({{name, s}}, "Dataset / protocol");
    ConfusionMatrix m{j.at("confusion").at("classes").get<std::vector<std::string>>(),
                      j.at("confusion").at("counts").get<std::vector<std::vector<std::size_t>>>()};
    out += "\nConfusion matrix (rows: true class)\n" + render_confusion(m);
  }
  std::vector<fs::path> sweeps;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("sweep_", 0) == 0 && e.path().extension() == ".json") sweeps.push_back(e.path());
  }
  std::sort(sweeps.begin(), sweeps.end());
  for (const auto& p : sweeps) out += (out.empty() ? "" : "\n") + render_sweep(read_json_file(p));
  if (out.empty()) throw DataError("no evaluation.json or sweep results in " + dir.string());
  return out;
}

}  // namespace zsar
