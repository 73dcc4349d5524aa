#include "fedq/exp/report.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fedq/error.hpp"

namespace fedq::exp {
namespace {

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

}  // namespace

std::vector<std::string> MetricRun::schema() const {
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (const auto& [round, fields] : records) {
    for (const auto& [name, value] : fields) {
      if (seen.insert(name).second) names.push_back(name);
    }
  }
  return names;
}

MetricRun parse_metric_jsonl(const std::string& run_id, const std::string& text) {
  MetricRun run;
  run.run_id = run_id;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& what) {
      throw DataError(run_id + " line " + std::to_string(line_no) + ": " + what);
    };
    const auto obj = nlohmann::ordered_json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) fail("not a JSON object");
    if (!obj.contains("round") || !obj["round"].is_number_unsigned()) fail("missing non-negative integer 'round'");
    std::vector<std::pair<std::string, double>> fields;
    for (const auto& [key, value] : obj.items()) {
      if (key == "round") continue;
      if (!value.is_number()) fail("field '" + key + "' is not a number");
      fields.emplace_back(key, value.get<double>());
    }
    run.records.emplace_back(obj["round"].get<std::size_t>(), std::move(fields));
  }
  return run;
}

Report build_report(const std::vector<MetricRun>& runs) {
  if (runs.empty()) throw DataError("report needs at least one metric file");
  std::set<std::string> ids;
  for (const auto& r : runs) {
    if (r.records.empty()) throw DataError("run '" + r.run_id + "' has no records");
    if (!ids.insert(r.run_id).second) throw DataError("run id '" + r.run_id + "' appears twice");
  }
  const auto schema = runs.front().schema();
  const std::set<std::string> reference(schema.begin(), schema.end());
  for (const auto& r : runs) {
    const auto s = r.schema();
    if (std::set<std::string>(s.begin(), s.end()) != reference) {
      throw DataError("incompatible metric schemas: run '" + runs.front().run_id + "' has {" + join_names(schema) +
                      "} but run '" + r.run_id + "' has {" + join_names(s) + "}");
    }
  }

  Report out;
  out.csv = "run_id,round,metric,value\n";
  for (const auto& r : runs) {
    for (const auto& [round, fields] : r.records) {
      for (const auto& [name, value] : fields) {
        out.csv += csv_field(r.run_id) + "," + std::to_string(round) + "," + csv_field(name) + "," +
                   format_value(value) + "\n";
      }
    }
  }

  // Fixed-width table of the final record of each run.
  std::vector<std::string> header = {"run_id", "round"};
  header.insert(header.end(), schema.begin(), schema.end());
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : runs) {
    const auto& [round, fields] = r.records.back();
    std::vector<std::string> row = {r.run_id, std::to_string(round)};
    for (const auto& name : schema) {
      auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.first == name; });
      row.push_back(it == fields.end() ? "-" : format_value(it->second));
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out.summary += row[c];
      if (c + 1 < row.size()) out.summary += std::string(width[c] - row[c].size() + 2, ' ');
    }
    out.summary += "\n";
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  return out;
}

}  // namespace fedq::exp
