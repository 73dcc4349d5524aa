#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace fedq::exp {

struct MetricRun {
  std::string run_id;
  // Per record: round and the numeric fields other than "round", in file order.
  std::vector<std::pair<std::size_t, std::vector<std::pair<std::string, double>>>> records;

  // Field names in first-appearance order.
  std::vector<std::string> schema() const;
};

// Parses metric JSONL. Throws DataError naming the line on malformed input.
MetricRun parse_metric_jsonl(const std::string& run_id, const std::string& text);

struct Report {
  std::string csv;      // run_id,round,metric,value
  std::string summary;  // final record of each run, one row per run
};

// Throws DataError when no run is given, a run is empty, run ids repeat, or
// the runs disagree on the set of metric fields.
Report build_report(const std::vector<MetricRun>& runs);

}  // namespace fedq::exp
