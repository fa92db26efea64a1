#pragma once

#include "cedge/experiments/persistence.hpp"

#include <string>
#include <vector>

namespace cedge::experiments {

struct SummaryRow {
  std::string env;
  std::string shift_type;
  double level = 0.0;
  std::string arm;
  double mean = 0.0;
  double std = 0.0;  // population std over per-seed means
  int seeds = 0;
};

// Groups per-episode evaluation records by (env, shift type, level, arm),
// averages each seed's episodes, then aggregates over seeds. Records for the
// same (seed, episode) replace earlier ones.
std::vector<SummaryRow> summarize(const std::vector<json>& evaluation_records);
std::string summary_csv(const std::vector<SummaryRow>& rows);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::vector<Series>& series);

struct ReportOutput {
  std::string summary_path;
  std::vector<std::string> plots;
  std::vector<SummaryRow> rows;
};

// Reads every metrics/evaluation.jsonl below `run_dir`, writes
// <run_dir>/summary.csv and SVG plots under <run_dir>/plots/.
ReportOutput write_report(const std::string& run_dir);

}  // namespace cedge::experiments
