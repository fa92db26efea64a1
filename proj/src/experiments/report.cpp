#include "cedge/experiments/report.hpp"

#include "cedge/core/io.hpp"
#include "cedge/core/tensor.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <tuple>

namespace fs = std::filesystem;

namespace cedge::experiments {

std::vector<SummaryRow> summarize(const std::vector<json>& records) {
  using Key = std::tuple<std::string, std::string, double, std::string>;
  // A re-run phase appends the same (seed, episode) again; the latest wins.
  std::map<Key, std::map<std::uint64_t, std::map<long, double>>> groups;
  for (const auto& r : records) {
    try {
      Key key{r.at("env").get<std::string>(), r.at("shift_type").get<std::string>(), r.at("level").get<double>(),
              r.at("arm").get<std::string>()};
      groups[key][r.at("seed").get<std::uint64_t>()][r.at("episode").get<long>()] = r.at("score").get<double>();
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed evaluation record: ") + e.what());
    }
  }
  std::vector<SummaryRow> rows;
  for (const auto& [key, per_seed] : groups) {
    std::vector<double> means;
    for (const auto& [seed, scores] : per_seed) {
      double sum = 0.0;
      for (const auto& [episode, s] : scores) sum += s;
      means.push_back(sum / static_cast<double>(scores.size()));
    }
    double mean = 0.0;
    for (double m : means) mean += m;
    mean /= static_cast<double>(means.size());
    double var = 0.0;
    for (double m : means) var += (m - mean) * (m - mean);
    var /= static_cast<double>(means.size());
    rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key), mean, std::sqrt(var),
                    static_cast<int>(means.size())});
  }
  return rows;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "env,shift_type,level,arm,mean,std,seeds\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{},{:.6f},{:.6f},{}\n", r.env, r.shift_type, r.level, r.arm, r.mean,
                       r.std, r.seeds);
  return out;
}

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::vector<Series>& series) {
  constexpr double W = 720, H = 420, L = 70, R = 180, T = 40, B = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]), y1 = std::max(y1, s.y[i]);
    }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      W, H);
  out += fmt::format("<text x=\"{}\" y=\"22\" font-size=\"15\">{}</text>\n", L, escape(title));
  out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", L, T,
                     W - L - R, H - T - B);
  for (int i = 0; i <= 4; ++i) {
    const double fy = y0 + (y1 - y0) * i / 4.0, fx = x0 + (x1 - x0) * i / 4.0;
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.4g}</text>\n", L - 6, py(fy) + 4, fy);
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.4g}</text>\n", px(fx), H - B + 16,
                       fx);
  }
  out += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", L + (W - L - R) / 2, H - 12,
                     escape(x_label));
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    std::string points;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      points += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.y[i]));
    }
    if (s.x.size() == 1 && !points.empty()) {
      out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n", px(s.x[0]), py(s.y[0]), color);
    } else {
      out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", color, points);
    }
    out += fmt::format("<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n", W - R + 10, T + 16 * (k + 1), color,
                       escape(s.label));
  }
  out += "</svg>\n";
  return out;
}

namespace {

std::vector<fs::path> find_files(const fs::path& root, const std::string& filename) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file() && entry.path().filename() == filename) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

// Loss curves are thinned to at most `max_points` window means.
Series thin(const std::string& label, const std::vector<double>& x, const std::vector<double>& y,
            std::size_t max_points) {
  Series s{label, {}, {}};
  const std::size_t window = std::max<std::size_t>(1, (x.size() + max_points - 1) / max_points);
  for (std::size_t i = 0; i < x.size(); i += window) {
    const std::size_t end = std::min(x.size(), i + window);
    double sum = 0.0;
    for (std::size_t j = i; j < end; ++j) sum += y[j];
    s.x.push_back(x[end - 1]);
    s.y.push_back(sum / static_cast<double>(end - i));
  }
  return s;
}

std::string plot_name(const fs::path& run, const fs::path& file) {
  std::string rel = fs::relative(file, run).replace_extension().string();
  std::replace(rel.begin(), rel.end(), '/', '_');
  return rel;
}

}  // namespace

ReportOutput write_report(const std::string& run_dir) {
  const fs::path run(run_dir);
  if (!fs::is_directory(run)) throw FormatError("run directory " + run_dir + " does not exist");
  if (fs::is_empty(run)) throw FormatError("run directory " + run_dir + " is empty");
  const auto eval_files = find_files(run, "evaluation.jsonl");
  if (eval_files.empty())
    throw FormatError("no evaluation metrics under " + run_dir +
                      " (expected seed-<s>/shifts/<shift>/metrics/evaluation.jsonl)");

  std::vector<json> records;
  for (const auto& f : eval_files)
    for (auto& r : read_jsonl(f.string()))
      if (r.value("phase", "") == "evaluate") records.push_back(std::move(r));

  ReportOutput out;
  out.rows = summarize(records);
  out.summary_path = (run / "summary.csv").string();
  atomic_write(out.summary_path, summary_csv(out.rows));

  const fs::path plots = run / "plots";
  // Evaluation scores: one line per (shift, arm) across seeds.
  {
    std::map<std::string, std::map<std::uint64_t, std::pair<double, int>>> per_arm;
    for (const auto& r : records) {
      const std::string label = fmt::format("{} {} {}", r["shift_type"].get<std::string>(),
                                            fmt::format("{}", r["level"].get<double>()), r["arm"].get<std::string>());
      auto& acc = per_arm[label][r["seed"].get<std::uint64_t>()];
      acc.first += r["score"].get<double>();
      acc.second += 1;
    }
    std::vector<Series> series;
    for (const auto& [label, seeds] : per_arm) {
      Series s{label, {}, {}};
      for (const auto& [seed, acc] : seeds) {
        s.x.push_back(static_cast<double>(seed));
        s.y.push_back(acc.first / acc.second);
      }
      series.push_back(std::move(s));
    }
    const std::string path = (plots / "evaluation_scores.svg").string();
    atomic_write(path, svg_line_plot("Normalized score per seed", "seed", series));
    out.plots.push_back(path);
  }
  // Training curves from every other metrics file.
  std::vector<fs::path> metric_files;
  for (const auto& entry : fs::recursive_directory_iterator(run))
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl" &&
        entry.path().parent_path().filename() == "metrics" && entry.path().filename() != "evaluation.jsonl")
      metric_files.push_back(entry.path());
  std::sort(metric_files.begin(), metric_files.end());
  for (const auto& f : metric_files) {
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> curves;
    for (const auto& r : read_jsonl(f.string())) {
      if (!r.contains("metric") || !r.contains("step") || !r["value"].is_number()) continue;
      auto& c = curves[r["metric"].get<std::string>()];
      c.first.push_back(r["step"].get<double>());
      c.second.push_back(r["value"].get<double>());
    }
    if (curves.empty()) continue;
    std::vector<Series> series;
    for (const auto& [name, c] : curves) series.push_back(thin(name, c.first, c.second, 400));
    const std::string name = plot_name(run, f);
    const std::string path = (plots / (name + ".svg")).string();
    atomic_write(path, svg_line_plot(name, "step", series));
    out.plots.push_back(path);
  }
  return out;
}

}  // namespace cedge::experiments
