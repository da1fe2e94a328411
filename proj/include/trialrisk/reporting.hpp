#pragma once

// Report emission: JSON always, CSV tables per analysis, optional SVG
// stacked-bar charts (counts panel + column-normalized panel).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialrisk/common.hpp"
#include "trialrisk/dataset.hpp"
#include "trialrisk/evaluation.hpp"

namespace trialrisk {

struct EvaluationReport {
  std::string run_id;
  std::optional<Phase> phase;
  std::string config_digest;
  double threshold = 0.5;
  ClassificationReport classification;
  std::optional<AgreementAnalysis> agreement;
  std::vector<SensitivityEntry> sensitivity;
  long long rows_evaluated = 0;
  long long excluded_missing_success = 0;

  json to_json() const {
    json j{{"run_id", run_id},
           {"config_digest", config_digest},
           {"threshold", threshold},
           {"classification", classification.to_json()},
           {"exclusions",
            {{"missing_success_label", excluded_missing_success},
             {"no_observed_latent_truth",
              agreement.has_value() ? agreement->excluded_rows : 0}}},
           {"rows_evaluated", rows_evaluated}};
    j["phase"] = phase.has_value() ? json(phase_name(*phase)) : json(nullptr);
    j["agreement"] = agreement.has_value() ? agreement->to_json()["buckets"] : json::array();
    json sens = json::object();
    for (const auto& entry : sensitivity) sens[factor_id(entry.factor)] = entry.to_json()["buckets"];
    j["sensitivity"] = sens;
    return j;
  }
};

struct ReportFormats {
  bool json_out = true;  // always written in practice
  bool csv = true;
  bool svg = false;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

struct BarGroup {
  std::string label;
  long long correct = 0;
  long long incorrect = 0;
};

// Two-panel stacked bar chart: (A) raw counts, (B) column-normalized
// proportions. One <g class="bucket"> per bucket per panel.
inline std::string stacked_bar_svg(const std::string& title, const std::vector<BarGroup>& groups) {
  const double bar_w = 46.0, gap = 18.0, panel_h = 220.0, label_h = 46.0, top = 54.0;
  const double panel_w = groups.empty() ? 120.0
                                        : static_cast<double>(groups.size()) * (bar_w + gap) + gap;
  const double width = panel_w * 2.0 + 60.0;
  const double height = top + panel_h + label_h;
  long long max_n = 1;
  for (const auto& g : groups) max_n = std::max(max_n, g.correct + g.incorrect);

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "  <text x=\"10\" y=\"20\" font-size=\"14\" font-family=\"sans-serif\">"
      << xml_escape(title) << "</text>\n";
  const char* panel_titles[2] = {"A: counts", "B: proportions"};
  for (int panel = 0; panel < 2; ++panel) {
    const double x0 = 20.0 + static_cast<double>(panel) * (panel_w + 20.0);
    svg << "  <text x=\"" << x0 << "\" y=\"40\" font-size=\"12\" font-family=\"sans-serif\">"
        << panel_titles[panel] << "</text>\n";
    double x = x0 + gap;
    for (const auto& g : groups) {
      const long long total = g.correct + g.incorrect;
      const double scale = panel == 0 ? (total > 0 ? static_cast<double>(total) /
                                                         static_cast<double>(max_n)
                                                   : 0.0)
                                      : (total > 0 ? 1.0 : 0.0);
      const double h_all = panel_h * scale;
      const double h_correct =
          total > 0 ? h_all * static_cast<double>(g.correct) / static_cast<double>(total) : 0.0;
      const double y_base = top + panel_h;
      svg << "  <g class=\"bucket\">\n";
      svg << "    <rect x=\"" << x << "\" y=\"" << y_base - h_all << "\" width=\"" << bar_w
          << "\" height=\"" << h_all - h_correct << "\" fill=\"#c0392b\"/>\n";
      svg << "    <rect x=\"" << x << "\" y=\"" << y_base - h_correct << "\" width=\"" << bar_w
          << "\" height=\"" << h_correct << "\" fill=\"#2e6da4\"/>\n";
      svg << "    <text x=\"" << x + bar_w / 2.0 << "\" y=\"" << y_base + 16.0
          << "\" font-size=\"10\" text-anchor=\"middle\" font-family=\"sans-serif\">"
          << xml_escape(g.label) << "</text>\n";
      svg << "    <text x=\"" << x + bar_w / 2.0 << "\" y=\"" << top - 6.0 + 0.0
          << "\" font-size=\"9\" text-anchor=\"middle\" font-family=\"sans-serif\">n=" << total
          << "</text>\n";
      svg << "  </g>\n";
      x += bar_w + gap;
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("report: cannot write " + path);
  out << content;
  if (!out) throw IoError("report: write failed for " + path);
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace detail

// Writes the report files and returns their paths. JSON carries every
// numeric field exactly; CSV and SVG are presentation views.
inline std::vector<std::string> emit_report(const EvaluationReport& report,
                                            const std::string& out_dir,
                                            const ReportFormats& formats = {}) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw IoError("report: cannot create directory " + out_dir);

  std::vector<std::string> written;
  {
    const std::string path = out_dir + "/report.json";
    detail::write_text_file(path, report.to_json().dump(2) + "\n");
    written.push_back(path);
  }
  if (formats.csv) {
    {
      const std::string path = out_dir + "/classification.csv";
      std::vector<std::vector<std::string>> rows;
      for (std::size_t k = 0; k < report.classification.per_class.size(); ++k) {
        const ClassMetrics& m = report.classification.per_class[k];
        rows.push_back({std::to_string(k), detail::format_double(m.precision),
                        detail::format_double(m.recall), detail::format_double(m.f1),
                        std::to_string(m.support), m.degenerate ? "1" : "0"});
      }
      write_csv(path, {"class", "precision", "recall", "f1", "support", "degenerate"}, rows);
      written.push_back(path);
    }
    if (report.agreement.has_value()) {
      const std::string path = out_dir + "/agreement.csv";
      std::vector<std::vector<std::string>> rows;
      for (const auto& b : report.agreement->buckets) {
        rows.push_back({b.label(), std::to_string(b.n), std::to_string(b.success_correct),
                        std::to_string(b.success_incorrect),
                        detail::format_double(b.prop_correct())});
      }
      write_csv(path, {"agreement", "n", "success_correct", "success_incorrect", "prop_correct"},
                rows);
      written.push_back(path);
    }
    for (const auto& entry : report.sensitivity) {
      const std::string path = out_dir + "/sensitivity_" + factor_id(entry.factor) + ".csv";
      std::vector<std::vector<std::string>> rows;
      for (const auto& b : entry.buckets) {
        rows.push_back({b.label(), std::to_string(b.n), std::to_string(b.success_correct),
                        std::to_string(b.n - b.success_correct),
                        detail::format_double(b.accuracy())});
      }
      write_csv(path, {"distance", "n", "success_correct", "success_incorrect", "accuracy"}, rows);
      written.push_back(path);
    }
  }
  if (formats.svg) {
    if (report.agreement.has_value()) {
      std::vector<detail::BarGroup> groups;
      for (const auto& b : report.agreement->buckets) {
        groups.push_back({b.label(), b.success_correct, b.success_incorrect});
      }
      const std::string path = out_dir + "/agreement.svg";
      detail::write_text_file(
          path, detail::stacked_bar_svg("Operational success by latent agreement", groups));
      written.push_back(path);
    }
    for (const auto& entry : report.sensitivity) {
      std::vector<detail::BarGroup> groups;
      for (const auto& b : entry.buckets) {
        groups.push_back({b.label(), b.success_correct, b.n - b.success_correct});
      }
      const std::string path = out_dir + "/sensitivity_" + factor_id(entry.factor) + ".svg";
      detail::write_text_file(
          path, detail::stacked_bar_svg("Success accuracy by " + factor_id(entry.factor) +
                                            " prediction distance",
                                        groups));
      written.push_back(path);
    }
  }
  return written;
}

}  // namespace trialrisk
