// Copyright 2026 The nadpvi Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// CSV emission and parsing for run artifacts. All floating-point values are
// written with 17 significant digits so emitted files parse back to the
// exact doubles, which is what makes rerun-equality checks byte-level.

#ifndef NADPVI_CSV_HPP_
#define NADPVI_CSV_HPP_

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nadpvi/dp_sgd.hpp"
#include "nadpvi/evaluation.hpp"
#include "nadpvi/math.hpp"
#include "nadpvi/post_process.hpp"

namespace nadpvi {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text_file(const std::string& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (const char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

// Splits into lines, dropping '#' metadata lines and a trailing blank line.
inline std::vector<std::string> csv_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    lines.push_back(line);
  }
  return lines;
}

inline double parse_field_double(const std::string& field,
                                 const std::string& context) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(field, &pos);
    if (pos != field.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(context + ": cannot parse number '" + field +
                             "'");
  }
}

}  // namespace detail

// ---- Coverage reports: (alpha, coverage, coverage_error) ----

inline std::string coverage_csv(const CoverageReport& report) {
  // repetitions == 0 marks a report no study ever filled; parsed files
  // carry -1 because the count is not part of the CSV.
  if (report.repetitions == 0)
    throw std::invalid_argument("coverage report has no repetitions");
  if (report.alpha.size() < 1 ||
      report.alpha.size() != report.coverage.size() ||
      report.alpha.size() != report.error.size())
    throw std::invalid_argument("coverage report columns are inconsistent");
  std::string out = "alpha,coverage,coverage_error\n";
  for (int i = 0; i < report.alpha.size(); ++i) {
    out += format_double(report.alpha(i)) + "," +
           format_double(report.coverage(i)) + "," +
           format_double(report.error(i)) + "\n";
  }
  return out;
}

inline CoverageReport parse_coverage_csv(const std::string& text) {
  const std::vector<std::string> lines = detail::csv_lines(text);
  if (lines.empty() || lines[0] != "alpha,coverage,coverage_error")
    throw std::runtime_error("coverage csv: missing or wrong header");
  const int n = static_cast<int>(lines.size()) - 1;
  if (n < 1) throw std::runtime_error("coverage csv: no data rows");
  CoverageReport report;
  report.alpha.resize(n);
  report.coverage.resize(n);
  report.error.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto fields = detail::split_csv_line(lines[i + 1]);
    if (fields.size() != 3)
      throw std::runtime_error("coverage csv row " + std::to_string(i + 1) +
                               ": expected 3 fields");
    const std::string ctx = "coverage csv row " + std::to_string(i + 1);
    report.alpha(i) = detail::parse_field_double(fields[0], ctx);
    report.coverage(i) = detail::parse_field_double(fields[1], ctx);
    report.error(i) = detail::parse_field_double(fields[2], ctx);
  }
  report.rmse = coverage_rmse(report);
  report.repetitions = -1;  // unknown: the CSV does not store the count
  return report;
}

// ---- Calibration reports: (bin_lo, bin_hi, mean_pred, frac_pos, count) ----

inline std::string calibration_csv(const CalibrationReport& report) {
  const int bins = static_cast<int>(report.bin_lo.size());
  if (bins < 1) throw std::invalid_argument("calibration report has no bins");
  std::string out = "bin_lo,bin_hi,mean_pred,frac_pos,count\n";
  for (int b = 0; b < bins; ++b) {
    out += format_double(report.bin_lo(b)) + "," +
           format_double(report.bin_hi(b)) + "," +
           format_double(report.mean_pred(b)) + "," +
           format_double(report.frac_pos(b)) + "," +
           std::to_string(report.count[b]) + "\n";
  }
  return out;
}

inline CalibrationReport parse_calibration_csv(const std::string& text) {
  const std::vector<std::string> lines = detail::csv_lines(text);
  if (lines.empty() || lines[0] != "bin_lo,bin_hi,mean_pred,frac_pos,count")
    throw std::runtime_error("calibration csv: missing or wrong header");
  const int bins = static_cast<int>(lines.size()) - 1;
  if (bins < 1) throw std::runtime_error("calibration csv: no data rows");
  CalibrationReport report;
  report.bin_lo.resize(bins);
  report.bin_hi.resize(bins);
  report.mean_pred.resize(bins);
  report.frac_pos.resize(bins);
  report.count.assign(bins, 0);
  for (int b = 0; b < bins; ++b) {
    const auto fields = detail::split_csv_line(lines[b + 1]);
    if (fields.size() != 5)
      throw std::runtime_error("calibration csv row " + std::to_string(b + 1) +
                               ": expected 5 fields");
    const std::string ctx = "calibration csv row " + std::to_string(b + 1);
    report.bin_lo(b) = detail::parse_field_double(fields[0], ctx);
    report.bin_hi(b) = detail::parse_field_double(fields[1], ctx);
    report.mean_pred(b) = detail::parse_field_double(fields[2], ctx);
    report.frac_pos(b) = detail::parse_field_double(fields[3], ctx);
    report.count[b] = static_cast<int>(
        detail::parse_field_double(fields[4], ctx));
  }
  return report;
}

// ---- Optimizer traces: (t, phi_0..phi_{d-1}, g_0..g_{d-1}) ----
// Rows t = 0..T-1 carry the iterate and the noisy gradient it produced;
// the final row t = T carries the last iterate with empty gradient fields.

inline std::string trace_csv(const DpSgdTrace& trace) {
  const int t_steps = static_cast<int>(trace.steps());
  const int d = trace.dim();
  if (t_steps < 1 || d < 1) throw std::invalid_argument("empty trace");
  std::string header = "t";
  for (int j = 0; j < d; ++j) header += ",phi_" + std::to_string(j);
  for (int j = 0; j < d; ++j) header += ",g_" + std::to_string(j);
  std::string out = header + "\n";
  for (int t = 0; t <= t_steps; ++t) {
    out += std::to_string(t);
    for (int j = 0; j < d; ++j)
      out += "," + format_double(trace.params(t, j));
    for (int j = 0; j < d; ++j)
      out += t < t_steps ? "," + format_double(trace.noisy_grads(t, j)) : ",";
    out += "\n";
  }
  return out;
}

// Fills params and noisy_grads only; the generating configuration is not
// recoverable from the CSV.
inline DpSgdTrace parse_trace_csv(const std::string& text) {
  const std::vector<std::string> lines = detail::csv_lines(text);
  if (lines.size() < 3)
    throw std::runtime_error("trace csv: need a header and at least 2 rows");
  const auto header = detail::split_csv_line(lines[0]);
  if (header.size() < 3 || header[0] != "t" || (header.size() - 1) % 2 != 0)
    throw std::runtime_error("trace csv: malformed header");
  const int d = static_cast<int>((header.size() - 1) / 2);
  const int t_steps = static_cast<int>(lines.size()) - 2;
  DpSgdTrace trace;
  trace.params.resize(t_steps + 1, d);
  trace.noisy_grads.resize(t_steps, d);
  for (int t = 0; t <= t_steps; ++t) {
    const auto fields = detail::split_csv_line(lines[t + 1]);
    if (static_cast<int>(fields.size()) != 1 + 2 * d)
      throw std::runtime_error("trace csv row " + std::to_string(t + 1) +
                               ": wrong field count");
    const std::string ctx = "trace csv row " + std::to_string(t + 1);
    for (int j = 0; j < d; ++j)
      trace.params(t, j) = detail::parse_field_double(fields[1 + j], ctx);
    if (t < t_steps) {
      for (int j = 0; j < d; ++j)
        trace.noisy_grads(t, j) =
            detail::parse_field_double(fields[1 + d + j], ctx);
    } else {
      for (int j = 0; j < d; ++j)
        if (!fields[1 + d + j].empty())
          throw std::runtime_error(
              "trace csv: final row must leave gradient fields empty");
    }
  }
  return trace;
}

// ---- Posterior samples: (draw, phi_star_0.., v_0..) plus metadata ----

inline std::string posterior_samples_csv(const PosteriorSamples& samples,
                                         int burn_in, int warmup,
                                         uint64_t seed) {
  const int m = static_cast<int>(samples.draws.rows());
  if (m < 1) throw std::invalid_argument("no posterior draws");
  if (samples.draws.cols() % 2 != 0)
    throw std::invalid_argument("draws must hold (phi_star, v) pairs");
  const int d = static_cast<int>(samples.draws.cols()) / 2;
  std::string out;
  out += "# method = " + samples.method + "\n";
  out += "# draws = " + std::to_string(m) + "\n";
  out += "# warmup = " + std::to_string(warmup) + "\n";
  out += "# burn_in = " + std::to_string(burn_in) + "\n";
  out += "# seed = " + std::to_string(seed) + "\n";
  std::string header = "draw";
  for (int j = 0; j < d; ++j) header += ",phi_star_" + std::to_string(j);
  for (int j = 0; j < d; ++j) header += ",v_" + std::to_string(j);
  out += header + "\n";
  for (int i = 0; i < m; ++i) {
    out += std::to_string(i);
    for (int j = 0; j < 2 * d; ++j)
      out += "," + format_double(samples.draws(i, j));
    out += "\n";
  }
  return out;
}

// ---- Labeled numeric matrices (one example per row) ----

inline std::string matrix_csv(const Matrix& m,
                              const std::vector<std::string>& column_names) {
  if (static_cast<int>(column_names.size()) != m.cols())
    throw std::invalid_argument("column name count must match columns");
  if (m.rows() < 1) throw std::invalid_argument("empty matrix");
  std::string out;
  for (std::size_t j = 0; j < column_names.size(); ++j)
    out += (j ? "," : "") + column_names[j];
  out += "\n";
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j)
      out += (j ? "," : "") + format_double(m(i, j));
    out += "\n";
  }
  return out;
}

inline Matrix parse_matrix_csv(const std::string& text,
                               std::vector<std::string>* column_names) {
  const std::vector<std::string> lines = detail::csv_lines(text);
  if (lines.size() < 2)
    throw std::runtime_error("matrix csv: need a header and data rows");
  const auto header = detail::split_csv_line(lines[0]);
  const int cols = static_cast<int>(header.size());
  const int rows = static_cast<int>(lines.size()) - 1;
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const auto fields = detail::split_csv_line(lines[i + 1]);
    if (static_cast<int>(fields.size()) != cols)
      throw std::runtime_error("matrix csv row " + std::to_string(i + 1) +
                               ": wrong field count");
    for (int j = 0; j < cols; ++j)
      m(i, j) = detail::parse_field_double(
          fields[j], "matrix csv row " + std::to_string(i + 1));
  }
  if (column_names) *column_names = header;
  return m;
}

}  // namespace nadpvi

#endif  // NADPVI_CSV_HPP_
