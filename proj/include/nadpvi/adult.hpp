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
// UCI Adult ingestion: drops education-num, native-country, and
// relationship; one-hot encodes the remaining categoricals against the
// dataset's documented category lists (so separately ingested train and
// test files share one feature layout); min-max normalizes continuous
// columns; binarizes the income label. Rows with unparseable or unknown
// values are dropped and counted.

#ifndef NADPVI_ADULT_HPP_
#define NADPVI_ADULT_HPP_

#include <array>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nadpvi/config.hpp"
#include "nadpvi/csv.hpp"
#include "nadpvi/math.hpp"

namespace nadpvi {

namespace adult_detail {

struct RawColumn {
  const char* name;
  bool keep;
  bool categorical;
  std::vector<const char*> categories;  // empty for continuous columns
};

// Raw column order of the UCI Adult files; category lists follow the
// dataset's own documentation, in its order.
inline const std::vector<RawColumn>& raw_columns() {
  static const std::vector<RawColumn> cols = {
      {"age", true, false, {}},
      {"workclass",
       true,
       true,
       {"Private", "Self-emp-not-inc", "Self-emp-inc", "Federal-gov",
        "Local-gov", "State-gov", "Without-pay", "Never-worked"}},
      {"fnlwgt", true, false, {}},
      {"education",
       true,
       true,
       {"Bachelors", "Some-college", "11th", "HS-grad", "Prof-school",
        "Assoc-acdm", "Assoc-voc", "9th", "7th-8th", "12th", "Masters",
        "1st-4th", "10th", "Doctorate", "5th-6th", "Preschool"}},
      {"education-num", false, false, {}},
      {"marital-status",
       true,
       true,
       {"Married-civ-spouse", "Divorced", "Never-married", "Separated",
        "Widowed", "Married-spouse-absent", "Married-AF-spouse"}},
      {"occupation",
       true,
       true,
       {"Tech-support", "Craft-repair", "Other-service", "Sales",
        "Exec-managerial", "Prof-specialty", "Handlers-cleaners",
        "Machine-op-inspct", "Adm-clerical", "Farming-fishing",
        "Transport-moving", "Priv-house-serv", "Protective-serv",
        "Armed-Forces"}},
      {"relationship", false, false, {}},
      {"race",
       true,
       true,
       {"White", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other",
        "Black"}},
      {"sex", true, true, {"Female", "Male"}},
      {"capital-gain", true, false, {}},
      {"capital-loss", true, false, {}},
      {"hours-per-week", true, false, {}},
      {"native-country", false, false, {}},
  };
  return cols;
}

constexpr int kRawFieldCount = 15;  // raw columns plus the income label

inline int category_index(const RawColumn& col, const std::string& value) {
  for (std::size_t i = 0; i < col.categories.size(); ++i)
    if (value == col.categories[i]) return static_cast<int>(i);
  return -1;
}

// Accepts "<=50K" / ">50K" with surrounding whitespace, an optional
// trailing period (the provided test split has one), and the typographic
// form of the <= sign.
inline int parse_income_label(const std::string& raw) {
  std::string v = detail::trim(raw);
  if (!v.empty() && v.back() == '.') v.pop_back();
  if (v == "<=50K" || v == "≤50K") return 0;
  if (v == ">50K") return 1;
  return -1;
}

}  // namespace adult_detail

struct AdultIngestResult {
  Matrix data;  // one example per row; features then the binary label
  std::vector<std::string> feature_names;  // excludes the label column
  int kept_rows = 0;
  int dropped_rows = 0;

  int feature_dim() const { return static_cast<int>(feature_names.size()); }

  // Human-readable feature listing written next to the ingested CSV.
  std::string manifest_text() const {
    std::ostringstream out;
    out << "features = " << feature_names.size() << "\n";
    out << "rows_kept = " << kept_rows << "\n";
    out << "rows_dropped = " << dropped_rows << "\n";
    for (std::size_t i = 0; i < feature_names.size(); ++i)
      out << "feature_" << i << " = " << feature_names[i] << "\n";
    return out.str();
  }
};

inline AdultIngestResult ingest_adult_text(const std::string& text) {
  using adult_detail::raw_columns;
  const auto& cols = raw_columns();

  AdultIngestResult result;
  for (const auto& col : cols) {
    if (!col.keep) continue;
    if (col.categorical) {
      for (const char* cat : col.categories)
        result.feature_names.push_back(std::string(col.name) + "=" + cat);
    } else {
      result.feature_names.push_back(col.name);
    }
  }
  const int n_features = result.feature_dim();

  std::vector<Vector> rows;
  std::istringstream in(text);
  std::string line;
  bool saw_row = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed[0] == '|') continue;  // comment lines
    const std::vector<std::string> fields = detail::split_csv_line(line);
    if (!saw_row) {
      saw_row = true;
      if (static_cast<int>(fields.size()) != adult_detail::kRawFieldCount)
        throw std::runtime_error(
            "adult ingest: expected " +
            std::to_string(adult_detail::kRawFieldCount) +
            " columns (age .. native-country, income), got " +
            std::to_string(fields.size()));
    }
    if (static_cast<int>(fields.size()) != adult_detail::kRawFieldCount) {
      ++result.dropped_rows;
      continue;
    }

    Vector row(n_features + 1);
    int out_idx = 0;
    bool ok = true;
    for (std::size_t c = 0; c < cols.size() && ok; ++c) {
      const std::string value = detail::trim(fields[c]);
      if (!cols[c].keep) continue;
      if (cols[c].categorical) {
        const int idx = adult_detail::category_index(cols[c], value);
        if (idx < 0) {
          ok = false;  // unknown category or the dataset's "?" marker
          break;
        }
        for (std::size_t k = 0; k < cols[c].categories.size(); ++k)
          row(out_idx++) = (static_cast<int>(k) == idx) ? 1.0 : 0.0;
      } else {
        try {
          std::size_t pos = 0;
          row(out_idx) = std::stod(value, &pos);
          if (pos != value.size()) ok = false;
        } catch (const std::exception&) {
          ok = false;
        }
        ++out_idx;
      }
    }
    if (ok) {
      const int label =
          adult_detail::parse_income_label(fields[adult_detail::kRawFieldCount - 1]);
      if (label < 0) ok = false;
      else row(n_features) = label;
    }
    if (!ok) {
      ++result.dropped_rows;
      continue;
    }
    rows.push_back(std::move(row));
  }

  if (rows.empty())
    throw std::runtime_error("adult ingest: no parseable data rows");
  result.kept_rows = static_cast<int>(rows.size());
  result.data.resize(result.kept_rows, n_features + 1);
  for (int i = 0; i < result.kept_rows; ++i)
    result.data.row(i) = rows[i].transpose();

  // Min-max normalization of the continuous columns; a degenerate range
  // maps to the constant 0.5.
  int out_idx = 0;
  for (const auto& col : cols) {
    if (!col.keep) continue;
    if (col.categorical) {
      out_idx += static_cast<int>(col.categories.size());
      continue;
    }
    const double lo = result.data.col(out_idx).minCoeff();
    const double hi = result.data.col(out_idx).maxCoeff();
    if (hi > lo) {
      result.data.col(out_idx) =
          (result.data.col(out_idx).array() - lo) / (hi - lo);
    } else {
      result.data.col(out_idx).setConstant(0.5);
    }
    ++out_idx;
  }
  return result;
}

inline AdultIngestResult ingest_adult_file(const std::string& path) {
  try {
    return ingest_adult_text(read_text_file(path));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string(e.what()) + " [file: " + path + "]");
  }
}

}  // namespace nadpvi

#endif  // NADPVI_ADULT_HPP_
