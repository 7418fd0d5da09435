#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "taml/format.hpp"

namespace taml::testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(fs::temp_directory_path() / ("taml_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Schema checks for the run artifacts. Each returns a list of violations,
// empty when the document conforms.

inline void require_number(const nlohmann::json& j, const char* key, std::vector<std::string>& err) {
  if (!j.contains(key)) {
    err.push_back(std::string("missing ") + key);
  } else if (!j[key].is_number()) {
    err.push_back(std::string(key) + " is not a number");
  }
}

inline std::vector<std::string> metrics_line_errors(const nlohmann::json& j) {
  std::vector<std::string> err;
  if (!j.is_object()) return {"not an object"};
  if (!j.contains("iteration") || !j["iteration"].is_number_integer() || j["iteration"].get<long long>() < 0) {
    err.push_back("iteration must be a nonnegative integer");
  }
  for (const char* k : {"objective", "regularizer", "mean_pre_loss", "mean_post_loss", "pre_loss_theil", "grad_norm"}) {
    require_number(j, k, err);
  }
  for (const char* k : {"pre_losses", "post_losses"}) {
    if (!j.contains(k) || !j[k].is_array() || j[k].empty()) {
      err.push_back(std::string(k) + " must be a nonempty array");
      continue;
    }
    for (const auto& v : j[k]) {
      if (!v.is_number()) err.push_back(std::string(k) + " holds a non-number");
    }
  }
  if (j.contains("pre_losses") && j.contains("post_losses") && j["pre_losses"].size() != j["post_losses"].size()) {
    err.push_back("pre_losses and post_losses differ in length");
  }
  for (const auto& [k, v] : j.items()) {
    static const std::vector<std::string> known{"iteration",      "objective", "regularizer", "mean_pre_loss",
                                                "mean_post_loss", "pre_loss_theil", "grad_norm", "pre_losses",
                                                "post_losses",    "wall_ms"};
    if (std::find(known.begin(), known.end(), k) == known.end()) err.push_back("unexpected key " + k);
  }
  return err;
}

inline std::vector<std::string> summary_errors(const nlohmann::json& j) {
  std::vector<std::string> err;
  if (!j.is_object()) return {"not an object"};
  const std::string status = j.value("status", "");
  if (status != "completed" && status != "failed") err.push_back("status must be completed or failed");
  for (const char* k : {"method", "config", "metrics"}) {
    if (!j.contains(k) || !j[k].is_string()) err.push_back(std::string(k) + " must be a string");
  }
  if (!j.contains("seed") || !j["seed"].is_number_unsigned()) err.push_back("seed must be unsigned");
  if (!j.contains("iterations_completed") || !j["iterations_completed"].is_number_integer()) {
    err.push_back("iterations_completed must be an integer");
  }
  if (!j.contains("checkpoints") || !j["checkpoints"].is_array()) err.push_back("checkpoints must be an array");
  if (!j.contains("wall_ms") || !j["wall_ms"].is_object()) {
    err.push_back("wall_ms must be an object");
  } else {
    for (const char* k : {"train", "meta_test", "total"}) require_number(j["wall_ms"], k, err);
  }
  if (status == "failed" && (!j.contains("error") || !j["error"].is_string())) err.push_back("failed run needs error");
  if (status == "completed") {
    if (!j.contains("meta_test") || !j["meta_test"].is_object()) return err.push_back("missing meta_test"), err;
    const auto& mt = j["meta_test"];
    const std::string metric = mt.value("metric", "");
    if (metric != "accuracy" && metric != "mse" && metric != "return") err.push_back("unknown metric " + metric);
    if (!mt.contains("tasks") || !mt["tasks"].is_number_unsigned()) err.push_back("meta_test.tasks must be unsigned");
    if (!mt.contains("per_step") || !mt["per_step"].is_array() || mt["per_step"].empty()) {
      err.push_back("meta_test.per_step must be a nonempty array");
    } else {
      std::size_t k = 0;
      for (const auto& p : mt["per_step"]) {
        if (!p.contains("gradient_step") || p["gradient_step"] != k) err.push_back("gradient_step out of sequence");
        require_number(p, "mean", err);
        require_number(p, "ci_halfwidth", err);
        if (p.contains("ci_halfwidth") && p["ci_halfwidth"].is_number() && p["ci_halfwidth"].get<double>() < 0.0) {
          err.push_back("negative ci_halfwidth");
        }
        ++k;
      }
    }
  }
  return err;
}

enum class Cell { Integer, Number, Text };

/// CSV with an exact header row and typed columns; at least one data row.
inline std::vector<std::string> csv_errors(std::string_view text, const std::vector<std::string>& header,
                                           const std::vector<Cell>& types) {
  std::vector<std::string> err;
  std::vector<std::vector<std::string>> rows;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) return {"last line lacks a newline"};
    std::vector<std::string> cells;
    std::string_view line = text.substr(start, end - start);
    for (;;) {
      const auto c = line.find(',');
      cells.emplace_back(line.substr(0, c));
      if (c == std::string_view::npos) break;
      line.remove_prefix(c + 1);
    }
    rows.push_back(std::move(cells));
    start = end + 1;
  }
  if (rows.empty() || rows.front() != header) return {"header mismatch"};
  if (rows.size() < 2) err.push_back("no data rows");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size()) {
      err.push_back("row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) + " cells");
      continue;
    }
    for (std::size_t c = 0; c < types.size(); ++c) {
      const std::string& v = rows[r][c];
      const bool ok = types[c] == Cell::Integer  ? parse_int<long long>(v).has_value()
                      : types[c] == Cell::Number ? parse_double(v).has_value()
                                                 : !v.empty();
      if (!ok) err.push_back("row " + std::to_string(r) + " column " + header[c] + ": bad value '" + v + "'");
    }
  }
  return err;
}

inline std::vector<std::string> curve_csv_errors(std::string_view text) {
  return csv_errors(text, {"gradient_step", "mean_metric", "ci_halfwidth"}, {Cell::Integer, Cell::Number, Cell::Number});
}

inline std::vector<std::string> compare_csv_errors(std::string_view text) {
  return csv_errors(text, {"config", "method", "shots", "seed", "gradient_step", "mean_metric", "ci_halfwidth"},
                    {Cell::Text, Cell::Text, Cell::Integer, Cell::Integer, Cell::Integer, Cell::Number, Cell::Number});
}

inline std::vector<std::string> measures_json_errors(const nlohmann::json& j) {
  std::vector<std::string> err;
  if (!j.is_object()) return {"not an object"};
  const std::vector<std::string> keys{"theil", "ge0", "ge1", "ge2", "atkinson1", "gini", "vl"};
  for (const auto& k : keys) require_number(j, k.c_str(), err);
  if (j.size() != keys.size()) err.push_back("unexpected keys");
  return err;
}

}  // namespace taml::testing
