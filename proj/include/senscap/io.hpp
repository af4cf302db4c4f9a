// Serialization and rendering: the JSON schemas for models, types, and
// results; CSV emission; and self-contained SVG line plots. All output is
// byte-deterministic for a fixed input (no timestamps, fixed float format).

#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "senscap/bounds.hpp"
#include "senscap/simulate.hpp"

namespace senscap {

// fixed shortest-roundtrip-ish formatting used for every CSV/SVG number
std::string format_double(double v);

// ---------------------------------------------------------------------------
// JSON

nlohmann::json type_to_json(const TypeHistogram& g);
TypeHistogram type_from_json(const nlohmann::json& j);

nlohmann::json joint_type_to_json(const JointType& l);
JointType joint_type_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const ModelSpec& m);
ModelSpec model_from_json(const nlohmann::json& j);
ModelSpec load_model(const std::string& path);

nlohmann::json bound_result_to_json(const BoundResult& r);
nlohmann::json exponent_result_to_json(const ExponentResult& r);
nlohmann::json replication_to_json(const ReplicationResult& r);

// newline-delimited JSON, one line per trial
std::string trial_record_to_ndjson(const TrialRecord& r);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// ---------------------------------------------------------------------------
// CSV

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(const std::vector<std::string>& cells);
  void row_values(const std::vector<double>& values);
  // Appends a truncation marker when the interrupt flag fired mid-run.
  std::string finish() const;

 private:
  std::string buf_;
  std::size_t columns_ = 0;
};

// ---------------------------------------------------------------------------
// SVG line plots (rendering only; data always comes from a sibling table)

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct PlotVLine {
  double x = 0.0;
  std::string label;
};

struct PlotAnnotation {
  double x = 0.0;
  double y = 0.0;
  std::string text;
};

std::string render_svg_plot(const std::string& title, const std::string& xlabel,
                            const std::string& ylabel, const std::vector<PlotSeries>& series,
                            const std::vector<PlotVLine>& vlines = {},
                            const std::vector<PlotAnnotation>& notes = {});

}  // namespace senscap
