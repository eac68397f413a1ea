#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffdvr/image.hpp"
#include "diffdvr/io.hpp"
#include "diffdvr/tasks.hpp"

namespace diffdvr::cli {

using nlohmann::json;

// All artifacts of a run go through this; file names are plain names inside
// the output directory.
class OutputDir {
 public:
  explicit OutputDir(const std::filesystem::path& root);

  std::filesystem::path file(const std::string& name);
  const std::vector<std::string>& written() const { return written_; }

  void image(const std::string& stem, const ImageRGBA& img, ImageFormat format = ImageFormat::Ppm);
  void text(const std::string& name, const std::string& content);
  void trace(const std::vector<TraceRow>& rows);
  void gradchecks(const std::vector<GradCheck>& rows);

 private:
  std::filesystem::path root_;
  std::vector<std::string> written_;
};

// report.json: schema_version 1, the resolved config, seed, metrics,
// timings, notes, gradient checks and the artifact list. `extra` keys are
// merged in last.
json report_json(const TaskReport& report, const json& config, const json& extra);

std::string format_double(double v);

}  // namespace diffdvr::cli
