#include "artifacts.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "diffdvr/errors.hpp"

namespace diffdvr::cli {

namespace fs = std::filesystem;

OutputDir::OutputDir(const fs::path& root) : root_(root) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec || !fs::is_directory(root_)) throw Error("cannot create output directory " + root_.string());
}

fs::path OutputDir::file(const std::string& name) {
  const fs::path p(name);
  if (name.empty() || p.has_parent_path() || p.is_absolute() || name == "." || name == "..")
    throw Error("artifact name '" + name + "' must be a plain file name");
  written_.push_back(name);
  return root_ / p;
}

void OutputDir::image(const std::string& stem, const ImageRGBA& img, ImageFormat format) {
  save_image(img, file(stem + (format == ImageFormat::Ppm ? ".ppm" : ".rgba")), format);
}

void OutputDir::text(const std::string& name, const std::string& content) {
  const auto path = file(name);
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw Error("cannot write " + path.string());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void OutputDir::trace(const std::vector<TraceRow>& rows) {
  std::string s = "iter,total,data,prior\n";
  for (const auto& r : rows)
    s += std::to_string(r.iter) + "," + format_double(r.total) + "," + format_double(r.data) + "," +
         format_double(r.prior) + "\n";
  text("trace.csv", s);
}

void OutputDir::gradchecks(const std::vector<GradCheck>& rows) {
  std::string s = "target,index,analytic,numeric,rel_error,passed\n";
  for (const auto& g : rows)
    s += g.target + "," + std::to_string(g.index) + "," + format_double(g.analytic) + "," +
         format_double(g.numeric) + "," + format_double(g.rel_error) + "," + (g.passed ? "1" : "0") + "\n";
  text("gradcheck.csv", s);
}

namespace {

json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

}  // namespace

json report_json(const TaskReport& report, const json& config, const json& extra) {
  json j;
  j["schema_version"] = 1;
  j["task"] = report.task;
  j["seed"] = report.seed;
  j["config"] = config;
  j["metrics"] = json::object();
  for (const auto& [k, v] : report.metrics) j["metrics"][k] = finite_or_string(v);
  j["timings"] = json::object();
  for (const auto& [k, v] : report.timings) j["timings"][k] = v;
  j["notes"] = report.notes;
  j["gradchecks"] = json::array();
  for (const auto& g : report.gradchecks)
    j["gradchecks"].push_back({{"target", g.target},
                               {"index", g.index},
                               {"analytic", finite_or_string(g.analytic)},
                               {"numeric", finite_or_string(g.numeric)},
                               {"rel_error", finite_or_string(g.rel_error)},
                               {"passed", g.passed}});
  j["trace_rows"] = report.trace.size();
  if (!report.trace.empty()) {
    j["initial_loss"] = finite_or_string(report.trace.front().total);
    j["final_loss"] = finite_or_string(report.trace.back().total);
  }
  j.update(extra);
  return j;
}

}  // namespace diffdvr::cli
