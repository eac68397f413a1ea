#include "run_config.hpp"

#include <fstream>
#include <map>

namespace diffdvr::cli {

namespace {

// null defaults mark optional strings.
json camera_keys(int image_size, double stepsize) {
  return {{"image_size", image_size}, {"fov", 30.0}, {"radius", 2.5}, {"stepsize", stepsize}};
}

json volume_keys(const char* phantom, int resolution) {
  return {{"phantom", phantom}, {"resolution", resolution}, {"volume_file", nullptr}};
}

json merged(std::initializer_list<json> parts) {
  json out = json::object();
  for (const auto& p : parts) out.update(p);
  return out;
}

const std::map<std::string, json>& defaults() {
  static const std::map<std::string, json> table = [] {
    std::map<std::string, json> t;
    t["render"] = merged({volume_keys("shells", 32), camera_keys(128, 1.0 / 128),
                          {{"tf", "reference"},
                           {"tf_resolution", 64},
                           {"longitude", 30.0},
                           {"latitude", 20.0},
                           {"early_termination", false},
                           {"format", "ppm"}}});
    t["gradcheck"] = {{"scenes", 4},
                      {"resolution", 8},
                      {"image_size", 8},
                      {"tf_resolution", 8},
                      {"stepsize", 1.0 / 16},
                      {"coordinates", 4},
                      {"tolerance", 1e-3}};
    t["viewpoint"] = merged({volume_keys("asymmetric", 32), camera_keys(64, 1.0 / 64),
                             {{"tf", "reference"},
                              {"tf_resolution", 64},
                              {"iterations", 20},
                              {"lr", 2000.0},
                              {"max_halvings", 8},
                              {"latitude_limit", 89.0},
                              {"restarts", json::array()},
                              {"sweep", 0}}});
    t["tf-recon"] = merged({volume_keys("shells", 32), camera_keys(64, 1.0 / 64),
                            {{"views", 8},
                             {"truth_tf", "reference"},
                             {"truth_tf_resolution", 256},
                             {"tf_resolution", 16},
                             {"lambda", 0.4},
                             {"lr", 0.8},
                             {"epochs", 200},
                             {"batch", 0},
                             {"tau_max", 100.0},
                             {"init_rgb_mean", 0.0},
                             {"init_rgb_std", 1.0},
                             {"init_tau_mean", 0.0},
                             {"init_tau_std", 1.0}}});
    t["density-recon"] = merged({volume_keys("sphere", 16), camera_keys(64, 0.0),
                                 {{"views", 16},
                                  {"tau_scale", 10.0},
                                  {"init_density", 0.5},
                                  {"start_resolution", 4},
                                  {"final_resolution", 16},
                                  {"iterations_per_level", 10},
                                  {"final_iterations", 50},
                                  {"lr", 0.3},
                                  {"batch", 8},
                                  {"lambda", 0.5},
                                  {"stepsize_voxels", 0.2},
                                  {"memory", "inversion"}}});
    t["density-recon"].erase("stepsize");
    t["color-recon"] = merged({volume_keys("shells", 16), camera_keys(64, 0.0),
                               {{"views", 16},
                                {"tf", "bump"},
                                {"tf_resolution", 64},
                                {"tau_peak", 30.0},
                                {"start_resolution", 4},
                                {"iterations_per_level", 10},
                                {"color_iterations", 50},
                                {"color_lr", 0.3},
                                {"color_lambda", 0.5},
                                {"estimate_samples", 256},
                                {"estimate_alpha", nullptr},
                                {"estimate_beta", 1.0},
                                {"estimate_sweeps", 50},
                                {"density_iterations", 50},
                                {"density_lr", 0.3},
                                {"density_lambda", 20.0},
                                {"batch", 8},
                                {"stepsize_voxels", 0.2},
                                {"compare_random_init", false}}});
    t["color-recon"].erase("stepsize");
    t["demo-1d"] = {{"d0", -1.0},       {"truth", -1.0},      {"variance", 0.5},
                    {"absorption_scale", 1.0}, {"samples", 64}, {"stepsize", 1.0 / 64},
                    {"sweep_min", -2.0}, {"sweep_max", 2.0},   {"sweep_points", 401}};
    t["phantom"] = {{"kind", "shells"}, {"resolution", 32}, {"name", "phantom"}};
    for (auto& [name, d] : t) {
      d["output"] = "out";
      d["seed"] = 0;
      d["precision"] = "double";
    }
    return t;
  }();
  return table;
}

bool same_kind(const json& def, const json& v) {
  if (def.is_null()) return v.is_null() || v.is_string() || v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_number_integer() || def.is_number_unsigned()) return v.is_number_integer() || v.is_number_unsigned();
  if (def.is_number()) return v.is_number();
  if (def.is_array()) return v.is_array();
  return false;
}

}  // namespace

const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, v] : defaults()) n.push_back(k);
    return n;
  }();
  return names;
}

RunConfig::RunConfig(const std::string& task) : task_(task) {
  const auto it = defaults().find(task);
  if (it == defaults().end()) throw ConfigError("unknown task '" + task + "'");
  values_ = it->second;
}

void RunConfig::merge(const json& user) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  const json& def = defaults().at(task_);
  for (const auto& [key, value] : user.items()) {
    if (key == "task") {
      if (!value.is_string() || value.get<std::string>() != task_)
        throw ConfigError("config is for task " + value.dump() + ", not '" + task_ + "'");
      continue;
    }
    if (!def.contains(key)) throw ConfigError("unknown key '" + key + "' for task " + task_);
    if (!same_kind(def.at(key), value))
      throw ConfigError("key '" + key + "' has the wrong type (got " + value.dump() + ")");
    if (key == "seed" && !value.is_number_unsigned() && value.get<std::int64_t>() < 0)
      throw ConfigError("seed must be non-negative");
    values_[key] = value;
  }
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json user;
  try {
    user = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  merge(user);
}

double RunConfig::number(const std::string& key) const { return values_.at(key).get<double>(); }
int RunConfig::integer(const std::string& key) const { return values_.at(key).get<int>(); }
std::uint64_t RunConfig::seed() const { return values_.at("seed").get<std::uint64_t>(); }
std::string RunConfig::text(const std::string& key) const { return values_.at(key).get<std::string>(); }
bool RunConfig::flag(const std::string& key) const { return values_.at(key).get<bool>(); }

}  // namespace diffdvr::cli
