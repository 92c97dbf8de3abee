#include "dynaseg/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dynaseg/error.hpp"

namespace dynaseg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double d = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ValidationError("config: " + key + " expects a number, got \"" + v + "\"");
  }
  return d;
}

int to_int(const std::string& key, const std::string& v) {
  int i = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), i);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ValidationError("config: " + key + " expects an integer, got \"" + v + "\"");
  }
  return i;
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(to_int(key, trim(part)));
  if (out.empty()) throw ValidationError("config: " + key + " expects a comma-separated list");
  return out;
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto num = [&](const char* key, auto member) {
      t[key] = [member](PipelineConfig& c, const std::string& k, const std::string& v) { member(c) = to_double(k, v); };
    };
    auto integer = [&](const char* key, auto member) {
      t[key] = [member](PipelineConfig& c, const std::string& k, const std::string& v) { member(c) = to_int(k, v); };
    };
    integer("cell_size", [](PipelineConfig& c) -> int& { return c.merge.cell_size; });
    num("min_run_fraction", [](PipelineConfig& c) -> double& { return c.merge.min_run_fraction; });
    t["window_sizes"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.detector.window_sizes = to_int_list(k, v);
    };
    integer("stride", [](PipelineConfig& c) -> int& { return c.detector.stride; });
    integer("frame_gap", [](PipelineConfig& c) -> int& { return c.detector.frame_gap; });
    num("s_max", [](PipelineConfig& c) -> double& { return c.detector.s_max; });
    num("epsilon", [](PipelineConfig& c) -> double& { return c.detector.epsilon; });
    num("min_features", [](PipelineConfig& c) -> double& { return c.detector.min_features; });
    num("min_retained_fraction", [](PipelineConfig& c) -> double& { return c.detector.min_retained_fraction; });
    integer("k", [](PipelineConfig& c) -> int& { return c.masks.k; });
    num("refine_density_threshold", [](PipelineConfig& c) -> double& { return c.masks.refine_density_threshold; });
    num("dilation_radius", [](PipelineConfig& c) -> double& { return c.masks.dilation_radius; });
    num("search_margin", [](PipelineConfig& c) -> double& { return c.masks.search_margin; });
    integer("max_empty_frames", [](PipelineConfig& c) -> int& { return c.masks.max_empty_frames; });
    num("min_posterior", [](PipelineConfig& c) -> double& { return c.appearance.min_posterior; });
    integer("min_word_support", [](PipelineConfig& c) -> int& { return c.appearance.min_word_support; });
    integer("cluster_cell", [](PipelineConfig& c) -> int& { return c.appearance.cluster_cell; });
    num("min_cluster_features", [](PipelineConfig& c) -> double& { return c.appearance.min_cluster_features; });
    num("hull_margin", [](PipelineConfig& c) -> double& { return c.appearance.hull_margin; });
    num("tau", [](PipelineConfig& c) -> double& { return c.metrics.tau; });
    num("delta_r_max", [](PipelineConfig& c) -> double& { return c.metrics.delta_r_max; });
    num("l_max", [](PipelineConfig& c) -> double& { return c.metrics.l_max; });
    integer("runs", [](PipelineConfig& c) -> int& { return c.metrics.runs; });
    num("assoc_tolerance", [](PipelineConfig& c) -> double& { return c.metrics.assoc_tolerance; });
    return t;
  }();
  return table;
}

}  // namespace

void PipelineConfig::set(const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ValidationError("config: unknown key \"" + key + "\"");
  it->second(*this, key, trim(value));
}

void PipelineConfig::validate() const {
  merge.validate();
  detector.validate();
  masks.validate();
  appearance.validate();
  metrics.validate();
}

std::vector<std::string> PipelineConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : setters()) out.push_back(k);
  return out;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  PipelineConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), line_no, "expected key = value");
    try {
      config.set(trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  config.validate();
  return config;
}

void apply_overrides(PipelineConfig& config, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ValidationError("config override \"" + o + "\" is not key=value");
    config.set(trim(o.substr(0, eq)), o.substr(eq + 1));
  }
  config.validate();
}

}  // namespace dynaseg
