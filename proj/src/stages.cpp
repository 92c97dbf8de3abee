#include "dynaseg/stages.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "dynaseg/error.hpp"
#include "dynaseg/io.hpp"

namespace dynaseg {

namespace {

std::string numbered(const char* pattern, int run) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, run);
  return buf;
}

std::vector<fs::path> matching_files(const fs::path& dir, const std::string& prefix, const std::string& suffix) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (name.size() >= prefix.size() + suffix.size() && name.starts_with(prefix) && name.ends_with(suffix)) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Largest distance of any position from the first one.
double spread(const Trajectory& traj) {
  double out = 0.0;
  for (const auto& p : traj.poses) out = std::max(out, (p.t - traj.poses.front().t).norm());
  return out;
}

nlohmann::ordered_json ate_json(const Ate& ate) {
  return ate ? nlohmann::ordered_json(*ate) : nlohmann::ordered_json(nullptr);
}

// Estimated motion below this (in estimate units) counts as staying put.
constexpr double kFalseStartSpread = 0.01;

}  // namespace

std::string feature_file_name(int run) { return numbered("features_run_%02d.jsonl", run); }
std::string estimate_file_name(int run) { return numbered("est_run_%02d.txt", run); }

SequenceDir open_sequence(const fs::path& dir) {
  SequenceDir s;
  s.dir = dir;
  s.meta = read_sequence_meta(dir / kMetaFile);
  s.feature_files = matching_files(dir, "features_run_", ".jsonl");
  s.trajectory = dir / kTrajectoryFile;
  s.gt_masks = dir / kMaskFile;
  return s;
}

std::vector<SequenceDir> discover_sequences(const fs::path& root) {
  if (fs::is_regular_file(root / kMetaFile)) return {open_sequence(root)};
  std::vector<fs::path> dirs;
  if (fs::is_directory(root)) {
    for (const auto& e : fs::directory_iterator(root)) {
      if (e.is_directory() && fs::is_regular_file(e.path() / kMetaFile)) dirs.push_back(e.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<SequenceDir> out;
  for (const auto& d : dirs) out.push_back(open_sequence(d));
  return out;
}

std::vector<std::vector<FeatureRecord>> load_runs(const std::vector<fs::path>& files, const SequenceMeta& meta) {
  std::map<int, std::vector<FeatureRecord>> by_run;
  for (const auto& f : files) {
    for (auto& r : read_feature_list(f, meta)) by_run[r.run].push_back(r);
  }
  std::vector<std::vector<FeatureRecord>> out;
  for (auto& [run, records] : by_run) out.push_back(std::move(records));
  return out;
}

MergedFeatureMap merge_feature_files(const std::vector<fs::path>& files, const SequenceMeta& meta,
                                     const MergeConfig& config) {
  config.validate();
  const auto runs = load_runs(files, meta);
  if (runs.empty()) throw ValidationError("merge: no feature records in " + std::to_string(files.size()) + " file(s)");
  FeatureMapBuilder builder(meta, config.cell_size);
  for (const auto& run : runs) builder.add_run(run);
  return builder.finish(config);
}

std::vector<SystemRuns> load_estimates(const fs::path& sequence_estimates, int total_frames) {
  std::vector<fs::path> systems;
  if (fs::is_directory(sequence_estimates)) {
    for (const auto& e : fs::directory_iterator(sequence_estimates)) {
      if (e.is_directory()) systems.push_back(e.path());
    }
  }
  std::sort(systems.begin(), systems.end());
  std::vector<SystemRuns> out;
  for (const auto& dir : systems) {
    SystemRuns s;
    s.system = dir.filename().string();
    for (const auto& f : matching_files(dir, "est_run_", ".txt")) {
      Trajectory t = read_trajectory(f);
      t.total_frames = total_frames;
      t.tracked_frames = std::min(static_cast<int>(t.poses.size()), total_frames);
      s.runs.push_back(std::move(t));
    }
    if (!s.runs.empty()) out.push_back(std::move(s));
  }
  return out;
}

nlohmann::ordered_json evaluation_report(const std::vector<EvaluationCase>& cases, const MetricsConfig& config) {
  config.validate();
  using json = nlohmann::ordered_json;

  struct Totals {
    double penalized_sum = 0.0;
    int moving = 0;
    int successes = 0;
    int fixed = 0;
    int false_starts = 0;
  };
  std::map<std::string, Totals> totals;
  std::vector<std::string> system_order;

  json sequences = json::array();
  for (const auto& c : cases) {
    const bool static_camera = c.ground_truth.poses.size() < 2 || spread(c.ground_truth) < 1e-9;
    const double tol = config.tolerance(c.fps);

    std::vector<SequenceEval> evals(c.systems.size());
    std::vector<json> run_lists(c.systems.size());
    std::vector<int> false_starts(c.systems.size(), 0);
    for (std::size_t i = 0; i < c.systems.size(); ++i) {
      std::vector<RunResult> results;
      run_lists[i] = json::array();
      for (const auto& t : c.systems[i].runs) {
        RunResult r;
        r.tracking_rate = tracking_rate(t);
        if (static_camera) {
          const bool started = spread(t) > kFalseStartSpread;
          false_starts[i] += started ? 1 : 0;
          run_lists[i].push_back({{"tracking_rate", r.tracking_rate}, {"false_start", started}});
        } else {
          r.ate = ate_rmse(t, c.ground_truth, tol);
          run_lists[i].push_back({{"ate_rmse", ate_json(r.ate)}, {"tracking_rate", r.tracking_rate}});
        }
        results.push_back(r);
      }
      SequenceEval& e = evals[i];
      e.r_gt = c.r_gt;
      if (results.empty()) continue;
      const RunAggregate agg = aggregate_runs(results);
      e.tracking_rate = agg.median_tracking_rate;
      if (!static_camera) {
        e.ate_rmse = agg.median_ate;
        e.unknown_fraction = agg.unknown_fraction;
        e.valid = is_valid(e.ate_rmse, e.tracking_rate, c.r_gt, config);
        e.success = is_success(e.ate_rmse, e.tracking_rate, c.r_gt, config);
      }
    }
    // Peers: valid ATEs of the other systems on this sequence.
    for (std::size_t i = 0; i < evals.size() && !static_camera; ++i) {
      std::vector<double> peers;
      for (std::size_t j = 0; j < evals.size(); ++j) {
        if (j != i && evals[j].valid) peers.push_back(*evals[j].ate_rmse);
      }
      evals[i].penalized_ate = compute_penalized(evals[i].ate_rmse, evals[i].valid, peers, config);
    }

    json systems = json::object();
    for (std::size_t i = 0; i < c.systems.size(); ++i) {
      const std::string& name = c.systems[i].system;
      if (!totals.count(name)) system_order.push_back(name);
      Totals& tot = totals[name];
      const SequenceEval& e = evals[i];
      json s;
      if (static_camera) {
        const int runs = static_cast<int>(c.systems[i].runs.size());
        const bool started = 2 * false_starts[i] > runs;
        s["tracking_rate"] = e.tracking_rate;
        s["false_start_runs"] = false_starts[i];
        s["false_start"] = started;
        ++tot.fixed;
        tot.false_starts += started ? 1 : 0;
      } else {
        s["ate_rmse"] = ate_json(e.ate_rmse);
        s["tracking_rate"] = e.tracking_rate;
        s["r_gt"] = e.r_gt;
        s["valid"] = e.valid;
        s["penalized_ate"] = e.penalized_ate;
        s["success"] = e.success;
        s["unknown_fraction"] = e.unknown_fraction;
        ++tot.moving;
        tot.penalized_sum += e.penalized_ate;
        tot.successes += e.success ? 1 : 0;
      }
      s["runs"] = run_lists[i];
      systems[name] = std::move(s);
    }
    json seq;
    seq["id"] = c.sequence_id;
    seq["static_camera"] = static_camera;
    seq["systems"] = std::move(systems);
    sequences.push_back(std::move(seq));
  }

  json summary = json::object();
  for (const auto& name : system_order) {
    const Totals& t = totals[name];
    json s;
    s["sequences"] = t.moving;
    s["average_penalized_ate"] = t.moving ? json(t.penalized_sum / t.moving) : json(nullptr);
    s["success_rate"] = t.moving ? json(double(t.successes) / t.moving) : json(nullptr);
    s["static_camera_sequences"] = t.fixed;
    s["false_start_free_rate"] = t.fixed ? json(double(t.fixed - t.false_starts) / t.fixed) : json(nullptr);
    summary[name] = std::move(s);
  }

  json report;
  report["metrics"] = {{"tau", config.tau}, {"delta_r_max", config.delta_r_max}, {"l_max", config.l_max}};
  report["sequences"] = std::move(sequences);
  report["summary"] = std::move(summary);
  return report;
}

std::string dump_report(const nlohmann::ordered_json& report) { return report.dump(2) + "\n"; }

}  // namespace dynaseg
