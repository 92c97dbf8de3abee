#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "json.hpp"

#include "dynaseg/appearance_model.hpp"
#include "dynaseg/config.hpp"
#include "dynaseg/error.hpp"
#include "dynaseg/feature_filter.hpp"
#include "dynaseg/io.hpp"
#include "dynaseg/mask_pipeline.hpp"
#include "dynaseg/scene_simulator.hpp"
#include "dynaseg/stages.hpp"
#include "dynaseg/window_detector.hpp"

using namespace dynaseg;

namespace {

// Missing or inconsistent inputs detected before a stage starts: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr const char* kMergedFile = "merged_map.jsonl";
constexpr const char* kFlaggedFile = "flagged.jsonl";
constexpr const char* kMasksFile = "masks.jsonl";
constexpr const char* kPredictedFile = "predicted_masks.jsonl";

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const ValidationError*>(&e)) return "validation";
  if (dynamic_cast<const GapError*>(&e)) return "gap";
  if (dynamic_cast<const DegeneracyError*>(&e)) return "degeneracy";
  if (dynamic_cast<const PluginError*>(&e)) return "plugin";
  return "runtime";
}

void report_error(const std::string& stage, const std::string& kind, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = {{"stage", stage}, {"kind", kind}, {"message", message}};
  std::cerr << j.dump() << '\n';
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("dynaseg");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("DYNASEG_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only honour real ones.
    if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
  }
}

SequenceDir require_sequence(const fs::path& dir) {
  if (!fs::is_regular_file(dir / kMetaFile)) throw UsageError("not a sequence directory: " + dir.string());
  return open_sequence(dir);
}

std::vector<SequenceDir> require_sequences(const fs::path& root) {
  auto seqs = discover_sequences(root);
  if (seqs.empty()) throw UsageError("no sequences under " + root.string());
  return seqs;
}

Trajectory require_trajectory(const SequenceDir& seq) {
  if (!fs::is_regular_file(seq.trajectory)) throw UsageError("missing trajectory " + seq.trajectory.string());
  Trajectory t = read_trajectory(seq.trajectory);
  t.total_frames = seq.meta.frame_count;
  t.tracked_frames = std::min(static_cast<int>(t.poses.size()), seq.meta.frame_count);
  return t;
}

FrameClock clock_of(const SequenceMeta& meta) {
  FrameClock c;
  c.fps = meta.fps;
  if (auto it = meta.extras.find("t0"); it != meta.extras.end()) c.t0 = std::stod(it->second);
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

// --- stages ------------------------------------------------------------------

void simulate_stage(Preset preset, std::uint64_t seed, int runs, std::optional<int> frames, const fs::path& out) {
  ScenarioConfig c = ScenarioConfig::for_preset(preset, seed);
  c.runs = runs;
  if (frames) {
    // Keep the motion interval inside short sequences.
    const int span = c.motion_stop - c.motion_start;
    c.frame_count = *frames;
    if (c.motion_stop >= c.frame_count) {
      c.motion_start = std::max(1, c.frame_count / 3);
      c.motion_stop = std::min(c.frame_count - 1, c.motion_start + span);
    }
  }
  const Simulation sim = generate(c);
  const fs::path dir = out / c.id();
  emit_run_files(sim, dir);
  spdlog::info("simulate: wrote {} runs to {}", sim.runs.size(), dir.string());
}

MergedFeatureMap merge_stage(const SequenceDir& seq, const PipelineConfig& cfg) {
  if (seq.feature_files.empty()) throw UsageError("no feature files in " + seq.dir.string());
  return merge_feature_files(seq.feature_files, seq.meta, cfg.merge);
}

MergedFeatureMap map_for(const SequenceDir& seq, const std::optional<fs::path>& map_path, const PipelineConfig& cfg) {
  if (map_path) {
    if (!fs::is_regular_file(*map_path)) throw UsageError("missing merged map " + map_path->string());
    return read_merged_map(*map_path);
  }
  return merge_stage(seq, cfg);
}

std::vector<WindowScore> detect_stage(const SequenceDir& seq, const MergedFeatureMap& map, const PipelineConfig& cfg,
                                      int jobs) {
  const Trajectory traj = require_trajectory(seq);
  DetectionInputs in{map, traj, clock_of(seq.meta), seq.meta.intrinsics};
  ScanResult res = scan_sequence(in, cfg.detector, jobs);
  spdlog::info("detect {}: {} windows flagged", seq.meta.sequence_id, res.flagged.size());
  return std::move(res.flagged);
}

struct PluginCommands {
  std::string segmenter;
  std::string tracker;
};

std::vector<MaskSequence> build_masks_stage(const SequenceDir& seq, const MergedFeatureMap& map,
                                            const std::vector<WindowScore>& flagged, const PipelineConfig& cfg,
                                            const PluginCommands& plugins) {
  const Trajectory traj = require_trajectory(seq);
  MaskContext ctx{map, &traj, clock_of(seq.meta), seq.meta.intrinsics, seq.meta.sequence_id};
  std::optional<ProcessSegmenter> segmenter;
  std::optional<ProcessTracker> tracker;
  if (!plugins.segmenter.empty()) segmenter.emplace(plugins.segmenter);
  if (!plugins.tracker.empty()) tracker.emplace(plugins.tracker);
  auto objects = build_masks(ctx, flagged, cfg.masks, segmenter ? &*segmenter : nullptr, tracker ? &*tracker : nullptr);
  spdlog::info("build-masks {}: {} object(s)", seq.meta.sequence_id, objects.size());
  return objects;
}

FeatureGroups pooled_features(const SequenceDir& seq) {
  FeatureGroups g;
  for (const auto& f : seq.feature_files) {
    for (auto& r : read_feature_list(f, seq.meta)) g[r.frame].push_back(r);
  }
  return g;
}

// Trains on every example whose mask file exists under `masks_name`.
AppearanceModel train_stage(const std::vector<SequenceDir>& examples, const fs::path& masks_root,
                            const PipelineConfig& cfg) {
  AppearanceModel model(cfg.appearance);
  for (const auto& ex : examples) {
    const fs::path path = masks_root / ex.meta.sequence_id / kMasksFile;
    if (!fs::is_regular_file(path)) throw UsageError("missing example masks " + path.string());
    const MaskSequence masks = read_union_mask(path, ex.meta);
    if (masks.frames.empty()) continue;
    model.add_example(pooled_features(ex), masks);
  }
  spdlog::info("segment: model trained on {} labelled features", model.examples());
  return model;
}

MaskSequence segment_stage(const AppearanceModel& model, const SequenceDir& seq) {
  if (seq.feature_files.empty()) throw UsageError("no feature files in " + seq.dir.string());
  const auto runs = load_runs(seq.feature_files, seq.meta);
  FeatureGroups g;
  for (const auto& run : runs) {
    for (const auto& r : run) g[r.frame].push_back(r);
  }
  return model.infer(g, seq.meta, static_cast<int>(runs.size()));
}

void filter_stage(const SequenceDir& seq, const fs::path& masks_path, const fs::path& out) {
  if (seq.feature_files.empty()) throw UsageError("no feature files in " + seq.dir.string());
  if (!fs::is_regular_file(masks_path)) throw UsageError("missing masks " + masks_path.string());
  const MaskSequence masks = read_union_mask(masks_path, seq.meta);
  fs::create_directories(out);
  FilterStats total;
  for (const auto& f : seq.feature_files) {
    FilterStats stats;
    write_feature_records(out / f.filename(), filter_records(read_feature_list(f, seq.meta), masks, &stats));
    total.input += stats.input;
    total.kept += stats.kept;
  }
  spdlog::info("filter {}: kept {} of {} features", seq.meta.sequence_id, total.kept, total.input);
}

void track_stage(const SequenceDir& seq, const fs::path& features_dir, const std::string& system,
                 const fs::path& estimates_root) {
  SequenceDir src = seq;
  if (features_dir != seq.dir) {
    src.feature_files.clear();
    for (const auto& e : fs::directory_iterator(features_dir)) {
      const std::string name = e.path().filename().string();
      if (name.starts_with("features_run_") && name.ends_with(".jsonl")) src.feature_files.push_back(e.path());
    }
    std::sort(src.feature_files.begin(), src.feature_files.end());
  }
  if (src.feature_files.empty()) throw UsageError("no feature files in " + features_dir.string());
  const Scene scene(scenario_from_meta(seq.meta));
  const fs::path dir = estimates_root / seq.meta.sequence_id / system;
  fs::create_directories(dir);
  for (const auto& run : load_runs(src.feature_files, seq.meta)) {
    const int id = run.front().run;
    write_trajectory(track_run(scene, run, id), dir / estimate_file_name(id));
  }
}

nlohmann::ordered_json evaluate_stage(const std::vector<SequenceDir>& tests, const fs::path& estimates_root,
                                      const PipelineConfig& cfg) {
  std::vector<EvaluationCase> cases;
  for (const auto& seq : tests) {
    EvaluationCase c;
    c.sequence_id = seq.meta.sequence_id;
    c.ground_truth = require_trajectory(seq);
    c.r_gt = tracking_rate(c.ground_truth);
    c.total_frames = seq.meta.frame_count;
    c.fps = seq.meta.fps;
    c.systems = load_estimates(estimates_root / c.sequence_id, c.total_frames);
    cases.push_back(std::move(c));
  }
  return evaluation_report(cases, cfg.metrics);
}

// Work directory layout shared by `pipeline` and the documented stage-by-stage
// invocation: <work>/examples/<id>/{merged_map,flagged,masks}.jsonl,
// <work>/tests/<id>/{predicted_masks.jsonl,filtered/}, <work>/estimates/.
void pipeline_stage(const fs::path& examples_root, const fs::path& tests_root, const fs::path& work,
                    const fs::path& report_path, const PipelineConfig& cfg, int jobs, const PluginCommands& plugins) {
  const auto examples = require_sequences(examples_root);
  const auto tests = require_sequences(tests_root);
  for (const auto& ex : examples) {
    const fs::path dir = work / "examples" / ex.meta.sequence_id;
    fs::create_directories(dir);
    const MergedFeatureMap map = merge_stage(ex, cfg);
    write_merged_map(map, dir / kMergedFile);
    const auto flagged = detect_stage(ex, map, cfg, jobs);
    write_flagged_windows(flagged, dir / kFlaggedFile);
    write_masks(dir / kMasksFile, build_masks_stage(ex, map, flagged, cfg, plugins));
  }
  const AppearanceModel model = train_stage(examples, work / "examples", cfg);
  for (const auto& seq : tests) {
    const fs::path dir = work / "tests" / seq.meta.sequence_id;
    fs::create_directories(dir);
    write_masks(dir / kPredictedFile, {segment_stage(model, seq)});
    filter_stage(seq, dir / kPredictedFile, dir / "filtered");
    track_stage(seq, seq.dir, "original", work / "estimates");
    track_stage(seq, dir / "filtered", "masked", work / "estimates");
  }
  write_text(report_path, dump_report(evaluate_stage(tests, work / "estimates", cfg)));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Dynamic-object masking pipeline for monocular SLAM evaluation"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  int jobs = 1;
  app.add_option("--config", config_path, "Flat key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "Override a configuration key (key=value), repeatable");
  app.add_option("--jobs", jobs, "Worker threads for window scans")->check(CLI::Range(1, 256));

  std::string preset_name = "easy";
  std::uint64_t seed = 1;
  int runs = 10;
  std::optional<int> frames;
  std::string out, seq_dir, map_path, flagged_path, masks_path, features_dir, system = "original";
  std::string examples_root, tests_root, estimates_root, work_dir, export_dir;
  PluginCommands plugins;

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic sequence with SLAM run files");
  simulate->add_option("--preset", preset_name, "static, easy, hard, very-hard or static-camera");
  simulate->add_option("--seed", seed, "Scenario seed");
  simulate->add_option("--runs", runs, "Number of SLAM runs")->check(CLI::Range(1, 1000));
  simulate->add_option("--frames", frames, "Sequence length")->check(CLI::Range(10, 100000));
  simulate->add_option("--out", out, "Root directory; the sequence goes to <out>/<id>")->required();

  auto* merge = app.add_subcommand("merge-runs", "Merge the runs of a sequence into a feature map");
  merge->add_option("--seq", seq_dir, "Sequence directory")->required();
  merge->add_option("--out", out, "Merged map file")->required();

  auto* detect = app.add_subcommand("detect", "Scan sliding windows for dynamic-object outlier patterns");
  detect->add_option("--seq", seq_dir, "Sequence directory")->required();
  detect->add_option("--map", map_path, "Merged map (default: merge the sequence's runs)");
  detect->add_option("--out", out, "Flagged windows file")->required();

  auto* masks = app.add_subcommand("build-masks", "Turn flagged windows into object mask sequences");
  masks->add_option("--seq", seq_dir, "Sequence directory")->required();
  masks->add_option("--map", map_path, "Merged map (default: merge the sequence's runs)");
  masks->add_option("--flagged", flagged_path, "Flagged windows file")->required();
  masks->add_option("--out", out, "Mask file")->required();
  masks->add_option("--segmenter", plugins.segmenter, "External segmenter command");
  masks->add_option("--tracker", plugins.tracker, "External tracker command");
  masks->add_option("--export", export_dir, "Also write a PGM training set of the union mask here");

  auto* segment = app.add_subcommand("segment", "Mask a sequence with a model learned from example masks");
  segment->add_option("--examples", examples_root, "Example sequences")->required();
  segment->add_option("--masks", masks_path, "Root holding <id>/masks.jsonl per example")->required();
  segment->add_option("--seq", seq_dir, "Sequence to mask")->required();
  segment->add_option("--out", out, "Mask file")->required();

  auto* filter = app.add_subcommand("filter", "Drop features that fall inside masks");
  filter->add_option("--seq", seq_dir, "Sequence directory")->required();
  filter->add_option("--masks", masks_path, "Mask file")->required();
  filter->add_option("--out", out, "Directory for the filtered run files")->required();

  auto* track = app.add_subcommand("track", "Run the reference tracker over a sequence's run files");
  track->add_option("--seq", seq_dir, "Sequence directory")->required();
  track->add_option("--features", features_dir, "Directory with run files (default: the sequence)");
  track->add_option("--system", system, "System name for the estimates");
  track->add_option("--out", out, "Estimates root; writes <out>/<id>/<system>/")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score estimated trajectories against ground truth");
  evaluate->add_option("--tests", tests_root, "Test sequences")->required();
  evaluate->add_option("--estimates", estimates_root, "Estimates root")->required();
  evaluate->add_option("--out", out, "Report file (default: stdout)");

  auto* pipeline = app.add_subcommand("pipeline", "Examples to masks to filtered tracking to report");
  pipeline->add_option("--examples", examples_root, "Example sequences")->required();
  pipeline->add_option("--tests", tests_root, "Test sequences")->required();
  pipeline->add_option("--out", out, "Report file")->required();
  pipeline->add_option("--work", work_dir, "Intermediate files (default: <out>.work)");
  pipeline->add_option("--segmenter", plugins.segmenter, "External segmenter command");
  pipeline->add_option("--tracker", plugins.tracker, "External tracker command");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", "usage", e.what());
    return 2;
  }

  const CLI::App* cmd = app.get_subcommands().front();
  const std::string stage = cmd->get_name();
  PipelineConfig cfg;
  try {
    if (config_path) cfg = load_pipeline_config(*config_path);
    apply_overrides(cfg, overrides);
    cfg.validate();
  } catch (const Error& e) {
    report_error("config", error_kind(e), e.what());
    return 2;
  }

  try {
    if (cmd == simulate) {
      Preset preset;
      try {
        preset = parse_preset(preset_name);
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      simulate_stage(preset, seed, runs, frames, out);
    } else if (cmd == merge) {
      write_merged_map(merge_stage(require_sequence(seq_dir), cfg), out);
    } else if (cmd == detect) {
      const SequenceDir seq = require_sequence(seq_dir);
      const auto map = map_for(seq, map_path.empty() ? std::nullopt : std::optional<fs::path>(map_path), cfg);
      write_flagged_windows(detect_stage(seq, map, cfg, jobs), out);
    } else if (cmd == masks) {
      const SequenceDir seq = require_sequence(seq_dir);
      if (!fs::is_regular_file(flagged_path)) throw UsageError("missing flagged windows " + flagged_path);
      const auto map = map_for(seq, map_path.empty() ? std::nullopt : std::optional<fs::path>(map_path), cfg);
      const auto objects = build_masks_stage(seq, map, read_flagged_windows(flagged_path), cfg, plugins);
      write_masks(out, objects);
      if (!export_dir.empty() && !objects.empty()) export_training_set(superimpose(objects), seq.meta, export_dir);
    } else if (cmd == segment) {
      const AppearanceModel model = train_stage(require_sequences(examples_root), masks_path, cfg);
      write_masks(out, {segment_stage(model, require_sequence(seq_dir))});
    } else if (cmd == filter) {
      filter_stage(require_sequence(seq_dir), masks_path, out);
    } else if (cmd == track) {
      const SequenceDir seq = require_sequence(seq_dir);
      track_stage(seq, features_dir.empty() ? seq.dir : fs::path(features_dir), system, out);
    } else if (cmd == evaluate) {
      const std::string text = dump_report(evaluate_stage(require_sequences(tests_root), estimates_root, cfg));
      if (out.empty()) {
        std::cout << text;
      } else {
        write_text(out, text);
      }
    } else if (cmd == pipeline) {
      const fs::path work = work_dir.empty() ? fs::path(out + ".work") : fs::path(work_dir);
      pipeline_stage(examples_root, tests_root, work, out, cfg, jobs, plugins);
    }
  } catch (const UsageError& e) {
    report_error(stage, "usage", e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error(stage, error_kind(e), e.what());
    return 1;
  }
  return 0;
}
