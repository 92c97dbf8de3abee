#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dynaseg/types.hpp"

namespace dynaseg {

namespace fs = std::filesystem;

// Feature records: JSON-lines {"frame","x","y","status":"in"|"out","run"}
// with optional "pt" and "desc".
std::string format_feature_record(const FeatureRecord& r);
FeatureRecord parse_feature_record(const std::string& line, const std::string& source = "<string>",
                                   std::size_t line_no = 0);

/// Reads every record; rejects records outside the image of `meta`.
std::vector<FeatureRecord> read_feature_list(const fs::path& path, const SequenceMeta& meta);
FeatureGroups read_feature_records(const fs::path& path, const SequenceMeta& meta);
FeatureGroups group_by_frame(const std::vector<FeatureRecord>& records);
void write_feature_records(const fs::path& path, const std::vector<FeatureRecord>& records);
void write_feature_records(std::ostream& out, const std::vector<FeatureRecord>& records);

// TUM trajectories: "timestamp tx ty tz qx qy qz qw", '#' comments.
Trajectory read_trajectory(const fs::path& path);
Trajectory parse_trajectory(std::istream& in, const std::string& source = "<stream>");
void write_trajectory(const Trajectory& traj, const fs::path& path);
void write_trajectory(const Trajectory& traj, std::ostream& out);

// Sequence meta: flat "key = value".
SequenceMeta read_sequence_meta(const fs::path& path);
SequenceMeta parse_sequence_meta(std::istream& in, const std::string& source = "<stream>");
void write_sequence_meta(const SequenceMeta& meta, const fs::path& path);
void write_sequence_meta(const SequenceMeta& meta, std::ostream& out);

// Masks: JSON-lines {"frame","object","rle":[...],"first":0|1}. A file may hold
// several objects; they come back as one MaskSequence per object id.
std::vector<MaskSequence> read_masks(const fs::path& path, const SequenceMeta& meta);
/// Reads and ORs every object in the file.
MaskSequence read_union_mask(const fs::path& path, const SequenceMeta& meta);
void write_masks(const fs::path& path, const std::vector<MaskSequence>& masks);
void write_masks(std::ostream& out, const std::vector<MaskSequence>& masks);

/// Binary PGM (P5), maxval 255, foreground 255.
void write_pgm(const Raster& mask, const fs::path& path);
Raster read_pgm(const fs::path& path);

/// Shortest text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace dynaseg
