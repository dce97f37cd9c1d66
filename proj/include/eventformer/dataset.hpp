#pragma once
#include <string>
#include <vector>

#include "eventformer/types.hpp"

namespace evf {

// Newline-delimited dataset format: one sequence per line,
// {id, T, F, features: T arrays of F reals, events: [{s,e,c}]}.
// Event boundaries are whole frames on disk (synthetic labels are integral).
void write_dataset(const std::string& path, const std::vector<SequenceSample>& samples);
std::vector<SequenceSample> read_dataset(const std::string& path, int C);

// Detection output: one {id, events: [{s,e,c,score}]} object per line.
struct SequenceDetections {
  std::string id;
  std::vector<DetectionRecord> events;
};
void write_detections(const std::string& path, const std::vector<SequenceDetections>& dets);
std::vector<SequenceDetections> read_detections(const std::string& path);

}  // namespace evf
