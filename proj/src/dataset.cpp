#include "eventformer/dataset.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace evf {
namespace {

using ordered_json = nlohmann::ordered_json;

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path + " for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

}  // namespace

void write_dataset(const std::string& path, const std::vector<SequenceSample>& samples) {
  auto out = open_out(path);
  for (const auto& s : samples) {
    ordered_json rec;
    rec["id"] = s.id;
    rec["T"] = s.T;
    rec["F"] = s.features.cols();
    auto& rows = rec["features"] = ordered_json::array();
    for (int64_t t = 0; t < s.T; ++t) {
      ordered_json row = ordered_json::array();
      for (int64_t f = 0; f < s.features.cols(); ++f) row.push_back(s.features.at(t, f));
      rows.push_back(std::move(row));
    }
    auto& evs = rec["events"] = ordered_json::array();
    for (const auto& ev : s.events)
      evs.push_back({{"s", static_cast<int64_t>(ev.start)},
                     {"e", static_cast<int64_t>(ev.end)},
                     {"c", ev.class_id}});
    out << rec.dump() << "\n";
  }
}

std::vector<SequenceSample> read_dataset(const std::string& path, int C) {
  auto in = open_in(path);
  std::vector<SequenceSample> samples;
  std::string line;
  int64_t f_dim = -1;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json rec;
    try {
      rec = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    SequenceSample s;
    s.id = rec.at("id").get<std::string>();
    s.T = rec.at("T").get<int64_t>();
    const int64_t f = rec.at("F").get<int64_t>();
    if (f_dim < 0) f_dim = f;
    if (f != f_dim)
      throw std::runtime_error(path + ": F changes at line " + std::to_string(lineno));
    const auto& rows = rec.at("features");
    if (static_cast<int64_t>(rows.size()) != s.T)
      throw std::runtime_error(path + ": sample " + s.id + " has " + std::to_string(rows.size()) +
                               " feature rows, expected T=" + std::to_string(s.T));
    s.features = Tensor::zeros({s.T, f});
    for (int64_t t = 0; t < s.T; ++t) {
      const auto& row = rows[t];
      if (static_cast<int64_t>(row.size()) != f)
        throw std::runtime_error(path + ": sample " + s.id + " has a feature row of width " +
                                 std::to_string(row.size()) + ", expected F=" + std::to_string(f));
      for (int64_t j = 0; j < f; ++j) s.features.at(t, j) = row[j].get<double>();
    }
    for (const auto& ev : rec.at("events"))
      s.events.push_back({static_cast<double>(ev.at("s").get<int64_t>()),
                          static_cast<double>(ev.at("e").get<int64_t>()), ev.at("c").get<int>()});
    validate_sample(s, C);
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_detections(const std::string& path, const std::vector<SequenceDetections>& dets) {
  auto out = open_out(path);
  for (const auto& d : dets) {
    ordered_json rec;
    rec["id"] = d.id;
    auto& evs = rec["events"] = ordered_json::array();
    for (const auto& ev : d.events)
      evs.push_back({{"s", ev.start}, {"e", ev.end}, {"c", ev.class_id}, {"score", ev.score}});
    out << rec.dump() << "\n";
  }
}

std::vector<SequenceDetections> read_detections(const std::string& path) {
  auto in = open_in(path);
  std::vector<SequenceDetections> dets;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto rec = ordered_json::parse(line);
    SequenceDetections d;
    d.id = rec.at("id").get<std::string>();
    for (const auto& ev : rec.at("events"))
      d.events.push_back({ev.at("s").get<double>(), ev.at("e").get<double>(), ev.at("c").get<int>(),
                          ev.at("score").get<double>()});
    dets.push_back(std::move(d));
  }
  return dets;
}

}  // namespace evf
