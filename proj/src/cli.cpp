#include "eventformer/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "eventformer/config.hpp"
#include "eventformer/dataset.hpp"
#include "eventformer/decode.hpp"
#include "eventformer/metrics.hpp"
#include "eventformer/model.hpp"
#include "eventformer/plots.hpp"
#include "eventformer/synthgen.hpp"
#include "eventformer/train.hpp"
#include "json.hpp"

namespace evf::cli {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  uint64_t seed = 7;
  bool seed_given = false;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config_path, "Configuration file (JSON)");
  cmd->add_option("--set", c.sets, "Override, dotted key=value (repeatable)");
  auto* out = cmd->add_option("--out", c.out, "Output directory");
  if (out_required) out->required();
  cmd->add_option("--seed", c.seed, "Run seed (dataset seed for gen; overrides run/train seeds)")
      ->each([&c](const std::string&) { c.seed_given = true; });
}

AppConfig resolve(const Common& c) {
  AppConfig cfg;
  if (!c.config_path.empty()) {
    try {
      cfg = load_config(c.config_path);
    } catch (const std::runtime_error& e) {  // unreadable file is a config error here
      throw std::invalid_argument(e.what());
    }
  }
  std::vector<std::pair<std::string, std::string>> sets;
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: --set expects key=value, got '" + kv + "'");
    sets.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg = with_overrides(cfg, sets);
  if (c.seed_given) {
    cfg.run.seed = c.seed;
    cfg.train.seed = c.seed;
  }
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

// Reproducibility trail: resolved config echo plus version/seed/timing.
void write_run_artifacts(const std::string& out_dir, const std::string& subcommand,
                         const AppConfig& cfg, uint64_t seed, double elapsed_seconds) {
  fs::create_directories(out_dir);
  write_text(out_dir + "/config.json", config_to_json(cfg));
  nlohmann::ordered_json j;
  j["tool_version"] = kToolVersion;
  j["subcommand"] = subcommand;
  j["seed"] = seed;
  j["elapsed_seconds"] = elapsed_seconds;
  write_text(out_dir + "/run_info.json", j.dump(2) + "\n");
}

std::vector<SequenceSample> read_split(const std::string& data_dir, const std::string& split,
                                       int C) {
  return read_dataset(data_dir + "/" + split + ".jsonl", C);
}

int manifest_classes(const std::string& data_dir) {
  return static_cast<int>(read_manifest(data_dir + "/manifest.json").generator.C);
}

// Detections file entries aligned to dataset order; unknown ids are errors.
std::vector<std::vector<DetectionRecord>> align_detections(
    const std::vector<SequenceSample>& samples, const std::vector<SequenceDetections>& dets) {
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < samples.size(); ++i) index[samples[i].id] = i;
  std::vector<std::vector<DetectionRecord>> out(samples.size());
  for (const auto& d : dets) {
    const auto it = index.find(d.id);
    if (it == index.end())
      throw std::runtime_error("detections reference unknown sequence id '" + d.id + "'");
    out[it->second] = d.events;
  }
  return out;
}

EvalOptions eval_options(const RunConfig& run) {
  EvalOptions eo;
  eo.class_agnostic_recall = run.class_agnostic_recall;
  eo.ar_per_class = run.ar_per_class;
  return eo;
}

EvalReport eval_and_write(const std::vector<std::vector<EventSpan>>& gts,
                          const std::vector<std::vector<DetectionRecord>>& dets, int C,
                          const EvalOptions& eo, const std::string& out_dir,
                          const std::string& label) {
  const EvalReport rep = evaluate_detections(gts, dets, C, eo);
  fs::create_directories(out_dir);
  write_text(out_dir + "/eval.json", report_to_json(rep));
  const std::string table = report_table(rep, label);
  write_text(out_dir + "/eval.txt", table);
  std::cout << table;
  return rep;
}

std::vector<SequenceDetections> detect_split(const Model& model,
                                             const std::vector<SequenceSample>& samples) {
  std::vector<SequenceDetections> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({s.id, detect_sequence(model, s)});
  return out;
}

void cmd_gen(const Common& c) {
  const AppConfig cfg = resolve(c);
  generate_dataset(cfg.generator, c.seed, c.out);
  std::cout << "dataset written to " << c.out << "\n";
}

void cmd_train(const Common& c, const std::string& data, const std::string& resume) {
  const AppConfig cfg = resolve(c);
  const int C = cfg.run.C;
  const auto train_set = read_split(data, "train", C);
  const auto val_set = read_split(data, "val", C);
  const TrainResult r = train(train_set, val_set, cfg, c.out, resume);
  if (!r.history.empty()) {
    const auto& last = r.history.back();
    std::printf("epoch %d  loss %.4f  val mAP@0.5 %.2f\n", last.epoch, last.loss,
                last.val_map50);
  }
  std::cout << "final checkpoint: " << r.final_checkpoint << "\n";
}

void cmd_detect(const Common& c, const std::string& ckpt, const std::string& data,
                const std::string& split) {
  resolve(c);  // surfaces config errors even though the checkpoint wins
  const Model model = model_from_checkpoint(load_checkpoint(ckpt));
  const auto samples = read_split(data, split, model.config().C);
  fs::create_directories(c.out);
  write_detections(c.out + "/detections.jsonl", detect_split(model, samples));
  std::cout << "detections written to " << c.out << "/detections.jsonl\n";
}

void cmd_eval(const Common& c, const std::string& data, const std::string& split,
              const std::string& dets_path) {
  const AppConfig cfg = resolve(c);
  const int C = manifest_classes(data);
  const auto samples = read_split(data, split, C);
  const auto dets = align_detections(samples, read_detections(dets_path));
  std::vector<std::vector<EventSpan>> gts;
  gts.reserve(samples.size());
  for (const auto& s : samples) gts.push_back(s.events);
  eval_and_write(gts, dets, C, eval_options(cfg.run), c.out, "detections");
}

void cmd_baseline(const Common& c, const std::string& scheme, const std::string& data,
                  const std::string& split) {
  const AppConfig cfg = resolve(c);
  const int C = manifest_classes(data);
  const auto train_set = read_split(data, "train", C);
  const auto test_set = read_split(data, split, C);
  if (train_set.empty()) throw std::runtime_error("baseline: empty training split");
  const auto F = train_set[0].features.cols();

  FrameHead head(F, cfg.run.d_m, C, cfg.run.seed);
  OptimState st;
  st.opt = cfg.optim;
  st.init(head.params());
  double loss = 0;
  for (int e = 0; e < cfg.train.epochs; ++e) loss = head.train_epoch(train_set, st);
  std::printf("frame head trained, final per-unit loss %.4f\n", loss);

  std::vector<SequenceDetections> dets;
  std::vector<std::vector<EventSpan>> gts;
  std::vector<std::vector<DetectionRecord>> det_lists;
  for (const auto& s : test_set) {
    const Tensor probs = head.frame_probs(s.features);
    std::vector<DetectionRecord> d;
    if (scheme == "frame2event") d = frame2event(probs, cfg.run.N0);
    else if (scheme == "unit2event") d = unit2event_decode(build_score_maps(probs), cfg.run.N0);
    else throw std::invalid_argument("baseline: unknown scheme '" + scheme + "'");
    dets.push_back({s.id, d});
    det_lists.push_back(std::move(d));
    gts.push_back(s.events);
  }
  fs::create_directories(c.out);
  write_detections(c.out + "/detections.jsonl", dets);
  eval_and_write(gts, det_lists, C, eval_options(cfg.run), c.out, scheme);
}

void cmd_sweep(const Common& c, const std::string& data, const std::string& param,
               std::vector<int> values) {
  const AppConfig base = resolve(c);
  if (param != "N0" && param != "d_m" && param != "L")
    throw std::invalid_argument("sweep: param must be one of N0, d_m, L");
  if (values.empty()) {
    if (param == "N0") values = {10, 50, 100, 200};
    else if (param == "d_m") values = {128, 256, 512, 1024};
    else values = {3, 4, 5, 6};
  }
  const int C = manifest_classes(data);
  const auto train_set = read_split(data, "train", C);
  const auto val_set = read_split(data, "val", C);
  const auto test_set = read_split(data, "test", C);
  std::vector<std::vector<EventSpan>> gts;
  for (const auto& s : test_set) gts.push_back(s.events);

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::ostringstream table;
  char line[128];
  std::snprintf(line, sizeof(line), "%8s  %8s  %8s\n", param.c_str(), "mAP@0.5", "AUC");
  table << line;
  for (int v : values) {
    AppConfig cfg = base;
    apply_override(cfg, "run." + param, std::to_string(v));
    const std::string sub = c.out + "/" + param + "-" + std::to_string(v);
    const TrainResult r = train(train_set, val_set, cfg, sub);
    const Model model = model_from_checkpoint(load_checkpoint(r.final_checkpoint));
    std::vector<std::vector<DetectionRecord>> dets;
    for (const auto& s : test_set) dets.push_back(detect_sequence(model, s));
    const EvalReport rep = evaluate_detections(gts, dets, C, eval_options(cfg.run));
    double map50 = std::numeric_limits<double>::quiet_NaN();
    for (size_t a = 0; a < rep.map_alphas.size(); ++a)
      if (rep.map_alphas[a] == 0.5) map50 = rep.map[a];
    nlohmann::ordered_json row;
    row[param] = v;
    row["map50"] = map50;
    row["auc"] = rep.auc;
    rows.push_back(row);
    std::snprintf(line, sizeof(line), "%8d  %8.2f  %8.2f\n", v, map50, rep.auc);
    table << line;
  }
  fs::create_directories(c.out);
  write_text(c.out + "/sweep.json", rows.dump(2) + "\n");
  write_text(c.out + "/sweep.txt", table.str());
  std::cout << table.str();
}

const SequenceSample& find_sequence(const std::vector<SequenceSample>& samples,
                                    const std::string& id) {
  for (const auto& s : samples)
    if (s.id == id) return s;
  throw std::runtime_error("unknown sequence id '" + id + "'");
}

void cmd_plot(const Common& c, const std::string& kind, const std::string& data,
              const std::string& split, const std::string& dets_path, const std::string& ckpt,
              const std::string& id, const std::vector<std::string>& eval_specs) {
  std::string svg;
  if (kind == "timeline") {
    const int C = manifest_classes(data);
    const auto samples = read_split(data, split, C);
    const auto& sample = find_sequence(samples, id);
    std::vector<DetectionRecord> dets;
    if (!dets_path.empty())
      for (const auto& d : read_detections(dets_path))
        if (d.id == id) dets = d.events;
    svg = plot_timeline(sample.events, dets, C, static_cast<double>(sample.T),
                        "events " + id);
  } else if (kind == "attention") {
    const Model model = model_from_checkpoint(load_checkpoint(ckpt));
    const auto samples = read_split(data, split, model.config().C);
    const auto& sample = find_sequence(samples, id);
    std::vector<Tensor> heads;
    const SetPredictions pred = model.predict(sample, &heads);
    if (heads.empty()) throw std::runtime_error("plot: model produced no attention maps");
    Tensor mean = Tensor::zeros({heads[0].rows(), heads[0].cols()});
    for (const auto& h : heads)
      for (size_t i = 0; i < mean.v.size(); ++i) mean.v[i] += h.v[i] / heads.size();
    const auto& cfg = model.config();
    const auto kept = kept_query_indices(pred, cfg.tau_infer, cfg.matching_mode);
    Tensor rows = Tensor::zeros({static_cast<int64_t>(kept.size()), mean.cols()});
    std::vector<std::string> labels;
    for (size_t r = 0; r < kept.size(); ++r) {
      for (int64_t t = 0; t < mean.cols(); ++t) rows.at(r, t) = mean.at(kept[r], t);
      char buf[64];
      std::snprintf(buf, sizeof(buf), "c%lld q%lld", static_cast<long long>(kept[r] / cfg.N0 + 1),
                    static_cast<long long>(kept[r] % cfg.N0));
      labels.emplace_back(buf);
    }
    svg = plot_attention(rows, sample.events, labels, "attention " + id);
  } else if (kind == "ar_curve") {
    std::vector<std::pair<std::string, std::vector<double>>> curves;
    for (const auto& spec : eval_specs) {
      const auto eq = spec.find('=');
      const std::string label = eq == std::string::npos ? spec : spec.substr(0, eq);
      const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
      std::ifstream in(path);
      if (!in) throw std::runtime_error("plot: cannot open " + path);
      std::ostringstream buf;
      buf << in.rdbuf();
      curves.emplace_back(label, report_from_json(buf.str()).ar_at_an);
    }
    svg = plot_ar_curve(curves, "AR vs AN");
  } else {
    throw std::invalid_argument("plot: kind must be timeline, attention or ar_curve");
  }
  fs::create_directories(c.out);
  write_text(c.out + "/" + kind + ".svg", svg);
  std::cout << "wrote " << c.out << "/" << kind << ".svg\n";
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"EventFormer: action-unit event detection as set prediction"};
  app.require_subcommand(1);

  Common gen_c, train_c, detect_c, eval_c, base_c, sweep_c, plot_c;
  std::string train_data, train_resume;
  std::string detect_ckpt, detect_data, detect_split_name = "test";
  std::string eval_data, eval_split = "test", eval_dets;
  std::string base_scheme, base_data, base_split = "test";
  std::string sweep_data, sweep_param;
  std::vector<int> sweep_values;
  std::string plot_kind, plot_data, plot_split = "test", plot_dets, plot_ckpt, plot_id;
  std::vector<std::string> plot_evals;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  add_common(gen, gen_c);

  auto* tr = app.add_subcommand("train", "Train EventFormer");
  add_common(tr, train_c);
  tr->add_option("--data", train_data, "Dataset directory")->required();
  tr->add_option("--resume", train_resume, "Checkpoint to resume from");

  auto* det = app.add_subcommand("detect", "Run inference over a split");
  add_common(det, detect_c);
  det->add_option("--ckpt", detect_ckpt, "Model checkpoint")->required();
  det->add_option("--data", detect_data, "Dataset directory")->required();
  det->add_option("--split", detect_split_name, "Dataset split");

  auto* ev = app.add_subcommand("eval", "Score detections against ground truth");
  add_common(ev, eval_c);
  ev->add_option("--data", eval_data, "Dataset directory")->required();
  ev->add_option("--split", eval_split, "Dataset split");
  ev->add_option("--dets", eval_dets, "Detections file")->required();

  auto* bl = app.add_subcommand("baseline", "Frame2Event / Unit2Event baselines");
  add_common(bl, base_c);
  bl->add_option("--scheme", base_scheme, "frame2event or unit2event")->required();
  bl->add_option("--data", base_data, "Dataset directory")->required();
  bl->add_option("--split", base_split, "Evaluation split");

  auto* sw = app.add_subcommand("sweep", "One-at-a-time hyper-parameter sweep");
  add_common(sw, sweep_c);
  sw->add_option("--data", sweep_data, "Dataset directory")->required();
  sw->add_option("--param", sweep_param, "N0, d_m or L")->required();
  sw->add_option("--values", sweep_values, "Override value list")->delimiter(',');

  auto* pl = app.add_subcommand("plot", "Emit SVG figures");
  add_common(pl, plot_c);
  pl->add_option("--kind", plot_kind, "timeline, attention or ar_curve")->required();
  pl->add_option("--data", plot_data, "Dataset directory");
  pl->add_option("--split", plot_split, "Dataset split");
  pl->add_option("--dets", plot_dets, "Detections file");
  pl->add_option("--ckpt", plot_ckpt, "Model checkpoint");
  pl->add_option("--id", plot_id, "Sequence id");
  pl->add_option("--eval", plot_evals, "label=eval.json (repeatable)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto finish = [&](const Common& c, const std::string& name) {
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_run_artifacts(c.out, name, resolve(c), c.seed, elapsed);
  };

  try {
    if (gen->parsed()) {
      cmd_gen(gen_c);
      finish(gen_c, "gen");
    } else if (tr->parsed()) {
      cmd_train(train_c, train_data, train_resume);
      finish(train_c, "train");
    } else if (det->parsed()) {
      cmd_detect(detect_c, detect_ckpt, detect_data, detect_split_name);
      finish(detect_c, "detect");
    } else if (ev->parsed()) {
      cmd_eval(eval_c, eval_data, eval_split, eval_dets);
      finish(eval_c, "eval");
    } else if (bl->parsed()) {
      cmd_baseline(base_c, base_scheme, base_data, base_split);
      finish(base_c, "baseline");
    } else if (sw->parsed()) {
      cmd_sweep(sweep_c, sweep_data, sweep_param, sweep_values);
      finish(sweep_c, "sweep");
    } else if (pl->parsed()) {
      cmd_plot(plot_c, plot_kind, plot_data, plot_split, plot_dets, plot_ckpt, plot_id,
               plot_evals);
      finish(plot_c, "plot");
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace evf::cli
