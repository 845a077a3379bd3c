// Command-line front end: generate, train, eval, predict, sweep, plot.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "laformer/errors.hpp"
#include "laformer/export.hpp"
#include "laformer/harness.hpp"
#include "laformer/metrics.hpp"
#include "laformer/scenario_gen.hpp"
#include "laformer/scene_io.hpp"
#include "laformer/sweep.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace laformer;

namespace {

fs::path output_root() {
  const char* env = std::getenv("LAFORMER_OUT");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("laformer_out");
}

// Relative output paths land under the output root; absolute ones are kept.
fs::path under_root(const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : output_root() / path;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kConfig, "cannot read config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, "config " + path + " is not valid JSON: " + e.what());
  }
}

// Applies "key=value" overrides; values are parsed as JSON when possible, otherwise kept as strings.
void apply_overrides(json& j, const std::vector<std::string>& sets) {
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorKind::kConfig, "--set expects key=value, got '" + s + "'");
    const std::string key = s.substr(0, eq);
    const std::string raw = s.substr(eq + 1);
    try {
      j[key] = json::parse(raw);
    } catch (const json::exception&) {
      j[key] = raw;
    }
  }
}

json load_config(const std::string& path, const std::vector<std::string>& sets) {
  json j = path.empty() ? json::object() : read_json_file(path);
  apply_overrides(j, sets);
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

const std::vector<int>& split_indices(const Dataset& d, const std::string& split) {
  if (split == "train") return d.train;
  if (split == "val") return d.val;
  throw Error(ErrorKind::kConfig, "split must be train or val");
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error(ErrorKind::kConfig, "bad list value '" + item + "'");
    }
  }
  if (out.empty()) throw Error(ErrorKind::kConfig, "empty value list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lane-aware multimodal trajectory prediction on synthetic driving scenes"};
  app.require_subcommand(1);

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Generate a synthetic scene dataset");
  std::string gen_config, gen_dir = "data";
  std::vector<std::string> gen_sets;
  gen_cmd->add_option("--config", gen_config, "JSON generator config");
  gen_cmd->add_option("--set", gen_sets, "Override a config key (key=value)");
  gen_cmd->add_option("--out-dir", gen_dir, "Dataset directory (relative to the output root)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one stage of a model");
  std::string train_config, train_data = "data", train_init, train_ckpt, train_variant;
  int train_stage = 0;
  std::vector<std::string> train_sets;
  train_cmd->add_option("--config", train_config, "JSON training config");
  train_cmd->add_option("--set", train_sets, "Override a config key (key=value)");
  train_cmd->add_option("--stage", train_stage, "Training stage")->check(CLI::IsMember({1, 2}));
  train_cmd->add_option("--variant", train_variant, "baseline, baseline_s2, spatial, temporal or full");
  train_cmd->add_option("--data", train_data, "Dataset directory");
  train_cmd->add_option("--init", train_init, "Stage-1 checkpoint to resume (stage 2)");
  train_cmd->add_option("--checkpoint", train_ckpt, "Output checkpoint path")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_data = "data", eval_split = "val", eval_out;
  int eval_K = 6;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset directory");
  eval_cmd->add_option("--split", eval_split, "train or val");
  eval_cmd->add_option("--k", eval_K, "Number of modes K for minADE_K / minFDE_K / MR_K");
  eval_cmd->add_option("--output", eval_out, "Also write the metrics JSON here");

  // predict
  auto* pred_cmd = app.add_subcommand("predict", "Write per-scene prediction records");
  std::string pred_ckpt, pred_data = "data", pred_split = "val", pred_scenes, pred_out = "predictions.jsonl";
  int pred_K = 6, pred_limit = -1;
  pred_cmd->add_option("--checkpoint", pred_ckpt, "Checkpoint path")->required();
  pred_cmd->add_option("--data", pred_data, "Dataset directory");
  pred_cmd->add_option("--split", pred_split, "train or val");
  pred_cmd->add_option("--scenes", pred_scenes, "Scene file instead of a dataset split");
  pred_cmd->add_option("--k", pred_K, "Number of modes per record");
  pred_cmd->add_option("--limit", pred_limit, "Only the first N scenes");
  pred_cmd->add_option("--output", pred_out, "Output JSON lines file");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Sensitivity sweep over one hyperparameter");
  std::string sweep_axis, sweep_values, sweep_seeds = "0,1,2", sweep_config, sweep_data = "data",
                                        sweep_out = "sweep";
  std::vector<std::string> sweep_sets;
  int sweep_K = 6;
  bool sweep_stage2 = false;
  sweep_cmd->add_option("--axis", sweep_axis, "k, lambda1, lambda2 or lambda3")->required();
  sweep_cmd->add_option("--values", sweep_values, "Comma-separated values")->required();
  sweep_cmd->add_option("--seeds", sweep_seeds, "Comma-separated seeds");
  sweep_cmd->add_option("--config", sweep_config, "Base training config");
  sweep_cmd->add_option("--set", sweep_sets, "Override a config key (key=value)");
  sweep_cmd->add_option("--data", sweep_data, "Dataset directory");
  sweep_cmd->add_option("--k", sweep_K, "Number of modes K for the metrics");
  sweep_cmd->add_flag("--stage2", sweep_stage2, "Also train stage 2 for every value");
  sweep_cmd->add_option("--output", sweep_out, "Output prefix (.md and .json are written)");

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "Render a scene and its prediction record as SVG");
  std::string plot_data = "data", plot_scenes, plot_preds, plot_out = "scene.svg";
  int plot_index = -1;
  plot_cmd->add_option("--data", plot_data, "Dataset directory");
  plot_cmd->add_option("--scenes", plot_scenes, "Scene file instead of a dataset");
  plot_cmd->add_option("--predictions", plot_preds, "Prediction records (JSON lines)")->required();
  plot_cmd->add_option("--scene-index", plot_index, "Scene to plot (default: first record)");
  plot_cmd->add_option("--output", plot_out, "SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) {
      const gen::GenConfig config = gen::GenConfig::from_json(load_config(gen_config, gen_sets));
      const fs::path dir = under_root(gen_dir);
      const auto summary = gen::generate_dataset(config, dir);
      std::cout << json{{"dir", dir.string()}, {"n_train", summary.n_train}, {"n_val", summary.n_val},
                        {"maneuver_counts", summary.maneuver_counts}}
                       .dump(2)
                << '\n';
    } else if (*train_cmd) {
      Checkpoint init;
      if (!train_init.empty()) init = load_checkpoint(under_root(train_init));
      // A resumed run starts from the stage-1 settings; the config file and --set refine them.
      json cj = init.model ? init.config.to_json() : json::object();
      cj.update(load_config(train_config, train_sets));
      if (train_stage != 0) cj["stage"] = train_stage;
      if (!train_variant.empty()) cj["variant"] = train_variant;
      const TrainConfig config = TrainConfig::from_json(cj);
      const Dataset data = load_dataset(under_root(train_data));
      if (config.stage == 2 && !init.model)
        throw Error(ErrorKind::kConfig, "stage 2 needs --init with a stage-1 checkpoint");
      const PreprocessOptions pre = config.preprocess_options();
      const auto train = preprocess_all(data.scenes, data.train, pre);
      const auto val = preprocess_all(data.scenes, data.val, pre);
      const fs::path ckpt_path = under_root(train_ckpt);
      std::string log;
      Checkpoint ckpt = run_training(config, train, init.model ? &init : nullptr, [&](const EpochLog& e) {
        const std::string line = e.to_json().dump();
        std::cerr << line << '\n';
        log += line + '\n';
      });
      save_checkpoint(ckpt, ckpt_path);
      const MetricsReport m = evaluate(ckpt, val, std::min(6, config.modes));
      fs::path base = ckpt_path;
      write_text(base.replace_extension(".log.jsonl"), log);
      base = ckpt_path;
      write_text(base.replace_extension(".metrics.json"), m.to_json().dump(2) + '\n');
      std::cout << json{{"checkpoint", ckpt_path.string()}, {"val", m.to_json()}}.dump(2) << '\n';
    } else if (*eval_cmd) {
      const Checkpoint ckpt = load_checkpoint(under_root(eval_ckpt));
      const Dataset data = load_dataset(under_root(eval_data));
      const auto scenes = preprocess_all(data.scenes, split_indices(data, eval_split), ckpt.config.preprocess_options());
      const MetricsReport m = evaluate(ckpt, scenes, eval_K);
      std::cout << m.to_json().dump(2) << '\n';
      if (!eval_out.empty()) write_text(under_root(eval_out), m.to_json().dump(2) + '\n');
    } else if (*pred_cmd) {
      const Checkpoint ckpt = load_checkpoint(under_root(pred_ckpt));
      std::vector<Scene> raw;
      std::vector<int> idx;
      if (!pred_scenes.empty()) {
        raw = read_scenes(pred_scenes);
        for (int i = 0; i < static_cast<int>(raw.size()); ++i) idx.push_back(i);
      } else {
        Dataset data = load_dataset(under_root(pred_data));
        idx = split_indices(data, pred_split);
        raw = std::move(data.scenes);
      }
      if (pred_limit >= 0 && static_cast<int>(idx.size()) > pred_limit) idx.resize(static_cast<std::size_t>(pred_limit));
      const auto scenes = preprocess_all(raw, idx, ckpt.config.preprocess_options());
      std::string out;
      for (const auto& s : scenes) out += prediction_record(ckpt, s, pred_K).dump() + '\n';
      write_text(under_root(pred_out), out);
      std::cout << json{{"records", scenes.size()}, {"output", under_root(pred_out).string()}}.dump() << '\n';
    } else if (*sweep_cmd) {
      const SweepAxis axis = sweep_axis_from_string(sweep_axis);
      const TrainConfig base = TrainConfig::from_json(load_config(sweep_config, sweep_sets));
      const Dataset data = load_dataset(under_root(sweep_data));
      const auto train = preprocess_all(data.scenes, data.train, base.preprocess_options());
      const auto val = preprocess_all(data.scenes, data.val, base.preprocess_options());
      SweepOptions opts;
      opts.seeds.clear();
      for (double s : parse_list(sweep_seeds)) opts.seeds.push_back(static_cast<std::uint64_t>(s));
      opts.K = sweep_K;
      opts.stage2 = sweep_stage2;
      opts.progress = [](const std::string& msg) { std::cerr << "training " << msg << '\n'; };
      const auto rows = run_sweep(axis, parse_list(sweep_values), base, train, val, opts);
      const std::string table = format_sweep_table(axis, rows, sweep_K);
      json rows_json = json::array();
      for (const auto& r : rows) rows_json.push_back(r.to_json());
      write_text(under_root(sweep_out + ".md"), table);
      write_text(under_root(sweep_out + ".json"),
                 json{{"axis", to_string(axis)}, {"K", sweep_K}, {"base_config", base.to_json()}, {"rows", rows_json}}
                         .dump(2) +
                     '\n');
      std::cout << table;
    } else if (*plot_cmd) {
      std::vector<Scene> raw = plot_scenes.empty() ? load_dataset(under_root(plot_data)).scenes : read_scenes(plot_scenes);
      std::ifstream in(under_root(plot_preds));
      if (!in) throw Error(ErrorKind::kIo, "cannot read " + under_root(plot_preds).string());
      json record;
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        json r = json::parse(line);
        if (plot_index < 0 || r.value("scene_index", -1) == plot_index) {
          record = std::move(r);
          break;
        }
      }
      if (record.is_null()) throw Error(ErrorKind::kData, "no prediction record for the requested scene");
      const int index = record.value("scene_index", -1);
      if (index < 0 || index >= static_cast<int>(raw.size()))
        throw Error(ErrorKind::kData, "record scene_index " + std::to_string(index) + " is not in the scene file");
      plot_scene(raw[static_cast<std::size_t>(index)], record, under_root(plot_out));
      std::cout << under_root(plot_out).string() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "error (data): " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error (io): " << e.what() << '\n';
    return 3;
  }
  return 0;
}
