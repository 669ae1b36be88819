#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairdiag/checkpoint.hpp"
#include "fairdiag/csv.hpp"
#include "fairdiag/errors.hpp"
#include "fairdiag/report.hpp"
#include "fairdiag/runconfig.hpp"
#include "fairdiag/synthgen.hpp"

namespace fs = std::filesystem;
using namespace fairdiag;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::map<std::string, std::string> load_kv(const std::string& config_path) {
  if (config_path.empty()) return {};
  return read_config_file(config_path);
}

// train/eval share the data-dir layout written by `generate`
LoadedDataset load_data_dir(const std::string& dir) {
  const fs::path d(dir);
  std::optional<fs::path> q;
  if (fs::exists(d / "qmatrix.csv")) q = d / "qmatrix.csv";
  return load_dataset(d / "interactions.csv", d / "attributes.csv", q);
}

int run_generate(const std::string& config_path, const std::string& out_dir,
                 const std::optional<uint64_t>& seed) {
  auto kv = load_kv(config_path);
  if (seed.has_value()) kv["seed"] = std::to_string(*seed);
  const SynthConfig cfg = make_synth_config(kv);
  const SynthResult result = generate(cfg);
  write_synth_csvs(result, out_dir);
  std::cerr << "generated " << result.log.num_students << " students, " << result.log.num_exercises
            << " exercises, " << result.log.records.size() << " records -> " << out_dir << "\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& data_dir, const std::string& out_path,
              const std::optional<uint64_t>& seed, std::string log_path) {
  auto kv = load_kv(config_path);
  if (seed.has_value()) kv["seed"] = std::to_string(*seed);
  const TrainConfig cfg = make_train_config(kv);

  const LoadedDataset ds = load_data_dir(data_dir);
  PreparedData data = prepare_data(ds, cfg);
  std::cerr << "training " << backbone_name(cfg.model.backbone) << (cfg.base_mode ? " (base)" : " (pscrf)")
            << ": " << data.log.num_students << " students, " << data.split.train.size()
            << " train records\n";

  TrainResult result = train(data, cfg);
  for (const EpochLog& e : result.log) {
    std::cerr << "epoch " << e.epoch << " loss " << e.loss_total << " val_auc " << e.val_auc << "\n";
  }

  const fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_checkpoint(out, result.best, cfg);
  if (log_path.empty()) log_path = out_path + ".log.jsonl";
  write_text(log_path, epoch_log_to_jsonl(result.log));
  write_id_map(out.parent_path() / "student_id_map.csv", data.log.student_ids);
  write_id_map(out.parent_path() / "exercise_id_map.csv", data.log.exercise_ids);
  std::cerr << "best epoch " << result.best_epoch << ", checkpoint -> " << out_path << "\n";
  return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& sensitive,
             const std::string& json_path) {
  const TrainConfig cfg = read_checkpoint_config(ckpt_path);
  const LoadedDataset ds = load_data_dir(data_dir);
  if (!sensitive.empty() && sensitive != ds.attrs.sensitive_name) {
    throw DataError("sensitive attribute '" + sensitive + "' not in data (found '" +
                    ds.attrs.sensitive_name + "')");
  }
  PreparedData data = prepare_data(ds, cfg);
  PscrfParameters params = load_checkpoint(ckpt_path, data.attrs);
  const MetricsReport rep =
      compute_metrics(params, data, data.split.test, cfg.base_mode || cfg.freeze_gates);
  const std::string json = metrics_to_json(rep);
  if (json_path.empty()) {
    std::cout << json << "\n";
  } else {
    write_text(json_path, json + "\n");
  }
  std::cerr << metrics_table(rep);
  return 0;
}

int run_causal(const std::string& ckpt_path, const std::string& data_dir, const std::string& out_path,
               const std::string& json_path, bool probability_scale) {
  const TrainConfig cfg = read_checkpoint_config(ckpt_path);
  const LoadedDataset ds = load_data_dir(data_dir);
  PreparedData data = prepare_data(ds, cfg);
  PscrfParameters params = load_checkpoint(ckpt_path, data.attrs);

  std::vector<int> students(params.num_students);
  for (int i = 0; i < params.num_students; ++i) students[i] = i;
  const QMatrix* q = data.q.empty() ? nullptr : &data.q;
  const EffectReport rep = compute_effects(params, students, &data.groups, q, probability_scale);
  const std::string csv = effects_to_csv(rep, data.log.student_ids, data.groups.group);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    write_text(out_path, csv);
  }
  if (!json_path.empty()) write_text(json_path, effects_summary_json(rep) + "\n");
  std::cerr << "group means: " << effects_summary_json(rep) << "\n";
  return 0;
}

int run_correlate(const std::string& data_dir, int k) {
  const LoadedDataset ds = load_data_dir(data_dir);
  const auto selected = select_context_attributes(ds.attrs, k);
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& sel : selected) {
    nlohmann::ordered_json item;
    item["attribute"] = ds.attrs.context_names.at(sel.attribute);
    item["index"] = sel.attribute;
    item["correlation"] = sel.correlation;
    j.push_back(item);
    std::cerr << ds.attrs.context_names.at(sel.attribute) << " rho=" << sel.correlation << "\n";
  }
  std::cout << j.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairness-aware cognitive diagnosis pipeline"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, ckpt_path, json_path, log_path, sensitive;
  std::optional<uint64_t> seed;
  bool probability_scale = false;
  int k = 5;

  CLI::App* gen = app.add_subcommand("generate", "write a synthetic dataset");
  gen->add_option("--config", config_path, "generator config file");
  gen->add_option("--out", out_path, "output directory")->required();
  gen->add_option("--seed", seed, "override the config seed");

  CLI::App* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", config_path, "training config file");
  tr->add_option("--data-dir", data_dir, "dataset directory")->required();
  tr->add_option("--out", out_path, "checkpoint output path")->required();
  tr->add_option("--seed", seed, "override the config seed");
  tr->add_option("--log", log_path, "training log path (default: <out>.log.jsonl)");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  ev->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
  ev->add_option("--data-dir", data_dir, "dataset directory")->required();
  ev->add_option("--sensitive", sensitive, "expected sensitive attribute name");
  ev->add_option("--json", json_path, "write the JSON report here instead of stdout");

  CLI::App* ca = app.add_subcommand("causal-report", "per-student TE/NDE/TIE effects");
  ca->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
  ca->add_option("--data-dir", data_dir, "dataset directory")->required();
  ca->add_option("--out", out_path, "CSV output path (default: stdout)");
  ca->add_option("--json", json_path, "write group-aggregated means as JSON");
  ca->add_flag("--probability-scale", probability_scale, "also emit response-probability contrasts");

  CLI::App* co = app.add_subcommand("correlate", "rank context attributes by |pearson| vs sensitive");
  co->add_option("--data-dir", data_dir, "dataset directory")->required();
  co->add_option("--k", k, "number of attributes to report");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return run_generate(config_path, out_path, seed);
    if (tr->parsed()) return run_train(config_path, data_dir, out_path, seed, log_path);
    if (ev->parsed()) return run_eval(ckpt_path, data_dir, sensitive, json_path);
    if (ca->parsed()) return run_causal(ckpt_path, data_dir, out_path, json_path, probability_scale);
    if (co->parsed()) return run_correlate(data_dir, k);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
