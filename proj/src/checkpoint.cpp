#include "fairdiag/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fairdiag/csv.hpp"
#include "fairdiag/errors.hpp"

namespace fairdiag {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kMagic = "fairdiag-ckpt 1";

ordered_json config_to_json(const TrainConfig& cfg) {
  ordered_json j;
  j["backbone"] = backbone_name(cfg.model.backbone);
  j["embed_dim"] = cfg.model.embed_dim;
  j["sensitive_bins"] = cfg.model.sensitive_bins;
  j["context_k"] = cfg.model.context_k;
  j["ncd_hidden"] = cfg.model.ncd_hidden;
  j["sensitive_type"] = cfg.model.sensitive_type;
  j["w1"] = cfg.model.w1;
  j["w2"] = cfg.model.w2;
  j["w3"] = cfg.model.w3;
  j["w4"] = cfg.model.w4;
  j["learning_rate"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["max_epochs"] = cfg.max_epochs;
  j["patience"] = cfg.patience;
  j["seed"] = cfg.seed;
  j["base_mode"] = cfg.base_mode;
  j["freeze_gates"] = cfg.freeze_gates;
  j["min_records"] = cfg.min_records;
  j["lower_q"] = cfg.lower_q;
  j["upper_q"] = cfg.upper_q;
  j["ratios"] = {cfg.ratios[0], cfg.ratios[1], cfg.ratios[2]};
  return j;
}

TrainConfig config_from_json(const ordered_json& j) {
  TrainConfig cfg;
  cfg.model.backbone = parse_backbone(j.at("backbone").get<std::string>());
  cfg.model.embed_dim = j.at("embed_dim").get<int>();
  cfg.model.sensitive_bins = j.at("sensitive_bins").get<int>();
  cfg.model.context_k = j.at("context_k").get<int>();
  cfg.model.ncd_hidden = j.at("ncd_hidden").get<int>();
  cfg.model.sensitive_type = j.at("sensitive_type").get<std::string>();
  cfg.model.w1 = j.at("w1").get<double>();
  cfg.model.w2 = j.at("w2").get<double>();
  cfg.model.w3 = j.at("w3").get<double>();
  cfg.model.w4 = j.at("w4").get<double>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.max_epochs = j.at("max_epochs").get<int>();
  cfg.patience = j.at("patience").get<int>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.base_mode = j.at("base_mode").get<bool>();
  cfg.freeze_gates = j.value("freeze_gates", false);
  cfg.min_records = j.at("min_records").get<int>();
  cfg.lower_q = j.at("lower_q").get<double>();
  cfg.upper_q = j.at("upper_q").get<double>();
  const auto& r = j.at("ratios");
  cfg.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
  return cfg;
}

ordered_json read_meta(const std::filesystem::path& path, std::ifstream* keep_open = nullptr) {
  std::ifstream local;
  std::ifstream& in = keep_open != nullptr ? *keep_open : local;
  in.open(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kMagic) throw DataError(path.string() + ": not a fairdiag checkpoint");
  std::getline(in, line);
  if (line.rfind("meta ", 0) != 0) throw DataError(path.string() + ": missing meta line");
  return ordered_json::parse(line.substr(5));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, PscrfParameters& params, const TrainConfig& cfg) {
  ordered_json meta;
  meta["config"] = config_to_json(cfg);
  meta["num_students"] = params.num_students;
  meta["num_exercises"] = params.num_exercises;
  meta["dim"] = params.dim;
  meta["sensitive"] = {{"discrete", params.sens.discrete},
                       {"levels", params.sens.levels},
                       {"edges", params.sens.edges},
                       {"mean_value", params.sens.mean_value}};
  ordered_json ctx = ordered_json::array();
  for (const ContextHead& h : params.ctx) {
    ctx.push_back({{"attribute", h.attribute}, {"correlation", h.correlation}, {"levels", h.levels}});
  }
  meta["context"] = ctx;

  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << kMagic << "\n";
  out << "meta " << meta.dump() << "\n";
  const std::vector<Parameter*> plist = params.parameters();
  out << "params " << plist.size() << "\n";
  for (Parameter* p : plist) {
    out << "param " << p->id << " " << p->value.rows() << " " << p->value.cols() << "\n";
    for (int i = 0; i < p->value.rows(); ++i) {
      for (int j = 0; j < p->value.cols(); ++j) {
        out << (j ? " " : "") << format_double(p->value(i, j));
      }
      out << "\n";
    }
  }
}

TrainConfig read_checkpoint_config(const std::filesystem::path& path) {
  return config_from_json(read_meta(path).at("config"));
}

PscrfParameters load_checkpoint(const std::filesystem::path& path, const AttributeTable& attrs) {
  std::ifstream in;
  const ordered_json meta = read_meta(path, &in);
  const TrainConfig cfg = config_from_json(meta.at("config"));

  SensitiveEncoding sens;
  sens.discrete = meta.at("sensitive").at("discrete").get<bool>();
  sens.levels = meta.at("sensitive").at("levels").get<std::vector<double>>();
  sens.edges = meta.at("sensitive").at("edges").get<std::vector<double>>();
  sens.mean_value = meta.at("sensitive").at("mean_value").get<double>();
  sens = rebind_sensitive(sens, attrs.sensitive);

  std::vector<ContextHead> ctx;
  for (const auto& h : meta.at("context")) {
    ContextHead head;
    head.attribute = h.at("attribute").get<int>();
    head.correlation = h.at("correlation").get<double>();
    head.levels = h.at("levels").get<std::vector<double>>();
    ctx.push_back(std::move(head));
  }
  ctx = rebind_context(ctx, attrs);

  const int num_students = meta.at("num_students").get<int>();
  const int num_exercises = meta.at("num_exercises").get<int>();
  if (attrs.num_students() != num_students) {
    throw DataError(path.string() + ": checkpoint was trained on " + std::to_string(num_students) +
                    " students, data has " + std::to_string(attrs.num_students()));
  }
  PscrfParameters params = build_pscrf_shell(cfg.model, num_students, num_exercises,
                                             meta.at("dim").get<int>(), std::move(sens), std::move(ctx),
                                             cfg.seed);

  std::string line;
  std::getline(in, line);
  if (line.rfind("params ", 0) != 0) throw DataError(path.string() + ": missing params line");
  const size_t count = std::stoul(line.substr(7));
  std::vector<Parameter*> plist = params.parameters();
  if (count != plist.size()) {
    throw DataError(path.string() + ": expected " + std::to_string(plist.size()) + " parameters, found " +
                    std::to_string(count));
  }
  for (Parameter* p : plist) {
    std::getline(in, line);
    std::istringstream head(line);
    std::string tag, id;
    int rows = 0, cols = 0;
    head >> tag >> id >> rows >> cols;
    if (tag != "param" || id != p->id || rows != p->value.rows() || cols != p->value.cols()) {
      throw DataError(path.string() + ": parameter mismatch at '" + line + "' (expected " + p->id + " " +
                      p->value.shape_str() + ")");
    }
    for (int i = 0; i < rows; ++i) {
      std::getline(in, line);
      std::istringstream vs(line);
      for (int j = 0; j < cols; ++j) {
        if (!(vs >> p->value(i, j))) {
          throw DataError(path.string() + ": truncated values for parameter " + p->id);
        }
      }
    }
    p->value.require_finite(p->id.c_str());
    p->grad = Tensor(rows, cols);
  }
  return params;
}

}  // namespace fairdiag
