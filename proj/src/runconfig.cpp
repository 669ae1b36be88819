#include "fairdiag/runconfig.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "fairdiag/errors.hpp"

namespace fairdiag {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct KvReader {
  const std::map<std::string, std::string>& kv;
  std::set<std::string> known;

  bool has(const std::string& key) {
    known.insert(key);
    return kv.count(key) > 0;
  }
  std::string str(const std::string& key, const std::string& fallback) {
    return has(key) ? kv.at(key) : fallback;
  }
  double num(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    try {
      size_t used = 0;
      const double v = std::stod(kv.at(key), &used);
      if (used != kv.at(key).size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("config key '" + key + "': malformed number '" + kv.at(key) + "'");
    }
  }
  int integer(const std::string& key, int fallback) { return static_cast<int>(num(key, fallback)); }
  uint64_t seed(const std::string& key, uint64_t fallback) {
    return has(key) ? static_cast<uint64_t>(std::stoull(kv.at(key))) : fallback;
  }
  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string& v = kv.at(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config key '" + key + "': expected true/false, got '" + v + "'");
  }

  void finish() const {
    for (const auto& [key, value] : kv) {
      if (!known.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
};

}  // namespace

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) +
                                  ": expected 'key = value'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": empty key");
    }
    kv[key] = value;
  }
  return kv;
}

SynthConfig make_synth_config(const std::map<std::string, std::string>& kv) {
  KvReader r{kv, {}};
  SynthConfig cfg;
  cfg.num_students = r.integer("num_students", cfg.num_students);
  cfg.num_exercises = r.integer("num_exercises", cfg.num_exercises);
  cfg.num_concepts = r.integer("num_concepts", cfg.num_concepts);
  cfg.rho_env = r.num("rho_env", cfg.rho_env);
  cfg.g_env = r.num("g_env", cfg.g_env);
  cfg.delta_direct = r.num("delta_direct", cfg.delta_direct);
  cfg.seed = r.seed("seed", cfg.seed);
  cfg.num_context = r.integer("num_context", cfg.num_context);
  cfg.lower_q = r.num("lower_q", cfg.lower_q);
  cfg.upper_q = r.num("upper_q", cfg.upper_q);
  r.finish();
  return cfg;
}

TrainConfig make_train_config(const std::map<std::string, std::string>& kv) {
  KvReader r{kv, {}};
  TrainConfig cfg;
  cfg.model.backbone = parse_backbone(r.str("backbone", "irt"));
  cfg.model.embed_dim = r.integer("embed_dim", cfg.model.embed_dim);
  cfg.model.sensitive_bins = r.integer("sensitive_bins", cfg.model.sensitive_bins);
  cfg.model.context_k = r.integer("context_k", cfg.model.context_k);
  cfg.model.ncd_hidden = r.integer("ncd_hidden", cfg.model.ncd_hidden);
  cfg.model.sensitive_type = r.str("sensitive_type", cfg.model.sensitive_type);
  cfg.model.w1 = r.num("w1", cfg.model.w1);
  cfg.model.w2 = r.num("w2", cfg.model.w2);
  cfg.model.w3 = r.num("w3", cfg.model.w3);
  cfg.model.w4 = r.num("w4", cfg.model.w4);
  cfg.learning_rate = r.num("learning_rate", cfg.learning_rate);
  cfg.batch_size = r.integer("batch_size", cfg.batch_size);
  cfg.max_epochs = r.integer("max_epochs", cfg.max_epochs);
  cfg.patience = r.integer("patience", cfg.patience);
  cfg.seed = r.seed("seed", cfg.seed);
  cfg.base_mode = r.flag("base_mode", cfg.base_mode);
  cfg.freeze_gates = r.flag("freeze_gates", cfg.freeze_gates);
  cfg.min_records = r.integer("min_records", cfg.min_records);
  cfg.lower_q = r.num("lower_q", cfg.lower_q);
  cfg.upper_q = r.num("upper_q", cfg.upper_q);
  cfg.ratios[0] = r.num("train_ratio", cfg.ratios[0]);
  cfg.ratios[1] = r.num("validation_ratio", cfg.ratios[1]);
  cfg.ratios[2] = r.num("test_ratio", cfg.ratios[2]);
  if (!(cfg.model.sensitive_type == "auto" || cfg.model.sensitive_type == "continuous" ||
        cfg.model.sensitive_type == "ordinal")) {
    throw std::invalid_argument("config key 'sensitive_type': expected auto, continuous or ordinal");
  }
  r.finish();
  return cfg;
}

}  // namespace fairdiag
