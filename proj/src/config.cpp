#include "cppd/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cppd {

namespace {

// All addressable fields with their defaults. Training constants follow the
// recipe in the README: AdamW, cosine schedule with linear warmup, base LR
// 5e-4 scaled by batch/1024 (times train.lr_scale for small-data runs).
const std::vector<std::pair<std::string, std::string>> kDefaults = {
    {"model.d", "64"},
    {"model.l", "25"},
    {"model.depth", "2"},         // decoder blocks / CC-CO module depth
    {"model.heads", "4"},
    {"model.mlp_ratio", "4"},
    {"model.enc_depth", "2"},
    {"data.h", "32"},
    {"data.w", "100"},
    {"data.len_min", "1"},
    {"data.len_max", "8"},
    {"data.glyph_h", "16"},
    {"data.glyph_w", "8"},
    {"data.spacing", "2"},
    {"train.variant", "cppd"},
    {"train.epochs", "30"},
    {"train.warmup_epochs", "6"},
    {"train.batch", "64"},
    {"train.weight_decay", "0.05"},
    {"train.lr_scale", "1"},
    {"train.clip_norm", "1"},
    {"train.beta1", "0.9"},
    {"train.beta2", "0.999"},
    {"train.adam_eps", "1e-8"},
    {"train.lambda_cc", "1"},
    {"train.lambda_co", "1"},
    {"train.lambda_rec", "1"},
    {"train.seed", "0"},
    {"train.augment", "false"},
    {"train.aug_prob", "0.3"},
    {"train.aug_rot_deg", "5"},
    {"train.aug_noise_sigma", "0.05"},
    {"train.eval_every", "1"},
    {"train.log_every", "1"},
    {"bench.samples", "300"},
    {"bench.reps", "1"},
    {"bench.warmup", "20"},
};

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config::Config() : values_(kDefaults) {}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: expected key = value at " + path + ":" +
                               std::to_string(lineno));
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void Config::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : values_)
    if (k == key) {
      v = value;
      return;
    }
  throw std::invalid_argument("config: unknown key '" + key + "'");
}

void Config::set_kv(const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("config: override must be key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

bool Config::has(const std::string& key) const {
  for (const auto& [k, v] : values_)
    if (k == key) return true;
  return false;
}

const std::string& Config::gets(const std::string& key) const {
  for (const auto& [k, v] : values_)
    if (k == key) return v;
  throw std::invalid_argument("config: unknown key '" + key + "'");
}

int Config::geti(const std::string& key) const {
  const std::string& v = gets(key);
  size_t pos = 0;
  int out = std::stoi(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("config: '" + key + "' is not an integer");
  return out;
}

double Config::getd(const std::string& key) const {
  const std::string& v = gets(key);
  size_t pos = 0;
  double out = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("config: '" + key + "' is not a number");
  return out;
}

bool Config::getb(const std::string& key) const {
  const std::string& v = gets(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: '" + key + "' is not a boolean");
}

std::string Config::dump() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

}  // namespace cppd
