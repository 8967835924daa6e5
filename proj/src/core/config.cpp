#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "csv.hpp"

namespace lab {

RunConfig::RunConfig(std::string cmd) : command(std::move(cmd)) {}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (...) {
    throw ConfigError("field '" + key + "': expected an integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    std::uint64_t out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (...) {
    throw ConfigError("field '" + key + "': expected an unsigned integer, got '" + v + "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    if (!std::isfinite(out)) throw std::invalid_argument("nonfinite");
    return out;
  } catch (...) {
    throw ConfigError("field '" + key + "': expected a number, got '" + v + "'");
  }
}

std::vector<double> parse_real_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& part : split(v, ',')) {
    std::string p = trim(part);
    if (p.empty()) continue;
    out.push_back(parse_real(key, p));
  }
  if (out.empty()) throw ConfigError("field '" + key + "': expected a comma-separated list");
  return out;
}

void expect_one_of(const std::string& key, const std::string& v,
                   std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (v == a) return;
  std::string opts;
  for (const char* a : allowed) {
    if (!opts.empty()) opts += "|";
    opts += a;
  }
  throw ConfigError("field '" + key + "': '" + v + "' is not one of " + opts);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "command") command = value;  // echoed configs reload cleanly
  else if (key == "dataset") dataset = value;
  else if (key == "out") out = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "synthetic_dataset") synthetic_dataset = value;
  else if (key == "predictions") predictions = value;
  else if (key == "seed") seed = parse_u64(key, value);
  else if (key == "epochs") epochs = parse_int(key, value);
  else if (key == "batch") batch = parse_int(key, value);
  else if (key == "side") side = parse_int(key, value);
  else if (key == "n_per_class") n_per_class = parse_int(key, value);
  else if (key == "resamples") resamples = parse_int(key, value);
  else if (key == "lr") lr = parse_real(key, value);
  else if (key == "lambda") lambda = parse_real(key, value);
  else if (key == "mu") mu = parse_real(key, value);
  else if (key == "gamma") gamma = parse_real(key, value);
  else if (key == "tau") tau = parse_real(key, value);
  else if (key == "alpha_fuse") alpha_fuse = parse_real(key, value);
  else if (key == "alpha_ema") alpha_ema = parse_real(key, value);
  else if (key == "distill_temp") distill_temp = parse_real(key, value);
  else if (key == "threshold") threshold = parse_real(key, value);
  else if (key == "se") se = parse_real(key, value);
  else if (key == "sp") sp = parse_real(key, value);
  else if (key == "prevalences") prevalences = parse_real_list(key, value);
  else if (key == "k_rule") k_rule = value;
  else if (key == "lambda_form") lambda_form = value;
  else if (key == "attention") attention = value;
  else if (key == "gen_adv") gen_adv = value;
  else if (key == "alg1_weighting") alg1_weighting = parse_int(key, value);
  else if (key == "export_translated") export_translated = parse_int(key, value);
  else if (key == "patch") patch = parse_int(key, value);
  else if (key == "heads") heads = parse_int(key, value);
  else if (key == "d_teacher") d_teacher = parse_int(key, value);
  else if (key == "d_student") d_student = parse_int(key, value);
  else if (key == "stem_teacher") stem_teacher = parse_int(key, value);
  else if (key == "stem_student") stem_student = parse_int(key, value);
  else if (key == "base_channels") base_channels = parse_int(key, value);
  else if (key == "trunk_blocks") trunk_blocks = parse_int(key, value);
  else if (key == "private_blocks") private_blocks = parse_int(key, value);
  else if (key == "disc_base") disc_base = parse_int(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::load_file(const std::string& path) {
  std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

void RunConfig::validate() const {
  expect_one_of("command", command, {"gen-data", "train-gan", "train-lsnet", "eval", "screen"});
  auto require_01 = [](const char* key, double v) {
    if (v < 0 || v > 1)
      throw ConfigError(std::string("field '") + key + "' must lie in [0,1], got " +
                        fmt_real(v));
  };
  if (out.empty()) throw ConfigError("field 'out': an output directory is required");
  if (epochs < 0) throw ConfigError("field 'epochs' must be non-negative");
  if (batch < 1) throw ConfigError("field 'batch' must be at least 1");
  if (lr < 0) throw ConfigError("field 'lr' must be non-negative");
  if (lambda < 0 || mu < 0) throw ConfigError("fields 'lambda'/'mu' must be non-negative");
  if (gamma <= 0) throw ConfigError("field 'gamma' must be positive");
  if (tau <= 0) throw ConfigError("field 'tau' must be positive");
  require_01("alpha_fuse", alpha_fuse);
  if (alpha_ema < 0 || alpha_ema >= 1) throw ConfigError("field 'alpha_ema' must lie in [0,1)");
  if (distill_temp <= 0) throw ConfigError("field 'distill_temp' must be positive");
  require_01("threshold", threshold);
  if (resamples < 0) throw ConfigError("field 'resamples' must be non-negative");
  expect_one_of("k_rule", k_rule, {"n", "n10", "n25", "n50"});
  expect_one_of("lambda_form", lambda_form, {"linear", "cosine"});
  expect_one_of("attention", attention, {"sparse", "dense"});
  expect_one_of("gen_adv", gen_adv, {"nonsat", "literal"});
  if (patch < 1) throw ConfigError("field 'patch' must be at least 1");
  if (heads < 1) throw ConfigError("field 'heads' must be at least 1");

  if (command == "gen-data") {
    if (n_per_class < 10) throw ConfigError("field 'n_per_class' must be at least 10");
    if (side < 16) throw ConfigError("field 'side' must be at least 16");
    if (side % patch != 0)
      throw ConfigError("field 'side': " + std::to_string(side) +
                        " is not a multiple of the patch size " + std::to_string(patch));
  }
  if (command == "train-gan" || command == "train-lsnet") {
    if (dataset.empty()) throw ConfigError("field 'dataset' is required for training");
  }
  if (command == "train-gan") {
    if (side % 4 != 0) throw ConfigError("field 'side' must be a multiple of 4");
  }
  if (command == "train-lsnet") {
    if ((side / 2) % patch != 0)
      throw ConfigError("field 'side': side/2 must be divisible by the patch size");
    if (d_student >= d_teacher)
      throw ConfigError("field 'd_student' must be smaller than 'd_teacher'");
    if (d_teacher % heads != 0 || d_student % heads != 0)
      throw ConfigError("hidden dims must be divisible by 'heads'");
  }
  if (command == "eval") {
    if (predictions.empty()) {
      if (checkpoint.empty())
        throw ConfigError("field 'checkpoint' (or 'predictions') is required for eval");
      if (dataset.empty()) throw ConfigError("field 'dataset' is required for eval");
    }
  }
  if (command == "screen") {
    require_01("se", se);
    require_01("sp", sp);
    for (double p : prevalences) require_01("prevalences", p);
  }
}

std::string RunConfig::echo() const {
  std::map<std::string, std::string> kv;
  kv["command"] = command;
  kv["dataset"] = dataset;
  kv["out"] = out;
  kv["checkpoint"] = checkpoint;
  kv["synthetic_dataset"] = synthetic_dataset;
  kv["predictions"] = predictions;
  kv["seed"] = std::to_string(seed);
  kv["epochs"] = std::to_string(epochs);
  kv["batch"] = std::to_string(batch);
  kv["side"] = std::to_string(side);
  kv["n_per_class"] = std::to_string(n_per_class);
  kv["resamples"] = std::to_string(resamples);
  kv["lr"] = fmt_real(lr);
  kv["lambda"] = fmt_real(lambda);
  kv["mu"] = fmt_real(mu);
  kv["gamma"] = fmt_real(gamma);
  kv["tau"] = fmt_real(tau);
  kv["alpha_fuse"] = fmt_real(alpha_fuse);
  kv["alpha_ema"] = fmt_real(alpha_ema);
  kv["distill_temp"] = fmt_real(distill_temp);
  kv["threshold"] = fmt_real(threshold);
  kv["se"] = fmt_real(se);
  kv["sp"] = fmt_real(sp);
  std::string plist;
  for (double p : prevalences) {
    if (!plist.empty()) plist += ",";
    plist += fmt_real(p);
  }
  kv["prevalences"] = plist;
  kv["k_rule"] = k_rule;
  kv["lambda_form"] = lambda_form;
  kv["attention"] = attention;
  kv["gen_adv"] = gen_adv;
  kv["alg1_weighting"] = std::to_string(alg1_weighting);
  kv["export_translated"] = std::to_string(export_translated);
  kv["patch"] = std::to_string(patch);
  kv["heads"] = std::to_string(heads);
  kv["d_teacher"] = std::to_string(d_teacher);
  kv["d_student"] = std::to_string(d_student);
  kv["stem_teacher"] = std::to_string(stem_teacher);
  kv["stem_student"] = std::to_string(stem_student);
  kv["base_channels"] = std::to_string(base_channels);
  kv["trunk_blocks"] = std::to_string(trunk_blocks);
  kv["private_blocks"] = std::to_string(private_blocks);
  kv["disc_base"] = std::to_string(disc_base);
  std::string out_text;
  for (const auto& [k, v] : kv) out_text += k + "=" + v + "\n";
  return out_text;
}

}  // namespace lab
