#include "rectnet/config.hpp"

#include <algorithm>
#include <charconv>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <sstream>

#include "rectnet/errors.hpp"

namespace rectnet {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  if (trim(s).empty()) return parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key), fmt::format("key '{}': '{}' is not a number", key, v));
  }
  return out;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key), fmt::format("key '{}': '{}' is not a non-negative integer", key, v));
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(std::string(key), fmt::format("key '{}': '{}' is not true/false", key, v));
}

std::vector<std::filesystem::path> to_paths(std::string_view v) {
  std::vector<std::filesystem::path> out;
  for (auto p : split(v, ',')) {
    if (!p.empty()) out.emplace_back(p);
  }
  return out;
}

std::optional<std::vector<LrStep>> to_schedule(std::string_view key, std::string_view v) {
  if (v == "default") return std::nullopt;
  std::vector<LrStep> steps;
  if (v == "none") return steps;
  for (auto item : split(v, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) {
      throw ConfigError(std::string(key), fmt::format("key '{}': expected epoch:multiplier, got '{}'", key, item));
    }
    steps.push_back(LrStep{to_uint(key, trim(item.substr(0, colon))), to_double(key, trim(item.substr(colon + 1)))});
  }
  return steps;
}

std::string join_paths(const std::vector<std::filesystem::path>& paths) {
  std::string out;
  for (const auto& p : paths) {
    if (!out.empty()) out += ',';
    out += p.string();
  }
  return out;
}

// Shortest text that parses back to the same double.
std::string num(double v) { return fmt::format("{}", v); }

}  // namespace

const std::vector<std::string_view>& config_keys() {
  static const std::vector<std::string_view> keys{
      "model",         "width_factor",    "activation",   "leaky.a",       "rrelu.l",
      "rrelu.u",       "prelu.init",      "dataset",      "train_paths",   "eval_paths",
      "train_limit",   "eval_limit",      "synth.classes", "synth.train_per_class", "synth.eval_per_class",
      "synth.noise",   "learning_rate",   "momentum",     "weight_decay",  "batch_size",
      "epochs",        "seed",            "lr_schedule",  "eval_every",    "metric",
      "output_dir",    "checkpoint"};
  return keys;
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  std::map<std::string, std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("", fmt::format("line {}: expected key=value, got '{}'", line_no, line));
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (std::find(config_keys().begin(), config_keys().end(), key) == config_keys().end()) {
      throw ConfigError(key, fmt::format("line {}: unknown key '{}'", line_no, key));
    }
    if (!seen.emplace(key, value).second) throw ConfigError(key, fmt::format("line {}: duplicate key '{}'", line_no, key));

    if (key == "model") c.model = value;
    else if (key == "width_factor") c.width_factor = to_double(key, value);
    else if (key == "activation") {
      try {
        c.activation.kind = parse_activation_kind(value);
      } catch (const InvalidParam& e) {
        throw ConfigError(key, e.what());
      }
    } else if (key == "leaky.a") c.activation.leaky_a = to_double(key, value);
    else if (key == "rrelu.l") c.activation.rrelu_l = to_double(key, value);
    else if (key == "rrelu.u") c.activation.rrelu_u = to_double(key, value);
    else if (key == "prelu.init") c.activation.prelu_init = to_double(key, value);
    else if (key == "dataset") c.dataset = value;
    else if (key == "train_paths") c.train_paths = to_paths(value);
    else if (key == "eval_paths") c.eval_paths = to_paths(value);
    else if (key == "train_limit") c.train_limit = to_uint(key, value);
    else if (key == "eval_limit") c.eval_limit = to_uint(key, value);
    else if (key == "synth.classes") c.synth_classes = to_uint(key, value);
    else if (key == "synth.train_per_class") c.synth_train_per_class = to_uint(key, value);
    else if (key == "synth.eval_per_class") c.synth_eval_per_class = to_uint(key, value);
    else if (key == "synth.noise") c.synth_noise = to_double(key, value);
    else if (key == "learning_rate") c.train.learning_rate = to_double(key, value);
    else if (key == "momentum") c.train.momentum = to_double(key, value);
    else if (key == "weight_decay") c.train.weight_decay = to_double(key, value);
    else if (key == "batch_size") c.train.batch_size = to_uint(key, value);
    else if (key == "epochs") c.train.epochs = to_uint(key, value);
    else if (key == "seed") c.train.seed = to_uint(key, value);
    else if (key == "lr_schedule") c.lr_schedule = to_schedule(key, value);
    else if (key == "eval_every") c.train.eval_every = to_uint(key, value);
    else if (key == "metric") {
      try {
        c.train.metric = parse_metric_kind(value);
      } catch (const InvalidParam& e) {
        throw ConfigError(key, e.what());
      }
    } else if (key == "output_dir") c.output_dir = std::string(value);
    else if (key == "checkpoint") c.checkpoint = to_bool(key, value);
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::string schedule = "default";
  if (c.lr_schedule) {
    schedule = c.lr_schedule->empty() ? "none" : "";
    for (const auto& s : *c.lr_schedule) {
      if (!schedule.empty()) schedule += ',';
      schedule += fmt::format("{}:{}", s.epoch, num(s.multiplier));
    }
  }
  std::string out;
  const auto put = [&out](std::string_view k, const std::string& v) { out += fmt::format("{}={}\n", k, v); };
  put("model", c.model);
  put("width_factor", num(c.width_factor));
  put("activation", std::string(to_string(c.activation.kind)));
  put("leaky.a", num(c.activation.leaky_a));
  put("rrelu.l", num(c.activation.rrelu_l));
  put("rrelu.u", num(c.activation.rrelu_u));
  put("prelu.init", num(c.activation.prelu_init));
  put("dataset", c.dataset);
  put("train_paths", join_paths(c.train_paths));
  put("eval_paths", join_paths(c.eval_paths));
  put("train_limit", std::to_string(c.train_limit));
  put("eval_limit", std::to_string(c.eval_limit));
  put("synth.classes", std::to_string(c.synth_classes));
  put("synth.train_per_class", std::to_string(c.synth_train_per_class));
  put("synth.eval_per_class", std::to_string(c.synth_eval_per_class));
  put("synth.noise", num(c.synth_noise));
  put("learning_rate", num(c.train.learning_rate));
  put("momentum", num(c.train.momentum));
  put("weight_decay", num(c.train.weight_decay));
  put("batch_size", std::to_string(c.train.batch_size));
  put("epochs", std::to_string(c.train.epochs));
  put("seed", std::to_string(c.train.seed));
  put("lr_schedule", schedule);
  put("eval_every", std::to_string(c.train.eval_every));
  put("metric", std::string(to_string(c.train.metric)));
  put("output_dir", c.output_dir.string());
  put("checkpoint", c.checkpoint ? "true" : "false");
  return out;
}

void ExperimentConfig::validate(bool check_files) const {
  const auto fail = [](std::string key, const std::string& msg) { throw ConfigError(std::move(key), msg); };
  if (model != "nin" && model != "ndsb" && model != "nin-reduced" && model != "ndsb-reduced") {
    fail("model", fmt::format("unknown model '{}' (valid: nin, ndsb, nin-reduced, ndsb-reduced)", model));
  }
  if (!(width_factor > 0.0 && width_factor <= 1.0)) fail("width_factor", "width_factor must be in (0, 1]");
  try {
    activation.validate();
  } catch (const Error& e) {
    const char* key = activation.kind == ActivationKind::Leaky   ? "leaky.a"
                      : activation.kind == ActivationKind::Rrelu ? "rrelu.l"
                                                                 : "prelu.init";
    fail(key, e.what());
  }
  if (dataset != "cifar10" && dataset != "cifar100" && dataset != "synth") {
    fail("dataset", fmt::format("unknown dataset '{}' (valid: cifar10, cifar100, synth)", dataset));
  }
  if (dataset == "synth") {
    if (synth_classes < 2) fail("synth.classes", "synth.classes must be >= 2");
    if (synth_train_per_class == 0) fail("synth.train_per_class", "synth.train_per_class must be >= 1");
    if (synth_eval_per_class == 0) fail("synth.eval_per_class", "synth.eval_per_class must be >= 1");
    if (!(synth_noise >= 0.0)) fail("synth.noise", "synth.noise must be >= 0");
  } else {
    if (train_paths.empty()) fail("train_paths", "train_paths required for CIFAR datasets");
    if (eval_paths.empty()) fail("eval_paths", "eval_paths required for CIFAR datasets");
    if (check_files) {
      for (const auto& p : train_paths)
        if (!std::filesystem::exists(p)) fail("train_paths", fmt::format("file '{}' does not exist", p.string()));
      for (const auto& p : eval_paths)
        if (!std::filesystem::exists(p)) fail("eval_paths", fmt::format("file '{}' does not exist", p.string()));
    }
  }
  try {
    resolved_train_config().validate();
  } catch (const InvalidParam& e) {
    fail("train", e.what());
  }
}

TrainConfig ExperimentConfig::resolved_train_config() const {
  TrainConfig t = train;
  t.lr_schedule = lr_schedule ? *lr_schedule : TrainConfig::default_schedule(train.epochs);
  return t;
}

}  // namespace rectnet
