#include "rectnet/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <fmt/format.h>
#include <fstream>
#include <ostream>
#include <sstream>
#include <tuple>

#include "rectnet/errors.hpp"
#include "rectnet/gradcheck.hpp"
#include "rectnet/model_zoo.hpp"

namespace rectnet {

namespace {

constexpr std::uint64_t kSynthDomain = 0xda7a;

// (group, -a) sort key for a results-table label.
std::tuple<int, double> row_key(const std::string& label) {
  const auto head = label.substr(0, label.find(':'));
  if (head == "relu") return {0, 0.0};
  if (head == "leaky") {
    const auto eq = label.find("a=");
    double a = 0.0;
    if (eq != std::string::npos) {
      try {
        a = std::stod(label.substr(eq + 2));
      } catch (const std::exception&) {
      }
    }
    return {1, -a};
  }
  if (head == "prelu") return {2, 0.0};
  if (head == "rrelu") return {3, 0.0};
  return {4, 0.0};
}

Shape synth_shape(const std::string& model) {
  return model.rfind("ndsb", 0) == 0 ? Shape{1, 70, 70} : Shape{3, 32, 32};
}

}  // namespace

std::filesystem::path resolve_output_dir(const std::filesystem::path& dir) {
  const char* root = std::getenv(kOutputRootEnv);
  if (dir.is_absolute() || root == nullptr || *root == '\0') return dir;
  return std::filesystem::path(root) / dir;
}

std::string file_token(const ActivationConfig& activation) {
  std::string s = activation.label();
  std::replace_if(s.begin(), s.end(), [](char c) { return c == ':' || c == '=' || c == ','; }, '_');
  return s;
}

bool results_row_before(const std::string& a, const std::string& b) {
  const auto ka = row_key(a), kb = row_key(b);
  if (ka != kb) return ka < kb;
  return a < b;
}

void update_results_table(const std::filesystem::path& path, const std::string& label, double train_metric,
                          double eval_metric) {
  std::vector<std::pair<std::string, std::string>> rows;  // (label, full line)
  if (std::ifstream in(path); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto name = line.substr(0, line.find(' '));
      if (name != label) rows.emplace_back(name, line);
    }
  }
  rows.emplace_back(label, fmt::format("{} {:.9g} {:.9g}", label, train_metric, eval_metric));
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& x, const auto& y) { return results_row_before(x.first, y.first); });
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  for (const auto& [name, line] : rows) out << line << '\n';
}

ExperimentData load_experiment_data(const ExperimentConfig& c) {
  ExperimentData d;
  if (c.dataset == "synth") {
    const std::size_t per_class = c.synth_train_per_class + c.synth_eval_per_class;
    const Dataset all = synth_blobs(c.synth_classes, per_class, synth_shape(c.model),
                                    derive_seed(c.train.seed, kSynthDomain), c.synth_noise);
    d.train = slice(all, 0, c.synth_classes * c.synth_train_per_class);
    d.eval = slice(all, d.train.size(), c.synth_classes * c.synth_eval_per_class);
  } else {
    const auto load = c.dataset == "cifar10" ? load_cifar10 : load_cifar100;
    d.train = load(c.train_paths);
    d.eval = load(c.eval_paths);
  }
  if (c.train_limit > 0 && c.train_limit < d.train.size()) d.train = slice(d.train, 0, c.train_limit);
  if (c.eval_limit > 0 && c.eval_limit < d.eval.size()) d.eval = slice(d.eval, 0, c.eval_limit);
  return d;
}

RunOutputs run_experiment(const ExperimentConfig& config, std::ostream& log) {
  config.validate(true);
  const TrainConfig tc = config.resolved_train_config();
  const ExperimentData data = load_experiment_data(config);

  const ModelSpec spec = build_model(config.model, data.train.num_classes, config.width_factor, config.activation);
  if (!(spec.input_shape == data.train.example_shape())) {
    throw ConfigError("model", fmt::format("model '{}' expects {} inputs, dataset has {}", config.model,
                                           spec.input_shape.str(), data.train.example_shape().str()));
  }
  Network net = instantiate(spec, tc.seed);

  RunOutputs out;
  out.output_dir = resolve_output_dir(config.output_dir);
  std::filesystem::create_directories(out.output_dir);
  const std::string token = file_token(config.activation);
  out.curves = out.output_dir / fmt::format("curves_{}.csv", token);
  out.results = out.output_dir / "results.txt";

  log << fmt::format("train {} {} on {} ({} train / {} eval), {} params\n", spec.name, config.activation.label(),
                     config.dataset, data.train.size(), data.eval.size(), net.parameter_count());
  TrainHooks hooks;
  hooks.on_record = [&log](const CurveRecord& r) {
    log << fmt::format("epoch {:>3}  train {:.6f}  eval {:.6f}  ({})\n", r.epoch, r.train_metric, r.eval_metric,
                       to_string(r.kind));
  };
  out.result = train(net, data.train, data.eval, tc, hooks);

  write_curves(out.result.curves, out.curves);
  const CurveRecord& last = out.result.curves.back();
  update_results_table(out.results, config.activation.label(), last.train_metric, last.eval_metric);
  if (config.checkpoint) {
    out.checkpoint = out.output_dir / fmt::format("model_{}.ckpt", token);
    save_checkpoint(net, *out.checkpoint);
  }
  return out;
}

int cmd_train(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err) {
  try {
    const ExperimentConfig config = load_config(config_path);
    const RunOutputs r = run_experiment(config, out);
    out << fmt::format("wrote {} and {}\n", r.curves.string(), r.results.string());
    return kExitOk;
  } catch (const ConfigError& e) {
    err << fmt::format("config error [{}]: {}\n", e.key(), e.what());
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << fmt::format("diverged at epoch {}: {}\n", e.epoch(), e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

int cmd_gradcheck(std::ostream& out) {
  const auto suite = default_gradcheck_suite();
  return report_gradchecks(run_gradchecks(suite), out);
}

int cmd_actstats(const ActStatsOptions& options, std::ostream& out, std::ostream& err) {
  ActStatsReport report;
  try {
    report = activation_stats(options);
  } catch (const Error& e) {
    err << "invalid parameters: " << e.what() << '\n';
    return kExitUsage;
  }
  print_actstats(options, report, out);
  return report.passed() ? kExitOk : kExitFailure;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"rectified-unit network trainer"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train_cmd = app.add_subcommand("train", "train one (model, activation) cell from a config file");
  train_cmd->add_option("config", config_path, "key=value config file")->required();

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every backward op");

  std::string kind;
  ActStatsOptions stats;
  auto* stats_cmd = app.add_subcommand("actstats", "sparsity and slope statistics of one activation");
  stats_cmd->add_option("kind", kind, "relu | leaky | prelu | rrelu | identity")->required();
  stats_cmd->add_option("--a", stats.activation.leaky_a, "leaky divisor");
  stats_cmd->add_option("--l", stats.activation.rrelu_l, "rrelu lower bound");
  stats_cmd->add_option("--u", stats.activation.rrelu_u, "rrelu upper bound");
  stats_cmd->add_option("--n", stats.samples, "number of samples");
  stats_cmd->add_option("--seed", stats.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  if (*train_cmd) return cmd_train(config_path, out, err);
  if (*grad_cmd) return cmd_gradcheck(out);
  if (*stats_cmd) {
    try {
      stats.activation.kind = parse_activation_kind(kind);
    } catch (const InvalidParam& e) {
      err << e.what() << '\n';
      return kExitUsage;
    }
    return cmd_actstats(stats, out, err);
  }
  return kExitUsage;
}

}  // namespace rectnet
