#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "c2c/error.hpp"
#include "c2c/run_config.hpp"
#include "c2c/runner.hpp"

extern char** environ;

namespace {

struct Options {
  std::string config_path;
  std::string output_dir;
  std::optional<uint64_t> seed;
  std::vector<std::string> methods;
  std::optional<int> max_response_tokens;
  std::optional<int> max_comm_tokens;
  std::string fuser_checkpoint;
  std::optional<double> routing_threshold;
  std::vector<std::string> sets;  // key=value
};

void add_common(CLI::App* app, Options& o) {
  app->add_option("--config", o.config_path, "JSON run configuration");
  app->add_option("--output-dir", o.output_dir, "Directory for outputs and manifest.json");
  app->add_option("--seed", o.seed, "Run seed");
  app->add_option("--fuser-checkpoint", o.fuser_checkpoint, "Trained fuser file");
  app->add_option("--set", o.sets, "Override a config key, e.g. --set train.lr=3e-3");
}

void add_eval_flags(CLI::App* app, Options& o) {
  app->add_option("--method", o.methods, "receiver_only, sharer_only, t2t, c2c or routing (repeatable)")
      ->delimiter(',');
  app->add_option("--max-response-tokens", o.max_response_tokens, "Response token budget")->check(CLI::PositiveNumber);
  app->add_option("--max-comm-tokens", o.max_comm_tokens, "T2T analysis token budget")->check(CLI::PositiveNumber);
  app->add_option("--routing-threshold", o.routing_threshold, "Difficulty at or above which routing picks the sharer");
}

int exit_code(c2c::ErrorKind kind) {
  switch (kind) {
    case c2c::ErrorKind::kConfigError: return 2;
    case c2c::ErrorKind::kDataError: return 3;
    default: return 1;
  }
}

c2c::RunConfig resolve(const Options& o, const std::string& command) {
  std::vector<c2c::ConfigOverride> ov = c2c::env_overrides(environ);
  ov.emplace_back("command", command);
  for (const auto& s : o.sets) {
    const size_t eq = s.find('=');
    if (eq == std::string::npos) throw c2c::Error(c2c::ErrorKind::kConfigError, "--set expects key=value, got " + s);
    ov.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (!o.output_dir.empty()) ov.emplace_back("output_dir", o.output_dir);
  if (o.seed) ov.emplace_back("seed", std::to_string(*o.seed));
  if (!o.fuser_checkpoint.empty()) ov.emplace_back("fuser.checkpoint", o.fuser_checkpoint);
  if (!o.methods.empty()) {
    std::string list = "[";
    for (size_t i = 0; i < o.methods.size(); ++i) list += (i ? ",\"" : "\"") + o.methods[i] + "\"";
    ov.emplace_back("eval.methods", list + "]");
  }
  if (o.max_response_tokens) ov.emplace_back("eval.max_response_tokens", std::to_string(*o.max_response_tokens));
  if (o.max_comm_tokens) ov.emplace_back("eval.max_comm_tokens", std::to_string(*o.max_comm_tokens));
  if (o.routing_threshold) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", *o.routing_threshold);
    ov.emplace_back("eval.routing_threshold", buf);
  }
  return o.config_path.empty() ? c2c::parse_run_config("", ov) : c2c::load_run_config(o.config_path, ov);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cache-to-cache communication toolkit for toy language models"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "Train a fuser on data.train");
  add_common(train, o);

  auto* eval = app.add_subcommand("eval", "Evaluate communication methods on data.eval");
  add_common(eval, o);
  add_eval_flags(eval, o);

  auto* oracle = app.add_subcommand("oracle", "Oracle experiments");
  oracle->require_subcommand(1);
  for (const char* name : {"enrichment", "transform"}) add_common(oracle->add_subcommand(name), o);

  auto* analyze = app.add_subcommand("analyze", "Post-hoc analyses");
  analyze->require_subcommand(1);
  for (const char* name : {"rank", "gates", "progressive", "venn"}) {
    auto* sub = analyze->add_subcommand(name);
    add_common(sub, o);
    if (std::string(name) == "progressive") add_eval_flags(sub, o);
  }

  auto* defaults = app.add_subcommand("defaults", "Print every config key with its default");

  int count = 16;
  uint64_t data_seed = 1;
  std::string out_path, id_prefix = "q";
  auto* toy = app.add_subcommand("toy-data", "Write random toy multiple-choice questions as JSONL");
  toy->add_option("--count", count)->check(CLI::NonNegativeNumber);
  toy->add_option("--seed", data_seed);
  toy->add_option("--id-prefix", id_prefix);
  toy->add_option("--out", out_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (defaults->parsed()) {
      std::cout << c2c::default_config_json() << "\n";
      return 0;
    }
    if (toy->parsed()) {
      std::ofstream out(out_path, std::ios::binary);
      if (!out) throw c2c::Error(c2c::ErrorKind::kConfigError, "cannot write " + out_path);
      out << c2c::toy_mcq_jsonl(count, data_seed, id_prefix);
      return 0;
    }
    std::string command, sub;
    for (auto* top : {train, eval, oracle, analyze}) {
      if (!top->parsed()) continue;
      command = top->get_name();
      for (auto* s : top->get_subcommands()) sub = s->get_name();
    }
    const c2c::RunConfig config = resolve(o, sub.empty() ? command : command + " " + sub);
    const c2c::Manifest m = c2c::run_command(config, command, sub);
    std::cout << config.output_dir << "/manifest.json\n";
    for (const auto& [file, sha] : m.outputs) std::cout << "  " << file << "  " << sha.substr(0, 12) << "\n";
    return 0;
  } catch (const c2c::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
