#include "c2c/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>

#include "c2c/error.hpp"
#include "c2c/hash.hpp"
#include "json.hpp"

namespace c2c {

namespace {

using nlohmann::json;

json defaults() {
  auto model = [](const ToyModelConfig& c) {
    return json{{"num_layers", c.num_layers}, {"kv_heads", c.kv_heads},   {"head_dim", c.head_dim},
                {"hidden_dim", c.hidden_dim}, {"seed", c.seed},           {"checkpoint", ""}};
  };
  const RunConfig d;
  const TrainConfig& t = d.train;
  const TransformConfig& tf = d.transform;
  json j;
  j["command"] = "";
  j["seed"] = d.seed;
  j["output_dir"] = d.output_dir;
  j["models"] = {{"receiver", model(d.receiver.shape)}, {"sharer", model(d.sharer.shape)}};
  j["fuser"] = {{"hidden_dim", d.fuser_hidden_dim},
                {"variant", "standard"},
                {"layer_strategy", "terminal"},
                {"token_strategy", "maximal_coverage"},
                {"checkpoint", ""}};
  j["train"] = {{"lr", t.lr},
                {"warmup_ratio", t.warmup_ratio},
                {"weight_decay", t.weight_decay},
                {"max_grad_norm", t.max_grad_norm},
                {"macro_batch", t.macro_batch},
                {"micro_batch", t.micro_batch},
                {"total_steps", t.total_steps},
                {"t_start", t.t_start},
                {"t_end", t.t_end},
                {"split_ratio", t.split_ratio},
                {"checkpoint_every", t.checkpoint_every}};
  j["data"] = {{"train", ""}, {"eval", ""}, {"exemplars", ""}, {"calibration", ""}};
  j["eval"] = {{"methods", json::array({"receiver_only"})},
               {"max_response_tokens", d.max_response_tokens},
               {"max_comm_tokens", d.max_comm_tokens},
               {"comm_stop_on_eos", d.comm_stop_on_eos},
               {"routing_threshold", nullptr},
               {"workers", d.workers}};
  j["oracle"] = {{"modes", json::array({"direct", "few_shot", "oracle"})},
                 {"layer_sweep", d.layer_sweep},
                 {"shots", d.shots},
                 {"transform",
                  {{"steps", tf.steps}, {"batch", tf.batch}, {"lr", tf.lr}, {"hidden_multiplier", tf.hidden_multiplier},
                   {"layer", d.transform_layer}}},
                 {"projector", "pca2d"}};
  j["analysis"] = {{"fractions", d.fractions}, {"records", ""}};
  return j;
}

bool same_kind(const json& def, const json& v) {
  if (def.is_null()) return v.is_null() || v.is_number();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) {
    if (!v.is_array()) return false;
    if (def.empty()) return true;
    for (const auto& e : v)
      if (!same_kind(def.front(), e)) return false;
    return true;
  }
  return def.is_object() && v.is_object();
}

void merge(json& base, const json& user, const std::string& path) {
  require(user.is_object(), ErrorKind::kConfigError, (path.empty() ? "config" : path) + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    require(base.contains(key), ErrorKind::kConfigError, "unknown config key " + here);
    json& slot = base[key];
    require(same_kind(slot, value), ErrorKind::kConfigError, "config key " + here + " has the wrong type");
    if (slot.is_object())
      merge(slot, value, here);
    else if (!slot.is_null() || !value.is_null())
      slot = value;
  }
}

void apply_override(json& base, const ConfigOverride& o) {
  json* node = &base;
  size_t start = 0;
  std::string key;
  for (;;) {
    const size_t dot = o.first.find('.', start);
    key = o.first.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    require(node->is_object() && node->contains(key), ErrorKind::kConfigError, "unknown config key " + o.first);
    if (dot == std::string::npos) break;
    node = &(*node)[key];
    start = dot + 1;
  }
  json value;
  try {
    value = json::parse(o.second);
  } catch (const json::exception&) {
    value = o.second;
  }
  // A bare word for a string slot is a string even if it parses (e.g. "1").
  if ((*node)[key].is_string() && !value.is_string()) value = o.second;
  if ((*node)[key].is_number_float() && value.is_number()) value = value.get<double>();
  require(same_kind((*node)[key], value), ErrorKind::kConfigError, "override " + o.first + " has the wrong type");
  (*node)[key] = value;
}

template <typename E>
E pick(const std::string& name, const std::string& what, std::initializer_list<std::pair<const char*, E>> options) {
  for (const auto& [n, e] : options)
    if (name == n) return e;
  fail(ErrorKind::kConfigError, "unknown " + what + " '" + name + "'");
}

ModelSpec model_spec(const json& j) {
  ModelSpec m;
  m.shape.num_layers = j["num_layers"];
  m.shape.kv_heads = j["kv_heads"];
  m.shape.head_dim = j["head_dim"];
  m.shape.hidden_dim = j["hidden_dim"];
  m.shape.seed = j["seed"];
  m.checkpoint = j["checkpoint"];
  return m;
}

}  // namespace

std::string default_config_json() { return defaults().dump(2); }

std::vector<ConfigOverride> env_overrides(char** environ_block) {
  std::vector<ConfigOverride> out;
  if (!environ_block) return out;
  const std::string prefix = "C2C__";
  for (char** e = environ_block; *e; ++e) {
    const std::string entry(*e);
    if (!entry.starts_with(prefix)) continue;
    const size_t eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string path;
    const std::string name = entry.substr(prefix.size(), eq - prefix.size());
    for (size_t i = 0; i < name.size(); ++i) {
      if (name.compare(i, 2, "__") == 0) {
        path += '.';
        ++i;
      } else {
        path += static_cast<char>(std::tolower(static_cast<unsigned char>(name[i])));
      }
    }
    out.emplace_back(path, entry.substr(eq + 1));
  }
  std::sort(out.begin(), out.end());
  return out;
}

RunConfig parse_run_config(const std::string& json_text, const std::vector<ConfigOverride>& overrides) {
  json user;
  try {
    user = json_text.empty() ? json::object() : json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  json j = defaults();
  merge(j, user, "");
  for (const auto& o : overrides) apply_override(j, o);

  RunConfig c;
  c.command = j["command"];
  c.seed = j["seed"];
  c.output_dir = j["output_dir"];
  c.receiver = model_spec(j["models"]["receiver"]);
  c.sharer = model_spec(j["models"]["sharer"]);
  const json& f = j["fuser"];
  c.fuser_hidden_dim = f["hidden_dim"];
  c.fuser_variant = pick<FuserVariant>(f["variant"], "fuser variant",
                                       {{"standard", FuserVariant::kStandard}, {"sharer_mlp", FuserVariant::kSharerMlp}});
  c.layer_strategy = pick<LayerStrategy>(f["layer_strategy"], "layer strategy",
                                         {{"terminal", LayerStrategy::kTerminal},
                                          {"depth_normalized", LayerStrategy::kDepthNormalized}});
  c.token_strategy = pick<TokenStrategy>(f["token_strategy"], "token strategy",
                                         {{"first_occurrence", TokenStrategy::kFirstOccurrence},
                                          {"maximal_coverage", TokenStrategy::kMaximalCoverage}});
  c.fuser_checkpoint = f["checkpoint"];
  const json& t = j["train"];
  c.train.lr = t["lr"];
  c.train.warmup_ratio = t["warmup_ratio"];
  c.train.weight_decay = t["weight_decay"];
  c.train.max_grad_norm = t["max_grad_norm"];
  c.train.macro_batch = t["macro_batch"];
  c.train.micro_batch = t["micro_batch"];
  c.train.total_steps = t["total_steps"];
  c.train.t_start = t["t_start"];
  c.train.t_end = t["t_end"];
  c.train.split_ratio = t["split_ratio"];
  c.train.checkpoint_every = t["checkpoint_every"];
  c.train.seed = c.seed;
  c.train.checkpoint_dir = c.output_dir + "/checkpoints";
  c.train.validate();
  const json& d = j["data"];
  c.train_data = d["train"];
  c.eval_data = d["eval"];
  c.exemplar_data = d["exemplars"];
  c.calibration_data = d["calibration"];
  const json& e = j["eval"];
  c.methods.clear();
  for (const auto& m : e["methods"]) {
    const auto parsed = parse_method(m.get<std::string>());
    require(parsed.has_value(), ErrorKind::kConfigError, "unknown method '" + m.get<std::string>() + "'");
    c.methods.push_back(*parsed);
  }
  c.max_response_tokens = e["max_response_tokens"];
  c.max_comm_tokens = e["max_comm_tokens"];
  c.comm_stop_on_eos = e["comm_stop_on_eos"];
  if (!e["routing_threshold"].is_null()) c.routing_threshold = e["routing_threshold"].get<double>();
  c.workers = e["workers"];
  require(c.max_response_tokens >= 1 && c.max_comm_tokens >= 1 && c.workers >= 1, ErrorKind::kConfigError,
          "eval limits and workers must be >= 1");
  const json& o = j["oracle"];
  c.enrichment_modes.clear();
  for (const auto& m : o["modes"]) {
    const auto parsed = parse_enrichment_mode(m.get<std::string>());
    require(parsed.has_value(), ErrorKind::kConfigError, "unknown enrichment mode '" + m.get<std::string>() + "'");
    c.enrichment_modes.push_back(*parsed);
  }
  c.layer_sweep = o["layer_sweep"];
  c.shots = o["shots"];
  require(c.shots >= 1, ErrorKind::kConfigError, "oracle.shots must be >= 1");
  c.transform.steps = o["transform"]["steps"];
  c.transform.batch = o["transform"]["batch"];
  c.transform.lr = o["transform"]["lr"];
  c.transform.hidden_multiplier = o["transform"]["hidden_multiplier"];
  c.transform.seed = c.seed;
  c.transform_layer = o["transform"]["layer"];
  const auto proj = parse_projector(o["projector"]);
  require(proj.has_value(), ErrorKind::kConfigError, "unknown projector '" + o["projector"].get<std::string>() + "'");
  c.projector = *proj;
  c.fractions = j["analysis"]["fractions"].get<std::vector<double>>();
  for (double fr : c.fractions)
    require(fr >= 0.0 && fr <= 1.0, ErrorKind::kConfigError, "analysis.fractions must lie in [0, 1]");
  c.records_path = j["analysis"]["records"];

  c.resolved_json = j.dump(2);
  c.config_hash = sha256_hex(j.dump());
  return c;
}

RunConfig load_run_config(const std::string& path, const std::vector<ConfigOverride>& overrides) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kConfigError, "cannot read config " + path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text, overrides);
}

}  // namespace c2c
