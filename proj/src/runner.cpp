#include "c2c/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "c2c/checkpoint.hpp"
#include "c2c/error.hpp"
#include "c2c/hash.hpp"
#include "c2c/oracle_lab.hpp"
#include "c2c/prompts.hpp"
#include "c2c/rng.hpp"
#include "json.hpp"

namespace c2c {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kConfigError, "cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Output files go through here so the manifest sees every one of them.
class RunWriter {
 public:
  RunWriter(const RunConfig& config, std::string command) : dir_(config.output_dir) {
    fs::create_directories(dir_);
    manifest_.command = std::move(command);
    manifest_.config_hash = config.config_hash;
    manifest_.seed = config.seed;
    manifest_.resolved_config = config.resolved_json;
    write("config.json", config.resolved_json + "\n");
  }

  void write(const std::string& name, const std::string& text) {
    std::ofstream out(dir_ + "/" + name, std::ios::binary);
    require(out.good(), ErrorKind::kConfigError, "cannot write " + dir_ + "/" + name);
    out << text;
    out.close();
    record(name);
  }
  // For files another component wrote into the output directory.
  void record(const std::string& name) { manifest_.outputs.emplace_back(name, sha256_file(dir_ + "/" + name)); }
  void input(const std::string& path) { manifest_.inputs.emplace_back(path, sha256_file(path)); }
  void model(const std::string& role, const std::string& digest) { manifest_.models.emplace_back(role, digest); }
  void dropped(int n) { manifest_.dropped_items += n; }
  std::string path(const std::string& name) const { return dir_ + "/" + name; }

  Manifest finish() {
    std::sort(manifest_.outputs.begin(), manifest_.outputs.end());
    const std::string text = manifest_.to_json();
    std::ofstream out(dir_ + "/manifest.json", std::ios::binary);
    require(out.good(), ErrorKind::kConfigError, "cannot write the manifest");
    out << text;
    return manifest_;
  }

 private:
  std::string dir_;
  Manifest manifest_;
};

McqDataset load_items(RunWriter& w, const std::string& path, const char* what) {
  require(!path.empty(), ErrorKind::kConfigError, std::string("data.") + what + " is not set");
  require(fs::exists(path), ErrorKind::kConfigError, std::string("data.") + what + " file " + path + " does not exist");
  McqDataset d = load_mcq_dataset(path, format_from_path(path));
  w.input(path);
  w.dropped(d.dropped);
  return d;
}

void add_models(RunWriter& w, const ToyPair& m) {
  w.model("receiver", m.receiver.tokenizer_id() + ":" + model_digest(m.receiver));
  w.model("sharer", m.sharer.tokenizer_id() + ":" + model_digest(m.sharer));
}

FuserParams<float> load_fuser_for(RunWriter& w, const RunConfig& config, const ToyPair& m) {
  require(!config.fuser_checkpoint.empty(), ErrorKind::kConfigError, "this command needs fuser.checkpoint");
  require(fs::exists(config.fuser_checkpoint), ErrorKind::kConfigError,
          "fuser checkpoint " + config.fuser_checkpoint + " does not exist");
  FuserParams<float> f = load_fuser(config.fuser_checkpoint);
  check_fuser_matches(f, m.sharer, m.receiver);
  w.input(config.fuser_checkpoint);
  return f;
}

TokenAlignment item_alignment(const McqItem& item, const ToyPair& m, TokenStrategy strategy) {
  CommRequest r;
  r.question = item.question;
  r.choices = item.choices;
  return align_tokens(section_chat({{"user", request_prompt(r)}}, m.receiver_tokenizer, m.sharer_tokenizer), strategy);
}

std::string record_file(Method m) { return "records_" + to_string(m) + ".jsonl"; }

// -- eval ---------------------------------------------------------------------

struct MethodSummary {
  int total = 0;
  int correct = 0;
  int none = 0;
  double wall = 0.0;
  double comm_tokens = 0.0;
};

Manifest eval_command(const RunConfig& config) {
  RunWriter w(config, "eval");
  const ToyPair m = load_models(config);
  add_models(w, m);
  const McqDataset data = load_items(w, config.eval_data, "eval");
  require(!data.items.empty(), ErrorKind::kDataError, "evaluation set is empty");
  const bool needs_fuser = std::find(config.methods.begin(), config.methods.end(), Method::kC2C) != config.methods.end();
  std::optional<FuserParams<float>> fuser;
  if (needs_fuser) fuser = load_fuser_for(w, config, m);

  std::vector<CommRequest> requests;
  for (const auto& item : data.items) requests.push_back(mcq_request(item, config));

  json summary = json::object();
  for (const Method method : config.methods) {
    std::vector<bool> to_strong;
    json routing;
    if (method == Method::kRouting) {
      const McqDataset calib = load_items(w, config.calibration_data, "calibration");
      std::vector<std::string> questions;
      for (const auto& it : calib.items) questions.push_back(it.question);
      const FrequencyScorer scorer(questions);
      if (config.routing_threshold) {
        for (const auto& r : requests) to_strong.push_back(scorer(r.question) >= *config.routing_threshold);
        routing["threshold"] = *config.routing_threshold;
      } else {
        const RoutingPlan plan = plan_routing(requests, scorer);
        to_strong = plan.to_strong;
        routing["threshold"] = plan.threshold;
      }
      routing["strong_fraction"] =
          static_cast<double>(std::count(to_strong.begin(), to_strong.end(), true)) / requests.size();
    }
    const auto results = run_parallel(requests.size(), config.workers, [&](size_t i) -> CommResult {
      const CommRequest& r = requests[i];
      switch (method) {
        case Method::kReceiverOnly: return run_single(r, m.receiver_text(), Method::kReceiverOnly);
        case Method::kSharerOnly: return run_single(r, m.sharer_text(), Method::kSharerOnly);
        case Method::kT2T: return t2t_generate(r, m.sharer_text(), m.receiver_text());
        case Method::kC2C: return c2c_generate(r, m.sharer_text(), m.receiver_text(), *fuser, config.token_strategy);
        case Method::kRouting:
          return run_single(r, to_strong[i] ? m.sharer_text() : m.receiver_text(), Method::kRouting);
      }
      fail(ErrorKind::kConfigError, "unhandled method");
    });

    MethodSummary s;
    std::string lines;
    for (size_t i = 0; i < results.size(); ++i) {
      const McqItem& item = data.items[i];
      const CommResult& res = results[i];
      EvalRecord rec;
      rec.id = item.id;
      rec.method = to_string(method);
      rec.response = res.response;
      const auto letter = extract_answer(res.response, static_cast<int>(item.choices.size()));
      rec.predicted = letter ? std::string(1, *letter) : "NONE";
      rec.answer = std::string(1, item.answer);
      rec.correct = letter && *letter == item.answer;
      rec.wall_seconds = res.wall_seconds;
      lines += eval_record_json(rec, res) + "\n";
      ++s.total;
      s.correct += rec.correct ? 1 : 0;
      s.none += letter ? 0 : 1;
      s.wall += res.wall_seconds;
      s.comm_tokens += res.tokens.comm;
    }
    w.write(record_file(method), lines);
    json entry = {{"total", s.total},
                  {"correct", s.correct},
                  {"no_answer", s.none},
                  {"accuracy", static_cast<double>(s.correct) / s.total},
                  {"mean_wall_seconds", s.wall / s.total},
                  {"mean_comm_tokens", s.comm_tokens / s.total}};
    if (!routing.is_null()) entry["routing"] = routing;
    summary[to_string(method)] = entry;
  }
  w.write("summary.json", summary.dump(2) + "\n");
  return w.finish();
}

// -- train --------------------------------------------------------------------

Manifest train_command(const RunConfig& config) {
  RunWriter w(config, "train");
  const ToyPair m = load_models(config);
  add_models(w, m);
  const McqDataset data = load_items(w, config.train_data, "train");
  require(!data.items.empty(), ErrorKind::kDataError, "training set is empty");
  std::vector<TrainSample> samples;
  for (const auto& item : data.items) samples.push_back(mcq_train_sample(item, m, config.token_strategy));

  const LayerMap map = layer_map_for(config, m.receiver.config().num_layers, m.sharer.config().num_layers);
  const FuserConfig fc =
      make_fuser_config(m.receiver.info(), m.sharer.info(), map, config.fuser_hidden_dim, config.fuser_variant);
  TrainConfig tc = config.train;
  tc.checkpoint_dir = w.path("checkpoints");
  const TrainResult<float> result = train<float>(samples, m.sharer, m.receiver, fc, tc);

  w.write("train_log.jsonl", result.log.to_jsonl());
  save_fuser(w.path("fuser.c2cf"), result.params,
             {config.seed, tc.total_steps, anneal_temperature(tc.total_steps, tc.total_steps, tc.t_start, tc.t_end)});
  w.record("fuser.c2cf");
  w.record("fuser.c2cf.json");
  if (tc.checkpoint_every > 0 && fs::exists(tc.checkpoint_dir)) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(tc.checkpoint_dir)) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    for (const auto& n : names) w.record("checkpoints/" + n);
  }
  return w.finish();
}

// -- oracle -------------------------------------------------------------------

Manifest enrichment_command(const RunConfig& config) {
  RunWriter w(config, "oracle enrichment");
  const ToyPair m = load_models(config);
  add_models(w, m);
  const McqDataset eval = load_items(w, config.eval_data, "eval");
  const McqDataset shots = load_items(w, config.exemplar_data, "exemplars");
  require(!eval.items.empty() && !shots.items.empty(), ErrorKind::kDataError,
          "enrichment needs evaluation items and exemplars");
  for (const auto& s : shots.items)
    for (const auto& it : eval.items)
      require(s.id != it.id && s.question != it.question, ErrorKind::kDataError,
              "exemplar " + s.id + " overlaps evaluation item " + it.id);

  const Tokenizer& tok = m.receiver_tokenizer;
  EnrichmentDataset ds;
  for (const auto& raw : eval.items) {
    McqItem item = raw;
    if (item.subject.empty()) item.subject = "general knowledge";
    std::vector<McqItem> chosen;
    for (const auto& s : shots.items)
      if (static_cast<int>(chosen.size()) < config.shots && s.subject == raw.subject) chosen.push_back(s);
    for (const auto& s : shots.items)
      if (static_cast<int>(chosen.size()) < config.shots &&
          std::none_of(chosen.begin(), chosen.end(), [&](const McqItem& c) { return c.id == s.id; }))
        chosen.push_back(s);
    const std::string text = render_prompt(item, PromptTemplate::kOracleFewShot, chosen);
    const size_t split = text.rfind("Question:\n");
    Exemplar ex{"shots/" + item.id, tok.encode(text.substr(0, split))};
    EnrichmentItem e;
    e.id = item.id;
    // The trailing space makes the next token the bare option letter.
    e.question_tokens = tok.encode(text.substr(split) + " ");
    e.answer_token = tok.encode(std::string(1, item.answer)).back();
    e.shot_ids = {ex.id};
    ds.exemplars.push_back(std::move(ex));
    ds.items.push_back(std::move(e));
  }
  const EnrichmentReport report =
      run_enrichment_experiment<float>(ds, m.receiver, {config.enrichment_modes, config.layer_sweep});
  w.write("enrichment_modes.csv", report.mode_csv());
  if (config.layer_sweep) w.write("enrichment_layers.csv", report.layer_csv());
  return w.finish();
}

Matrix<double> rows_of(const Matrix<double>& m, const std::vector<size_t>& idx) {
  Matrix<double> out(static_cast<int>(idx.size()), m.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    auto src = m.row(static_cast<int>(idx[i]));
    std::copy(src.begin(), src.end(), out.row(static_cast<int>(i)).begin());
  }
  return out;
}

double column_variance(const Matrix<double>& m) {
  double total = 0.0;
  for (int c = 0; c < m.cols(); ++c) {
    double mean = 0.0, sq = 0.0;
    for (int r = 0; r < m.rows(); ++r) mean += m(r, c) / m.rows();
    for (int r = 0; r < m.rows(); ++r) sq += (m(r, c) - mean) * (m(r, c) - mean) / m.rows();
    total += sq / m.cols();
  }
  return total;
}

Manifest transform_command(const RunConfig& config) {
  RunWriter w(config, "oracle transform");
  const ToyPair m = load_models(config);
  add_models(w, m);
  const McqDataset data = load_items(w, config.eval_data, "eval");
  std::vector<std::vector<ChatMessage>> prompts;
  for (const auto& item : data.items) prompts.push_back({{"user", request_prompt(mcq_request(item, config))}});

  const int layers = m.receiver.config().num_layers;
  const int layer = config.transform_layer < 0 ? layers - 1 : config.transform_layer;
  require(layer < layers, ErrorKind::kConfigError, "oracle.transform.layer is out of range");
  const TransformDataset all = build_transform_dataset(
      prompts, m.sharer, m.sharer_tokenizer, m.receiver, m.receiver_tokenizer,
      layer_map_for(config, layers, m.sharer.config().num_layers), layer);
  require(all.source.rows() >= 2, ErrorKind::kDataError, "transform needs at least two aligned positions");
  const auto [train_idx, test_idx] = split_indices(static_cast<size_t>(all.source.rows()), 0.8, mix_seed(config.seed, 3));
  const TransformDataset train_set{rows_of(all.source, train_idx), rows_of(all.target, train_idx)};
  const TransformDataset test_set = test_idx.empty() ? train_set
                                                     : TransformDataset{rows_of(all.source, test_idx),
                                                                        rows_of(all.target, test_idx)};
  const TransformResult fit = train_transform_mlp(train_set, config.transform);

  std::string losses = "step,loss\n";
  for (size_t i = 0; i < fit.losses.size(); ++i) losses += std::to_string(i) + "," + fmt(fit.losses[i]) + "\n";
  w.write("transform_losses.csv", losses);
  const json report = {{"receiver_layer", layer},
                       {"train_pairs", train_set.source.rows()},
                       {"test_pairs", test_set.source.rows()},
                       {"train_mse", transform_mse(fit.mlp, train_set)},
                       {"test_mse", transform_mse(fit.mlp, test_set)},
                       {"test_target_variance", column_variance(test_set.target)}};
  w.write("transform_report.json", report.dump(2) + "\n");
  // Source vectors live in the sharer's space, so they are projected on their own.
  w.write("embeddings_target.csv", export_embeddings({{"target", test_set.target},
                                                      {"transformed", fit.mlp.apply(test_set.source)}},
                                                     config.projector));
  w.write("embeddings_source.csv", export_embeddings({{"source", test_set.source}}, config.projector));
  return w.finish();
}

// -- analyze ------------------------------------------------------------------

Manifest rank_command(const RunConfig& config) {
  RunWriter w(config, "analyze rank");
  const ToyPair m = load_models(config);
  add_models(w, m);
  const McqDataset data = load_items(w, config.eval_data, "eval");
  std::optional<FuserParams<float>> fuser;
  if (!config.fuser_checkpoint.empty()) fuser = load_fuser_for(w, config, m);
  std::vector<KVCache<float>> shr, recv, fused;
  for (const auto& item : data.items) {
    const TokenAlignment a = item_alignment(item, m, config.token_strategy);
    recv.push_back(m.receiver.prefill(a.receiver_tokens).cache);
    shr.push_back(m.sharer.prefill(a.sharer_tokens).cache);
    if (fuser) fused.push_back(fuse_cache(recv.back(), shr.back(), a, *fuser, GateState{}));
  }
  w.write("rank.csv", rank_report(shr, recv, fused).csv());
  return w.finish();
}

Manifest gates_command(const RunConfig& config) {
  RunWriter w(config, "analyze gates");
  const ToyPair m = load_models(config);
  add_models(w, m);
  const FuserParams<float> fuser = load_fuser_for(w, config, m);
  std::vector<FuseTrace> traces;
  if (!config.eval_data.empty()) {
    const McqDataset data = load_items(w, config.eval_data, "eval");
    for (const auto& item : data.items) {
      const TokenAlignment a = item_alignment(item, m, config.token_strategy);
      FuseTrace t;
      fuse_cache(m.receiver.prefill(a.receiver_tokens).cache, m.sharer.prefill(a.sharer_tokens).cache, a, fuser,
                 GateState{}, &t);
      traces.push_back(std::move(t));
    }
  }
  w.write("gates.csv", gate_report(fuser, traces).csv());
  return w.finish();
}

Manifest progressive_command(const RunConfig& config) {
  RunWriter w(config, "analyze progressive");
  const ToyPair m = load_models(config);
  add_models(w, m);
  const FuserParams<float> fuser = load_fuser_for(w, config, m);
  const McqDataset data = load_items(w, config.eval_data, "eval");
  require(!data.items.empty(), ErrorKind::kDataError, "evaluation set is empty");
  struct Prepared {
    std::vector<int> prompt;
    KVCache<float> recv, fused;
  };
  std::vector<Prepared> prepared;
  for (const auto& item : data.items) {
    const TokenAlignment a = item_alignment(item, m, config.token_strategy);
    Prepared p{a.receiver_tokens, m.receiver.prefill(a.receiver_tokens).cache, {}};
    p.fused = fuse_cache(p.recv, m.sharer.prefill(a.sharer_tokens).cache, a, fuser, GateState{});
    prepared.push_back(std::move(p));
  }
  std::string csv = "direction,fraction,accuracy\n";
  for (const auto dir : {ReplaceDirection::kFormer, ReplaceDirection::kLatter}) {
    for (const double f : config.fractions) {
      int correct = 0;
      for (size_t i = 0; i < prepared.size(); ++i) {
        const KVCache<float> mixed = progressive_replace(prepared[i].recv, prepared[i].fused, f, dir);
        const auto out = m.receiver.generate(prepared[i].prompt, &mixed, config.max_response_tokens,
                                             m.receiver_tokenizer.eos_id());
        const auto letter = extract_answer(decode_response(m.receiver_tokenizer, out),
                                           static_cast<int>(data.items[i].choices.size()));
        correct += letter && *letter == data.items[i].answer ? 1 : 0;
      }
      csv += std::string(dir == ReplaceDirection::kFormer ? "former" : "latter") + "," + fmt(f) + "," +
             fmt(static_cast<double>(correct) / prepared.size()) + "\n";
    }
  }
  w.write("progressive.csv", csv);
  return w.finish();
}

std::vector<EvalRecord> read_records(RunWriter& w, const std::string& dir, Method method) {
  const std::string path = dir + "/" + record_file(method);
  require(fs::exists(path), ErrorKind::kConfigError, "missing eval records " + path);
  w.input(path);
  std::vector<EvalRecord> out;
  std::istringstream in(read_text(path));
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_eval_record(line));
    } catch (const Error& e) {
      fail(ErrorKind::kDataError, path + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

Manifest venn_command(const RunConfig& config) {
  RunWriter w(config, "analyze venn");
  require(!config.records_path.empty(), ErrorKind::kConfigError,
          "analysis.records must name an eval output directory");
  const CorrectnessBreakdown b =
      correctness_breakdown(read_records(w, config.records_path, Method::kSharerOnly),
                            read_records(w, config.records_path, Method::kReceiverOnly),
                            read_records(w, config.records_path, Method::kC2C));
  w.write("venn.csv", b.csv());
  const json j = {{"total", b.total},
                  {"sharer_correct", b.sharer_correct},
                  {"receiver_correct", b.receiver_correct},
                  {"c2c_correct", b.c2c_correct},
                  {"c2c_given_sharer", b.c2c_given_sharer},
                  {"c2c_given_receiver", b.c2c_given_receiver},
                  {"c2c_given_neither", b.c2c_given_neither}};
  w.write("venn.json", j.dump(2) + "\n");
  return w.finish();
}

}  // namespace

std::string Manifest::to_json() const {
  json j;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["config"] = resolved_config.empty() ? json::object() : json::parse(resolved_config);
  j["models"] = json::object();
  for (const auto& [role, digest] : models) j["models"][role] = digest;
  j["inputs"] = json::array();
  for (const auto& [path, sha] : inputs) j["inputs"].push_back({{"path", path}, {"sha256", sha}});
  j["outputs"] = json::array();
  for (const auto& [file, sha] : outputs) j["outputs"].push_back({{"file", file}, {"sha256", sha}});
  j["dropped_items"] = dropped_items;
  return j.dump(2) + "\n";
}

ToyPair load_models(const RunConfig& config) {
  ToyPair pair({config.receiver.shape, config.sharer.shape});
  auto replace = [](ToyModel<float>& slot, const std::string& path, const Tokenizer& tok, const char* role) {
    if (path.empty()) return;
    require(fs::exists(path), ErrorKind::kConfigError, std::string(role) + " checkpoint " + path + " does not exist");
    ToyModel<float> loaded = load_toy_model(path);
    require(loaded.tokenizer_id() == tok.id(), ErrorKind::kConfigError,
            std::string(role) + " checkpoint expects tokenizer '" + loaded.tokenizer_id() + "', not '" + tok.id() + "'");
    require(loaded.config().vocab_size == tok.vocab_size(), ErrorKind::kConfigError,
            std::string(role) + " checkpoint vocabulary does not match its tokenizer");
    loaded.set_frozen(true);
    slot = std::move(loaded);
  };
  replace(pair.receiver, config.receiver.checkpoint, pair.receiver_tokenizer, "receiver");
  replace(pair.sharer, config.sharer.checkpoint, pair.sharer_tokenizer, "sharer");
  return pair;
}

TrainSample mcq_train_sample(const McqItem& item, const ToyPair& models, TokenStrategy strategy) {
  TrainSample s;
  s.alignment = item_alignment(item, models, strategy);
  s.context_tokens = s.alignment.receiver_tokens;
  s.sharer_context_tokens = s.alignment.sharer_tokens;
  s.response_tokens = models.receiver_tokenizer.encode(std::string(" ") + item.answer);
  s.response_tokens.push_back(models.receiver_tokenizer.eos_id());
  s.validate();
  return s;
}

CommRequest mcq_request(const McqItem& item, const RunConfig& config) {
  CommRequest r;
  r.question = item.question;
  r.choices = item.choices;
  r.max_response_tokens = config.max_response_tokens;
  r.max_comm_tokens = config.max_comm_tokens;
  r.comm_stop_on_eos = config.comm_stop_on_eos;
  return r;
}

LayerMap layer_map_for(const RunConfig& config, int recv_layers, int shr_layers) {
  return config.layer_strategy == LayerStrategy::kTerminal ? terminal_layer_map(recv_layers, shr_layers)
                                                           : depth_normalized_layer_map(recv_layers, shr_layers);
}

std::string eval_record_json(const EvalRecord& r, const CommResult& result) {
  json j = {{"id", r.id},
            {"method", r.method},
            {"response", r.response},
            {"predicted", r.predicted},
            {"answer", r.answer},
            {"correct", r.correct},
            {"wall_seconds", r.wall_seconds},
            {"intermediate", result.intermediate},
            {"tokens", {{"prompt", result.tokens.prompt}, {"comm", result.tokens.comm}, {"response", result.tokens.response}}}};
  return j.dump();
}

EvalRecord parse_eval_record(const std::string& line) {
  try {
    const json j = json::parse(line);
    EvalRecord r;
    r.id = j.at("id").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.response = j.value("response", "");
    r.predicted = j.value("predicted", "NONE");
    r.answer = j.value("answer", "");
    r.correct = j.at("correct").get<bool>();
    r.wall_seconds = j.value("wall_seconds", 0.0);
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::kDataError, std::string("bad eval record: ") + e.what());
  }
}

Manifest run_train(const RunConfig& config) { return train_command(config); }
Manifest run_eval(const RunConfig& config) { return eval_command(config); }

Manifest run_oracle(const RunConfig& config, const std::string& sub) {
  if (sub == "enrichment") return enrichment_command(config);
  if (sub == "transform") return transform_command(config);
  fail(ErrorKind::kConfigError, "unknown oracle experiment '" + sub + "' (enrichment, transform)");
}

Manifest run_analyze(const RunConfig& config, const std::string& sub) {
  if (sub == "rank") return rank_command(config);
  if (sub == "gates") return gates_command(config);
  if (sub == "progressive") return progressive_command(config);
  if (sub == "venn") return venn_command(config);
  fail(ErrorKind::kConfigError, "unknown analysis '" + sub + "' (rank, gates, progressive, venn)");
}

Manifest run_command(const RunConfig& config, const std::string& command, const std::string& sub) {
  if (command == "train") return run_train(config);
  if (command == "eval") return run_eval(config);
  if (command == "oracle") return run_oracle(config, sub);
  if (command == "analyze") return run_analyze(config, sub);
  fail(ErrorKind::kConfigError, "unknown command '" + command + "'");
}

std::string toy_mcq_jsonl(int count, uint64_t seed, const std::string& id_prefix) {
  require(count >= 0, ErrorKind::kInvalidInput, "count must be non-negative");
  Rng rng(seed);
  std::string out;
  for (int i = 0; i < count; ++i) {
    const CommRequest r = random_toy_request(rng);
    const json j = {{"id", id_prefix + std::to_string(i)},
                    {"question", r.question},
                    {"choices", r.choices},
                    {"answer", std::string(1, option_letter(static_cast<int>(rng.below(r.choices.size()))))},
                    {"subject", "toy facts"}};
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace c2c
