#include "c2c/oracle_lab.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "c2c/error.hpp"
#include "c2c/rng.hpp"
#include "c2c/trainer.hpp"

namespace c2c {

std::string to_string(EnrichmentMode m) {
  switch (m) {
    case EnrichmentMode::kDirect: return "direct";
    case EnrichmentMode::kFewShot: return "few_shot";
    case EnrichmentMode::kOracle: return "oracle";
  }
  return "unknown";
}

std::optional<EnrichmentMode> parse_enrichment_mode(const std::string& name) {
  for (auto m : {EnrichmentMode::kDirect, EnrichmentMode::kFewShot, EnrichmentMode::kOracle})
    if (to_string(m) == name) return m;
  return std::nullopt;
}

void EnrichmentSpec::validate(int num_layers) const {
  require(!question_tokens.empty(), ErrorKind::kInvalidInput, "enrichment needs question tokens");
  if (mode != EnrichmentMode::kDirect)
    require(!exemplar_tokens.empty(), ErrorKind::kInvalidInput, to_string(mode) + " mode needs at least one exemplar token");
  if (layer_subset) {
    require(mode != EnrichmentMode::kFewShot, ErrorKind::kInvalidInput,
            "few_shot caches are longer than the question, so layers cannot be mixed with direct ones");
    for (int l : *layer_subset)
      require(l >= 0 && l < num_layers, ErrorKind::kInvalidInput, "layer_subset entry " + std::to_string(l) + " out of range");
  }
}

std::vector<int> enrichment_prompt(const EnrichmentSpec& spec) {
  if (spec.mode != EnrichmentMode::kFewShot) return spec.question_tokens;
  std::vector<int> out = spec.exemplar_tokens;
  out.insert(out.end(), spec.question_tokens.begin(), spec.question_tokens.end());
  return out;
}

template <typename T>
KVCache<T> replace_layers(const KVCache<T>& base, const KVCache<T>& enriched, const std::vector<int>& layers) {
  require(base.same_shape(enriched), ErrorKind::kCacheMismatch, "layer replacement needs shape-identical caches");
  KVCache<T> out = base;
  for (int l : layers) {
    require(l >= 0 && l < base.num_layers(), ErrorKind::kInvalidInput, "layer index out of range");
    out.layer(l) = enriched.layer(l);
  }
  return out;
}

template <typename T>
KVCache<T> build_enriched_cache(const EnrichmentSpec& spec, const ToyModel<T>& model) {
  spec.validate(model.config().num_layers);
  if (spec.mode == EnrichmentMode::kDirect) return model.prefill(spec.question_tokens).cache;
  std::vector<int> joined = spec.exemplar_tokens;
  joined.insert(joined.end(), spec.question_tokens.begin(), spec.question_tokens.end());
  KVCache<T> full = model.prefill(joined).cache;
  if (spec.mode == EnrichmentMode::kFewShot) return full;
  const int e = static_cast<int>(spec.exemplar_tokens.size());
  KVCache<T> oracle = full.slice(e, e + static_cast<int>(spec.question_tokens.size()));
  if (!spec.layer_subset) return oracle;
  return replace_layers(model.prefill(spec.question_tokens).cache, oracle, *spec.layer_subset);
}

void EnrichmentDataset::validate() const {
  std::unordered_set<std::string> item_ids;
  std::set<std::vector<int>> questions;
  for (const auto& it : items) {
    item_ids.insert(it.id);
    questions.insert(it.question_tokens);
  }
  std::unordered_set<std::string> exemplar_ids;
  for (const auto& e : exemplars) {
    require(!item_ids.count(e.id), ErrorKind::kDataError, "exemplar " + e.id + " is also an evaluation item");
    require(!questions.count(e.tokens), ErrorKind::kDataError, "exemplar " + e.id + " repeats an evaluation question");
    exemplar_ids.insert(e.id);
  }
  for (const auto& it : items)
    for (const auto& s : it.shot_ids)
      require(exemplar_ids.count(s) > 0, ErrorKind::kDataError, "item " + it.id + " names unknown exemplar " + s);
}

std::vector<int> EnrichmentDataset::exemplar_tokens_for(const EnrichmentItem& item) const {
  std::vector<int> out;
  for (const auto& s : item.shot_ids) {
    const auto it = std::find_if(exemplars.begin(), exemplars.end(), [&](const Exemplar& e) { return e.id == s; });
    require(it != exemplars.end(), ErrorKind::kDataError, "unknown exemplar " + s);
    out.insert(out.end(), it->tokens.begin(), it->tokens.end());
  }
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

template <typename T>
bool first_token_correct(const ToyModel<T>& model, const EnrichmentSpec& spec, int answer) {
  const KVCache<T> cache = build_enriched_cache(spec, model);
  return model.generate(enrichment_prompt(spec), &cache, 1).front() == answer;
}

}  // namespace

std::string EnrichmentReport::mode_csv() const {
  std::string out = "mode,accuracy\n";
  for (const auto& [m, acc] : mode_accuracy) out += to_string(m) + "," + fmt(acc) + "\n";
  return out;
}

std::string EnrichmentReport::layer_csv() const {
  std::string out = "layer,accuracy,n,best_n,worst_n\n";
  for (size_t i = 0; i < layer_accuracy.size(); ++i)
    out += std::to_string(i) + "," + fmt(layer_accuracy[i]) + "," + std::to_string(i + 1) + "," +
           fmt(best_n_accuracy[i]) + "," + fmt(worst_n_accuracy[i]) + "\n";
  return out;
}

template <typename T>
EnrichmentReport run_enrichment_experiment(const EnrichmentDataset& dataset, const ToyModel<T>& model,
                                           const EnrichmentOptions& options) {
  dataset.validate();
  require(!dataset.items.empty(), ErrorKind::kInvalidInput, "enrichment experiment needs items");
  std::vector<EnrichmentSpec> base;
  for (const auto& it : dataset.items) base.push_back({dataset.exemplar_tokens_for(it), it.question_tokens, {}, {}});
  auto accuracy = [&](EnrichmentMode mode, const std::optional<std::vector<int>>& layers) {
    int correct = 0;
    for (size_t i = 0; i < base.size(); ++i) {
      EnrichmentSpec spec = base[i];
      spec.mode = mode;
      spec.layer_subset = layers;
      correct += first_token_correct(model, spec, dataset.items[i].answer_token);
    }
    return static_cast<double>(correct) / static_cast<double>(base.size());
  };

  EnrichmentReport report;
  for (auto mode : options.modes) report.mode_accuracy.emplace_back(mode, accuracy(mode, std::nullopt));
  if (!options.layer_sweep) return report;

  const int layers = model.config().num_layers;
  for (int l = 0; l < layers; ++l) report.layer_accuracy.push_back(accuracy(EnrichmentMode::kOracle, std::vector<int>{l}));
  report.layer_ranking.resize(layers);
  std::iota(report.layer_ranking.begin(), report.layer_ranking.end(), 0);
  std::stable_sort(report.layer_ranking.begin(), report.layer_ranking.end(),
                   [&](int a, int b) { return report.layer_accuracy[a] > report.layer_accuracy[b]; });
  for (int n = 1; n <= layers; ++n) {
    std::vector<int> best(report.layer_ranking.begin(), report.layer_ranking.begin() + n);
    std::vector<int> worst(report.layer_ranking.end() - n, report.layer_ranking.end());
    report.best_n_accuracy.push_back(accuracy(EnrichmentMode::kOracle, best));
    report.worst_n_accuracy.push_back(accuracy(EnrichmentMode::kOracle, worst));
  }
  return report;
}

// -- transformation -----------------------------------------------------------

void TransformDataset::validate() const {
  require(source.rows() >= 1, ErrorKind::kInvalidInput, "transform dataset is empty");
  require(source.rows() == target.rows(), ErrorKind::kInvalidInput, "source and target pair counts differ");
  require(source.cols() >= 1 && target.cols() >= 1, ErrorKind::kInvalidInput, "transform vectors are empty");
}

TransformDataset build_transform_dataset(const std::vector<std::vector<ChatMessage>>& prompts,
                                         const ToyModel<float>& sharer, const Tokenizer& sharer_tokenizer,
                                         const ToyModel<float>& receiver, const Tokenizer& receiver_tokenizer,
                                         const LayerMap& layer_map, int receiver_layer) {
  require(layer_map.num_receiver_layers() == receiver.config().num_layers, ErrorKind::kInvalidInput,
          "layer map does not match the receiver");
  require(receiver_layer >= 0 && receiver_layer < layer_map.num_receiver_layers(), ErrorKind::kInvalidInput,
          "receiver layer out of range");
  const int shr_layer = layer_map.entries[receiver_layer];
  require(shr_layer >= 0, ErrorKind::kInvalidInput, "receiver layer has no sharer partner");
  const int ds = 2 * sharer.config().model_dim();
  const int dt = 2 * receiver.config().model_dim();
  std::vector<double> src, tgt;
  for (const auto& msgs : prompts) {
    const auto alignment = align_tokens(section_chat(msgs, receiver_tokenizer, sharer_tokenizer),
                                        TokenStrategy::kMaximalCoverage);
    const auto rc = receiver.prefill(alignment.receiver_tokens).cache;
    const auto sc = sharer.prefill(alignment.sharer_tokens).cache;
    const auto& rl = rc.layer(receiver_layer);
    const auto& sl = sc.layer(shr_layer);
    for (const auto& span : alignment.spans) {
      if (span.kind != SectionKind::kMessage) continue;
      for (int p = span.receiver_begin; p < span.receiver_begin + span.receiver_len; ++p) {
        const int q = alignment.map[p];
        if (q < 0) continue;
        for (float v : sl.keys.row(q)) src.push_back(v);
        for (float v : sl.values.row(q)) src.push_back(v);
        for (float v : rl.keys.row(p)) tgt.push_back(v);
        for (float v : rl.values.row(p)) tgt.push_back(v);
      }
    }
  }
  const int n = static_cast<int>(src.size() / ds);
  return {Matrix<double>(n, ds, std::move(src)), Matrix<double>(n, dt, std::move(tgt))};
}

namespace {

ag::Var mlp_forward(ag::Tape<double>& tape, const std::vector<ag::Var>& p, ag::Var x) {
  x = ag::gelu(tape, ag::linear(tape, x, p[0], p[1]));
  x = ag::gelu(tape, ag::linear(tape, x, p[2], p[3]));
  return ag::linear(tape, x, p[4], p[5]);
}

std::vector<Matrix<double>*> mlp_tensors(TransformMlp& m) { return {&m.w1, &m.b1, &m.w2, &m.b2, &m.w3, &m.b3}; }

std::vector<const Matrix<double>*> mlp_tensors(const TransformMlp& m) {
  return {&m.w1, &m.b1, &m.w2, &m.b2, &m.w3, &m.b3};
}

}  // namespace

Matrix<double> TransformMlp::apply(const Matrix<double>& x) const {
  require(x.cols() == source_dim(), ErrorKind::kInvalidInput, "input width does not match the transform");
  ag::Tape<double> tape;
  std::vector<ag::Var> p;
  for (const auto* m : mlp_tensors(*this)) p.push_back(tape.constant(*m));
  return tape.value(mlp_forward(tape, p, tape.constant(x)));
}

TransformResult train_transform_mlp(const TransformDataset& data, const TransformConfig& config) {
  data.validate();
  require(config.steps >= 1 && config.batch >= 1 && config.lr > 0.0 && config.hidden_multiplier >= 1,
          ErrorKind::kInvalidInput, "transform config needs positive steps, batch, lr and width");
  const int ds = data.source.cols(), dt = data.target.cols(), h = config.hidden_multiplier * ds;
  Rng rng(config.seed);
  auto init = [&](int rows, int cols) {
    Matrix<double> m(rows, cols);
    const double s = 1.0 / std::sqrt(static_cast<double>(cols));
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * s;
    return m;
  };
  TransformResult result;
  TransformMlp& mlp = result.mlp;
  mlp.w1 = init(h, ds);
  mlp.b1 = Matrix<double>(1, h);
  mlp.w2 = init(h, h);
  mlp.b2 = Matrix<double>(1, h);
  mlp.w3 = init(dt, h);
  mlp.b3 = Matrix<double>(1, dt);

  AdamW<double> opt;
  const int n = data.source.rows();
  const int batch = std::min(config.batch, n);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  int cursor = n;
  for (int step = 0; step < config.steps; ++step) {
    Matrix<double> xb(batch, ds), yb(batch, dt);
    for (int b = 0; b < batch; ++b) {
      if (cursor == n) {
        rng.shuffle(order);
        cursor = 0;
      }
      const int row = order[cursor++];
      std::copy(data.source.row(row).begin(), data.source.row(row).end(), xb.row(b).begin());
      std::copy(data.target.row(row).begin(), data.target.row(row).end(), yb.row(b).begin());
    }
    std::vector<Matrix<double>> grads;
    for (const auto* m : mlp_tensors(std::as_const(mlp))) grads.emplace_back(m->rows(), m->cols());
    ag::Tape<double> tape;
    std::vector<ag::Var> p;
    auto tensors = mlp_tensors(mlp);
    for (size_t i = 0; i < tensors.size(); ++i) p.push_back(tape.param(*tensors[i], &grads[i]));
    const ag::Var loss = ag::mse(tape, mlp_forward(tape, p, tape.constant(xb)), yb);
    result.losses.push_back(tape.value(loss)(0, 0));
    require(std::isfinite(result.losses.back()), ErrorKind::kNumericalError, "non-finite transform loss");
    tape.backward(loss);
    std::vector<const Matrix<double>*> gviews;
    for (const auto& g : grads) gviews.push_back(&g);
    opt.step(tensors, gviews, std::vector<bool>(tensors.size(), false), config.lr, 0.0);
  }
  return result;
}

double transform_mse(const TransformMlp& mlp, const TransformDataset& data) {
  data.validate();
  require(data.target.cols() == mlp.target_dim(), ErrorKind::kInvalidInput, "target width does not match the transform");
  const Matrix<double> pred = mlp.apply(data.source);
  double sq = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) sq += std::pow(pred.data()[i] - data.target.data()[i], 2);
  return sq / static_cast<double>(pred.size());
}

// -- export -------------------------------------------------------------------

std::optional<Projector> parse_projector(const std::string& name) {
  if (name == "raw") return Projector::kRaw;
  if (name == "pca2d") return Projector::kPca2d;
  return std::nullopt;
}

std::string export_embeddings(const std::vector<LabeledVectors>& sets, Projector projector) {
  require(!sets.empty(), ErrorKind::kInvalidInput, "no point sets to export");
  const int dim = sets.front().vectors.cols();
  int total = 0;
  for (const auto& s : sets) {
    require(s.vectors.rows() >= 1, ErrorKind::kInvalidInput, "point set " + s.label + " is empty");
    require(s.vectors.cols() == dim, ErrorKind::kInvalidInput, "point sets disagree on dimension");
    total += s.vectors.rows();
  }
  std::string out;
  if (projector == Projector::kRaw) {
    out = "label";
    for (int d = 0; d < dim; ++d) out += ",v" + std::to_string(d);
    out += "\n";
    for (const auto& s : sets)
      for (int r = 0; r < s.vectors.rows(); ++r) {
        out += csv_field(s.label);
        for (double v : s.vectors.row(r)) out += "," + fmt(v);
        out += "\n";
      }
    return out;
  }
  require(total >= 2, ErrorKind::kInvalidInput, "pca2d needs at least two points");
  Eigen::MatrixXd x(total, dim);
  int row = 0;
  for (const auto& s : sets)
    for (int r = 0; r < s.vectors.rows(); ++r, ++row)
      for (int c = 0; c < dim; ++c) x(row, c) = s.vectors(r, c);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(total - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues ascend; take the last two.
  Eigen::MatrixXd comps = Eigen::MatrixXd::Zero(dim, 2);
  for (int k = 0; k < std::min(2, dim); ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(dim - 1 - k);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
      if (std::abs(v(i)) > std::abs(v(arg)) + 1e-12) arg = i;
    if (v(arg) < 0) v = -v;
    comps.col(k) = v;
  }
  const Eigen::MatrixXd proj = x * comps;
  out = "label,x,y\n";
  row = 0;
  for (const auto& s : sets)
    for (int r = 0; r < s.vectors.rows(); ++r, ++row)
      out += csv_field(s.label) + "," + fmt(proj(row, 0)) + "," + fmt(proj(row, 1)) + "\n";
  return out;
}

#define C2C_INSTANTIATE_ORACLE(T)                                                                               \
  template KVCache<T> build_enriched_cache<T>(const EnrichmentSpec&, const ToyModel<T>&);                      \
  template KVCache<T> replace_layers<T>(const KVCache<T>&, const KVCache<T>&, const std::vector<int>&);         \
  template EnrichmentReport run_enrichment_experiment<T>(const EnrichmentDataset&, const ToyModel<T>&,         \
                                                         const EnrichmentOptions&);

C2C_INSTANTIATE_ORACLE(float)
C2C_INSTANTIATE_ORACLE(double)

}  // namespace c2c
