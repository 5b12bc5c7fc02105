#include "c2c/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "c2c/error.hpp"
#include "json.hpp"

namespace c2c {

namespace {

constexpr char kToyMagic[] = "C2CTOY1";
constexpr char kFuserMagic[] = "C2CFUS1";

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    require(out_.good(), ErrorKind::kConfigError, "cannot open " + path + " for writing");
  }
  void bytes(const void* p, size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  template <typename U>
  void le(U value) {
    unsigned char b[sizeof(U)];
    std::memcpy(b, &value, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
    bytes(b, sizeof(U));
  }
  void i32(int v) { le<int32_t>(v); }
  void str(const std::string& s) {
    le<uint32_t>(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const Matrix<float>& m) {
    i32(m.rows());
    i32(m.cols());
    for (size_t i = 0; i < m.size(); ++i) le<float>(m.data()[i]);
  }
  void finish() {
    out_.flush();
    require(out_.good(), ErrorKind::kConfigError, "write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    require(in_.good(), ErrorKind::kConfigError, "cannot open checkpoint " + path);
  }
  void bytes(void* p, size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    require(static_cast<size_t>(in_.gcount()) == n, ErrorKind::kDataError, "truncated checkpoint " + path_);
  }
  template <typename U>
  U le() {
    unsigned char b[sizeof(U)];
    bytes(b, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
    U v;
    std::memcpy(&v, b, sizeof(U));
    return v;
  }
  int i32() { return le<int32_t>(); }
  std::string str() {
    const uint32_t n = le<uint32_t>();
    require(n < (1u << 20), ErrorKind::kDataError, "corrupt string in " + path_);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void magic(const char* expect) {
    char got[7];
    bytes(got, 7);
    require(std::memcmp(got, expect, 7) == 0, ErrorKind::kDataError,
            path_ + " is not a " + std::string(expect) + " file");
  }
  void tensor_into(Matrix<float>& m, const std::string& name) {
    const int rows = i32();
    const int cols = i32();
    require(rows == m.rows() && cols == m.cols(), ErrorKind::kDataError, "tensor " + name + " has the wrong shape");
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = le<float>();
  }
  void expect_end() {
    in_.peek();
    require(in_.eof(), ErrorKind::kDataError, "trailing bytes in " + path_);
  }

 private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace

void save_toy_model(const std::string& path, const ToyModel<float>& model) {
  Writer w(path);
  w.bytes(kToyMagic, 7);
  const auto& c = model.config();
  w.i32(c.num_layers);
  w.i32(c.kv_heads);
  w.i32(c.head_dim);
  w.i32(c.vocab_size);
  w.i32(c.hidden_dim);
  w.le<uint64_t>(c.seed);
  w.str(model.tokenizer_id());
  for (const auto& [name, m] : model.weights().named()) w.tensor(*m);
  w.finish();
}

ToyModel<float> load_toy_model(const std::string& path) {
  Reader r(path);
  r.magic(kToyMagic);
  ToyModelConfig c;
  c.num_layers = r.i32();
  c.kv_heads = r.i32();
  c.head_dim = r.i32();
  c.vocab_size = r.i32();
  c.hidden_dim = r.i32();
  c.seed = r.le<uint64_t>();
  c.validate();
  const std::string tokenizer_id = r.str();
  ToyWeights<float> weights = ToyWeights<float>::zeros_like(c);
  for (auto& [name, m] : weights.named()) r.tensor_into(*m, name);
  r.expect_end();
  ToyModel<float> model(c, std::move(weights));
  model.set_tokenizer_id(tokenizer_id);
  return model;
}

std::string fuser_config_json(const FuserConfig& c) {
  nlohmann::ordered_json j;
  j["layer_map"] = c.layer_map.entries;
  j["layer_strategy"] = to_string(c.layer_map.strategy);
  j["recv_kv_heads"] = c.recv_kv_heads;
  j["recv_kv_dim"] = c.recv_kv_dim;
  j["shr_kv_dim"] = c.shr_kv_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["variant"] = to_string(c.variant);
  j["gate_threshold"] = c.gate_threshold;
  return j.dump();
}

void save_fuser(const std::string& path, const FuserParams<float>& params, const FuserMetadata& meta) {
  const FuserConfig& c = params.config;
  {
    Writer w(path);
    w.bytes(kFuserMagic, 7);
    w.i32(c.layer_map.num_receiver_layers());
    for (int e : c.layer_map.entries) w.i32(e);
    w.i32(c.layer_map.strategy == LayerStrategy::kTerminal ? 0 : 1);
    w.i32(c.recv_kv_heads);
    w.i32(c.recv_kv_dim);
    w.i32(c.shr_kv_dim);
    w.i32(c.hidden_dim);
    w.i32(c.variant == FuserVariant::kStandard ? 0 : 1);
    w.le<double>(c.gate_threshold);
    const auto named = params.named();
    w.i32(static_cast<int>(named.size()));
    for (const auto& [name, m] : named) {
      w.str(name);
      w.tensor(*m);
    }
    w.finish();
  }
  nlohmann::ordered_json j;
  j["format"] = kFuserMagic;
  j["config"] = nlohmann::ordered_json::parse(fuser_config_json(c));
  j["seed"] = meta.seed;
  j["steps"] = meta.steps;
  j["final_temperature"] = meta.final_temperature;
  std::ofstream side(path + ".json");
  require(side.good(), ErrorKind::kConfigError, "cannot write sidecar for " + path);
  side << j.dump(2) << "\n";
}

FuserParams<float> load_fuser(const std::string& path, FuserMetadata* meta) {
  Reader r(path);
  r.magic(kFuserMagic);
  FuserConfig c;
  const int layers = r.i32();
  require(layers >= 1 && layers < 4096, ErrorKind::kDataError, "corrupt layer map in " + path);
  for (int i = 0; i < layers; ++i) c.layer_map.entries.push_back(r.i32());
  c.layer_map.strategy = r.i32() == 0 ? LayerStrategy::kTerminal : LayerStrategy::kDepthNormalized;
  c.recv_kv_heads = r.i32();
  c.recv_kv_dim = r.i32();
  c.shr_kv_dim = r.i32();
  c.hidden_dim = r.i32();
  c.variant = r.i32() == 0 ? FuserVariant::kStandard : FuserVariant::kSharerMlp;
  c.gate_threshold = r.le<double>();
  FuserParams<float> p = FuserParams<float>::zeros_like(c);
  auto named = p.named();
  require(r.i32() == static_cast<int>(named.size()), ErrorKind::kDataError, "tensor count mismatch in " + path);
  for (auto& [name, m] : named) {
    require(r.str() == name, ErrorKind::kDataError, "unexpected tensor order in " + path);
    r.tensor_into(*m, name);
  }
  r.expect_end();
  if (meta) {
    std::ifstream side(path + ".json");
    if (side.good()) {
      const auto j = nlohmann::json::parse(side);
      meta->seed = j.value("seed", uint64_t{0});
      meta->steps = j.value("steps", 0);
      meta->final_temperature = j.value("final_temperature", 1.0);
    }
  }
  return p;
}

}  // namespace c2c
