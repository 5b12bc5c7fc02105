#include "c2c/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "c2c/error.hpp"

namespace c2c {

double effective_rank(const Matrix<double>& w) {
  require(!w.empty(), ErrorKind::kInvalidInput, "effective rank of an empty matrix");
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(w.data(), w.rows(),
                                                                                             w.cols());
  const Eigen::VectorXd s = Eigen::BDCSVD<Eigen::MatrixXd>(m).singularValues();
  const double l1 = s.sum();
  require(l1 > 0.0, ErrorKind::kInvalidInput, "effective rank of an all-zero matrix");
  double h = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double p = s(i) / l1;
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::exp(h);
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

RoleRanks cache_ranks(const std::vector<KVCache<float>>& caches) {
  RoleRanks r;
  if (caches.empty()) return r;
  const int layers = caches.front().num_layers();
  r.layers.assign(layers, {});
  for (const auto& c : caches) {
    require(c.num_layers() == layers, ErrorKind::kCacheMismatch, "caches disagree on depth");
    require(c.seq_len() > 0, ErrorKind::kInvalidInput, "rank report of an empty cache");
    for (int l = 0; l < layers; ++l) {
      r.layers[l].key += effective_rank(c.layer(l).keys.cast<double>());
      r.layers[l].value += effective_rank(c.layer(l).values.cast<double>());
    }
  }
  for (auto& l : r.layers) {
    l.key /= static_cast<double>(caches.size());
    l.value /= static_cast<double>(caches.size());
    r.mean_key += l.key / layers;
    r.mean_value += l.value / layers;
  }
  return r;
}

RankReport rank_report(const std::vector<KVCache<float>>& sharer, const std::vector<KVCache<float>>& receiver,
                       const std::vector<KVCache<float>>& fused) {
  require(!sharer.empty() || !receiver.empty() || !fused.empty(), ErrorKind::kInvalidInput,
          "rank report needs at least one cache");
  return {cache_ranks(sharer), cache_ranks(receiver), cache_ranks(fused)};
}

std::string RankReport::csv() const {
  std::string out = "role,layer,key,value\n";
  auto role = [&](const char* name, const RoleRanks& r) {
    if (r.layers.empty()) return;
    for (size_t l = 0; l < r.layers.size(); ++l)
      out += std::string(name) + "," + std::to_string(l) + "," + fmt(r.layers[l].key) + "," + fmt(r.layers[l].value) + "\n";
    out += std::string(name) + ",mean," + fmt(r.mean_key) + "," + fmt(r.mean_value) + "\n";
  };
  role("sharer", sharer);
  role("receiver", receiver);
  role("fused", fused);
  return out;
}

GateReport gate_report(const FuserParams<float>& params, const std::vector<FuseTrace>& probe) {
  GateReport r;
  int open = 0;
  for (const auto& l : params.layers) {
    r.receiver_layers.push_back(l.recv_layer);
    const int bit = gumbel_sigmoid(l.gate_logit(0, 0), GateState{}, params.config.gate_threshold) > 0.5 ? 1 : 0;
    r.open.push_back(bit);
    open += bit;
  }
  r.activation_ratio = params.layers.empty() ? 0.0 : static_cast<double>(open) / params.layers.size();
  if (!probe.empty()) {
    r.mean_key_weight.assign(params.layers.size(), 0.0);
    r.mean_value_weight.assign(params.layers.size(), 0.0);
    for (const auto& t : probe) {
      require(t.key_head_weight.size() == params.layers.size() && t.value_head_weight.size() == params.layers.size(),
              ErrorKind::kInvalidInput, "probe trace does not match the fuser");
      for (size_t i = 0; i < params.layers.size(); ++i) {
        r.mean_key_weight[i] += t.key_head_weight[i] / probe.size();
        r.mean_value_weight[i] += t.value_head_weight[i] / probe.size();
      }
    }
  }
  return r;
}

std::string GateReport::csv() const {
  std::string out = "receiver_layer,open,mean_key_weight,mean_value_weight\n";
  for (size_t i = 0; i < open.size(); ++i) {
    out += std::to_string(receiver_layers[i]) + "," + std::to_string(open[i]) + ",";
    out += (mean_key_weight.empty() ? "" : fmt(mean_key_weight[i])) + ",";
    out += (mean_value_weight.empty() ? "" : fmt(mean_value_weight[i])) + "\n";
  }
  return out + "ratio," + fmt(activation_ratio) + ",,\n";
}

std::optional<ReplaceDirection> parse_direction(const std::string& name) {
  if (name == "former") return ReplaceDirection::kFormer;
  if (name == "latter") return ReplaceDirection::kLatter;
  return std::nullopt;
}

template <typename T>
KVCache<T> progressive_replace(const KVCache<T>& recv, const KVCache<T>& fused, double fraction,
                               ReplaceDirection direction) {
  require(recv.same_shape(fused), ErrorKind::kCacheMismatch, "progressive replacement needs shape-identical caches");
  require(fraction >= 0.0 && fraction <= 1.0, ErrorKind::kInvalidInput, "fraction must be in [0, 1]");
  const int seq = recv.seq_len();
  const int count = static_cast<int>(std::floor(fraction * seq));
  const int begin = direction == ReplaceDirection::kFormer ? 0 : seq - count;
  KVCache<T> out = recv;
  for (int l = 0; l < recv.num_layers(); ++l)
    for (int p = begin; p < begin + count; ++p) {
      auto fk = fused.layer(l).keys.row(p);
      auto fv = fused.layer(l).values.row(p);
      std::copy(fk.begin(), fk.end(), out.layer(l).keys.row(p).begin());
      std::copy(fv.begin(), fv.end(), out.layer(l).values.row(p).begin());
    }
  return out;
}

template KVCache<float> progressive_replace<float>(const KVCache<float>&, const KVCache<float>&, double,
                                                   ReplaceDirection);
template KVCache<double> progressive_replace<double>(const KVCache<double>&, const KVCache<double>&, double,
                                                     ReplaceDirection);

CorrectnessBreakdown correctness_breakdown(const std::vector<EvalRecord>& sharer,
                                           const std::vector<EvalRecord>& receiver,
                                           const std::vector<EvalRecord>& c2c) {
  auto index = [](const std::vector<EvalRecord>& v, const char* name) {
    std::map<std::string, bool> m;
    for (const auto& r : v)
      require(m.emplace(r.id, r.correct).second, ErrorKind::kDataError,
              std::string(name) + " stream repeats id " + r.id);
    return m;
  };
  const auto s = index(sharer, "sharer");
  const auto r = index(receiver, "receiver");
  const auto c = index(c2c, "c2c");
  require(s.size() == r.size() && s.size() == c.size(), ErrorKind::kDataError, "streams cover different id sets");
  CorrectnessBreakdown out;
  for (const auto& [id, sc] : s) {
    const auto ri = r.find(id);
    const auto ci = c.find(id);
    require(ri != r.end() && ci != c.end(), ErrorKind::kDataError, "id " + id + " is missing from a stream");
    ++out.regions[(sc ? 1 : 0) | (ri->second ? 2 : 0) | (ci->second ? 4 : 0)];
  }
  out.total = static_cast<int>(s.size());
  for (int reg = 0; reg < 8; ++reg) {
    if (reg & 1) out.sharer_correct += out.regions[reg];
    if (reg & 2) out.receiver_correct += out.regions[reg];
    if (reg & 4) out.c2c_correct += out.regions[reg];
  }
  auto ratio = [](int a, int b) { return b == 0 ? 0.0 : static_cast<double>(a) / b; };
  out.c2c_given_sharer = ratio(out.regions[5] + out.regions[7], out.sharer_correct);
  out.c2c_given_receiver = ratio(out.regions[6] + out.regions[7], out.receiver_correct);
  out.c2c_given_neither = ratio(out.regions[4], out.regions[0] + out.regions[4]);
  return out;
}

std::string CorrectnessBreakdown::csv() const {
  std::string out = "region,sharer,receiver,c2c,count\n";
  for (int reg = 0; reg < 8; ++reg)
    out += std::to_string(reg) + "," + std::to_string(reg & 1) + "," + std::to_string((reg >> 1) & 1) + "," +
           std::to_string((reg >> 2) & 1) + "," + std::to_string(regions[reg]) + "\n";
  return out;
}

}  // namespace c2c
