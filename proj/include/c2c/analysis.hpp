#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "c2c/fuser.hpp"
#include "c2c/kv_cache.hpp"

namespace c2c {

// exp of the Shannon entropy (natural log) of the singular values normalized
// to sum to one. Throws InvalidInput for an empty or all-zero matrix.
double effective_rank(const Matrix<double>& w);

struct LayerRank {
  double key = 0.0;
  double value = 0.0;
};

struct RoleRanks {
  std::vector<LayerRank> layers;  // averaged over the caches given
  double mean_key = 0.0;
  double mean_value = 0.0;
};

struct RankReport {
  RoleRanks sharer, receiver, fused;

  std::string csv() const;  // role,layer,key,value with one "mean" row per role
};

// Effective rank of every layer's seq_len x kv_dim key and value matrices.
// Roles with no caches are left empty; all three empty is InvalidInput.
RoleRanks cache_ranks(const std::vector<KVCache<float>>& caches);
RankReport rank_report(const std::vector<KVCache<float>>& sharer, const std::vector<KVCache<float>>& receiver,
                       const std::vector<KVCache<float>>& fused);

struct GateReport {
  std::vector<int> receiver_layers;  // one entry per fused layer
  std::vector<int> open;  // hard-eval gate bit
  double activation_ratio = 0.0;  // open / fused layers
  std::vector<double> mean_key_weight;  // mean dynamic head weight over the probe traces
  std::vector<double> mean_value_weight;

  std::string csv() const;
};

// `probe` holds hard-eval traces from fusing a probe batch; without it the
// head-weight columns are empty.
GateReport gate_report(const FuserParams<float>& params, const std::vector<FuseTrace>& probe = {});

enum class ReplaceDirection { kFormer, kLatter };

std::optional<ReplaceDirection> parse_direction(const std::string& name);

// The first (former) or last (latter) floor(fraction * seq_len) positions of
// every layer come from `fused`, the rest from `recv`.
template <typename T>
KVCache<T> progressive_replace(const KVCache<T>& recv, const KVCache<T>& fused, double fraction,
                               ReplaceDirection direction);

struct EvalRecord {
  std::string id;
  std::string method;
  std::string response;
  std::string predicted;  // option letter or "NONE"
  std::string answer;
  bool correct = false;
  double wall_seconds = 0.0;
};

// Regions of the sharer / receiver / c2c correctness sets. Region index bits:
// 1 sharer, 2 receiver, 4 c2c; region 0 is "nobody".
struct CorrectnessBreakdown {
  int total = 0;
  std::array<int, 8> regions{};
  int sharer_correct = 0;
  int receiver_correct = 0;
  int c2c_correct = 0;
  double c2c_given_sharer = 0.0;  // P(c2c correct | sharer correct), 0 when undefined
  double c2c_given_receiver = 0.0;
  double c2c_given_neither = 0.0;  // P(c2c correct | sharer and receiver both wrong)

  std::string csv() const;  // region,sharer,receiver,c2c,count
};

// Throws DataError unless all streams cover the same ids exactly once.
CorrectnessBreakdown correctness_breakdown(const std::vector<EvalRecord>& sharer,
                                           const std::vector<EvalRecord>& receiver,
                                           const std::vector<EvalRecord>& c2c);

}  // namespace c2c
