#pragma once

#include <string>
#include <vector>

#include "c2c/tokenizer.hpp"

namespace c2c {

inline constexpr int kUnaligned = -1;

enum class LayerStrategy { kTerminal, kDepthNormalized };

// entries[n] is the sharer layer feeding receiver layer n, or kUnaligned.
struct LayerMap {
  std::vector<int> entries;
  LayerStrategy strategy = LayerStrategy::kTerminal;

  int num_receiver_layers() const noexcept { return static_cast<int>(entries.size()); }
  int num_aligned() const noexcept;
  friend bool operator==(const LayerMap&, const LayerMap&) = default;
};

// Pairs the last layers first and walks backwards until the shallower model
// runs out of layers.
LayerMap terminal_layer_map(int recv_layers, int shr_layers);

// Maps every layer of the shallower model to the deeper-model layer at the
// nearest normalized depth, ties to the smaller index. Both depths must be
// >= 2.
LayerMap depth_normalized_layer_map(int recv_layers, int shr_layers);

struct PromptSection {
  SectionKind kind = SectionKind::kTemplate;
  std::vector<int> receiver_tokens;
  std::vector<int> sharer_tokens;
};

struct SectionedPrompt {
  std::vector<PromptSection> sections;
  const Tokenizer* receiver = nullptr;
  const Tokenizer* sharer = nullptr;

  std::vector<int> receiver_tokens() const;
};

SectionedPrompt section_chat(const std::vector<ChatMessage>& messages, const Tokenizer& receiver,
                             const Tokenizer& sharer);

enum class TokenStrategy { kFirstOccurrence, kMaximalCoverage };

struct SectionSpan {
  SectionKind kind = SectionKind::kTemplate;
  int receiver_begin = 0;
  int receiver_len = 0;
  int sharer_begin = 0;
  int sharer_len = 0;
  int padded_len = 0;  // template sections: max of the two lengths
};

// Receiver position -> position in the sharer frame. The sharer frame is what
// the sharer prefills: its own template tokens (pads are never materialized)
// and, inside messages, one re-encoded sharer token per aligned receiver token.
struct TokenAlignment {
  std::vector<int> map;
  std::vector<int> receiver_tokens;
  std::vector<int> sharer_tokens;
  std::vector<SectionSpan> spans;
  TokenStrategy strategy = TokenStrategy::kMaximalCoverage;

  int receiver_len() const noexcept { return static_cast<int>(map.size()); }
  int sharer_len() const noexcept { return static_cast<int>(sharer_tokens.size()); }
  int num_aligned() const noexcept;
};

TokenAlignment align_tokens(const SectionedPrompt& prompt, TokenStrategy strategy);

// Same-tokenizer, same-sequence alignment.
TokenAlignment identity_alignment(const std::vector<int>& tokens);

// One line per receiver position:
// recv_pos TAB recv_token TAB shr_pos|UNALIGNED TAB shr_token
std::string alignment_dump(const TokenAlignment& alignment, const Tokenizer& receiver,
                           const Tokenizer& sharer);

std::string to_string(LayerStrategy s);
std::string to_string(TokenStrategy s);

}  // namespace c2c
