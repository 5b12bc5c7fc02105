#include "c2c/alignment.hpp"

#include <algorithm>
#include <cstdlib>

#include "c2c/error.hpp"

namespace c2c {

int LayerMap::num_aligned() const noexcept {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(), [](int e) { return e >= 0; }));
}

LayerMap terminal_layer_map(int recv_layers, int shr_layers) {
  require(recv_layers >= 1 && shr_layers >= 1, ErrorKind::kInvalidInput, "layer counts must be >= 1");
  LayerMap m;
  m.strategy = LayerStrategy::kTerminal;
  m.entries.resize(recv_layers);
  const int offset = shr_layers - recv_layers;
  for (int n = 0; n < recv_layers; ++n) m.entries[n] = n + offset >= 0 ? n + offset : kUnaligned;
  return m;
}

namespace {

// argmin_j |i/(a_depth-1) - j/(b_depth-1)| over j in [0, b_depth), compared
// exactly as |i*(b_depth-1) - j*(a_depth-1)|.
int nearest_normalized(int i, int a_depth, int b_depth) {
  int best = 0;
  long long best_dist = -1;
  for (int j = 0; j < b_depth; ++j) {
    const long long dist = std::llabs(static_cast<long long>(i) * (b_depth - 1) -
                                      static_cast<long long>(j) * (a_depth - 1));
    if (best_dist < 0 || dist < best_dist) {
      best = j;
      best_dist = dist;
    }
  }
  return best;
}

}  // namespace

LayerMap depth_normalized_layer_map(int recv_layers, int shr_layers) {
  require(recv_layers >= 2 && shr_layers >= 2, ErrorKind::kInvalidInput,
          "depth-normalized alignment needs at least two layers on each side");
  LayerMap m;
  m.strategy = LayerStrategy::kDepthNormalized;
  if (recv_layers <= shr_layers) {
    for (int n = 0; n < recv_layers; ++n) m.entries.push_back(nearest_normalized(n, recv_layers, shr_layers));
  } else {
    m.entries.assign(recv_layers, kUnaligned);
    for (int s = 0; s < shr_layers; ++s) m.entries[nearest_normalized(s, shr_layers, recv_layers)] = s;
  }
  return m;
}

std::vector<int> SectionedPrompt::receiver_tokens() const {
  std::vector<int> out;
  for (const auto& s : sections) out.insert(out.end(), s.receiver_tokens.begin(), s.receiver_tokens.end());
  return out;
}

SectionedPrompt section_chat(const std::vector<ChatMessage>& messages, const Tokenizer& receiver,
                             const Tokenizer& sharer) {
  require(!messages.empty(), ErrorKind::kTemplateError, "cannot section an empty message list");
  const auto r = receiver.apply_chat_template(messages);
  const auto s = sharer.apply_chat_template(messages);
  auto count_messages = [](const std::vector<ChatSection>& v) {
    return std::count_if(v.begin(), v.end(), [](const ChatSection& c) { return c.kind == SectionKind::kMessage; });
  };
  require(r.size() == s.size() && count_messages(r) == count_messages(s), ErrorKind::kTemplateError,
          "chat templates disagree on the number of message sections");
  SectionedPrompt out;
  out.receiver = &receiver;
  out.sharer = &sharer;
  for (size_t i = 0; i < r.size(); ++i) {
    require(r[i].kind == s[i].kind, ErrorKind::kTemplateError, "chat templates disagree on section order");
    if (r[i].kind == SectionKind::kMessage)
      require(r[i].text == s[i].text, ErrorKind::kTemplateError, "message text differs between templates");
    out.sections.push_back({r[i].kind, r[i].tokens, s[i].tokens});
  }
  return out;
}

int TokenAlignment::num_aligned() const noexcept {
  return static_cast<int>(std::count_if(map.begin(), map.end(), [](int e) { return e >= 0; }));
}

TokenAlignment align_tokens(const SectionedPrompt& prompt, TokenStrategy strategy) {
  require(prompt.receiver && prompt.sharer, ErrorKind::kInvalidInput, "sectioned prompt lacks tokenizers");
  const Tokenizer& recv = *prompt.receiver;
  const Tokenizer& shr = *prompt.sharer;
  TokenAlignment out;
  out.strategy = strategy;
  for (const auto& sec : prompt.sections) {
    SectionSpan span;
    span.kind = sec.kind;
    span.receiver_begin = out.receiver_len();
    span.sharer_begin = out.sharer_len();
    span.receiver_len = static_cast<int>(sec.receiver_tokens.size());
    if (sec.kind == SectionKind::kTemplate) {
      // Right-pad the shorter side; positions facing a pad stay unaligned.
      const int r_len = span.receiver_len;
      const int s_len = static_cast<int>(sec.sharer_tokens.size());
      for (int i = 0; i < r_len; ++i) out.map.push_back(i < s_len ? span.sharer_begin + i : kUnaligned);
      out.sharer_tokens.insert(out.sharer_tokens.end(), sec.sharer_tokens.begin(), sec.sharer_tokens.end());
      span.sharer_len = s_len;
      span.padded_len = std::max(r_len, s_len);
    } else {
      for (int tok : sec.receiver_tokens) {
        int chosen = kUnaligned;
        if (recv.is_special(tok)) {
          chosen = shr.find(recv.token_str(tok)).value_or(shr.unk_id());
        } else {
          const auto candidates = shr.encode(recv.token_text(tok));
          if (!candidates.empty()) {
            chosen = candidates.front();
            if (strategy == TokenStrategy::kMaximalCoverage) {
              size_t best_len = shr.token_text(chosen).size();
              for (int c : candidates) {
                const size_t len = shr.token_text(c).size();
                if (len > best_len) {
                  chosen = c;
                  best_len = len;
                }
              }
            }
          }
        }
        if (chosen == kUnaligned) {
          out.map.push_back(kUnaligned);
        } else {
          out.map.push_back(out.sharer_len());
          out.sharer_tokens.push_back(chosen);
        }
      }
      span.sharer_len = out.sharer_len() - span.sharer_begin;
      span.padded_len = span.receiver_len;
    }
    out.receiver_tokens.insert(out.receiver_tokens.end(), sec.receiver_tokens.begin(), sec.receiver_tokens.end());
    out.spans.push_back(span);
  }
  return out;
}

TokenAlignment identity_alignment(const std::vector<int>& tokens) {
  TokenAlignment out;
  out.receiver_tokens = tokens;
  out.sharer_tokens = tokens;
  out.map.resize(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) out.map[i] = static_cast<int>(i);
  out.spans.push_back({SectionKind::kMessage, 0, static_cast<int>(tokens.size()), 0,
                       static_cast<int>(tokens.size()), static_cast<int>(tokens.size())});
  return out;
}

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '\n') out += "\\n";
    else if (c == '\t') out += "\\t";
    else if (c == '\\') out += "\\\\";
    else out += c;
  }
  return out;
}

}  // namespace

std::string alignment_dump(const TokenAlignment& a, const Tokenizer& receiver, const Tokenizer& sharer) {
  std::string out;
  for (int p = 0; p < a.receiver_len(); ++p) {
    out += std::to_string(p) + "\t" + escape(receiver.token_str(a.receiver_tokens[p])) + "\t";
    const int q = a.map[p];
    if (q == kUnaligned) out += "UNALIGNED\t";
    else out += std::to_string(q) + "\t" + escape(sharer.token_str(a.sharer_tokens[q]));
    out += "\n";
  }
  return out;
}

std::string to_string(LayerStrategy s) {
  return s == LayerStrategy::kTerminal ? "terminal" : "depth_normalized";
}

std::string to_string(TokenStrategy s) {
  return s == TokenStrategy::kFirstOccurrence ? "first_occurrence" : "maximal_coverage";
}

}  // namespace c2c
