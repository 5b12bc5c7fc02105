#include "c2c/tokenizer.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "c2c/error.hpp"

namespace c2c {

namespace {

std::string replace_role(std::string fmt, const std::string& role) {
  const std::string key = "{role}";
  for (size_t at = fmt.find(key); at != std::string::npos; at = fmt.find(key, at + role.size()))
    fmt.replace(at, key.size(), role);
  return fmt;
}

}  // namespace

Tokenizer::Tokenizer(TokenizerSpec spec) : spec_(std::move(spec)) {
  for (const char* s : {"<pad>", "<unk>", "<bos>", "<eos>"}) add_entry(s);
  for (const auto& s : spec_.extra_specials) {
    require(!s.empty() && !by_string_.count(s), ErrorKind::kInvalidInput,
            "special tokens must be unique and non-empty");
    add_entry(s);
  }
  num_specials_ = static_cast<int>(strings_.size());
  if (spec_.byte_fallback) {
    byte_base_ = num_specials_;
    for (int b = 0; b < 256; ++b) {
      char name[8];
      std::snprintf(name, sizeof name, "<0x%02X>", b);
      add_entry(name);
      texts_.back() = std::string(1, static_cast<char>(b));
    }
  }
  for (const auto& p : spec_.pieces) {
    require(!p.empty(), ErrorKind::kInvalidInput, "empty tokenizer piece");
    if (by_text_.count(p)) continue;
    by_text_[p] = add_entry(p);
    max_piece_len_ = std::max(max_piece_len_, p.size());
  }
}

int Tokenizer::add_entry(const std::string& s) {
  const int id = static_cast<int>(strings_.size());
  strings_.push_back(s);
  texts_.push_back(s);
  by_string_.emplace(s, id);
  return id;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> out;
  size_t i = 0;
  while (i < text.size()) {
    int best = -1;
    size_t best_len = 0;
    for (int s = 0; s < num_specials_; ++s) {
      const std::string& sp = strings_[s];
      if (sp.size() > best_len && text.compare(i, sp.size(), sp) == 0) {
        best = s;
        best_len = sp.size();
      }
    }
    if (best < 0) {
      for (size_t len = std::min(max_piece_len_, text.size() - i); len >= 1; --len) {
        auto it = by_text_.find(std::string(text.substr(i, len)));
        if (it != by_text_.end()) {
          best = it->second;
          best_len = len;
          break;
        }
      }
    }
    if (best < 0) {
      best = byte_base_ >= 0 ? byte_base_ + static_cast<unsigned char>(text[i]) : unk_id();
      best_len = 1;
    }
    out.push_back(best);
    i += best_len;
  }
  return out;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) out += token_text(id);
  return out;
}

std::string Tokenizer::token_text(int id) const {
  require(id >= 0 && id < vocab_size(), ErrorKind::kInvalidInput, "token id outside vocabulary");
  return texts_[id];
}

const std::string& Tokenizer::token_str(int id) const {
  require(id >= 0 && id < vocab_size(), ErrorKind::kInvalidInput, "token id outside vocabulary");
  return strings_[id];
}

std::optional<int> Tokenizer::find(std::string_view entry) const {
  auto it = by_string_.find(std::string(entry));
  if (it == by_string_.end()) return std::nullopt;
  return it->second;
}

std::vector<ChatSection> Tokenizer::apply_chat_template(const std::vector<ChatMessage>& messages) const {
  require(!messages.empty(), ErrorKind::kTemplateError, "chat template needs at least one message");
  const ChatTemplate& t = spec_.chat;
  std::vector<ChatSection> sections;
  std::string pending = t.preamble;
  for (const auto& m : messages) {
    pending += replace_role(t.message_prefix, m.role);
    sections.push_back({SectionKind::kTemplate, pending, encode(pending)});
    sections.push_back({SectionKind::kMessage, m.content, encode(m.content)});
    pending = t.message_suffix;
  }
  pending += t.generation_prompt;
  sections.push_back({SectionKind::kTemplate, pending, encode(pending)});
  return sections;
}

std::vector<int> Tokenizer::encode_chat(const std::vector<ChatMessage>& messages) const {
  std::vector<int> out;
  for (const auto& s : apply_chat_template(messages)) out.insert(out.end(), s.tokens.begin(), s.tokens.end());
  return out;
}

std::string Tokenizer::render_chat(const std::vector<ChatMessage>& messages) const {
  std::string out;
  for (const auto& s : apply_chat_template(messages)) out += s.text;
  return out;
}

namespace {

std::vector<std::string> base_characters() {
  std::vector<std::string> out;
  for (char c = 'a'; c <= 'z'; ++c) out.emplace_back(1, c);
  for (char c = 'A'; c <= 'Z'; ++c) out.emplace_back(1, c);
  for (char c = '0'; c <= '9'; ++c) out.emplace_back(1, c);
  for (char c : std::string(" \n.,:;?!'\"()-/")) out.emplace_back(1, c);
  return out;
}

}  // namespace

TokenizerSpec toy_receiver_tokenizer_spec(const std::vector<std::string>& words) {
  TokenizerSpec spec;
  spec.id = "toy-recv";
  spec.extra_specials = {"<|im_start|>", "<|im_end|>", "<redacted>"};
  spec.pieces = base_characters();
  for (const auto& w : words) {
    spec.pieces.push_back(w);
    spec.pieces.push_back(" " + w);
  }
  return spec;
}

TokenizerSpec toy_sharer_tokenizer_spec(const std::vector<std::string>& words) {
  TokenizerSpec spec;
  spec.id = "toy-shr";
  spec.extra_specials = {"<|start|>", "<|end|>", "<redacted>"};
  spec.chat.preamble = "<bos>";
  spec.chat.message_prefix = "<|start|>{role}\n\n";
  spec.chat.message_suffix = "<|end|>";
  spec.chat.generation_prompt = "<|start|>assistant\n\n";
  spec.pieces = base_characters();
  std::set<std::string> extra;
  for (size_t i = 0; i < words.size(); ++i) {
    const std::string& w = words[i];
    if (i % 3 == 0) extra.insert(" " + w);
    extra.insert(" " + w.substr(0, 2));
    for (size_t k = 0; k + 2 <= w.size(); k += 2) extra.insert(w.substr(k, 2));
  }
  spec.pieces.insert(spec.pieces.end(), extra.begin(), extra.end());
  return spec;
}

}  // namespace c2c
