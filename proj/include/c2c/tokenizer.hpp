#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace c2c {

struct ChatMessage {
  std::string role;
  std::string content;
};

// Text wrapped around each message. "{role}" in message_prefix is replaced by
// the message role.
struct ChatTemplate {
  std::string preamble;
  std::string message_prefix = "<|im_start|>{role}\n";
  std::string message_suffix = "<|im_end|>\n";
  std::string generation_prompt = "<|im_start|>assistant\n";
};

enum class SectionKind { kTemplate, kMessage };

struct ChatSection {
  SectionKind kind = SectionKind::kTemplate;
  std::string text;
  std::vector<int> tokens;
};

struct TokenizerSpec {
  std::string id = "toy";
  // Added after the four reserved specials <pad> <unk> <bos> <eos>.
  std::vector<std::string> extra_specials = {"<|im_start|>", "<|im_end|>"};
  std::vector<std::string> pieces;
  bool byte_fallback = false;
  ChatTemplate chat;
};

// Greedy longest-match tokenizer over a fixed piece list. Special tokens are
// matched first wherever their literal text occurs. Bytes not covered by any
// piece become <0xNN> tokens with byte_fallback, otherwise <unk>.
class Tokenizer {
 public:
  explicit Tokenizer(TokenizerSpec spec);

  const std::string& id() const noexcept { return spec_.id; }
  int vocab_size() const noexcept { return static_cast<int>(strings_.size()); }
  int pad_id() const noexcept { return 0; }
  int unk_id() const noexcept { return 1; }
  int bos_id() const noexcept { return 2; }
  int eos_id() const noexcept { return 3; }
  const ChatTemplate& chat_template() const noexcept { return spec_.chat; }

  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& ids) const;
  // Literal text of one token (byte tokens decode to their byte).
  std::string token_text(int id) const;
  // Display form: the vocabulary entry, e.g. "<0x0A>" for a byte token.
  const std::string& token_str(int id) const;
  bool is_special(int id) const noexcept { return id >= 0 && id < num_specials_; }
  std::optional<int> find(std::string_view entry) const;

  // Template and message sections of a chat-formatted conversation, ending
  // with the generation prompt. Throws TemplateError for an empty list.
  std::vector<ChatSection> apply_chat_template(const std::vector<ChatMessage>& messages) const;
  std::vector<int> encode_chat(const std::vector<ChatMessage>& messages) const;
  std::string render_chat(const std::vector<ChatMessage>& messages) const;

 private:
  int add_entry(const std::string& s);

  TokenizerSpec spec_;
  std::vector<std::string> strings_;
  std::vector<std::string> texts_;
  std::unordered_map<std::string, int> by_string_;
  std::unordered_map<std::string, int> by_text_;  // non-special pieces only
  int num_specials_ = 0;
  int byte_base_ = -1;
  size_t max_piece_len_ = 0;
};

// Two distinct toy tokenizers over a shared word list, used by tests and demos.
// The receiver keeps whole words; the sharer splits most words into letters
// and letter pairs and uses a different chat template.
TokenizerSpec toy_receiver_tokenizer_spec(const std::vector<std::string>& words);
TokenizerSpec toy_sharer_tokenizer_spec(const std::vector<std::string>& words);

}  // namespace c2c
