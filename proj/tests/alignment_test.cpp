#include <gtest/gtest.h>

#include <cmath>

#include "c2c/alignment.hpp"
#include "c2c/error.hpp"
#include "c2c/rng.hpp"

namespace c2c {
namespace {

const std::vector<std::string> kWords = {"hello", "world", "cache", "model", "answer", "river",
                                         "stone", "light", "paper", "green", "quick", "fusion"};

// Exhaustive search using floating point with an explicit tie window, kept
// deliberately different from the integer comparison in the library.
int brute_nearest(int i, int a, int b) {
  int best = 0;
  double best_d = 1e300;
  for (int j = 0; j < b; ++j) {
    const double d = std::abs(static_cast<double>(i) / (a - 1) - static_cast<double>(j) / (b - 1));
    if (d < best_d - 1e-12) {
      best = j;
      best_d = d;
    }
  }
  return best;
}

TEST(LayerMapTest, TerminalSpotValues) {
  const auto m = terminal_layer_map(28, 36);
  EXPECT_EQ(m.entries[27], 35);
  EXPECT_EQ(m.entries[26], 34);
  EXPECT_EQ(m.entries[0], 8);
  EXPECT_EQ(terminal_layer_map(4, 4).entries, (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(terminal_layer_map(3, 7).entries, (std::vector<int>{4, 5, 6}));
}

TEST(LayerMapTest, TerminalDeeperReceiverLeavesLowLayersUnaligned) {
  EXPECT_EQ(terminal_layer_map(5, 3).entries, (std::vector<int>{kUnaligned, kUnaligned, 0, 1, 2}));
}

TEST(LayerMapTest, DepthNormalizedSpotValues) {
  EXPECT_EQ(depth_normalized_layer_map(3, 5).entries, (std::vector<int>{0, 2, 4}));
  EXPECT_EQ(depth_normalized_layer_map(2, 9).entries, (std::vector<int>{0, 8}));
  EXPECT_EQ(depth_normalized_layer_map(4, 6).entries, (std::vector<int>{0, 2, 3, 5}));
  // 0.5 sits exactly between 1/3 and 2/3: the smaller index wins.
  EXPECT_EQ(depth_normalized_layer_map(3, 4).entries, (std::vector<int>{0, 1, 3}));
}

TEST(LayerMapTest, AllDepthPairsMatchBruteForce) {
  for (int lo = 1; lo <= 64; ++lo) {
    for (int hi = lo; hi <= 64; ++hi) {
      const auto t = terminal_layer_map(lo, hi);
      for (int n = 0; n < lo; ++n) ASSERT_EQ(t.entries[n], n + hi - lo);
      if (lo < 2) {
        EXPECT_THROW(depth_normalized_layer_map(lo, hi), Error);
        continue;
      }
      const auto d = depth_normalized_layer_map(lo, hi);
      for (int n = 0; n < lo; ++n) ASSERT_EQ(d.entries[n], brute_nearest(n, lo, hi)) << lo << "," << hi;
      for (int n = 1; n < lo; ++n) ASSERT_LE(d.entries[n - 1], d.entries[n]);
      // Receiver deeper: the sharer is the anchor side.
      const auto r = depth_normalized_layer_map(hi, lo);
      std::vector<int> expect(hi, kUnaligned);
      for (int s = 0; s < lo; ++s) expect[brute_nearest(s, lo, hi)] = s;
      ASSERT_EQ(r.entries, expect);
    }
  }
}

TEST(LayerMapTest, RejectsNonPositiveDepth) {
  try {
    terminal_layer_map(0, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidInput);
  }
}

TEST(TokenizerTest, GreedyLongestMatchRoundTrip) {
  Tokenizer tok(toy_receiver_tokenizer_spec(kWords));
  const std::string text = "hello world, quick fusion!";
  const auto ids = tok.encode(text);
  EXPECT_EQ(tok.decode(ids), text);
  EXPECT_EQ(tok.token_str(ids[0]), "hello");
  EXPECT_EQ(tok.token_str(ids[1]), " world");
}

TEST(TokenizerTest, UnknownAndByteFallback) {
  TokenizerSpec spec;
  spec.pieces = {"a", "b"};
  Tokenizer plain(spec);
  EXPECT_EQ(plain.encode("a\xff"), (std::vector<int>{plain.find("a").value(), plain.unk_id()}));
  spec.byte_fallback = true;
  Tokenizer bytes(spec);
  const auto ids = bytes.encode("a\xff");
  EXPECT_EQ(bytes.token_str(ids[1]), "<0xFF>");
  EXPECT_EQ(bytes.decode(ids), "a\xff");
}

TEST(TokenizerTest, SpecialsMatchInsideText) {
  Tokenizer tok(toy_receiver_tokenizer_spec(kWords));
  const auto ids = tok.encode("hello<redacted> world");
  ASSERT_EQ(ids.size(), 3u);
  EXPECT_TRUE(tok.is_special(ids[1]));
}

TEST(SectionChatTest, SingleMessageStructure) {
  Tokenizer r(toy_receiver_tokenizer_spec(kWords));
  Tokenizer s(toy_sharer_tokenizer_spec(kWords));
  const auto p = section_chat({{"user", "hello world"}}, r, s);
  ASSERT_EQ(p.sections.size(), 3u);
  EXPECT_EQ(p.sections[0].kind, SectionKind::kTemplate);
  EXPECT_EQ(p.sections[1].kind, SectionKind::kMessage);
  EXPECT_EQ(p.sections[2].kind, SectionKind::kTemplate);
  EXPECT_EQ(p.receiver_tokens(), r.encode_chat({{"user", "hello world"}}));
  EXPECT_EQ(r.decode(p.sections[1].receiver_tokens), s.decode(p.sections[1].sharer_tokens));
}

TEST(SectionChatTest, EmptyMessagesIsTemplateError) {
  Tokenizer r(toy_receiver_tokenizer_spec(kWords));
  try {
    section_chat({}, r, r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTemplateError);
  }
}

TEST(SectionChatTest, IdenticalTokenizersGiveIdenticalSections) {
  Tokenizer r(toy_receiver_tokenizer_spec(kWords));
  const auto p = section_chat({{"system", "be quick"}, {"user", "green river stone"}}, r, r);
  for (const auto& s : p.sections) EXPECT_EQ(s.receiver_tokens, s.sharer_tokens);
}

TEST(AlignTokensTest, OneToOneWordsMapDirectly) {
  Tokenizer r(toy_receiver_tokenizer_spec(kWords));
  Tokenizer s(toy_receiver_tokenizer_spec(kWords));
  const auto a = align_tokens(section_chat({{"user", "hello"}}, r, s), TokenStrategy::kFirstOccurrence);
  const auto& span = a.spans[1];
  ASSERT_EQ(span.receiver_len, 1);
  EXPECT_EQ(a.map[span.receiver_begin], span.sharer_begin);
  EXPECT_EQ(s.token_str(a.sharer_tokens[span.sharer_begin]), "hello");
}

TEST(AlignTokensTest, MaximalCoveragePicksLongestPiece) {
  TokenizerSpec rs;
  rs.pieces = {"abcdefghijkl"};
  TokenizerSpec ss;
  ss.pieces = {"ab", "cdefghi", "jkl"};
  Tokenizer r(rs), s(ss);
  SectionedPrompt p{{{SectionKind::kMessage, r.encode("abcdefghijkl"), s.encode("abcdefghijkl")}}, &r, &s};
  const auto longest = align_tokens(p, TokenStrategy::kMaximalCoverage);
  const auto first = align_tokens(p, TokenStrategy::kFirstOccurrence);
  EXPECT_EQ(s.token_str(longest.sharer_tokens[longest.map[0]]), "cdefghi");
  EXPECT_EQ(s.token_str(first.sharer_tokens[first.map[0]]), "ab");
}

TEST(AlignTokensTest, TemplatePaddingMarksPadsUnaligned) {
  TokenizerSpec rs;
  rs.pieces = {"a"};
  Tokenizer r(rs);
  SectionedPrompt p{{{SectionKind::kTemplate, {4, 4, 4, 4}, {4, 4, 4, 4, 4, 4}},
                     {SectionKind::kTemplate, {4, 4, 4, 4, 4, 4}, {4, 4, 4, 4}}},
                    &r, &r};
  const auto a = align_tokens(p, TokenStrategy::kMaximalCoverage);
  EXPECT_EQ(a.spans[0].padded_len, 6);
  EXPECT_EQ(a.spans[0].padded_len - a.spans[0].receiver_len, 2);
  EXPECT_EQ(a.map, (std::vector<int>{0, 1, 2, 3, 6, 7, 8, 9, kUnaligned, kUnaligned}));
  EXPECT_EQ(a.sharer_len(), 10);
}

TEST(AlignTokensTest, SpecialTokensMapByNameOrUnk) {
  TokenizerSpec rs;
  rs.extra_specials = {"<redacted>", "<only_recv>"};
  rs.pieces = {"x"};
  TokenizerSpec ss;
  ss.extra_specials = {"<redacted>"};
  ss.pieces = {"x"};
  Tokenizer r(rs), s(ss);
  SectionedPrompt p{{{SectionKind::kMessage, r.encode("<redacted><only_recv>x"), {}}}, &r, &s};
  const auto a = align_tokens(p, TokenStrategy::kMaximalCoverage);
  EXPECT_EQ(s.token_str(a.sharer_tokens[a.map[0]]), "<redacted>");
  EXPECT_EQ(a.sharer_tokens[a.map[1]], s.unk_id());
  EXPECT_EQ(s.token_str(a.sharer_tokens[a.map[2]]), "x");
}

TEST(AlignTokensTest, DumpFormat) {
  TokenizerSpec rs;
  rs.pieces = {"a", "\n"};
  Tokenizer r(rs);
  SectionedPrompt p{{{SectionKind::kTemplate, r.encode("a\na"), r.encode("a")}}, &r, &r};
  const auto a = align_tokens(p, TokenStrategy::kMaximalCoverage);
  EXPECT_EQ(alignment_dump(a, r, r), "0\ta\t0\ta\n1\t\\n\tUNALIGNED\t\n2\ta\tUNALIGNED\t\n");
}

// Random chat prompts over the two toy tokenizers.
std::vector<std::vector<ChatMessage>> corpus(int n, uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<ChatMessage>> out;
  for (int i = 0; i < n; ++i) {
    std::vector<ChatMessage> msgs;
    const int m = 1 + static_cast<int>(rng.below(3));
    for (int k = 0; k < m; ++k) {
      std::string text;
      const int len = 1 + static_cast<int>(rng.below(12));
      for (int w = 0; w < len; ++w) {
        if (w) text += rng.below(6) == 0 ? ", " : " ";
        text += kWords[rng.below(kWords.size())];
      }
      if (rng.below(4) == 0) text += "?";
      msgs.push_back({k % 2 ? "assistant" : "user", text});
    }
    out.push_back(msgs);
  }
  return out;
}

TEST(AlignTokensTest, CorpusTotalityAndStrategyProperties) {
  Tokenizer r(toy_receiver_tokenizer_spec(kWords));
  Tokenizer s(toy_sharer_tokenizer_spec(kWords));
  for (const auto& msgs : corpus(200, 5)) {
    const auto p = section_chat(msgs, r, s);
    for (auto strategy : {TokenStrategy::kFirstOccurrence, TokenStrategy::kMaximalCoverage}) {
      const auto a = align_tokens(p, strategy);
      ASSERT_EQ(a.receiver_len(), static_cast<int>(p.receiver_tokens().size()));
      ASSERT_EQ(a.receiver_tokens, p.receiver_tokens());
      int last = -1;
      for (int q : a.map) {
        if (q == kUnaligned) continue;
        ASSERT_LT(q, a.sharer_len());
        ASSERT_GT(q, last);
        last = q;
      }
      for (const auto& span : a.spans) {
        if (span.kind == SectionKind::kTemplate) {
          EXPECT_EQ(span.padded_len, std::max(span.receiver_len, span.sharer_len));
        } else {
          for (int i = 0; i < span.receiver_len; ++i) EXPECT_NE(a.map[span.receiver_begin + i], kUnaligned);
        }
      }
    }
    // Same tokenizer on both sides: message sections map to themselves.
    const auto same = align_tokens(section_chat(msgs, r, r), TokenStrategy::kMaximalCoverage);
    for (const auto& span : same.spans) {
      if (span.kind != SectionKind::kMessage) continue;
      for (int i = 0; i < span.receiver_len; ++i) {
        EXPECT_EQ(same.map[span.receiver_begin + i], span.sharer_begin + i);
        EXPECT_EQ(same.sharer_tokens[span.sharer_begin + i], same.receiver_tokens[span.receiver_begin + i]);
      }
    }
  }
}

TEST(AlignTokensTest, StrategiesAgreeWhenEveryReencodingIsSingle) {
  Tokenizer r(toy_receiver_tokenizer_spec(kWords));
  TokenizerSpec wide = toy_receiver_tokenizer_spec(kWords);
  wide.id = "toy-wide";
  wide.chat.preamble = "<bos>";
  Tokenizer s(wide);
  for (const auto& msgs : corpus(50, 8)) {
    const auto p = section_chat(msgs, r, s);
    EXPECT_EQ(align_tokens(p, TokenStrategy::kFirstOccurrence).map,
              align_tokens(p, TokenStrategy::kMaximalCoverage).map);
  }
}

}  // namespace
}  // namespace c2c
