#pragma once

// Word-level tokenizer, causal text transformer with end-of-sequence pooling,
// and the fixed class prompts.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mvclip/transformer.hpp"

namespace mvclip {

struct PromptSet {
  std::string train_negative;
  std::string train_positive;
  std::string zeroshot_negative;
  std::string zeroshot_positive;
};

inline const PromptSet& canonical_prompts() {
  static const PromptSet prompts{
      "This is a normal mammogram case with left craniocaudal, right craniocaudal, left mediolateral oblique, "
      "and right mediolateral oblique views, all showing no signs of abnormalities.",
      "This is an abnormal mammogram case with left craniocaudal, right craniocaudal, left mediolateral oblique, "
      "and right mediolateral oblique views, where abnormalities are present in one or more views.",
      "This is a normal mammogram case.",
      "This is an abnormal mammogram case.",
  };
  return prompts;
}

// Negative/positive prompt pair in class order.
struct PromptPair {
  std::string negative;
  std::string positive;
};

inline PromptPair training_prompts() { return {canonical_prompts().train_negative, canonical_prompts().train_positive}; }
inline PromptPair zeroshot_prompts() {
  return {canonical_prompts().zeroshot_negative, canonical_prompts().zeroshot_positive};
}

// Lowercased words (alphanumeric runs) and single punctuation characters.
inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
      if (std::ispunct(c)) out.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return out;
}

struct TokenizedText {
  std::vector<std::size_t> ids;  // padded to the context length
  std::size_t eos_position = 0;
};

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kSos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;
  static constexpr std::size_t kSpecials = 4;

  Vocabulary() { rebuild_index({}); }

  static Vocabulary build(const std::vector<std::string>& corpus) {
    if (corpus.empty()) throw ValidationError("build_vocab: empty corpus");
    std::set<std::string> unique;
    for (const auto& text : corpus) {
      for (auto& w : split_words(text)) unique.insert(std::move(w));
    }
    Vocabulary v;
    v.rebuild_index({unique.begin(), unique.end()});
    return v;
  }

  // One token per line; line i holds id i + kSpecials.
  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read vocabulary file '" + path + "'");
    std::vector<std::string> tokens;
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    Vocabulary v;
    v.rebuild_index(std::move(tokens));
    return v;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocabulary file '" + path + "'");
    for (std::size_t i = kSpecials; i < id_to_token_.size(); ++i) out << id_to_token_[i] << '\n';
  }

  std::size_t size() const { return id_to_token_.size(); }

  std::size_t id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  const std::string& token(std::size_t id) const { return id_to_token_.at(id); }

  std::vector<std::string> words() const { return {id_to_token_.begin() + kSpecials, id_to_token_.end()}; }

  bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  void rebuild_index(std::vector<std::string> tokens) {
    id_to_token_ = {"<pad>", "<sos>", "<eos>", "<unk>"};
    id_to_token_.insert(id_to_token_.end(), tokens.begin(), tokens.end());
    token_to_id_.clear();
    for (std::size_t i = kSpecials; i < id_to_token_.size(); ++i) token_to_id_.emplace(id_to_token_[i], i);
  }

  std::vector<std::string> id_to_token_;
  std::map<std::string, std::size_t> token_to_id_;
};

inline Vocabulary build_vocab(const std::vector<std::string>& corpus) { return Vocabulary::build(corpus); }

inline std::vector<std::string> prompt_corpus() {
  const auto& p = canonical_prompts();
  return {p.train_negative, p.train_positive, p.zeroshot_negative, p.zeroshot_positive};
}

// [SOS] words [EOS] then PAD up to context_length. Never truncates.
inline TokenizedText tokenize(const std::string& text, const Vocabulary& vocab, std::size_t context_length) {
  const auto words = split_words(text);
  if (words.size() + 2 > context_length) {
    throw ValidationError("text of " + std::to_string(words.size()) + " tokens does not fit context length " +
                          std::to_string(context_length));
  }
  TokenizedText out;
  out.ids.assign(context_length, Vocabulary::kPad);
  out.ids[0] = Vocabulary::kSos;
  for (std::size_t i = 0; i < words.size(); ++i) out.ids[i + 1] = vocab.id(words[i]);
  out.eos_position = words.size() + 1;
  out.ids[out.eos_position] = Vocabulary::kEos;
  return out;
}

// Tokens between SOS and EOS.
inline std::vector<std::string> detokenize(const std::vector<std::size_t>& ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (std::size_t id : ids) {
    if (id == Vocabulary::kEos) break;
    if (id == Vocabulary::kSos || id == Vocabulary::kPad) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

struct TextEncoderConfig {
  std::size_t context_length = 64;
  std::size_t vocab_size = 0;  // 0: take the size of the vocabulary in use
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t depth = 4;
  std::size_t embed_dim = 32;

  void validate() const {
    if (context_length < 3) throw ValidationError("text context_length must be at least 3");
    if (width == 0 || embed_dim == 0 || vocab_size == 0) throw ValidationError("text extents must be positive");
    if (heads == 0 || width % heads != 0) {
      throw ValidationError("text width " + std::to_string(width) + " is not divisible by " + std::to_string(heads) +
                            " heads");
    }
  }
};

inline std::string text_block_prefix(std::size_t n) { return "text.blocks." + std::to_string(n); }

inline std::vector<HostBlock> text_host_blocks(const TextEncoderConfig& cfg) {
  std::vector<HostBlock> blocks;
  for (std::size_t n = 0; n < cfg.depth; ++n) blocks.push_back({text_block_prefix(n), cfg.width});
  return blocks;
}

template <typename T>
void declare_text_encoder(ParameterRegistry<T>& reg, const TextEncoderConfig& cfg) {
  cfg.validate();
  reg.declare("text.token_embed", Shape{cfg.vocab_size, cfg.width});
  reg.declare("text.pos_embed", Shape{cfg.context_length, cfg.width});
  for (std::size_t n = 0; n < cfg.depth; ++n) declare_block(reg, text_block_prefix(n), cfg.width);
  reg.declare("text.proj.weight", Shape{cfg.width, cfg.embed_dim});
}

template <typename T>
class TextEncoder {
 public:
  TextEncoder(const ParameterRegistry<T>& reg, TextEncoderConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    token_embed_ = reg.at("text.token_embed");
    pos_embed_ = reg.at("text.pos_embed");
    for (std::size_t n = 0; n < cfg_.depth; ++n) blocks_.push_back(load_block(reg, text_block_prefix(n), cfg_.heads));
    projection_ = reg.at("text.proj.weight");
  }

  const TextEncoderConfig& config() const { return cfg_; }

  // Hidden states for positions 0..EOS, after the last block.
  Tensor<T> hidden_states(const std::vector<std::size_t>& ids) const { return run(ids, find_eos(ids)); }

  // Activation at the EOS position projected to D_e: 1 x D_e. Positions past
  // EOS are never computed, so trailing padding cannot affect the result.
  Tensor<T> encode(const std::vector<std::size_t>& ids) const {
    const std::size_t eos = find_eos(ids);
    auto h = run(ids, eos);
    return matmul(gather_rows(h, {eos}), projection_);
  }

  Tensor<T> encode(const TokenizedText& t) const { return encode(t.ids); }

 private:
  std::size_t find_eos(const std::vector<std::size_t>& ids) const {
    if (ids.size() > cfg_.context_length) {
      throw ValidationError("id sequence of length " + std::to_string(ids.size()) + " exceeds context length " +
                            std::to_string(cfg_.context_length));
    }
    auto it = std::find(ids.begin(), ids.end(), Vocabulary::kEos);
    if (it == ids.end()) throw ValidationError("encode_text: id sequence has no EOS token");
    return static_cast<std::size_t>(it - ids.begin());
  }

  Tensor<T> run(const std::vector<std::size_t>& ids, std::size_t eos) const {
    std::vector<std::size_t> prefix(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(eos + 1));
    for (std::size_t id : prefix) {
      if (id >= cfg_.vocab_size) throw ValidationError("token id " + std::to_string(id) + " outside vocabulary");
    }
    auto x = add(gather_rows(token_embed_, prefix), slice(pos_embed_, 0, 0, eos + 1));
    for (const auto& b : blocks_) x = block_forward(x, b, true);
    return x;
  }

  TextEncoderConfig cfg_;
  Tensor<T> token_embed_;
  Tensor<T> pos_embed_;
  std::vector<BlockParams<T>> blocks_;
  Tensor<T> projection_;
};

}  // namespace mvclip
