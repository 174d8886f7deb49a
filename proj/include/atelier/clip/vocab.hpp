#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace atelier::clip {

struct VocabError : std::runtime_error {
  explicit VocabError(const std::string& what) : std::runtime_error(what) {}
};

// Closed vocabulary over the caption grammar plus reserved specials.
class TextVocab {
 public:
  static constexpr int64_t kPad = 0;
  static constexpr int64_t kBos = 1;
  static constexpr int64_t kSep = 2;

  // Grammar words in their fixed order, after the three specials.
  static TextVocab standard();
  static TextVocab from_words(const std::vector<std::string>& words);

  int64_t size() const { return static_cast<int64_t>(words_.size()); }
  int64_t index_of(const std::string& word) const;  // throws VocabError
  const std::string& word_at(int64_t idx) const { return words_.at(static_cast<size_t>(idx)); }
  const std::vector<std::string>& words() const { return words_; }

  // BOS-prefixed indices; unknown words raise VocabError.
  std::vector<int64_t> tokenize(const std::vector<std::string>& caption) const;
  // Inverse, dropping special tokens.
  std::vector<std::string> detokenize(const std::vector<int64_t>& ids) const;

 private:
  std::vector<std::string> words_;
  std::map<std::string, int64_t> index_;
};

}  // namespace atelier::clip
