#include "atelier/clip/vocab.hpp"

#include "atelier/data/synth.hpp"

namespace atelier::clip {

TextVocab TextVocab::standard() { return from_words(synth::grammar_words()); }

TextVocab TextVocab::from_words(const std::vector<std::string>& words) {
  TextVocab v;
  v.words_ = {"<pad>", "<bos>", "<sep>"};
  for (const std::string& w : words) v.words_.push_back(w);
  for (size_t i = 0; i < v.words_.size(); ++i) {
    if (!v.index_.emplace(v.words_[i], static_cast<int64_t>(i)).second)
      throw VocabError("duplicate vocabulary word: " + v.words_[i]);
  }
  return v;
}

int64_t TextVocab::index_of(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) throw VocabError("word outside the caption grammar: '" + word + "'");
  return it->second;
}

std::vector<int64_t> TextVocab::tokenize(const std::vector<std::string>& caption) const {
  std::vector<int64_t> ids = {kBos};
  ids.reserve(caption.size() + 1);
  for (const std::string& w : caption) ids.push_back(index_of(w));
  return ids;
}

std::vector<std::string> TextVocab::detokenize(const std::vector<int64_t>& ids) const {
  std::vector<std::string> words;
  for (int64_t id : ids) {
    if (id < 0 || id >= size()) throw VocabError("token id out of range");
    if (id == kPad || id == kBos || id == kSep) continue;
    words.push_back(words_[static_cast<size_t>(id)]);
  }
  return words;
}

}  // namespace atelier::clip
