#include "adamrc/annotator.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "adamrc/synthetic.hpp"

namespace adamrc::corpus {

namespace {

constexpr std::array<std::string_view, kNumPosTags> kPosNames = {
    "NOUN", "PROPN", "VERB", "ADJ", "ADV", "NUM", "DET", "PRON", "ADP", "CONJ", "PUNCT", "X"};
constexpr std::array<std::string_view, kNumNerTags> kNerNames = {
    "O", "B-ENT", "I-ENT", "B-NUM", "I-NUM", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-ORG", "I-ORG"};
constexpr std::array<std::string_view, kNumEntityTypes> kEntityNames = {"ENT", "NUM", "PER", "LOC", "ORG"};

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }
bool is_digit(unsigned char c) { return std::isdigit(c) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool in(std::string_view w, std::initializer_list<std::string_view> list) {
  return std::find(list.begin(), list.end(), w) != list.end();
}

// Capitalised function words that never start an entity run.
bool is_capitalized_stopword(std::string_view lw) {
  return in(lw, {"the", "a", "an", "in", "on", "at", "of", "by", "for", "from", "with", "to", "it", "its", "he", "she",
                 "they", "we", "i", "you", "this", "that", "these", "those", "who", "what", "when", "where", "why",
                 "how", "which", "whom", "whose", "but", "and", "or", "after", "before", "during", "since", "back",
                 "there", "his", "her", "their", "is", "was", "are", "were", "did", "does", "do", "according"});
}

int tag_pos(std::string_view text) {
  const auto c0 = static_cast<unsigned char>(text.front());
  if (is_number_token(text)) return static_cast<int>(Pos::num);
  if (!is_word_byte(c0)) return static_cast<int>(Pos::punct);
  const std::string lw = lower(text);
  if (in(lw, {"a", "an", "the", "this", "that", "these", "those", "some", "every", "each"}))
    return static_cast<int>(Pos::det);
  if (in(lw, {"he", "she", "it", "they", "we", "i", "you", "him", "her", "them", "his", "its", "their", "who", "what",
              "which", "whom", "whose", "when", "where", "how", "why"}))
    return static_cast<int>(Pos::pron);
  if (in(lw, {"in", "on", "at", "of", "by", "for", "from", "with", "to", "into", "about", "after", "before", "during",
              "since", "out", "over", "under", "between", "across", "through", "according"}))
    return static_cast<int>(Pos::adp);
  if (in(lw, {"and", "or", "but", "nor", "while", "because", "although", "if", "so"})) return static_cast<int>(Pos::conj);
  if (in(lw, {"is", "was", "are", "were", "be", "been", "being", "did", "does", "do", "has", "have", "had", "said",
              "says", "heads", "leads", "runs", "employs", "operates"}))
    return static_cast<int>(Pos::verb);
  if (std::isupper(c0)) return static_cast<int>(Pos::propn);
  if (lw.size() > 3 && (lw.ends_with("ed") || lw.ends_with("ing"))) return static_cast<int>(Pos::verb);
  if (lw.size() > 3 && lw.ends_with("ly")) return static_cast<int>(Pos::adv);
  if (lw.size() > 4 && (lw.ends_with("ous") || lw.ends_with("ful") || lw.ends_with("ive") || lw.ends_with("al")))
    return static_cast<int>(Pos::adj);
  return static_cast<int>(Pos::noun);
}

}  // namespace

std::string_view pos_name(int pos) { return kPosNames.at(static_cast<std::size_t>(pos)); }
std::string_view ner_name(int tag) { return kNerNames.at(static_cast<std::size_t>(tag)); }
std::string_view entity_type_name(EntityType t) { return kEntityNames.at(static_cast<std::size_t>(t)); }

int pos_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kPosNames.size(); ++i)
    if (kPosNames[i] == name) return static_cast<int>(i);
  throw std::invalid_argument("unknown POS tag '" + std::string(name) + "'");
}

int ner_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNerNames.size(); ++i)
    if (kNerNames[i] == name) return static_cast<int>(i);
  throw std::invalid_argument("unknown NER tag '" + std::string(name) + "'");
}

bool is_number_token(std::string_view s) {
  if (s.empty() || !is_digit(static_cast<unsigned char>(s.front()))) return false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (is_digit(c)) continue;
    if ((c == ',' || c == '.') && i + 1 < s.size() && is_digit(static_cast<unsigned char>(s[i + 1]))) continue;
    return false;
  }
  return true;
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (is_word_byte(c)) {
      ++i;
      while (i < n) {
        const auto d = static_cast<unsigned char>(text[i]);
        if (is_word_byte(d)) {
          ++i;
          continue;
        }
        const bool next_word = i + 1 < n && is_word_byte(static_cast<unsigned char>(text[i + 1]));
        if ((d == '-' || d == '\'') && next_word) {
          i += 1;
          continue;
        }
        if ((d == ',' || d == '.') && is_digit(static_cast<unsigned char>(text[i - 1])) && i + 1 < n &&
            is_digit(static_cast<unsigned char>(text[i + 1]))) {
          i += 1;
          continue;
        }
        break;
      }
    } else {
      ++i;
    }
    Token t;
    t.text = std::string(text.substr(start, i - start));
    t.char_start = start;
    t.char_end = i;
    out.push_back(std::move(t));
  }
  return out;
}

void Gazetteer::add(const std::vector<std::string>& phrase, EntityType type) {
  if (phrase.empty()) return;
  entries_[phrase.front()].emplace_back(phrase, type);
  max_len_ = std::max(max_len_, phrase.size());
}

void Gazetteer::add(std::string_view phrase, EntityType type) {
  std::vector<std::string> parts;
  for (const Token& t : tokenize(phrase)) parts.push_back(t.text);
  add(parts, type);
}

std::size_t Gazetteer::match(const std::vector<Token>& tokens, std::size_t pos, EntityType* type) const {
  auto it = entries_.find(tokens[pos].text);
  if (it == entries_.end()) return 0;
  std::size_t best = 0;
  for (const auto& [phrase, t] : it->second) {
    if (phrase.size() <= best || pos + phrase.size() > tokens.size()) continue;
    bool ok = true;
    for (std::size_t k = 1; k < phrase.size() && ok; ++k) ok = tokens[pos + k].text == phrase[k];
    if (ok) {
      best = phrase.size();
      if (type) *type = t;
    }
  }
  return best;
}

std::vector<Token> Annotator::annotate(std::string_view raw_text) const {
  std::vector<Token> tokens = tokenize(raw_text);
  if (tokens.empty()) throw std::invalid_argument("annotate: empty or whitespace-only text");
  for (Token& t : tokens) t.pos = tag_pos(t.text);

  std::size_t i = 0;
  while (i < tokens.size()) {
    EntityType type{};
    if (std::size_t len = gazetteer_.match(tokens, i, &type); len > 0) {
      for (std::size_t k = 0; k < len; ++k) tokens[i + k].ner = k == 0 ? ner_begin(type) : ner_inside(type);
      i += len;
      continue;
    }
    if (is_number_token(tokens[i].text)) {
      std::size_t j = i;
      while (j < tokens.size() && is_number_token(tokens[j].text)) {
        tokens[j].ner = j == i ? ner_begin(EntityType::number) : ner_inside(EntityType::number);
        ++j;
      }
      i = j;
      continue;
    }
    auto capitalized = [&](std::size_t k) {
      const auto c = static_cast<unsigned char>(tokens[k].text.front());
      return std::isupper(c) && !is_capitalized_stopword(lower(tokens[k].text));
    };
    if (capitalized(i)) {
      std::size_t j = i;
      EntityType dummy{};
      while (j < tokens.size() && capitalized(j) && (j == i || gazetteer_.match(tokens, j, &dummy) == 0)) {
        tokens[j].ner = j == i ? ner_begin(EntityType::entity) : ner_inside(EntityType::entity);
        ++j;
      }
      i = j;
      continue;
    }
    ++i;
  }
  return tokens;
}

const Annotator& default_annotator() {
  static const Annotator annotator(synthetic::fixture_gazetteer());
  return annotator;
}

std::vector<Token> tokenize_and_annotate(std::string_view raw_text) { return default_annotator().annotate(raw_text); }

}  // namespace adamrc::corpus
