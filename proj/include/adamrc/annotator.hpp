#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace adamrc::corpus {

// Coarse part-of-speech inventory produced by the rule-based tagger.
enum class Pos : int { noun, propn, verb, adj, adv, num, det, pron, adp, conj, punct, other };
inline constexpr int kNumPosTags = 12;

// Entity categories. NER tags use a BIO scheme over these types.
enum class EntityType : int { entity, number, person, location, organization };
inline constexpr int kNumEntityTypes = 5;
// O, then (B, I) per entity type.
inline constexpr int kNerOutside = 0;
inline constexpr int kNumNerTags = 1 + 2 * kNumEntityTypes;

constexpr int ner_begin(EntityType t) { return 1 + 2 * static_cast<int>(t); }
constexpr int ner_inside(EntityType t) { return 2 + 2 * static_cast<int>(t); }
constexpr bool ner_is_begin(int tag) { return tag > 0 && (tag - 1) % 2 == 0; }
constexpr EntityType ner_type(int tag) { return static_cast<EntityType>((tag - 1) / 2); }

std::string_view pos_name(int pos);
std::string_view ner_name(int tag);
int pos_from_name(std::string_view name);  // throws std::invalid_argument
int ner_from_name(std::string_view name);  // throws std::invalid_argument
std::string_view entity_type_name(EntityType t);

struct Token {
  std::string text;
  int pos = 0;
  int ner = kNerOutside;
  std::size_t char_start = 0;
  std::size_t char_end = 0;  // exclusive
};

// Whitespace/punctuation tokenizer. Words keep internal hyphens and
// apostrophes; digit groups keep internal ',' and '.' between digits.
std::vector<Token> tokenize(std::string_view text);

// Exact token-sequence phrase list with entity types.
class Gazetteer {
 public:
  void add(const std::vector<std::string>& phrase, EntityType type);
  void add(std::string_view phrase, EntityType type);  // whitespace-split
  // Longest phrase starting at `pos`; returns its length (0 if none).
  std::size_t match(const std::vector<Token>& tokens, std::size_t pos, EntityType* type) const;
  bool empty() const { return entries_.empty(); }

 private:
  // Keyed by first token; each value lists (phrase, type).
  std::map<std::string, std::vector<std::pair<std::vector<std::string>, EntityType>>, std::less<>> entries_;
  std::size_t max_len_ = 0;
};

class Annotator {
 public:
  explicit Annotator(Gazetteer gazetteer = {}) : gazetteer_(std::move(gazetteer)) {}
  virtual ~Annotator() = default;
  // Tokenizes and tags. Throws std::invalid_argument on empty/whitespace-only input.
  virtual std::vector<Token> annotate(std::string_view raw_text) const;

 protected:
  Gazetteer gazetteer_;
};

// Rule-based annotator with the built-in fixture gazetteer.
const Annotator& default_annotator();

std::vector<Token> tokenize_and_annotate(std::string_view raw_text);

bool is_number_token(std::string_view s);

}  // namespace adamrc::corpus
