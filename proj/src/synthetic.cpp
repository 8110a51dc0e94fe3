#include "adamrc/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>

#include "adamrc/rng.hpp"

namespace adamrc::synthetic {

using corpus::AnswerSpan;
using corpus::Domain;
using corpus::EntityType;

namespace {

constexpr std::array kFirstNames = {"Anna",  "Boris",  "Clara",   "Dmitri", "Elena",  "Felix", "Greta", "Hugo",
                                    "Ingrid", "Jonas", "Karin",   "Lars",   "Mira",   "Nils",  "Olga",  "Pavel",
                                    "Rosa",  "Stefan", "Tilda",   "Ulf",    "Vera",   "Walter", "Xenia", "Yusuf",
                                    "Zora",  "Amir",   "Bettina", "Carlos", "Dalia",  "Emil",  "Farah", "Gustav",
                                    "Hanna", "Ivo",    "Jana",    "Kasper", "Lena",   "Marco", "Nadia", "Oskar"};
constexpr std::array kLastNames = {"Berg",    "Novak",  "Lindqvist", "Moreau", "Okafor",  "Petrov", "Quist",
                                   "Rinaldi", "Sato",   "Tanaka",    "Varga",  "Weber",   "Young",  "Zeller",
                                   "Almeida", "Brandt", "Costa",     "Dahl",   "Engel",   "Fischer", "Gallo",
                                   "Horvath", "Ivanova", "Jensen",   "Kowalski", "Larsen", "Mendes", "Nieminen",
                                   "Ortega",  "Pereira"};
constexpr std::array kCities = {"Oslo",    "Lyon",    "Porto",   "Tartu",  "Gdansk", "Bergen",  "Utrecht", "Malmo",
                                "Graz",    "Split",   "Brno",    "Turku",  "Aarhus", "Ghent",   "Leipzig", "Bilbao",
                                "Salzburg", "Riga",   "Vilnius", "Krakow", "Basel",  "Lille",   "Genoa",   "Seville",
                                "Dresden", "Uppsala", "Tampere", "Bruges", "Kaunas", "Zadar",   "Bologna", "Nantes",
                                "Odense",  "Linz",    "Pecs",    "Cluj",   "Varna",  "Sibiu",   "Ohrid",   "Lugano"};
constexpr std::array kOrgPrefixes = {"Norland", "Vega",    "Apex",   "Helio",   "Korund", "Miravel", "Tessera",
                                     "Orbis",   "Lumen",   "Castor", "Pellion", "Quanta", "Sorel",   "Tamber",
                                     "Veltra",  "Zenith",  "Arden",  "Borealis", "Cobalt", "Dunmore"};
constexpr std::array kOrgSuffixes = {"Steel", "Labs",  "Systems",  "Motors", "Foods",
                                     "Media", "Energy", "Textiles", "Pharma", "Airways"};

// Index window of an inventory used by a domain; windows overlap in the middle.
struct Window {
  std::size_t begin, end;
};

Window domain_window(std::size_t n, Domain d) {
  const std::size_t width = (n * 7) / 10;
  return d == Domain::source ? Window{0, width} : Window{n - width, n};
}

template <class Arr>
std::string pick(const Arr& arr, Domain d, Rng& rng) {
  const Window w = domain_window(arr.size(), d);
  return arr[w.begin + static_cast<std::size_t>(rng.below(w.end - w.begin))];
}

// A sentence or question is a list of literal text pieces and slot references.
using Part = std::variant<const char*, int>;
using Pattern = std::vector<Part>;

struct QuestionTemplate {
  Pattern text;
  int answer_slot;
};

struct Phrasing {
  Pattern sentence;
  std::vector<QuestionTemplate> questions;
};

struct Relation {
  std::vector<EntityType> slots;  // person / organization / location / number
  Phrasing encyclopedic;
  Phrasing newswire;
};

// Slot type for years and counts.
constexpr EntityType kYear = EntityType::number;

const std::vector<Relation>& relations() {
  static const std::vector<Relation> rel = {
      // founded(person, org, year)
      {{EntityType::person, EntityType::organization, kYear},
       {{0, "founded", 1, "in", 2, "."},
        {{{"Who founded", 1, "?"}, 0}, {{"When did", 0, "found", 1, "?"}, 2}, {{"What company did", 0, "found ?"}, 1}}},
       {{"Back in", 2, ",", 0, "launched", 1, ", sources said ."},
        {{{"Who launched", 1, "?"}, 0}, {{"When did", 0, "launch", 1, "?"}, 2}, {{"What did", 0, "launch ?"}, 1}}}},
      // born(person, city)
      {{EntityType::person, EntityType::location},
       {{0, "was born in", 1, "."}, {{{"Where was", 0, "born ?"}, 1}}},
       {{0, ", a native of", 1, ", spoke to reporters on Monday ."}, {{{"Where is", 0, "a native of ?"}, 1}}}},
      // based(org, city)
      {{EntityType::organization, EntityType::location},
       {{0, "is headquartered in", 1, "."}, {{{"Where is", 0, "headquartered ?"}, 1}}},
       {{0, "operates out of offices in", 1, ", officials said ."}, {{{"Where does", 0, "operate out of ?"}, 1}}}},
      // leads(person, org)
      {{EntityType::person, EntityType::organization},
       {{0, "is the chief executive of", 1, "."},
        {{{"Who is the chief executive of", 1, "?"}, 0}, {{"Which company is", 0, "the chief executive of ?"}, 1}}},
       {{0, "now heads", 1, ", according to a statement ."},
        {{{"Who heads", 1, "?"}, 0}, {{"Which company does", 0, "head ?"}, 1}}}},
      // employs(org, count)
      {{EntityType::organization, EntityType::number},
       {{0, "employs", 1, "people ."}, {{{"How many people does", 0, "employ ?"}, 1}}},
       {{0, "has a workforce of", 1, ", the company said ."}, {{{"How large is the workforce of", 0, "?"}, 1}}}},
      // studied(person, city, year)
      {{EntityType::person, EntityType::location, kYear},
       {{0, "studied at the university in", 1, "until", 2, "."},
        {{{"Where did", 0, "study ?"}, 1}, {{"Until when did", 0, "study in", 1, "?"}, 2}}},
       {{0, "attended school in", 1, "before", 2, ", a spokesman said ."},
        {{{"Where did", 0, "attend school ?"}, 1}, {{"Before when did", 0, "attend school in", 1, "?"}, 2}}}},
  };
  return rel;
}

constexpr std::array kFiller = {
    "The report was published on Tuesday .",      "Shares rose sharply in early trading .",
    "Analysts expect further growth this year .", "Reuters contributed to this report .",
    "Talks resumed in Geneva on Friday .",        "The Associated Press could not confirm the details .",
    "Markets were closed for the holiday .",      "Officials declined to comment further ."};

struct Entities {
  std::vector<std::string> persons, orgs, cities;
};

std::string person_name(Domain d, Rng& rng) { return pick(kFirstNames, d, rng) + " " + pick(kLastNames, d, rng); }
std::string org_name(Domain d, Rng& rng) { return pick(kOrgPrefixes, d, rng) + " " + pick(kOrgSuffixes, d, rng); }

std::string year(Rng& rng) { return std::to_string(1950 + rng.below(70)); }
std::string count(Rng& rng) {
  const std::uint64_t n = 100 * (2 + rng.below(98));
  std::string s = std::to_string(n);
  if (s.size() > 3) s.insert(s.size() - 3, ",");
  return s;
}

// Draws `k` distinct values from a generator.
template <class Gen>
std::vector<std::string> distinct(int k, Gen&& gen) {
  std::vector<std::string> out;
  int guard = 0;
  while (static_cast<int>(out.size()) < k) {
    std::string s = gen();
    if (std::find(out.begin(), out.end(), s) == out.end() || ++guard > 1000) out.push_back(std::move(s));
  }
  return out;
}

struct TextBuilder {
  std::string text;
  // Appends whitespace-separated pieces; returns the char range of the piece.
  std::pair<std::size_t, std::size_t> add(const std::string& piece) {
    if (!text.empty()) text += ' ';
    const std::size_t start = text.size();
    text += piece;
    return {start, text.size()};
  }
};

std::string render(const Pattern& p, const std::vector<std::string>& args) {
  std::string out;
  for (const Part& part : p) {
    if (!out.empty()) out += ' ';
    if (std::holds_alternative<const char*>(part))
      out += std::get<const char*>(part);
    else
      out += args.at(static_cast<std::size_t>(std::get<int>(part)));
  }
  return out;
}

struct PendingQuestion {
  std::string text;
  std::size_t char_start, char_end;
};

DomainCorpus generate_domain(Domain domain, std::uint64_t seed, int n, const SyntheticOptions& opt) {
  Rng rng(seed);
  DomainCorpus out;
  const auto& rels = relations();
  const std::string prefix = domain == Domain::source ? "src" : "tgt";

  for (int pi = 0; pi < n; ++pi) {
    Entities ents;
    ents.persons = distinct(2, [&] { return person_name(domain, rng); });
    ents.orgs = distinct(2, [&] { return org_name(domain, rng); });
    ents.cities = distinct(3, [&] { return pick(kCities, domain, rng); });

    // Every passage states 4 of the 6 relations over the shared entity pool.
    std::vector<std::size_t> order(rels.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    rng.shuffle(order);
    order.resize(4);

    TextBuilder tb;
    std::vector<PendingQuestion> pending;
    int filler_left = domain == Domain::target ? static_cast<int>(rng.below(static_cast<std::uint64_t>(opt.target_max_filler) + 1)) : 0;
    if (filler_left > 0 && rng.bernoulli(0.5)) {
      tb.add(kFiller[rng.below(kFiller.size())]);
      --filler_left;
    }
    for (std::size_t ri : order) {
      const Relation& rel = rels[ri];
      std::vector<std::string> args;
      int person_i = 0, org_i = 0;
      for (EntityType t : rel.slots) {
        switch (t) {
          case EntityType::person: args.push_back(ents.persons[static_cast<std::size_t>(person_i++ % 2)]); break;
          case EntityType::organization: args.push_back(ents.orgs[static_cast<std::size_t>(org_i++ % 2)]); break;
          case EntityType::location: args.push_back(ents.cities[rng.below(ents.cities.size())]); break;
          default: args.push_back(ri == 4 ? count(rng) : year(rng)); break;
        }
      }
      // Vary which person/org a relation talks about.
      if (rng.bernoulli(0.5)) {
        for (std::string& a : args) {
          if (a == ents.persons[0]) a = ents.persons[1];
          else if (a == ents.persons[1]) a = ents.persons[0];
          else if (a == ents.orgs[0]) a = ents.orgs[1];
          else if (a == ents.orgs[1]) a = ents.orgs[0];
        }
      }
      const bool paraphrase = domain == Domain::target && rng.bernoulli(opt.target_paraphrase_prob);
      const Phrasing& ph = paraphrase ? rel.newswire : rel.encyclopedic;

      std::vector<std::pair<std::size_t, std::size_t>> slot_pos(args.size(), {0, 0});
      std::vector<bool> placed(args.size(), false);
      for (const Part& part : ph.sentence) {
        if (std::holds_alternative<const char*>(part)) {
          tb.add(std::get<const char*>(part));
        } else {
          const auto s = static_cast<std::size_t>(std::get<int>(part));
          auto range = tb.add(args[s]);
          if (!placed[s]) slot_pos[s] = range;
          placed[s] = true;
        }
      }
      const QuestionTemplate& q = ph.questions[rng.below(ph.questions.size())];
      const auto a = static_cast<std::size_t>(q.answer_slot);
      pending.push_back({render(q.text, args), slot_pos[a].first, slot_pos[a].second});

      if (filler_left > 0 && rng.bernoulli(0.5)) {
        tb.add(kFiller[rng.below(kFiller.size())]);
        --filler_left;
      }
    }

    auto passage = std::make_shared<corpus::AnnotatedPassage>(
        corpus::make_passage(prefix + "_" + std::to_string(pi), tb.text, domain));

    // Keep questions whose answers are unique strings within the passage.
    rng.shuffle(pending);
    int kept = 0;
    for (const PendingQuestion& pq : pending) {
      if (kept >= opt.questions_per_passage) break;
      const std::string answer = tb.text.substr(pq.char_start, pq.char_end - pq.char_start);
      if (tb.text.find(answer) != pq.char_start || tb.text.find(answer, pq.char_start + 1) != std::string::npos)
        continue;
      AnswerSpan span;
      if (!corpus::align_answer(passage->tokens, pq.char_start, pq.char_end, &span))
        throw std::logic_error("synthetic answer misaligned: " + answer);
      out.examples.push_back(corpus::make_example(passage->id + "_q" + std::to_string(kept), passage, pq.text, span,
                                                  corpus::Provenance::human));
      ++kept;
    }
    out.passages.push_back(std::move(passage));
  }
  return out;
}

}  // namespace

SyntheticCorpora make_synthetic_domains(std::uint64_t seed, int n_passages_per_domain, SyntheticOptions options) {
  if (n_passages_per_domain < 1) throw std::invalid_argument("make_synthetic_domains: n must be >= 1");
  Rng root(seed);
  const std::uint64_t s_seed = root.next_u64();
  const std::uint64_t t_seed = root.next_u64();
  SyntheticCorpora c;
  c.source = generate_domain(Domain::source, s_seed, n_passages_per_domain, options);
  c.target = generate_domain(Domain::target, t_seed, n_passages_per_domain, options);
  return c;
}

corpus::Gazetteer fixture_gazetteer() {
  corpus::Gazetteer g;
  for (const char* f : kFirstNames)
    for (const char* l : kLastNames) g.add(std::vector<std::string>{f, l}, EntityType::person);
  for (const char* c : kCities) g.add(std::vector<std::string>{c}, EntityType::location);
  for (const char* p : kOrgPrefixes)
    for (const char* s : kOrgSuffixes) g.add(std::vector<std::string>{p, s}, EntityType::organization);
  return g;
}

corpus::EmbeddingTable fixture_word_vectors(const corpus::Vocabulary& vocab, std::uint64_t seed) {
  corpus::EmbeddingTable table = corpus::random_embeddings(vocab, seed);
  Rng rng(seed + 0x9e3779b9ULL);
  const int dim = vocab.embedding_dim;
  auto centre = [&] {
    Eigen::RowVectorXf v(dim);
    for (int k = 0; k < dim; ++k) v(k) = static_cast<float>(rng.uniform(-0.1, 0.1));
    return v;
  };
  auto place = [&](const Eigen::RowVectorXf& c, int id, double spread) {
    for (int k = 0; k < dim; ++k) table(id, k) = c(k) + static_cast<float>(rng.uniform(-spread, spread));
  };
  auto group = [&](std::initializer_list<const char*> words, double spread) {
    const Eigen::RowVectorXf c = centre();
    for (const char* w : words)
      if (vocab.contains(w)) place(c, vocab.id(w), spread);
  };
  auto cluster = [&](const auto& words) {
    const Eigen::RowVectorXf c = centre();
    for (const char* w : words)
      if (vocab.contains(w)) place(c, vocab.id(w), 0.04);
  };

  constexpr double kSynonym = 0.01;
  group({"founded", "launched"}, kSynonym);
  group({"found", "launch"}, kSynonym);
  group({"born", "native"}, kSynonym);
  group({"headquartered", "operates", "operate"}, kSynonym);
  group({"chief", "heads", "head"}, kSynonym);
  group({"employs", "employ", "workforce"}, kSynonym);
  group({"studied", "study", "attended", "attend"}, kSynonym);
  group({"university", "school"}, kSynonym);
  group({"until", "before"}, kSynonym);
  cluster(kFirstNames);
  cluster(kLastNames);
  cluster(kCities);
  cluster(kOrgPrefixes);
  cluster(kOrgSuffixes);

  const Eigen::RowVectorXf numeral = centre();
  for (int id = corpus::Vocabulary::kNumSpecials; id < vocab.size(); ++id) {
    const std::string& t = vocab.token(id);
    if (!t.empty() && std::isdigit(static_cast<unsigned char>(t[0])) &&
        t.find_first_not_of("0123456789,") == std::string::npos)
      place(numeral, id, 0.04);
  }
  return table;
}

double vocabulary_jaccard(const DomainCorpus& a, const DomainCorpus& b) {
  auto collect = [](const DomainCorpus& c) {
    std::set<std::string> s;
    for (const auto& p : c.passages)
      for (const auto& t : p->tokens) s.insert(t.text);
    for (const auto& ex : c.examples)
      for (const auto& t : ex.question) s.insert(t.text);
    return s;
  };
  const auto sa = collect(a), sb = collect(b);
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::pair<DomainCorpus, DomainCorpus> split_by_passage(const DomainCorpus& c, double train_fraction) {
  const auto cut = static_cast<std::size_t>(static_cast<double>(c.passages.size()) * train_fraction);
  std::pair<DomainCorpus, DomainCorpus> out;
  std::set<const corpus::AnnotatedPassage*> first;
  for (std::size_t i = 0; i < c.passages.size(); ++i) {
    (i < cut ? out.first : out.second).passages.push_back(c.passages[i]);
    if (i < cut) first.insert(c.passages[i].get());
  }
  for (const auto& ex : c.examples) (first.count(ex.passage.get()) ? out.first : out.second).examples.push_back(ex);
  return out;
}

}  // namespace adamrc::synthetic
