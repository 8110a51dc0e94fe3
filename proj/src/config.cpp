#include "adamrc/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "adamrc/io.hpp"

namespace adamrc::config {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  if constexpr (std::is_floating_point_v<T>) {
    // from_chars for double is available in GCC 11.
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
  } else {
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw ConfigError(std::string(key) + ": expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

template <class T>
std::string fmt_value(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  }
}

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field field(T RunConfig::*member) {
  return {[member](RunConfig& c, std::string_view key, std::string_view v) {
            if constexpr (std::is_same_v<T, std::string>)
              c.*member = std::string(v);
            else
              c.*member = parse_number<T>(key, v);
          },
          [member](const RunConfig& c) { return fmt_value(c.*member); }};
}

template <class S, class T>
Field nested(S RunConfig::*section, T S::*member) {
  return {[=](RunConfig& c, std::string_view key, std::string_view v) { (c.*section).*member = parse_number<T>(key, v); },
          [=](const RunConfig& c) { return fmt_value((c.*section).*member); }};
}

const std::map<std::string, Field, std::less<>>& registry() {
  static const std::map<std::string, Field, std::less<>> r = {
      {"data.mode", field(&RunConfig::mode)},
      {"data.source_train", field(&RunConfig::source_train)},
      {"data.source_dev", field(&RunConfig::source_dev)},
      {"data.target_train", field(&RunConfig::target_train)},
      {"data.target_dev", field(&RunConfig::target_dev)},
      {"data.synthetic_passages", field(&RunConfig::synthetic_passages)},
      {"data.dev_fraction", field(&RunConfig::dev_fraction)},
      {"data.max_passage_len", field(&RunConfig::max_passage_len)},
      {"data.max_question_len", field(&RunConfig::max_question_len)},
      {"vocab.min_count", field(&RunConfig::vocab_min_count)},
      {"vocab.max_size", field(&RunConfig::vocab_max_size)},
      {"vocab.word_dim", field(&RunConfig::word_dim)},
      {"vocab.embeddings", field(&RunConfig::embeddings)},
      {"vocab.fixture_vectors", field(&RunConfig::fixture_vectors)},
      {"mrc.hidden", nested(&RunConfig::mrc, &mrc::MrcConfig::hidden)},
      {"mrc.pos_dim", nested(&RunConfig::mrc, &mrc::MrcConfig::pos_dim)},
      {"mrc.ner_dim", nested(&RunConfig::mrc, &mrc::MrcConfig::ner_dim)},
      {"mrc.answer_steps", nested(&RunConfig::mrc, &mrc::MrcConfig::answer_steps)},
      {"mrc.prediction_dropout", nested(&RunConfig::mrc, &mrc::MrcConfig::prediction_dropout)},
      {"mrc.max_span_len", nested(&RunConfig::mrc, &mrc::MrcConfig::max_span_len)},
      {"qgen.lstm_hidden", nested(&RunConfig::qgen, &qgen::QGenConfig::lstm_hidden)},
      {"qgen.pos_dim", nested(&RunConfig::qgen, &qgen::QGenConfig::pos_dim)},
      {"qgen.ner_dim", nested(&RunConfig::qgen, &qgen::QGenConfig::ner_dim)},
      {"qgen.dropout", nested(&RunConfig::qgen, &qgen::QGenConfig::dropout)},
      {"qgen.beam_size", nested(&RunConfig::qgen, &qgen::QGenConfig::beam_size)},
      {"qgen.max_decode_len", nested(&RunConfig::qgen, &qgen::QGenConfig::max_decode_len)},
      {"qgen.epochs", field(&RunConfig::qgen_epochs)},
      {"qgen.batch_size", field(&RunConfig::qgen_batch_size)},
      {"qgen.lr", field(&RunConfig::qgen_lr)},
      {"extract.max_per_passage", field(&RunConfig::max_per_passage)},
      {"train.k_s", nested(&RunConfig::train, &train::TrainConfig::k_s)},
      {"train.k_t", nested(&RunConfig::train, &train::TrainConfig::k_t)},
      {"train.batch_size", nested(&RunConfig::train, &train::TrainConfig::batch_size)},
      {"train.learning_rate", nested(&RunConfig::train, &train::TrainConfig::learning_rate)},
      {"train.lr_halving_period", nested(&RunConfig::train, &train::TrainConfig::lr_halving_period)},
      {"train.dropout", nested(&RunConfig::train, &train::TrainConfig::dropout)},
      {"train.epochs", nested(&RunConfig::train, &train::TrainConfig::epochs)},
      {"train.source_epochs", field(&RunConfig::source_epochs)},
      {"train.steps_per_epoch", nested(&RunConfig::train, &train::TrainConfig::steps_per_epoch)},
      {"train.lambda_gamma", nested(&RunConfig::train, &train::TrainConfig::lambda_gamma)},
      {"train.clip_norm", nested(&RunConfig::train, &train::TrainConfig::clip_norm)},
      {"train.semi_supervised_ratio", nested(&RunConfig::train, &train::TrainConfig::semi_supervised_ratio)},
      {"train.classifier_hidden", nested(&RunConfig::train, &train::TrainConfig::classifier_hidden)},
      {"train.log_every", nested(&RunConfig::train, &train::TrainConfig::log_every)},
      {"diag.samples", field(&RunConfig::diag_samples)},
      {"run.out_dir", field(&RunConfig::out_dir)},
      {"run.seed", field(&RunConfig::seed)},
  };
  return r;
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto& r = registry();
  auto it = r.find(key);
  if (it == r.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second.set(*this, key, trim(value));
}

std::vector<std::string> RunConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, f] : registry()) out.push_back(k);
  return out;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, f] : registry()) out += k + " = " + f.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  const auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (mode != "synthetic" && mode != "squad") fail("data.mode must be 'synthetic' or 'squad'");
  if (mode == "squad" && (source_train.empty() || target_train.empty()))
    fail("squad mode needs data.source_train and data.target_train");
  if (synthetic_passages < 2) fail("data.synthetic_passages must be >= 2");
  if (!(dev_fraction > 0 && dev_fraction < 1)) fail("data.dev_fraction must be in (0, 1)");
  if (max_passage_len < 1 || max_question_len < 1) fail("length limits must be >= 1");
  if (vocab_min_count < 1) fail("vocab.min_count must be >= 1");
  if (vocab_max_size <= 4) fail("vocab.max_size must exceed the 4 special tokens");
  if (word_dim < 1) fail("vocab.word_dim must be >= 1");
  if (fixture_vectors != 0 && fixture_vectors != 1) fail("vocab.fixture_vectors must be 0 or 1");
  if (qgen_epochs < 0 || qgen_batch_size < 1 || !(qgen_lr > 0)) fail("qgen training settings out of range");
  if (max_per_passage < 1) fail("extract.max_per_passage must be >= 1");
  if (source_epochs < 1) fail("train.source_epochs must be >= 1");
  if (diag_samples < 2) fail("diag.samples must be >= 2");
  if (out_dir.empty()) fail("run.out_dir must be set");
  try {
    mrc::MrcConfig m = mrc;
    m.vocab_size = 100;
    m.word_dim = word_dim;
    m.validate();
    qgen::QGenConfig q = qgen;
    q.vocab_size = 100;
    q.word_dim = word_dim;
    q.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void apply_text(RunConfig& cfg, std::string_view text, std::string_view source_name) {
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(std::string(source_name) + ":" + std::to_string(line_no) + ": expected key = value");
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(source_name) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_file(RunConfig& cfg, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  apply_text(cfg, io::read_file(path), path.string());
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  cfg.set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

}  // namespace adamrc::config
