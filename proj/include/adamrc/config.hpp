#pragma once

// Run configuration: a flat "section.key = value" file, with later
// assignments (e.g. command-line overrides) replacing earlier ones.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "adamrc/mrc.hpp"
#include "adamrc/qgen.hpp"
#include "adamrc/trainer.hpp"

namespace adamrc::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // data
  std::string mode = "synthetic";  // synthetic | squad
  std::string source_train, source_dev, target_train, target_dev;
  int synthetic_passages = 1000;
  double dev_fraction = 0.2;  // synthetic mode: passages held out per domain
  int max_passage_len = 300;
  int max_question_len = 30;
  // vocabulary
  int vocab_min_count = 1;
  int vocab_max_size = 20000;
  int word_dim = 50;
  std::string embeddings;  // optional word-vector file
  // Synthetic mode without a vector file: 1 seeds related fixture words with
  // nearby vectors (see synthetic::fixture_word_vectors), 0 uses random ones.
  int fixture_vectors = 1;
  // models
  mrc::MrcConfig mrc;
  qgen::QGenConfig qgen;
  int qgen_epochs = 10;
  int qgen_batch_size = 32;
  double qgen_lr = 0.002;
  int max_per_passage = 3;
  // training
  train::TrainConfig train;
  int source_epochs = 30;
  // diagnostics
  int diag_samples = 100;
  // run
  std::string out_dir = "run";
  std::uint64_t seed = 1;

  // Throws ConfigError on unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  void validate() const;
  // Resolved "key = value" lines, sorted by key.
  std::string to_text() const;
  std::vector<std::string> keys() const;
};

// Applies the lines of a config file; '#' starts a comment. Errors name the
// line number.
void apply_text(RunConfig& cfg, std::string_view text, std::string_view source_name = "<config>");
void apply_file(RunConfig& cfg, const std::filesystem::path& path);
// "key=value" override.
void apply_override(RunConfig& cfg, std::string_view assignment);

}  // namespace adamrc::config
