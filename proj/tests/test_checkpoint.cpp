#include <cstring>
#include <fstream>

#include "adamrc/checkpoint.hpp"
#include "adamrc/mrc.hpp"
#include "doctest.h"

using namespace adamrc;
using namespace adamrc::ckpt;

namespace {

mrc::MrcModel small_model(std::uint64_t seed) {
  mrc::MrcConfig c;
  c.vocab_size = 12;
  c.word_dim = 4;
  c.hidden = 3;
  c.answer_steps = 2;
  return mrc::MrcModel::create(c, seed);
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("adamrc_test_" + name);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void dump(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

// Byte offset of the payload: magic, manifest length, manifest, payload length.
std::size_t payload_start(const std::string& bytes) {
  std::uint64_t mlen;
  std::memcpy(&mlen, bytes.data() + 8, 8);
  return 16 + mlen + 8;
}

Manifest sample_manifest() {
  Manifest m;
  m.kind = "mrc";
  m.epoch = 7;
  m.config = {{"hidden", 3}};
  m.dev_metrics = {{"em", 41.5}, {"f1", 52.25}};
  return m;
}

}  // namespace

TEST_CASE("round trip is bitwise and keeps the manifest") {
  mrc::MrcModel a = small_model(1), b = small_model(2);
  const auto path = temp_file("roundtrip.ckpt");
  save_checkpoint(path, a.params(), sample_manifest());
  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.manifest.epoch == 7);
  CHECK(ck.manifest.kind == "mrc");
  CHECK(ck.manifest.format_version == kFormatVersion);
  CHECK(ck.manifest.dev_metrics["f1"] == 52.25);
  CHECK(ck.manifest.config["hidden"] == 3);
  apply_checkpoint(ck, b.params(), true);
  auto pa = a.params(), pb = b.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i]->value.size() == pb[i]->value.size());
    CHECK(std::memcmp(pa[i]->value.data(), pb[i]->value.data(), sizeof(float) * pa[i]->value.size()) == 0);
  }
  CHECK(serialize(a.params(), sample_manifest()) == serialize(b.params(), sample_manifest()));
}

TEST_CASE("truncated files are rejected") {
  mrc::MrcModel a = small_model(1);
  const std::string bytes = serialize(a.params(), sample_manifest());
  for (std::size_t cut : {std::size_t{4}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    INFO("cut at " << cut);
    CHECK_THROWS_AS(deserialize(std::string_view(bytes).substr(0, cut)), CheckpointError);
  }
  const auto path = temp_file("truncated.ckpt");
  dump(path, bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
}

TEST_CASE("corrupted payload bytes are rejected with the tensor's name") {
  mrc::MrcModel a = small_model(1);
  std::string bytes = serialize(a.params(), sample_manifest());
  Checkpoint ok = deserialize(bytes);
  // Tensors are laid out in name order; flip a byte in the last one.
  const std::string last = ok.tensors.rbegin()->first;
  bytes[bytes.size() - 2] ^= 0x5a;
  try {
    deserialize(bytes);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    INFO(e.what());
    CHECK(std::string(e.what()).find(last) != std::string::npos);
  }

  std::string first = serialize(a.params(), sample_manifest());
  first[payload_start(first)] ^= 0x01;
  const std::string first_name = ok.tensors.begin()->first;
  try {
    deserialize(first);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find(first_name) != std::string::npos);
  }
}

TEST_CASE("bad magic, wrong version and mismatched shapes are rejected") {
  mrc::MrcModel a = small_model(1);
  std::string bytes = serialize(a.params(), sample_manifest());
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize(bad_magic), CheckpointError);

  Manifest future = sample_manifest();
  future.format_version = kFormatVersion + 1;
  CHECK_THROWS_AS(deserialize(serialize(a.params(), future)), CheckpointError);

  mrc::MrcConfig wide;
  wide.vocab_size = 12;
  wide.word_dim = 4;
  wide.hidden = 5;
  wide.answer_steps = 2;
  mrc::MrcModel other = mrc::MrcModel::create(wide, 1);
  Checkpoint ck = deserialize(bytes);
  try {
    apply_checkpoint(ck, other.params());
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("encoder.") != std::string::npos);
  }

  nn::ParamRefs partial = a.encoder_params();
  CHECK_NOTHROW(apply_checkpoint(ck, partial));
  CHECK_THROWS_AS(apply_checkpoint(ck, partial, true), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(temp_file("does_not_exist.ckpt")), CheckpointError);
}

TEST_CASE("save_tensors stores arbitrary named matrices") {
  ag::FMatrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  Manifest man;
  man.kind = "features";
  const auto path = temp_file("tensors.bin");
  save_tensors(path, {{"features", m}}, man);
  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.at("features") == m);
  CHECK_THROWS(ck.at("missing"));
  CHECK(slurp(path).substr(0, 6) == "ADAMRC");
}
