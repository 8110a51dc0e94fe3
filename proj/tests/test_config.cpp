#include "adamrc/config.hpp"
#include "doctest.h"

using namespace adamrc::config;

TEST_CASE("apply_text reads key = value lines and skips comments") {
  RunConfig c;
  apply_text(c,
             "# desk run\n"
             "data.synthetic_passages = 200   # small\n"
             "\n"
             "  mrc.hidden=24\n"
             "train.lambda_gamma = 5.5\n"
             "run.out_dir = /tmp/x y\n"
             "run.seed = 42\n");
  CHECK(c.synthetic_passages == 200);
  CHECK(c.mrc.hidden == 24);
  CHECK(c.train.lambda_gamma == 5.5);
  CHECK(c.out_dir == "/tmp/x y");
  CHECK(c.seed == 42);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("errors name the line and the key") {
  RunConfig c;
  try {
    apply_text(c, "mrc.hidden = 8\nmrc.hiden = 9\n", "desk.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("desk.cfg:2:") != std::string::npos);
    CHECK(msg.find("mrc.hiden") != std::string::npos);
  }
  try {
    apply_text(c, "train.learning_rate = fast\n", "desk.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("train.learning_rate") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_text(c, "mrc.hidden 8\n"), ConfigError);
  CHECK_THROWS_AS(apply_text(c, "mrc.hidden = 8x\n"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "mrc.hidden"), ConfigError);
  CHECK_THROWS_AS(apply_file(c, "/nonexistent/adamrc.cfg"), ConfigError);
}

TEST_CASE("overrides replace earlier values") {
  RunConfig c;
  apply_text(c, "train.epochs = 4\ntrain.epochs = 6\n");
  CHECK(c.train.epochs == 6);
  apply_override(c, "train.epochs=9");
  CHECK(c.train.epochs == 9);
}

TEST_CASE("to_text round-trips every key") {
  RunConfig a;
  apply_text(a, "mrc.answer_steps = 3\nqgen.beam_size = 2\ntrain.semi_supervised_ratio = 0.25\nrun.seed = 17\n");
  RunConfig b;
  apply_text(b, a.to_text());
  CHECK(a.to_text() == b.to_text());
  CHECK(b.mrc.answer_steps == 3);
  CHECK(b.train.semi_supervised_ratio == 0.25);
  CHECK(a.keys().size() > 30);
}

TEST_CASE("validate rejects out-of-range settings") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  RunConfig bad = c;
  bad.mode = "wiki";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.dev_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.mode = "squad";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.train.semi_supervised_ratio = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.mrc.hidden = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
