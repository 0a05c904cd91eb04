// Licensed under the Apache License 2.0 (see LICENSE file).

#include <fstream>

#include "doctest.h"
#include "support.hpp"
#include "tsync/config.hpp"
#include "tsync/errors.hpp"

using namespace tsync;

TEST_CASE("defaults convert seconds to coarse columns") {
  const Config c;
  CHECK_NOTHROW(c.validate());
  const auto t = c.tour_config();
  CHECK(t.stripe_cols == 270);
  CHECK(t.overlap_cols == 90);
  CHECK(t.tolerance == 6);
  CHECK(t.rank == 5);
  CHECK(t.ratio == doctest::Approx(1.2));
  CHECK(c.seconds_to_columns(0.01) == 1);
  const auto cc = c.curriculum_config();
  CHECK(cc.off_path_margin == 18);
  CHECK(cc.stride == 10);
  CHECK(cc.tour.stripe_cols == 270);
}

TEST_CASE("parsing, overrides and text round-trip") {
  const auto c = parse_config("# comment\n\n video.stride = 5 \ntour.stripe_seconds=10\ncorpus.noise_sigma=0.25\n");
  CHECK(c.stride == 5);
  CHECK(c.tour_config().stripe_cols == 60);
  CHECK(c.corpus.noise_sigma == 0.25);
  CHECK(c.get("video.stride") == "5");

  auto d = c;
  d.set("smooth.q", "0.001953125");
  d.set("seed", "18446744073709551615");
  const auto back = parse_config(d.to_text());
  CHECK(back.to_text() == d.to_text());
  CHECK(back.kalman_q == d.kalman_q);
  CHECK(back.seed == 18446744073709551615ull);
  for (const auto& key : Config::keys()) CHECK(back.get(key) == d.get(key));
  CHECK(Config::keys().size() == 44);

  testing::TempDir dir("config");
  std::ofstream(dir.file("c.cfg")) << d.to_text();
  CHECK(load_config(dir.file("c.cfg")).to_text() == d.to_text());
  CHECK_THROWS_AS(load_config(dir.file("missing.cfg")), DataError);
}

TEST_CASE("bad keys and values are rejected") {
  Config c;
  CHECK_THROWS_AS(c.set("no.such.key", "1"), ArgumentError);
  CHECK_THROWS_AS(c.set("video.stride", "ten"), ArgumentError);
  CHECK_THROWS_AS(c.set("video.stride", "-3"), ArgumentError);
  CHECK_THROWS_AS(c.set("smooth.q", "nan"), ArgumentError);
  CHECK_THROWS_AS(parse_config("video.stride\n"), DataError);
  try {
    parse_config("seed=1\nvideo.fps=x\n", "exp.cfg");
    FAIL("no error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("exp.cfg:2") != std::string::npos);
  }

  auto bad = [](const char* key, const char* value) {
    Config k;
    k.set(key, value);
    CHECK_THROWS_AS(k.validate(), ArgumentError);
  };
  bad("tour.ratio", "1");
  bad("curriculum.intra_window", "150");
  bad("video.stride", "0");
  bad("tour.overlap_seconds", "90");
  bad("tour.accept_fraction", "1.5");
  bad("smooth.r", "0");
}
