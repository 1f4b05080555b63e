#include <catch_amalgamated.hpp>
#include <cmath>

#include "advclust/io.hpp"
#include "advclust/matrix.hpp"
#include "advclust/rng.hpp"
#include "testutil.hpp"

using namespace advclust;

TEST_CASE("load_matrix parses a small csv", "[dataset]") {
  testutil::TempDir dir;
  testutil::write_file(dir.file("m.csv"), "0,1\n2,3\n4,5\n");
  const FeatureMatrix m = load_matrix(dir.file("m.csv"));
  REQUIRE(m.n == 3);
  REQUIRE(m.d == 2);
  CHECK(m.at(0, 0) == 0.0);
  CHECK(m.at(2, 1) == 5.0);
}

TEST_CASE("load_matrix parses tsv", "[dataset]") {
  testutil::TempDir dir;
  testutil::write_file(dir.file("m.tsv"), "1.5\t-2\n0\t3e2\n");
  const FeatureMatrix m = load_matrix(dir.file("m.tsv"), TextFormat::tsv);
  REQUIRE(m.n == 2);
  CHECK(m.at(1, 1) == 300.0);
}

TEST_CASE("load_matrix rejects ragged rows with the row number", "[dataset]") {
  testutil::TempDir dir;
  testutil::write_file(dir.file("m.csv"), "0,1\n2,3,4\n");
  CHECK_THROWS_WITH(load_matrix(dir.file("m.csv")), Catch::Matchers::ContainsSubstring("row 2"));
}

TEST_CASE("load_matrix rejects non-finite and junk entries", "[dataset]") {
  testutil::TempDir dir;
  testutil::write_file(dir.file("nan.csv"), "0,nan\n");
  CHECK_THROWS_WITH(load_matrix(dir.file("nan.csv")),
                    Catch::Matchers::ContainsSubstring("non-finite"));
  testutil::write_file(dir.file("junk.csv"), "0,abc\n");
  CHECK_THROWS_WITH(load_matrix(dir.file("junk.csv")),
                    Catch::Matchers::ContainsSubstring("row 1, column 2"));
  CHECK_THROWS_AS(load_matrix(dir.file("missing.csv")), Error);
}

TEST_CASE("save/load round-trips exactly", "[dataset]") {
  testutil::TempDir dir;
  FeatureMatrix m = make_matrix(1, 2);
  m.at(0, 0) = 3.141592653589793;
  m.at(0, 1) = -1.0 / 3.0;
  save_matrix(m, dir.file("pi.csv"));
  const FeatureMatrix back = load_matrix(dir.file("pi.csv"));
  CHECK(back.at(0, 0) == m.at(0, 0));
  CHECK(back.at(0, 1) == m.at(0, 1));
}

TEST_CASE("save/load identity on random matrices", "[dataset]") {
  testutil::TempDir dir;
  Rng rng(7);
  for (int round = 0; round < 5; ++round) {
    const int n = 1 + static_cast<int>(rng.uniform_int(200));
    const int d = 1 + static_cast<int>(rng.uniform_int(64));
    FeatureMatrix m = make_matrix(n, d);
    for (double& v : m.values) v = rng.uniform(-1e6, 1e6);
    save_matrix(m, dir.file("rt.csv"));
    const FeatureMatrix back = load_matrix(dir.file("rt.csv"));
    REQUIRE(back.n == n);
    REQUIRE(back.d == d);
    for (std::size_t i = 0; i < m.values.size(); ++i) {
      const double rel = std::abs(back.values[i] - m.values[i]) /
                         std::max(1.0, std::abs(m.values[i]));
      REQUIRE(rel <= 1e-12);
    }
  }
}

TEST_CASE("save_matrix reports IO failure", "[dataset]") {
  const FeatureMatrix m = make_matrix(1, 1, 0.0);
  CHECK_THROWS_AS(save_matrix(m, "/nonexistent_dir/x.csv"), Error);
}

TEST_CASE("load_labels basics", "[dataset]") {
  testutil::TempDir dir;
  testutil::write_file(dir.file("l.txt"), "0\n0\n1\n");
  const LabelVector l = load_labels(dir.file("l.txt"));
  REQUIRE(l.labels == std::vector<int>{0, 0, 1});
  CHECK(l.k() == 2);

  testutil::write_file(dir.file("same.txt"), "5\n5\n5\n");
  CHECK(load_labels(dir.file("same.txt")).k() == 1);

  testutil::write_file(dir.file("bad.txt"), "a\n");
  CHECK_THROWS_WITH(load_labels(dir.file("bad.txt")),
                    Catch::Matchers::ContainsSubstring("line 1"));
}

TEST_CASE("clamp_to_box clamps and is idempotent", "[dataset]") {
  FeatureMatrix m = make_matrix(1, 3);
  m.values = {-5.0, 10.0, 300.0};
  const BoxBounds box{0.0, 255.0};
  const FeatureMatrix c = clamp_to_box(m, box);
  CHECK(c.values == std::vector<double>{0.0, 10.0, 255.0});

  const FeatureMatrix cc = clamp_to_box(c, box);
  CHECK(cc.values == c.values);

  // entries already inside are untouched
  FeatureMatrix inside = make_matrix(1, 2);
  inside.values = {1.0, 254.0};
  CHECK(clamp_to_box(inside, box).values == inside.values);
}

TEST_CASE("clamp_to_box caps digits-range data at 16", "[dataset]") {
  FeatureMatrix m = make_matrix(2, 2);
  m.values = {0.0, 8.0, 12.0, 16.0};
  for (double& v : m.values) v += 20.0;
  const FeatureMatrix c = clamp_to_box(m, BoxBounds{0.0, 16.0});
  for (double v : c.values) CHECK(v == 16.0);
}

TEST_CASE("clamp idempotence on random data", "[dataset]") {
  Rng rng(11);
  FeatureMatrix m = make_matrix(50, 8);
  for (double& v : m.values) v = rng.uniform(-100.0, 100.0);
  const BoxBounds box{-3.0, 42.0};
  const FeatureMatrix once = clamp_to_box(m, box);
  const FeatureMatrix twice = clamp_to_box(once, box);
  CHECK(once.values == twice.values);
}

TEST_CASE("ensure_finite flags the offending entry", "[dataset]") {
  FeatureMatrix m = make_matrix(2, 2, 1.0);
  m.at(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH(ensure_finite(m), Catch::Matchers::ContainsSubstring("row 2, column 1"));
}
