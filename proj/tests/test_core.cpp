#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "softcl/errors.hpp"
#include "softcl/matrix.hpp"
#include "softcl/rng.hpp"
#include "softcl/simcore.hpp"
#include "softcl/text.hpp"

using namespace softcl;
using doctest::Approx;

TEST_SUITE("core") {

TEST_CASE("matrix basics") {
  Matrix m{{1, 2, 3}, {4, 5, 6}};
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m(1, 2) == 6);
  CHECK(m.transposed()(2, 1) == 6);
  CHECK(Matrix::identity(3)(1, 1) == 1.0);
  CHECK(Matrix::identity(3)(1, 2) == 0.0);

  const std::size_t idx[] = {1, 0, 1};
  const Matrix g = gather_rows(m, idx);
  CHECK(g.rows() == 3);
  CHECK(g(0, 0) == 4);
  CHECK(g(1, 0) == 1);

  const Matrix parts[] = {m, Matrix{{7, 8, 9}}};
  CHECK(vstack(parts)(2, 1) == 8);

  Matrix bad(1, 2);
  CHECK_THROWS_AS(m += bad, ShapeError);
  m(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(m.all_finite());
}

TEST_CASE("mt19937_64 engine matches the standard's reference value") {
  Rng rng(5489);
  std::uint64_t x = 0;
  for (int i = 0; i < 10000; ++i) x = rng.next_u64();
  CHECK(x == 9981545732273789042ULL);
}

TEST_CASE("rng distributions are deterministic and in range") {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = a.uniform_index(7);
    CHECK(k == b.uniform_index(7));
    CHECK(k < 7);
    const double u = a.uniform01();
    CHECK(u == b.uniform01());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(a.normal() == b.normal());
  }
  CHECK_THROWS_AS(a.uniform_index(0), DomainError);
}

TEST_CASE("rng normal has roughly unit moments") {
  Rng rng(3);
  double s = 0.0;
  double s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("rng shuffle is a permutation and state round-trips") {
  Rng rng(9);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  rng.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);

  const std::string saved = rng.state();
  const std::uint64_t next = rng.next_u64();
  Rng other(0);
  other.restore(saved);
  CHECK(other.next_u64() == next);
  CHECK_THROWS_AS(other.restore("not a state"), DataError);
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("tokenize lowercases and splits on whitespace") {
  const auto t = tokenize("  Hello\tWORLD  ÄB ");
  REQUIRE(t.size() == 3);
  CHECK(t[0] == "hello");
  CHECK(t[1] == "world");
  CHECK(t[2] == "äb");
  CHECK(tokenize("   ").empty());
}

TEST_CASE("normalize_for_matching applies NFC, trims and collapses whitespace") {
  // "e" + combining acute vs precomposed U+00E9.
  CHECK(normalize_for_matching("  cafe\xCC\x81   au \t lait ") == "caf\xC3\xA9 au lait");
  CHECK(normalize_for_matching("Same") == "Same");
}

TEST_CASE("split_fields, trim and double formatting") {
  const auto f = split_fields("a\tb\t\tc", '\t');
  REQUIRE(f.size() == 4);
  CHECK(f[2].empty());
  CHECK(trim("  x y \n") == "x y");

  double v = 0.0;
  for (double x : {0.1, -1.0 / 3.0, 1e-300, 123456.789}) {
    REQUIRE(parse_double(format_double(x), v));
    CHECK(v == x);
  }
  CHECK_FALSE(parse_double("1.5x", v));
  CHECK_FALSE(parse_double("nan", v));
  CHECK_FALSE(parse_double("", v));
}

TEST_CASE("cosine examples") {
  const double a[] = {1, 0};
  const double b[] = {0, 1};
  const double c[] = {1, 1};
  CHECK(cosine(a, a) == Approx(1.0));
  CHECK(cosine(a, b) == Approx(0.0));
  CHECK(cosine(c, a) == Approx(0.70711).epsilon(1e-5));

  const double zero[] = {0, 0};
  const double three[] = {1, 2, 3};
  CHECK_THROWS_AS(cosine(zero, a), DomainError);
  CHECK_THROWS_AS(cosine(a, three), ShapeError);
}

TEST_CASE("scaled_similarity_matrix examples") {
  CHECK(scaled_similarity_matrix(Matrix{{1, 0}}, Matrix{{1, 0}}, 0.1).values(0, 0) == Approx(10.0));
  CHECK(scaled_similarity_matrix(Matrix{{1, 0}}, Matrix{{0, 1}}, 0.1).values(0, 0) == Approx(0.0));
  CHECK(std::abs(scaled_similarity_matrix(Matrix{{1, 1}}, Matrix{{1, 0}}, 0.5).values(0, 0) - 1.41421) < 1e-5);

  CHECK_THROWS_AS(scaled_similarity_matrix(Matrix{{1, 0}}, Matrix{{1, 0}, {0, 1}}, 0.1), ShapeError);
  CHECK_THROWS_AS(scaled_similarity_matrix(Matrix{{1, 0}}, Matrix{{1, 0}}, 0.0), DomainError);
  CHECK_THROWS_AS(scaled_similarity_matrix(Matrix{{1, 0}}, Matrix{{0, 0}}, 0.1), DomainError);
}

TEST_CASE("scaled similarity entries lie in [-1/tau, 1/tau] and match the oracle") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = oracle::random_matrix(5, 4, gen);
    const Matrix b = oracle::random_matrix(5, 4, gen);
    const auto s = scaled_similarity_matrix(a, b, 0.1);
    const Matrix ref = oracle::cos_matrix(a, b);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(std::abs(s.values(i, j)) <= 10.0);
        CHECK(s.values(i, j) == Approx(ref(i, j) / 0.1).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("row_softmax examples") {
  const Matrix half = row_softmax(Matrix{{0, 0}});
  CHECK(half(0, 0) == Approx(0.5));
  const Matrix p = row_softmax(Matrix{{1, 0}});
  CHECK(std::abs(p(0, 0) - 0.73106) < 1e-5);
  CHECK(std::abs(p(0, 1) - 0.26894) < 1e-5);
  const Matrix big = row_softmax(Matrix{{1000, 0}});
  CHECK(big.all_finite());
  CHECK(big(0, 0) == Approx(1.0));
  CHECK(big(0, 1) == Approx(0.0));

  Matrix bad{{1, std::numeric_limits<double>::infinity()}};
  CHECK_THROWS_AS(row_softmax(bad), NumericalError);
}

TEST_CASE("softmax rows and columns sum to one; log-softmax agrees") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix m = oracle::random_matrix(4, 6, gen, 5.0);
    const Matrix r = row_softmax(m);
    const Matrix c = col_softmax(m);
    const Matrix lr = row_log_softmax(m);
    const Matrix lc = col_log_softmax(m);
    const Matrix ref = oracle::softmax_rows(m);
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        s += r(i, j);
        CHECK(r(i, j) == Approx(ref(i, j)).epsilon(1e-12));
        CHECK(std::exp(lr(i, j)) == Approx(r(i, j)).epsilon(1e-12));
        CHECK(std::exp(lc(i, j)) == Approx(c(i, j)).epsilon(1e-12));
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    for (std::size_t j = 0; j < 6; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < 4; ++i) s += c(i, j);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("validate_embeddings") {
  CHECK_THROWS_AS(validate_embeddings(Matrix{}, "x"), ShapeError);
  Matrix m{{1, std::numeric_limits<double>::quiet_NaN()}};
  CHECK_THROWS_AS(validate_embeddings(m, "x"), NumericalError);
  CHECK_NOTHROW(validate_embeddings(Matrix{{1, 2}}, "x"));
}

}
