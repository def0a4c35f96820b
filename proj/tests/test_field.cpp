#include "doctest.h"
#include "qmpc/field.hpp"
#include "qmpc/rng.hpp"

using namespace qmpc;

namespace {

// independent oracle: scan the whole field for the inverse
fe brute_force_inverse(const Fp& F, fe a) {
  for (fe x = 1; x < F.p(); ++x)
    if (F.mul(a, x) == 1) return x;
  return 0;
}

}  // namespace

TEST_CASE("add basics") {
  Fp f7(7);
  CHECK(f7.add(3, 5) == 1);
  Fp big;  // default 2^31 - 1
  CHECK(big.add(big.p() - 1, 1) == 0);
  auto rng = seeded_rng(1, 1);
  for (int i = 0; i < 100; ++i) {
    fe a = big.random(rng);
    CHECK(big.add(a, 0) == a);
  }
}

TEST_CASE("multiplicative inverse") {
  Fp f7(7);
  CHECK(brute_force_inverse(f7, 2) == 4);  // oracle first
  CHECK(f7.inv(2) == 4);
  CHECK(f7.inv(1) == 1);
  Fp f11(11);
  CHECK(brute_force_inverse(f11, 10) == 10);
  CHECK(f11.inv(10) == 10);
  CHECK_THROWS_AS(f7.inv(0), Error);
  // inv agrees with the brute-force oracle on every element of small fields
  for (fe q : {7ull, 11ull, 101ull}) {
    Fp F(q);
    for (fe a = 1; a < q; ++a) CHECK(F.inv(a) == brute_force_inverse(F, a));
  }
}

TEST_CASE("field axioms on random triples") {
  Fp F;
  auto rng = seeded_rng(2, 7);
  for (int i = 0; i < 10000; ++i) {
    fe a = F.random(rng), b = F.random(rng), c = F.random(rng);
    CHECK(F.add(F.add(a, b), c) == F.add(a, F.add(b, c)));
    CHECK(F.mul(F.mul(a, b), c) == F.mul(a, F.mul(b, c)));
    CHECK(F.add(a, b) == F.add(b, a));
    CHECK(F.mul(a, b) == F.mul(b, a));
    CHECK(F.mul(a, F.add(b, c)) == F.add(F.mul(a, b), F.mul(a, c)));
  }
}

TEST_CASE("eval") {
  Fp f7(7);
  CHECK(f7.eval({5}, 3) == 5);     // constant
  CHECK(f7.eval({1, 2}, 3) == 0);  // 1 + 2*3 = 7 = 0
  Fp F;
  auto rng = seeded_rng(3, 3);
  Poly f = F.random_poly(rng, 1234, 3);
  CHECK(F.eval(f, 0) == f[0]);
}

TEST_CASE("interpolate") {
  Fp f7(7);
  SUBCASE("constant through three points") {
    Poly f = f7.interpolate({1, 2, 3}, {4, 4, 4});
    CHECK(f7.eval(f, 0) == 4);
    CHECK(f[1] == 0);
    CHECK(f[2] == 0);
  }
  SUBCASE("hand-solved 2x2 system in F_7") {
    // y = c0 + c1 x through (1,2),(2,4): c0 + c1 = 2, c0 + 2 c1 = 4
    // subtracting: c1 = 2, so c0 = 0
    Poly f = f7.interpolate({1, 2}, {2, 4});
    CHECK(f[0] == 0);
    CHECK(f[1] == 2);
  }
  SUBCASE("duplicate abscissa") {
    CHECK_THROWS_AS(f7.interpolate({1, 1}, {2, 3}), Error);
  }
  SUBCASE("round trip up to degree 32") {
    Fp F;
    auto rng = seeded_rng(4, 9);
    for (std::size_t d = 0; d <= 32; ++d) {
      Poly f = F.random_poly(rng, F.random(rng), d);
      std::vector<fe> xs, ys;
      for (std::size_t i = 0; i <= d; ++i) {
        xs.push_back(i + 1);
        ys.push_back(F.eval(f, i + 1));
      }
      Poly g = F.interpolate(xs, ys);
      for (std::size_t i = 0; i <= d; ++i) CHECK(f[i] == g[i]);
      for (std::size_t i = 0; i <= d; ++i) CHECK(F.eval(g, xs[i]) == ys[i]);
      CHECK(F.interpolate_at(xs, ys, 0) == f[0]);
    }
  }
}

TEST_CASE("robust decoding recovers from corrupted points") {
  Fp F;
  auto rng = seeded_rng(5, 11);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t q = 16, d = 3, e = 3;
    Poly f = F.random_poly(rng, F.random(rng), d);
    std::vector<fe> xs, ys;
    for (std::size_t i = 0; i < q; ++i) {
      xs.push_back(i + 1);
      ys.push_back(F.eval(f, i + 1));
    }
    // corrupt e positions
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < e; ++i) {
      std::size_t pos = rng() % q;
      ys[pos] = F.add(ys[pos], 1 + F.reduce(rng() % 97));
      bad.push_back(pos);
    }
    auto bw = decode_berlekamp_welch(F, xs, ys, d, e);
    REQUIRE(bw.ok);
    CHECK(F.eval(bw.poly, 0) == f[0]);
    for (std::size_t i = 0; i <= d; ++i) CHECK(bw.poly[i] == f[i]);
    // the subset-search oracle agrees
    auto ss = decode_subsets(F, xs, ys, d, q - e);
    REQUIRE(ss.ok);
    for (std::size_t i = 0; i <= d; ++i) CHECK(ss.poly[i] == bw.poly[i]);
  }
}

TEST_CASE("decoding degree 2d openings") {
  Fp F;
  auto rng = seeded_rng(6, 13);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t q = 16, d = 6, e = 3;  // 2d + 2e + 1 = 19 > 16? no: need q >= d+2e+1 = 13
    Poly f = F.random_poly(rng, F.random(rng), d);
    std::vector<fe> xs, ys;
    for (std::size_t i = 0; i < q; ++i) {
      xs.push_back(i + 1);
      ys.push_back(F.eval(f, i + 1));
    }
    for (std::size_t i = 0; i < e; ++i) {
      std::size_t pos = (rng() % (q / e)) + i * (q / e);  // distinct regions
      ys[pos] = F.add(ys[pos], 1 + F.reduce(rng() % 1013));
    }
    auto bw = decode_berlekamp_welch(F, xs, ys, d, e);
    REQUIRE(bw.ok);
    CHECK(F.eval(bw.poly, 0) == f[0]);
  }
}

TEST_CASE("decode reports failure when nothing fits") {
  Fp F(101);
  std::vector<fe> xs = {1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<fe> ys = {3, 14, 15, 92, 65, 35, 89, 79};  // junk
  auto r = decode_berlekamp_welch(F, xs, ys, 1, 1);
  CHECK_FALSE(r.ok);
  auto s = decode_subsets(F, xs, ys, 1, 7);
  CHECK_FALSE(s.ok);
}

TEST_CASE("step metering counts field operations") {
  Fp F;
  std::uint64_t steps = 0;
  Fp::set_step_counter(&steps);
  (void)F.add(1, 2);
  (void)F.mul(3, 4);
  (void)F.sub(5, 6);
  Fp::set_step_counter(nullptr);
  CHECK(steps == 3);
  (void)F.add(1, 2);
  CHECK(steps == 3);
}
