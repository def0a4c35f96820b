#pragma once
#include <cstdint>
#include <random>
#include <vector>

#include "qmpc/error.hpp"

namespace qmpc {

using fe = std::uint64_t;      // field element, always reduced mod p
using Poly = std::vector<fe>;  // coefficients, constant term first

constexpr fe kDefaultModulus = (1ull << 31) - 1;  // Mersenne prime 2^31 - 1

// Prime field context. All protocol arithmetic goes through this class so the
// per-player computation-step counter can be metered; one public operation
// counts as one step. Moduli up to 2^61 are supported (products fit __int128).
class Fp {
public:
  explicit Fp(fe p = kDefaultModulus);

  fe p() const { return p_; }

  fe add(fe a, fe b) const {
    step();
    fe s = a + b;
    return s >= p_ ? s - p_ : s;
  }
  fe sub(fe a, fe b) const {
    step();
    return a >= b ? a - b : a + p_ - b;
  }
  fe neg(fe a) const {
    step();
    return a == 0 ? 0 : p_ - a;
  }
  fe mul(fe a, fe b) const {
    step();
    return static_cast<fe>((static_cast<unsigned __int128>(a) * b) % p_);
  }
  fe inv(fe a) const;  // extended Euclid; ZeroInverse on a == 0
  fe pow(fe a, std::uint64_t e) const;
  fe reduce(std::uint64_t x) const { return x % p_; }

  fe eval(const Poly& f, fe x) const;

  // Unique interpolating polynomial of degree < xs.size().
  // Throws DuplicateAbscissa on repeated x values.
  Poly interpolate(const std::vector<fe>& xs, const std::vector<fe>& ys) const;
  // Value of the interpolating polynomial at x0 without building coefficients.
  fe interpolate_at(const std::vector<fe>& xs, const std::vector<fe>& ys, fe x0) const;

  // Uniform polynomial of exactly the given degree bound with f(0) = secret.
  Poly random_poly(std::mt19937_64& rng, fe secret, std::size_t degree) const;
  fe random(std::mt19937_64& rng) const;

  // Per-player metering hook: while set, every public operation increments it.
  static void set_step_counter(std::uint64_t* counter);
  static std::uint64_t* step_counter();

private:
  fe p_;
  static void step();
};

struct DecodeResult {
  bool ok = false;
  Poly poly;                                  // valid when ok
  std::vector<std::size_t> error_positions;   // indices into the input arrays
};

// Berlekamp-Welch decoding: the unique polynomial of degree <= degree agreeing
// with all but at most max_errors of the points, if one exists. Requires
// xs.size() >= degree + 2*max_errors + 1 for a meaningful guarantee.
DecodeResult decode_berlekamp_welch(const Fp& F, const std::vector<fe>& xs,
                                    const std::vector<fe>& ys, std::size_t degree,
                                    std::size_t max_errors);

// Exhaustive decoder: tries every (degree+1)-subset in lexicographic order and
// accepts the first interpolant consistent with at least min_agree points.
// Tractable for the quorum sizes used here (q <= 32); also serves as the
// independent oracle for decode_berlekamp_welch in tests.
DecodeResult decode_subsets(const Fp& F, const std::vector<fe>& xs,
                            const std::vector<fe>& ys, std::size_t degree,
                            std::size_t min_agree);

}  // namespace qmpc
