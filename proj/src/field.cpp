#include "qmpc/field.hpp"

#include <algorithm>
#include <limits>

namespace qmpc {

namespace {
thread_local std::uint64_t* g_steps = nullptr;
}

void Fp::set_step_counter(std::uint64_t* counter) { g_steps = counter; }
std::uint64_t* Fp::step_counter() { return g_steps; }
void Fp::step() {
  if (g_steps) ++*g_steps;
}

Fp::Fp(fe p) : p_(p) {
  QMPC_CHECK(p >= 2 && p < (1ull << 61), "modulus out of range");
}

fe Fp::inv(fe a) const {
  if (a == 0) fail(Errc::ZeroInverse, "inverse of zero");
  step();
  // extended Euclid on (a, p)
  std::int64_t t = 0, newt = 1;
  std::int64_t r = static_cast<std::int64_t>(p_), newr = static_cast<std::int64_t>(a);
  while (newr != 0) {
    std::int64_t q = r / newr;
    std::int64_t tmp = t - q * newt;
    t = newt;
    newt = tmp;
    tmp = r - q * newr;
    r = newr;
    newr = tmp;
  }
  QMPC_CHECK(r == 1, "modulus not prime or element not invertible");
  if (t < 0) t += static_cast<std::int64_t>(p_);
  return static_cast<fe>(t);
}

fe Fp::pow(fe a, std::uint64_t e) const {
  fe r = 1, b = a % p_;
  while (e) {
    if (e & 1) r = mul(r, b);
    b = mul(b, b);
    e >>= 1;
  }
  return r;
}

fe Fp::eval(const Poly& f, fe x) const {
  fe acc = 0;
  for (auto it = f.rbegin(); it != f.rend(); ++it) acc = add(mul(acc, x), *it);
  return acc;
}

Poly Fp::interpolate(const std::vector<fe>& xs, const std::vector<fe>& ys) const {
  QMPC_CHECK(xs.size() == ys.size() && !xs.empty(), "interpolate: bad sizes");
  const std::size_t k = xs.size();
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j)
      if (xs[i] == xs[j]) fail(Errc::DuplicateAbscissa, "repeated abscissa in interpolation");

  // master = prod (x - xs[i]); then per-point synthetic division
  Poly master(k + 1, 0);
  master[0] = 1;
  std::size_t deg = 0;
  for (std::size_t i = 0; i < k; ++i) {
    // multiply by (x - xs[i])
    for (std::size_t j = deg + 1; j > 0; --j)
      master[j] = sub(master[j - 1], mul(master[j], xs[i]));
    master[0] = mul(master[0], neg(xs[i]));
    ++deg;
  }

  Poly result(k, 0);
  Poly quotient(k, 0);
  for (std::size_t i = 0; i < k; ++i) {
    // quotient = master / (x - xs[i]) by synthetic division
    fe carry = master[k];
    for (std::size_t j = k; j-- > 0;) {
      quotient[j] = carry;
      carry = add(master[j], mul(carry, xs[i]));
    }
    fe denom = eval(quotient, xs[i]);
    fe scale = mul(ys[i], inv(denom));
    for (std::size_t j = 0; j < k; ++j) result[j] = add(result[j], mul(quotient[j], scale));
  }
  return result;
}

fe Fp::interpolate_at(const std::vector<fe>& xs, const std::vector<fe>& ys, fe x0) const {
  QMPC_CHECK(xs.size() == ys.size() && !xs.empty(), "interpolate_at: bad sizes");
  const std::size_t k = xs.size();
  fe acc = 0;
  for (std::size_t i = 0; i < k; ++i) {
    fe num = 1, den = 1;
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      if (xs[i] == xs[j]) fail(Errc::DuplicateAbscissa, "repeated abscissa in interpolation");
      num = mul(num, sub(x0, xs[j]));
      den = mul(den, sub(xs[i], xs[j]));
    }
    acc = add(acc, mul(ys[i], mul(num, inv(den))));
  }
  return acc;
}

Poly Fp::random_poly(std::mt19937_64& rng, fe secret, std::size_t degree) const {
  Poly f(degree + 1);
  f[0] = secret % p_;
  for (std::size_t i = 1; i <= degree; ++i) f[i] = random(rng);
  return f;
}

fe Fp::random(std::mt19937_64& rng) const {
  // rejection sampling keeps the draw uniform
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / p_ * p_;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % p_;
}

namespace {

// Gaussian elimination over F_p; returns false when the system is inconsistent.
// a is rows x (cols+1) augmented; solution written into out (size cols).
bool solve_linear(const Fp& F, std::vector<std::vector<fe>>& a, std::size_t cols,
                  std::vector<fe>& out) {
  const std::size_t rows = a.size();
  std::size_t rank = 0;
  std::vector<std::size_t> pivot_col;
  for (std::size_t col = 0; col < cols && rank < rows; ++col) {
    std::size_t sel = rank;
    while (sel < rows && a[sel][col] == 0) ++sel;
    if (sel == rows) continue;
    std::swap(a[sel], a[rank]);
    fe inv_p = F.inv(a[rank][col]);
    for (std::size_t j = col; j <= cols; ++j) a[rank][j] = F.mul(a[rank][j], inv_p);
    for (std::size_t r = 0; r < rows; ++r) {
      if (r == rank || a[r][col] == 0) continue;
      fe factor = a[r][col];
      for (std::size_t j = col; j <= cols; ++j)
        a[r][j] = F.sub(a[r][j], F.mul(factor, a[rank][j]));
    }
    pivot_col.push_back(col);
    ++rank;
  }
  for (std::size_t r = rank; r < rows; ++r)
    if (a[r][cols] != 0) return false;
  out.assign(cols, 0);  // free variables pinned to zero
  for (std::size_t r = 0; r < rank; ++r) out[pivot_col[r]] = a[r][cols];
  return true;
}

// polynomial long division q = num / den; returns false on nonzero remainder
bool poly_divide(const Fp& F, Poly num, const Poly& den, Poly& q) {
  std::size_t dd = den.size();
  while (dd > 0 && den[dd - 1] == 0) --dd;
  if (dd == 0) return false;
  std::size_t dn = num.size();
  while (dn > 0 && num[dn - 1] == 0) --dn;
  if (dn == 0) {
    q.assign(1, 0);
    return true;
  }
  if (dn < dd) return false;
  q.assign(dn - dd + 1, 0);
  fe lead_inv = F.inv(den[dd - 1]);
  for (std::size_t qi = dn - dd + 1; qi-- > 0;) {
    fe coef = F.mul(num[qi + dd - 1], lead_inv);
    q[qi] = coef;
    if (coef != 0)
      for (std::size_t j = 0; j < dd; ++j)
        num[qi + j] = F.sub(num[qi + j], F.mul(coef, den[j]));
  }
  for (std::size_t i = 0; i < dn; ++i)
    if (num[i] != 0) return false;
  return true;
}

}  // namespace

DecodeResult decode_berlekamp_welch(const Fp& F, const std::vector<fe>& xs,
                                    const std::vector<fe>& ys, std::size_t degree,
                                    std::size_t max_errors) {
  DecodeResult res;
  const std::size_t n = xs.size();
  if (n < degree + 1 || n < degree + 2 * max_errors + 1) return res;

  for (std::size_t e = 0; e <= max_errors; ++e) {
    // unknowns: Q coefficients (degree+e+1) then E coefficients (e), E monic
    const std::size_t qn = degree + e + 1;
    const std::size_t cols = qn + e;
    std::vector<std::vector<fe>> rows(n, std::vector<fe>(cols + 1, 0));
    for (std::size_t i = 0; i < n; ++i) {
      fe xp = 1;
      for (std::size_t j = 0; j < qn; ++j) {
        rows[i][j] = xp;
        xp = F.mul(xp, xs[i]);
      }
      xp = 1;
      for (std::size_t j = 0; j < e; ++j) {
        rows[i][qn + j] = F.neg(F.mul(ys[i], xp));
        xp = F.mul(xp, xs[i]);
      }
      rows[i][cols] = F.mul(ys[i], xp);  // y_i * x_i^e (monic term moved right)
    }
    std::vector<fe> sol;
    if (!solve_linear(F, rows, cols, sol)) continue;
    Poly Q(sol.begin(), sol.begin() + qn);
    Poly E(sol.begin() + qn, sol.end());
    E.push_back(1);  // monic
    Poly P;
    if (!poly_divide(F, Q, E, P)) continue;
    if (P.size() > degree + 1) {
      bool high = false;
      for (std::size_t j = degree + 1; j < P.size(); ++j)
        if (P[j] != 0) high = true;
      if (high) continue;
      P.resize(degree + 1);
    }
    std::vector<std::size_t> errs;
    for (std::size_t i = 0; i < n; ++i)
      if (F.eval(P, xs[i]) != ys[i]) errs.push_back(i);
    if (errs.size() <= max_errors) {
      res.ok = true;
      res.poly = std::move(P);
      if (res.poly.size() < degree + 1) res.poly.resize(degree + 1, 0);
      res.error_positions = std::move(errs);
      return res;
    }
  }
  return res;
}

DecodeResult decode_subsets(const Fp& F, const std::vector<fe>& xs,
                            const std::vector<fe>& ys, std::size_t degree,
                            std::size_t min_agree) {
  DecodeResult res;
  const std::size_t n = xs.size();
  const std::size_t k = degree + 1;
  if (n < k) return res;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  std::vector<fe> sx(k), sy(k);
  while (true) {
    for (std::size_t i = 0; i < k; ++i) {
      sx[i] = xs[idx[i]];
      sy[i] = ys[idx[i]];
    }
    Poly cand = F.interpolate(sx, sy);
    std::size_t agree = 0;
    std::vector<std::size_t> errs;
    for (std::size_t i = 0; i < n; ++i) {
      if (F.eval(cand, xs[i]) == ys[i])
        ++agree;
      else
        errs.push_back(i);
    }
    if (agree >= min_agree) {
      res.ok = true;
      res.poly = std::move(cand);
      if (res.poly.size() < degree + 1) res.poly.resize(degree + 1, 0);
      res.error_positions = std::move(errs);
      return res;
    }
    // next combination
    std::size_t i = k;
    while (i > 0) {
      --i;
      if (idx[i] != i + n - k) {
        ++idx[i];
        for (std::size_t j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
        break;
      }
      if (i == 0) return res;
    }
  }
}

}  // namespace qmpc
