#include "qmpc/sharing.hpp"

#include <algorithm>

namespace qmpc {

void validate_group_margins(std::size_t q, std::uint32_t f, std::uint32_t d) {
  if (q < d + 4u * f + 1)
    fail(Errc::ParamsTooSmall, "group of " + std::to_string(q) + " cannot recover degree " +
                                   std::to_string(d) + " shares with " + std::to_string(f) +
                                   " bad members");
  // good members alone must reach the degree-2d decode threshold 2d + 2f + 1
  if (q < 2u * d + 3u * f + 1)
    fail(Errc::ParamsTooSmall, "group of " + std::to_string(q) +
                                   " cannot open degree-" + std::to_string(2 * d) +
                                   " products with " + std::to_string(f) + " bad members");
}

std::vector<ShamirShare> shamir_share(const Fp& F, std::mt19937_64& rng, fe secret,
                                      std::uint32_t degree,
                                      const std::vector<PlayerId>& recipients) {
  if (degree >= recipients.size())
    fail(Errc::DegreeTooHigh, "degree " + std::to_string(degree) + " needs more than " +
                                  std::to_string(recipients.size()) + " recipients");
  Poly poly = F.random_poly(rng, secret, degree);
  std::vector<ShamirShare> out;
  out.reserve(recipients.size());
  for (std::size_t k = 0; k < recipients.size(); ++k) {
    ShamirShare s;
    s.x = abscissa(k);
    s.value = F.eval(poly, s.x);
    s.degree = degree;
    out.push_back(s);
  }
  return out;
}

fe shamir_reconstruct(const Fp& F, const std::vector<ShamirShare>& shares) {
  std::vector<fe> xs, ys;
  for (const auto& s : shares) {
    xs.push_back(s.x);
    ys.push_back(s.value);
  }
  return F.interpolate_at(xs, ys, 0);
}

fe avss_rec(const Fp& F, const std::vector<ShamirShare>& shares, std::uint32_t degree,
            std::uint32_t max_bad) {
  if (shares.empty()) fail(Errc::ReconstructFailed, "no shares");
  for (const auto& s : shares)
    if (s.session != shares.front().session || s.dealer != shares.front().dealer)
      fail(Errc::ReconstructFailed, "shares from mixed sessions");
  std::vector<fe> xs, ys;
  for (const auto& s : shares) {
    xs.push_back(s.x);
    ys.push_back(s.value);
  }
  if (xs.size() < degree + 2 * max_bad + 1)
    fail(Errc::ReconstructFailed, "insufficient shares for the error bound");
  const std::size_t min_agree = xs.size() - max_bad;
  auto dec = decode_subsets(F, xs, ys, degree, min_agree);
  if (!dec.ok) fail(Errc::ReconstructFailed, "no polynomial fits enough shares");
  return dec.poly.empty() ? 0 : dec.poly[0];
}

// ---------------------------------------------------------------------------

static std::size_t bundle_coeffs(const std::vector<std::uint32_t>& degrees) {
  std::size_t n = 0;
  for (auto d : degrees) n += d + 1;
  return n;
}

void avss_deal(Context& ctx, const SharingParams& prm, const std::vector<fe>& secrets) {
  QMPC_CHECK(secrets.size() == prm.degrees.size(), "secret count mismatch");
  const Fp& F = ctx.field();
  const std::size_t q = prm.g.q();
  std::uint32_t coin_ix = 0;
  auto draw = [&]() -> fe {
    return prm.coin ? F.reduce(prm.coin(coin_ix++)) : F.random(ctx.rng());
  };
  // one bivariate per secret: M[u][v], degree d in both directions
  std::vector<std::vector<Poly>> mats;
  mats.reserve(secrets.size());
  for (std::size_t k = 0; k < secrets.size(); ++k) {
    const std::uint32_t d = prm.degrees[k];
    std::vector<Poly> m(d + 1, Poly(d + 1));
    for (std::uint32_t u = 0; u <= d; ++u)
      for (std::uint32_t v = 0; v <= d; ++v) m[u][v] = draw();
    m[0][0] = F.reduce(secrets[k]);
    mats.push_back(std::move(m));
  }
  for (std::size_t j = 0; j < q; ++j) {
    const fe aj = abscissa(j);
    Payload rowp, colp;
    rowp.tag = Tag::ShareRow;
    colp.tag = Tag::ShareCol;
    rowp.session = colp.session = prm.session;
    // receivers holding several slots pick their bundle by b
    rowp.b = colp.b = static_cast<std::uint32_t>(j);
    for (std::size_t k = 0; k < secrets.size(); ++k) {
      const std::uint32_t d = prm.degrees[k];
      const auto& m = mats[k];
      for (std::uint32_t u = 0; u <= d; ++u) {
        // row_j coefficient of x^u: sum_v m[u][v] aj^v
        fe c = 0, av = 1;
        for (std::uint32_t v = 0; v <= d; ++v) {
          c = F.add(c, F.mul(m[u][v], av));
          av = F.mul(av, aj);
        }
        rowp.vals.push_back(c);
      }
      for (std::uint32_t v = 0; v <= d; ++v) {
        fe c = 0, au = 1;
        for (std::uint32_t u = 0; u <= d; ++u) {
          c = F.add(c, F.mul(m[u][v], au));
          au = F.mul(au, aj);
        }
        colp.vals.push_back(c);
      }
    }
    ctx.send(prm.g.members[j], rowp);
    ctx.send(prm.g.members[j], colp);
  }
}

std::vector<fe> AvssSession::shares() const {
  std::vector<fe> out;
  out.reserve(rows_.size());
  for (const auto& r : rows_) out.push_back(r.empty() ? 0 : r[0]);
  return out;
}

void AvssSession::on_payload(Context& ctx, PlayerId from, const Payload& p) {
  if (p.session != prm_.session) return;
  switch (p.tag) {
    case Tag::ShareRow:
      if (from != prm_.dealer || direct_rows_) return;
      if (slot_ < 0 || p.b != static_cast<std::uint32_t>(slot_)) return;
      if (p.vals.size() != bundle_coeffs(prm_.degrees)) return;
      direct_rows_ = p.vals;
      try_adopt_direct(ctx);
      return;
    case Tag::ShareCol:
      if (from != prm_.dealer || direct_cols_) return;
      if (slot_ < 0 || p.b != static_cast<std::uint32_t>(slot_)) return;
      if (p.vals.size() != bundle_coeffs(prm_.degrees)) return;
      direct_cols_ = p.vals;
      try_adopt_direct(ctx);
      return;
    case Tag::Echo: {
      const int slot = prm_.g.sender_slot(p, from);
      if (slot < 0 || p.vals.size() != 2 * prm_.degrees.size()) return;
      register_echo(ctx, static_cast<std::size_t>(slot), p.vals);
      return;
    }
    case Tag::Ready: {
      const int slot = prm_.g.sender_slot(p, from);
      if (slot < 0) return;
      readys_.insert(static_cast<std::size_t>(slot));
      if (!anchored_ && readys_.size() >= prm_.g.f + 1) try_recover(ctx);
      maybe_ready(ctx);
      maybe_complete(ctx);
      return;
    }
    default:
      return;
  }
}

void AvssSession::try_adopt_direct(Context& ctx) {
  if (have_rows_ || !direct_rows_ || !direct_cols_) return;
  rows_.clear();
  cols_.clear();
  std::size_t off = 0;
  for (std::uint32_t d : prm_.degrees) {
    rows_.emplace_back(direct_rows_->begin() + off, direct_rows_->begin() + off + d + 1);
    cols_.emplace_back(direct_cols_->begin() + off, direct_cols_->begin() + off + d + 1);
    off += d + 1;
  }
  have_rows_ = true;
  send_echo(ctx);
  // re-examine buffered echoes against the adopted polynomials
  recount_matches(ctx.field());
  maybe_ready(ctx);
  maybe_complete(ctx);
}

void AvssSession::send_echo(Context& ctx) {
  if (echoed_ || !have_rows_ || slot_ < 0) return;
  echoed_ = true;
  const Fp& F = ctx.field();
  for (std::size_t i = 0; i < prm_.g.q(); ++i) {
    Payload p;
    p.tag = Tag::Echo;
    p.session = prm_.session;
    p.b = static_cast<std::uint32_t>(slot_);
    const fe ai = abscissa(i);
    for (std::size_t k = 0; k < rows_.size(); ++k) {
      p.vals.push_back(F.eval(rows_[k], ai));
      p.vals.push_back(F.eval(cols_[k], ai));
    }
    ctx.send(prm_.g.members[i], p);
  }
}

bool AvssSession::crossings_ok(const Fp& F, int sender_slot, const std::vector<fe>& vals) const {
  // sender i's echo to me: (row_i(a_j), col_i(a_j)); my col must hit the first
  // at a_i, my row the second
  if (sender_slot < 0 || vals.size() != 2 * rows_.size()) return false;
  const fe ai = abscissa(static_cast<std::size_t>(sender_slot));
  for (std::size_t k = 0; k < rows_.size(); ++k) {
    if (F.eval(cols_[k], ai) != F.reduce(vals[2 * k])) return false;
    if (F.eval(rows_[k], ai) != F.reduce(vals[2 * k + 1])) return false;
  }
  return true;
}

void AvssSession::recount_matches(const Fp& F) {
  match_.clear();
  for (const auto& [slot, vals] : echo_from_)
    if (crossings_ok(F, static_cast<int>(slot), vals)) match_.insert(slot);
}

void AvssSession::register_echo(Context& ctx, std::size_t slot, const std::vector<fe>& vals) {
  if (!echo_from_.emplace(slot, vals).second) return;  // first echo only
  if (have_rows_ && crossings_ok(ctx.field(), static_cast<int>(slot), vals)) match_.insert(slot);
  if (!anchored_ && readys_.size() >= prm_.g.f + 1) try_recover(ctx);
  maybe_ready(ctx);
  maybe_complete(ctx);
}

void AvssSession::try_recover(Context& ctx) {
  // May run even when the dealer sent rows directly: a bad dealer can hand a
  // deceptive row to one victim while enough others hold a consistent core,
  // and the decoded core then overrides the direct copy.
  if (anchored_) return;
  const Fp& F = ctx.field();
  const std::uint32_t f = prm_.g.f;
  std::vector<Poly> rec_rows, rec_cols;
  for (std::size_t k = 0; k < prm_.degrees.size(); ++k) {
    const std::uint32_t d = prm_.degrees[k];
    std::vector<fe> xs, row_ys, col_ys;
    for (const auto& [slot, vals] : echo_from_) {
      xs.push_back(abscissa(slot));
      // their col value gives a point of my row, and vice versa
      row_ys.push_back(vals[2 * k + 1]);
      col_ys.push_back(vals[2 * k]);
    }
    const std::size_t w = xs.size();
    if (w < d + 2 * f + 1) return;
    const std::uint32_t max_err =
        std::min<std::uint32_t>(2 * f, static_cast<std::uint32_t>((w - d - 1) / 2));
    auto dr = decode_berlekamp_welch(F, xs, row_ys, d, max_err);
    auto dc = decode_berlekamp_welch(F, xs, col_ys, d, max_err);
    if (!dr.ok || !dc.ok) return;
    dr.poly.resize(d + 1);
    dc.poly.resize(d + 1);
    rec_rows.push_back(std::move(dr.poly));
    rec_cols.push_back(std::move(dc.poly));
  }
  rows_ = std::move(rec_rows);
  cols_ = std::move(rec_cols);
  have_rows_ = true;
  anchored_ = true;
  send_echo(ctx);
  recount_matches(F);
  maybe_ready(ctx);
}

void AvssSession::maybe_ready(Context& ctx) {
  if (ready_sent_) return;
  bool fire = false;
  if (have_rows_ && match_.size() >= prm_.g.q() - prm_.g.f) {
    anchored_ = true;
    fire = true;
  } else if (anchored_ && readys_.size() >= prm_.g.f + 1) {
    fire = true;
  }
  if (!fire || slot_ < 0) return;
  ready_sent_ = true;
  Payload p;
  p.tag = Tag::Ready;
  p.session = prm_.session;
  p.b = static_cast<std::uint32_t>(slot_);
  for (PlayerId m : prm_.g.members) ctx.send(m, p);
}

void AvssSession::maybe_complete(Context& ctx) {
  if (complete_) return;
  if (readys_.size() < prm_.g.q() - prm_.g.f) return;
  if (!anchored_) {
    try_recover(ctx);
    if (!anchored_) return;
  }
  complete_ = true;
}

// ---------------------------------------------------------------------------

Payload make_rec_share(const SessionKey& session, std::uint32_t index, fe value) {
  Payload p;
  p.tag = Tag::RecShare;
  p.session = session;
  p.a = index;
  p.vals = {value};
  return p;
}

void RecCollector::add(std::size_t slot, fe value) { got_.emplace(slot, value); }

std::optional<fe> RecCollector::value(const Fp& F) {
  if (value_) return value_;
  if (got_.size() < degree_ + 2 * max_bad_ + 1) return std::nullopt;
  std::vector<fe> xs, ys;
  for (const auto& [slot, v] : got_) {
    xs.push_back(abscissa(slot));
    ys.push_back(v);
  }
  auto dec = decode_berlekamp_welch(
      F, xs, ys, degree_,
      std::min<std::uint32_t>(max_bad_, static_cast<std::uint32_t>((xs.size() - degree_ - 1) / 2)));
  if (!dec.ok) return std::nullopt;
  value_ = dec.poly.empty() ? 0 : dec.poly[0];
  return value_;
}

// ---------------------------------------------------------------------------

static SessionKey verdict_key(const SessionKey& s) {
  SessionKey k = s;
  k.purpose = Purpose::Ba;
  k.counter = s.counter + 0x8000u;
  return k;
}

AvssShareRunner::AvssShareRunner(SharingParams prm, int my_slot)
    : session_(prm, my_slot), ba_(prm.g, verdict_key(prm.session), my_slot) {}

void AvssShareRunner::on_payload(Context& ctx, PlayerId from, const Payload& p) {
  if (p.tag == Tag::BaVal || p.tag == Tag::BaAux || p.tag == Tag::BaDone) {
    ba_.on_payload(ctx, from, p);
    return;
  }
  session_.on_payload(ctx, from, p);
  if (!voted_ && session_.complete()) {
    voted_ = true;
    ba_.set_input(ctx, 1);
  }
}

void AvssShareRunner::finish_votes(Context& ctx) {
  if (voted_) return;
  voted_ = true;
  ba_.set_input(ctx, 0);
}

std::optional<bool> AvssShareRunner::verdict() const {
  auto d = ba_.decided();
  if (!d) return std::nullopt;
  return *d == 1;
}

}  // namespace qmpc
