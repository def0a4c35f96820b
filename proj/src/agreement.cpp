#include "qmpc/agreement.hpp"

namespace qmpc {

std::uint64_t session_hash(const SessionKey& s) {
  std::uint64_t h = mix(s.initiator, (std::uint64_t(s.node) << 16) | s.counter);
  return mix(h, static_cast<std::uint64_t>(s.purpose));
}

static Payload make(Tag tag, const SessionKey& session, std::uint32_t a, std::uint32_t b,
                    std::vector<fe> vals) {
  Payload p;
  p.tag = tag;
  p.session = session;
  p.a = a;
  p.b = b;
  p.vals = std::move(vals);
  return p;
}

// ---------------------------------------------------------------------------
// RBC

void rbc_send(Context& ctx, const GroupView& g, const SessionKey& session,
              const std::vector<fe>& value) {
  // the initiator is identified by physical id, not slot; it may be external
  for (PlayerId m : g.members)
    ctx.send(m, make(Tag::RbcInit, session, 0, UINT32_MAX, value));
}

void RbcPeer::maybe_ready(Context& ctx, const std::vector<fe>& v) {
  if (ready_sent_) return;
  ready_sent_ = true;
  for (PlayerId m : g_.members)
    ctx.send(m, make(Tag::RbcReady, session_, 0, static_cast<std::uint32_t>(slot_), v));
}

void RbcPeer::on_payload(Context& ctx, PlayerId from, const Payload& p) {
  if (p.session != session_ || delivered_) return;
  const std::size_t q = g_.q();
  const std::uint32_t f = g_.f;
  switch (p.tag) {
    case Tag::RbcInit: {
      if (from != session_.initiator || echoed_) return;
      echoed_ = true;
      for (PlayerId m : g_.members)
        ctx.send(m, make(Tag::RbcEcho, session_, 0, static_cast<std::uint32_t>(slot_), p.vals));
      return;
    }
    case Tag::RbcEcho: {
      const int slot = g_.sender_slot(p, from);
      if (slot < 0) return;
      auto& s = echoes_[p.vals];
      s.insert(static_cast<std::size_t>(slot));
      if (s.size() >= (q + f + 1 + 1) / 2) maybe_ready(ctx, p.vals);  // ceil((q+f+1)/2)
      return;
    }
    case Tag::RbcReady: {
      const int slot = g_.sender_slot(p, from);
      if (slot < 0) return;
      auto& s = readies_[p.vals];
      s.insert(static_cast<std::size_t>(slot));
      if (s.size() >= f + 1) maybe_ready(ctx, p.vals);
      if (s.size() >= 2 * f + 1) delivered_ = p.vals;
      return;
    }
    default:
      return;
  }
}

// ---------------------------------------------------------------------------
// BA

void BaInstance::broadcast(Context& ctx, Tag tag, std::uint32_t round, int bit) {
  for (PlayerId m : g_.members)
    ctx.send(m, make(tag, session_, round, static_cast<std::uint32_t>(slot_),
                     {static_cast<fe>(bit)}));
}

int BaInstance::coin(Context& ctx, std::uint32_t round) const {
  return static_cast<int>(ctx.beacon().draw(session_hash(session_), round) & 1);
}

void BaInstance::decide(Context& ctx, int bit) {
  if (decided_) return;
  decided_ = bit;
  if (!done_sent_) {
    done_sent_ = true;
    broadcast(ctx, Tag::BaDone, 0, bit);
  }
}

void BaInstance::set_input(Context& ctx, int bit) {
  if (started_ || decided_) return;
  started_ = true;
  est_ = bit ? 1 : 0;
  broadcast(ctx, Tag::BaVal, 0, est_);
  progress(ctx);
}

void BaInstance::on_payload(Context& ctx, PlayerId from, const Payload& p) {
  if (p.session != session_) return;
  const int sslot = g_.sender_slot(p, from);
  if (sslot < 0) return;
  const std::size_t sender = static_cast<std::size_t>(sslot);
  if (p.vals.size() != 1) return;
  const int bit = p.vals[0] == 1 ? 1 : (p.vals[0] == 0 ? 0 : -1);
  if (bit < 0) return;  // not a bit, ignore
  if (p.a > round_ + 1000) return;  // implausible round, refuse to buffer
  if (decided_) {
    // stay responsive so laggards can finish later rounds
    if (p.tag == Tag::BaVal || p.tag == Tag::BaAux) {
      Round& r = rounds_[p.a];
      if (!r.aux_sent) {
        r.aux_sent = true;
        if (!r.relayed[*decided_]) {
          r.relayed[*decided_] = true;
          broadcast(ctx, Tag::BaVal, p.a, *decided_);
        }
        broadcast(ctx, Tag::BaAux, p.a, *decided_);
      }
    }
    return;
  }
  switch (p.tag) {
    case Tag::BaVal:
      rounds_[p.a].bval[bit].insert(sender);
      break;
    case Tag::BaAux:
      rounds_[p.a].aux.emplace(sender, bit);
      break;
    case Tag::BaDone: {
      done_.emplace(sender, bit);
      std::size_t c = 0;
      for (auto& [pl, b] : done_)
        if (b == bit) ++c;
      if (c >= g_.f + 1) decide(ctx, bit);
      return;
    }
    default:
      return;
  }
  if (started_ && !decided_) progress(ctx);
}

void BaInstance::progress(Context& ctx) {
  const std::size_t q = g_.q();
  const std::uint32_t f = g_.f;
  for (;;) {
    Round& r = rounds_[round_];
    // BVAL relay and binding
    for (int b = 0; b < 2; ++b) {
      if (!r.relayed[b] && r.bval[b].size() >= f + 1) {
        r.relayed[b] = true;
        broadcast(ctx, Tag::BaVal, round_, b);
      }
      if (r.bval[b].size() >= 2 * f + 1) r.bin[b] = true;
    }
    if (!r.aux_sent) {
      int pick = -1;
      if (r.bin[est_]) pick = est_;
      else if (r.bin[0]) pick = 0;
      else if (r.bin[1]) pick = 1;
      if (pick < 0) return;
      r.aux_sent = true;
      broadcast(ctx, Tag::BaAux, round_, pick);
    }
    if (r.moved) return;
    // count aux senders whose value is already bound
    std::size_t supported = 0;
    bool vals[2] = {false, false};
    for (auto& [pl, b] : r.aux) {
      if (r.bin[b]) {
        ++supported;
        vals[b] = true;
      }
    }
    if (supported < q - f) return;
    r.moved = true;
    const int c = coin(ctx, round_);
    if (vals[0] != vals[1]) {  // single value w
      const int w = vals[1] ? 1 : 0;
      est_ = w;
      if (w == c) {
        decide(ctx, w);
        return;
      }
    } else {
      est_ = c;
    }
    ++round_;
    broadcast(ctx, Tag::BaVal, round_, est_);
  }
}

// ---------------------------------------------------------------------------
// ACS

AcsInstance::AcsInstance(GroupView g, SessionKey base_session, std::size_t slots, int my_slot,
                         std::size_t cutoff_ones)
    : g_(std::move(g)),
      base_counter_(base_session.counter),
      cutoff_ones_(cutoff_ones == SIZE_MAX ? g_.q() - g_.f : cutoff_ones),
      inputted_(slots, 0) {
  slots_.reserve(slots);
  for (std::size_t k = 0; k < slots; ++k) {
    SessionKey s = base_session;
    s.counter = base_session.counter + static_cast<std::uint32_t>(k);
    slots_.emplace_back(g_, s, my_slot);
  }
}

void AcsInstance::set_complete(Context& ctx, std::size_t slot) {
  if (inputted_[slot]) return;
  inputted_[slot] = 1;
  slots_[slot].set_input(ctx, 1);
  check(ctx);
}

void AcsInstance::on_payload(Context& ctx, PlayerId from, const Payload& p) {
  const std::uint32_t k = p.session.counter - base_counter_;
  if (k >= slots_.size()) return;
  slots_[k].on_payload(ctx, from, p);
  check(ctx);
}

void AcsInstance::check(Context& ctx) {
  if (result_) return;
  std::size_t ones = 0, all = 0;
  for (auto& s : slots_) {
    if (s.decided()) {
      ++all;
      if (*s.decided() == 1) ++ones;
    }
  }
  if (!cutoff_ && ones >= cutoff_ones_) {
    cutoff_ = true;
    for (std::size_t k = 0; k < slots_.size(); ++k) {
      if (!inputted_[k]) {
        inputted_[k] = 1;
        slots_[k].set_input(ctx, 0);
      }
    }
    // inputs may have cascaded decisions
    ones = all = 0;
    for (auto& s : slots_) {
      if (s.decided()) {
        ++all;
        if (*s.decided() == 1) ++ones;
      }
    }
  }
  if (all == slots_.size()) {
    std::vector<int> out(slots_.size());
    for (std::size_t k = 0; k < slots_.size(); ++k) out[k] = *slots_[k].decided();
    result_ = std::move(out);
  }
}

}  // namespace qmpc
