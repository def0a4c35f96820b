#include "qmpc/hwmpc.hpp"

#include <algorithm>

namespace qmpc {

std::size_t HwCircuit::muls() const {
  std::size_t m = 0;
  for (const auto& g : gates)
    if (g.op == HwOp::Mul) ++m;
  return m;
}

void HwCircuit::validate(std::size_t roles) const {
  if (owner.size() != n_inputs)
    fail(Errc::Internal, "input wire owners out of sync");
  for (auto o : owner)
    if (o >= roles) fail(Errc::Internal, "input owner beyond role count");
  for (std::size_t k = 0; k < gates.size(); ++k) {
    const std::uint32_t wid = static_cast<std::uint32_t>(n_inputs + k);
    const HwGate& g = gates[k];
    const bool two = g.op == HwOp::Add || g.op == HwOp::Sub || g.op == HwOp::Mul;
    if (g.a >= wid || (two && g.b >= wid))
      fail(Errc::Internal, "gate references a later wire");
  }
  for (auto w : outputs)
    if (w >= wires()) fail(Errc::Internal, "output wire out of range");
}

HwCircuit hw_sum_circuit(std::size_t roles) {
  HwCircuit c;
  c.n_inputs = roles;
  for (std::size_t i = 0; i < roles; ++i) c.owner.push_back(static_cast<std::uint32_t>(i));
  std::uint32_t acc = 0;
  for (std::uint32_t i = 1; i < roles; ++i) {
    c.gates.push_back({HwOp::Add, acc, i, 0});
    acc = static_cast<std::uint32_t>(c.n_inputs + c.gates.size() - 1);
  }
  c.outputs = {acc};
  return c;
}

HwCircuit hw_mul_circuit() {
  HwCircuit c;
  c.n_inputs = 2;
  c.owner = {0, 1};
  c.gates.push_back({HwOp::Mul, 0, 1, 0});
  c.outputs = {2};
  return c;
}

HwCircuit hw_majority_circuit(const Fp& F, std::size_t roles) {
  HwCircuit c;
  c.n_inputs = roles;
  for (std::size_t i = 0; i < roles; ++i) c.owner.push_back(static_cast<std::uint32_t>(i));
  auto wire_of_last = [&] { return static_cast<std::uint32_t>(c.n_inputs + c.gates.size() - 1); };
  std::uint32_t s = 0;
  for (std::uint32_t i = 1; i < roles; ++i) {
    c.gates.push_back({HwOp::Add, s, i, 0});
    s = wire_of_last();
  }
  // threshold polynomial: T(v) = 1 iff v >= ceil(5*roles/8), for v in 0..roles
  const std::size_t thresh = (5 * roles + 7) / 8;
  std::vector<fe> xs, ys;
  for (std::size_t v = 0; v <= roles; ++v) {
    xs.push_back(static_cast<fe>(v));
    ys.push_back(v >= thresh ? 1 : 0);
  }
  Poly t = F.interpolate(xs, ys);
  c.gates.push_back({HwOp::Scale, s, 0, t[1]});
  std::uint32_t res = wire_of_last();
  std::uint32_t pw = s;
  for (std::size_t i = 2; i < t.size(); ++i) {
    c.gates.push_back({HwOp::Mul, pw, s, 0});
    pw = wire_of_last();
    c.gates.push_back({HwOp::Scale, pw, 0, t[i]});
    c.gates.push_back({HwOp::Add, res, wire_of_last(), 0});
    res = wire_of_last();
  }
  c.gates.push_back({HwOp::Shift, res, 0, t[0]});
  c.outputs = {wire_of_last()};
  return c;
}

std::vector<fe> hw_eval_clear(const Fp& F, const HwCircuit& c,
                              const std::map<std::uint32_t, fe>& inputs) {
  std::vector<fe> wire(c.wires(), 0);
  for (std::uint32_t w = 0; w < c.n_inputs; ++w) {
    auto it = inputs.find(w);
    if (it != inputs.end()) wire[w] = F.reduce(it->second);
  }
  for (std::size_t k = 0; k < c.gates.size(); ++k) {
    const HwGate& g = c.gates[k];
    fe& out = wire[c.n_inputs + k];
    switch (g.op) {
      case HwOp::Add: out = F.add(wire[g.a], wire[g.b]); break;
      case HwOp::Sub: out = F.sub(wire[g.a], wire[g.b]); break;
      case HwOp::Mul: out = F.mul(wire[g.a], wire[g.b]); break;
      case HwOp::Scale: out = F.mul(wire[g.a], g.c); break;
      case HwOp::Shift: out = F.add(wire[g.a], g.c); break;
    }
  }
  std::vector<fe> out;
  for (auto w : c.outputs) out.push_back(wire[w]);
  return out;
}

// ---------------------------------------------------------------------------

struct HwMpcInstance::Role {
  int slot;
  std::vector<AvssSession> deals;
  AcsInstance acs;
  std::vector<char> reported;
  bool base_ready = false;
  std::vector<std::optional<fe>> wire;
  std::vector<fe> t1s, t2s, rs;            // summed triple shares per mul
  std::vector<std::optional<fe>> t3;
  std::vector<char> eps_sent, out_sent;
  std::map<std::uint32_t, RecCollector> coll;
  std::vector<fe> out_vals;
  bool done = false;

  Role(int s, std::vector<AvssSession> d, AcsInstance a, const HwCircuit& c)
      : slot(s), deals(std::move(d)), acs(std::move(a)), reported(deals.size(), 0),
        wire(c.wires()), t3(c.muls()), eps_sent(c.muls(), 0), out_sent(c.outputs.size(), 0) {}
};

SessionKey HwMpcInstance::deal_key(std::uint32_t dealer_role) const {
  SessionKey s;
  s.initiator = prm_.g.members[dealer_role];
  s.node = prm_.session.node;
  s.purpose = Purpose::Avss;
  s.counter = prm_.session.counter * 64 + dealer_role;
  return s;
}

SessionKey HwMpcInstance::acs_key() const {
  SessionKey s = prm_.session;
  s.purpose = Purpose::Acs;
  s.counter = prm_.session.counter * 64;
  return s;
}

// per-dealer bundle: the dealer's input wires in order, then five sharings
// per multiplication (t1, t2, rho, and two blinder free coins), then a pad
// so the bundle is never empty (qualification must stay observable)
std::vector<std::uint32_t> HwMpcInstance::bundle_layout(std::uint32_t dealer_role) const {
  std::vector<std::uint32_t> owned;
  for (std::uint32_t w = 0; w < prm_.circuit.n_inputs; ++w)
    if (prm_.circuit.owner[w] == dealer_role) owned.push_back(w);
  return owned;
}

HwMpcInstance::HwMpcInstance(HwParams prm, PlayerId self)
    : prm_(std::move(prm)), self_(self) {
  const std::size_t q = prm_.g.q();
  QMPC_CHECK(q <= 32, "role count beyond supported group size");
  QMPC_CHECK(prm_.session.counter < (1u << 20), "instance counter too large");
  prm_.circuit.validate(q);
  validate_group_margins(q, prm_.g.f, prm_.degree);
  muls_ = prm_.circuit.muls();
  QMPC_CHECK(muls_ == 0 || prm_.degree >= 1, "multiplications need degree >= 1");
  mul_ix_.assign(prm_.circuit.gates.size(), -1);
  int m = 0;
  for (std::size_t k = 0; k < prm_.circuit.gates.size(); ++k)
    if (prm_.circuit.gates[k].op == HwOp::Mul) mul_ix_[k] = m++;
  owned_count_.assign(q, 0);
  for (std::uint32_t w = 0; w < prm_.circuit.n_inputs; ++w)
    ++owned_count_[prm_.circuit.owner[w]];
  for (std::size_t slot = 0; slot < q; ++slot) {
    if (prm_.g.members[slot] != self_) continue;
    std::vector<AvssSession> deals;
    deals.reserve(q);
    for (std::uint32_t k = 0; k < q; ++k) {
      std::size_t count = bundle_layout(k).size() + 5 * muls_;
      if (count == 0) count = 1;
      SharingParams sp{prm_.g, prm_.g.members[k], deal_key(k),
                       std::vector<std::uint32_t>(count, prm_.degree)};
      deals.emplace_back(std::move(sp), static_cast<int>(slot));
    }
    roles_.push_back(std::make_unique<Role>(
        static_cast<int>(slot), std::move(deals),
        AcsInstance(prm_.g, acs_key(), q, static_cast<int>(slot)), prm_.circuit));
  }
}

HwMpcInstance::~HwMpcInstance() = default;

void HwMpcInstance::start(Context& ctx, const std::map<std::uint32_t, fe>& my_inputs) {
  const Fp& F = ctx.field();
  for (auto& rp : roles_) {
    const std::uint32_t role = static_cast<std::uint32_t>(rp->slot);
    std::vector<fe> secrets;
    for (std::uint32_t w : bundle_layout(role)) {
      auto it = my_inputs.find(w);
      secrets.push_back(it == my_inputs.end() ? 0 : F.reduce(it->second));
    }
    for (std::size_t m5 = 0; m5 < 5 * muls_; ++m5) secrets.push_back(F.random(ctx.rng()));
    if (secrets.empty()) secrets.push_back(F.random(ctx.rng()));
    SharingParams sp{prm_.g, self_, deal_key(role),
                     std::vector<std::uint32_t>(secrets.size(), prm_.degree)};
    avss_deal(ctx, sp, secrets);
  }
}

bool HwMpcInstance::mine(const SessionKey& s) const {
  if (s == prm_.session) return true;
  if (s.node != prm_.session.node) return false;
  const std::uint32_t base = prm_.session.counter * 64;
  if (s.counter < base || s.counter >= base + prm_.g.q()) return false;
  if (s.purpose == Purpose::Avss) return s.initiator == prm_.g.members[s.counter - base];
  if (s.purpose == Purpose::Acs) return s.initiator == prm_.session.initiator;
  return false;
}

void HwMpcInstance::open_send(Context& ctx, Role& r, std::uint32_t id, fe share) {
  Payload p;
  p.tag = Tag::MpcOpen;
  p.session = prm_.session;
  p.a = id;
  p.b = static_cast<std::uint32_t>(r.slot);
  p.vals = {share};
  for (PlayerId m : prm_.g.members) ctx.send(m, p);
}

void HwMpcInstance::progress(Context& ctx, Role& r) {
  const Fp& F = ctx.field();
  const HwCircuit& c = prm_.circuit;
  const std::uint32_t d = prm_.degree;
  const std::size_t q = prm_.g.q();
  if (!r.base_ready) {
    const auto& res = r.acs.result();
    if (!res) return;
    for (std::size_t k = 0; k < q; ++k)
      if ((*res)[k] == 1 && !r.deals[k].complete()) return;
    std::vector<std::vector<fe>> sh(q);
    for (std::size_t k = 0; k < q; ++k)
      if ((*res)[k] == 1) sh[k] = r.deals[k].shares();
    // input wires: dealt share when the owner qualified, default 0 otherwise
    std::vector<std::size_t> next_ix(q, 0);
    for (std::uint32_t w = 0; w < c.n_inputs; ++w) {
      const std::uint32_t o = c.owner[w];
      const std::size_t ix = next_ix[o]++;
      r.wire[w] = (*res)[o] == 1 ? sh[o][ix] : 0;
    }
    r.t1s.assign(muls_, 0);
    r.t2s.assign(muls_, 0);
    r.rs.assign(muls_, 0);
    const fe al = abscissa(static_cast<std::size_t>(r.slot));
    const fe ad = F.pow(al, d);
    for (std::size_t m = 0; m < muls_; ++m) {
      fe pi = 0, kap = 0;
      for (std::size_t k = 0; k < q; ++k) {
        if ((*res)[k] != 1) continue;
        const std::size_t base = owned_count_[k] + 5 * m;
        r.t1s[m] = F.add(r.t1s[m], sh[k][base + 0]);
        r.t2s[m] = F.add(r.t2s[m], sh[k][base + 1]);
        r.rs[m] = F.add(r.rs[m], sh[k][base + 2]);
        pi = F.add(pi, sh[k][base + 3]);
        kap = F.add(kap, sh[k][base + 4]);
      }
      // share of the blinded product polynomial, uniform off the free term
      fe cshare = F.sub(F.mul(r.t1s[m], r.t2s[m]), r.rs[m]);
      cshare = F.sub(cshare, F.mul(ad, pi));
      cshare = F.sub(cshare, F.mul(al, kap));
      open_send(ctx, r, static_cast<std::uint32_t>(3 * m), cshare);
    }
    r.base_ready = true;
  }
  // finalize triples whose masked product has decoded
  for (std::size_t m = 0; m < muls_; ++m) {
    if (r.t3[m]) continue;
    auto it = r.coll.find(static_cast<std::uint32_t>(3 * m));
    if (it == r.coll.end()) continue;
    auto z = it->second.value(F);
    if (z) r.t3[m] = F.add(*z, r.rs[m]);
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t k = 0; k < c.gates.size(); ++k) {
      const std::size_t wid = c.n_inputs + k;
      if (r.wire[wid]) continue;
      const HwGate& g = c.gates[k];
      const auto& A = r.wire[g.a];
      switch (g.op) {
        case HwOp::Add:
        case HwOp::Sub: {
          const auto& B = r.wire[g.b];
          if (!A || !B) break;
          r.wire[wid] = g.op == HwOp::Add ? F.add(*A, *B) : F.sub(*A, *B);
          changed = true;
          break;
        }
        case HwOp::Scale:
          if (!A) break;
          r.wire[wid] = F.mul(*A, g.c);
          changed = true;
          break;
        case HwOp::Shift:
          if (!A) break;
          r.wire[wid] = F.add(*A, g.c);
          changed = true;
          break;
        case HwOp::Mul: {
          const int m = mul_ix_[k];
          const auto& B = r.wire[g.b];
          if (!A || !B) break;
          if (!r.eps_sent[m]) {
            r.eps_sent[m] = 1;
            open_send(ctx, r, static_cast<std::uint32_t>(3 * m + 1), F.sub(*A, r.t1s[m]));
            open_send(ctx, r, static_cast<std::uint32_t>(3 * m + 2), F.sub(*B, r.t2s[m]));
          }
          if (!r.t3[m]) break;
          std::optional<fe> e, z;
          if (auto it = r.coll.find(static_cast<std::uint32_t>(3 * m + 1)); it != r.coll.end())
            e = it->second.value(F);
          if (auto it = r.coll.find(static_cast<std::uint32_t>(3 * m + 2)); it != r.coll.end())
            z = it->second.value(F);
          if (!e || !z) break;
          fe v = F.add(*r.t3[m], F.mul(*e, r.t2s[m]));
          v = F.add(v, F.mul(*z, r.t1s[m]));
          v = F.add(v, F.mul(*e, *z));
          r.wire[wid] = v;
          changed = true;
          break;
        }
      }
    }
  }
  const std::uint32_t out_base = static_cast<std::uint32_t>(3 * muls_);
  for (std::size_t i = 0; i < c.outputs.size(); ++i) {
    if (r.out_sent[i] || !r.wire[c.outputs[i]]) continue;
    r.out_sent[i] = 1;
    open_send(ctx, r, out_base + static_cast<std::uint32_t>(i), *r.wire[c.outputs[i]]);
  }
  if (!r.done) {
    for (const auto& w : r.wire)
      if (!w) return;
    std::vector<fe> outs;
    for (std::size_t i = 0; i < c.outputs.size(); ++i) {
      auto it = r.coll.find(out_base + static_cast<std::uint32_t>(i));
      if (it == r.coll.end()) return;
      auto v = it->second.value(F);
      if (!v) return;
      outs.push_back(*v);
    }
    r.out_vals = std::move(outs);
    r.done = true;
  }
}

void HwMpcInstance::on_payload(Context& ctx, PlayerId from, const Payload& p) {
  if (!mine(p.session)) return;
  const std::uint32_t base = prm_.session.counter * 64;
  for (auto& rp : roles_) {
    Role& r = *rp;
    switch (p.session.purpose) {
      case Purpose::Avss: {
        const std::uint32_t k = p.session.counter - base;
        r.deals[k].on_payload(ctx, from, p);
        if (r.deals[k].complete() && !r.reported[k]) {
          r.reported[k] = 1;
          r.acs.set_complete(ctx, k);
        }
        break;
      }
      case Purpose::Acs:
        r.acs.on_payload(ctx, from, p);
        break;
      default: {
        if (p.tag != Tag::MpcOpen || p.vals.size() != 1) return;
        const int slot = prm_.g.sender_slot(p, from);
        if (slot < 0) return;
        const std::uint32_t max_id =
            static_cast<std::uint32_t>(3 * muls_ + prm_.circuit.outputs.size());
        if (p.a >= max_id) return;
        const std::uint32_t deg =
            (p.a < 3 * muls_ && p.a % 3 == 0) ? 2 * prm_.degree : prm_.degree;
        auto it = r.coll.try_emplace(p.a, deg, prm_.g.f).first;
        it->second.add(static_cast<std::size_t>(slot), p.vals[0]);
        break;
      }
    }
    progress(ctx, r);
  }
}

bool HwMpcInstance::done() const {
  if (roles_.empty()) return true;
  for (const auto& r : roles_)
    if (!r->done) return false;
  return true;
}

std::vector<fe> HwMpcInstance::outputs() const {
  QMPC_CHECK(!roles_.empty() && roles_.front()->done, "outputs read before completion");
  return roles_.front()->out_vals;
}

std::optional<fe> HwMpcInstance::wire_share(std::size_t role_ix, std::uint32_t wire) const {
  return roles_.at(role_ix)->wire.at(wire);
}

const std::optional<std::vector<int>>& HwMpcInstance::qualified(std::size_t role_ix) const {
  return roles_.at(role_ix)->acs.result();
}

HwParams hw_coin_params(const GroupView& g, const SessionKey& session,
                        std::uint32_t degree, bool open) {
  HwParams prm;
  prm.g = g;
  prm.session = session;
  prm.degree = degree;
  prm.circuit = hw_sum_circuit(g.q());
  if (!open) prm.circuit.outputs.clear();
  return prm;
}

}  // namespace qmpc
