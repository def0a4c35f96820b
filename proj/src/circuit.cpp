#include "qmpc/circuit.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace qmpc {

// ---------------------------------------------------------------------------
// graphs

void CircuitGraph::finalize() {
  if (n < 2 || m < 1) fail(Errc::ParseError, "need at least two inputs and one gate");
  if (modulus < 2) fail(Errc::ParseError, "bad modulus");
  if (gates.size() != m) fail(Errc::ParseError, "gate count mismatch");
  const std::uint32_t total = static_cast<std::uint32_t>(n + m);
  for (std::size_t k = 0; k < m; ++k) {
    const auto& g = gates[k];
    if (g.a < 1 || g.a > total || g.b < 1 || g.b > total)
      fail(Errc::ParseError,
           "gate " + std::to_string(n + 1 + k) + " references a missing node");
  }
  parents.assign(total + 1, {});
  for (std::size_t k = 0; k < m; ++k) {
    const std::uint32_t v = static_cast<std::uint32_t>(n + 1 + k);
    parents[gates[k].a].push_back(v);
    parents[gates[k].b].push_back(v);
  }
  for (std::uint32_t v = 1; v <= total; ++v)
    if (parents[v].size() > 2)
      fail(Errc::FanInViolation, "node " + std::to_string(v) + " feeds " +
                                     std::to_string(parents[v].size()) + " gate inputs");
  height.assign(total + 1, 0);
  std::vector<std::uint8_t> color(total + 1, 0);  // 0 new, 1 open, 2 done
  for (std::uint32_t i = 1; i <= n; ++i) color[i] = 2;
  for (std::uint32_t root = static_cast<std::uint32_t>(n) + 1; root <= total; ++root) {
    if (color[root] == 2) continue;
    std::vector<std::pair<std::uint32_t, int>> stack{{root, 0}};
    color[root] = 1;
    while (!stack.empty()) {
      auto& top = stack.back();
      const std::uint32_t v = top.first;
      const CircuitGate& gt = gate(v);
      if (top.second < 2) {
        const std::uint32_t c = top.second == 0 ? gt.a : gt.b;
        ++top.second;
        if (color[c] == 1)
          fail(Errc::CycleDetected, "cycle through node " + std::to_string(c));
        if (color[c] == 0) {
          color[c] = 1;
          stack.emplace_back(c, 0);
        }
      } else {
        height[v] = 1 + std::max(height[gt.a], height[gt.b]);
        color[v] = 2;
        stack.pop_back();
      }
    }
  }
}

std::uint32_t CircuitGraph::depth() const {
  std::uint32_t d = 0;
  for (std::uint32_t v = static_cast<std::uint32_t>(n) + 1; v <= n + m; ++v)
    d = std::max(d, height[v]);
  return d;
}

std::string CircuitGraph::to_text() const {
  std::ostringstream o;
  o << n << ' ' << m << ' ' << modulus << '\n';
  for (std::size_t k = 0; k < m; ++k)
    o << (n + 1 + k) << ' ' << (gates[k].op == GateOp::Add ? "ADD" : "MUL") << ' '
      << gates[k].a << ' ' << gates[k].b << '\n';
  return o.str();
}

static std::uint64_t num_tok(const std::string& s) {
  if (s.empty() || s.size() > 19) fail(Errc::ParseError, "bad number '" + s + "'");
  std::uint64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') fail(Errc::ParseError, "bad number '" + s + "'");
    v = v * 10 + static_cast<std::uint64_t>(c - '0');
  }
  return v;
}

CircuitGraph build_graph(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  CircuitGraph g;
  bool header = false;
  std::vector<char> seen;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    std::string t;
    while (ls >> t) tok.push_back(t);
    if (tok.empty()) continue;
    if (!header) {
      if (tok.size() != 3) fail(Errc::ParseError, "header needs 'n m modulus'");
      g.n = num_tok(tok[0]);
      g.m = num_tok(tok[1]);
      g.modulus = num_tok(tok[2]);
      if (g.n < 2 || g.n > (1u << 20) || g.m < 1 || g.m > (1u << 20))
        fail(Errc::ParseError, "unreasonable circuit size");
      g.gates.assign(g.m, {});
      seen.assign(g.m, 0);
      header = true;
      continue;
    }
    if (tok.size() > 4) fail(Errc::FanInViolation, "gate line with more than two children");
    if (tok.size() < 4) fail(Errc::ParseError, "gate line needs 'id op child child'");
    const std::uint64_t id = num_tok(tok[0]);
    if (id < g.n + 1 || id > g.n + g.m)
      fail(Errc::ParseError, "gate id " + tok[0] + " out of range");
    const std::size_t k = id - g.n - 1;
    if (seen[k]) fail(Errc::ParseError, "duplicate gate " + tok[0]);
    seen[k] = 1;
    CircuitGate gt;
    if (tok[1] == "ADD")
      gt.op = GateOp::Add;
    else if (tok[1] == "MUL")
      gt.op = GateOp::Mul;
    else
      fail(Errc::ParseError, "unknown op '" + tok[1] + "'");
    gt.a = static_cast<std::uint32_t>(num_tok(tok[2]));
    gt.b = static_cast<std::uint32_t>(num_tok(tok[3]));
    g.gates[k] = gt;
  }
  if (!header) fail(Errc::ParseError, "empty circuit");
  for (std::size_t k = 0; k < g.m; ++k)
    if (!seen[k]) fail(Errc::ParseError, "missing gate " + std::to_string(g.n + 1 + k));
  g.finalize();
  return g;
}

CircuitGraph addition_tree(std::size_t n, std::uint64_t modulus) {
  QMPC_CHECK(n >= 2, "addition tree needs two inputs");
  CircuitGraph g;
  g.n = n;
  g.m = n;
  g.modulus = modulus;
  g.gates.assign(n, {});
  std::vector<std::uint32_t> level(n);
  for (std::size_t i = 0; i < n; ++i) level[i] = static_cast<std::uint32_t>(i + 1);
  std::uint32_t next = static_cast<std::uint32_t>(n) + 2;
  while (level.size() > 1) {
    std::vector<std::uint32_t> up;
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) {
      const std::uint32_t id = next++;
      g.gates[id - n - 1] = {GateOp::Add, level[i], level[i + 1]};
      up.push_back(id);
    }
    if (level.size() % 2) up.push_back(level.back());
    level = std::move(up);
  }
  // one more gate so m matches n exactly; x1 gets fan-out two
  g.gates[0] = {GateOp::Add, level[0], 1};
  g.finalize();
  return g;
}

CircuitGraph inner_product(std::size_t n, std::uint64_t modulus) {
  QMPC_CHECK(n >= 2, "inner product needs two inputs");
  CircuitGraph g;
  g.n = n;
  g.m = 2 * n - 3;
  g.modulus = modulus;
  g.gates.assign(g.m, {});
  if (n == 2) {
    g.gates[0] = {GateOp::Mul, 1, 2};
    g.finalize();
    return g;
  }
  std::vector<std::uint32_t> level;
  for (std::size_t i = 1; i < n; ++i) {
    const std::uint32_t id = static_cast<std::uint32_t>(n + 1 + i);
    g.gates[id - n - 1] = {GateOp::Mul, static_cast<std::uint32_t>(i),
                          static_cast<std::uint32_t>(i + 1)};
    level.push_back(id);
  }
  std::uint32_t next = static_cast<std::uint32_t>(2 * n) + 1;
  while (level.size() > 1) {
    std::vector<std::uint32_t> up;
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) {
      const bool root = level.size() == 2;
      const std::uint32_t id = root ? static_cast<std::uint32_t>(n) + 1 : next++;
      g.gates[id - n - 1] = {GateOp::Add, level[i], level[i + 1]};
      up.push_back(id);
    }
    if (level.size() % 2) up.push_back(level.back());
    level = std::move(up);
  }
  g.finalize();
  return g;
}

CircuitGraph random_dag(std::size_t n, std::size_t m, std::uint64_t modulus,
                        std::uint64_t seed) {
  QMPC_CHECK(n >= 2 && m >= 1, "random dag needs two inputs and one gate");
  CircuitGraph g;
  g.n = n;
  g.m = m;
  g.modulus = modulus;
  g.gates.assign(m, {});
  std::mt19937_64 rng(seed ^ UINT64_C(0x9e3779b97f4a7c15));
  std::vector<std::pair<std::uint32_t, int>> avail;  // node, uses left
  std::deque<std::uint32_t> fresh;                   // inputs not yet consumed
  for (std::size_t i = 1; i <= n; ++i) {
    avail.push_back({static_cast<std::uint32_t>(i), 2});
    fresh.push_back(static_cast<std::uint32_t>(i));
  }
  auto use_at = [&](std::size_t ix) {
    const std::uint32_t id = avail[ix].first;
    if (--avail[ix].second == 0) {
      avail[ix] = avail.back();
      avail.pop_back();
    }
    return id;
  };
  auto pick = [&]() -> std::uint32_t {
    if (!fresh.empty()) {
      const std::uint32_t want = fresh.front();
      fresh.pop_front();
      for (std::size_t i = 0; i < avail.size(); ++i)
        if (avail[i].first == want) return use_at(i);
    }
    return use_at(rng() % avail.size());
  };
  for (std::size_t s = 0; s < m; ++s) {
    const std::uint32_t id = s + 1 == m ? static_cast<std::uint32_t>(n) + 1
                                        : static_cast<std::uint32_t>(n + 2 + s);
    CircuitGate gt;
    gt.op = (rng() & 1) ? GateOp::Mul : GateOp::Add;
    gt.a = pick();
    gt.b = pick();
    g.gates[id - n - 1] = gt;
    if (s + 1 < m) avail.push_back({id, 2});
  }
  g.finalize();
  return g;
}

CircuitGraph depth_chain(std::size_t n, std::uint32_t depth, std::uint64_t modulus) {
  QMPC_CHECK(depth >= 1 && n >= depth + 1, "depth chain needs depth+1 inputs");
  CircuitGraph g;
  g.n = n;
  g.m = depth;
  g.modulus = modulus;
  g.gates.assign(depth, {});
  if (depth == 1) {
    g.gates[0] = {GateOp::Add, 1, 2};
  } else {
    g.gates[1] = {GateOp::Add, 1, 2};  // node n+2
    for (std::uint32_t j = 2; j + 1 <= depth; ++j)
      g.gates[j] = {GateOp::Add, static_cast<std::uint32_t>(n) + j, j + 1};
    g.gates[0] = {GateOp::Add, static_cast<std::uint32_t>(n) + depth, depth + 1};
  }
  g.finalize();
  return g;
}

std::vector<fe> eval_clear(const Fp& F, const CircuitGraph& g,
                           const std::vector<fe>& inputs) {
  QMPC_CHECK(inputs.size() == g.n, "input count mismatch");
  QMPC_CHECK(!g.height.empty(), "graph not finalized");
  const std::uint32_t total = static_cast<std::uint32_t>(g.n + g.m);
  std::vector<fe> vals(total + 1, 0);
  for (std::size_t i = 0; i < g.n; ++i) vals[i + 1] = F.reduce(inputs[i]);
  std::vector<std::uint32_t> order;
  for (std::uint32_t v = static_cast<std::uint32_t>(g.n) + 1; v <= total; ++v)
    order.push_back(v);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return g.height[a] < g.height[b];
  });
  for (std::uint32_t v : order) {
    const CircuitGate& gt = g.gate(v);
    vals[v] = gt.op == GateOp::Add ? F.add(vals[gt.a], vals[gt.b])
                                   : F.mul(vals[gt.a], vals[gt.b]);
  }
  return vals;
}

std::vector<std::uint32_t> prep_degrees(GateOp op, std::uint32_t d) {
  if (op == GateOp::Add) return {d, d, d};
  return {d, d, d, d, 2 * d - 1, d, d};
}

}  // namespace qmpc

namespace qmpc {

// ---------------------------------------------------------------------------
// protocol host

static SessionKey skey(std::uint32_t ini, std::uint32_t node, Purpose pu,
                       std::uint32_t ctr) {
  SessionKey s;
  s.initiator = ini;
  s.node = node;
  s.purpose = pu;
  s.counter = ctr;
  return s;
}

CircuitHost::CircuitHost(const QuorumTable* table, const CircuitGraph* graph, fe input,
                         CircuitOptions opts)
    : table_(table), graph_(graph), input_(input), opts_(std::move(opts)) {
  dq_ = std::max<std::uint32_t>(1, table_->degree);
  const std::size_t n = graph_->n;
  tau_ = opts_.tau ? opts_.tau : n - n / 8;
  clayout_ = direct_layout(n, tau_);
}

const GroupView& CircuitHost::gview(QuorumId k) {
  auto it = gcache_.find(k);
  if (it == gcache_.end()) it = gcache_.emplace(k, table_->group(k)).first;
  return it->second;
}

CircuitHost::GateState* CircuitHost::gate_of(std::uint32_t node) {
  auto it = gates_.find(node);
  return it == gates_.end() ? nullptr : &it->second;
}

CircuitHost::InputState* CircuitHost::input_of(std::uint32_t node) {
  auto it = inputs_.find(node);
  return it == inputs_.end() ? nullptr : &it->second;
}

std::optional<fe> CircuitHost::child_mask_share(std::uint32_t child) const {
  if (graph_->is_input(child)) {
    auto it = inputs_.find(child);
    if (it == inputs_.end() || !it->second.finalized) return std::nullopt;
    return it->second.mask_share;
  }
  auto it = gates_.find(child);
  if (it == gates_.end() || !it->second.sums_ready) return std::nullopt;
  return it->second.r_share;
}

fe CircuitHost::draw(Context& ctx, std::uint32_t kind, std::uint32_t node,
                     std::uint32_t dslot, std::uint32_t index) {
  if (opts_.coin) {
    if (auto v = opts_.coin(kind, node, dslot, index)) return ctx.field().reduce(*v);
  }
  return ctx.field().random(ctx.rng());
}

void CircuitHost::deal_input(Context& ctx) {
  const std::uint32_t node = static_cast<std::uint32_t>(ctx.self()) + 1;
  const QuorumId k = graph_->quorum_of(node);
  const fe mask = draw(ctx, 0, node, 0, 0);
  const fe mv = ctx.field().add(ctx.field().reduce(input_), mask);
  rbc_send(ctx, gview(k), skey(ctx.self(), node, Purpose::Rbc, 0), {mv});
  SharingParams sp;
  sp.g = gview(k);
  sp.dealer = ctx.self();
  sp.session = skey(ctx.self(), node, Purpose::Avss, 0);
  sp.degrees = {dq_};
  sp.coin = [this, &ctx, node](std::uint32_t ix) { return draw(ctx, 1, node, 0, ix); };
  avss_deal(ctx, sp, {mask});
}

void CircuitHost::deal_prep(Context& ctx, GateState& st) {
  const GateOp op = graph_->gate(st.node).op;
  const auto degs = prep_degrees(op, dq_);
  const std::uint32_t node = st.node;
  const std::uint32_t ds = static_cast<std::uint32_t>(st.slot);
  std::vector<fe> secrets(degs.size());
  for (std::size_t i = 0; i < secrets.size(); ++i)
    secrets[i] = draw(ctx, 0, node, ds, static_cast<std::uint32_t>(i));
  SharingParams sp;
  sp.g = gview(graph_->quorum_of(node));
  sp.dealer = ctx.self();
  sp.session = skey(ctx.self(), node, Purpose::Prep, ds);
  sp.degrees = degs;
  sp.coin = [this, &ctx, node, ds](std::uint32_t ix) { return draw(ctx, 1, node, ds, ix); };
  avss_deal(ctx, sp, secrets);
}

void CircuitHost::on_start(Context& ctx) {
  const auto& T = *table_;
  const auto& G = *graph_;
  const std::uint32_t f = T.f;
  for (QuorumId k : T.member_of[ctx.self()]) {
    QuorumState qs;
    qs.slot = gview(k).slot_of(ctx.self());
    qs.counter.emplace(&clayout_, k + 1);
    quorums_.emplace(k, std::move(qs));
  }
  for (auto& [k, qs] : quorums_) {
    const std::uint32_t node = k + 1;
    const std::uint32_t owner = node - 1;
    InputState st;
    st.node = node;
    st.slot = qs.slot;
    st.rbc.emplace(gview(k), skey(owner, node, Purpose::Rbc, 0), qs.slot);
    SharingParams mp;
    mp.g = gview(k);
    mp.dealer = owner;
    mp.session = skey(owner, node, Purpose::Avss, 0);
    mp.degrees = {dq_};
    st.mask.emplace(std::move(mp), qs.slot);
    st.vote.emplace(gview(k), skey(0, node, Purpose::Ba, 0), qs.slot);
    inputs_.emplace(node, std::move(st));
  }
  for (std::uint32_t v = static_cast<std::uint32_t>(G.n) + 1; v <= G.n + G.m; ++v) {
    const QuorumId qv = G.quorum_of(v);
    auto qit = quorums_.find(qv);
    if (qit == quorums_.end()) continue;
    GateState st;
    st.node = v;
    st.slot = qit->second.slot;
    st.edge[0].child = G.gate(v).a;
    st.edge[1].child = G.gate(v).b;
    st.acs.emplace(gview(qv), skey(0, v, Purpose::Acs, 0), 2 * f + 1, st.slot, f + 1);
    const auto degs = prep_degrees(G.gate(v).op, dq_);
    for (std::uint32_t ds = 0; ds < 2 * f + 1; ++ds) {
      SharingParams sp;
      sp.g = gview(qv);
      sp.dealer = gview(qv).members[ds];
      sp.session = skey(static_cast<std::uint32_t>(sp.dealer), v, Purpose::Prep, ds);
      sp.degrees = degs;
      const SessionKey key = sp.session;
      avss_.emplace(key, AvssSession(std::move(sp), st.slot));
    }
    gates_.emplace(v, std::move(st));
  }
  for (auto& [v, st] : gates_)
    if (st.slot >= 0 && st.slot <= static_cast<int>(2 * f)) deal_prep(ctx, st);
  deal_input(ctx);
}

void CircuitHost::counter_emit(Context& ctx, QuorumId k, const CounterMsg& m) {
  auto qit = quorums_.find(k);
  if (qit == quorums_.end()) return;
  Payload p;
  p.session = skey(k, 0, Purpose::Counter, 0);
  switch (m.type) {
    case CounterMsg::Type::Flag:
      p.tag = Tag::Flag;
      p.a = m.to_node;
      p.vals = {m.origin, m.from_node};
      quorum_send(ctx, *table_, 0, static_cast<std::uint32_t>(qit->second.slot), p);
      return;
    case CounterMsg::Type::Done:
      if (m.to_actor < 2 || m.to_actor > graph_->n) return;
      p.tag = Tag::CountDone;
      p.a = m.to_actor;
      quorum_send(ctx, *table_, m.to_actor - 1,
                  static_cast<std::uint32_t>(qit->second.slot), p);
      return;
    default:
      QMPC_CHECK(false, "collection messages do not occur in direct layout");
  }
}

void CircuitHost::counter_poll(Context& ctx, QuorumId k) {
  auto qit = quorums_.find(k);
  if (qit == quorums_.end()) return;
  QuorumState& qs = qit->second;
  if (!qs.done_handled && qs.counter->done_seen()) {
    qs.done_handled = true;
    ctx.trace("counter_done", {static_cast<std::uint64_t>(k) + 1});
    auto it = inputs_.find(k + 1);
    if (it != inputs_.end()) poke_input(ctx, it->second);
  }
}

void CircuitHost::open_share(Context& ctx, std::uint32_t node, std::uint32_t id,
                             std::vector<fe> vals) {
  GateState* st = gate_of(node);
  if (!st) return;
  const GroupView& g = gview(graph_->quorum_of(node));
  Payload p;
  p.tag = Tag::MpcOpen;
  p.session = skey(0, node, Purpose::Gate, 2);
  p.a = id;
  p.b = static_cast<std::uint32_t>(st->slot);
  p.vals = std::move(vals);
  for (PlayerId to : g.members) ctx.send(to, p);
}

void CircuitHost::send_yhat(Context& ctx, std::uint32_t node, fe mv) {
  const auto& G = *graph_;
  const QuorumId mine = G.quorum_of(node);
  auto qit = quorums_.find(mine);
  if (qit == quorums_.end()) return;
  std::set<QuorumId> targets;
  for (std::uint32_t pv : G.parents[node]) targets.insert(G.quorum_of(pv));
  for (QuorumId to : targets) {
    Payload y;
    y.tag = Tag::Yhat;
    y.session = skey(mine, node, Purpose::Output, 0);
    y.a = node;
    y.vals = {mv};
    quorum_send(ctx, *table_, to, static_cast<std::uint32_t>(qit->second.slot), y);
  }
}

void CircuitHost::maybe_finish(Context& ctx) {
  if (out_ && !out_traced_) {
    out_traced_ = true;
    ctx.trace("output", {out_->first, out_->second});
  }
}

void CircuitHost::poke_input(Context& ctx, InputState& st) {
  const auto& G = *graph_;
  const Fp& F = ctx.field();
  const QuorumId k = st.node - 1;
  const GroupView& g = gview(k);
  const std::uint32_t f = table_->f;
  auto qit = quorums_.find(k);
  QMPC_CHECK(qit != quorums_.end(), "input state without membership");
  QuorumState& qs = qit->second;

  if (!st.holds && st.rbc->delivered() && st.mask->complete()) {
    st.holds = true;
    st.mask_share = st.mask->shares()[0];
  }
  if (st.holds && !st.claimed) {
    st.claimed = true;
    ctx.trace("claim", {st.node});
    Payload c;
    c.tag = Tag::IcReady;
    c.session = skey(0, st.node, Purpose::Ic, 1);
    c.b = static_cast<std::uint32_t>(st.slot);
    for (PlayerId to : g.members) ctx.send(to, c);
  }
  if (!st.fired && st.claims.size() >= (5 * g.q() + 7) / 8) {
    st.fired = true;
    ctx.trace("flag", {st.node});
    auto emit = [this, &ctx, k](const CounterMsg& mm) { counter_emit(ctx, k, mm); };
    qs.counter->fire(emit, [] { return std::uint64_t(0); });
    counter_poll(ctx, k);
  }
  if (qs.done_handled && !st.intent_sent) {
    st.intent_sent = true;
    Payload c;
    c.tag = Tag::MajBit;
    c.session = skey(0, st.node, Purpose::Ic, 0);
    c.b = static_cast<std::uint32_t>(st.slot);
    c.vals = {st.holds ? fe(1) : fe(0)};
    for (PlayerId to : g.members) ctx.send(to, c);
    if (st.holds && !st.proposed) {
      st.proposed = true;
      st.vote->set_input(ctx, 1);
    }
  }
  if (qs.done_handled && !st.proposed && st.intents.size() >= g.q() - f) {
    std::size_t ones = 0;
    for (const auto& [slot, b] : st.intents)
      if (b == 1) ++ones;
    st.proposed = true;
    st.vote->set_input(ctx, ones >= f + 1 ? 1 : 0);
  }
  if (!st.decision && st.vote->decided()) {
    st.decision = *st.vote->decided();
    ctx.trace("vote", {st.node, static_cast<std::uint64_t>(*st.decision)});
    qs.bit = static_cast<std::uint64_t>(*st.decision);
    poke_quorum(ctx, k);
  }
  if (!st.finalized && st.decision) {
    if (*st.decision == 1) {
      if (st.holds) {
        st.finalized = true;
        const auto& val = *st.rbc->delivered();
        st.mv = val.empty() ? 0 : F.reduce(val[0]);
      }
    } else {
      st.finalized = true;
      st.mv = F.reduce(opts_.default_input);
      st.mask_share = 0;
    }
    if (st.finalized) {
      ctx.trace("mask_share", {st.node, static_cast<std::uint64_t>(st.slot), st.mask_share});
      ctx.trace("yhat", {st.node, *st.mv});
      if (!st.yhat_sent) {
        st.yhat_sent = true;
        send_yhat(ctx, st.node, *st.mv);
      }
      for (std::uint32_t v : G.parents[st.node])
        for (int s = 0; s < 2; ++s)
          if ((s == 0 ? G.gate(v).a : G.gate(v).b) == st.node) poke_xfer(ctx, v, s);
    }
  }
}

void CircuitHost::poke_xfer(Context& ctx, std::uint32_t v, int side) {
  const auto& G = *graph_;
  auto it = xfers_.find({v, side});
  if (it == xfers_.end() || it->second.sent || !it->second.point) return;
  const std::uint32_t child = side == 0 ? G.gate(v).a : G.gate(v).b;
  const auto ms = child_mask_share(child);
  if (!ms) return;
  auto qit = quorums_.find(G.quorum_of(child));
  if (qit == quorums_.end()) return;
  it->second.sent = true;
  Payload d;
  d.tag = Tag::DeltaOpen;
  d.session = skey(0, v, Purpose::Gate, static_cast<std::uint32_t>(side));
  d.b = static_cast<std::uint32_t>(qit->second.slot);
  d.vals = {ctx.field().sub(*ms, *it->second.point)};
  for (PlayerId to : gview(G.quorum_of(v)).members) ctx.send(to, d);
}

void CircuitHost::poke_gate(Context& ctx, GateState& st) {
  const auto& G = *graph_;
  const Fp& F = ctx.field();
  const std::uint32_t v = st.node;
  const QuorumId qv = G.quorum_of(v);
  const GroupView& g = gview(qv);
  const GateOp op = G.gate(v).op;

  if (st.dzero.empty() && st.acs->result()) st.dzero = *st.acs->result();

  if (!st.sums_ready && !st.dzero.empty()) {
    bool all = true;
    for (std::size_t ds = 0; ds < st.dzero.size() && all; ++ds) {
      if (!st.dzero[ds]) continue;
      auto it = avss_.find(skey(static_cast<std::uint32_t>(g.members[ds]), v,
                                Purpose::Prep, static_cast<std::uint32_t>(ds)));
      if (it == avss_.end() || !it->second.complete()) all = false;
    }
    if (all) {
      st.sums_ready = true;
      for (std::size_t ds = 0; ds < st.dzero.size(); ++ds) {
        if (!st.dzero[ds]) continue;
        const auto sh = avss_
                            .at(skey(static_cast<std::uint32_t>(g.members[ds]), v,
                                     Purpose::Prep, static_cast<std::uint32_t>(ds)))
                            .shares();
        st.r_share = F.add(st.r_share, sh[0]);
        if (op == GateOp::Mul) {
          st.t1_share = F.add(st.t1_share, sh[1]);
          st.t2_share = F.add(st.t2_share, sh[2]);
          st.rho_share = F.add(st.rho_share, sh[3]);
          st.blind_share = F.add(st.blind_share, sh[4]);
        }
        st.edge[0].a_share = F.add(st.edge[0].a_share, sh[prep_aL(op)]);
        st.edge[1].a_share = F.add(st.edge[1].a_share, sh[prep_aR(op)]);
      }
      ctx.trace("mask_share", {v, static_cast<std::uint64_t>(st.slot), st.r_share});
      for (int s = 0; s < 2; ++s) {
        const QuorumId qc = G.quorum_of(st.edge[s].child);
        Payload h;
        h.tag = Tag::Handoff;
        h.session = skey(0, v, Purpose::Gate, static_cast<std::uint32_t>(s));
        h.a = static_cast<std::uint32_t>(st.slot);
        h.b = static_cast<std::uint32_t>(st.slot);
        h.vals = {st.edge[s].a_share};
        ctx.send(table_->quorums[qc][st.slot], h);
      }
      if (op == GateOp::Mul && !st.w_sent) {
        st.w_sent = true;
        const fe alpha = abscissa(static_cast<std::size_t>(st.slot));
        fe w = F.sub(F.mul(st.t1_share, st.t2_share), st.rho_share);
        w = F.sub(w, F.mul(alpha, st.blind_share));
        open_share(ctx, v, 0, {w});
      }
      // my gate mask is now final; transfers to parents may proceed
      for (std::uint32_t pv : G.parents[v])
        for (int s = 0; s < 2; ++s)
          if ((s == 0 ? G.gate(pv).a : G.gate(pv).b) == v) poke_xfer(ctx, pv, s);
    }
  }

  if (st.w_col && !st.w0) st.w0 = st.w_col->value(F);
  if (st.eps_col && !st.eps0) st.eps0 = st.eps_col->value(F);
  if (st.zeta_col && !st.zeta0) st.zeta0 = st.zeta_col->value(F);
  for (auto& e : st.edge) {
    if (e.delta && !e.delta0) e.delta0 = e.delta->value(F);
    if (!e.y_share && e.delta0 && e.mv && st.sums_ready)
      e.y_share = F.sub(F.sub(*e.mv, *e.delta0), e.a_share);
  }

  if (st.sums_ready && st.edge[0].y_share && st.edge[1].y_share) {
    if (op == GateOp::Mul && !st.eps_sent) {
      st.eps_sent = true;
      open_share(ctx, v, 1,
                 {F.sub(*st.edge[0].y_share, st.t1_share),
                  F.sub(*st.edge[1].y_share, st.t2_share)});
    }
    if (!st.z_sent) {
      if (op == GateOp::Add) {
        st.z_sent = true;
        open_share(ctx, v, 2,
                   {F.add(F.add(*st.edge[0].y_share, *st.edge[1].y_share), st.r_share)});
      } else if (st.w0 && st.eps0 && st.zeta0) {
        st.z_sent = true;
        fe z = F.add(*st.w0, st.rho_share);  // share of the reduced product
        z = F.add(z, F.mul(*st.eps0, st.t2_share));
        z = F.add(z, F.mul(*st.zeta0, st.t1_share));
        z = F.add(z, F.mul(*st.eps0, *st.zeta0));
        z = F.add(z, st.r_share);
        open_share(ctx, v, 2, {z});
      }
    }
  }

  if (st.z_col && !st.mv) {
    st.mv = st.z_col->value(F);
    if (st.mv) {
      ctx.trace("yhat", {v, *st.mv});
      if (!st.yhat_sent) {
        st.yhat_sent = true;
        send_yhat(ctx, v, *st.mv);
      }
    }
  }
  if (v == G.output_node() && st.mv && !st.omask_sent) {
    st.omask_sent = true;
    open_share(ctx, v, 3, {st.r_share});
  }
  if (st.omask_col && !st.omask0) st.omask0 = st.omask_col->value(F);
  // mv and the mask opening race; poke on whichever lands second
  if (v == G.output_node() && st.mv && st.omask0) poke_quorum(ctx, qv);
}

void CircuitHost::poke_quorum(Context& ctx, QuorumId k) {
  const auto& G = *graph_;
  auto qit = quorums_.find(k);
  if (qit == quorums_.end()) return;
  QuorumState& qs = qit->second;
  const std::uint32_t K = k + 1;

  if (!qs.sum_sent && qs.bit) {
    bool ready = true;
    std::uint64_t sum = *qs.bit;
    for (std::uint32_t kid : {2 * K, 2 * K + 1}) {
      if (kid > G.n) continue;
      auto it = qs.kid_sums.find(kid - 1);
      if (it == qs.kid_sums.end()) {
        ready = false;
        break;
      }
      sum += it->second;
    }
    if (ready) {
      qs.sum_sent = true;
      if (K == 1) {
        qs.total = sum;
        ctx.trace("size_s", {sum});
      } else {
        Payload s;
        s.tag = Tag::SumAgg;
        s.session = skey(k, 0, Purpose::SizeS, 0);
        s.a = K;
        s.vals = {sum};
        quorum_send(ctx, *table_, K / 2 - 1, static_cast<std::uint32_t>(qs.slot), s);
      }
    }
  }

  if (k == 0 && !qs.out && qs.total) {
    GateState* og = gate_of(G.output_node());
    if (og && og->mv && og->omask0)
      qs.out = {ctx.field().sub(*og->mv, *og->omask0), *qs.total};
  }

  if (qs.out && !qs.out_relayed) {
    qs.out_relayed = true;
    for (QuorumId kid : {2 * k + 1, 2 * k + 2}) {
      if (kid >= G.n) continue;
      Payload o;
      o.tag = Tag::OutVal;
      o.session = skey(k, 0, Purpose::Output, 0);
      o.vals = {qs.out->first, qs.out->second};
      quorum_send(ctx, *table_, kid, static_cast<std::uint32_t>(qs.slot), o);
    }
    Payload nm;
    nm.tag = Tag::OutVal;
    nm.session = skey(k, 0, Purpose::Output, 1);
    nm.b = static_cast<std::uint32_t>(qs.slot);
    nm.vals = {qs.out->first, qs.out->second};
    ctx.send(static_cast<PlayerId>(k), nm);
    if (!out_) out_ = qs.out;
    maybe_finish(ctx);
  }
}


QuorumTally& CircuitHost::tally(Purpose pu, QuorumId src, const Payload& p) {
  const std::uint64_t stream = (static_cast<std::uint64_t>(p.tag) << 32) | p.a;
  return tallies_
      .try_emplace({static_cast<std::uint8_t>(pu), src, stream}, gview(src).q())
      .first->second;
}

void CircuitHost::on_payload(Context& ctx, PlayerId from, const Payload& p) {
  const auto& G = *graph_;
  const Fp& F = ctx.field();
  const std::uint32_t f = table_->f;

  // resolves `from` to its slot inside quorum k, or -1
  auto slot_in = [&](QuorumId k) -> int {
    const auto& mem = gview(k).members;
    for (std::size_t i = 0; i < mem.size(); ++i)
      if (mem[i] == from) return static_cast<int>(i);
    return -1;
  };

  switch (p.session.purpose) {
    case Purpose::Avss: {
      InputState* st = input_of(p.session.node);
      if (!st || p.session.initiator != st->node - 1 || p.session.counter != 0) return;
      st->mask->on_payload(ctx, from, p);
      poke_input(ctx, *st);
      return;
    }
    case Purpose::Prep: {
      auto it = avss_.find(p.session);
      if (it == avss_.end()) return;
      it->second.on_payload(ctx, from, p);
      GateState* st = gate_of(p.session.node);
      if (st && it->second.complete())
        st->acs->set_complete(ctx, p.session.counter);
      if (st) poke_gate(ctx, *st);
      return;
    }
    case Purpose::Rbc: {
      InputState* st = input_of(p.session.node);
      if (!st || p.session.initiator != st->node - 1 || p.session.counter != 0) return;
      st->rbc->on_payload(ctx, from, p);
      poke_input(ctx, *st);
      return;
    }
    case Purpose::Ba: {
      InputState* st = input_of(p.session.node);
      if (!st || p.session.initiator != 0 || p.session.counter != 0) return;
      st->vote->on_payload(ctx, from, p);
      poke_input(ctx, *st);
      return;
    }
    case Purpose::Acs: {
      GateState* st = gate_of(p.session.node);
      if (!st || p.session.initiator != 0) return;
      st->acs->on_payload(ctx, from, p);
      poke_gate(ctx, *st);
      return;
    }
    case Purpose::Ic: {
      InputState* st = input_of(p.session.node);
      if (!st || p.session.initiator != 0) return;
      const int slot = slot_in(st->node - 1);
      if (slot < 0) return;
      if (p.session.counter == 1 && p.tag == Tag::IcReady) {
        st->claims.insert(slot);
        poke_input(ctx, *st);
      } else if (p.session.counter == 0 && p.tag == Tag::MajBit && p.vals.size() == 1) {
        st->intents.emplace(slot, p.vals[0] == 1 ? 1 : 0);
        poke_input(ctx, *st);
      }
      return;
    }
    case Purpose::Gate: {
      const std::uint32_t v = p.session.node;
      if (p.session.initiator != 0 || !G.is_gate(v)) return;
      if (p.tag == Tag::Handoff) {
        const int side = static_cast<int>(p.session.counter);
        if (side > 1 || p.vals.size() != 1) return;
        const std::uint32_t child = side == 0 ? G.gate(v).a : G.gate(v).b;
        auto qit = quorums_.find(G.quorum_of(child));
        if (qit == quorums_.end()) return;
        if (p.a != static_cast<std::uint32_t>(qit->second.slot)) return;
        const auto& qvm = gview(G.quorum_of(v)).members;
        if (p.a >= qvm.size() || qvm[p.a] != from) return;
        XferState& x = xfers_[{v, side}];
        if (x.point) return;
        x.point = F.reduce(p.vals[0]);
        poke_xfer(ctx, v, side);
      } else if (p.tag == Tag::DeltaOpen) {
        const int side = static_cast<int>(p.session.counter);
        if (side > 1 || p.vals.size() != 1) return;
        GateState* st = gate_of(v);
        if (!st) return;
        const std::uint32_t child = side == 0 ? G.gate(v).a : G.gate(v).b;
        const int slot = slot_in(G.quorum_of(child));
        if (slot < 0) return;
        EdgeState& e = st->edge[side];
        if (!e.delta) e.delta.emplace(dq_, 2 * f);
        e.delta->add(static_cast<std::size_t>(slot), F.reduce(p.vals[0]));
        poke_gate(ctx, *st);
      } else if (p.tag == Tag::MpcOpen) {
        if (p.session.counter != 2) return;
        GateState* st = gate_of(v);
        if (!st) return;
        const int slot = slot_in(G.quorum_of(v));
        if (slot < 0) return;
        if (p.a == 0 && p.vals.size() == 1) {
          if (!st->w_col) st->w_col.emplace(2 * dq_, f);
          st->w_col->add(static_cast<std::size_t>(slot), F.reduce(p.vals[0]));
        } else if (p.a == 1 && p.vals.size() == 2) {
          if (!st->eps_col) st->eps_col.emplace(dq_, f);
          if (!st->zeta_col) st->zeta_col.emplace(dq_, f);
          st->eps_col->add(static_cast<std::size_t>(slot), F.reduce(p.vals[0]));
          st->zeta_col->add(static_cast<std::size_t>(slot), F.reduce(p.vals[1]));
        } else if (p.a == 2 && p.vals.size() == 1) {
          if (!st->z_col) st->z_col.emplace(dq_, f);
          st->z_col->add(static_cast<std::size_t>(slot), F.reduce(p.vals[0]));
        } else if (p.a == 3 && p.vals.size() == 1 && v == G.output_node()) {
          if (!st->omask_col) st->omask_col.emplace(dq_, f);
          st->omask_col->add(static_cast<std::size_t>(slot), F.reduce(p.vals[0]));
        } else {
          return;
        }
        poke_gate(ctx, *st);
      }
      return;
    }
    case Purpose::Output: {
      if (p.tag == Tag::Yhat && p.session.counter == 0) {
        const std::uint32_t c = p.session.node;
        if (p.a != c || p.vals.size() != 1 || c < 1 || c > G.node_count()) return;
        const QuorumId src = p.session.initiator;
        if (src >= G.n || src != G.quorum_of(c)) return;
        const int slot = slot_in(src);
        if (slot < 0) return;
        auto& tal = tally(Purpose::Output, src, p);
        auto acc = tal.add(static_cast<std::size_t>(slot), p);
        if (!acc) return;
        const fe mv = F.reduce(acc->vals[0]);
        for (auto& [v, st] : gates_) {
          bool poked = false;
          for (auto& e : st.edge) {
            if (e.child == c && !e.mv) {
              e.mv = mv;
              poked = true;
            }
          }
          if (poked) poke_gate(ctx, st);
        }
      } else if (p.tag == Tag::OutVal && p.session.counter == 0) {
        const QuorumId src = p.session.initiator;
        if (src >= G.n || p.vals.size() != 2) return;
        const int slot = slot_in(src);
        if (slot < 0) return;
        auto& tal = tally(Purpose::Output, src, p);
        auto acc = tal.add(static_cast<std::size_t>(slot), p);
        if (!acc) return;
        for (QuorumId kid : {2 * src + 1, 2 * src + 2}) {
          if (kid >= G.n) continue;
          auto qit = quorums_.find(kid);
          if (qit == quorums_.end() || qit->second.out) continue;
          qit->second.out = {F.reduce(acc->vals[0]), acc->vals[1]};
          poke_quorum(ctx, kid);
        }
      } else if (p.tag == Tag::OutVal && p.session.counter == 1) {
        const QuorumId src = p.session.initiator;
        if (src != static_cast<QuorumId>(ctx.self()) || src >= G.n || p.vals.size() != 2)
          return;
        const int slot = slot_in(src);
        if (slot < 0) return;
        auto& seen = namesake_[{F.reduce(p.vals[0]), p.vals[1]}];
        seen.insert(slot);
        if (seen.size() >= f + 1 && !out_) {
          out_ = {F.reduce(p.vals[0]), p.vals[1]};
          maybe_finish(ctx);
        }
      }
      return;
    }
    case Purpose::SizeS: {
      if (p.tag != Tag::SumAgg || p.vals.size() != 1 || p.session.node != 0 ||
          p.session.counter != 0)
        return;
      const QuorumId src = p.session.initiator;
      const std::uint32_t srcnum = src + 1;
      if (src >= G.n || p.a != srcnum || srcnum < 2) return;
      const QuorumId parent = srcnum / 2 - 1;
      auto qit = quorums_.find(parent);
      if (qit == quorums_.end()) return;
      const int slot = slot_in(src);
      if (slot < 0) return;
      auto& tal = tally(Purpose::SizeS, src, p);
      auto acc = tal.add(static_cast<std::size_t>(slot), p);
      if (!acc) return;
      qit->second.kid_sums[src] = acc->vals[0];
      poke_quorum(ctx, parent);
      return;
    }
    case Purpose::Counter: {
      const QuorumId src = p.session.initiator;
      if (src >= G.n || p.session.node != 0 || p.session.counter != 0) return;
      const int slot = slot_in(src);
      if (slot < 0) return;
      auto& tal = tally(Purpose::Counter, src, p);
      auto acc = tal.add(static_cast<std::size_t>(slot), p);
      if (!acc) return;
      if (acc->tag == Tag::Flag) {
        if (acc->a != 0 || acc->vals.size() != 2) return;
        const std::uint64_t origin = acc->vals[0];
        if (origin < 1 || origin > G.n || src != origin - 1) return;
        auto qit = quorums_.find(0);
        if (qit == quorums_.end()) return;
        CounterMsg mm;
        mm.type = CounterMsg::Type::Flag;
        mm.from_node = static_cast<std::uint32_t>(acc->vals[1]);
        mm.to_node = 0;
        mm.origin = static_cast<std::uint32_t>(origin);
        auto emit = [this, &ctx](const CounterMsg& out) { counter_emit(ctx, 0, out); };
        qit->second.counter->on_msg(mm, emit, [] { return std::uint64_t(0); });
        ctx.trace("flag_root", {origin});
        counter_poll(ctx, 0);
      } else if (acc->tag == Tag::CountDone) {
        const std::uint32_t t = acc->a;
        if (t < 2 || t > G.n || src != t / 2 - 1) return;
        auto qit = quorums_.find(t - 1);
        if (qit == quorums_.end()) return;
        CounterMsg mm;
        mm.type = CounterMsg::Type::Done;
        mm.to_actor = t;
        auto emit = [this, &ctx, t](const CounterMsg& out) {
          counter_emit(ctx, t - 1, out);
        };
        qit->second.counter->on_msg(mm, emit, [] { return std::uint64_t(0); });
        counter_poll(ctx, t - 1);
      }
      return;
    }
    default:
      return;
  }
}

}  // namespace qmpc
