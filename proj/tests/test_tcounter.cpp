#include <algorithm>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "qmpc/tcounter.hpp"

using namespace qmpc;

namespace {

SessionKey counter_key() {
  SessionKey k;
  k.initiator = 0;
  k.node = 7;
  k.purpose = Purpose::Counter;
  k.counter = 1;
  return k;
}

struct TcHost : Player {
  CounterPlayer cp;
  TcHost(const CounterLayout* L, SessionKey s, PlayerId self) : cp(L, s, self) {}
  void on_payload(Context& ctx, PlayerId from, const Payload& p) override {
    cp.on_payload(ctx, from, p);
  }
};

struct CounterSim {
  const CounterLayout* L;
  Simulation sim;
  std::vector<TcHost*> hosts;

  CounterSim(const CounterLayout& layout, Strategy strat, std::uint64_t seed)
      : L(&layout), sim([&] {
          SimConfig cfg;
          cfg.seed = seed;
          cfg.strategy = strat;
          return cfg;
        }()) {
    for (PlayerId i = 0; i < layout.n; ++i) {
      auto h = std::make_unique<TcHost>(&layout, counter_key(), i);
      hosts.push_back(h.get());
      sim.add_player(std::move(h));
    }
    sim.start();
  }

  void fire(const std::vector<PlayerId>& ids) {
    for (PlayerId i : ids) {
      Payload p;
      p.tag = Tag::BitFire;
      p.session = counter_key();
      sim.external(i, p);
    }
  }

  std::size_t done_count() const {
    std::size_t c = 0;
    for (auto* h : hosts) c += h->cp.done() ? 1 : 0;
    return c;
  }
};

std::vector<PlayerId> pick(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<PlayerId> ids(n);
  std::iota(ids.begin(), ids.end(), 0u);
  std::mt19937_64 g(seed * 9176 + 13);
  std::shuffle(ids.begin(), ids.end(), g);
  ids.resize(k);
  return ids;
}

// emission capture for transport-free CounterCore tests
struct Cap {
  std::vector<CounterMsg> out;
  CounterCore::Emit emit() {
    return [this](const CounterMsg& m) { out.push_back(m); };
  }
};

const CounterCore::Draw kDrawZero = [] { return std::uint64_t{0}; };

CounterMsg flag_to(std::uint32_t node, std::uint32_t origin = 9) {
  CounterMsg m;
  m.type = CounterMsg::Type::Flag;
  m.from_node = 0xffffffff;
  m.to_node = node;
  m.origin = origin;
  return m;
}

CounterMsg count_msg(std::uint32_t from, std::uint32_t to) {
  CounterMsg m;
  m.type = CounterMsg::Type::Count;
  m.from_node = from;
  m.to_node = to;
  return m;
}

}  // namespace

TEST_CASE("layout oracle: n=1024 tau=896 has depth 3 and a frozen actor map") {
  const CounterLayout L = build_layout(1024, 896);
  CHECK(L.D == 3);
  CHECK(L.log_n == 10);
  CHECK(L.absorb == 70);
  CHECK(L.forward_cap == 140);
  REQUIRE(L.nodes.size() == 26);  // 1 + 15 + 7 + 3
  REQUIRE(L.collection.size() == 3);

  // subtree j occupies a contiguous index block in heap order
  CHECK(L.collection[0] == std::vector<std::uint32_t>{8, 9, 10, 11, 12, 13, 14, 15});
  CHECK(L.collection[1] == std::vector<std::uint32_t>{19, 20, 21, 22});
  CHECK(L.collection[2] == std::vector<std::uint32_t>{24, 25});

  // actor assignment: root, subtree roots, then level by level across subtrees
  auto actor_of = [&](std::uint32_t ix) { return L.nodes[ix].actor; };
  CHECK(actor_of(0) == 1);
  CHECK(actor_of(1) == 2);   // subtree 1 root
  CHECK(actor_of(16) == 3);  // subtree 2 root
  CHECK(actor_of(23) == 4);  // subtree 3 root
  CHECK(actor_of(2) == 5);
  CHECK(actor_of(3) == 6);
  CHECK(actor_of(17) == 7);
  CHECK(actor_of(18) == 8);
  CHECK(actor_of(24) == 9);
  CHECK(actor_of(25) == 10);
  for (std::uint32_t i = 0; i < 4; ++i) {
    CHECK(actor_of(4 + i) == 11 + i);
    CHECK(actor_of(19 + i) == 15 + i);
    CHECK(actor_of(8 + i) == 19 + i);
    CHECK(actor_of(12 + i) == 23 + i);
  }

  // structural consistency
  CHECK(L.nodes[0].kids == std::vector<std::uint32_t>{1, 16, 23});
  CHECK(L.nodes[8].parent == 4);
  CHECK(L.nodes[4].parent == 2);
  CHECK(L.nodes[2].parent == 1);
  CHECK(L.nodes[1].parent == 0);
  for (std::uint32_t ix = 1; ix < L.nodes.size(); ++ix) {
    const CounterNode& nd = L.nodes[ix];
    const auto& pk = L.nodes[nd.parent].kids;
    CHECK(std::find(pk.begin(), pk.end(), ix) != pk.end());
    const bool leaf = nd.kids.empty();
    CHECK((nd.kind == CounterNode::Kind::Collection) == leaf);
    CHECK(L.node_of(nd.actor) == static_cast<std::int32_t>(ix));
  }
  // every tree node costs at most 3 log n messages; bound must clear tau
  CHECK(3 * L.log_n * L.nodes.size() < L.tau);
  CHECK(L.node_of(27) == -1);  // actors beyond the tree are relay-only
}

TEST_CASE("layout parameters: rejections and the direct fallback") {
  CHECK_THROWS_AS(build_layout(1024, 400), Error);   // tau < n/2
  CHECK_THROWS_AS(build_layout(1024, 1100), Error);  // tau > n
  // thresholds below 14 log2 n cannot fill even one collection layer
  CHECK_THROWS_AS(build_layout(64, 57), Error);
  CHECK_THROWS_AS(build_layout(16, 15), Error);
  CHECK_THROWS_AS(build_layout(256, 112), Error);  // ratio exactly 1 -> D = 0

  CHECK(auto_layout(64, 57).D == 0);
  CHECK(auto_layout(64, 57).nodes.size() == 1);
  CHECK(auto_layout(1024, 896).D == 3);

  const CounterLayout d = direct_layout(16, 15);
  CHECK(d.nodes.size() == 1);
  CHECK(d.actor_node[1] == 0);
  CHECK(d.node_of(2) == -1);
  CHECK_THROWS_AS(direct_layout(4, 5), Error);

  const CounterLayout m = build_layout(256, 224);
  CHECK(m.D == 1);
  CHECK(m.absorb == 56);
  CHECK(m.forward_cap == 112);
  REQUIRE(m.nodes.size() == 4);
  CHECK(m.collection[0] == std::vector<std::uint32_t>{2, 3});
  CHECK(m.nodes[1].actor == 2);
  CHECK(m.nodes[2].actor == 3);
  CHECK(m.nodes[3].actor == 4);
}

TEST_CASE("collection node: absorb to one Count, forward to cap, then drop") {
  const CounterLayout L = build_layout(256, 224);
  CounterCore c(&L, 3);  // hosts leaf node 2, parent 1, subtree 1 = D
  Cap cap;
  for (std::uint32_t i = 0; i < 55; ++i) c.on_msg(flag_to(2, i), cap.emit(), kDrawZero);
  CHECK(cap.out.empty());
  CHECK(c.flags_absorbed() == 55);
  CHECK_FALSE(c.count_sent());

  c.on_msg(flag_to(2, 55), cap.emit(), kDrawZero);
  REQUIRE(cap.out.size() == 1);
  CHECK(cap.out[0].type == CounterMsg::Type::Count);
  CHECK(cap.out[0].from_node == 2);
  CHECK(cap.out[0].to_node == 1);
  CHECK(c.count_sent());

  for (std::uint32_t i = 0; i < 112; ++i) {
    cap.out.clear();
    c.on_msg(flag_to(2, 1000 + i), cap.emit(), kDrawZero);
    REQUIRE(cap.out.size() == 1);
    CHECK(cap.out[0].type == CounterMsg::Type::Flag);
    CHECK(cap.out[0].from_node == 2);
    CHECK(cap.out[0].to_node == 0);  // last subtree overflows to the root
    CHECK(cap.out[0].origin == 1000 + i);
  }
  CHECK(c.flags_forwarded() == 112);

  cap.out.clear();
  c.on_msg(flag_to(2), cap.emit(), kDrawZero);
  CHECK(cap.out.empty());
  CHECK(c.flags_dropped() == 1);

  // misaddressed flags leave the node untouched
  c.on_msg(flag_to(3), cap.emit(), kDrawZero);
  CHECK(c.flags_dropped() == 1);
  CHECK(cap.out.empty());
}

TEST_CASE("overflow from an inner subtree lands one subtree deeper") {
  const CounterLayout L = build_layout(1024, 896);
  CounterCore c(&L, 19);  // subtree 1 leaf, node 8
  Cap cap;
  for (std::uint32_t i = 0; i < 70; ++i) c.on_msg(flag_to(8, i), cap.emit(), kDrawZero);
  REQUIRE(cap.out.size() == 1);
  CHECK(cap.out[0].to_node == 4);  // Count to its tree parent

  cap.out.clear();
  std::uint64_t roll = 0;
  auto draw = [&] { return roll; };
  roll = 1;
  c.on_msg(flag_to(8, 500), cap.emit(), draw);
  REQUIRE(cap.out.size() == 1);
  CHECK(cap.out[0].to_node == L.collection[1][1]);  // subtree 2, leaf index 1
  roll = 6;
  c.on_msg(flag_to(8, 501), cap.emit(), draw);
  CHECK(cap.out.back().to_node == L.collection[1][6 % 4]);
}

TEST_CASE("adding node forwards one Count once both kids reported") {
  const CounterLayout L = build_layout(1024, 512);
  REQUIRE(L.D == 2);
  CounterCore c(&L, 4);  // node 2, kids {4, 5}
  Cap cap;
  c.on_msg(count_msg(4, 2), cap.emit(), kDrawZero);
  CHECK(cap.out.empty());
  c.on_msg(count_msg(4, 2), cap.emit(), kDrawZero);  // duplicate kid
  CHECK(cap.out.empty());
  c.on_msg(count_msg(6, 2), cap.emit(), kDrawZero);  // not a kid
  CHECK(cap.out.empty());
  c.on_msg(count_msg(5, 2), cap.emit(), kDrawZero);
  REQUIRE(cap.out.size() == 1);
  CHECK(cap.out[0].type == CounterMsg::Type::Count);
  CHECK(cap.out[0].from_node == 2);
  CHECK(cap.out[0].to_node == 1);
  c.on_msg(count_msg(5, 2), cap.emit(), kDrawZero);
  CHECK(cap.out.size() == 1);  // never resent

  // flags addressed at an adding node are ignored
  c.on_msg(flag_to(2), cap.emit(), kDrawZero);
  CHECK(c.flags_absorbed() == 0);
  CHECK(cap.out.size() == 1);
}

TEST_CASE("root credits tau/2^j per subtree Count and terminates exactly at tau") {
  const CounterLayout L = build_layout(1024, 512);
  CounterCore root(&L, 1);
  Cap cap;
  root.on_msg(count_msg(1, 0), cap.emit(), kDrawZero);  // subtree 1: tau/2
  CHECK(root.root_sum_scaled() == 512ull * 4 / 2);
  root.on_msg(count_msg(1, 0), cap.emit(), kDrawZero);  // duplicate subtree
  CHECK(root.root_sum_scaled() == 1024);
  root.on_msg(count_msg(8, 0), cap.emit(), kDrawZero);  // subtree 2: tau/4
  CHECK(root.root_sum_scaled() == 1536);
  root.on_msg(count_msg(2, 0), cap.emit(), kDrawZero);  // not a root kid
  CHECK(root.root_sum_scaled() == 1536);
  CHECK(cap.out.empty());

  // 2048 scaled = tau; each direct flag is worth 2^D = 4
  for (std::uint32_t i = 0; i < 127; ++i) root.on_msg(flag_to(0, i), cap.emit(), kDrawZero);
  CHECK(root.root_sum_scaled() == 2044);
  CHECK_FALSE(root.done_seen());
  CHECK(cap.out.empty());
  root.on_msg(flag_to(0, 127), cap.emit(), kDrawZero);
  CHECK(root.done_seen());
  REQUIRE(cap.out.size() == 2);
  CHECK(cap.out[0].type == CounterMsg::Type::Done);
  CHECK(cap.out[0].to_actor == 2);
  CHECK(cap.out[1].to_actor == 3);

  // after Done the root ignores everything
  cap.out.clear();
  root.on_msg(flag_to(0), cap.emit(), kDrawZero);
  root.on_msg(count_msg(23, 0), cap.emit(), kDrawZero);
  CHECK(root.root_direct_flags() == 128);
  CHECK(root.root_sum_scaled() == 2048);
  CHECK(cap.out.empty());
}

TEST_CASE("fire emits a single flag no matter how often the bit is set") {
  const CounterLayout L = direct_layout(16, 15);
  CounterCore c(&L, 5);
  Cap cap;
  c.fire(cap.emit(), kDrawZero);
  c.fire(cap.emit(), kDrawZero);
  REQUIRE(cap.out.size() == 1);
  CHECK(cap.out[0].type == CounterMsg::Type::Flag);
  CHECK(cap.out[0].to_node == 0);  // direct mode: straight to the root
  CHECK(cap.out[0].origin == 5);
  CHECK(c.fired());
}

TEST_CASE("done relays once down the actor heap and clips at n") {
  const CounterLayout L = build_layout(256, 224);
  CounterCore c(&L, 3);
  Cap cap;
  CounterMsg d;
  d.type = CounterMsg::Type::Done;
  d.to_actor = 3;
  c.on_msg(d, cap.emit(), kDrawZero);
  REQUIRE(cap.out.size() == 2);
  CHECK(cap.out[0].to_actor == 6);
  CHECK(cap.out[1].to_actor == 7);
  c.on_msg(d, cap.emit(), kDrawZero);
  CHECK(cap.out.size() == 2);  // duplicate Done not relayed again

  const CounterLayout d8 = direct_layout(8, 8);
  CounterCore mid(&d8, 4);  // kids 8 and 9; only 8 exists
  Cap cap2;
  CounterMsg d4;
  d4.type = CounterMsg::Type::Done;
  d4.to_actor = 4;
  mid.on_msg(d4, cap2.emit(), kDrawZero);
  REQUIRE(cap2.out.size() == 1);
  CHECK(cap2.out[0].to_actor == 8);

  CounterCore tail(&d8, 5);  // kids 10 and 11: none exist
  Cap cap3;
  CounterMsg d5;
  d5.type = CounterMsg::Type::Done;
  d5.to_actor = 5;
  tail.on_msg(d5, cap3.emit(), kDrawZero);
  CHECK(cap3.out.empty());
  CHECK(tail.done_seen());
}

TEST_CASE("player mode completes at tau on every strategy, with tight load") {
  const CounterLayout L = build_layout(256, 224);
  for (Strategy strat : {Strategy::FIFO, Strategy::RandomDelay, Strategy::MaxChain}) {
    for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
      CounterSim cs(L, strat, seed);
      cs.fire(pick(256, 224, seed));
      cs.sim.run_all();
      CHECK(cs.done_count() == 256);
      const CounterCore& root = cs.hosts[0]->cp.core();
      // soundness: the root never certifies more ones than were fired
      CHECK(root.root_sum_scaled() <= std::uint64_t{224} << L.D);
      CHECK(cs.sim.metrics().max_per_player_msgs() <= 30 * L.log_n);
      CHECK(cs.sim.metrics().max_chain_depth <= 10 * L.log_n);
    }
  }
}

TEST_CASE("player mode with every bit set completes and keeps soundness") {
  const CounterLayout L = build_layout(256, 224);
  for (std::uint64_t seed : {21ull, 22ull}) {
    CounterSim cs(L, Strategy::RandomDelay, seed);
    cs.fire(pick(256, 256, seed));
    cs.sim.run_all();
    CHECK(cs.done_count() == 256);
    CHECK(cs.hosts[0]->cp.core().root_sum_scaled() <= std::uint64_t{256} << L.D);
    CHECK(cs.sim.metrics().max_per_player_msgs() <= 30 * L.log_n);
    CHECK(cs.sim.metrics().max_chain_depth <= 10 * L.log_n);
  }
}

TEST_CASE("n=1024 tau=896: absorb layers starve the root even when all fire") {
  // flow bound: 8 leaves absorb 560, then 280, then 140; at most 44 flags can
  // reach the root directly, so the best achievable sum is 448+224+112+44=828
  const CounterLayout L = build_layout(1024, 896);
  for (auto [strat, seed] : {std::pair{Strategy::FIFO, 31ull},
                             std::pair{Strategy::MaxChain, 32ull}}) {
    CounterSim cs(L, strat, seed);
    cs.fire(pick(1024, 1024, seed));
    cs.sim.run_all();
    CHECK(cs.done_count() == 0);
    const CounterCore& root = cs.hosts[0]->cp.core();
    CHECK_FALSE(root.done_seen());
    CHECK(root.root_sum_scaled() <= std::uint64_t{828} << L.D);
    CHECK(root.root_sum_scaled() >= std::uint64_t{700} << L.D);
  }
}

TEST_CASE("n=1024 tau=512: one fewer layer and the count closes") {
  const CounterLayout L = build_layout(1024, 512);
  for (auto [strat, seed] : {std::pair{Strategy::FIFO, 41ull},
                             std::pair{Strategy::MaxChain, 42ull}}) {
    CounterSim cs(L, strat, seed);
    cs.fire(pick(1024, 1024, seed));
    cs.sim.run_all();
    CHECK(cs.done_count() == 1024);
    CHECK(cs.hosts[0]->cp.core().root_sum_scaled() <= std::uint64_t{1024} << L.D);
  }
}

TEST_CASE("direct mode: fires below tau stall, tau fires finish") {
  const CounterLayout L = direct_layout(16, 15);
  for (Strategy strat : {Strategy::FIFO, Strategy::MaxChain}) {
    CounterSim below(L, strat, 51);
    below.fire(pick(16, 14, 7));
    below.sim.run_all();
    CHECK(below.done_count() == 0);
    CHECK(below.hosts[0]->cp.core().root_sum_scaled() == 14);

    CounterSim at(L, strat, 52);
    at.fire(pick(16, 15, 8));
    at.sim.run_all();
    CHECK(at.done_count() == 16);
  }
}

TEST_CASE("done relays are only accepted from the heap parent") {
  const CounterLayout L = direct_layout(8, 8);
  const SessionKey key = counter_key();

  struct Forger : Player {
    PlayerId target;
    explicit Forger(PlayerId t) : target(t) {}
    void on_start(Context& ctx) override {
      Payload p;
      p.tag = Tag::CountDone;
      p.session = []{
        SessionKey k;
        k.node = 7;
        k.purpose = Purpose::Counter;
        k.counter = 1;
        return k;
      }();
      p.a = target + 1;
      ctx.send(target, p);
    }
    void on_payload(Context&, PlayerId, const Payload&) override {}
  };

  auto build = [&](PlayerId forger_at) {
    SimConfig cfg;
    cfg.seed = 61;
    Simulation sim(cfg);
    std::vector<TcHost*> hosts(8, nullptr);
    for (PlayerId i = 0; i < 8; ++i) {
      if (i == forger_at) {
        sim.add_player(std::make_unique<Forger>(PlayerId{5}));
      } else {
        auto h = std::make_unique<TcHost>(&L, key, i);
        hosts[i] = h.get();
        sim.add_player(std::move(h));
      }
    }
    sim.start();
    sim.run_all();
    return hosts[5]->cp.done();
  };

  // player 5 is actor 6; its heap parent is actor 3 = player 2
  CHECK_FALSE(build(4));  // wrong relay source: ignored
  CHECK(build(2));        // correct parent: accepted
}

TEST_CASE("initial flags spread uniformly over the first collection layer") {
  const CounterLayout L = build_layout(1024, 896);
  std::vector<std::uint64_t> hits(8, 0);
  const int runs = 10;
  for (int r = 0; r < runs; ++r) {
    CounterSim cs(L, Strategy::FIFO, 100 + r);
    cs.fire(pick(1024, 1024, 100 + r));
    cs.sim.run_all();
    for (std::size_t leaf = 0; leaf < 8; ++leaf) {
      const CounterCore& c = cs.hosts[L.nodes[L.collection[0][leaf]].actor - 1]->cp.core();
      // everything a first-layer leaf sees is an initial flag
      hits[leaf] += c.flags_absorbed() + c.flags_forwarded() + c.flags_dropped();
    }
  }
  const double expect = runs * 1024.0 / 8.0;
  double chi2 = 0;
  std::uint64_t total = 0;
  for (std::uint64_t h : hits) {
    chi2 += (h - expect) * (h - expect) / expect;
    total += h;
  }
  CHECK(total == runs * 1024);
  CHECK(chi2 < 24.32);  // chi-square df=7 at p=0.999
}
