#include <algorithm>
#include <memory>
#include <set>

#include "doctest.h"
#include "qmpc/quorum.hpp"

using namespace qmpc;

namespace {

QuorumConfig cfg_of(std::size_t n, double t = 0.0, double delta = 0.05) {
  QuorumConfig c;
  c.n = n;
  c.t_fraction = t;
  c.delta = delta;
  return c;
}

SessionKey coin_key(std::uint32_t counter) {
  SessionKey s;
  s.purpose = Purpose::Coin;
  s.node = 9;
  s.counter = counter;
  return s;
}

}  // namespace

TEST_CASE("quorum sizes follow ceil(c log2 n)") {
  CHECK(quorum_size(cfg_of(16)) == 8);
  CHECK(quorum_size(cfg_of(32)) == 10);
  CHECK(quorum_size(cfg_of(64)) == 12);
  CHECK(quorum_size(cfg_of(256)) == 16);
  CHECK(quorum_size(cfg_of(1024)) == 20);
  CHECK(channel_threshold(8) == 7);
  CHECK(channel_threshold(12) == 11);
  CHECK(channel_threshold(16) == 14);
  CHECK(channel_threshold(20) == 18);
}

TEST_CASE("create_quorums: invariants hold across sizes, deterministic in seed") {
  for (std::size_t n : {16u, 32u, 64u, 256u, 1024u}) {
    auto cfg = cfg_of(n);
    QuorumTable t = create_quorums(cfg, 42);
    CHECK(t.quorums.size() == n);
    CHECK(t.q == quorum_size(cfg));
    CHECK(t.degree == (t.q + 3) / 4 - 1);
    validate_table(t, cfg, {});
    QuorumTable again = create_quorums(cfg, 42);
    CHECK(t.quorums == again.quorums);
    QuorumTable other = create_quorums(cfg, 43);
    CHECK(t.quorums != other.quorums);
  }
}

TEST_CASE("create_quorums: 64 players, no bad, c=2 gives 64 quorums of 12") {
  auto cfg = cfg_of(64);
  QuorumTable t = create_quorums(cfg, 7);
  CHECK(t.n == 64);
  CHECK(t.q == 12);
  for (const auto& m : t.quorums) CHECK(m.size() == 12);
  CHECK(table_max_bad(t, {}) == 0);
}

TEST_CASE("create_quorums: goodness audited over many seeds with a real bad set") {
  auto cfg = cfg_of(64, 7.0 / 64.0, 0.15);
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    for (const std::vector<PlayerId>& bad :
         {std::vector<PlayerId>{0, 1, 2, 3, 4, 5, 6},
          std::vector<PlayerId>{9, 17, 23, 31, 40, 55, 63}}) {
      QuorumTable t = create_quorums(cfg, seed, bad);
      validate_table(t, cfg, bad);
      // the raw goodness bound from the paper-level fraction
      CHECK(static_cast<double>(table_max_bad(t, bad)) <=
            (7.0 / 64.0 + 0.15) * t.q);
      CHECK(table_max_load(t) <= 24);  // 4 * log2(64)
    }
  }
}

TEST_CASE("create_quorums: rejects oversized bad sets and hopeless margins") {
  auto cfg = cfg_of(64, 0.1);
  std::vector<PlayerId> seven{0, 1, 2, 3, 4, 5, 6};
  CHECK_THROWS_AS(create_quorums(cfg_of(64, 0.05), 1, seven), Error);  // 7 > 3.2
  CHECK_THROWS_AS(create_quorums(cfg_of(64, 0.25), 1), Error);  // fraction cap

  // one resample try per quorum cannot hold 12 bad of 64 to one per quorum
  auto tight = cfg_of(64, 0.19, 0.0);
  tight.quorum_tries = 1;
  std::vector<PlayerId> bad;
  for (PlayerId p = 0; p < 12; ++p) bad.push_back(p * 5);
  CHECK_THROWS_AS(create_quorums(tight, 3, bad), Error);

  // load cap below the mean membership can never be met
  auto squeezed = cfg_of(64);
  squeezed.load_cap = 0.8;
  CHECK_THROWS_AS(create_quorums(squeezed, 3), Error);
}

TEST_CASE("quorum table json round trip") {
  auto cfg = cfg_of(32, 0.1);
  std::vector<PlayerId> bad{1, 12, 30};
  QuorumTable t = create_quorums(cfg, 99, bad);
  QuorumTable u = QuorumTable::from_json(t.to_json());
  CHECK(u.n == t.n);
  CHECK(u.q == t.q);
  CHECK(u.f == t.f);
  CHECK(u.degree == t.degree);
  CHECK(u.seed == t.seed);
  CHECK(u.resamples == t.resamples);
  CHECK(u.quorums == t.quorums);
  CHECK(u.member_of == t.member_of);
  validate_table(u, cfg, bad);
}

TEST_CASE("propagation tree shape") {
  PropagationTree tr{16};
  CHECK(!tr.parent(0));
  CHECK(*tr.parent(1) == 0);
  CHECK(*tr.parent(2) == 0);
  CHECK(*tr.parent(15) == 7);
  CHECK(tr.children(0) == std::vector<QuorumId>{1, 2});
  CHECK(tr.children(7) == std::vector<QuorumId>{15});
  CHECK(tr.children(8).empty());
  CHECK(tr.depth(0) == 0);
  CHECK(tr.depth(2) == 1);
  CHECK(tr.depth(15) == 4);
  CHECK(tr.height() == 4);
  // every non-root is its parent's child
  for (QuorumId k = 1; k < 16; ++k) {
    auto kids = tr.children(*tr.parent(k));
    CHECK(std::find(kids.begin(), kids.end(), k) != kids.end());
  }
}

TEST_CASE("quorum tally: 7/8 acceptance rule") {
  auto mk = [](fe v) {
    Payload p;
    p.tag = Tag::Yhat;
    p.a = 5;
    p.vals = {v};
    return p;
  };
  QuorumTally tally(12);
  // two conflicting senders never reach the bar
  CHECK(!tally.add(4, mk(9)));
  CHECK(!tally.add(7, mk(9)));
  // duplicate votes do not advance the count
  for (int rep = 0; rep < 3; ++rep) CHECK(!tally.add(0, mk(5)));
  for (std::uint32_t s = 1; s < 10; ++s) CHECK(!tally.add(s, mk(5)));
  CHECK(!tally.add(12, mk(5)));  // out-of-range slot
  auto got = tally.add(10, mk(5));  // 11th distinct sender
  REQUIRE(got.has_value());
  CHECK(got->vals == std::vector<fe>{5});
  CHECK(tally.accepted());
  CHECK(!tally.add(11, mk(5)));  // stream closed
  CHECK(!tally.add(11, mk(9)));

  QuorumTally short_q(12);
  for (std::uint32_t s = 0; s < 10; ++s) short_q.add(s, mk(5));
  CHECK(!short_q.accepted());  // 10 < 11
}

namespace {

struct ChannelHost : Player {
  const QuorumTable& table;
  QuorumId from_q, to_q;
  PlayerId id;
  SessionKey session;
  std::optional<QuorumTally> tally;
  std::optional<fe> accepted;
  GroupView sender_view;
  ChannelHost(const QuorumTable& t, QuorumId a, QuorumId b, PlayerId self, SessionKey s)
      : table(t), from_q(a), to_q(b), id(self), session(s) {
    sender_view = table.group(from_q);
    if (table.contains(to_q, id)) tally.emplace(table.q);
  }
  void on_start(Context& ctx) override {
    const auto& members = table.quorums[from_q];
    for (std::uint32_t s = 0; s < members.size(); ++s) {
      if (members[s] != id) continue;
      Payload p;
      p.tag = Tag::Yhat;
      p.session = session;
      p.a = 3;
      p.vals = {5};
      quorum_send(ctx, table, to_q, s, p);
    }
  }
  void on_payload(Context&, PlayerId from, const Payload& p) override {
    if (!tally || p.session != session || p.tag != Tag::Yhat) return;
    const int slot = sender_view.sender_slot(p, from);
    if (slot < 0) return;
    if (auto got = tally->add(static_cast<std::uint32_t>(slot), p))
      accepted = got->vals.at(0);
  }
};

}  // namespace

TEST_CASE("quorum channel end to end: bad senders cannot block or forge") {
  auto cfg = cfg_of(16, 1.0 / 16.0);
  for (Behavior bb : {Behavior::Crash, Behavior::WrongShare, Behavior::Equivocate}) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      std::vector<PlayerId> bad{static_cast<PlayerId>(seed % 16)};
      QuorumTable t = create_quorums(cfg, 100 + seed, bad);
      const QuorumId from_q = 2, to_q = 11;
      SimConfig sc;
      sc.seed = seed;
      sc.bad_bound_override = 1;
      Simulation sim(sc);
      SessionKey sess;
      sess.purpose = Purpose::Gate;
      sess.node = 3;
      std::vector<ChannelHost*> hosts;
      for (PlayerId i = 0; i < 16; ++i) {
        auto h = std::make_unique<ChannelHost>(t, from_q, to_q, i, sess);
        hosts.push_back(h.get());
        bool is_bad = std::find(bad.begin(), bad.end(), i) != bad.end();
        sim.add_player(std::move(h), is_bad ? bb : Behavior::Honest);
      }
      sim.start();
      sim.run_all();
      for (PlayerId i = 0; i < 16; ++i) {
        if (!t.contains(to_q, i)) continue;
        if (std::find(bad.begin(), bad.end(), i) != bad.end()) continue;
        REQUIRE(hosts[i]->accepted.has_value());
        CHECK(*hosts[i]->accepted == 5);
      }
    }
  }
}

namespace {

struct ChoiceHost : Player {
  QuorumChoice choice;
  ChoiceHost(GroupView g, SessionKey s, std::uint32_t degree, std::uint32_t targets,
             PlayerId self)
      : choice(std::move(g), s, degree, targets, self) {}
  void on_start(Context& ctx) override { choice.start(ctx); }
  void on_payload(Context& ctx, PlayerId from, const Payload& p) override {
    choice.on_payload(ctx, from, p);
  }
};

std::vector<std::optional<QuorumId>> run_choice(std::uint32_t targets,
                                                std::uint64_t seed,
                                                const std::vector<PlayerId>& bad,
                                                Behavior bb) {
  GroupView g;
  for (PlayerId i = 0; i < 8; ++i) g.members.push_back(i);
  g.f = 1;
  SimConfig sc;
  sc.seed = seed;
  sc.bad_bound_override = bad.size();
  Simulation sim(sc);
  std::vector<ChoiceHost*> hosts;
  for (PlayerId i = 0; i < 8; ++i) {
    auto h = std::make_unique<ChoiceHost>(g, coin_key(5), 1, targets, i);
    hosts.push_back(h.get());
    bool is_bad = std::find(bad.begin(), bad.end(), i) != bad.end();
    sim.add_player(std::move(h), is_bad ? bb : Behavior::Honest);
  }
  sim.start();
  sim.run_all();
  std::vector<std::optional<QuorumId>> out(8);
  for (PlayerId i = 0; i < 8; ++i) {
    if (std::find(bad.begin(), bad.end(), i) != bad.end()) continue;
    if (hosts[i]->choice.done()) out[i] = hosts[i]->choice.choice();
  }
  return out;
}

}  // namespace

TEST_CASE("quorum choice: agreement, forced target, uniformity") {
  // single target is forced
  auto forced = run_choice(1, 3, {}, Behavior::Honest);
  for (auto& c : forced) {
    REQUIRE(c.has_value());
    CHECK(*c == 0);
  }
  // one crashed member, all good members agree
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto got = run_choice(8, seed, {2}, Behavior::Crash);
    std::optional<QuorumId> ref;
    for (PlayerId i = 0; i < 8; ++i) {
      if (i == 2) continue;
      REQUIRE(got[i].has_value());
      if (!ref) ref = *got[i];
      CHECK(*got[i] == *ref);
    }
  }
  // chi-square over 600 draws, 8 targets, df = 7
  std::vector<std::size_t> count(8, 0);
  for (std::uint64_t seed = 1; seed <= 600; ++seed) {
    auto got = run_choice(8, 1000 + seed, {}, Behavior::Honest);
    REQUIRE(got[0].has_value());
    ++count[*got[0]];
  }
  double chi = 0;
  for (std::size_t k = 0; k < 8; ++k) {
    const double d = static_cast<double>(count[k]) - 75.0;
    chi += d * d / 75.0;
  }
  CHECK(chi < 24.33);  // 0.999 quantile of chi-square(7)
}
