#include "qmpc/quorum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"

namespace qmpc {

static double log2n(std::size_t n) { return std::log2(static_cast<double>(n)); }

std::uint32_t quorum_size(const QuorumConfig& cfg) {
  QMPC_CHECK(cfg.n >= 2, "need at least two players");
  return static_cast<std::uint32_t>(std::ceil(cfg.c * log2n(cfg.n)));
}

std::uint32_t quorum_bad_bound(const QuorumConfig& cfg) {
  const std::uint32_t q = quorum_size(cfg);
  const std::uint32_t d = (q + 3) / 4 - 1;
  std::uint32_t b =
      static_cast<std::uint32_t>(std::floor((cfg.t_fraction + cfg.delta) * q));
  b = std::min(b, q - channel_threshold(q));  // 7/8 rule headroom
  b = std::min(b, (q - d - 1) / 4);           // share recovery margin
  b = std::min(b, (q - 2 * d - 1) / 3);       // product opening margin
  return b;
}

GroupView QuorumTable::group(QuorumId g) const {
  GroupView v;
  v.members = quorums.at(g);
  v.f = f;
  return v;
}

bool QuorumTable::contains(QuorumId g, PlayerId p) const {
  const auto& m = quorums.at(g);
  return std::find(m.begin(), m.end(), p) != m.end();
}

QuorumTable create_quorums(const QuorumConfig& cfg, std::uint64_t seed,
                           const std::vector<PlayerId>& bad) {
  if (cfg.t_fraction >= 0.2)
    fail(Errc::GoodnessUnsatisfiable, "bad fraction too close to 1/4");
  if (static_cast<double>(bad.size()) > cfg.t_fraction * static_cast<double>(cfg.n))
    fail(Errc::BadFractionExceeded, "bad set larger than t_fraction allows");
  QuorumTable t;
  t.n = cfg.n;
  t.q = quorum_size(cfg);
  t.f = quorum_bad_bound(cfg);
  t.degree = (t.q + 3) / 4 - 1;
  t.seed = seed;
  QMPC_CHECK(t.q <= cfg.n, "quorum larger than the player set");
  std::vector<char> is_bad(cfg.n, 0);
  for (PlayerId p : bad) is_bad.at(p) = 1;
  const std::uint32_t load_cap =
      static_cast<std::uint32_t>(std::floor(cfg.load_cap * log2n(cfg.n)));
  std::mt19937_64 rng(seed);
  std::vector<PlayerId> pool(cfg.n);
  for (std::uint32_t table_try = 0; table_try < cfg.table_tries; ++table_try) {
    t.quorums.assign(cfg.n, {});
    bool table_ok = true;
    for (std::size_t g = 0; g < cfg.n && table_ok; ++g) {
      bool ok = false;
      for (std::uint32_t qt = 0; qt < cfg.quorum_tries && !ok; ++qt) {
        std::iota(pool.begin(), pool.end(), 0);
        std::uint32_t bad_count = 0;
        for (std::uint32_t i = 0; i < t.q; ++i) {
          std::uniform_int_distribution<std::size_t> pick(i, cfg.n - 1);
          std::swap(pool[i], pool[pick(rng)]);
          bad_count += is_bad[pool[i]];
        }
        if (bad_count > t.f) {
          ++t.resamples;
          continue;
        }
        t.quorums[g].assign(pool.begin(), pool.begin() + t.q);
        ok = true;
      }
      if (!ok) table_ok = false;
    }
    if (!table_ok)
      fail(Errc::GoodnessUnsatisfiable, "per-quorum resample budget exhausted");
    if (table_max_load(t) <= load_cap) {
      t.member_of.assign(cfg.n, {});
      for (std::size_t g = 0; g < cfg.n; ++g)
        for (PlayerId p : t.quorums[g])
          t.member_of[p].push_back(static_cast<QuorumId>(g));
      return t;
    }
  }
  fail(Errc::GoodnessUnsatisfiable, "load balance retry budget exhausted");
}

std::uint32_t table_max_bad(const QuorumTable& t, const std::vector<PlayerId>& bad) {
  std::vector<char> is_bad(t.n, 0);
  for (PlayerId p : bad) is_bad.at(p) = 1;
  std::uint32_t worst = 0;
  for (const auto& m : t.quorums) {
    std::uint32_t c = 0;
    for (PlayerId p : m) c += is_bad[p];
    worst = std::max(worst, c);
  }
  return worst;
}

std::uint32_t table_max_load(const QuorumTable& t) {
  std::vector<std::uint32_t> load(t.n, 0);
  for (const auto& m : t.quorums)
    for (PlayerId p : m) ++load[p];
  return *std::max_element(load.begin(), load.end());
}

void validate_table(const QuorumTable& t, const QuorumConfig& cfg,
                    const std::vector<PlayerId>& bad) {
  auto check = [](bool ok, const char* what) {
    if (!ok) fail(Errc::AuditFailure, what);
  };
  check(t.n == cfg.n && t.quorums.size() == cfg.n, "quorum count != n");
  check(t.q == quorum_size(cfg), "quorum size mismatch");
  for (const auto& m : t.quorums) {
    check(m.size() == t.q, "short quorum");
    std::set<PlayerId> uniq(m.begin(), m.end());
    check(uniq.size() == m.size(), "duplicate member in a quorum");
    for (PlayerId p : m) check(p < t.n, "member out of range");
  }
  const double frac_bound = cfg.t_fraction + cfg.delta;
  check(static_cast<double>(table_max_bad(t, bad)) <=
            frac_bound * static_cast<double>(t.q),
        "goodness bound violated");
  check(table_max_bad(t, bad) <= t.f, "enforced bad bound violated");
  check(table_max_load(t) <=
            static_cast<std::uint32_t>(std::floor(cfg.load_cap * log2n(cfg.n))),
        "membership load cap violated");
  check(t.member_of.size() == t.n, "membership index size");
  for (std::size_t p = 0; p < t.n; ++p)
    for (QuorumId g : t.member_of[p])
      check(t.contains(g, static_cast<PlayerId>(p)), "membership index stale");
  std::size_t slots = 0;
  for (const auto& v : t.member_of) slots += v.size();
  check(slots == t.n * t.q, "membership index incomplete");
}

std::string QuorumTable::to_json() const {
  nlohmann::json j;
  j["n"] = n;
  j["q"] = q;
  j["f"] = f;
  j["degree"] = degree;
  j["seed"] = seed;
  j["resamples"] = resamples;
  j["quorums"] = quorums;
  return j.dump(2);
}

QuorumTable QuorumTable::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  QuorumTable t;
  t.n = j.at("n").get<std::size_t>();
  t.q = j.at("q").get<std::uint32_t>();
  t.f = j.at("f").get<std::uint32_t>();
  t.degree = j.at("degree").get<std::uint32_t>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.resamples = j.value("resamples", 0u);
  t.quorums = j.at("quorums").get<std::vector<std::vector<PlayerId>>>();
  t.member_of.assign(t.n, {});
  for (std::size_t g = 0; g < t.quorums.size(); ++g)
    for (PlayerId p : t.quorums[g])
      t.member_of.at(p).push_back(static_cast<QuorumId>(g));
  return t;
}

std::optional<QuorumId> PropagationTree::parent(QuorumId k) const {
  if (k == 0) return std::nullopt;
  return (k - 1) / 2;
}

std::vector<QuorumId> PropagationTree::children(QuorumId k) const {
  std::vector<QuorumId> out;
  for (QuorumId c : {2 * k + 1, 2 * k + 2})
    if (c < n) out.push_back(c);
  return out;
}

std::uint32_t PropagationTree::depth(QuorumId k) const {
  std::uint32_t d = 0;
  while (k != 0) {
    k = (k - 1) / 2;
    ++d;
  }
  return d;
}

std::uint32_t PropagationTree::height() const {
  return n == 0 ? 0 : depth(static_cast<QuorumId>(n - 1));
}

std::optional<Payload> QuorumTally::add(std::uint32_t slot, const Payload& p) {
  if (done_ || slot >= q_) return std::nullopt;
  Key k{(static_cast<std::uint64_t>(p.tag) << 32) | p.a, p.vals};
  auto& voters = votes_[k];
  voters.insert(slot);
  if (voters.size() < channel_threshold(q_)) return std::nullopt;
  done_ = true;
  return p;
}

void quorum_send(Context& ctx, const QuorumTable& t, QuorumId to,
                 std::uint32_t my_slot, Payload p) {
  p.b = my_slot;
  for (PlayerId m : t.quorums.at(to)) ctx.send(m, p);
}

QuorumChoice::QuorumChoice(GroupView g, SessionKey session, std::uint32_t degree,
                           std::uint32_t targets, PlayerId self)
    : coin_(hw_coin_params(g, session, degree), self), targets_(targets) {
  QMPC_CHECK(targets >= 1, "need at least one target");
  for (std::uint32_t s = 0; s < g.q(); ++s)
    if (g.members[s] == self) my_slots_.push_back(s);
}

void QuorumChoice::start(Context& ctx) {
  // one random summand per held role; the sum circuit's wire w is role w's
  std::map<std::uint32_t, fe> in;
  for (std::uint32_t s : my_slots_) in[s] = ctx.field().random(ctx.rng());
  coin_.start(ctx, in);
}

void QuorumChoice::on_payload(Context& ctx, PlayerId from, const Payload& p) {
  coin_.on_payload(ctx, from, p);
}

QuorumId QuorumChoice::choice() const {
  QMPC_CHECK(done(), "choice read before completion");
  return static_cast<QuorumId>(coin_.outputs().at(0) % targets_);
}

}  // namespace qmpc
