#include "qmpc/simnet.hpp"

#include <algorithm>
#include <cmath>

namespace qmpc {

std::uint64_t Metrics::total_msgs() const {
  std::uint64_t s = 0;
  for (const auto& p : per_player) s += p.msgs_sent;
  return s;
}

std::uint64_t Metrics::total_field_elements() const {
  std::uint64_t s = 0;
  for (const auto& p : per_player) s += p.field_elements_sent;
  return s;
}

std::uint64_t Metrics::total_steps() const {
  std::uint64_t s = 0;
  for (const auto& p : per_player) s += p.computation_steps;
  return s;
}

std::uint64_t Metrics::max_per_player_msgs() const {
  std::uint64_t m = 0;
  for (const auto& p : per_player) m = std::max(m, p.msgs_sent + p.msgs_received);
  return m;
}

std::size_t Context::player_count() const { return sim_->player_count(); }
const Fp& Context::field() const { return sim_->field(); }
std::mt19937_64& Context::rng() { return sim_->player_rng_[self_]; }
const Beacon& Context::beacon() const { return sim_->beacon(); }

void Context::send(PlayerId to, Payload p) {
  QMPC_CHECK(to < sim_->player_count(), "send to unknown player");
  for (auto& [recv, ps] : sim_->outbox_) {
    if (recv == to) {
      ps.push_back(std::move(p));
      return;
    }
  }
  sim_->outbox_.emplace_back(to, std::vector<Payload>{std::move(p)});
}

void Context::trace(const std::string& label, std::vector<std::uint64_t> data) {
  ++sim_->app_events_;
  if (!sim_->cfg_.record_trace) return;
  TraceEvent ev;
  ev.kind = 1;
  ev.seq = sim_->metrics_.delivered;
  ev.player = self_;
  ev.label = label;
  ev.data = std::move(data);
  sim_->trace_.push_back(std::move(ev));
}

Simulation::Simulation(SimConfig cfg)
    : cfg_(std::move(cfg)),
      field_(cfg_.modulus),
      beacon_(cfg_.seed),
      sched_rng_(seeded_rng(cfg_.seed, 0x5c4ed01ull)) {}

PlayerId Simulation::add_player(std::unique_ptr<Player> p, Behavior b) {
  QMPC_CHECK(!started_, "players must be added before start");
  auto id = static_cast<PlayerId>(players_.size());
  players_.push_back(std::move(p));
  behaviors_.push_back(b);
  player_rng_.push_back(seeded_rng(cfg_.seed, 0x9e10ull + id));
  return id;
}

void Simulation::start() {
  QMPC_CHECK(!started_, "start called twice");
  started_ = true;
  const std::size_t n = players_.size();
  std::size_t bad = 0;
  for (Behavior b : behaviors_)
    if (b != Behavior::Honest) ++bad;
  std::uint64_t bound;
  if (cfg_.bad_bound_override != UINT64_MAX) {
    bound = cfg_.bad_bound_override;
  } else {
    bound = static_cast<std::uint64_t>(
        std::floor((0.125 - cfg_.epsilon) * static_cast<double>(n)));
  }
  if (bad > bound)
    fail(Errc::BadFractionExceeded,
         "bad players " + std::to_string(bad) + " exceed bound " + std::to_string(bound));
  stalled_player_.assign(n, 0);
  for (PlayerId p : cfg_.stall_set) {
    QMPC_CHECK(p < n, "stall_set id out of range");
    stalled_player_[p] = 1;
  }
  metrics_.per_player.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    Context ctx(this, static_cast<PlayerId>(i));
    Fp::set_step_counter(&metrics_.per_player[i].computation_steps);
    players_[i]->on_start(ctx);
    flush_outbox(static_cast<PlayerId>(i), 0);
    Fp::set_step_counter(nullptr);
  }
}

void Simulation::external(PlayerId to, Payload p) {
  QMPC_CHECK(started_, "external event before start");
  QMPC_CHECK(to < players_.size(), "external event to unknown player");
  Msg m;
  m.seq = next_seq_++;
  m.sender = to;
  m.receiver = to;
  m.chain_depth = 0;
  m.external = true;
  m.payloads.push_back(std::move(p));
  push_msg(std::move(m));
}

void Simulation::corrupt(PlayerId from, PlayerId to, std::vector<Payload>& ps) {
  const Behavior b = behaviors_[from];
  if (b == Behavior::Honest || b == Behavior::Colluding) return;
  if (b == Behavior::Crash) {
    ps.clear();
    return;
  }
  // Equivocate: a different lie per receiver. WrongShare: the same lie to
  // everyone. Both are value-deterministic so reruns reproduce them.
  const std::uint64_t who = b == Behavior::Equivocate ? to : UINT64_C(0xffffffff);
  const fe p = field_.p();
  for (auto& pl : ps) {
    std::uint64_t h = mix(cfg_.seed ^ UINT64_C(0xc0ffee), (std::uint64_t(from) << 32) | who);
    h = mix(h, (std::uint64_t(static_cast<std::uint8_t>(pl.tag)) << 56) |
                   (std::uint64_t(pl.session.initiator) << 24) | pl.session.counter);
    h = mix(h, (std::uint64_t(pl.session.node) << 32) |
                   (std::uint64_t(static_cast<std::uint8_t>(pl.session.purpose)) << 24) | pl.a);
    h = mix(h, pl.b);
    for (std::size_t i = 0; i < pl.vals.size(); ++i) {
      std::uint64_t u = mix(h, i);
      const fe noise = 1 + u % (p - 1);
      pl.vals[i] = field_.add(pl.vals[i], noise);
    }
  }
}

void Simulation::flush_outbox(PlayerId from, std::uint32_t depth) {
  for (auto& [to, ps] : outbox_) {
    corrupt(from, to, ps);
    if (ps.empty()) continue;  // crashed sender
    Msg m;
    m.seq = next_seq_++;
    m.sender = from;
    m.receiver = to;
    m.chain_depth = depth;
    m.priority = behaviors_[from] == Behavior::Colluding;
    m.payloads = std::move(ps);
    auto& pm = metrics_.per_player[from];
    pm.msgs_sent += 1;
    for (const auto& pl : m.payloads) pm.field_elements_sent += pl.vals.size();
    push_msg(std::move(m));
  }
  outbox_.clear();
}

void Simulation::push_msg(Msg m) {
  ++pending_count_;
  if (m.priority) {
    prio_.push_back(std::move(m));
    return;
  }
  switch (cfg_.strategy) {
    case Strategy::FIFO:
      fifo_.push_back(std::move(m));
      break;
    case Strategy::RandomDelay:
      bag_.push_back(std::move(m));
      break;
    case Strategy::MaxChain:
      chain_.push(std::move(m));
      break;
    case Strategy::TargetedStall:
      if (stalled_player_[m.sender] || stalled_player_[m.receiver])
        stalled_.push_back(std::move(m));
      else
        fifo_.push_back(std::move(m));
      break;
  }
}

Msg Simulation::pop_msg() {
  --pending_count_;
  if (!prio_.empty()) {
    Msg m = std::move(prio_.front());
    prio_.pop_front();
    return m;
  }
  switch (cfg_.strategy) {
    case Strategy::RandomDelay: {
      std::size_t i = sched_rng_() % bag_.size();
      std::swap(bag_[i], bag_.back());
      Msg m = std::move(bag_.back());
      bag_.pop_back();
      return m;
    }
    case Strategy::MaxChain: {
      Msg m = chain_.top();
      chain_.pop();
      return m;
    }
    case Strategy::TargetedStall: {
      auto& q = fifo_.empty() ? stalled_ : fifo_;
      Msg m = std::move(q.front());
      q.pop_front();
      return m;
    }
    case Strategy::FIFO:
    default: {
      Msg m = std::move(fifo_.front());
      fifo_.pop_front();
      return m;
    }
  }
}

void Simulation::hash_msg(const Msg& m) {
  auto fnv = [this](std::uint64_t x) {
    for (int i = 0; i < 8; ++i) {
      hash_ ^= (x >> (8 * i)) & 0xff;
      hash_ *= UINT64_C(1099511628211);
    }
  };
  fnv(metrics_.delivered);
  fnv((std::uint64_t(m.sender) << 32) | m.receiver);
  fnv((std::uint64_t(m.chain_depth) << 1) | (m.external ? 1 : 0));
  for (const auto& pl : m.payloads) {
    fnv((std::uint64_t(static_cast<std::uint8_t>(pl.tag)) << 48) |
        (std::uint64_t(static_cast<std::uint8_t>(pl.session.purpose)) << 40) |
        (std::uint64_t(pl.session.initiator) << 8) | (pl.session.node & 0xff));
    fnv((std::uint64_t(pl.session.node) << 32) | pl.session.counter);
    fnv((std::uint64_t(pl.a) << 32) | pl.b);
    for (fe v : pl.vals) fnv(v);
  }
}

bool Simulation::step() {
  QMPC_CHECK(started_, "step before start");
  if (pending_count_ == 0) return false;
  Msg m = pop_msg();
  hash_msg(m);
  if (!m.external) {
    metrics_.per_player[m.receiver].msgs_received += 1;
    metrics_.max_chain_depth = std::max(metrics_.max_chain_depth, m.chain_depth);
  }
  metrics_.delivered += 1;
  if (cfg_.record_trace) {
    TraceEvent ev;
    ev.kind = 0;
    ev.seq = metrics_.delivered - 1;
    ev.player = m.receiver;
    ev.peer = m.sender;
    ev.chain_depth = m.chain_depth;
    ev.tag = m.payloads.empty() ? 0 : static_cast<std::uint8_t>(m.payloads.front().tag);
    trace_.push_back(std::move(ev));
  }
  Context ctx(this, m.receiver);
  Fp::set_step_counter(&metrics_.per_player[m.receiver].computation_steps);
  dispatch(*players_[m.receiver], ctx, m);
  Fp::set_step_counter(nullptr);
  return true;
}

void Simulation::dispatch(Player& pl, Context& ctx, const Msg& m) {
  for (const auto& p : m.payloads) pl.on_payload(ctx, m.sender, p);
  flush_outbox(m.receiver, m.chain_depth + 1);
}

void Simulation::run_all(std::uint64_t max_steps) {
  std::uint64_t steps = 0;
  while (step()) {
    if (++steps > max_steps)
      fail(Errc::NonTermination, "step budget exhausted after " + std::to_string(steps));
  }
}

void Simulation::run_until(const std::function<bool()>& pred, std::uint64_t max_steps,
                           std::uint32_t check_every) {
  QMPC_CHECK(check_every > 0, "check_every must be positive");
  std::uint64_t steps = 0;
  if (pred()) return;
  for (;;) {
    bool progressed = false;
    for (std::uint32_t i = 0; i < check_every; ++i) {
      if (!step()) break;
      progressed = true;
      if (++steps > max_steps)
        fail(Errc::NonTermination, "step budget exhausted after " + std::to_string(steps));
    }
    if (pred()) return;
    if (!progressed || pending_count_ == 0) {
      if (pred()) return;
      fail(Errc::NonTermination, "network quiescent before goal");
    }
  }
}

std::size_t Simulation::pending() const { return pending_count_; }

}  // namespace qmpc
