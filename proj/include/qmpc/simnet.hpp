#pragma once
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "qmpc/codec.hpp"
#include "qmpc/error.hpp"
#include "qmpc/field.hpp"
#include "qmpc/rng.hpp"

// Deterministic discrete-event network. The adversary is the scheduler: it may
// reorder messages arbitrarily but must eventually deliver everything between
// good players. Latency is measured as the longest delivered message chain.

namespace qmpc {

using PlayerId = std::uint32_t;

struct SessionKey {
  std::uint32_t initiator = 0;  // dealer / owner of the session
  std::uint32_t node = 0;       // circuit node or protocol-specific scope
  Purpose purpose = Purpose::Test;
  std::uint32_t counter = 0;    // sub-instance or round group
  auto operator<=>(const SessionKey&) const = default;
};

struct Payload {
  Tag tag = Tag::Ping;
  SessionKey session;
  std::uint32_t a = 0;  // small structural argument (slot, round, subtree, ...)
  std::uint32_t b = 0;
  std::vector<fe> vals;  // field-element words; the only part behaviors corrupt
};

struct Msg {
  std::uint64_t seq = 0;  // enqueue order, unique
  PlayerId sender = 0;
  PlayerId receiver = 0;
  std::uint32_t chain_depth = 0;
  bool priority = false;  // colluding senders may jump the queue
  bool external = false;  // injected event, not player traffic
  std::vector<Payload> payloads;
};

enum class Strategy { FIFO, RandomDelay, MaxChain, TargetedStall };
enum class Behavior { Honest, Crash, Equivocate, WrongShare, Colluding };

struct TraceEvent {
  // kind 0: delivery, kind 1: app event emitted by a handler
  std::uint8_t kind = 0;
  std::uint64_t seq = 0;       // delivery index
  PlayerId player = 0;         // receiver / emitter
  PlayerId peer = 0;           // sender (deliveries only)
  std::uint32_t chain_depth = 0;
  std::uint8_t tag = 0;        // first payload tag (deliveries)
  std::string label;           // app events only
  std::vector<std::uint64_t> data;
};

struct PlayerMetrics {
  std::uint64_t msgs_sent = 0;            // envelopes handed to the network
  std::uint64_t msgs_received = 0;        // envelopes delivered
  std::uint64_t field_elements_sent = 0;  // value words across all payloads
  std::uint64_t computation_steps = 0;    // field operations performed
};

struct Metrics {
  std::vector<PlayerMetrics> per_player;
  std::uint64_t delivered = 0;           // total envelopes delivered
  std::uint32_t max_chain_depth = 0;     // over delivered messages
  std::uint64_t total_msgs() const;
  std::uint64_t total_field_elements() const;
  std::uint64_t total_steps() const;
  std::uint64_t max_per_player_msgs() const;  // sent + received
};

struct SimConfig {
  std::uint64_t seed = 1;
  Strategy strategy = Strategy::FIFO;
  std::vector<PlayerId> stall_set;       // TargetedStall victims
  double epsilon = 0.01;                 // corruption margin below 1/8
  std::uint64_t bad_bound_override = UINT64_MAX;  // explicit cap when testing small groups
  std::uint64_t modulus = kDefaultModulus;
  bool record_trace = false;
};

class Simulation;

class Context {
 public:
  PlayerId self() const { return self_; }
  std::size_t player_count() const;
  const Fp& field() const;
  std::mt19937_64& rng();       // private per-player stream
  const Beacon& beacon() const; // shared public randomness
  void send(PlayerId to, Payload p);
  void trace(const std::string& label, std::vector<std::uint64_t> data = {});

 private:
  friend class Simulation;
  Context(Simulation* sim, PlayerId self) : sim_(sim), self_(self) {}
  Simulation* sim_;
  PlayerId self_;
};

class Player {
 public:
  virtual ~Player() = default;
  virtual void on_start(Context&) {}
  virtual void on_payload(Context& ctx, PlayerId sender, const Payload& p) = 0;
};

class Simulation {
 public:
  explicit Simulation(SimConfig cfg);
  Simulation(Simulation&&) = default;
  Simulation& operator=(Simulation&&) = default;

  PlayerId add_player(std::unique_ptr<Player> p, Behavior b = Behavior::Honest);
  // Checks the corruption bound against declared behaviors, then runs every
  // player's on_start. Call exactly once, after all add_player calls.
  void start();

  // Inject an external event (chain depth 0, not counted as player traffic).
  void external(PlayerId to, Payload p);

  bool step();      // deliver one envelope; false when the network is quiescent
  void run_all(std::uint64_t max_steps = 200'000'000);
  void run_until(const std::function<bool()>& pred,
                 std::uint64_t max_steps = 200'000'000,
                 std::uint32_t check_every = 64);

  const Metrics& metrics() const { return metrics_; }
  const std::vector<TraceEvent>& trace() const { return trace_; }
  std::uint64_t transcript_hash() const { return hash_; }
  std::size_t pending() const;
  std::size_t player_count() const { return players_.size(); }
  const Fp& field() const { return field_; }
  const Beacon& beacon() const { return beacon_; }
  Behavior behavior_of(PlayerId p) const { return behaviors_[p]; }

 private:
  friend class Context;
  void dispatch(Player& pl, Context& ctx, const Msg& m);
  void flush_outbox(PlayerId from, std::uint32_t depth);
  void push_msg(Msg m);
  void corrupt(PlayerId from, PlayerId to, std::vector<Payload>& ps);
  Msg pop_msg();
  void hash_msg(const Msg& m);

  SimConfig cfg_;
  Fp field_;
  Beacon beacon_;
  std::vector<std::unique_ptr<Player>> players_;
  std::vector<Behavior> behaviors_;
  std::vector<std::mt19937_64> player_rng_;
  std::vector<char> stalled_player_;
  bool started_ = false;

  // queues; which ones are used depends on the strategy
  std::deque<Msg> prio_;
  std::deque<Msg> fifo_;
  std::deque<Msg> stalled_;
  std::vector<Msg> bag_;  // RandomDelay
  struct ChainCmp {
    bool operator()(const Msg& a, const Msg& b) const {
      if (a.chain_depth != b.chain_depth) return a.chain_depth < b.chain_depth;
      return a.seq > b.seq;  // older first on ties
    }
  };
  std::priority_queue<Msg, std::vector<Msg>, ChainCmp> chain_;
  std::mt19937_64 sched_rng_;
  std::uint64_t next_seq_ = 0;
  std::size_t pending_count_ = 0;

  // per-activation outbox, merged per receiver
  std::vector<std::pair<PlayerId, std::vector<Payload>>> outbox_;

  Metrics metrics_;
  std::vector<TraceEvent> trace_;
  std::uint64_t hash_ = 1469598103934665603ull;  // FNV offset basis
  std::uint64_t app_events_ = 0;
};

// Builds n players from a factory, assigning the given behavior to members of
// bad_set. The corruption bound is enforced by Simulation::start.
template <class Factory>
Simulation spawn(SimConfig cfg, std::size_t n, const std::vector<PlayerId>& bad_set,
                 Behavior bad_behavior, Factory make_player) {
  Simulation sim(std::move(cfg));
  std::vector<char> bad(n, 0);
  for (PlayerId p : bad_set) {
    QMPC_CHECK(p < n, "bad player id out of range");
    bad[p] = 1;
  }
  for (std::size_t i = 0; i < n; ++i)
    sim.add_player(make_player(static_cast<PlayerId>(i)),
                   bad[i] ? bad_behavior : Behavior::Honest);
  sim.start();
  return sim;
}

}  // namespace qmpc
