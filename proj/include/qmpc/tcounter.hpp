#pragma once
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <vector>

#include "qmpc/simnet.hpp"

// Threshold counter: a root with D collection subtrees detects when tau of n
// asynchronous input bits are set, with O(log n) messages per actor. Actors
// are abstract (players or quorums); CounterCore is the transport-free state
// machine, CounterPlayer the one-player-per-actor adapter.

namespace qmpc {

struct CounterNode {
  enum class Kind { Root, Adding, Collection };
  Kind kind = Kind::Root;
  std::uint32_t subtree = 0;  // 1-based; 0 for the root
  std::uint32_t level = 0;    // 0 = subtree root
  std::uint32_t parent = 0;   // node index; root points at itself
  std::vector<std::uint32_t> kids;
  std::uint32_t actor = 0;    // 1-based actor id
};

struct CounterLayout {
  std::size_t n = 0;        // actor count
  std::uint64_t tau = 0;
  std::uint32_t D = 0;      // 0 = direct mode (all flags straight to root)
  std::uint32_t log_n = 0;  // ceil(log2 n)
  std::uint32_t absorb = 0;       // flags a collection node turns into a Count
  std::uint32_t forward_cap = 0;  // overflow flags it forwards before ignoring
  std::vector<CounterNode> nodes;                      // [0] = root
  std::vector<std::vector<std::uint32_t>> collection;  // per subtree: leaf ixs
  std::vector<std::int32_t> actor_node;  // 1-based actor -> node ix, -1 = idle

  std::int32_t node_of(std::uint32_t actor) const {
    return actor < actor_node.size() ? actor_node[actor] : -1;
  }
};

// tree per the formula D = ceil(log2(tau / (14 log2 n))); ParamsTooSmall when
// tau < n/2, D < 1, or the node-count bound fails
CounterLayout build_layout(std::size_t n, std::uint64_t tau);
// degenerate root-only layout: every actor flags the root, each flag counts 1
CounterLayout direct_layout(std::size_t n, std::uint64_t tau);
// build_layout when the formula applies, direct_layout otherwise
CounterLayout auto_layout(std::size_t n, std::uint64_t tau);

struct CounterMsg {
  enum class Type { Flag, Count, Done };
  Type type = Type::Flag;
  std::uint32_t from_node = 0;  // tree node ix; 0xffffffff for initial flags
  std::uint32_t to_node = 0;    // Flag/Count routing
  std::uint32_t to_actor = 0;   // Done routing (actor heap)
  std::uint32_t origin = 0;     // firing actor, carried for lineage audits
};

// One actor's protocol state: the input-bit rule, its hosted tree node (if
// any), and the down-stage relay. Transport injected via callbacks.
class CounterCore {
 public:
  using Emit = std::function<void(const CounterMsg&)>;
  using Draw = std::function<std::uint64_t()>;  // fresh uniform 64-bit value

  CounterCore(const CounterLayout* layout, std::uint32_t actor);

  void fire(const Emit& emit, const Draw& draw);  // bit 0 -> 1, once
  void on_msg(const CounterMsg& m, const Emit& emit, const Draw& draw);

  bool fired() const { return fired_; }
  bool done_seen() const { return done_seen_; }
  // hosted-node statistics for audits
  std::uint32_t flags_absorbed() const { return absorbed_; }
  std::uint32_t flags_forwarded() const { return forwarded_; }
  std::uint32_t flags_dropped() const { return dropped_; }
  bool count_sent() const { return count_sent_; }
  std::uint64_t root_sum_scaled() const { return sum_scaled_; }  // sum * 2^D
  std::uint32_t root_direct_flags() const { return direct_flags_; }

 private:
  void send_done_down(const Emit& emit);
  std::uint32_t random_leaf(std::uint32_t subtree, const Draw& draw) const;

  const CounterLayout* L_;
  std::uint32_t actor_;
  std::int32_t node_;  // hosted node ix or -1
  bool fired_ = false;
  bool done_seen_ = false;
  // collection state
  std::uint32_t absorbed_ = 0, forwarded_ = 0, dropped_ = 0;
  bool count_sent_ = false;
  // adding state
  std::set<std::uint32_t> kid_counts_;
  // root state
  std::uint64_t sum_scaled_ = 0;
  std::uint32_t direct_flags_ = 0;
  std::set<std::uint32_t> subtree_counts_;
};

// Player-mode adapter: player i hosts actor i+1; targets drawn from the
// player's own rng. An external BitFire payload triggers the input bit.
class CounterPlayer {
 public:
  CounterPlayer(const CounterLayout* layout, SessionKey session, PlayerId self);
  void fire(Context& ctx);
  void on_payload(Context& ctx, PlayerId from, const Payload& p);
  bool mine(const SessionKey& s) const { return s == session_; }
  const CounterCore& core() const { return core_; }
  bool done() const { return core_.done_seen(); }

 private:
  void deliver(Context& ctx, const CounterMsg& m);
  const CounterLayout* L_;
  SessionKey session_;
  PlayerId self_;
  CounterCore core_;
};

}  // namespace qmpc
