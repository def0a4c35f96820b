#pragma once
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "qmpc/simnet.hpp"

// Reliable broadcast (Bracha) and randomized binary agreement for small groups
// of q players with up to f bad, f < q/4. Both are passive state machines: a
// hosting Player feeds them payloads and forwards their sends.

namespace qmpc {

struct GroupView {
  std::vector<PlayerId> members;  // slot k holds abscissa k+1
  std::uint32_t f = 0;            // max bad members tolerated
  std::size_t q() const { return members.size(); }
  int slot_of(PlayerId p) const {
    for (std::size_t k = 0; k < members.size(); ++k)
      if (members[k] == p) return static_cast<int>(k);
    return -1;
  }
  bool contains(PlayerId p) const { return slot_of(p) >= 0; }
  // In-group traffic names the sender slot in payload.b so one physical
  // player can hold several slots (multi-role); the claim is checked against
  // the member list.
  int sender_slot(const Payload& p, PlayerId from) const {
    if (p.b >= members.size() || members[p.b] != from) return -1;
    return static_cast<int>(p.b);
  }
};

// ---------------------------------------------------------------------------
// Reliable broadcast. Sender issues RbcInit; everyone echoes; ready at
// ceil((q+f+1)/2) matching echoes, amplified at f+1 readies, delivered at
// 2f+1 readies.

void rbc_send(Context& ctx, const GroupView& g, const SessionKey& session,
              const std::vector<fe>& value);

class RbcPeer {
 public:
  RbcPeer(GroupView g, SessionKey session, int my_slot)
      : g_(std::move(g)), session_(std::move(session)), slot_(my_slot) {}
  // feed any payload whose session matches; returns the delivered value once
  void on_payload(Context& ctx, PlayerId from, const Payload& p);
  const std::optional<std::vector<fe>>& delivered() const { return delivered_; }

 private:
  void maybe_ready(Context& ctx, const std::vector<fe>& v);
  GroupView g_;
  SessionKey session_;
  int slot_;
  bool echoed_ = false;
  bool ready_sent_ = false;
  std::map<std::vector<fe>, std::set<std::size_t>> echoes_;
  std::map<std::vector<fe>, std::set<std::size_t>> readies_;
  std::optional<std::vector<fe>> delivered_;
};

// ---------------------------------------------------------------------------
// Binary agreement, common-coin style. The per-round coin is drawn from the
// simulation beacon keyed by (session, round); schedulers here are oblivious
// to coin values, which stands in for the cited unpredictable-coin machinery.

class BaInstance {
 public:
  BaInstance(GroupView g, SessionKey session, int my_slot)
      : g_(std::move(g)), session_(std::move(session)), slot_(my_slot) {}
  void set_input(Context& ctx, int bit);
  void on_payload(Context& ctx, PlayerId from, const Payload& p);
  std::optional<int> decided() const { return decided_; }
  std::uint32_t rounds_used() const { return round_ + 1; }

 private:
  struct Round {
    std::set<std::size_t> bval[2];
    bool relayed[2] = {false, false};
    bool bin[2] = {false, false};
    std::map<std::size_t, int> aux;
    bool aux_sent = false;
    bool moved = false;
  };
  void broadcast(Context& ctx, Tag tag, std::uint32_t round, int bit);
  void progress(Context& ctx);
  int coin(Context& ctx, std::uint32_t round) const;
  void decide(Context& ctx, int bit);

  GroupView g_;
  SessionKey session_;
  int slot_;
  bool started_ = false;
  int est_ = 0;
  std::uint32_t round_ = 0;
  std::map<std::uint32_t, Round> rounds_;
  std::map<std::size_t, int> done_;
  bool done_sent_ = false;
  std::optional<int> decided_;
};

// ---------------------------------------------------------------------------
// Agreement on a common subset of dealers: one BA per dealer slot. The host
// reports local completion of dealer k via set_complete(k); once cutoff_ones
// slots have decided one, zero is voted on the rest. result() is the decided
// qualification bitmap when every slot has decided. The default cutoff q-f
// fits slots == q; designated-dealer setups pass a smaller slot count and
// cutoff.

class AcsInstance {
 public:
  AcsInstance(GroupView g, SessionKey base_session, std::size_t slots, int my_slot,
              std::size_t cutoff_ones = SIZE_MAX);
  void set_complete(Context& ctx, std::size_t slot);
  void on_payload(Context& ctx, PlayerId from, const Payload& p);
  const std::optional<std::vector<int>>& result() const { return result_; }

 private:
  void check(Context& ctx);
  GroupView g_;
  std::uint32_t base_counter_ = 0;
  std::size_t cutoff_ones_ = 0;
  std::vector<BaInstance> slots_;
  std::vector<int> inputted_;
  bool cutoff_ = false;
  std::optional<std::vector<int>> result_;
};

std::uint64_t session_hash(const SessionKey& s);

}  // namespace qmpc
