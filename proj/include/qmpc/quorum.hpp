#pragma once
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qmpc/hwmpc.hpp"

// Quorum tables and the quorum-to-quorum channel. Tables are sampled from a
// shared beacon seed and resampled until every quorum keeps its bad-member
// count within the protocol margins; this stands in for a full quorum
// formation protocol, whose output contract is all downstream code consumes.

namespace qmpc {

using QuorumId = std::uint32_t;

struct QuorumConfig {
  std::size_t n = 0;        // player count; also the quorum count
  double t_fraction = 0.0;  // fraction of bad players overall, < 0.2
  double delta = 0.05;      // per-quorum slack on top of t_fraction
  double c = 2.0;           // quorum size multiplier: q = ceil(c * log2 n)
  double load_cap = 4.0;    // membership cap multiplier on log2 n
  std::uint32_t quorum_tries = 64;  // per-quorum resample budget
  std::uint32_t table_tries = 16;   // whole-table retries for load balance
};

std::uint32_t quorum_size(const QuorumConfig& cfg);
// bad members tolerated per quorum: the t/n + delta goodness bound capped by
// the 7/8 channel rule and the sharing margins at degree ceil(q/4)-1
std::uint32_t quorum_bad_bound(const QuorumConfig& cfg);
inline std::uint32_t channel_threshold(std::uint32_t q) { return (7 * q + 7) / 8; }

struct QuorumTable {
  std::size_t n = 0;
  std::uint32_t q = 0;
  std::uint32_t f = 0;       // enforced per-quorum bad bound
  std::uint32_t degree = 0;  // default sharing degree ceil(q/4)-1
  std::uint64_t seed = 0;
  std::uint32_t resamples = 0;  // rejected samples during formation
  std::vector<std::vector<PlayerId>> quorums;          // n lists of q members
  std::vector<std::vector<QuorumId>> member_of;        // player -> quorum ids

  GroupView group(QuorumId g) const;
  bool contains(QuorumId g, PlayerId p) const;
  std::string to_json() const;
  static QuorumTable from_json(const std::string& text);
};

// Deterministic in (cfg, seed, bad). The bad set is simulation-level
// knowledge standing in for the formation protocol's goodness guarantee;
// throws GoodnessUnsatisfiable when the retry budgets run out.
QuorumTable create_quorums(const QuorumConfig& cfg, std::uint64_t seed,
                           const std::vector<PlayerId>& bad = {});

// audit helpers, also used by the table builder itself
std::uint32_t table_max_bad(const QuorumTable& t, const std::vector<PlayerId>& bad);
std::uint32_t table_max_load(const QuorumTable& t);
void validate_table(const QuorumTable& t, const QuorumConfig& cfg,
                    const std::vector<PlayerId>& bad);

// Binary tree over the n quorums used for output propagation and public
// aggregation; quorum 0 is the root.
struct PropagationTree {
  std::size_t n = 0;
  std::optional<QuorumId> parent(QuorumId k) const;
  std::vector<QuorumId> children(QuorumId k) const;
  std::uint32_t depth(QuorumId k) const;   // root has depth 0
  std::uint32_t height() const;            // max depth over quorums
};

// One receiver's tally for one quorum-to-quorum stream: accepts the first
// payload identity (tag, a, vals) vouched for by >= ceil(7q/8) distinct
// sender slots, then ignores the stream.
class QuorumTally {
 public:
  explicit QuorumTally(std::uint32_t q) : q_(q) {}
  std::optional<Payload> add(std::uint32_t slot, const Payload& p);
  bool accepted() const { return done_; }

 private:
  using Key = std::pair<std::uint64_t, std::vector<fe>>;
  std::uint32_t q_;
  bool done_ = false;
  std::map<Key, std::set<std::uint32_t>> votes_;
};

// send p to every member of quorum `to`, stamping the sender slot in p.b;
// receivers validate the slot against the sending quorum's view
void quorum_send(Context& ctx, const QuorumTable& t, QuorumId to,
                 std::uint32_t my_slot, Payload p);

// All good members of one quorum agree on a uniform target id in [0,targets):
// a shared-coin evaluation opened and reduced mod targets. Bias targets/p is
// negligible at the default modulus.
class QuorumChoice {
 public:
  QuorumChoice(GroupView g, SessionKey session, std::uint32_t degree,
               std::uint32_t targets, PlayerId self);
  void start(Context& ctx);
  void on_payload(Context& ctx, PlayerId from, const Payload& p);
  bool mine(const SessionKey& s) const { return coin_.mine(s); }
  bool done() const { return coin_.done(); }
  QuorumId choice() const;

 private:
  HwMpcInstance coin_;
  std::uint32_t targets_;
  std::vector<std::uint32_t> my_slots_;
};

}  // namespace qmpc
