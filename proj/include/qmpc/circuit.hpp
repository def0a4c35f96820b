#pragma once
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "qmpc/quorum.hpp"
#include "qmpc/sharing.hpp"
#include "qmpc/tcounter.hpp"

// Quorum-based evaluation of an arithmetic circuit. Every player commits a
// masked input to the quorum hosting its input node, a threshold counter
// detects when enough inputs are in, a per-input vote pins down the
// participating set, gates evaluate bottom-up on masked values with the masks
// held as in-quorum sharings, and the output value propagates down the quorum
// tree.

namespace qmpc {

// ---------------------------------------------------------------------------
// circuit graphs

enum class GateOp : std::uint8_t { Add, Mul };

struct CircuitGate {
  GateOp op = GateOp::Add;
  std::uint32_t a = 0, b = 0;  // child node ids; a == b is allowed
};

// Nodes 1..n are inputs (node i owned by player i-1), nodes n+1..n+m are
// gates, node n+1 is the output gate. Fan-in is exactly two, fan-out at most
// two.
struct CircuitGraph {
  std::size_t n = 0, m = 0;
  std::uint64_t modulus = 0;
  std::vector<CircuitGate> gates;  // gates[k] describes node n+1+k

  // filled by finalize()
  std::vector<std::uint32_t> height;                // [node]; inputs 0
  std::vector<std::vector<std::uint32_t>> parents;  // [node] -> consumers

  std::size_t node_count() const { return n + m; }
  std::uint32_t output_node() const { return static_cast<std::uint32_t>(n) + 1; }
  bool is_input(std::uint32_t v) const { return v >= 1 && v <= n; }
  bool is_gate(std::uint32_t v) const { return v > n && v <= n + m; }
  const CircuitGate& gate(std::uint32_t v) const {
    return gates[v - static_cast<std::uint32_t>(n) - 1];
  }
  // hosting quorum: inputs round-robin onto quorums 0..n-1, and the output
  // gate lands on quorum 0, the root of the propagation tree
  QuorumId quorum_of(std::uint32_t v) const {
    return static_cast<QuorumId>((v - 1) % n);
  }
  std::uint32_t depth() const;  // max gate height

  void finalize();  // derives height/parents; FanInViolation/CycleDetected
  std::string to_text() const;
};

// text format: header line "n m modulus", then one line per gate
// "id op child_a child_b" with op ADD or MUL, in any order
CircuitGraph build_graph(const std::string& text);

// generators; all validate via finalize()
CircuitGraph addition_tree(std::size_t n, std::uint64_t modulus);
CircuitGraph inner_product(std::size_t n, std::uint64_t modulus);
CircuitGraph random_dag(std::size_t n, std::size_t m, std::uint64_t modulus,
                        std::uint64_t seed);
CircuitGraph depth_chain(std::size_t n, std::uint32_t depth, std::uint64_t modulus);

// clear evaluation; returns per-node values indexed 1..n+m ([0] unused)
std::vector<fe> eval_clear(const Fp& F, const CircuitGraph& g,
                           const std::vector<fe>& inputs);

// ---------------------------------------------------------------------------
// protocol host

struct CircuitOptions {
  fe default_input = 0;   // value adopted for inputs voted out
  std::uint64_t tau = 0;  // commit threshold; 0 means n - floor(n/8)
  // draw override for distribution tests, consulted for every secret the
  // engine generates and every dealing coefficient:
  //   kind 0: dealt secret, index = position in the bundle
  //   kind 1: dealing coefficient, index = flat draw index (see avss_deal)
  // dealer_slot is the designated dealer slot for gate bundles, 0 for input
  // masks. Returning nullopt falls back to the player rng.
  std::function<std::optional<fe>(std::uint32_t kind, std::uint32_t node,
                                  std::uint32_t dealer_slot, std::uint32_t index)>
      coin;
};

// dealing bundle layout per gate dealer:
//   ADD: [r, aL, aR]            degrees [d, d, d]
//   MUL: [r, t1, t2, rho, blind, aL, aR]
//        degrees [d, d, d, d, 2d-1, d, d]
// r sums into the gate mask, aL/aR are the per-edge transfer masks, (t1, t2)
// the multiplication pair, rho the product-reduction offset and blind the
// degree-raising cover for the opened product polynomial.
std::vector<std::uint32_t> prep_degrees(GateOp op, std::uint32_t d);
inline std::size_t prep_aL(GateOp op) { return op == GateOp::Mul ? 5 : 1; }
inline std::size_t prep_aR(GateOp op) { return op == GateOp::Mul ? 6 : 2; }

class CircuitHost : public Player {
 public:
  CircuitHost(const QuorumTable* table, const CircuitGraph* graph, fe input,
              CircuitOptions opts = {});

  void on_start(Context& ctx) override;
  void on_payload(Context& ctx, PlayerId from, const Payload& p) override;

  bool finished() const { return out_.has_value(); }
  fe output() const { return out_ ? out_->first : 0; }
  std::uint64_t size_s() const { return out_ ? out_->second : 0; }

 protected:
  // per-edge transfer: the consuming gate v pulls child side s in {0 = left,
  // 1 = right}
  struct EdgeState {
    std::uint32_t child = 0;
    fe a_share = 0;                     // my share of the transfer mask
    std::optional<RecCollector> delta;  // decode of M - A from the child side
    std::optional<fe> delta0;
    std::optional<fe> mv;        // child masked value, from its quorum
    std::optional<fe> y_share;   // derived share of the unmasked child value
  };

  // child-quorum side of a transfer: the aligned point arrives from the gate
  // quorum, the difference against my mask share goes back once the mask is
  // final
  struct XferState {
    std::optional<fe> point;
    bool sent = false;
  };

  struct GateState {
    std::uint32_t node = 0;
    int slot = -1;  // my slot in the hosting quorum
    std::optional<AcsInstance> acs;
    std::vector<int> dzero;  // qualified dealer bitmap once agreed
    bool sums_ready = false;
    fe r_share = 0;  // gate mask share
    fe t1_share = 0, t2_share = 0, rho_share = 0, blind_share = 0;
    EdgeState edge[2];
    bool w_sent = false;
    std::optional<RecCollector> w_col;  // t1 t2 - rho - x blind, degree 2d
    std::optional<fe> w0;
    bool eps_sent = false;
    std::optional<RecCollector> eps_col, zeta_col;
    std::optional<fe> eps0, zeta0;
    bool z_sent = false;
    std::optional<RecCollector> z_col;
    std::optional<fe> mv;  // opened masked gate value
    bool yhat_sent = false;
    bool omask_sent = false;              // output node only
    std::optional<RecCollector> omask_col;
    std::optional<fe> omask0;
  };

  struct InputState {
    std::uint32_t node = 0;
    int slot = -1;
    std::optional<RbcPeer> rbc;
    std::optional<AvssSession> mask;
    bool holds = false;       // rbc delivered and mask shares complete
    bool claimed = false;     // IcReady broadcast
    std::set<std::size_t> claims;
    bool fired = false;       // counter flag for this quorum's actor
    bool intent_sent = false;
    std::map<std::size_t, fe> intents;
    std::optional<BaInstance> vote;
    bool proposed = false;
    std::optional<int> decision;
    bool finalized = false;
    fe mask_share = 0;
    std::optional<fe> mv;
    bool yhat_sent = false;
  };

  void poke_input(Context& ctx, InputState& st);
  void poke_gate(Context& ctx, GateState& st);
  void poke_xfer(Context& ctx, std::uint32_t v, int side);
  void poke_quorum(Context& ctx, QuorumId k);
  void maybe_finish(Context& ctx);

 private:
  struct QuorumState {
    int slot = -1;
    std::optional<CounterCore> counter;  // replica of actor k+1
    bool done_handled = false;
    std::optional<std::uint64_t> bit;   // agreed commit bit of input node k+1
    std::map<QuorumId, std::uint64_t> kid_sums;  // heap children subtree sums
    bool sum_sent = false;
    std::optional<std::uint64_t> total;  // root only: |S|
    bool out_relayed = false;
    std::optional<std::pair<fe, std::uint64_t>> out;  // adopted (O, |S|)
  };

  void deal_input(Context& ctx);
  void deal_prep(Context& ctx, GateState& st);
  fe draw(Context& ctx, std::uint32_t kind, std::uint32_t node, std::uint32_t dslot,
          std::uint32_t index);
  void counter_emit(Context& ctx, QuorumId k, const CounterMsg& m);
  void counter_poll(Context& ctx, QuorumId k);
  void open_share(Context& ctx, std::uint32_t node, std::uint32_t id,
                  std::vector<fe> vals);
  void send_yhat(Context& ctx, std::uint32_t node, fe mv);
  const GroupView& gview(QuorumId k);
  QuorumTally& tally(Purpose pu, QuorumId src, const Payload& p);
  GateState* gate_of(std::uint32_t node);
  InputState* input_of(std::uint32_t node);
  std::optional<fe> child_mask_share(std::uint32_t child) const;

  const QuorumTable* table_;
  const CircuitGraph* graph_;
  fe input_;
  CircuitOptions opts_;
  std::uint32_t dq_ = 1;  // sharing degree in use
  std::uint64_t tau_ = 0;
  CounterLayout clayout_;

  std::map<QuorumId, GroupView> gcache_;
  std::map<SessionKey, AvssSession> avss_;  // gate prep dealings
  std::map<std::uint32_t, InputState> inputs_;  // node -> state (hosted only)
  std::map<std::uint32_t, GateState> gates_;
  std::map<std::pair<std::uint32_t, int>, XferState> xfers_;  // (gate, side)
  std::map<QuorumId, QuorumState> quorums_;     // quorums I belong to
  // cross-quorum tallies keyed by (purpose, source quorum, tag << 32 | a);
  // one tally per message stream since a tally accepts only once
  std::map<std::tuple<std::uint8_t, QuorumId, std::uint64_t>, QuorumTally> tallies_;
  // namesake output delivery: (O, |S|) -> slots vouching
  std::map<std::pair<fe, std::uint64_t>, std::set<int>> namesake_;
  std::optional<std::pair<fe, std::uint64_t>> out_;
  bool out_traced_ = false;
};

}  // namespace qmpc
