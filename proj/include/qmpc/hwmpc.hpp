#pragma once
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "qmpc/sharing.hpp"

// Heavyweight MPC inside one group: a small arithmetic circuit evaluated on
// secret-shared inputs, tolerating f < q/4 bad roles. Every role deals its
// inputs plus per-multiplication randomness in one verified bundle; a common
// subset fixes the qualified dealers (unqualified inputs default to 0);
// multiplications consume one Beaver triple each, finalized by opening the
// masked product t1*t2 - rho blinded to a fully uniform degree-2d polynomial.

namespace qmpc {

enum class HwOp { Add, Sub, Mul, Scale, Shift };

struct HwGate {
  HwOp op = HwOp::Add;
  std::uint32_t a = 0, b = 0;  // operand wires; b unused for Scale/Shift
  fe c = 0;                    // constant for Scale/Shift
};

// Wires 0..n_inputs-1 are role inputs (wire i belongs to role owner[i]);
// gate k defines wire n_inputs + k and may only reference earlier wires.
struct HwCircuit {
  std::size_t n_inputs = 0;
  std::vector<std::uint32_t> owner;
  std::vector<HwGate> gates;
  std::vector<std::uint32_t> outputs;  // opened to every role
  std::size_t wires() const { return n_inputs + gates.size(); }
  std::size_t muls() const;
  void validate(std::size_t roles) const;
};

HwCircuit hw_sum_circuit(std::size_t roles);  // one input per role, opens the sum
HwCircuit hw_mul_circuit();                   // inputs of roles 0 and 1, opens the product
// one bit per role, opens 1 when at least ceil(5*roles/8) inputs are 1
// (arithmetic threshold polynomial; non-bit inputs give junk in = junk out)
HwCircuit hw_majority_circuit(const Fp& F, std::size_t roles);

// reference evaluation on plain values, wire w input taken from inputs[w]
std::vector<fe> hw_eval_clear(const Fp& F, const HwCircuit& c,
                              const std::map<std::uint32_t, fe>& inputs);

struct HwParams {
  GroupView g;         // role slot -> physical player; f bounds bad roles
  SessionKey session;  // purpose Hwmpc; (node, counter) unique per group, counter < 2^20
  std::uint32_t degree = 0;
  HwCircuit circuit;
};

// One player's end of an instance: a state machine per role this player holds.
class HwMpcInstance {
 public:
  HwMpcInstance(HwParams prm, PlayerId self);
  ~HwMpcInstance();
  HwMpcInstance(HwMpcInstance&&) = default;

  // inputs keyed by input wire; wires of owned roles missing from the map are
  // dealt as 0. Call once, from the host's on_start.
  void start(Context& ctx, const std::map<std::uint32_t, fe>& my_inputs);
  void on_payload(Context& ctx, PlayerId from, const Payload& p);
  bool mine(const SessionKey& s) const;

  std::size_t role_count() const { return roles_.size(); }
  bool done() const;  // every local role has opened every output
  std::vector<fe> outputs() const;
  // share accessors for instances that keep results unopened
  std::optional<fe> wire_share(std::size_t role_ix, std::uint32_t wire) const;
  const std::optional<std::vector<int>>& qualified(std::size_t role_ix) const;

 private:
  struct Role;
  SessionKey deal_key(std::uint32_t dealer_role) const;
  SessionKey acs_key() const;
  std::vector<std::uint32_t> bundle_layout(std::uint32_t dealer_role) const;
  void open_send(Context& ctx, Role& r, std::uint32_t id, fe share);
  void progress(Context& ctx, Role& r);

  HwParams prm_;
  PlayerId self_;
  std::vector<int> mul_ix_;  // per gate, -1 when not a multiplication
  std::size_t muls_ = 0;
  std::vector<std::size_t> owned_count_;  // input wires per role
  std::vector<std::unique_ptr<Role>> roles_;
};

// Agreed uniform field element: every role contributes a random summand.
// With an output wire, the value is public; pass open=false to keep it as
// shares (wire_share on the last wire).
HwParams hw_coin_params(const GroupView& g, const SessionKey& session,
                        std::uint32_t degree, bool open = true);

}  // namespace qmpc
