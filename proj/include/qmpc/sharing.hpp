#pragma once
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "qmpc/agreement.hpp"
#include "qmpc/simnet.hpp"

// Shamir sharing plus verifiable sharing over bivariate polynomials, tolerant
// of f < q/4 bad participants. Slot k of a group always evaluates at abscissa
// k+1, so sharings held by different groups line up pointwise.

namespace qmpc {

inline fe abscissa(std::size_t slot) { return static_cast<fe>(slot + 1); }

// Throws ParamsTooSmall unless a group of size q with sharing degree d
// tolerates f bad members: share recovery needs q >= d + 4f + 1 and opening a
// degree-2d product without waiting on bad members needs q >= 2d + 3f + 1.
void validate_group_margins(std::size_t q, std::uint32_t f, std::uint32_t d);

struct ShamirShare {
  PlayerId dealer = 0;
  SessionKey session;
  fe x = 0;  // abscissa
  fe value = 0;
  std::uint32_t degree = 0;
};

// plain (non-verified) sharing; recipients get abscissas 1..n in order
std::vector<ShamirShare> shamir_share(const Fp& F, std::mt19937_64& rng, fe secret,
                                      std::uint32_t degree,
                                      const std::vector<PlayerId>& recipients);
fe shamir_reconstruct(const Fp& F, const std::vector<ShamirShare>& shares);

// error-corrected reconstruction: accepts the degree-d polynomial consistent
// with at least received - max_bad shares
fe avss_rec(const Fp& F, const std::vector<ShamirShare>& shares, std::uint32_t degree,
            std::uint32_t max_bad);

// ---------------------------------------------------------------------------
// Verifiable sharing of a bundle of secrets under one session. The dealer may
// be outside the participant group.

struct SharingParams {
  GroupView g;
  PlayerId dealer = 0;
  SessionKey session;
  std::vector<std::uint32_t> degrees;  // one entry per secret in the bundle
  // when set, supplies every internal coefficient draw instead of ctx.rng;
  // consumed per secret in m[u][v] row-major order ((0,0) drawn but then
  // overwritten by the secret). Lets distribution tests replay dealings with
  // shifted coins.
  std::function<fe(std::uint32_t)> coin;
};

void avss_deal(Context& ctx, const SharingParams& prm, const std::vector<fe>& secrets);

class AvssSession {
 public:
  AvssSession(SharingParams prm, int my_slot) : prm_(std::move(prm)), slot_(my_slot) {}
  void on_payload(Context& ctx, PlayerId from, const Payload& p);
  bool complete() const { return complete_; }
  bool has_shares() const { return have_rows_; }
  // share per bundled secret, meaningful once has_shares()
  std::vector<fe> shares() const;
  const SharingParams& params() const { return prm_; }

 private:
  void try_adopt_direct(Context& ctx);
  void send_echo(Context& ctx);
  bool crossings_ok(const Fp& F, int sender_slot, const std::vector<fe>& vals) const;
  void recount_matches(const Fp& F);
  void register_echo(Context& ctx, std::size_t slot, const std::vector<fe>& vals);
  void try_recover(Context& ctx);
  void maybe_ready(Context& ctx);
  void maybe_complete(Context& ctx);

  SharingParams prm_;
  int slot_;
  std::optional<std::vector<fe>> direct_rows_, direct_cols_;
  std::vector<Poly> rows_, cols_;  // adopted polynomials, one per secret
  bool have_rows_ = false;
  bool anchored_ = false;  // rows confirmed by echo mass or recovered
  bool echoed_ = false;
  bool ready_sent_ = false;
  bool complete_ = false;
  std::map<std::size_t, std::vector<fe>> echo_from_;
  std::set<std::size_t> match_;
  std::set<std::size_t> readys_;
};

// Collects reconstruction shares sent with make_rec_share and decodes.
Payload make_rec_share(const SessionKey& session, std::uint32_t index, fe value);

class RecCollector {
 public:
  RecCollector(std::uint32_t degree, std::uint32_t max_bad)
      : degree_(degree), max_bad_(max_bad) {}
  void add(std::size_t slot, fe value);
  std::optional<fe> value(const Fp& F);

 private:
  std::uint32_t degree_, max_bad_;
  std::map<std::size_t, fe> got_;
  std::optional<fe> value_;
};

// Standalone sharing with an agreed accept/abort verdict. Votes are cast on
// completion; the enclosing protocol (or test) triggers give-up votes via
// finish_votes once it has independent evidence of a stall.
class AvssShareRunner {
 public:
  AvssShareRunner(SharingParams prm, int my_slot);
  void on_payload(Context& ctx, PlayerId from, const Payload& p);
  void finish_votes(Context& ctx);  // vote 0 if not yet voted
  // nullopt until the verdict BA decides; true = accepted, false = abort
  std::optional<bool> verdict() const;
  AvssSession& session() { return session_; }

 private:
  AvssSession session_;
  BaInstance ba_;
  bool voted_ = false;
};

}  // namespace qmpc
