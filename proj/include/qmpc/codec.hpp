#pragma once
#include <cstdint>

// Wire payload tags and session purpose codes. The byte values are frozen in
// docs/payload_codec.md; tests assert the table stays in sync.

namespace qmpc {

enum class Tag : std::uint8_t {
  // sharing
  ShareRow = 0x01,   // dealer -> player: row polynomial coefficients
  ShareCol = 0x02,   // dealer -> player: column polynomial coefficients
  Echo = 0x03,       // player i -> player j: crossing values (f_i(j), g_i(j)) per secret
  Ready = 0x04,      // sharing-complete vote for a dealer session
  RecShare = 0x05,   // reconstruction share(s) toward a collector

  // agreement
  RbcInit = 0x10,
  RbcEcho = 0x11,
  RbcReady = 0x12,
  BaVal = 0x13,      // binary BA BVAL message (round in a, bit in vals[0])
  BaAux = 0x14,      // binary BA AUX message
  BaDone = 0x15,     // decided-value announcement (helps laggards terminate)

  // quorum-internal mpc
  MpcOpen = 0x20,    // masked opening share(s): product reduction, output opening
  MpcDelta = 0x21,   // double-share consistency difference share(s)
  MpcCoin = 0x22,    // shared-coin opening share

  // threshold counter
  Flag = 0x30,       // one counted unit; vals[0] = origin player (lineage audit)
  Count = 0x31,      // subtree aggregate; a = subtree index j at the root edge
  CountDone = 0x32,  // down-stage notification
  BitFire = 0x33,    // external event: this player's input bit becomes 1

  // circuit evaluation
  Yhat = 0x40,       // masked node value, quorum-to-quorum channel
  Handoff = 0x41,    // transfer-mask point a(k) to the aligned child slot
  DeltaOpen = 0x42,  // delta(k) = share_r(k) - a(k) broadcast to the gate quorum
  MajBit = 0x43,     // commitment bit exchange before/after Done
  SumAgg = 0x44,     // size-of-S aggregation along the quorum tree
  OutVal = 0x45,     // reconstructed output propagated down the quorum tree
  IcReady = 0x46,    // member's declaration that its commitment bit is 1

  // tests
  Ping = 0x70,
};

enum class Purpose : std::uint8_t {
  Avss = 1,
  Rbc = 2,
  Ba = 3,
  Acs = 4,       // vectorized per-dealer qualification BA bundle
  Prep = 5,      // per-quorum preprocessing bundle (masks, transfer pairs, triples)
  Gate = 6,
  Ic = 7,
  Coin = 8,
  Counter = 9,
  Output = 10,
  SizeS = 11,
  Hwmpc = 12,
  Test = 13,
};

}  // namespace qmpc
