#include "qmpc/tcounter.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace qmpc {

static std::uint32_t ceil_log2(std::size_t n) {
  std::uint32_t l = 0;
  std::size_t v = 1;
  while (v < n) {
    v <<= 1;
    ++l;
  }
  return l;
}

CounterLayout direct_layout(std::size_t n, std::uint64_t tau) {
  QMPC_CHECK(n >= 2 && tau >= 1 && tau <= n, "bad direct counter parameters");
  CounterLayout L;
  L.n = n;
  L.tau = tau;
  L.D = 0;
  L.log_n = ceil_log2(n);
  CounterNode root;
  root.kind = CounterNode::Kind::Root;
  root.actor = 1;
  L.nodes.push_back(root);
  L.actor_node.assign(n + 1, -1);
  L.actor_node[1] = 0;
  return L;
}

CounterLayout build_layout(std::size_t n, std::uint64_t tau) {
  if (n < 2 || 2 * tau < n || tau > n)
    fail(Errc::ParamsTooSmall, "need n/2 <= tau <= n");
  const std::uint32_t log_n = ceil_log2(n);
  const double dval =
      std::log2(static_cast<double>(tau) / (14.0 * static_cast<double>(log_n)));
  if (dval <= 0)
    fail(Errc::ParamsTooSmall, "threshold too small for a collection tree");
  const std::uint32_t D = static_cast<std::uint32_t>(std::ceil(dval));
  CounterLayout L;
  L.n = n;
  L.tau = tau;
  L.D = D;
  L.log_n = log_n;
  L.absorb = 7 * log_n;
  L.forward_cap = 14 * log_n;
  CounterNode root;
  root.kind = CounterNode::Kind::Root;
  root.actor = 1;
  L.nodes.push_back(root);
  // subtree j is a complete binary tree of depth D+1-j, stored via local
  // heap ids 1..2^(depth+1)-1; leaves are the collection nodes
  std::vector<std::vector<std::uint32_t>> local(D + 1);  // subtree -> global ix
  L.collection.assign(D, {});
  for (std::uint32_t j = 1; j <= D; ++j) {
    const std::uint32_t depth = D + 1 - j;
    const std::uint32_t count = (2u << depth) - 1;
    const std::uint32_t leaf_from = 1u << depth;
    local[j].assign(count + 1, 0);
    for (std::uint32_t l = 1; l <= count; ++l) {
      CounterNode nd;
      nd.subtree = j;
      nd.level = static_cast<std::uint32_t>(std::bit_width(l) - 1);
      nd.kind = l >= leaf_from ? CounterNode::Kind::Collection
                               : CounterNode::Kind::Adding;
      const std::uint32_t ix = static_cast<std::uint32_t>(L.nodes.size());
      local[j][l] = ix;
      nd.parent = l == 1 ? 0 : local[j][l / 2];
      L.nodes.push_back(nd);
      if (l == 1)
        L.nodes[0].kids.push_back(ix);
      else
        L.nodes[nd.parent].kids.push_back(ix);
      if (l >= leaf_from) L.collection[j - 1].push_back(ix);
    }
  }
  // actors: 1 = root, j+1 = root of subtree j, the rest level by level
  // across subtrees, left to right
  for (std::uint32_t j = 1; j <= D; ++j) L.nodes[local[j][1]].actor = j + 1;
  std::uint32_t next = D + 2;
  for (std::uint32_t level = 1; level <= D; ++level)
    for (std::uint32_t j = 1; j <= D; ++j) {
      const std::uint32_t depth = D + 1 - j;
      if (level > depth) continue;
      for (std::uint32_t l = 1u << level; l < (2u << level); ++l)
        L.nodes[local[j][l]].actor = next++;
    }
  if (L.nodes.size() > n)
    fail(Errc::ParamsTooSmall, "more tree nodes than actors");
  if (3 * static_cast<std::uint64_t>(log_n) * L.nodes.size() >= tau)
    fail(Errc::ParamsTooSmall, "node count bound tau/(3 log n) violated");
  L.actor_node.assign(n + 1, -1);
  for (std::size_t ix = 0; ix < L.nodes.size(); ++ix)
    L.actor_node[L.nodes[ix].actor] = static_cast<std::int32_t>(ix);
  return L;
}

CounterLayout auto_layout(std::size_t n, std::uint64_t tau) {
  try {
    return build_layout(n, tau);
  } catch (const Error& e) {
    if (e.code() != Errc::ParamsTooSmall) throw;
    return direct_layout(n, tau);
  }
}

// ---------------------------------------------------------------------------

CounterCore::CounterCore(const CounterLayout* layout, std::uint32_t actor)
    : L_(layout), actor_(actor), node_(layout->node_of(actor)) {
  QMPC_CHECK(actor >= 1 && actor <= L_->n, "actor id out of range");
}

std::uint32_t CounterCore::random_leaf(std::uint32_t subtree, const Draw& draw) const {
  const auto& leaves = L_->collection[subtree - 1];
  return leaves[draw() % leaves.size()];
}

void CounterCore::fire(const Emit& emit, const Draw& draw) {
  if (fired_) return;
  fired_ = true;
  CounterMsg m;
  m.type = CounterMsg::Type::Flag;
  m.from_node = 0xffffffff;
  m.origin = actor_;
  // direct mode has no collection nodes: the root counts raw flags
  m.to_node = L_->D == 0 ? 0 : random_leaf(1, draw);
  emit(m);
}

void CounterCore::send_done_down(const Emit& emit) {
  for (std::uint32_t a : {2 * actor_, 2 * actor_ + 1}) {
    if (a > L_->n) continue;
    CounterMsg m;
    m.type = CounterMsg::Type::Done;
    m.to_actor = a;
    emit(m);
  }
}

void CounterCore::on_msg(const CounterMsg& m, const Emit& emit, const Draw& draw) {
  switch (m.type) {
    case CounterMsg::Type::Done: {
      if (done_seen_) return;
      done_seen_ = true;
      send_done_down(emit);
      return;
    }
    case CounterMsg::Type::Flag: {
      if (node_ < 0 || m.to_node >= L_->nodes.size()) return;
      const CounterNode& nd = L_->nodes[node_];
      if (m.to_node != static_cast<std::uint32_t>(node_)) return;
      if (nd.kind == CounterNode::Kind::Root) {
        if (done_seen_) return;  // terminated; late flags are ignored
        ++direct_flags_;
        sum_scaled_ += 1ull << L_->D;
        if (sum_scaled_ >= L_->tau << L_->D) {
          done_seen_ = true;
          send_done_down(emit);
        }
        return;
      }
      if (nd.kind != CounterNode::Kind::Collection) return;
      if (absorbed_ < L_->absorb) {
        ++absorbed_;
        if (absorbed_ == L_->absorb) {
          count_sent_ = true;
          CounterMsg up;
          up.type = CounterMsg::Type::Count;
          up.from_node = static_cast<std::uint32_t>(node_);
          up.to_node = nd.parent;
          emit(up);
        }
        return;
      }
      if (forwarded_ < L_->forward_cap) {
        ++forwarded_;
        CounterMsg fwd = m;
        fwd.from_node = static_cast<std::uint32_t>(node_);
        // overflow moves one subtree deeper; the last subtree feeds the root
        fwd.to_node = nd.subtree == L_->D ? 0 : random_leaf(nd.subtree + 1, draw);
        emit(fwd);
        return;
      }
      ++dropped_;
      return;
    }
    case CounterMsg::Type::Count: {
      if (node_ < 0 || m.to_node != static_cast<std::uint32_t>(node_)) return;
      const CounterNode& nd = L_->nodes[node_];
      const auto& kids = nd.kids;
      if (std::find(kids.begin(), kids.end(), m.from_node) == kids.end()) return;
      if (nd.kind == CounterNode::Kind::Root) {
        if (done_seen_) return;
        const std::uint32_t j = L_->nodes[m.from_node].subtree;
        if (!subtree_counts_.insert(j).second) return;
        sum_scaled_ += (L_->tau << L_->D) >> j;  // tau / 2^j, scaled by 2^D
        if (sum_scaled_ >= L_->tau << L_->D) {
          done_seen_ = true;
          send_done_down(emit);
        }
        return;
      }
      if (nd.kind != CounterNode::Kind::Adding) return;
      if (!kid_counts_.insert(m.from_node).second) return;
      if (kid_counts_.size() == kids.size() && !count_sent_) {
        count_sent_ = true;
        CounterMsg up;
        up.type = CounterMsg::Type::Count;
        up.from_node = static_cast<std::uint32_t>(node_);
        up.to_node = nd.parent;
        emit(up);
      }
      return;
    }
  }
}

// ---------------------------------------------------------------------------

CounterPlayer::CounterPlayer(const CounterLayout* layout, SessionKey session,
                             PlayerId self)
    : L_(layout), session_(session), self_(self),
      core_(layout, static_cast<std::uint32_t>(self + 1)) {}

void CounterPlayer::deliver(Context& ctx, const CounterMsg& m) {
  Payload p;
  p.session = session_;
  PlayerId to = 0;
  switch (m.type) {
    case CounterMsg::Type::Flag:
      p.tag = Tag::Flag;
      p.a = m.to_node;
      p.b = m.from_node;
      p.vals = {m.origin};
      to = L_->nodes[m.to_node].actor - 1;
      break;
    case CounterMsg::Type::Count:
      p.tag = Tag::Count;
      p.a = m.to_node;
      p.b = m.from_node;
      to = L_->nodes[m.to_node].actor - 1;
      break;
    case CounterMsg::Type::Done:
      p.tag = Tag::CountDone;
      p.a = m.to_actor;
      to = m.to_actor - 1;
      break;
  }
  ctx.send(to, p);
}

void CounterPlayer::fire(Context& ctx) {
  auto emit = [&](const CounterMsg& m) { deliver(ctx, m); };
  auto draw = [&] { return ctx.rng()(); };
  core_.fire(emit, draw);
}

void CounterPlayer::on_payload(Context& ctx, PlayerId from, const Payload& p) {
  if (p.session != session_) return;
  auto emit = [&](const CounterMsg& m) { deliver(ctx, m); };
  auto draw = [&] { return ctx.rng()(); };
  CounterMsg m;
  switch (p.tag) {
    case Tag::BitFire:
      fire(ctx);
      return;
    case Tag::Flag:
      if (p.vals.size() != 1) return;
      m.type = CounterMsg::Type::Flag;
      m.to_node = p.a;
      m.from_node = p.b;
      m.origin = static_cast<std::uint32_t>(p.vals[0]);
      break;
    case Tag::Count:
      m.type = CounterMsg::Type::Count;
      m.to_node = p.a;
      m.from_node = p.b;
      break;
    case Tag::CountDone: {
      m.type = CounterMsg::Type::Done;
      m.to_actor = p.a;
      if (m.to_actor != self_ + 1) return;
      // only the actor-heap parent relays Done
      const std::uint32_t parent_actor = (self_ + 1) / 2;
      if (parent_actor >= 1 && from != parent_actor - 1) return;
      break;
    }
    default:
      return;
  }
  core_.on_msg(m, emit, draw);
}

}  // namespace qmpc
