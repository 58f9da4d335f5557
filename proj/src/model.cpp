#include "tabs/model.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace tabs {

std::string_view to_string(ServerMode mode) {
    switch (mode) {
    case ServerMode::Busy: return "busy";
    case ServerMode::IdleOn: return "idle-on";
    case ServerMode::IdleOff: return "idle-off";
    case ServerMode::Setup: return "setup";
    }
    return "?";
}

void IndexedSet::reset(std::size_t capacity) {
    members_.clear();
    members_.reserve(capacity);
    pos_.assign(capacity, npos);
}

void IndexedSet::insert(ServerId id) {
    if (id >= pos_.size()) throw std::out_of_range("IndexedSet::insert: id beyond capacity");
    if (pos_[id] != npos) return;
    pos_[id] = static_cast<std::uint32_t>(members_.size());
    members_.push_back(id);
}

void IndexedSet::erase(ServerId id) {
    if (!contains(id)) return;
    const std::uint32_t slot = pos_[id];
    const ServerId last = members_.back();
    members_[slot] = last;
    pos_[last] = slot;
    members_.pop_back();
    pos_[id] = npos;
}

std::size_t SystemState::count(ServerMode mode) const {
    switch (mode) {
    case ServerMode::Busy: return busy.size();
    case ServerMode::IdleOn: return tokens.green.size();
    case ServerMode::IdleOff: return tokens.red.size();
    case ServerMode::Setup: return tokens.orange.size();
    }
    return 0;
}

namespace {

IndexedSet& set_for(SystemState& s, ServerMode mode) {
    switch (mode) {
    case ServerMode::Busy: return s.busy;
    case ServerMode::IdleOn: return s.tokens.green;
    case ServerMode::IdleOff: return s.tokens.red;
    case ServerMode::Setup: break;
    }
    return s.tokens.orange;
}

}  // namespace

void SystemState::set_mode(ServerId id, ServerMode mode) {
    ServerState& srv = servers.at(id);
    set_for(*this, srv.mode).erase(id);
    srv.mode = mode;
    set_for(*this, mode).insert(id);
}

SystemState make_state(std::vector<ServerState> servers) {
    SystemState s;
    s.servers = std::move(servers);
    const std::size_t n = s.servers.size();
    s.busy.reset(n);
    s.tokens.green.reset(n);
    s.tokens.red.reset(n);
    s.tokens.orange.reset(n);
    for (ServerId id = 0; id < n; ++id) set_for(s, s.servers[id].mode).insert(id);
    return s;
}

std::vector<Violation> validate(const SystemState& state) {
    std::vector<Violation> out;
    const std::size_t n = state.size();
    auto report = [&](std::string inv, std::optional<ServerId> id, std::string detail) {
        out.push_back({std::move(inv), id, std::move(detail)});
    };

    const IndexedSet* sets[] = {&state.busy, &state.tokens.green, &state.tokens.red,
                                &state.tokens.orange};
    for (const IndexedSet* set : sets) {
        if (set->capacity() != n) {
            report("token-capacity", std::nullopt,
                   fmt::format("index sized {} for {} servers", set->capacity(), n));
            return out;
        }
    }

    for (ServerId id = 0; id < n; ++id) {
        const ServerState& srv = state.servers[id];
        if (srv.infinite && srv.mode != ServerMode::Busy) {
            report("infinite-busy", id,
                   fmt::format("infinite server in mode {}", to_string(srv.mode)));
        }
        if (!srv.infinite && srv.mode == ServerMode::Busy && srv.queue_len == 0) {
            report("busy-nonempty", id, "busy server with empty queue");
        }
        if (!srv.infinite && srv.mode != ServerMode::Busy && srv.queue_len != 0) {
            report("idle-empty", id,
                   fmt::format("{} server holds {} tasks", to_string(srv.mode), srv.queue_len));
        }
        const bool in[] = {state.busy.contains(id), state.tokens.green.contains(id),
                           state.tokens.red.contains(id), state.tokens.orange.contains(id)};
        const int memberships = in[0] + in[1] + in[2] + in[3];
        if (memberships != 1) {
            report("partition", id, fmt::format("server appears in {} token sets", memberships));
        }
        const auto expected = static_cast<std::size_t>(srv.mode);
        if (!in[expected]) {
            report("token-mirror", id,
                   fmt::format("mode {} without matching token", to_string(srv.mode)));
        }
    }

    const std::size_t total = state.busy.size() + state.tokens.green.size() +
                              state.tokens.red.size() + state.tokens.orange.size();
    if (total != n) {
        report("partition", std::nullopt, fmt::format("mode counts sum to {} != {}", total, n));
    }
    return out;
}

std::optional<std::string> check_space(const OccupancyState& occ, double tol) {
    if (occ.kappa < -tol || occ.kappa > 1.0 + tol) return fmt::format("kappa {} outside [0,1]", occ.kappa);
    if (occ.q.empty()) return std::string("empty q vector");
    if (occ.q[0] > 1.0 + tol) return fmt::format("q1 {} > 1", occ.q[0]);
    for (std::size_t i = 0; i + 1 < occ.q.size(); ++i) {
        if (occ.q[i] + tol < occ.q[i + 1]) {
            return fmt::format("q{} = {} < q{} = {}", i + 1, occ.q[i], i + 2, occ.q[i + 1]);
        }
    }
    if (occ.q.back() + tol < occ.kappa) {
        return fmt::format("q{} = {} below kappa {}", occ.q.size(), occ.q.back(), occ.kappa);
    }
    if (occ.delta0 < -tol) return fmt::format("delta0 {} < 0", occ.delta0);
    if (occ.delta1 < -tol) return fmt::format("delta1 {} < 0", occ.delta1);
    if (occ.u() < -tol) return fmt::format("q1 + delta0 + delta1 = {} > 1", 1.0 - occ.u());
    return std::nullopt;
}

OccupancySnapshot occupancy_of(const SystemState& state, std::size_t depth, bool strict) {
    if (depth == 0) throw std::invalid_argument("occupancy_of: depth must be positive");
    const std::size_t n = state.size();
    if (n == 0) throw std::invalid_argument("occupancy_of: empty system");

    // at_least[i] counts servers whose queue is >= i+1, built from a histogram.
    std::vector<std::uint64_t> hist(depth + 1, 0);
    std::uint64_t infinite = 0;
    OccupancySnapshot snap;
    for (const ServerState& srv : state.servers) {
        if (srv.infinite) {
            ++infinite;
            continue;
        }
        snap.max_queue = std::max(snap.max_queue, srv.queue_len);
        if (srv.queue_len > depth) snap.truncated = true;
        ++hist[std::min<std::uint64_t>(srv.queue_len, depth)];
    }
    if (snap.truncated && strict) {
        throw TruncationOverflow(
            fmt::format("queue length {} exceeds occupancy depth {}", snap.max_queue, depth));
    }

    const double scale = static_cast<double>(n);
    OccupancyState& occ = snap.occupancy;
    occ.q.resize(depth);
    std::uint64_t at_least = infinite;
    for (std::size_t i = depth; i >= 1; --i) {
        at_least += hist[i];
        occ.q[i - 1] = static_cast<double>(at_least) / scale;
    }
    occ.delta0 = static_cast<double>(state.count(ServerMode::IdleOff)) / scale;
    occ.delta1 = static_cast<double>(state.count(ServerMode::Setup)) / scale;
    occ.kappa = static_cast<double>(infinite) / scale;
    return snap;
}

}  // namespace tabs
