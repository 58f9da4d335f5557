#pragma once

#include "tabs/model.hpp"

#include <Eigen/Sparse>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

namespace tabs::oracle {

inline constexpr std::size_t max_servers = 3;
inline constexpr std::uint64_t max_buffer = 40;
inline constexpr std::size_t max_states = 80'000;

class StateSpaceTooLarge : public std::length_error {
public:
    using std::length_error::length_error;
};

class Reducible : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Labelled per-server states of the buffer-truncated chain. Each server is
// in one of B + 3 local states: Busy with 1..B tasks, IdleOn, IdleOff, Setup.
// A global state is a mixed-radix number with server 0 least significant.
class TruncatedStateSpace {
public:
    TruncatedStateSpace(std::size_t servers, std::uint64_t buffer);

    std::size_t servers() const { return servers_; }
    std::uint64_t buffer() const { return buffer_; }
    std::size_t size() const { return size_; }

    std::vector<ServerState> decode(std::size_t index) const;
    std::size_t encode(const std::vector<ServerState>& state) const;

private:
    std::size_t local(const ServerState& s) const;
    ServerState unlocal(std::size_t code) const;

    std::size_t servers_;
    std::uint64_t buffer_;
    std::size_t radix_;
    std::size_t size_;
};

struct GeneratorMatrix {
    Eigen::SparseMatrix<double, Eigen::RowMajor> q;  // q(i, j) = rate i -> j, rows sum to 0

    std::size_t size() const { return static_cast<std::size_t>(q.rows()); }
    Eigen::MatrixXd dense() const { return Eigen::MatrixXd(q); }
};

// Transition rates of the TABS chain with per-server buffer cap B
// ("drop-at-cap": an arrival routed to a full busy server is discarded).
GeneratorMatrix build_generator(const TruncatedStateSpace& space, double lambda, double mu,
                                double nu);

// pi with pi Q = 0, sum pi = 1. Dense LU for small chains, sparse LU beyond.
// Throws Reducible when some state cannot reach or be reached from state 0.
Eigen::VectorXd stationary(const GeneratorMatrix& gen);

// max_j |(pi Q)_j|
double residual(const GeneratorMatrix& gen, const Eigen::VectorXd& pi);

// Joint law of (#busy, #idle-off, #setup) packed as key busy*(N+1)^2 + off*(N+1) + setup.
std::size_t mode_key(std::size_t busy, std::size_t idle_off, std::size_t setup,
                     std::size_t servers);
std::vector<double> mode_marginal(const TruncatedStateSpace& space, const Eigen::VectorXd& pi);

// Law of the largest queue length, index 0..B.
std::vector<double> max_queue_marginal(const TruncatedStateSpace& space,
                                       const Eigen::VectorXd& pi);

double total_variation(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace tabs::oracle
