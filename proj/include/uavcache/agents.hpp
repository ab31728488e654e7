#pragma once

// Decision policies for the UAV cell and the loop that drives them.

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "uavcache/mdp.hpp"

namespace uavcache::agents {

using mdp::ActionVector;
using mdp::Environment;
using mdp::NetworkState;
using mdp::Rng;

/// Per-slot record of a run.
struct DelayTrace {
  std::size_t window = 1000;
  std::vector<double> cost;
  std::vector<double> backhaul;
  std::vector<double> access;
  std::vector<double> scheduling;
  std::vector<double> moving_average;
  std::vector<int> hits;
  std::vector<int> misses;
  std::size_t explored_actions = 0;  // size of the action list, when applicable

  explicit DelayTrace(std::size_t ma_window = 1000) : window(ma_window) {}

  void record(const mdp::StepOutcome& outcome);
  std::size_t size() const { return cost.size(); }
  /// Mean cost over the last `count` slots (all slots if fewer).
  double tail_mean(std::size_t count) const;
  /// Hit ratio over the last `count` slots; 0 when nothing was served.
  double tail_hit_ratio(std::size_t count) const;

 private:
  double running_sum_ = 0.0;
};

/// Common interface so the experiment loop can drive any policy.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string name() const = 0;
  virtual ActionVector act(const Environment& env) = 0;
  virtual void observe(const NetworkState& /*state*/, const ActionVector& /*action*/,
                       const mdp::StepOutcome& /*outcome*/) {}
};

/// Steps `env` for `slots` slots under `agent`. Every emitted action is
/// checked for legality before it is applied.
DelayTrace run_agent(Environment& env, Agent& agent, long slots, std::size_t ma_window = 1000);

// --- baselines ------------------------------------------------------------

/// Uniform draw from the legal action set of `state`.
ActionVector random_legal_action(const NetworkState& state, const mdp::EnvConfig& config, Rng& rng);

/// Myopic optimum: the first minimizer of the slot cost in the enumeration
/// order of mdp::enumerate_legal_actions. The cost separates into a caching
/// part and a serving part, and the serving part into per-group power
/// choices, so the search runs over those factors instead of their product.
/// Throws mdp::EnumerationTooLarge when the instance exceeds the guard.
ActionVector greedy_action(const NetworkState& state, const mdp::SlotContext& ctx,
                           const mdp::EnvConfig& config);

/// Reference greedy that scans mdp::enumerate_legal_actions directly.
ActionVector greedy_action_exhaustive(const NetworkState& state, const mdp::SlotContext& ctx,
                                      const mdp::EnvConfig& config);

/// Throws mdp::EnumerationTooLarge if greedy search is not admissible for
/// instances of this size.
void check_greedy_admissible(const mdp::EnvConfig& config);

class GreedyAgent : public Agent {
 public:
  explicit GreedyAgent(const mdp::EnvConfig& config) { check_greedy_admissible(config); }
  std::string name() const override { return "greedy"; }
  ActionVector act(const Environment& env) override {
    return greedy_action(env.state(), env.context(), env.config());
  }
};

class RandomAgent : public Agent {
 public:
  explicit RandomAgent(std::uint64_t seed) : rng_(seed) {}
  std::string name() const override { return "random"; }
  ActionVector act(const Environment& env) override {
    return random_legal_action(env.state(), env.config(), rng_);
  }

 private:
  Rng rng_;
};

/// Caches the Z most requested contents seen so far (ties to the lower
/// index), serves users round robin and uses one fixed power level.
class FixedAgent : public Agent {
 public:
  FixedAgent(const mdp::EnvConfig& config, int per_slot = 2, double near_coeff = 0.3);
  std::string name() const override { return "fixed"; }
  ActionVector act(const Environment& env) override;

  /// Counts every request the first time it is seen.
  void note_requests(const NetworkState& state);
  const std::vector<long>& request_counts() const { return counts_; }
  ActionVector decide(const NetworkState& state, const mdp::EnvConfig& config);

 private:
  std::vector<long> counts_;
  int per_slot_;
  std::uint8_t level_;
  std::size_t pointer_ = 0;
};

// --- tabular Q-learning ---------------------------------------------------

/// Which counter drives alpha = 1/(t + c)^phi: the global slot index or the
/// number of updates of the (state, action) pair.
enum class RateClock { slot, visits };
/// Which listed actions compete during exploitation: every listed action
/// legal in the state (unvisited ones read as 0), or only those already
/// updated in this state.
enum class ExploitScope { listed, visited };
/// How much of the waiting vector enters the state key: `full` keeps the
/// pending content and wait age, `compact` the pending flag and wait age,
/// `waiting` the pending flag only.
enum class StateKeyMode { full, compact, waiting };

struct QHyper {
  double gamma = 0.9;
  double epsilon = 5000.0;
  double c_alpha = 1.0;
  double phi_alpha = 0.8;
  RateClock clock = RateClock::visits;
  ExploitScope scope = ExploitScope::visited;
  StateKeyMode key_mode = StateKeyMode::full;

  void validate() const;
};

/// Key of a state: cache bitmap plus per-user waiting information at the
/// detail selected by `mode`.
std::string state_key(const NetworkState& state, StateKeyMode mode = StateKeyMode::full);

/// Exploration probability at slot t: 1 up to epsilon, epsilon/t after.
double exploration_probability(double epsilon, long t);

/// Learning rate 1/(t + c)^phi.
double learning_rate(long t, double c_alpha, double phi_alpha);

/// State list, action list and the sparse state-by-action value table.
/// Unvisited pairs read as 0.
class QTable {
 public:
  struct Entry {
    double value = 0.0;
    std::uint32_t visits = 0;
  };

  explicit QTable(QHyper hyper = {});

  const QHyper& hyper() const { return hyper_; }
  std::size_t state_count() const { return state_keys_.size(); }
  std::size_t action_count() const { return actions_.size(); }
  const ActionVector& action(int id) const { return actions_[id]; }
  const std::string& state_name(int id) const { return state_keys_[id]; }

  /// Registers the state if new; returns its id.
  int add_state(const NetworkState& state);
  int find_state(const NetworkState& state) const;
  int add_action(const ActionVector& action);
  int find_action(const ActionVector& action) const;

  double value(int state_id, int action_id) const;
  std::uint32_t visits(int state_id, int action_id) const;
  void set(int state_id, int action_id, Entry entry);
  Entry& entry(int state_id, int action_id);

  /// Listed action legal in `state` with the smallest value (ties to the
  /// earlier listed action), honoring the exploitation scope. -1 if none.
  int best_legal_action(const NetworkState& state, const mdp::EnvConfig& config) const;

  /// Smallest value over listed actions legal in `state`; 0 when none is
  /// listed or the state is unknown.
  double min_legal_value(const NetworkState& state, const mdp::EnvConfig& config) const;

  std::size_t nonzero_entries() const;

  /// Slots already learned from; a resumed run continues from here.
  long elapsed_slots() const { return elapsed_; }
  long tick() { return ++elapsed_; }

  void save(const std::string& path) const;
  static QTable load(const std::string& path);

 private:
  template <typename Visit>
  void for_each_legal_listed(const NetworkState& state, const mdp::EnvConfig& config,
                             Visit&& visit) const;

  QHyper hyper_;
  std::vector<std::string> state_keys_;
  std::unordered_map<std::string, int> state_index_;
  std::vector<ActionVector> actions_;
  std::unordered_map<std::string, int> action_index_;
  std::unordered_map<std::uint64_t, std::vector<int>> by_schedule_;
  std::vector<std::unordered_map<int, Entry>> rows_;
  long elapsed_ = 0;
};

/// Soft epsilon-greedy choice: explore with probability
/// exploration_probability(epsilon, t), otherwise the first legal listed
/// action in ascending value order, falling back to a random legal action.
ActionVector select_action_soft_eps(const QTable& table, const NetworkState& state, long t,
                                    const mdp::EnvConfig& config, Rng& rng);

/// Q(s,a) <- (1-alpha) Q(s,a) + alpha (u + gamma min_a' Q(s',a')) with the
/// minimum over listed actions legal in s'. `t` feeds the learning rate.
void q_update(QTable& table, const NetworkState& s, const ActionVector& a, double cost,
              const NetworkState& s_next, long t, const mdp::EnvConfig& config);

class QLearningAgent : public Agent {
 public:
  QLearningAgent(QTable table, std::uint64_t seed) : table_(std::move(table)), rng_(seed) {}
  std::string name() const override { return "ql"; }
  ActionVector act(const Environment& env) override;
  void observe(const NetworkState& state, const ActionVector& action,
               const mdp::StepOutcome& outcome) override;

  const QTable& table() const { return table_; }
  QTable& table() { return table_; }

 private:
  QTable table_;
  Rng rng_;
  const mdp::EnvConfig* config_ = nullptr;
};

/// Runs the tabular learner for `slots` slots, continuing from `table`.
std::pair<QTable, DelayTrace> run_qlearning(Environment& env, QTable table, long slots,
                                            std::uint64_t seed, std::size_t ma_window = 1000);

}  // namespace uavcache::agents
