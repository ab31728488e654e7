#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "uavcache/agents.hpp"

namespace uavcache::agents {

namespace {

std::size_t uniform_index(Rng& rng, std::size_t n) {
  const auto i = static_cast<std::size_t>(demand::uniform01(rng) * static_cast<double>(n));
  return std::min(i, n - 1);
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Index drawn proportionally to `weights`.
std::size_t weighted_index(Rng& rng, const std::vector<double>& weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double u = demand::uniform01(rng) * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  // Rounding left u at the top edge: return the last non-zero weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return 0;
}

// Uniform k-subset of `pool` by partial Fisher-Yates.
std::vector<int> uniform_subset(Rng& rng, std::vector<int> pool, std::size_t k) {
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

std::uint8_t nearest_level(const std::vector<double>& levels, double target) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (std::abs(levels[i] - target) <= std::abs(levels[best] - target)) best = i;
  }
  return static_cast<std::uint8_t>(best);
}

}  // namespace

void DelayTrace::record(const mdp::StepOutcome& outcome) {
  cost.push_back(outcome.cost);
  backhaul.push_back(outcome.breakdown.backhaul);
  access.push_back(outcome.breakdown.access);
  scheduling.push_back(outcome.breakdown.scheduling);
  hits.push_back(outcome.cache_hits);
  misses.push_back(outcome.cache_misses);
  running_sum_ += outcome.cost;
  const std::size_t n = cost.size();
  if (window > 0 && n > window) running_sum_ -= cost[n - 1 - window];
  const std::size_t span = window > 0 ? std::min(n, window) : n;
  moving_average.push_back(running_sum_ / static_cast<double>(span));
}

double DelayTrace::tail_mean(std::size_t count) const {
  if (cost.empty()) return 0.0;
  const std::size_t k = std::min(count, cost.size());
  return std::accumulate(cost.end() - static_cast<long>(k), cost.end(), 0.0) / static_cast<double>(k);
}

double DelayTrace::tail_hit_ratio(std::size_t count) const {
  const std::size_t k = std::min(count, hits.size());
  long h = 0;
  long m = 0;
  for (std::size_t i = hits.size() - k; i < hits.size(); ++i) {
    h += hits[i];
    m += misses[i];
  }
  return h + m == 0 ? 0.0 : static_cast<double>(h) / static_cast<double>(h + m);
}

DelayTrace run_agent(Environment& env, Agent& agent, long slots, std::size_t ma_window) {
  DelayTrace trace(ma_window);
  trace.cost.reserve(static_cast<std::size_t>(std::max(0L, slots)));
  for (long t = 0; t < slots; ++t) {
    const NetworkState before = env.state();
    const ActionVector action = agent.act(env);
    if (!mdp::is_legal(before, action, env.config())) {
      throw mdp::ContractViolation(agent.name() + " emitted an illegal action at slot " +
                                   std::to_string(before.slot) + ": " + mdp::encode_action(action));
    }
    const auto outcome = env.step(action);
    const auto& waits = outcome.next_state.requests.wait_age;
    for (std::size_t n = 0; n < waits.size(); ++n) {
      if (waits[n] >= env.config().max_wait) {
        throw mdp::ContractViolation("user " + std::to_string(n) + " waited " + std::to_string(waits[n]) +
                                     " slots after slot " + std::to_string(before.slot));
      }
    }
    agent.observe(before, action, outcome);
    trace.record(outcome);
  }
  return trace;
}

ActionVector random_legal_action(const NetworkState& state, const mdp::EnvConfig& config, Rng& rng) {
  const int m_count = static_cast<int>(state.num_contents());
  ActionVector action;
  action.proactive.assign(m_count, 0);
  action.schedule.assign(state.num_users(), 0);

  std::vector<double> size_weights;
  for (int j = 0; j <= std::min(config.cache_capacity, m_count); ++j) {
    size_weights.push_back(binomial(m_count, j));
  }
  std::vector<int> contents(m_count);
  std::iota(contents.begin(), contents.end(), 0);
  for (int m : uniform_subset(rng, contents, weighted_index(rng, size_weights))) action.proactive[m] = 1;

  std::vector<int> optional;
  int forced = 0;
  for (std::size_t n = 0; n < state.num_users(); ++n) {
    if (state.forced(n, config.max_wait)) {
      action.schedule[n] = 1;
      ++forced;
    } else if (state.pending(n)) {
      optional.push_back(static_cast<int>(n));
    }
  }
  // Weight each extra-user count by the number of actions it admits so the
  // draw is uniform over the whole legal set.
  const double levels = static_cast<double>(config.power_levels.size());
  const int o_count = static_cast<int>(optional.size());
  std::vector<double> count_weights;
  for (int k = 0; k <= o_count; ++k) {
    count_weights.push_back(binomial(o_count, k) * std::pow(levels, (forced + k + 1) / 2));
  }
  for (int n : uniform_subset(rng, optional, weighted_index(rng, count_weights))) action.schedule[n] = 1;

  action.power_levels.resize((action.scheduled_count() + 1) / 2);
  for (auto& h : action.power_levels) {
    h = static_cast<std::uint8_t>(uniform_index(rng, config.power_levels.size()));
  }
  return action;
}

void check_greedy_admissible(const mdp::EnvConfig& config) {
  // Worst case: every user pending, every schedule scanned with a per-group
  // power search.
  double caching = 0.0;
  for (int j = 0; j <= config.cache_capacity; ++j) caching += binomial(config.num_contents, j);
  const double serving = std::ldexp(1.0, config.num_users) * config.power_block_size() *
                         static_cast<double>(config.power_levels.size());
  if (caching + serving > static_cast<double>(config.enumeration_limit)) {
    throw mdp::EnumerationTooLarge("greedy search over " + std::to_string(config.num_users) +
                                   " users and " + std::to_string(config.num_contents) +
                                   " contents exceeds the enumeration limit of " +
                                   std::to_string(config.enumeration_limit));
  }
}

ActionVector greedy_action(const NetworkState& state, const mdp::SlotContext& ctx,
                           const mdp::EnvConfig& config) {
  check_greedy_admissible(config);
  const auto caching =
      mdp::enumerate_caching_choices(static_cast<int>(state.num_contents()), config.cache_capacity);
  std::vector<double> backhaul(caching.size());
  for (std::size_t i = 0; i < caching.size(); ++i) {
    backhaul[i] = mdp::backhaul_cost(ctx, state, caching[i], config);
  }
  const double best_backhaul = *std::min_element(backhaul.begin(), backhaul.end());

  // For every schedule, the access term is smallest when each group takes its
  // own best level, because the group sum is monotone in every term.
  struct Serving {
    std::vector<std::uint8_t> schedule;
    std::vector<mdp::Group> groups;
    double access;
    double scheduling;
  };
  const auto schedules = mdp::enumerate_schedules(state, config.max_wait);
  const int pending = state.pending_count();
  std::vector<Serving> serving;
  serving.reserve(schedules.size());
  double best_rest = 0.0;
  for (const auto& schedule : schedules) {
    std::vector<int> users;
    for (std::size_t n = 0; n < schedule.size(); ++n) {
      if (schedule[n]) users.push_back(static_cast<int>(n));
    }
    Serving s{schedule, {}, 0.0, (pending - static_cast<int>(users.size())) * config.slot_length};
    if (!users.empty()) {
      s.groups = mdp::form_groups(users, ctx.user_distance);
      const int count = static_cast<int>(users.size());
      const int g_count = static_cast<int>(s.groups.size());
      for (const auto& group : s.groups) {
        double best = 0.0;
        for (std::size_t l = 0; l < config.power_levels.size(); ++l) {
          const double d = mdp::group_delay(group, config.power_levels[l], count, g_count,
                                            ctx.user_loss_db, ctx.access)
                               .total();
          if (l == 0 || d < best) best = d;
        }
        s.access += best;
      }
    }
    const double rest = s.access + s.scheduling;
    if (serving.empty() || rest < best_rest) best_rest = rest;
    serving.push_back(std::move(s));
  }
  const double target = best_backhaul + best_rest;

  // Walk the enumeration order and return the first action reaching the
  // minimum; rounding ties are resolved exactly as a full scan would.
  const auto levels = static_cast<std::uint8_t>(config.power_levels.size());
  for (std::size_t i = 0; i < caching.size(); ++i) {
    if (backhaul[i] + best_rest != target) continue;
    for (const auto& s : serving) {
      if (backhaul[i] + (s.access + s.scheduling) != target) continue;
      ActionVector action{caching[i], s.schedule, std::vector<std::uint8_t>(s.groups.size(), 0)};
      for (;;) {
        if (mdp::evaluate_cost(ctx, state, action, config).total() == target) return action;
        int pos = static_cast<int>(action.power_levels.size()) - 1;
        while (pos >= 0 && action.power_levels[pos] + 1 == levels) action.power_levels[pos--] = 0;
        if (pos < 0) break;
        ++action.power_levels[pos];
      }
    }
  }
  // Unreachable while the cost is monotone in each term; fall back to a scan.
  return greedy_action_exhaustive(state, ctx, config);
}

ActionVector greedy_action_exhaustive(const NetworkState& state, const mdp::SlotContext& ctx,
                                      const mdp::EnvConfig& config) {
  const auto actions = mdp::enumerate_legal_actions(state, config);
  if (actions.empty()) throw mdp::ContractViolation("no legal action in this state");
  std::size_t best = 0;
  double best_cost = mdp::evaluate_cost(ctx, state, actions[0], config).total();
  for (std::size_t i = 1; i < actions.size(); ++i) {
    const double c = mdp::evaluate_cost(ctx, state, actions[i], config).total();
    if (c < best_cost) {
      best_cost = c;
      best = i;
    }
  }
  return actions[best];
}

FixedAgent::FixedAgent(const mdp::EnvConfig& config, int per_slot, double near_coeff)
    : counts_(config.num_contents, 0),
      per_slot_(per_slot),
      level_(nearest_level(config.power_levels, near_coeff)) {
  if (per_slot < 0) throw std::invalid_argument("FixedAgent: per_slot must be non-negative");
}

void FixedAgent::note_requests(const NetworkState& state) {
  for (std::size_t n = 0; n < state.num_users(); ++n) {
    if (state.pending(n) && state.requests.wait_age[n] == 0) ++counts_[state.requests.pending[n]];
  }
}

ActionVector FixedAgent::decide(const NetworkState& state, const mdp::EnvConfig& config) {
  ActionVector action;
  const std::size_t m_count = state.num_contents();
  std::vector<int> order(m_count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return counts_[a] > counts_[b]; });
  action.proactive.assign(m_count, 0);
  const auto keep = std::min<std::size_t>(static_cast<std::size_t>(config.cache_capacity), m_count);
  for (std::size_t i = 0; i < keep; ++i) action.proactive[order[i]] = 1;

  const std::size_t n_count = state.num_users();
  action.schedule.assign(n_count, 0);
  for (std::size_t n = 0; n < n_count; ++n) {
    if (state.forced(n, config.max_wait)) action.schedule[n] = 1;
  }
  int picked = 0;
  for (std::size_t step = 0; step < n_count && picked < per_slot_; ++step) {
    const std::size_t n = (pointer_ + step) % n_count;
    if (state.pending(n) && !action.schedule[n]) {
      action.schedule[n] = 1;
      ++picked;
      pointer_ = (n + 1) % n_count;
    }
  }
  action.power_levels.assign((action.scheduled_count() + 1) / 2, level_);
  return action;
}

ActionVector FixedAgent::act(const Environment& env) {
  note_requests(env.state());
  return decide(env.state(), env.config());
}

}  // namespace uavcache::agents
