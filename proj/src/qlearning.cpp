#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "uavcache/agents.hpp"

namespace uavcache::agents {

namespace {

constexpr const char* kQTableFormat = "uavcache-qtable";
constexpr int kQTableVersion = 1;

std::uint64_t schedule_mask(const std::vector<std::uint8_t>& schedule) {
  std::uint64_t mask = 0;
  for (std::size_t n = 0; n < schedule.size(); ++n) {
    if (schedule[n]) mask |= std::uint64_t{1} << n;
  }
  return mask;
}

std::string to_hex(const std::string& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 0xF]);
  }
  return out;
}

std::string from_hex(const std::string& hex) {
  if (hex.size() % 2 != 0) throw std::runtime_error("qtable: odd-length state key");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw std::runtime_error("qtable: bad hex digit in state key");
  };
  std::string out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    out.push_back(static_cast<char>(nibble(hex[i]) * 16 + nibble(hex[i + 1])));
  }
  return out;
}

const char* clock_name(RateClock c) { return c == RateClock::slot ? "slot" : "visits"; }
const char* scope_name(ExploitScope s) { return s == ExploitScope::listed ? "listed" : "visited"; }
const char* key_name(StateKeyMode k) {
  switch (k) {
    case StateKeyMode::full: return "full";
    case StateKeyMode::compact: return "compact";
    case StateKeyMode::waiting: return "waiting";
  }
  return "full";
}

StateKeyMode key_from_name(const std::string& name) {
  if (name == "full") return StateKeyMode::full;
  if (name == "compact") return StateKeyMode::compact;
  if (name == "waiting") return StateKeyMode::waiting;
  throw std::runtime_error("unknown state key mode '" + name + "'");
}

}  // namespace

void QHyper::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be non-negative");
  if (!(c_alpha > 0.0)) throw std::invalid_argument("c_alpha must be positive");
  if (!(phi_alpha > 0.5 && phi_alpha <= 1.0)) throw std::invalid_argument("phi_alpha must lie in (0.5, 1]");
}

std::string state_key(const NetworkState& state, StateKeyMode mode) {
  std::string key;
  key.reserve(state.num_contents() + 2 * state.num_users());
  for (auto c : state.cache.cached) key.push_back(static_cast<char>(c));
  for (std::size_t n = 0; n < state.num_users(); ++n) {
    const int content = state.requests.pending[n];
    if (mode == StateKeyMode::full) {
      key.push_back(static_cast<char>(content + 1));
    } else {
      key.push_back(static_cast<char>(content == demand::kNoRequest ? 0 : 1));
    }
    if (mode != StateKeyMode::waiting) {
      key.push_back(static_cast<char>(content == demand::kNoRequest ? 0 : state.requests.wait_age[n]));
    }
  }
  return key;
}

double exploration_probability(double epsilon, long t) {
  if (t < 1) throw std::invalid_argument("exploration_probability: slot index starts at 1");
  const double td = static_cast<double>(t);
  return td <= epsilon ? 1.0 : epsilon / td;
}

double learning_rate(long t, double c_alpha, double phi_alpha) {
  return 1.0 / std::pow(static_cast<double>(t) + c_alpha, phi_alpha);
}

QTable::QTable(QHyper hyper) : hyper_(hyper) { hyper_.validate(); }

int QTable::add_state(const NetworkState& state) {
  const auto key = state_key(state, hyper_.key_mode);
  auto [it, inserted] = state_index_.try_emplace(key, static_cast<int>(state_keys_.size()));
  if (inserted) {
    state_keys_.push_back(key);
    rows_.emplace_back();
  }
  return it->second;
}

int QTable::find_state(const NetworkState& state) const {
  auto it = state_index_.find(state_key(state, hyper_.key_mode));
  return it == state_index_.end() ? -1 : it->second;
}

int QTable::add_action(const ActionVector& action) {
  if (action.schedule.size() > 64) throw std::invalid_argument("QTable: at most 64 users supported");
  auto [it, inserted] = action_index_.try_emplace(encode_action(action), static_cast<int>(actions_.size()));
  if (inserted) {
    actions_.push_back(action);
    by_schedule_[schedule_mask(action.schedule)].push_back(it->second);
  }
  return it->second;
}

int QTable::find_action(const ActionVector& action) const {
  auto it = action_index_.find(encode_action(action));
  return it == action_index_.end() ? -1 : it->second;
}

double QTable::value(int state_id, int action_id) const {
  if (state_id < 0) return 0.0;
  const auto& row = rows_[state_id];
  auto it = row.find(action_id);
  return it == row.end() ? 0.0 : it->second.value;
}

std::uint32_t QTable::visits(int state_id, int action_id) const {
  if (state_id < 0) return 0;
  const auto& row = rows_[state_id];
  auto it = row.find(action_id);
  return it == row.end() ? 0 : it->second.visits;
}

void QTable::set(int state_id, int action_id, Entry entry) { rows_.at(state_id)[action_id] = entry; }

QTable::Entry& QTable::entry(int state_id, int action_id) { return rows_.at(state_id)[action_id]; }

template <typename Visit>
void QTable::for_each_legal_listed(const NetworkState& state, const mdp::EnvConfig& config,
                                   Visit&& visit) const {
  // A listed action is legal here iff its schedule covers the forced users
  // and stays inside the pending ones; caching and power legality do not
  // depend on the state.
  std::uint64_t forced = 0;
  std::uint64_t optional = 0;
  for (std::size_t n = 0; n < state.num_users(); ++n) {
    if (state.forced(n, config.max_wait)) {
      forced |= std::uint64_t{1} << n;
    } else if (state.pending(n)) {
      optional |= std::uint64_t{1} << n;
    }
  }
  std::uint64_t sub = optional;
  for (;;) {
    auto it = by_schedule_.find(forced | sub);
    if (it != by_schedule_.end()) {
      for (int id : it->second) visit(id);
    }
    if (sub == 0) break;
    sub = (sub - 1) & optional;
  }
}

int QTable::best_legal_action(const NetworkState& state, const mdp::EnvConfig& config) const {
  const int s = find_state(state);
  const bool visited_only = hyper_.scope == ExploitScope::visited;
  int best = -1;
  double best_value = 0.0;
  for_each_legal_listed(state, config, [&](int a) {
    if (visited_only && visits(s, a) == 0) return;
    const double q = value(s, a);
    if (best < 0 || q < best_value || (q == best_value && a < best)) {
      best = a;
      best_value = q;
    }
  });
  return best;
}

double QTable::min_legal_value(const NetworkState& state, const mdp::EnvConfig& config) const {
  const int best = best_legal_action(state, config);
  return best < 0 ? 0.0 : value(find_state(state), best);
}

std::size_t QTable::nonzero_entries() const {
  std::size_t count = 0;
  for (const auto& row : rows_) count += row.size();
  return count;
}

void QTable::save(const std::string& path) const {
  nlohmann::json j;
  j["format"] = kQTableFormat;
  j["version"] = kQTableVersion;
  j["elapsed_slots"] = elapsed_;
  j["hyper"] = {{"gamma", hyper_.gamma},
                {"epsilon", hyper_.epsilon},
                {"c_alpha", hyper_.c_alpha},
                {"phi_alpha", hyper_.phi_alpha},
                {"rate_clock", clock_name(hyper_.clock)},
                {"exploit_scope", scope_name(hyper_.scope)},
                {"state_key", key_name(hyper_.key_mode)}};
  auto& states = j["states"] = nlohmann::json::array();
  for (const auto& key : state_keys_) states.push_back(to_hex(key));
  auto& actions = j["actions"] = nlohmann::json::array();
  for (const auto& a : actions_) {
    actions.push_back({{"cache", a.proactive}, {"schedule", a.schedule}, {"power", a.power_levels}});
  }
  auto& entries = j["entries"] = nlohmann::json::array();
  for (std::size_t s = 0; s < rows_.size(); ++s) {
    std::vector<std::pair<int, Entry>> row(rows_[s].begin(), rows_[s].end());
    std::sort(row.begin(), row.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    for (const auto& [a, e] : row) entries.push_back({s, a, e.value, e.visits});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write Q-table to " + path);
  out << j.dump(1) << '\n';
}

QTable QTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read Q-table from " + path);
  const auto j = nlohmann::json::parse(in);
  if (j.value("format", "") != kQTableFormat) throw std::runtime_error(path + " is not a Q-table file");
  if (j.value("version", 0) != kQTableVersion) {
    throw std::runtime_error(path + ": unsupported Q-table version " + std::to_string(j.value("version", 0)));
  }
  const auto& h = j.at("hyper");
  QHyper hyper;
  hyper.gamma = h.at("gamma");
  hyper.epsilon = h.at("epsilon");
  hyper.c_alpha = h.at("c_alpha");
  hyper.phi_alpha = h.at("phi_alpha");
  hyper.clock = h.at("rate_clock") == "slot" ? RateClock::slot : RateClock::visits;
  hyper.scope = h.at("exploit_scope") == "listed" ? ExploitScope::listed : ExploitScope::visited;
  hyper.key_mode = key_from_name(h.at("state_key").get<std::string>());
  QTable table(hyper);
  table.elapsed_ = j.value("elapsed_slots", 0L);
  for (const auto& hex : j.at("states")) {
    const auto key = from_hex(hex.get<std::string>());
    table.state_index_.emplace(key, static_cast<int>(table.state_keys_.size()));
    table.state_keys_.push_back(key);
    table.rows_.emplace_back();
  }
  for (const auto& a : j.at("actions")) {
    table.add_action({a.at("cache").get<std::vector<std::uint8_t>>(),
                      a.at("schedule").get<std::vector<std::uint8_t>>(),
                      a.at("power").get<std::vector<std::uint8_t>>()});
  }
  for (const auto& e : j.at("entries")) {
    const int s = e.at(0);
    const int a = e.at(1);
    if (s < 0 || s >= static_cast<int>(table.state_count()) || a < 0 ||
        a >= static_cast<int>(table.action_count())) {
      throw std::runtime_error(path + ": Q-table entry index out of range");
    }
    table.rows_[s][a] = Entry{e.at(2).get<double>(), e.at(3).get<std::uint32_t>()};
  }
  return table;
}

ActionVector select_action_soft_eps(const QTable& table, const NetworkState& state, long t,
                                    const mdp::EnvConfig& config, Rng& rng) {
  const double explore = exploration_probability(table.hyper().epsilon, t);
  // Always consume one draw so the stream position does not depend on the branch.
  if (demand::uniform01(rng) < explore) return random_legal_action(state, config, rng);
  const int best = table.best_legal_action(state, config);
  if (best < 0) return random_legal_action(state, config, rng);
  return table.action(best);
}

void q_update(QTable& table, const NetworkState& s, const ActionVector& a, double cost,
              const NetworkState& s_next, long t, const mdp::EnvConfig& config) {
  const int sid = table.add_state(s);
  const int aid = table.add_action(a);
  const double bootstrap = table.min_legal_value(s_next, config);
  auto& e = table.entry(sid, aid);
  ++e.visits;
  const auto& hp = table.hyper();
  const long clock = hp.clock == RateClock::slot ? t : static_cast<long>(e.visits);
  const double alpha = learning_rate(clock, hp.c_alpha, hp.phi_alpha);
  e.value = (1.0 - alpha) * e.value + alpha * (cost + hp.gamma * bootstrap);
}

ActionVector QLearningAgent::act(const Environment& env) {
  config_ = &env.config();
  const long t = table_.tick();
  table_.add_state(env.state());
  return select_action_soft_eps(table_, env.state(), t, env.config(), rng_);
}

void QLearningAgent::observe(const NetworkState& state, const ActionVector& action,
                             const mdp::StepOutcome& outcome) {
  table_.add_action(action);
  q_update(table_, state, action, outcome.cost, outcome.next_state, table_.elapsed_slots(), *config_);
  table_.add_state(outcome.next_state);
}

std::pair<QTable, DelayTrace> run_qlearning(Environment& env, QTable table, long slots,
                                            std::uint64_t seed, std::size_t ma_window) {
  QLearningAgent agent(std::move(table), seed);
  auto trace = run_agent(env, agent, slots, ma_window);
  trace.explored_actions = agent.table().action_count();
  return {std::move(agent.table()), std::move(trace)};
}

}  // namespace uavcache::agents
