#include "uavcache/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace uavcache::mdp {

namespace {

constexpr std::uint64_t kGeometryStream = 1;
constexpr std::uint64_t kRequestStream = 2;
constexpr std::uint64_t kInitialCacheStream = 3;

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

double checked_delay(double bits, double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw std::runtime_error("access link rate is zero; delay would be infinite");
  }
  return bits / rate;
}

void fnv_mix(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xFFu;
    h *= 0x100000001B3ULL;
  }
}

// Uniform point in a flat-topped hexagon of side `side` centered at the origin.
channel::Position3D sample_in_hexagon(double side, Rng& rng) {
  const double half_height = side * std::numbers::sqrt3 / 2.0;
  for (;;) {
    const double x = (2.0 * demand::uniform01(rng) - 1.0) * side;
    const double y = (2.0 * demand::uniform01(rng) - 1.0) * half_height;
    if (std::numbers::sqrt3 * std::abs(x) + std::abs(y) <= std::numbers::sqrt3 * side) {
      return {x, y, 0.0};
    }
  }
}

}  // namespace

void EnvConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (num_users < 1) fail("num_users must be at least 1");
  if (num_contents < 1) fail("num_contents must be at least 1");
  if (cache_capacity < 0) fail("cache_capacity must be non-negative");
  if (cache_capacity > num_contents) fail("cache_capacity (Z) must not exceed num_contents (M)");
  if (num_contents > 64) fail("num_contents above 64 is not supported");
  if (!(zipf_exponent >= 0.0)) fail("zipf_exponent must be non-negative");
  if (max_wait < 1) fail("max_wait (beta) must be at least 1");
  if (!(request_gen_coeff > 0.0)) fail("request_gen_coeff must be positive");
  if (request_gen_coeff > static_cast<double>(num_users) / max_wait) {
    fail("request_gen_coeff (R_g) must not exceed num_users / max_wait (N/beta)");
  }
  if (!(slot_length > 0.0)) fail("slot_length must be positive");
  if (!(content_bits > 0.0)) fail("content_bits must be positive");
  if (!(uav_speed >= 0.0)) fail("uav_speed must be non-negative");
  if (!(trajectory_radius > 0.0)) fail("trajectory_radius must be positive");
  if (!(altitude > 0.0)) fail("altitude must be positive");
  if (!(cell_side > 0.0)) fail("cell_side must be positive");
  if (neighbor_cells < 0 || neighbor_cells > 6) fail("neighbor_cells must be in [0, 6]");
  if (!(radio.backhaul_bandwidth_hz > 0.0) || !(radio.access_bandwidth_hz > 0.0)) {
    fail("bandwidths must be positive");
  }
  if (!(radio.carrier_ghz > 0.0)) fail("carrier_ghz must be positive");
  if (power_levels.empty() || power_levels.size() > 255) fail("power_levels must hold 1..255 levels");
  for (double h : power_levels) {
    if (!(h > 0.0 && h <= 0.5)) fail("power levels must lie in (0, 0.5]");
  }
  if (!std::is_sorted(power_levels.begin(), power_levels.end())) fail("power levels must be ascending");
}

int NetworkState::pending_count() const {
  int count = 0;
  for (std::size_t n = 0; n < num_users(); ++n) count += pending(n) ? 1 : 0;
  return count;
}

int ActionVector::cached_count() const {
  return static_cast<int>(std::count(proactive.begin(), proactive.end(), std::uint8_t{1}));
}

int ActionVector::scheduled_count() const {
  return static_cast<int>(std::count(schedule.begin(), schedule.end(), std::uint8_t{1}));
}

std::string encode_action(const ActionVector& action) {
  std::string key;
  key.reserve(action.proactive.size() + action.schedule.size() + action.power_levels.size() + 2);
  for (auto v : action.proactive) key.push_back(static_cast<char>('0' + v));
  key.push_back('|');
  for (auto v : action.schedule) key.push_back(static_cast<char>('0' + v));
  key.push_back('|');
  for (auto v : action.power_levels) key.push_back(static_cast<char>('a' + v));
  return key;
}

std::vector<Group> form_groups(std::span<const int> scheduled,
                               std::span<const double> distance_to_uav) {
  std::vector<int> order(scheduled.begin(), scheduled.end());
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double da = distance_to_uav[a];
    const double db = distance_to_uav[b];
    return da != db ? da < db : a < b;
  });
  const std::size_t pairs = order.size() / 2;
  const bool odd = order.size() % 2 == 1;
  std::vector<Group> groups;
  groups.reserve(pairs + (odd ? 1 : 0));
  const std::size_t far_start = pairs + (odd ? 1 : 0);
  for (std::size_t i = 0; i < pairs; ++i) groups.push_back({order[i], order[far_start + i]});
  if (odd) groups.push_back({order[pairs], kSolo});
  return groups;
}

std::vector<double> backhaul_delay(std::span<const std::uint8_t> queues, double sinr,
                                   double content_bits, double bandwidth_hz) {
  if (!(sinr >= 0.0)) throw std::domain_error("backhaul_delay: SINR must be non-negative");
  std::vector<double> delay(queues.size(), 0.0);
  int active = 0;
  for (auto q : queues) active += q;
  if (active == 0) return delay;
  const double rate = bandwidth_hz * std::log2(1.0 + sinr);
  if (!(rate > 0.0)) throw std::runtime_error("backhaul rate is zero; delay would be infinite");
  const double per_queue_rate = rate / active;
  for (std::size_t m = 0; m < queues.size(); ++m) delay[m] = content_bits * queues[m] / per_queue_rate;
  return delay;
}

GroupDelay group_delay(const Group& group, double near_coeff, int scheduled_count,
                       int group_count, std::span<const double> loss_db, const AccessLink& link) {
  const double share = 2.0 * link.bandwidth_hz / scheduled_count;
  const double p_group = link.uav_power_w / group_count;
  if (group.far == kSolo) {
    const double snr = channel::solo_snr(p_group, loss_db[group.near], link.noise_w);
    return {checked_delay(link.content_bits, share * std::log2(1.0 + snr)), 0.0};
  }
  const auto sinr = channel::noma_sinr(p_group, near_coeff, loss_db[group.near],
                                       loss_db[group.far], link.noise_w);
  return {checked_delay(link.content_bits, share * std::log2(1.0 + sinr.near)),
          checked_delay(link.content_bits, share * std::log2(1.0 + sinr.far))};
}

std::vector<double> access_delay(std::span<const Group> groups, std::span<const double> near_coeffs,
                                 int scheduled_count, std::span<const double> loss_db,
                                 const AccessLink& link) {
  if (near_coeffs.size() != groups.size()) {
    throw std::invalid_argument("access_delay: one power coefficient per group required");
  }
  if (scheduled_count < 1) throw std::invalid_argument("access_delay: no scheduled users");
  std::vector<double> delay(loss_db.size(), 0.0);
  const int g_count = static_cast<int>(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto d = group_delay(groups[g], near_coeffs[g], scheduled_count, g_count, loss_db, link);
    delay[groups[g].near] = d.near;
    if (groups[g].far != kSolo) delay[groups[g].far] = d.far;
  }
  return delay;
}

Scenario Scenario::generate(const EnvConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(demand::derive_seed(seed, kGeometryStream));
  const double spacing = std::numbers::sqrt3 * config.cell_side;
  std::vector<channel::Position3D> neighbors;
  for (int k = 0; k < config.neighbor_cells; ++k) {
    const double angle = std::numbers::pi / 6.0 + k * std::numbers::pi / 3.0;
    neighbors.push_back({spacing * std::cos(angle), spacing * std::sin(angle), 0.0});
  }
  std::vector<channel::Position3D> users;
  users.reserve(config.num_users);
  for (int n = 0; n < config.num_users; ++n) users.push_back(sample_in_hexagon(config.cell_side, rng));
  const auto center = sample_in_hexagon(config.cell_side, rng);
  const double phase = 2.0 * std::numbers::pi * demand::uniform01(rng);
  channel::Trajectory orbit(center, config.trajectory_radius, config.uav_speed, config.altitude,
                            config.slot_length, phase);
  return Scenario{config, {0.0, 0.0, 0.0}, std::move(neighbors), std::move(users), orbit};
}

SlotContext make_context(const Scenario& scenario, long slot) {
  const auto& cfg = scenario.config;
  SlotContext ctx;
  ctx.slot = slot;
  ctx.uav = scenario.trajectory.position_at(slot);
  const double f = cfg.radio.carrier_ghz;
  const double serving = channel::avg_path_loss(channel::distance_3d(scenario.mbs, ctx.uav), cfg.altitude, f);
  std::vector<double> neighbor_losses;
  neighbor_losses.reserve(scenario.neighbor_mbs.size());
  for (const auto& site : scenario.neighbor_mbs) {
    neighbor_losses.push_back(channel::avg_path_loss(channel::distance_3d(site, ctx.uav), cfg.altitude, f));
  }
  ctx.backhaul_sinr = channel::backhaul_sinr(serving, neighbor_losses, cfg.radio);
  ctx.backhaul_rate = cfg.radio.backhaul_bandwidth_hz * std::log2(1.0 + ctx.backhaul_sinr);
  ctx.user_distance.reserve(scenario.users.size());
  ctx.user_loss_db.reserve(scenario.users.size());
  for (const auto& user : scenario.users) {
    const double d = channel::distance_3d(user, ctx.uav);
    ctx.user_distance.push_back(d);
    ctx.user_loss_db.push_back(channel::avg_path_loss(d, cfg.altitude, f));
  }
  ctx.access.bandwidth_hz = cfg.radio.access_bandwidth_hz;
  ctx.access.content_bits = cfg.content_bits;
  ctx.access.uav_power_w = channel::dbm_to_watts(cfg.radio.p_uav_dbm);
  ctx.access.noise_w = channel::noise_power_watts(cfg.radio.noise_density_dbm_hz,
                                                  cfg.radio.access_bandwidth_hz);
  return ctx;
}

bool is_legal(const NetworkState& state, const ActionVector& action, const EnvConfig& config) {
  const std::size_t m_count = state.num_contents();
  const std::size_t n_count = state.num_users();
  if (action.proactive.size() != m_count || action.schedule.size() != n_count) return false;
  int cached = 0;
  for (auto v : action.proactive) {
    if (v > 1) return false;
    cached += v;
  }
  if (cached > config.cache_capacity) return false;
  int scheduled = 0;
  for (std::size_t n = 0; n < n_count; ++n) {
    const auto b = action.schedule[n];
    if (b > 1) return false;
    if (b == 1 && !state.pending(n)) return false;
    if (b == 0 && state.forced(n, config.max_wait)) return false;
    scheduled += b;
  }
  if (action.power_levels.size() != static_cast<std::size_t>((scheduled + 1) / 2)) return false;
  for (auto h : action.power_levels) {
    if (h >= config.power_levels.size()) return false;
  }
  return true;
}

double count_legal_actions(const NetworkState& state, const EnvConfig& config) {
  const int m_count = static_cast<int>(state.num_contents());
  double caching = 0.0;
  for (int j = 0; j <= std::min(config.cache_capacity, m_count); ++j) caching += binomial(m_count, j);
  int forced = 0;
  int optional = 0;
  for (std::size_t n = 0; n < state.num_users(); ++n) {
    if (state.forced(n, config.max_wait)) {
      ++forced;
    } else if (state.pending(n)) {
      ++optional;
    }
  }
  const double levels = static_cast<double>(config.power_levels.size());
  double serving = 0.0;
  for (int k = 0; k <= optional; ++k) {
    serving += binomial(optional, k) * std::pow(levels, (forced + k + 1) / 2);
  }
  return caching * serving;
}

namespace {

void caching_choices(int m, int remaining, std::vector<std::uint8_t>& current,
                     std::vector<std::vector<std::uint8_t>>& out) {
  if (m == static_cast<int>(current.size())) {
    out.push_back(current);
    return;
  }
  if (remaining > 0) {
    current[m] = 1;
    caching_choices(m + 1, remaining - 1, current, out);
  }
  current[m] = 0;
  caching_choices(m + 1, remaining, current, out);
}

void schedule_choices(const NetworkState& state, int max_wait, std::size_t n,
                      std::vector<std::uint8_t>& current,
                      std::vector<std::vector<std::uint8_t>>& out) {
  if (n == current.size()) {
    out.push_back(current);
    return;
  }
  if (!state.pending(n)) {
    current[n] = 0;
    schedule_choices(state, max_wait, n + 1, current, out);
    return;
  }
  if (!state.forced(n, max_wait)) {
    current[n] = 0;
    schedule_choices(state, max_wait, n + 1, current, out);
  }
  current[n] = 1;
  schedule_choices(state, max_wait, n + 1, current, out);
  current[n] = 0;
}

}  // namespace

std::vector<std::vector<std::uint8_t>> enumerate_caching_choices(int num_contents, int capacity) {
  std::vector<std::vector<std::uint8_t>> out;
  std::vector<std::uint8_t> scratch(num_contents, 0);
  caching_choices(0, capacity, scratch, out);
  return out;
}

std::vector<std::vector<std::uint8_t>> enumerate_schedules(const NetworkState& state, int max_wait) {
  std::vector<std::vector<std::uint8_t>> out;
  std::vector<std::uint8_t> scratch(state.num_users(), 0);
  schedule_choices(state, max_wait, 0, scratch, out);
  return out;
}

std::vector<ActionVector> enumerate_legal_actions(const NetworkState& state,
                                                  const EnvConfig& config) {
  const double total = count_legal_actions(state, config);
  if (total > static_cast<double>(config.enumeration_limit)) {
    throw EnumerationTooLarge("legal action space holds " + std::to_string(total) +
                              " actions, above the enumeration limit of " +
                              std::to_string(config.enumeration_limit));
  }
  const auto caching =
      enumerate_caching_choices(static_cast<int>(state.num_contents()), config.cache_capacity);
  const auto schedules = enumerate_schedules(state, config.max_wait);

  const auto levels = static_cast<std::uint8_t>(config.power_levels.size());
  std::vector<ActionVector> actions;
  actions.reserve(static_cast<std::size_t>(total));
  for (const auto& proactive : caching) {
    for (const auto& schedule : schedules) {
      const int scheduled = static_cast<int>(std::count(schedule.begin(), schedule.end(), std::uint8_t{1}));
      std::vector<std::uint8_t> power((scheduled + 1) / 2, 0);
      for (;;) {
        actions.push_back({proactive, schedule, power});
        // Odometer with the last group as the fastest digit.
        int pos = static_cast<int>(power.size()) - 1;
        while (pos >= 0 && power[pos] + 1 == levels) power[pos--] = 0;
        if (pos < 0) break;
        ++power[pos];
      }
    }
  }
  return actions;
}

double backhaul_cost(const SlotContext& ctx, const NetworkState& state,
                     std::span<const std::uint8_t> proactive, const EnvConfig& config) {
  std::vector<int> requesters(state.num_contents(), 0);
  for (std::size_t n = 0; n < state.num_users(); ++n) {
    if (state.pending(n)) ++requesters[state.requests.pending[n]];
  }
  const auto queues = demand::update_virtual_queues(state.cache, requesters, proactive);
  const auto delays = backhaul_delay(queues, ctx.backhaul_sinr, config.content_bits,
                                     config.radio.backhaul_bandwidth_hz);
  double sum = 0.0;
  for (double d : delays) sum += d;
  return sum;
}

CostBreakdown evaluate_cost(const SlotContext& ctx, const NetworkState& state,
                            const ActionVector& action, const EnvConfig& config) {
  CostBreakdown cost;
  cost.backhaul = backhaul_cost(ctx, state, action.proactive, config);

  std::vector<int> scheduled;
  for (std::size_t n = 0; n < state.num_users(); ++n) {
    if (action.schedule[n]) scheduled.push_back(static_cast<int>(n));
  }
  if (!scheduled.empty()) {
    const auto groups = form_groups(scheduled, ctx.user_distance);
    const int count = static_cast<int>(scheduled.size());
    const int g_count = static_cast<int>(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const double h = config.power_levels[action.power_levels[g]];
      cost.access += group_delay(groups[g], h, count, g_count, ctx.user_loss_db, ctx.access).total();
    }
  }
  const int waiting = state.pending_count() - static_cast<int>(scheduled.size());
  cost.scheduling = waiting * config.slot_length;
  return cost;
}

double relaxed_cost(const SlotContext& ctx, const NetworkState& state, const RelaxedAction& action,
                    const EnvConfig& config) {
  const std::size_t m_count = state.num_contents();
  std::vector<int> requesters(m_count, 0);
  std::vector<int> waiting;
  for (std::size_t n = 0; n < state.num_users(); ++n) {
    if (!state.pending(n)) continue;
    ++requesters[state.requests.pending[n]];
    waiting.push_back(static_cast<int>(n));
  }

  double queued = 0.0;
  for (std::size_t m = 0; m < m_count; ++m) {
    const double uncached = 1.0 - state.cache.cached[m];
    queued += std::min(uncached * requesters[m] + action.proactive[m] * uncached, 1.0);
  }
  const double backhaul = queued > 0.0 ? config.content_bits * queued * queued / ctx.backhaul_rate : 0.0;

  double served = 0.0;
  double scheduling = 0.0;
  for (int n : waiting) {
    served += action.schedule[n];
    scheduling += (1.0 - action.schedule[n]) * config.slot_length;
  }

  double access = 0.0;
  if (served > 0.0) {
    const auto groups = form_groups(waiting, ctx.user_distance);
    const double p_group = ctx.access.uav_power_w / std::max(1.0, served / 2.0);
    // C1 / ((2 B_A / sum b) log2(1 + sinr)), weighted by the user's own b.
    const double scale = config.content_bits * served / (2.0 * ctx.access.bandwidth_hz);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto& grp = groups[g];
      if (grp.far == kSolo) {
        const double snr = channel::solo_snr(p_group, ctx.user_loss_db[grp.near], ctx.access.noise_w);
        access += action.schedule[grp.near] * scale / std::log2(1.0 + snr);
        continue;
      }
      const double h = std::clamp(action.power[g], 1e-6, 0.5);
      const auto sinr = channel::noma_sinr(p_group, h, ctx.user_loss_db[grp.near],
                                           ctx.user_loss_db[grp.far], ctx.access.noise_w);
      access += action.schedule[grp.near] * scale / std::log2(1.0 + sinr.near);
      access += action.schedule[grp.far] * scale / std::log2(1.0 + sinr.far);
    }
  }
  return backhaul + (access + scheduling);
}

StepOutcome step(const SlotContext& ctx, const NetworkState& state, const ActionVector& action,
                 const EnvConfig& config, const demand::RequestDraw& draw) {
  if (!is_legal(state, action, config)) {
    throw ContractViolation("illegal action at slot " + std::to_string(state.slot) + ": " +
                            encode_action(action));
  }
  StepOutcome out;
  out.breakdown = evaluate_cost(ctx, state, action, config);
  out.cost = out.breakdown.total();

  NetworkState next = state;
  next.cache = demand::update_cache(state.cache, action.proactive);
  for (std::size_t n = 0; n < state.num_users(); ++n) {
    if (!state.pending(n)) continue;
    if (action.schedule[n]) {
      const int content = state.requests.pending[n];
      if (state.cache.cached[content]) {
        ++out.cache_hits;
      } else {
        ++out.cache_misses;
      }
      next.requests.pending[n] = demand::kNoRequest;
      next.requests.wait_age[n] = 0;
    } else {
      ++next.requests.wait_age[n];
    }
  }
  demand::apply_requests(next.requests, draw);
  next.slot = state.slot + 1;
  for (std::size_t n = 0; n < next.num_users(); ++n) {
    if (next.pending(n) && next.requests.wait_age[n] >= config.max_wait) {
      throw ContractViolation("user " + std::to_string(n) + " waited " +
                              std::to_string(next.requests.wait_age[n]) + " slots at slot " +
                              std::to_string(next.slot));
    }
  }
  out.next_state = std::move(next);
  return out;
}

Environment::Environment(const EnvConfig& config, std::uint64_t seed)
    : scenario_(Scenario::generate(config, seed)),
      popularity_(static_cast<std::size_t>(config.num_contents), config.zipf_exponent),
      request_rng_(demand::derive_seed(seed, kRequestStream)),
      request_hash_(0xCBF29CE484222325ULL) {
  state_.cache = demand::CacheState(config.num_contents, config.cache_capacity);
  if (config.random_initial_cache) {
    Rng rng(demand::derive_seed(seed, kInitialCacheStream));
    std::vector<int> ids(config.num_contents);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    for (int j = 0; j < config.cache_capacity; ++j) state_.cache.cached[ids[j]] = 1;
  }
  state_.requests = demand::RequestState(config.num_users, config.request_gen_coeff);
  state_.slot = 1;
  demand::apply_requests(state_.requests, next_draw());
  context_ = make_context(scenario_, state_.slot);
}

demand::RequestDraw Environment::next_draw() {
  auto draw = demand::draw_requests(state_.requests.num_users(), scenario_.config.request_gen_coeff,
                                    popularity_, request_rng_);
  for (std::size_t n = 0; n < draw.fires.size(); ++n) {
    fnv_mix(request_hash_, draw.fires[n]);
    fnv_mix(request_hash_, static_cast<std::uint64_t>(draw.content[n]));
  }
  return draw;
}

StepOutcome Environment::step(const ActionVector& action) {
  const auto draw = next_draw();
  auto out = mdp::step(context_, state_, action, scenario_.config, draw);
  state_ = out.next_state;
  context_ = make_context(scenario_, state_.slot);
  return out;
}

}  // namespace uavcache::mdp
