#pragma once

// The caching / scheduling / NOMA-power decision process of one UAV cell:
// state, action, action legality, the per-slot delay cost and the transition.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "uavcache/channel.hpp"
#include "uavcache/demand.hpp"

namespace uavcache::mdp {

using demand::Rng;

/// Raised when an action violates the caching, scheduling or power
/// constraints, or when a state invariant (such as the wait bound) breaks.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when an exhaustive enumeration would exceed the configured guard.
class EnumerationTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EnvConfig {
  int num_users = 8;                 // N
  int num_contents = 4;              // M
  int cache_capacity = 2;            // Z
  double zipf_exponent = 0.8;        // eta
  double request_gen_coeff = 2.0;    // R_g
  int max_wait = 2;                  // beta, in slots
  double slot_length = 0.05;         // delta, seconds
  double content_bits = 16e6;        // C1 = 2 MB
  double uav_speed = 20.0;           // m/s
  double trajectory_radius = 100.0;  // m
  double altitude = 100.0;           // m
  double cell_side = 100.0;          // hexagon side, m
  int neighbor_cells = 6;
  channel::RadioParams radio;
  std::vector<double> power_levels{0.1, 0.2, 0.3, 0.4, 0.5};
  bool random_initial_cache = false;
  std::size_t enumeration_limit = 5'000'000;

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const;

  int power_block_size() const { return (num_users + 1) / 2; }
};

struct NetworkState {
  demand::CacheState cache;
  demand::RequestState requests;
  long slot = 1;

  std::size_t num_users() const { return requests.num_users(); }
  std::size_t num_contents() const { return cache.cached.size(); }
  bool pending(std::size_t user) const { return requests.has_request(user); }
  /// A pending user that must be served this slot to respect the wait bound.
  bool forced(std::size_t user, int max_wait) const {
    return pending(user) && requests.wait_age[user] >= max_wait - 1;
  }
  int pending_count() const;

  friend bool operator==(const NetworkState&, const NetworkState&) = default;
};

struct ActionVector {
  std::vector<std::uint8_t> proactive;     // I: next-slot cache contents
  std::vector<std::uint8_t> schedule;      // B: users served this slot
  std::vector<std::uint8_t> power_levels;  // H: level index per NOMA group

  int cached_count() const;
  int scheduled_count() const;

  friend bool operator==(const ActionVector&, const ActionVector&) = default;
};

/// Compact byte encoding (I bits, B bits, H indices); usable as a hash key.
std::string encode_action(const ActionVector& action);

inline constexpr int kSolo = -1;

/// A NOMA group. `far == kSolo` marks a user served alone with the whole
/// group power and no superposition.
struct Group {
  int near = 0;
  int far = kSolo;
  friend bool operator==(const Group&, const Group&) = default;
};

/// Nearest-near / nearest-far pairing. Users are ranked by distance to the
/// UAV (ties by id); the i-th user of the near half is paired with the i-th
/// user of the far half. With an odd count the median user is served solo and
/// its group is listed last.
std::vector<Group> form_groups(std::span<const int> scheduled,
                               std::span<const double> distance_to_uav);

/// Per-content backhaul delay: the link rate B*log2(1+sinr) is split evenly
/// among the non-empty virtual queues.
std::vector<double> backhaul_delay(std::span<const std::uint8_t> queues, double sinr,
                                   double content_bits, double bandwidth_hz);

struct AccessLink {
  double bandwidth_hz = 20e6;
  double content_bits = 16e6;
  double uav_power_w = 1.0;
  double noise_w = 0.0;
};

struct GroupDelay {
  double near = 0.0;
  double far = 0.0;  // zero for a solo group
  double total() const { return near + far; }
};

/// Delays of one group when `scheduled_count` users share the access band and
/// the UAV power is split over `group_count` groups.
GroupDelay group_delay(const Group& group, double near_coeff, int scheduled_count,
                       int group_count, std::span<const double> loss_db, const AccessLink& link);

/// Radio-access delay for every user (zero for users outside `groups`).
/// Throws std::runtime_error if any rate collapses to zero.
std::vector<double> access_delay(std::span<const Group> groups, std::span<const double> near_coeffs,
                                 int scheduled_count, std::span<const double> loss_db,
                                 const AccessLink& link);

/// Fixed geometry of an episode: MBS sites, user drop and the UAV orbit.
struct Scenario {
  EnvConfig config;
  channel::Position3D mbs;
  std::vector<channel::Position3D> neighbor_mbs;
  std::vector<channel::Position3D> users;
  channel::Trajectory trajectory;

  /// Users uniform in the hexagonal target cell, orbit centered at a uniform
  /// point of the cell with a uniform starting phase.
  static Scenario generate(const EnvConfig& config, std::uint64_t seed);
};

/// Everything about the radio environment that is fixed within one slot.
struct SlotContext {
  long slot = 1;
  channel::Position3D uav;
  double backhaul_sinr = 0.0;
  double backhaul_rate = 0.0;  // bit/s
  std::vector<double> user_distance;
  std::vector<double> user_loss_db;
  AccessLink access;
};

SlotContext make_context(const Scenario& scenario, long slot);

struct CostBreakdown {
  double backhaul = 0.0;
  double access = 0.0;
  double scheduling = 0.0;
  /// Summation order is fixed so the total is monotone in each term.
  double total() const { return backhaul + (access + scheduling); }
};

/// Legality of `action` in `state`: binary entries, power indices inside the
/// level set with one index per group, only pending users scheduled, every
/// user at the wait bound scheduled, and at most `cache_capacity` contents in
/// the proactive index.
bool is_legal(const NetworkState& state, const ActionVector& action, const EnvConfig& config);

/// Number of legal actions without materializing them.
double count_legal_actions(const NetworkState& state, const EnvConfig& config);

/// Every caching index with at most `capacity` ones, in descending
/// lexicographic order.
std::vector<std::vector<std::uint8_t>> enumerate_caching_choices(int num_contents, int capacity);

/// Every legal schedule of `state` in ascending lexicographic order.
std::vector<std::vector<std::uint8_t>> enumerate_schedules(const NetworkState& state, int max_wait);

/// All legal actions in a fixed order: proactive index in descending
/// lexicographic order (larger, more popular sets first), then the schedule
/// in ascending lexicographic order, then the power indices ascending.
/// Throws EnumerationTooLarge above `config.enumeration_limit`.
std::vector<ActionVector> enumerate_legal_actions(const NetworkState& state,
                                                  const EnvConfig& config);

/// Backhaul term of the cost, which depends only on the caching index.
double backhaul_cost(const SlotContext& ctx, const NetworkState& state,
                     std::span<const std::uint8_t> proactive, const EnvConfig& config);

/// Instantaneous delay cost of `action` (assumed legal) in `state`.
CostBreakdown evaluate_cost(const SlotContext& ctx, const NetworkState& state,
                            const ActionVector& action, const EnvConfig& config);

/// Relaxed action: caching and scheduling in [0,1], NOMA coefficients in
/// [min level, max level]; `power` has one entry per potential group.
struct RelaxedAction {
  std::vector<double> proactive;
  std::vector<double> schedule;
  std::vector<double> power;
};

/// Continuous surrogate of the cost for gradient search. Queues use the same
/// min(.,1) clamp with fractional caching; the scheduling term is linear in
/// the fractional schedule; access delays are weighted by the fractional
/// schedule, with groups paired over all pending users and the band shared
/// by the fractional scheduled count.
double relaxed_cost(const SlotContext& ctx, const NetworkState& state, const RelaxedAction& action,
                    const EnvConfig& config);

struct StepOutcome {
  NetworkState next_state;
  double cost = 0.0;
  CostBreakdown breakdown;
  int cache_hits = 0;    // scheduled requests whose content was cached this slot
  int cache_misses = 0;  // scheduled requests fetched over the backhaul
};

/// Applies a legal action: charges the slot cost, installs the proactive index
/// as the next cache, clears served requests, ages the rest, then applies the
/// next slot's arrivals from `draw`. Throws ContractViolation on an illegal
/// action.
StepOutcome step(const SlotContext& ctx, const NetworkState& state, const ActionVector& action,
                 const EnvConfig& config, const demand::RequestDraw& draw);

/// One cell: scenario geometry, current state and the request random stream.
/// The request stream and geometry depend only on the seed, so two policies
/// driven with the same seed see the same arrival draws.
class Environment {
 public:
  Environment(const EnvConfig& config, std::uint64_t seed);

  const EnvConfig& config() const { return scenario_.config; }
  const Scenario& scenario() const { return scenario_; }
  const NetworkState& state() const { return state_; }
  const SlotContext& context() const { return context_; }
  const demand::ZipfPopularity& popularity() const { return popularity_; }

  /// Cost of `action` in the current state without advancing.
  CostBreakdown cost_of(const ActionVector& action) const {
    return evaluate_cost(context_, state_, action, scenario_.config);
  }

  StepOutcome step(const ActionVector& action);

  /// FNV-1a hash over every arrival draw consumed so far.
  std::uint64_t request_log_hash() const { return request_hash_; }

 private:
  demand::RequestDraw next_draw();

  Scenario scenario_;
  demand::ZipfPopularity popularity_;
  Rng request_rng_;
  NetworkState state_;
  SlotContext context_;
  std::uint64_t request_hash_;
};

}  // namespace uavcache::mdp
