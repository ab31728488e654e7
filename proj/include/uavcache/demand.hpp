#pragma once

// Content popularity, request arrivals with persistence, and the cache /
// backhaul-queue bookkeeping driven by the proactive caching index.
//
// Contents are 0-based and ordered by popularity rank (content 0 is the most
// popular).

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace uavcache::demand {

using Rng = std::mt19937_64;

/// Independent sub-stream seed for `stream` derived from a master seed
/// (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Uniform double in [0, 1) using the top 53 bits of one draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Zipf probability mass over `num_contents` ranks with exponent `exponent`.
/// Throws std::domain_error for zero contents or a negative exponent.
std::vector<double> zipf_pmf(std::size_t num_contents, double exponent);

class ZipfPopularity {
 public:
  ZipfPopularity(std::size_t num_contents, double exponent);

  std::size_t size() const { return pmf_.size(); }
  double exponent() const { return exponent_; }
  const std::vector<double>& pmf() const { return pmf_; }

  /// Inverse-CDF sample from a uniform in [0, 1).
  int content_for(double u) const;

 private:
  double exponent_;
  std::vector<double> pmf_;
  std::vector<double> cdf_;
};

inline constexpr int kNoRequest = -1;

/// Per-user pending request (content id or kNoRequest) and the number of
/// slots it has been waiting.
struct RequestState {
  std::vector<int> pending;
  std::vector<int> wait_age;
  double request_gen_coeff = 2.0;

  explicit RequestState(std::size_t num_users = 0, double gen_coeff = 2.0)
      : pending(num_users, kNoRequest), wait_age(num_users, 0), request_gen_coeff(gen_coeff) {}

  std::size_t num_users() const { return pending.size(); }
  bool has_request(std::size_t user) const { return pending[user] != kNoRequest; }
  friend bool operator==(const RequestState&, const RequestState&) = default;
};

/// One slot's worth of candidate arrivals, drawn for every user whether or not
/// the user is idle so that the random stream does not depend on the policy.
struct RequestDraw {
  std::vector<std::uint8_t> fires;
  std::vector<int> content;
};

RequestDraw draw_requests(std::size_t num_users, double gen_coeff, const ZipfPopularity& pop,
                          Rng& rng);

/// Applies a draw: idle users whose draw fires take the drawn content with
/// wait age 0; users with a pending request keep it untouched.
void apply_requests(RequestState& state, const RequestDraw& draw);

/// draw_requests followed by apply_requests.
void sample_requests(RequestState& state, const ZipfPopularity& pop, Rng& rng);

struct CacheState {
  std::vector<std::uint8_t> cached;
  int capacity = 0;

  CacheState() = default;
  CacheState(std::size_t num_contents, int cap) : cached(num_contents, 0), capacity(cap) {}

  int occupancy() const;
  friend bool operator==(const CacheState&, const CacheState&) = default;
};

/// Backhaul virtual queues for one slot: mu_m = min(rho_m + i_m (1 - c_m), 1)
/// where rho_m = (1 - c_m) * requesters_m.
std::vector<std::uint8_t> update_virtual_queues(const CacheState& cache,
                                                std::span<const int> requester_counts,
                                                std::span<const std::uint8_t> proactive);

/// Next-slot cache: exactly the proactive index. Throws std::logic_error when
/// the index exceeds the capacity or has the wrong length.
CacheState update_cache(const CacheState& cache, std::span<const std::uint8_t> proactive);

}  // namespace uavcache::demand
