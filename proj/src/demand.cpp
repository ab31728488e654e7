#include "uavcache/demand.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace uavcache::demand {

std::vector<double> zipf_pmf(std::size_t num_contents, double exponent) {
  if (num_contents == 0) throw std::domain_error("zipf_pmf: need at least one content");
  if (!(exponent >= 0.0)) throw std::domain_error("zipf_pmf: exponent must be non-negative");
  std::vector<double> pmf(num_contents);
  for (std::size_t m = 0; m < num_contents; ++m) {
    pmf[m] = std::pow(static_cast<double>(m + 1), -exponent);
  }
  // Sum smallest-first to keep the normalization tight for long tails.
  double total = 0.0;
  for (auto it = pmf.rbegin(); it != pmf.rend(); ++it) total += *it;
  for (double& p : pmf) p /= total;
  return pmf;
}

ZipfPopularity::ZipfPopularity(std::size_t num_contents, double exponent)
    : exponent_(exponent), pmf_(zipf_pmf(num_contents, exponent)), cdf_(pmf_.size()) {
  std::partial_sum(pmf_.begin(), pmf_.end(), cdf_.begin());
  cdf_.back() = 1.0;
}

int ZipfPopularity::content_for(double u) const {
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) --it;
  return static_cast<int>(it - cdf_.begin());
}

RequestDraw draw_requests(std::size_t num_users, double gen_coeff, const ZipfPopularity& pop,
                          Rng& rng) {
  const double p = gen_coeff / static_cast<double>(num_users);
  RequestDraw draw{std::vector<std::uint8_t>(num_users), std::vector<int>(num_users)};
  for (std::size_t n = 0; n < num_users; ++n) {
    draw.fires[n] = uniform01(rng) < p ? 1 : 0;
    draw.content[n] = pop.content_for(uniform01(rng));
  }
  return draw;
}

void apply_requests(RequestState& state, const RequestDraw& draw) {
  for (std::size_t n = 0; n < state.num_users(); ++n) {
    if (state.has_request(n) || !draw.fires[n]) continue;
    state.pending[n] = draw.content[n];
    state.wait_age[n] = 0;
  }
}

void sample_requests(RequestState& state, const ZipfPopularity& pop, Rng& rng) {
  apply_requests(state, draw_requests(state.num_users(), state.request_gen_coeff, pop, rng));
}

int CacheState::occupancy() const {
  return static_cast<int>(std::count(cached.begin(), cached.end(), std::uint8_t{1}));
}

std::vector<std::uint8_t> update_virtual_queues(const CacheState& cache,
                                                std::span<const int> requester_counts,
                                                std::span<const std::uint8_t> proactive) {
  const std::size_t m_count = cache.cached.size();
  if (requester_counts.size() != m_count || proactive.size() != m_count) {
    throw std::invalid_argument("update_virtual_queues: vector lengths must equal the content count");
  }
  std::vector<std::uint8_t> mu(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    const int uncached = 1 - cache.cached[m];
    const int rho = uncached * requester_counts[m];
    mu[m] = static_cast<std::uint8_t>(std::min(rho + proactive[m] * uncached, 1));
  }
  return mu;
}

CacheState update_cache(const CacheState& cache, std::span<const std::uint8_t> proactive) {
  if (proactive.size() != cache.cached.size()) {
    throw std::logic_error("update_cache: proactive index length differs from content count");
  }
  const auto selected = std::count(proactive.begin(), proactive.end(), std::uint8_t{1});
  if (selected > cache.capacity) {
    throw std::logic_error("update_cache: proactive index selects " + std::to_string(selected) +
                           " contents, capacity is " + std::to_string(cache.capacity));
  }
  CacheState next = cache;
  next.cached.assign(proactive.begin(), proactive.end());
  return next;
}

}  // namespace uavcache::demand
