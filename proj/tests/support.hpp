#pragma once

#include <cstdint>
#include <algorithm>
#include <initializer_list>
#include <vector>

#include "uavcache/mdp.hpp"

namespace testing {

using namespace uavcache;

/// State with the given cache bits and per-user (content or -1, wait age).
inline mdp::NetworkState make_state(std::initializer_list<int> cached, int capacity,
                                    std::initializer_list<std::pair<int, int>> users) {
  mdp::NetworkState s;
  s.cache = demand::CacheState(cached.size(), capacity);
  std::size_t m = 0;
  for (int c : cached) s.cache.cached[m++] = static_cast<std::uint8_t>(c);
  s.requests = demand::RequestState(users.size(), 1.0);
  std::size_t n = 0;
  for (auto [content, age] : users) {
    s.requests.pending[n] = content;
    s.requests.wait_age[n] = content == demand::kNoRequest ? 0 : age;
    ++n;
  }
  return s;
}

inline mdp::EnvConfig small_config(int users = 2, int contents = 2, int capacity = 1) {
  mdp::EnvConfig c;
  c.num_users = users;
  c.num_contents = contents;
  c.cache_capacity = capacity;
  c.request_gen_coeff = 1.0;
  return c;
}

/// Random reachable-looking state: any cache within capacity, each user idle
/// or waiting on a random content with a wait age below the bound.
inline mdp::NetworkState random_state(const mdp::EnvConfig& config, demand::Rng& rng) {
  mdp::NetworkState s;
  s.cache = demand::CacheState(config.num_contents, config.cache_capacity);
  std::vector<int> ids(config.num_contents);
  for (int m = 0; m < config.num_contents; ++m) ids[m] = m;
  std::shuffle(ids.begin(), ids.end(), rng);
  const int cached = static_cast<int>(rng() % (config.cache_capacity + 1));
  for (int j = 0; j < cached; ++j) s.cache.cached[ids[j]] = 1;
  s.requests = demand::RequestState(config.num_users, config.request_gen_coeff);
  for (int n = 0; n < config.num_users; ++n) {
    if (rng() % 3 == 0) continue;
    s.requests.pending[n] = static_cast<int>(rng() % config.num_contents);
    s.requests.wait_age[n] = static_cast<int>(rng() % config.max_wait);
  }
  return s;
}

}  // namespace testing
