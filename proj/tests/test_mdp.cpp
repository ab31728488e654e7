#include <stdexcept>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "support.hpp"
#include "uavcache/mdp.hpp"

using namespace uavcache;
using namespace uavcache::mdp;
using doctest::Approx;
using testing::make_state;
using testing::small_config;

namespace {

constexpr int kIdle = demand::kNoRequest;

/// Radio context with hand-picked numbers: backhaul rate 100 Mbit/s, user 0
/// at 80 dB and user 1 at 90 dB.
SlotContext hand_context() {
  SlotContext ctx;
  ctx.backhaul_sinr = 31.0;
  ctx.backhaul_rate = 20e6 * 5.0;
  ctx.user_distance = {50.0, 120.0};
  ctx.user_loss_db = {80.0, 90.0};
  ctx.access = AccessLink{20e6, 16e6, 1.0, 7.96e-14};
  return ctx;
}

/// Independent legality rule used to filter the full Cartesian product.
bool legal_by_hand(const NetworkState& s, const ActionVector& a, const EnvConfig& c) {
  int cached = 0;
  for (auto i : a.proactive) cached += i;
  if (cached > c.cache_capacity) return false;
  int scheduled = 0;
  for (std::size_t n = 0; n < a.schedule.size(); ++n) {
    const bool pending = s.requests.pending[n] != kIdle;
    if (a.schedule[n] && !pending) return false;
    if (pending && s.requests.wait_age[n] == c.max_wait - 1 && !a.schedule[n]) return false;
    scheduled += a.schedule[n];
  }
  return static_cast<int>(a.power_levels.size()) == (scheduled + 1) / 2;
}

}  // namespace

TEST_CASE("legality") {
  const auto config = small_config(3, 3, 2);
  const auto s = make_state({0, 1, 0}, 2, {{0, 0}, {kIdle, 0}, {2, 1}});
  const ActionVector ok{{1, 1, 0}, {0, 0, 1}, {2}};
  CHECK(is_legal(s, ok, config));

  SUBCASE("cache over capacity") {
    CHECK_FALSE(is_legal(s, {{1, 1, 1}, {0, 0, 1}, {2}}, config));
  }
  SUBCASE("serving an idle user") {
    CHECK_FALSE(is_legal(s, {{1, 0, 0}, {0, 1, 1}, {2}}, config));
  }
  SUBCASE("leaving a user at the wait bound") {
    CHECK_FALSE(is_legal(s, {{1, 0, 0}, {1, 0, 0}, {2}}, config));
  }
  SUBCASE("malformed entries") {
    CHECK_FALSE(is_legal(s, {{2, 0, 0}, {0, 0, 1}, {2}}, config));
    CHECK_FALSE(is_legal(s, {{1, 0, 0}, {0, 0, 1}, {5}}, config));
    CHECK_FALSE(is_legal(s, {{1, 0, 0}, {0, 0, 1}, {}}, config));
    CHECK_FALSE(is_legal(s, {{1, 0, 0}, {0, 0, 1}, {1, 1}}, config));
    CHECK_FALSE(is_legal(s, {{1, 0}, {0, 0, 1}, {2}}, config));
  }
}

TEST_CASE("legal action enumeration") {
  SUBCASE("no pending users: caching choices only") {
    const auto config = small_config(2, 2, 1);
    const auto s = make_state({0, 0}, 1, {{kIdle, 0}, {kIdle, 0}});
    const auto actions = enumerate_legal_actions(s, config);
    REQUIRE(actions.size() == 3);
    CHECK(actions[0].proactive == std::vector<std::uint8_t>{1, 0});
    CHECK(actions[1].proactive == std::vector<std::uint8_t>{0, 1});
    CHECK(actions[2].proactive == std::vector<std::uint8_t>{0, 0});
    for (const auto& a : actions) {
      CHECK(a.scheduled_count() == 0);
      CHECK(a.power_levels.empty());
    }
    CHECK(count_legal_actions(s, config) == 3.0);
  }

  SUBCASE("a user at the wait bound is in every action") {
    const auto config = small_config(3, 3, 2);
    const auto s = make_state({0, 0, 0}, 2, {{1, 1}, {2, 0}, {kIdle, 0}});
    const auto actions = enumerate_legal_actions(s, config);
    CHECK(actions.size() == 7 * (5 + 5));
    for (const auto& a : actions) CHECK(a.schedule[0] == 1);
  }

  SUBCASE("matches a brute-force filter of the full product on M=2, N=2") {
    const auto config = small_config(2, 2, 1);
    demand::Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
      const auto s = testing::random_state(config, rng);
      std::set<std::string> expected;
      for (int i = 0; i < 4; ++i) {
        for (int b = 0; b < 4; ++b) {
          // Power vectors of every length 0..2 over the five levels.
          for (int len = 0; len <= 2; ++len) {
            const int combos = len == 0 ? 1 : (len == 1 ? 5 : 25);
            for (int h = 0; h < combos; ++h) {
              ActionVector a{{std::uint8_t(i >> 1 & 1), std::uint8_t(i & 1)},
                             {std::uint8_t(b >> 1 & 1), std::uint8_t(b & 1)},
                             {}};
              if (len >= 1) a.power_levels.push_back(std::uint8_t(h % 5));
              if (len == 2) a.power_levels.push_back(std::uint8_t(h / 5));
              if (legal_by_hand(s, a, config)) expected.insert(encode_action(a));
            }
          }
        }
      }
      const auto actions = enumerate_legal_actions(s, config);
      std::set<std::string> got;
      for (const auto& a : actions) {
        CHECK(is_legal(s, a, config));
        got.insert(encode_action(a));
      }
      CHECK(got.size() == actions.size());
      CHECK(got == expected);
      CHECK(count_legal_actions(s, config) == double(actions.size()));
    }
  }

  SUBCASE("order: caching descending, schedule ascending, power odometer") {
    const auto config = small_config(2, 2, 1);
    const auto s = make_state({0, 0}, 1, {{0, 0}, {1, 0}});
    const auto actions = enumerate_legal_actions(s, config);
    REQUIRE(actions.size() == 3 * (1 + 5 + 5 + 5));
    CHECK(actions[0] == ActionVector{{1, 0}, {0, 0}, {}});
    CHECK(actions[1] == ActionVector{{1, 0}, {0, 1}, {0}});
    CHECK(actions[5] == ActionVector{{1, 0}, {0, 1}, {4}});
    CHECK(actions[6] == ActionVector{{1, 0}, {1, 0}, {0}});
    CHECK(actions[16] == ActionVector{{0, 1}, {0, 0}, {}});
  }

  SUBCASE("guard") {
    auto config = small_config(8, 4, 2);
    config.enumeration_limit = 100;
    const auto s = make_state({0, 0, 0, 0}, 2, {{0, 0}, {1, 0}, {2, 0}, {3, 0}, {0, 0}, {1, 0}, {2, 0}, {3, 0}});
    CHECK_THROWS_AS(enumerate_legal_actions(s, config), EnumerationTooLarge);
  }
}

TEST_CASE("nearest-near nearest-far grouping") {
  SUBCASE("one pair") {
    const std::vector<double> dist{50.0, 120.0};
    const std::vector<int> users{1, 0};
    CHECK(form_groups(users, dist) == std::vector<Group>{{0, 1}});
  }
  SUBCASE("four users") {
    const std::vector<double> dist{30.0, 10.0, 40.0, 20.0};
    const std::vector<int> users{0, 1, 2, 3};
    // Distances 10,20 | 30,40 pair as (10,30) and (20,40).
    CHECK(form_groups(users, dist) == std::vector<Group>{{1, 0}, {3, 2}});
  }
  SUBCASE("singleton and odd counts") {
    const std::vector<double> dist{10.0, 20.0, 30.0, 40.0, 50.0};
    CHECK(form_groups(std::vector<int>{2}, dist) == std::vector<Group>{{2, kSolo}});
    CHECK(form_groups(std::vector<int>{0, 1, 2, 3, 4}, dist) ==
          std::vector<Group>{{0, 3}, {1, 4}, {2, kSolo}});
  }
  SUBCASE("distance ties go to the lower id") {
    const std::vector<double> dist{25.0, 25.0, 25.0, 25.0};
    CHECK(form_groups(std::vector<int>{3, 2, 1, 0}, dist) == std::vector<Group>{{0, 2}, {1, 3}});
  }
}

TEST_CASE("backhaul delay") {
  const double sinr = 31.0;  // 20 MHz * log2(32) = 100 Mbit/s
  CHECK(backhaul_delay(std::vector<std::uint8_t>{0, 0}, sinr, 16e6, 20e6) == std::vector<double>{0.0, 0.0});
  const auto one = backhaul_delay(std::vector<std::uint8_t>{1, 0}, sinr, 16e6, 20e6);
  CHECK(one[0] == Approx(0.16).epsilon(1e-12));
  CHECK(one[1] == 0.0);
  const auto two = backhaul_delay(std::vector<std::uint8_t>{1, 1}, sinr, 16e6, 20e6);
  CHECK(two[0] == Approx(0.32).epsilon(1e-12));
  CHECK(two[0] + two[1] == Approx(0.64).epsilon(1e-12));
  CHECK_THROWS_AS(backhaul_delay(std::vector<std::uint8_t>{1}, -1.0, 16e6, 20e6), std::domain_error);
  CHECK_THROWS_AS(backhaul_delay(std::vector<std::uint8_t>{1}, 0.0, 16e6, 20e6), std::runtime_error);
}

TEST_CASE("access delay") {
  const AccessLink link{20e6, 16e6, 1.0, 1e-3};
  SUBCASE("pair with a near-user SINR of 15") {
    // Near SINR = 0.5 * g / noise = 15 with g = 0.03.
    const double loss = -10.0 * std::log10(0.03);
    const std::vector<double> losses{loss, loss + 60.0};
    const std::vector<Group> groups{{0, 1}};
    const auto d = access_delay(groups, std::vector<double>{0.5}, 2, losses, link);
    CHECK(d[0] == Approx(0.2).epsilon(1e-9));
  }
  SUBCASE("doubling the scheduled count doubles each delay") {
    const std::vector<double> losses{80.0, 90.0, 85.0};
    const std::vector<Group> groups{{0, 1}, {2, kSolo}};
    const std::vector<double> coeffs{0.2, 0.3};
    const auto a = access_delay(groups, coeffs, 3, losses, link);
    const auto b = access_delay(groups, coeffs, 6, losses, link);
    for (int n = 0; n < 3; ++n) CHECK(b[n] == Approx(2 * a[n]).epsilon(1e-12));
  }
  SUBCASE("solo group is plain OMA with the whole group power") {
    const std::vector<double> losses{85.0};
    const auto d = access_delay(std::vector<Group>{{0, kSolo}}, std::vector<double>{0.1}, 1, losses, link);
    const double snr = channel::db_to_linear(-85.0) / 1e-3;
    CHECK(d[0] == Approx(16e6 / (2 * 20e6 * std::log2(1 + snr))).epsilon(1e-12));
    const auto d2 = access_delay(std::vector<Group>{{0, kSolo}}, std::vector<double>{0.5}, 1, losses, link);
    CHECK(d2[0] == d[0]);
  }
  SUBCASE("zero rate is an error, not an infinite delay") {
    const AccessLink dead{20e6, 16e6, 0.0, 1e-3};
    const std::vector<double> losses{80.0};
    CHECK_THROWS_AS(access_delay(std::vector<Group>{{0, kSolo}}, std::vector<double>{0.5}, 1, losses, dead),
                    std::runtime_error);
  }
  SUBCASE("argument checks") {
    const std::vector<double> losses{80.0, 90.0};
    CHECK_THROWS_AS(access_delay(std::vector<Group>{{0, 1}}, std::vector<double>{}, 2, losses, link),
                    std::invalid_argument);
    CHECK_THROWS_AS(access_delay(std::vector<Group>{{0, 1}}, std::vector<double>{0.2}, 0, losses, link),
                    std::invalid_argument);
  }
}

TEST_CASE("step on hand-built slots") {
  const auto ctx = hand_context();
  auto config = small_config(2, 2, 1);
  const demand::RequestDraw quiet{{0, 0}, {0, 0}};

  SUBCASE("two users on one uncached content, both served, content cached") {
    const auto s = make_state({0, 0}, 1, {{0, 0}, {0, 0}});
    const ActionVector a{{1, 0}, {1, 1}, {1}};  // coefficient 0.2
    const auto out = step(ctx, s, a, config, quiet);
    // 0.16 backhaul, then 0.0547310570 and 0.3446094053 over the pair
    // (math-module evaluation of the rate formulas).
    CHECK(out.breakdown.backhaul == Approx(0.16).epsilon(1e-9));
    CHECK(out.breakdown.access == Approx(0.0547310570316008 + 0.344609405310312).epsilon(1e-6));
    CHECK(out.breakdown.scheduling == 0.0);
    CHECK(out.cost == Approx(0.559340462341913).epsilon(1e-6));
    CHECK(out.cache_misses == 2);
    CHECK(out.cache_hits == 0);
    CHECK(out.next_state.cache.cached == std::vector<std::uint8_t>{1, 0});
    CHECK_FALSE(out.next_state.pending(0));
    CHECK(out.next_state.slot == 2);
  }

  SUBCASE("everything cached and served: access only") {
    const auto s = make_state({1, 0}, 1, {{0, 0}, {0, 0}});
    const auto out = step(ctx, s, {{1, 0}, {1, 1}, {1}}, config, quiet);
    CHECK(out.breakdown.backhaul == 0.0);
    CHECK(out.breakdown.scheduling == 0.0);
    CHECK(out.cost == out.breakdown.access);
    CHECK(out.cache_hits == 2);
  }

  SUBCASE("nothing pending, nothing done") {
    const auto s = make_state({0, 0}, 1, {{kIdle, 0}, {kIdle, 0}});
    const auto out = step(ctx, s, {{0, 0}, {0, 0}, {}}, config, quiet);
    CHECK(out.cost == 0.0);
  }

  SUBCASE("waiting users pay the slot length and age") {
    const auto s = make_state({1, 0}, 1, {{0, 0}, {1, 0}});
    const auto out = step(ctx, s, {{1, 0}, {0, 0}, {}}, config, quiet);
    CHECK(out.breakdown.scheduling == Approx(2 * config.slot_length));
    CHECK(out.next_state.requests.wait_age == std::vector<int>{1, 1});
    CHECK(out.next_state.requests.pending == std::vector<int>{0, 1});
    CHECK(out.breakdown.backhaul == Approx(0.16));
  }

  SUBCASE("arrivals land only on idle users") {
    const auto s = make_state({0, 0}, 1, {{1, 0}, {kIdle, 0}});
    const demand::RequestDraw draw{{1, 1}, {0, 0}};
    const auto out = step(ctx, s, {{0, 0}, {0, 0}, {}}, config, draw);
    CHECK(out.next_state.requests.pending == std::vector<int>{1, 0});
    CHECK(out.next_state.requests.wait_age == std::vector<int>{1, 0});
  }

  SUBCASE("illegal action") {
    const auto s = make_state({0, 0}, 1, {{0, 1}, {kIdle, 0}});
    CHECK_THROWS_AS(step(ctx, s, {{0, 0}, {0, 0}, {}}, config, quiet), ContractViolation);
  }
}

TEST_CASE("environment") {
  EnvConfig config;

  SUBCASE("configuration checks") {
    auto c = config;
    c.cache_capacity = c.num_contents + 1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = config;
    c.request_gen_coeff = c.num_users / double(c.max_wait) + 0.1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = config;
    c.power_levels = {0.1, 0.6};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK_NOTHROW(config.validate());
  }

  SUBCASE("geometry stays in range") {
    Environment env(config, 3);
    const auto& sc = env.scenario();
    CHECK(sc.users.size() == 8);
    CHECK(sc.neighbor_mbs.size() == 6);
    for (const auto& u : sc.users) {
      CHECK(std::hypot(u.x - sc.mbs.x, u.y - sc.mbs.y) <= config.cell_side + 1e-9);
      CHECK(u.z == 0.0);
    }
    for (long t : {1L, 50L, 5000L}) {
      const auto ctx = make_context(sc, t);
      CHECK(ctx.uav.z == config.altitude);
      CHECK(ctx.backhaul_sinr > 0.0);
      CHECK(ctx.backhaul_rate > 0.0);
      for (int n = 0; n < 8; ++n) CHECK(ctx.user_distance[n] >= config.altitude - 1e-9);
    }
  }

  SUBCASE("deterministic in the seed") {
    Environment a(config, 9);
    Environment b(config, 9);
    Environment c(config, 10);
    CHECK(a.state() == b.state());
    CHECK(a.scenario().users[0].x == b.scenario().users[0].x);
    CHECK(a.scenario().users[0].x != c.scenario().users[0].x);
    for (int t = 0; t < 50; ++t) {
      ActionVector idle{std::vector<std::uint8_t>(4, 0), std::vector<std::uint8_t>(8, 0), {}};
      for (int n = 0; n < 8; ++n) idle.schedule[n] = a.state().pending(n) ? 1 : 0;
      idle.power_levels.assign((idle.scheduled_count() + 1) / 2, 2);
      const auto oa = a.step(idle);
      const auto ob = b.step(idle);
      CHECK(oa.cost == ob.cost);
      CHECK(oa.next_state == ob.next_state);
    }
    CHECK(a.request_log_hash() == b.request_log_hash());
  }

  SUBCASE("arrival stream does not depend on the actions") {
    Environment lazy(config, 4);
    Environment busy(config, 4);
    for (int t = 0; t < 200; ++t) {
      ActionVector serve_all{std::vector<std::uint8_t>(4, 0), std::vector<std::uint8_t>(8, 0), {}};
      ActionVector serve_forced = serve_all;
      for (int n = 0; n < 8; ++n) {
        serve_all.schedule[n] = busy.state().pending(n) ? 1 : 0;
        serve_forced.schedule[n] = lazy.state().forced(n, config.max_wait) ? 1 : 0;
      }
      serve_all.power_levels.assign((serve_all.scheduled_count() + 1) / 2, 0);
      serve_forced.power_levels.assign((serve_forced.scheduled_count() + 1) / 2, 0);
      busy.step(serve_all);
      lazy.step(serve_forced);
    }
    CHECK(lazy.request_log_hash() == busy.request_log_hash());
  }
}
