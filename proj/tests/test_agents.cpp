#include <stdexcept>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include "doctest.h"
#include "support.hpp"
#include "uavcache/agents.hpp"

using namespace uavcache;
using namespace uavcache::agents;
using doctest::Approx;
using testing::make_state;
using testing::small_config;

namespace {

constexpr int kIdle = demand::kNoRequest;

double exhaustive_min(const NetworkState& s, const mdp::SlotContext& ctx, const mdp::EnvConfig& c) {
  double best = INFINITY;
  for (const auto& a : mdp::enumerate_legal_actions(s, c)) best = std::min(best, mdp::evaluate_cost(ctx, s, a, c).total());
  return best;
}

}  // namespace

TEST_CASE("delay trace bookkeeping") {
  DelayTrace trace(3);
  const double costs[] = {1.0, 2.0, 3.0, 4.0, 5.0};
  for (double c : costs) {
    mdp::StepOutcome o;
    o.cost = c;
    o.breakdown.access = c;
    o.cache_hits = 1;
    o.cache_misses = c > 3 ? 1 : 0;
    trace.record(o);
  }
  REQUIRE(trace.size() == 5);
  // Independent recomputation of the trailing window.
  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t lo = i >= 2 ? i - 2 : 0;
    double sum = 0.0;
    for (std::size_t j = lo; j <= i; ++j) sum += costs[j];
    CHECK(trace.moving_average[i] == Approx(sum / double(i - lo + 1)));
  }
  CHECK(trace.tail_mean(2) == Approx(4.5));
  CHECK(trace.tail_mean(100) == Approx(3.0));
  CHECK(trace.tail_hit_ratio(2) == Approx(0.5));
  CHECK(trace.tail_hit_ratio(5) == Approx(5.0 / 7.0));
  CHECK(DelayTrace().tail_hit_ratio(10) == 0.0);
  CHECK(DelayTrace().tail_mean(10) == 0.0);
}

TEST_CASE("random baseline") {
  const auto config = small_config(4, 4, 2);
  demand::Rng rng(8);
  const auto s = make_state({1, 0, 0, 0}, 2, {{0, 1}, {1, 0}, {kIdle, 0}, {3, 0}});

  SUBCASE("always legal") {
    for (int i = 0; i < 10000; ++i) CHECK(mdp::is_legal(s, random_legal_action(s, config, rng), config));
  }
  SUBCASE("uniform over the legal set") {
    const auto small = small_config(2, 2, 1);
    const auto s2 = make_state({0, 0}, 1, {{0, 0}, {1, 1}});
    const auto legal = mdp::enumerate_legal_actions(s2, small);
    std::map<std::string, int> counts;
    const int draws = 60000;
    for (int i = 0; i < draws; ++i) ++counts[mdp::encode_action(random_legal_action(s2, small, rng))];
    CHECK(counts.size() == legal.size());
    const double expected = double(draws) / double(legal.size());
    double chi2 = 0.0;
    for (const auto& [key, n] : counts) chi2 += (n - expected) * (n - expected) / expected;
    // 29 degrees of freedom; the 0.999 quantile is about 58.3.
    CHECK(chi2 < 58.3);
  }
}

TEST_CASE("greedy baseline") {
  SUBCASE("keeping the requested content costs nothing extra, a different one does") {
    auto config = small_config(2, 2, 1);
    mdp::Environment env(config, 1);
    const auto ctx = env.context();
    const auto s = make_state({0, 0}, 1, {{0, 1}, {kIdle, 0}});
    const auto a = greedy_action(s, ctx, config);
    CHECK(a.proactive == std::vector<std::uint8_t>{1, 0});
    const auto with_other = mdp::evaluate_cost(ctx, s, {{0, 1}, a.schedule, a.power_levels}, config);
    CHECK(with_other.total() > mdp::evaluate_cost(ctx, s, a, config).total());
  }

  SUBCASE("factored search equals the exhaustive scan") {
    for (auto [n, m, z] : {std::tuple{2, 2, 1}, std::tuple{4, 3, 2}, std::tuple{5, 4, 2}}) {
      auto config = small_config(n, m, z);
      demand::Rng rng(n * 100 + m);
      mdp::Environment env(config, 5);
      for (int trial = 0; trial < 30; ++trial) {
        const auto s = testing::random_state(config, rng);
        const auto ctx = mdp::make_context(env.scenario(), 1 + trial * 37);
        const auto fast = greedy_action(s, ctx, config);
        const auto slow = greedy_action_exhaustive(s, ctx, config);
        CHECK(fast == slow);
        CHECK(mdp::evaluate_cost(ctx, s, fast, config).total() == exhaustive_min(s, ctx, config));
      }
    }
  }

  SUBCASE("size guard") {
    auto config = small_config(20, 10, 2);
    config.request_gen_coeff = 2.0;
    CHECK_THROWS_AS(check_greedy_admissible(config), mdp::EnumerationTooLarge);
    CHECK_THROWS_AS(GreedyAgent{config}, mdp::EnumerationTooLarge);
    CHECK_NOTHROW(check_greedy_admissible(mdp::EnvConfig{}));
  }
}

TEST_CASE("fixed baseline") {
  SUBCASE("caches the most requested contents, ties to the lower index") {
    auto config = small_config(11, 3, 2);
    FixedAgent agent(config);
    // Eleven fresh requests: five for content 0, three each for 1 and 2.
    auto s = make_state({0, 0, 0}, 2, {{0, 0}, {0, 0}, {0, 0}, {0, 0}, {0, 0}, {1, 0}, {1, 0}, {1, 0}, {2, 0}, {2, 0}, {2, 0}});
    agent.note_requests(s);
    CHECK(agent.request_counts() == std::vector<long>{5, 3, 3});
    const auto a = agent.decide(s, config);
    CHECK(a.proactive == std::vector<std::uint8_t>{1, 1, 0});
  }

  SUBCASE("round robin with forced users and one power level") {
    auto config = small_config(4, 2, 1);
    FixedAgent agent(config, 1);
    const auto s = make_state({0, 0}, 1, {{0, 0}, {1, 0}, {0, 1}, {1, 0}});
    const auto first = agent.decide(s, config);
    CHECK(first.schedule == std::vector<std::uint8_t>{1, 0, 1, 0});
    const auto second = agent.decide(s, config);
    CHECK(second.schedule == std::vector<std::uint8_t>{0, 1, 1, 0});
    const auto third = agent.decide(s, config);
    CHECK(third.schedule == std::vector<std::uint8_t>{0, 0, 1, 1});
    for (const auto& a : {first, second, third}) {
      CHECK(mdp::is_legal(s, a, config));
      for (auto level : a.power_levels) CHECK(config.power_levels[level] == Approx(0.3));
    }
  }

  SUBCASE("only fresh requests are counted") {
    auto config = small_config(2, 2, 1);
    FixedAgent agent(config);
    agent.note_requests(make_state({0, 0}, 1, {{1, 1}, {1, 0}}));
    CHECK(agent.request_counts() == std::vector<long>{0, 1});
  }

  CHECK_THROWS_AS(FixedAgent(small_config(), -1), std::invalid_argument);
}

TEST_CASE("baseline runs stay legal and within the wait bound") {
  mdp::EnvConfig config;
  for (const std::string name : {"greedy", "fixed", "random"}) {
    mdp::Environment env(config, 12);
    std::unique_ptr<Agent> agent;
    if (name == "greedy") agent = std::make_unique<GreedyAgent>(config);
    if (name == "fixed") agent = std::make_unique<FixedAgent>(config);
    if (name == "random") agent = std::make_unique<RandomAgent>(3);
    const auto trace = run_agent(env, *agent, 400, 50);
    CHECK(trace.size() == 400);
    for (double c : trace.cost) CHECK(c >= 0.0);
    for (std::size_t i = 0; i < trace.size(); ++i) {
      CHECK(trace.cost[i] == trace.backhaul[i] + (trace.access[i] + trace.scheduling[i]));
    }
  }
}

TEST_CASE("run loop rejects an illegal action") {
  struct Rogue : Agent {
    std::string name() const override { return "rogue"; }
    ActionVector act(const Environment& env) override {
      const auto& c = env.config();
      return {std::vector<std::uint8_t>(c.num_contents, 1), std::vector<std::uint8_t>(c.num_users, 0), {}};
    }
  };
  mdp::Environment env(mdp::EnvConfig{}, 1);
  Rogue rogue;
  CHECK_THROWS_AS(run_agent(env, rogue, 5), mdp::ContractViolation);
}

// --- Q-learning -------------------------------------------------------------

TEST_CASE("exploration schedule and learning rate") {
  CHECK(exploration_probability(5000, 2500) == 1.0);
  CHECK(exploration_probability(5000, 5000) == 1.0);
  CHECK(exploration_probability(5000, 10000) == Approx(0.5));
  CHECK(exploration_probability(0, 1) == 0.0);
  CHECK_THROWS_AS(exploration_probability(10, 0), std::invalid_argument);

  CHECK(learning_rate(1, 1.0, 1.0) == Approx(0.5));
  CHECK(learning_rate(3, 1.0, 0.8) == Approx(std::pow(4.0, -0.8)));
  CHECK(learning_rate(1000000000L, 1.0, 0.8) < 1e-6);
}

TEST_CASE("hyperparameter checks") {
  QHyper h;
  CHECK_NOTHROW(h.validate());
  h.gamma = 1.0;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  h = {};
  h.c_alpha = 0.0;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  h = {};
  h.phi_alpha = 0.5;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  h = {};
  h.epsilon = -1;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
}

TEST_CASE("state keys") {
  const auto a = make_state({1, 0}, 1, {{0, 0}, {1, 1}});
  const auto b = make_state({1, 0}, 1, {{1, 0}, {1, 1}});
  const auto c = make_state({1, 0}, 1, {{1, 0}, {1, 0}});
  CHECK(state_key(a) != state_key(b));
  CHECK(state_key(a, StateKeyMode::compact) == state_key(b, StateKeyMode::compact));
  CHECK(state_key(b, StateKeyMode::compact) != state_key(c, StateKeyMode::compact));
  CHECK(state_key(b, StateKeyMode::waiting) == state_key(c, StateKeyMode::waiting));
  auto later = a;
  later.slot = 99;
  CHECK(state_key(a) == state_key(later));
}

TEST_CASE("q update") {
  const auto config = small_config(2, 2, 1);
  const auto s = make_state({0, 0}, 1, {{0, 0}, {kIdle, 0}});
  const ActionVector a{{1, 0}, {1, 0}, {0}};

  SUBCASE("first update from an empty table") {
    QHyper h;
    h.phi_alpha = 1.0;
    h.clock = RateClock::slot;
    QTable table(h);
    q_update(table, s, a, 2.0, s, 1, config);
    CHECK(table.value(table.find_state(s), table.find_action(a)) == Approx(1.0));
    CHECK(table.visits(table.find_state(s), table.find_action(a)) == 1);
  }

  SUBCASE("constant cost on a self loop converges to u / (1 - gamma)") {
    QTable table;
    for (long t = 1; t <= 200000; ++t) q_update(table, s, a, 2.0, s, t, config);
    CHECK(table.value(0, 0) == Approx(2.0 / (1.0 - 0.9)).epsilon(0.01));
  }

  SUBCASE("vanishing rate leaves the value in place") {
    QHyper h;
    h.clock = RateClock::slot;
    QTable table(h);
    const int si = table.add_state(s);
    const int ai = table.add_action(a);
    table.set(si, ai, {3.0, 1});
    q_update(table, s, a, 100.0, s, 4000000000L, config);
    CHECK(table.value(si, ai) == Approx(3.0).epsilon(1e-3));
  }

  SUBCASE("bootstrap uses only actions legal in the next state") {
    QHyper h;
    h.phi_alpha = 1.0;
    h.clock = RateClock::slot;
    h.gamma = 0.5;
    QTable table(h);
    const auto next = make_state({0, 0}, 1, {{kIdle, 0}, {kIdle, 0}});
    const ActionVector idle{{0, 0}, {0, 0}, {}};
    const int ns = table.add_state(next);
    table.set(ns, table.add_action(idle), {4.0, 1});
    table.set(ns, table.add_action(a), {-50.0, 1});  // serves a user, illegal in `next`
    CHECK(table.min_legal_value(next, config) == 4.0);
    q_update(table, s, a, 2.0, next, 1, config);
    CHECK(table.value(table.find_state(s), table.find_action(a)) == Approx(0.5 * (2.0 + 0.5 * 4.0)));
  }
}

TEST_CASE("q table exploitation order") {
  const auto config = small_config(2, 2, 1);
  const auto s = make_state({0, 0}, 1, {{0, 0}, {kIdle, 0}});
  QTable table;
  const int si = table.add_state(s);
  const ActionVector cheap{{0, 0}, {1, 0}, {2}};
  const ActionVector costly{{1, 0}, {1, 0}, {2}};
  const ActionVector wrong{{0, 0}, {0, 1}, {2}};
  table.set(si, table.add_action(costly), {5.0, 1});
  table.set(si, table.add_action(cheap), {1.0, 1});
  table.set(si, table.add_action(wrong), {-9.0, 1});
  CHECK(table.best_legal_action(s, config) == table.find_action(cheap));
  CHECK(table.min_legal_value(s, config) == 1.0);

  SUBCASE("exploitation picks the smallest legal value") {
    demand::Rng rng(1);
    QHyper h;
    h.epsilon = 0;
    QTable greedy(h);
    const int gs = greedy.add_state(s);
    greedy.set(gs, greedy.add_action(costly), {5.0, 1});
    greedy.set(gs, greedy.add_action(cheap), {1.0, 1});
    for (int i = 0; i < 20; ++i) CHECK(select_action_soft_eps(greedy, s, 10, config, rng) == cheap);
  }
  SUBCASE("no legal listed action falls back to a random legal one") {
    demand::Rng rng(1);
    QHyper h;
    h.epsilon = 0;
    QTable only_wrong(h);
    only_wrong.set(only_wrong.add_state(s), only_wrong.add_action(wrong), {-9.0, 1});
    CHECK(only_wrong.best_legal_action(s, config) == -1);
    for (int i = 0; i < 50; ++i) CHECK(mdp::is_legal(s, select_action_soft_eps(only_wrong, s, 10, config, rng), config));
  }
  SUBCASE("exploration rate follows the schedule") {
    demand::Rng rng(2);
    QHyper h;
    h.epsilon = 100;
    QTable t(h);
    t.set(t.add_state(s), t.add_action(cheap), {-100.0, 1});
    int explored = 0;
    const int draws = 20000;
    for (int i = 0; i < draws; ++i) explored += select_action_soft_eps(t, s, 200, config, rng) != cheap;
    // Explore with probability 0.5; a random draw lands on `cheap` with
    // probability 1/count of legal actions.
    const double legal = mdp::count_legal_actions(s, config);
    CHECK(explored / double(draws) == Approx(0.5 * (1 - 1 / legal)).epsilon(0.05));
  }
}

TEST_CASE("q-learning runs") {
  mdp::EnvConfig config;
  SUBCASE("zero slots leave the table alone") {
    mdp::Environment env(config, 1);
    auto [table, trace] = run_qlearning(env, QTable{}, 0, 1);
    CHECK(trace.size() == 0);
    CHECK(table.state_count() == 0);
    CHECK(table.elapsed_slots() == 0);
  }
  SUBCASE("deterministic in the seed") {
    mdp::Environment e1(config, 2);
    mdp::Environment e2(config, 2);
    auto r1 = run_qlearning(e1, QTable{}, 2000, 7);
    auto r2 = run_qlearning(e2, QTable{}, 2000, 7);
    CHECK(r1.second.cost == r2.second.cost);
    CHECK(r1.first.state_count() == r2.first.state_count());
    CHECK(r1.second.explored_actions == r1.first.action_count());
    CHECK(r1.first.elapsed_slots() == 2000);
  }
  SUBCASE("values stay finite and bounded") {
    mdp::Environment env(config, 3);
    auto [table, trace] = run_qlearning(env, QTable{}, 5000, 3);
    const double worst = *std::max_element(trace.cost.begin(), trace.cost.end());
    for (std::size_t s = 0; s < table.state_count(); ++s) {
      for (std::size_t a = 0; a < table.action_count(); ++a) {
        const double v = table.value(int(s), int(a));
        CHECK(std::isfinite(v));
        CHECK(v >= 0.0);
        CHECK(v <= worst / (1 - table.hyper().gamma) + 1e-9);
      }
    }
  }
  SUBCASE("resuming continues the clock") {
    mdp::Environment env(config, 4);
    auto [table, trace] = run_qlearning(env, QTable{}, 300, 1);
    auto [resumed, more] = run_qlearning(env, table, 200, 2);
    CHECK(resumed.elapsed_slots() == 500);
    CHECK(more.size() == 200);
  }
}

TEST_CASE("q table persistence") {
  mdp::EnvConfig config;
  mdp::Environment env(config, 5);
  QHyper h;
  h.key_mode = StateKeyMode::compact;
  h.gamma = 0.8;
  auto [table, trace] = run_qlearning(env, QTable(h), 1500, 5);
  const auto path = (std::filesystem::temp_directory_path() / "uavcache_qtable_test.json").string();
  table.save(path);
  const auto back = QTable::load(path);
  CHECK(back.state_count() == table.state_count());
  CHECK(back.action_count() == table.action_count());
  CHECK(back.elapsed_slots() == table.elapsed_slots());
  CHECK(back.hyper().gamma == 0.8);
  CHECK(back.hyper().key_mode == StateKeyMode::compact);
  CHECK(back.nonzero_entries() == table.nonzero_entries());
  for (std::size_t s = 0; s < table.state_count(); ++s) {
    CHECK(back.state_name(int(s)) == table.state_name(int(s)));
    for (std::size_t a = 0; a < table.action_count(); ++a) {
      CHECK(back.value(int(s), int(a)) == table.value(int(s), int(a)));
      CHECK(back.visits(int(s), int(a)) == table.visits(int(s), int(a)));
    }
  }
  for (std::size_t a = 0; a < table.action_count(); ++a) CHECK(back.action(int(a)) == table.action(int(a)));
  std::filesystem::remove(path);

  CHECK_THROWS_AS(QTable::load("/nonexistent/qtable.json"), std::runtime_error);
  const auto bogus = (std::filesystem::temp_directory_path() / "uavcache_not_a_table.json").string();
  { std::ofstream(bogus) << R"({"format": "something-else", "version": 1})"; }
  CHECK_THROWS_AS(QTable::load(bogus), std::runtime_error);
  std::filesystem::remove(bogus);
}
