// Acceptance runner: checks AC1 to AC9 and prints one PASS/FAIL line each.
// Exits 0 unless --strict is given and a criterion failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uavcache/agents.hpp"
#include "uavcache/channel.hpp"
#include "uavcache/demand.hpp"
#include "uavcache/fa.hpp"
#include "uavcache/harness.hpp"
#include "uavcache/mdp.hpp"

using namespace uavcache;
using agents::DelayTrace;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  std::string id;
  bool pass = false;
  std::string detail;
};

struct Settings {
  long slots = 100000;
  std::size_t final_window = 10000;
  std::size_t ma_window = 1000;
  long fa_slots = 3000;
  std::size_t fa_final_window = 1000;
  int seeds = 5;
};

// --- run bookkeeping --------------------------------------------------------

struct RunResult {
  double final_mean = 0.0;
  double hit_ratio = 0.0;
  std::vector<double> moving_average;
};

struct Safety {
  long runs = 0;
  long slots = 0;
  long aborted = 0;
  std::vector<std::string> messages;
};

struct CaseKey {
  int users, contents, capacity;
  std::string agent;
  std::uint64_t seed;
  long slots;
  auto operator<=>(const CaseKey&) const = default;
};

class Runner {
 public:
  explicit Runner(const Settings& settings) : settings_(settings) {}

  // Runs one (cell, agent, seed) case, reusing an identical earlier run.
  // Returns nothing when the run aborted on a safety violation.
  std::optional<RunResult> run(int users, int contents, int capacity, const std::string& agent,
                               std::uint64_t seed, long slots, std::size_t final_window,
                               bool keep_curve = false) {
    const CaseKey key{users, contents, capacity, agent, seed, slots};
    if (auto it = cache_.find(key); it != cache_.end() && (!keep_curve || !it->second->moving_average.empty())) {
      return it->second;
    }
    harness::ScenarioConfig config;
    config.env.num_users = users;
    config.env.num_contents = contents;
    config.env.cache_capacity = capacity;
    config.slots = slots;
    config.ma_window = settings_.ma_window;
    config.final_window = final_window;
    config.validate();

    ++safety_.runs;
    std::optional<RunResult> result;
    try {
      mdp::Environment env(config.env, seed);
      auto policy = harness::make_agent(agent, config, seed);
      auto trace = agents::run_agent(env, *policy, slots, config.ma_window);
      safety_.slots += static_cast<long>(trace.size());
      RunResult r;
      r.final_mean = trace.tail_mean(final_window);
      r.hit_ratio = trace.tail_hit_ratio(final_window);
      if (keep_curve) r.moving_average = std::move(trace.moving_average);
      result = std::move(r);
    } catch (const mdp::ContractViolation& e) {
      ++safety_.aborted;
      safety_.messages.push_back(agent + " N=" + std::to_string(users) + " M=" + std::to_string(contents) +
                                 " Z=" + std::to_string(capacity) + " seed " + std::to_string(seed) + ": " +
                                 e.what());
    }
    cache_[key] = result;
    return result;
  }

  const Safety& safety() const { return safety_; }
  const Settings& settings() const { return settings_; }

 private:
  Settings settings_;
  Safety safety_;
  std::map<CaseKey, std::optional<RunResult>> cache_;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

bool rel_close(double got, double want, double tol = 1e-6) {
  return std::abs(got - want) <= tol * std::max(std::abs(want), 1e-300);
}

// --- AC1: worked examples --------------------------------------------------------

Verdict check_examples() {
  const auto start = Clock::now();
  std::vector<std::string> bad;
  auto expect = [&](const std::string& what, double got, double want) {
    if (!rel_close(got, want)) bad.push_back(what + " got " + fmt(got, 12) + " want " + fmt(want, 12));
  };
  using namespace channel;

  expect("distance overhead", distance_3d({0, 0, 100}, {0, 0, 0}), 100.0);
  expect("distance offset", distance_3d({30, 40, 100}, {0, 0, 0}), std::sqrt(30.0 * 30 + 40 * 40 + 100 * 100));
  expect("los inside breakpoint", los_probability(std::hypot(50.0, 100.0), 100.0), 1.0);
  expect("los at r=300", los_probability(std::hypot(300.0, 100.0), 100.0), 0.771170459187353);
  expect("los loss", path_loss_los(100, 100, 2), 79.4205999132796);
  expect("nlos loss", path_loss_nlos(100, 100, 2), 94.4205999132796);
  expect("mixture at P=1", mix_path_loss(1.0, 79.42, 94.42), 79.42);
  expect("average loss at r=300", avg_path_loss(std::hypot(300.0, 100.0), 100.0, 2.0), 94.2503427257120);

  const double noise = noise_power_watts(-174.0, 20e6);
  expect("noise 20 MHz", noise, 7.96214341106995e-14);
  RadioParams radio;
  expect("backhaul snr", backhaul_sinr(83.0, {}, radio), dbm_to_watts(46.0) * db_to_linear(-83.0) / noise);
  expect("backhaul snr value", backhaul_sinr(83.0, {}, radio), 2505936.168);
  const auto pair = noma_sinr(1.0, 0.2, 80.0, 90.0, 7.96e-14);
  expect("near sinr", pair.near, 25125.6281407035);
  expect("far sinr", pair.far, 3.99840863336392);
  const auto equal = noma_sinr(0.5, 0.5, 95.0, 95.0, noise);
  expect("equal-loss far sinr", equal.far, equal.near / (equal.near + 1.0));

  const auto two = demand::zipf_pmf(2, 1.0);
  expect("zipf 2/3", two[0], 2.0 / 3.0);
  expect("zipf 1/3", two[1], 1.0 / 3.0);
  const auto four = demand::zipf_pmf(4, 0.8);
  const double four_want[] = {0.431133011196798, 0.247620890373340, 0.179025243712485, 0.142220854717378};
  for (int m = 0; m < 4; ++m) expect("zipf M=4 rank " + std::to_string(m + 1), four[m], four_want[m]);

  demand::CacheState cache(3, 1);
  cache.cached = {1, 0, 0};
  const std::vector<int> requesters{4, 3, 0};
  const std::vector<std::uint8_t> proactive{0, 0, 1};
  const auto mu = demand::update_virtual_queues(cache, requesters, proactive);
  expect("queue cached", mu[0], 0.0);
  expect("queue requested", mu[1], 1.0);
  expect("queue proactive", mu[2], 1.0);

  const auto one = mdp::backhaul_delay(std::vector<std::uint8_t>{1, 0}, 31.0, 16e6, 20e6);
  expect("backhaul delay single", one[0], 0.16);
  const auto both = mdp::backhaul_delay(std::vector<std::uint8_t>{1, 1}, 31.0, 16e6, 20e6);
  expect("backhaul delay shared", both[0], 0.32);
  expect("backhaul delay sum", both[0] + both[1], 0.64);

  const mdp::AccessLink link{20e6, 16e6, 1.0, 1e-3};
  const double loss = -10.0 * std::log10(0.03);
  const std::vector<double> losses{loss, loss + 60.0};
  const auto access = mdp::access_delay(std::vector<mdp::Group>{{0, 1}}, std::vector<double>{0.5}, 2, losses, link);
  expect("access delay", access[0], 0.2);

  // Hand-built slot: two users on one uncached content, both served.
  mdp::SlotContext ctx;
  ctx.backhaul_sinr = 31.0;
  ctx.backhaul_rate = 20e6 * 5.0;
  ctx.user_distance = {50.0, 120.0};
  ctx.user_loss_db = {80.0, 90.0};
  ctx.access = mdp::AccessLink{20e6, 16e6, 1.0, 7.96e-14};
  mdp::EnvConfig small;
  small.num_users = 2;
  small.num_contents = 2;
  small.cache_capacity = 1;
  small.request_gen_coeff = 1.0;
  mdp::NetworkState state;
  state.cache = demand::CacheState(2, 1);
  state.requests = demand::RequestState(2, 1.0);
  state.requests.pending = {0, 0};
  const mdp::ActionVector action{{1, 0}, {1, 1}, {1}};
  const demand::RequestDraw quiet{{0, 0}, {0, 0}};
  const auto out = mdp::step(ctx, state, action, small, quiet);
  expect("hand slot cost", out.cost, 0.559340462341913);

  // A value equal to u / (1 - gamma) on a self loop is a fixed point.
  agents::QTable table;
  const int s = table.add_state(state);
  const int a = table.add_action(action);
  table.set(s, a, {2.0 / (1.0 - 0.9), 5});
  agents::q_update(table, state, action, 2.0, state, 6, small);
  expect("q fixed point", table.value(s, a), 20.0);

  const double elapsed = seconds_since(start);
  Verdict v{"AC1", bad.empty() && elapsed < 1.0, ""};
  v.detail = std::to_string(bad.size()) + " mismatches, " + fmt(elapsed * 1e3, 3) + " ms";
  for (const auto& b : bad) v.detail += "; " + b;
  return v;
}

// --- AC2: small-instance oracle ------------------------------------------------

Verdict check_small_oracle() {
  const auto start = Clock::now();
  mdp::EnvConfig config;
  config.num_users = 2;
  config.num_contents = 2;
  config.cache_capacity = 1;
  config.request_gen_coeff = 1.0;
  mdp::Environment env(config, 1);
  demand::Rng rng(2024);

  int greedy_exact = 0;
  int search_close = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    mdp::NetworkState s;
    s.cache = demand::CacheState(2, 1);
    if (rng() % 3 != 0) s.cache.cached[rng() % 2] = 1;
    s.requests = demand::RequestState(2, 1.0);
    for (int n = 0; n < 2; ++n) {
      if (rng() % 3 == 0) continue;
      s.requests.pending[n] = static_cast<int>(rng() % 2);
      s.requests.wait_age[n] = static_cast<int>(rng() % config.max_wait);
    }
    const auto ctx = mdp::make_context(env.scenario(), 1 + trial * 7);

    // Brute force over the full Cartesian space, filtered by legality.
    double best = INFINITY;
    for (int i = 0; i < 4; ++i) {
      for (int b = 0; b < 4; ++b) {
        const std::vector<std::uint8_t> proactive{std::uint8_t(i & 1), std::uint8_t(i >> 1)};
        const std::vector<std::uint8_t> schedule{std::uint8_t(b & 1), std::uint8_t(b >> 1)};
        const int groups = ((b & 1) + (b >> 1) + 1) / 2;
        const int combos = groups == 0 ? 1 : static_cast<int>(config.power_levels.size());
        for (int h = 0; h < combos; ++h) {
          const mdp::ActionVector a{proactive, schedule, groups == 0 ? std::vector<std::uint8_t>{} : std::vector<std::uint8_t>{std::uint8_t(h)}};
          if (!mdp::is_legal(s, a, config)) continue;
          best = std::min(best, mdp::evaluate_cost(ctx, s, a, config).total());
        }
      }
    }
    const auto greedy = agents::greedy_action(s, ctx, config);
    if (mdp::evaluate_cost(ctx, s, greedy, config).total() == best) ++greedy_exact;

    const auto box = agents::RelaxedBox::for_state(s, config);
    const auto found = agents::sgd_action_search(s, ctx, config, agents::random_relaxed_action(box, rng));
    const auto projected = agents::project_action(found.action, s, config);
    if (mdp::is_legal(s, projected, config) &&
        mdp::evaluate_cost(ctx, s, projected, config).total() <= 1.1 * best + 1e-12) {
      ++search_close;
    }
  }
  const double elapsed = seconds_since(start);
  Verdict v{"AC2", greedy_exact == trials && search_close >= 90 && elapsed < 120.0, ""};
  v.detail = "greedy exact " + std::to_string(greedy_exact) + "/100, search within 10% " +
             std::to_string(search_close) + "/100, " + fmt(elapsed, 3) + " s";
  return v;
}

// --- AC3: convergence ----------------------------------------------------------

double fit_slope(const std::vector<double>& y, std::size_t from) {
  const double n = static_cast<double>(y.size() - from);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = from; i < y.size(); ++i) {
    const double x = static_cast<double>(i);
    sx += x;
    sy += y[i];
    sxx += x * x;
    sxy += x * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

Verdict check_convergence(Runner& runner) {
  const auto& st = runner.settings();
  const long early = std::min<long>(10000, st.slots);
  const std::size_t fit_span = std::min<std::size_t>(20000, static_cast<std::size_t>(st.slots));
  int decreased = 0;
  int flat = 0;
  std::ostringstream detail;
  for (int seed = 1; seed <= st.seeds; ++seed) {
    const auto r = runner.run(8, 4, 2, "ql", seed, st.slots, st.final_window, true);
    if (!r || r->moving_average.empty()) {
      detail << " seed " << seed << " aborted;";
      continue;
    }
    const auto& ma = r->moving_average;
    const double at_early = ma[early - 1];
    const double at_end = ma.back();
    const double slope_per_10k = fit_slope(ma, ma.size() - fit_span) * 1e4;
    const bool down = at_end < at_early;
    const bool level = std::abs(slope_per_10k) < 0.05 * r->final_mean;
    decreased += down;
    flat += level;
    detail << " seed " << seed << ": ma " << fmt(at_early) << " -> " << fmt(at_end) << ", slope/1e4 "
           << fmt(slope_per_10k, 3) << " vs " << fmt(0.05 * r->final_mean, 3) << ";";
  }
  Verdict v{"AC3", decreased == st.seeds && flat == st.seeds, ""};
  v.detail = "lower at end " + std::to_string(decreased) + "/" + std::to_string(st.seeds) + ", flat tail " +
             std::to_string(flat) + "/" + std::to_string(st.seeds) + ";" + detail.str();
  return v;
}

// --- AC4: policy ordering ------------------------------------------------------

Verdict check_ordering(Runner& runner) {
  const auto& st = runner.settings();
  int greedy_le_ql = 0, ql_le_fixed = 0, fixed_le_random = 0, ql_near_greedy = 0, random_far = 0;
  std::ostringstream detail;
  for (int seed = 1; seed <= st.seeds; ++seed) {
    std::map<std::string, double> mean;
    bool ok = true;
    for (const std::string agent : {"greedy", "ql", "fixed", "random"}) {
      const auto r = runner.run(8, 4, 2, agent, seed, st.slots, st.final_window);
      if (!r) {
        ok = false;
        break;
      }
      mean[agent] = r->final_mean;
    }
    if (!ok) {
      detail << " seed " << seed << " aborted;";
      continue;
    }
    greedy_le_ql += mean["greedy"] <= mean["ql"];
    ql_le_fixed += mean["ql"] <= mean["fixed"];
    fixed_le_random += mean["fixed"] <= mean["random"];
    ql_near_greedy += mean["ql"] <= 1.25 * mean["greedy"];
    random_far += mean["random"] >= 1.3 * mean["ql"];
    detail << " seed " << seed << ": greedy " << fmt(mean["greedy"]) << " ql " << fmt(mean["ql"]) << " fixed "
           << fmt(mean["fixed"]) << " random " << fmt(mean["random"]) << ";";
  }
  const int need = st.seeds - 1;
  Verdict v{"AC4",
            greedy_le_ql >= need && ql_le_fixed >= need && fixed_le_random >= need && ql_near_greedy >= need &&
                random_far >= need,
            ""};
  v.detail = "greedy<=ql " + std::to_string(greedy_le_ql) + ", ql<=fixed " + std::to_string(ql_le_fixed) +
             ", fixed<=random " + std::to_string(fixed_le_random) + ", ql<=1.25 greedy " +
             std::to_string(ql_near_greedy) + ", random>=1.3 ql " + std::to_string(random_far) + " (of " +
             std::to_string(st.seeds) + ");" + detail.str();
  return v;
}

// --- AC5 / AC6: sweeps -----------------------------------------------------------

struct Cell {
  int users, contents, capacity;
};

struct Sweep {
  std::string name;  // axis label
  std::vector<Cell> cells;
  int direction;     // +1 non-decreasing, -1 non-increasing
};

// Majority sign test on paired seeds for each consecutive pair of cells.
bool trend_holds(Runner& runner, const Sweep& sweep, const std::string& agent, long slots, std::size_t window,
                 bool use_hit_ratio, std::ostringstream& detail) {
  const auto& st = runner.settings();
  bool all = true;
  detail << " " << agent << " " << sweep.name << ":";
  for (std::size_t k = 0; k + 1 < sweep.cells.size(); ++k) {
    const auto& a = sweep.cells[k];
    const auto& b = sweep.cells[k + 1];
    int agree = 0;
    int paired = 0;
    double mean_a = 0, mean_b = 0;
    for (int seed = 1; seed <= st.seeds; ++seed) {
      const auto ra = runner.run(a.users, a.contents, a.capacity, agent, seed, slots, window);
      const auto rb = runner.run(b.users, b.contents, b.capacity, agent, seed, slots, window);
      if (!ra || !rb) continue;
      const double va = use_hit_ratio ? ra->hit_ratio : ra->final_mean;
      const double vb = use_hit_ratio ? rb->hit_ratio : rb->final_mean;
      mean_a += va / st.seeds;
      mean_b += vb / st.seeds;
      ++paired;
      if (sweep.direction * (vb - va) >= 0) ++agree;
    }
    const bool ok = paired == st.seeds && 2 * agree > st.seeds;
    all = all && ok;
    detail << " " << fmt(mean_a) << "->" << fmt(mean_b) << " (" << agree << "/" << st.seeds << ")";
  }
  detail << ";";
  return all;
}

std::vector<Sweep> small_sweeps() {
  return {{"N", {{4, 4, 2}, {6, 4, 2}, {8, 4, 2}, {10, 4, 2}}, +1},
          {"M", {{8, 4, 2}, {8, 6, 2}, {8, 8, 2}}, +1},
          {"Z", {{8, 4, 1}, {8, 4, 2}, {8, 4, 3}, {8, 4, 4}}, -1}};
}

std::vector<Sweep> large_sweeps() {
  return {{"N", {{20, 10, 2}, {25, 10, 2}, {30, 10, 2}, {35, 10, 2}}, +1},
          {"M", {{30, 10, 2}, {30, 15, 2}, {30, 20, 2}}, +1},
          {"Z", {{30, 20, 1}, {30, 20, 2}, {30, 20, 3}, {30, 20, 4}}, -1}};
}

Verdict check_trends(Runner& runner) {
  const auto& st = runner.settings();
  std::ostringstream detail;
  int held = 0;
  int total = 0;
  for (const auto& sweep : small_sweeps()) {
    held += trend_holds(runner, sweep, "ql", st.slots, st.final_window, false, detail);
    ++total;
  }
  for (const auto& sweep : large_sweeps()) {
    held += trend_holds(runner, sweep, "fa", st.fa_slots, st.fa_final_window, false, detail);
    ++total;
  }
  Verdict v{"AC5", held == total, ""};
  v.detail = std::to_string(held) + "/" + std::to_string(total) + " trends hold;" + detail.str();
  return v;
}

Verdict check_hit_ratio(Runner& runner) {
  const auto& st = runner.settings();
  std::ostringstream detail;
  auto beats_baselines = [&](const Cell& cell, const std::string& learned, long slots, std::size_t window) {
    int wins = 0;
    double mine = 0, fixed = 0, random = 0;
    for (int seed = 1; seed <= st.seeds; ++seed) {
      const auto l = runner.run(cell.users, cell.contents, cell.capacity, learned, seed, slots, window);
      const auto f = runner.run(cell.users, cell.contents, cell.capacity, "fixed", seed, slots, window);
      const auto r = runner.run(cell.users, cell.contents, cell.capacity, "random", seed, slots, window);
      if (!l || !f || !r) continue;
      wins += l->hit_ratio > f->hit_ratio && l->hit_ratio > r->hit_ratio;
      mine += l->hit_ratio / st.seeds;
      fixed += f->hit_ratio / st.seeds;
      random += r->hit_ratio / st.seeds;
    }
    detail << " " << learned << " N=" << cell.users << " M=" << cell.contents << ": hit " << fmt(mine, 3)
           << " vs fixed " << fmt(fixed, 3) << " random " << fmt(random, 3) << " (wins " << wins << "/" << st.seeds
           << ");";
    return wins >= st.seeds - 1;
  };
  const bool small_wins = beats_baselines({8, 8, 2}, "ql", st.slots, st.final_window);
  const bool large_wins = beats_baselines({30, 20, 2}, "fa", st.fa_slots, st.fa_final_window);
  const bool small_falls = trend_holds(runner, {"M hit", small_sweeps()[1].cells, -1}, "ql", st.slots,
                                       st.final_window, true, detail);
  const bool large_falls = trend_holds(runner, {"M hit", large_sweeps()[1].cells, -1}, "fa", st.fa_slots,
                                       st.fa_final_window, true, detail);
  Verdict v{"AC6", small_wins && large_wins && small_falls && large_falls, ""};
  v.detail = detail.str();
  return v;
}

// --- AC7: constraint safety -----------------------------------------------------

Verdict check_safety(Runner& runner) {
  // Standing alone, cover the paired policy runs first.
  if (runner.safety().runs == 0) check_ordering(runner);
  const auto& s = runner.safety();
  Verdict v{"AC7", s.aborted == 0 && s.runs > 0, ""};
  v.detail = std::to_string(s.runs) + " runs, " + std::to_string(s.slots) + " slots checked, " +
             std::to_string(s.aborted) + " aborted";
  for (const auto& m : s.messages) v.detail += "; " + m;
  return v;
}

// --- AC8: SIC grid ------------------------------------------------------------

Verdict check_sic_grid() {
  const auto start = Clock::now();
  const double noise = channel::noise_power_watts(-174.0, 20e6);
  const double group_power = channel::dbm_to_watts(30.0);
  long checked = 0;
  long failed = 0;
  for (int near = 60; near <= 110; ++near) {
    for (int far = near; far <= 110; ++far) {
      for (double h : {0.1, 0.2, 0.3, 0.4, 0.5}) {
        ++checked;
        if (!channel::sic_feasible(group_power, h, near, far, noise)) ++failed;
      }
    }
  }
  const double elapsed = seconds_since(start);
  Verdict v{"AC8", failed == 0 && elapsed < 1.0, ""};
  v.detail = std::to_string(checked) + " cases, " + std::to_string(failed) + " infeasible, " +
             fmt(elapsed * 1e3, 3) + " ms";
  return v;
}

// --- AC9: approximator training --------------------------------------------------

Verdict check_training() {
  mdp::EnvConfig config;
  auto net = agents::NeuralApproximator::for_config(config, 3);
  Eigen::VectorXd x(12);
  x << 1, 0, 1, 0, 1, 1, 0, 0, 1, 0, 1, 0;
  Eigen::VectorXd y(16);
  y << 1, 0, 1, 0, 1, 1, 0, 0, 1, 0, 1, 0, 0.3, 0.2, 0.1, 0.1;
  const Eigen::MatrixXd xs = x.replicate(1, 32);
  const Eigen::MatrixXd ys = y.replicate(1, 32);
  agents::TrainParams params;
  double loss = INFINITY;
  int iterations = 0;
  while (iterations < 500 && loss >= 1e-3) {
    net.train_batch(xs, ys, params);
    loss = net.loss(xs, ys);
    ++iterations;
  }
  const bool overfit = loss < 1e-3;

  // Frozen batch drawn from a baseline policy's decisions.
  mdp::Environment env(config, 8);
  demand::Rng rng(8);
  agents::MemoryMatrix memory(256);
  agents::FixedAgent teacher(config);
  for (int i = 0; i < 256; ++i) {
    const auto a = teacher.act(env);
    memory.store(agents::state_features(env.state()), agents::action_target(a, config));
    env.step(a);
  }
  Eigen::MatrixXd fx(12, 64);
  Eigen::MatrixXd fy(16, 64);
  for (int i = 0; i < 64; ++i) {
    fx.col(i) = memory.features(i);
    fy.col(i) = memory.target(i);
  }
  auto fresh = agents::NeuralApproximator::for_config(config, 4);
  agents::TrainParams epoch;
  epoch.iterations = 50;
  double previous = fresh.loss(fx, fy);
  const double initial = previous;
  bool steady = true;
  for (int e = 0; e < 8; ++e) {
    fresh.train(memory, epoch, rng);
    const double now = fresh.loss(fx, fy);
    steady = steady && now <= previous * 1.05;
    previous = now;
  }
  Verdict v{"AC9", overfit && steady, ""};
  v.detail = "single-sample loss " + fmt(loss, 3) + " after " + std::to_string(iterations) +
             " iterations; frozen-batch loss " + fmt(initial, 4) + " -> " + fmt(previous, 4) +
             (steady ? " without rising" : " rose between epochs");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks for the UAV caching simulator"};
  Settings settings;
  bool strict = false;
  bool verbose = false;
  std::vector<std::string> only;
  app.add_option("--slots", settings.slots, "Slots per tabular and baseline run")->check(CLI::PositiveNumber);
  app.add_option("--final-window", settings.final_window, "Final averaging window for those runs");
  app.add_option("--fa-slots", settings.fa_slots, "Slots per large-scale run")->check(CLI::PositiveNumber);
  app.add_option("--fa-final-window", settings.fa_final_window, "Final averaging window for large-scale runs");
  app.add_option("--seeds", settings.seeds, "Paired seeds per comparison")->check(CLI::Range(1, 1000));
  app.add_option("--only", only, "Run only these criteria, e.g. AC1,AC8")->delimiter(',');
  app.add_flag("--strict", strict, "Exit 1 when any criterion fails");
  app.add_flag("-v,--verbose", verbose, "Print the measurements behind each verdict");
  CLI11_PARSE(app, argc, argv);

  settings.final_window = std::min<std::size_t>(settings.final_window, settings.slots);
  settings.fa_final_window = std::min<std::size_t>(settings.fa_final_window, settings.fa_slots);

  Runner runner(settings);
  const std::vector<std::pair<std::string, std::function<Verdict()>>> checks{
      {"AC1", check_examples},
      {"AC2", check_small_oracle},
      {"AC3", [&] { return check_convergence(runner); }},
      {"AC4", [&] { return check_ordering(runner); }},
      {"AC5", [&] { return check_trends(runner); }},
      {"AC6", [&] { return check_hit_ratio(runner); }},
      {"AC7", [&] { return check_safety(runner); }},
      {"AC8", check_sic_grid},
      {"AC9", check_training},
  };

  int failures = 0;
  for (const auto& [id, check] : checks) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto start = Clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {id, false, std::string("error: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << v.id << " (" << fmt(seconds_since(start), 3) << " s)";
    if (verbose) std::cout << "  " << v.detail;
    std::cout << std::endl;
  }
  return strict && failures > 0 ? 1 : 0;
}
