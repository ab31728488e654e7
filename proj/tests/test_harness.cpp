#include <algorithm>
#include <stdexcept>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "uavcache/harness.hpp"

using namespace uavcache;
using namespace uavcache::harness;
namespace fs = std::filesystem;

namespace {

ScenarioConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.cfg");
}

int error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("minimal config takes the documented defaults") {
  const auto c = parse("N = 8\nM = 4\nZ = 2\nseed = 3\n");
  CHECK(c.env.num_users == 8);
  CHECK(c.env.num_contents == 4);
  CHECK(c.env.cache_capacity == 2);
  CHECK(c.seeds == std::vector<std::uint64_t>{3});
  CHECK(c.env.zipf_exponent == 0.8);
  CHECK(c.env.max_wait == 2);
  CHECK(c.env.slot_length == 0.05);
  CHECK(c.env.content_bits == 16e6);
  CHECK(c.env.radio.p_mbs_dbm == 46.0);
  CHECK(c.env.radio.p_uav_dbm == 30.0);
  CHECK(c.env.radio.noise_density_dbm_hz == -174.0);
  CHECK(c.env.radio.backhaul_bandwidth_hz == 20e6);
  CHECK(c.env.power_levels == std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5});
  CHECK(c.ql.gamma == 0.9);
  CHECK(c.ql.epsilon == 5000.0);
  CHECK(c.slots == 100000);
  CHECK(c.ma_window == 1000);
}

TEST_CASE("sections, aliases and comments") {
  const auto c = parse(
      "# scenario\n"
      "[scenario]\nid = tiny\n"
      "[env]\nnum_users = 4 ; inline comment\nbeta = 2\nR_g = 1.5\npower_levels = 0.2, 0.4\n"
      "[agents]\nlist = ql, random\n"
      "[ql]\nepsilon = 500\nrate_clock = slot\nexploit_scope = listed\nstate_key = waiting\n"
      "[fa]\nreset_period = 50\nlearning_rate = 0.2\n"
      "[run]\nslots = 123\nseeds = 1, 2, 3\n"
      "[sweep]\naxis = cache\nvalues = 1, 2\n");
  CHECK(c.scenario_id == "tiny");
  CHECK(c.env.num_users == 4);
  CHECK(c.env.request_gen_coeff == 1.5);
  CHECK(c.env.power_levels == std::vector<double>{0.2, 0.4});
  CHECK(c.agents == std::vector<std::string>{"ql", "random"});
  CHECK(c.ql.epsilon == 500);
  CHECK(c.ql.clock == agents::RateClock::slot);
  CHECK(c.ql.scope == agents::ExploitScope::listed);
  CHECK(c.ql.key_mode == agents::StateKeyMode::waiting);
  CHECK(c.fa.reset_period == 50);
  CHECK(c.fa.train.learning_rate == 0.2);
  CHECK(c.slots == 123);
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(c.axis == SweepAxis::cache);
  CHECK(c.sweep_values == std::vector<double>{1, 2});
}

TEST_CASE("config errors carry line numbers and name the problem") {
  CHECK(error_line("N = 8\nbogus = 1\n") == 2);
  CHECK(error_line("[env]\n[nowhere]\n") == 2);
  CHECK(error_line("N = 8\nN = 9\n") == 2);
  CHECK(error_line("\n\nN = eight\n") == 3);
  CHECK(error_line("[env]\nN 8\n") == 2);
  CHECK(error_line("[run]\nN = 8\n") == 2);
  CHECK(error_line("[env\n") == 1);
  CHECK(error_line("[ql]\nrate_clock = sometimes\n") == 2);

  SUBCASE("cache larger than the catalog") {
    try {
      parse("M = 3\nZ = 4\n");
      FAIL("expected a validation error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("cache_capacity") != std::string::npos);
      CHECK(e.line() == 0);
    }
  }
  SUBCASE("request rate above N / beta") {
    try {
      parse("N = 4\nbeta = 2\nR_g = 3\n");
      FAIL("expected a validation error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("request_gen_coeff") != std::string::npos);
    }
  }
  SUBCASE("sweep points are validated too") {
    try {
      parse("M = 4\n[sweep]\naxis = cache\nvalues = 1, 2, 5\n");
      FAIL("expected a validation error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("cache = 5") != std::string::npos);
    }
    CHECK_THROWS_AS(parse("[sweep]\naxis = users\nvalues = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse("[sweep]\naxis = gamma\n"), ConfigError);
    CHECK_THROWS_AS(parse("[sweep]\naxis = users\nvalues = 4.5\n"), ConfigError);
    CHECK_THROWS_AS(parse("[sweep]\naxis = speed\nvalues = 1\n"), ConfigError);
  }
  SUBCASE("agents and seeds") {
    CHECK_THROWS_AS(parse("agents = ql, oracle\n"), ConfigError);
    CHECK_THROWS_AS(parse("seed = -4\n"), ConfigError);
    CHECK_THROWS_AS(parse("[agents]\nlist =\n"), ConfigError);
  }
  CHECK_THROWS_AS(load_config("/nonexistent/file.cfg"), ConfigError);
}

TEST_CASE("rendered config parses back to the same settings") {
  auto c = parse("N = 6\nM = 5\nZ = 3\nseed = 4, 9\n[ql]\ngamma = 0.75\n[sweep]\naxis = epsilon\nvalues = 100, 2000\n");
  const auto text = render_config(c);
  const auto back = parse(text);
  CHECK(render_config(back) == text);
  CHECK(back.env.num_users == 6);
  CHECK(back.ql.gamma == 0.75);
  CHECK(back.seeds == std::vector<std::uint64_t>{4, 9});
  CHECK(text.find("[env]") != std::string::npos);
  CHECK(text.find("zipf_exponent = 0.8") != std::string::npos);
}

TEST_CASE("sweep points") {
  auto c = parse("M = 4\n[sweep]\naxis = cache\nvalues = 1, 3\n");
  CHECK(at_sweep_point(c, 3).env.cache_capacity == 3);
  CHECK(at_sweep_point(c, 3).axis == SweepAxis::none);
  c.axis = SweepAxis::gamma;
  CHECK(at_sweep_point(c, 0.5).ql.gamma == 0.5);
  c.axis = SweepAxis::users;
  CHECK(at_sweep_point(c, 10).env.num_users == 10);
  CHECK(axis_from_name("contents") == SweepAxis::contents);
  CHECK(axis_name(SweepAxis::epsilon) == "epsilon");
}

TEST_CASE("agents share the environment streams") {
  auto c = parse("N = 4\nM = 3\nZ = 1\nR_g = 1\n[run]\nslots = 300\nfinal_window = 100\nma_window = 50\n");
  const auto fixed = run_single(c, "fixed", 5);
  const auto random = run_single(c, "random", 5);
  const auto ql = run_single(c, "ql", 5);
  CHECK(fixed.request_hash == random.request_hash);
  CHECK(fixed.request_hash == ql.request_hash);
  CHECK(run_single(c, "fixed", 6).request_hash != fixed.request_hash);
  CHECK(agent_seed(5, "ql") != agent_seed(5, "random"));
  CHECK(ql.explored_actions > 0);
  CHECK(fixed.hit_ratio >= 0.0);
  CHECK(fixed.hit_ratio <= 1.0);
  CHECK_THROWS_AS(make_agent("oracle", c, 1), std::invalid_argument);
}

TEST_CASE("experiment output") {
  TempDir dir("uavcache_harness_test");
  auto c = parse(
      "[scenario]\nid = unit\n[env]\nN = 4\nM = 4\nR_g = 1\n"
      "[agents]\nlist = fixed, random\n"
      "[run]\nslots = 200\nseeds = 1, 2\nma_window = 20\nfinal_window = 50\n"
      "[sweep]\naxis = cache\nvalues = 1, 2, 3, 4\n");
  std::ostringstream log;
  const auto rows = run_experiment(c, dir.path.string(), &log);
  CHECK(rows.size() == 4 * 2 * 2);
  CHECK(fs::exists(dir.path / "summary.csv"));
  CHECK(fs::exists(dir.path / "unit_cache-3_random_s2.csv"));
  CHECK(log.str().find("unit_cache-1 fixed seed 1") != std::string::npos);

  SUBCASE("metrics schema and moving average") {
    std::ifstream in(dir.path / "unit_cache-2_fixed_s1.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header ==
          "scenario_id,agent,seed,slot,cost_s,cost_backhaul_s,cost_access_s,cost_sched_s,ma_cost_s,cache_hits,"
          "cache_misses");
    std::vector<double> cost;
    std::vector<double> ma;
    std::string line;
    long hits = 0;
    long misses = 0;
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) f.push_back(cell);
      REQUIRE(f.size() == 11);
      CHECK(f[0] == "unit_cache-2");
      CHECK(std::stol(f[3]) == long(cost.size()) + 1);
      cost.push_back(std::stod(f[4]));
      ma.push_back(std::stod(f[8]));
      CHECK(std::stod(f[4]) == doctest::Approx(std::stod(f[5]) + std::stod(f[6]) + std::stod(f[7])).epsilon(1e-7));
      hits += std::stol(f[9]);
      misses += std::stol(f[10]);
    }
    REQUIRE(cost.size() == 200);
    for (std::size_t i = 0; i < cost.size(); ++i) {
      const std::size_t lo = i >= 19 ? i - 19 : 0;
      double sum = 0.0;
      for (std::size_t j = lo; j <= i; ++j) sum += cost[j];
      CHECK(ma[i] == doctest::Approx(sum / double(i - lo + 1)).epsilon(1e-6));
    }
    const auto it = std::find_if(rows.begin(), rows.end(), [](const RunSummary& r) {
      return r.agent == "fixed" && r.seed == 1 && r.sweep_value == 2;
    });
    REQUIRE(it != rows.end());
    CHECK(it->hits == hits);
    CHECK(it->misses == misses);
  }

  SUBCASE("plots are deterministic") {
    std::vector<std::string> csvs;
    for (const auto& e : fs::directory_iterator(dir.path)) csvs.push_back(e.path().string());
    std::sort(csvs.begin(), csvs.end());
    const auto first = emit_plots(csvs, (dir.path / "a").string());
    const auto second = emit_plots(csvs, (dir.path / "b").string());
    REQUIRE(first.size() == second.size());
    CHECK(first.size() == 3);  // one convergence chart, delay and hit ratio vs cache
    for (std::size_t i = 0; i < first.size(); ++i) {
      CHECK(fs::path(first[i]).filename() == fs::path(second[i]).filename());
      CHECK(slurp(first[i]) == slurp(second[i]));
      CHECK(slurp(first[i]).rfind("<svg", 0) == 0);
    }
  }
}

TEST_CASE("plot input errors") {
  TempDir dir("uavcache_plot_test");
  const auto empty = dir.path / "empty.csv";
  { std::ofstream(empty) << ""; }
  CHECK_THROWS_AS(emit_plots({empty.string()}, (dir.path / "out").string()), SchemaError);
  CHECK_FALSE(fs::exists(dir.path / "out"));

  const auto header_only = dir.path / "header.csv";
  { std::ofstream(header_only) << "scenario_id,agent,seed,slot,cost_s\n"; }
  CHECK_THROWS_AS(emit_plots({header_only.string()}, (dir.path / "out").string()), SchemaError);

  const auto missing = dir.path / "missing.csv";
  { std::ofstream(missing) << "scenario_id,agent,seed,slot\nx,fixed,1,1\n"; }
  CHECK_THROWS_AS(emit_plots({missing.string()}, (dir.path / "out").string()), SchemaError);
  CHECK_THROWS_AS(emit_plots({}, (dir.path / "out").string()), SchemaError);
}

TEST_CASE("svg rendering") {
  const std::vector<Series> s{{"a & b", {1, 2, 3}, {3, 1, 2}}, {"c", {1, 3}, {0, 4}}};
  const auto svg = render_line_svg("title <x>", "slot", "delay", s);
  CHECK(svg == render_line_svg("title <x>", "slot", "delay", s));
  CHECK(svg.find("a &amp; b") != std::string::npos);
  CHECK(svg.find("title &lt;x&gt;") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK_NOTHROW(render_line_svg("empty", "x", "y", {}));
}
