#include "uavcache/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace uavcache::harness {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format_number(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected a number, got '" + text + "'");
  }
  if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument("expected a number, got '" + text + "'");
  return v;
}

long parse_long(const std::string& text) {
  const double v = parse_double(text);
  if (v != std::floor(v) || std::abs(v) > 9e15) {
    throw std::invalid_argument("expected an integer, got '" + text + "'");
  }
  return static_cast<long>(v);
}

int parse_int(const std::string& text) {
  const long v = parse_long(text);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw std::invalid_argument("integer out of range: '" + text + "'");
  }
  return static_cast<int>(v);
}

std::uint64_t parse_seed(const std::string& text) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected a non-negative integer seed, got '" + text + "'");
  }
  if (used != text.size() || text.front() == '-') {
    throw std::invalid_argument("expected a non-negative integer seed, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "true" || t == "yes" || t == "1" || t == "on") return true;
  if (t == "false" || t == "no" || t == "0" || t == "off") return false;
  throw std::invalid_argument("expected true or false, got '" + text + "'");
}

template <typename T>
std::string join(const std::vector<T>& values, const std::function<std::string(const T&)>& fmt) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += fmt(values[i]);
  }
  return out;
}

struct Key {
  std::string section;
  std::string name;
  std::vector<std::string> aliases;
  std::function<void(ScenarioConfig&, const std::string&)> set;
  std::function<std::string(const ScenarioConfig&)> get;
};

Key number_key(std::string section, std::string name, std::vector<std::string> aliases,
               std::function<double&(ScenarioConfig&)> field) {
  return Key{std::move(section), std::move(name), std::move(aliases),
             [field](ScenarioConfig& c, const std::string& v) { field(c) = parse_double(v); },
             [field](const ScenarioConfig& c) { return format_number(field(const_cast<ScenarioConfig&>(c))); }};
}

Key int_key(std::string section, std::string name, std::vector<std::string> aliases,
            std::function<int&(ScenarioConfig&)> field) {
  return Key{std::move(section), std::move(name), std::move(aliases),
             [field](ScenarioConfig& c, const std::string& v) { field(c) = parse_int(v); },
             [field](const ScenarioConfig& c) { return std::to_string(field(const_cast<ScenarioConfig&>(c))); }};
}

template <typename Int>
Key count_key(std::string section, std::string name, std::vector<std::string> aliases,
              std::function<Int&(ScenarioConfig&)> field) {
  return Key{std::move(section), std::move(name), std::move(aliases),
             [field](ScenarioConfig& c, const std::string& v) {
               const long parsed = parse_long(v);
               if (parsed < 0) throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
               field(c) = static_cast<Int>(parsed);
             },
             [field](const ScenarioConfig& c) { return std::to_string(field(const_cast<ScenarioConfig&>(c))); }};
}

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    k.push_back(Key{"scenario", "id", {"scenario_id"},
                    [](ScenarioConfig& c, const std::string& v) {
                      if (v.empty() || v.find_first_of("/\\ ,") != std::string::npos) {
                        throw std::invalid_argument("scenario id must be non-empty without spaces, commas or slashes");
                      }
                      c.scenario_id = v;
                    },
                    [](const ScenarioConfig& c) { return c.scenario_id; }});

    k.push_back(int_key("env", "num_users", {"N", "users"}, [](ScenarioConfig& c) -> int& { return c.env.num_users; }));
    k.push_back(int_key("env", "num_contents", {"M", "contents"},
                        [](ScenarioConfig& c) -> int& { return c.env.num_contents; }));
    k.push_back(int_key("env", "cache_capacity", {"Z", "capacity"},
                        [](ScenarioConfig& c) -> int& { return c.env.cache_capacity; }));
    k.push_back(number_key("env", "zipf_exponent", {"eta"}, [](ScenarioConfig& c) -> double& { return c.env.zipf_exponent; }));
    k.push_back(number_key("env", "request_gen_coeff", {"R_g", "rg"},
                           [](ScenarioConfig& c) -> double& { return c.env.request_gen_coeff; }));
    k.push_back(int_key("env", "max_wait", {"beta"}, [](ScenarioConfig& c) -> int& { return c.env.max_wait; }));
    k.push_back(number_key("env", "slot_length", {"delta"}, [](ScenarioConfig& c) -> double& { return c.env.slot_length; }));
    k.push_back(number_key("env", "content_bits", {}, [](ScenarioConfig& c) -> double& { return c.env.content_bits; }));
    k.push_back(number_key("env", "uav_speed", {}, [](ScenarioConfig& c) -> double& { return c.env.uav_speed; }));
    k.push_back(number_key("env", "trajectory_radius", {}, [](ScenarioConfig& c) -> double& { return c.env.trajectory_radius; }));
    k.push_back(number_key("env", "altitude", {}, [](ScenarioConfig& c) -> double& { return c.env.altitude; }));
    k.push_back(number_key("env", "cell_side", {}, [](ScenarioConfig& c) -> double& { return c.env.cell_side; }));
    k.push_back(int_key("env", "neighbor_cells", {}, [](ScenarioConfig& c) -> int& { return c.env.neighbor_cells; }));
    k.push_back(number_key("env", "p_mbs_dbm", {}, [](ScenarioConfig& c) -> double& { return c.env.radio.p_mbs_dbm; }));
    k.push_back(number_key("env", "p_uav_dbm", {}, [](ScenarioConfig& c) -> double& { return c.env.radio.p_uav_dbm; }));
    k.push_back(number_key("env", "neighbor_p_mbs_dbm", {},
                           [](ScenarioConfig& c) -> double& { return c.env.radio.neighbor_p_mbs_dbm; }));
    k.push_back(number_key("env", "backhaul_bandwidth_hz", {},
                           [](ScenarioConfig& c) -> double& { return c.env.radio.backhaul_bandwidth_hz; }));
    k.push_back(number_key("env", "access_bandwidth_hz", {},
                           [](ScenarioConfig& c) -> double& { return c.env.radio.access_bandwidth_hz; }));
    k.push_back(number_key("env", "noise_density_dbm_hz", {},
                           [](ScenarioConfig& c) -> double& { return c.env.radio.noise_density_dbm_hz; }));
    k.push_back(number_key("env", "carrier_ghz", {}, [](ScenarioConfig& c) -> double& { return c.env.radio.carrier_ghz; }));
    k.push_back(Key{"env", "power_levels", {},
                    [](ScenarioConfig& c, const std::string& v) {
                      std::vector<double> levels;
                      for (const auto& item : split_list(v)) levels.push_back(parse_double(item));
                      c.env.power_levels = levels;
                    },
                    [](const ScenarioConfig& c) {
                      return join<double>(c.env.power_levels, [](const double& x) { return format_number(x); });
                    }});
    k.push_back(Key{"env", "random_initial_cache", {},
                    [](ScenarioConfig& c, const std::string& v) { c.env.random_initial_cache = parse_bool(v); },
                    [](const ScenarioConfig& c) { return std::string(c.env.random_initial_cache ? "true" : "false"); }});
    k.push_back(count_key<std::size_t>("env", "enumeration_limit", {},
                                       [](ScenarioConfig& c) -> std::size_t& { return c.env.enumeration_limit; }));

    k.push_back(Key{"agents", "list", {"agents"},
                    [](ScenarioConfig& c, const std::string& v) { c.agents = split_list(v); },
                    [](const ScenarioConfig& c) {
                      return join<std::string>(c.agents, [](const std::string& s) { return s; });
                    }});

    k.push_back(number_key("ql", "gamma", {}, [](ScenarioConfig& c) -> double& { return c.ql.gamma; }));
    k.push_back(number_key("ql", "epsilon", {}, [](ScenarioConfig& c) -> double& { return c.ql.epsilon; }));
    k.push_back(number_key("ql", "c_alpha", {}, [](ScenarioConfig& c) -> double& { return c.ql.c_alpha; }));
    k.push_back(number_key("ql", "phi_alpha", {}, [](ScenarioConfig& c) -> double& { return c.ql.phi_alpha; }));
    k.push_back(Key{"ql", "rate_clock", {},
                    [](ScenarioConfig& c, const std::string& v) {
                      if (v == "slot") {
                        c.ql.clock = agents::RateClock::slot;
                      } else if (v == "visits") {
                        c.ql.clock = agents::RateClock::visits;
                      } else {
                        throw std::invalid_argument("rate_clock must be slot or visits");
                      }
                    },
                    [](const ScenarioConfig& c) {
                      return std::string(c.ql.clock == agents::RateClock::slot ? "slot" : "visits");
                    }});
    k.push_back(Key{"ql", "exploit_scope", {},
                    [](ScenarioConfig& c, const std::string& v) {
                      if (v == "listed") {
                        c.ql.scope = agents::ExploitScope::listed;
                      } else if (v == "visited") {
                        c.ql.scope = agents::ExploitScope::visited;
                      } else {
                        throw std::invalid_argument("exploit_scope must be listed or visited");
                      }
                    },
                    [](const ScenarioConfig& c) {
                      return std::string(c.ql.scope == agents::ExploitScope::listed ? "listed" : "visited");
                    }});
    k.push_back(Key{"ql", "state_key", {},
                    [](ScenarioConfig& c, const std::string& v) {
                      if (v == "full") {
                        c.ql.key_mode = agents::StateKeyMode::full;
                      } else if (v == "compact") {
                        c.ql.key_mode = agents::StateKeyMode::compact;
                      } else if (v == "waiting") {
                        c.ql.key_mode = agents::StateKeyMode::waiting;
                      } else {
                        throw std::invalid_argument("state_key must be full, compact or waiting");
                      }
                    },
                    [](const ScenarioConfig& c) {
                      switch (c.ql.key_mode) {
                        case agents::StateKeyMode::full: return std::string("full");
                        case agents::StateKeyMode::compact: return std::string("compact");
                        case agents::StateKeyMode::waiting: return std::string("waiting");
                      }
                      return std::string("full");
                    }});

    k.push_back(int_key("fa", "search_iterations", {}, [](ScenarioConfig& c) -> int& { return c.fa.search.iterations; }));
    k.push_back(number_key("fa", "search_step", {}, [](ScenarioConfig& c) -> double& { return c.fa.search.step_size; }));
    k.push_back(number_key("fa", "perturbation", {}, [](ScenarioConfig& c) -> double& { return c.fa.search.perturbation; }));
    k.push_back(number_key("fa", "learning_rate", {}, [](ScenarioConfig& c) -> double& { return c.fa.train.learning_rate; }));
    k.push_back(number_key("fa", "momentum", {}, [](ScenarioConfig& c) -> double& { return c.fa.train.momentum; }));
    k.push_back(int_key("fa", "batch_size", {}, [](ScenarioConfig& c) -> int& { return c.fa.train.batch_size; }));
    k.push_back(int_key("fa", "train_iterations", {}, [](ScenarioConfig& c) -> int& { return c.fa.train.iterations; }));
    k.push_back(number_key("fa", "clip_norm", {}, [](ScenarioConfig& c) -> double& { return c.fa.train.clip_norm; }));
    k.push_back(count_key<std::size_t>("fa", "memory_capacity", {},
                                       [](ScenarioConfig& c) -> std::size_t& { return c.fa.memory_capacity; }));
    k.push_back(count_key<long>("fa", "reset_period", {}, [](ScenarioConfig& c) -> long& { return c.fa.reset_period; }));

    k.push_back(count_key<long>("run", "slots", {"T1"}, [](ScenarioConfig& c) -> long& { return c.slots; }));
    k.push_back(Key{"run", "seeds", {"seed"},
                    [](ScenarioConfig& c, const std::string& v) {
                      c.seeds.clear();
                      for (const auto& item : split_list(v)) c.seeds.push_back(parse_seed(item));
                      if (c.seeds.empty()) throw std::invalid_argument("at least one seed is required");
                    },
                    [](const ScenarioConfig& c) {
                      return join<std::uint64_t>(c.seeds, [](const std::uint64_t& s) { return std::to_string(s); });
                    }});
    k.push_back(count_key<std::size_t>("run", "ma_window", {}, [](ScenarioConfig& c) -> std::size_t& { return c.ma_window; }));
    k.push_back(count_key<std::size_t>("run", "final_window", {},
                                       [](ScenarioConfig& c) -> std::size_t& { return c.final_window; }));

    k.push_back(Key{"sweep", "axis", {},
                    [](ScenarioConfig& c, const std::string& v) { c.axis = axis_from_name(v); },
                    [](const ScenarioConfig& c) { return axis_name(c.axis); }});
    k.push_back(Key{"sweep", "values", {},
                    [](ScenarioConfig& c, const std::string& v) {
                      c.sweep_values.clear();
                      for (const auto& item : split_list(v)) c.sweep_values.push_back(parse_double(item));
                    },
                    [](const ScenarioConfig& c) {
                      return join<double>(c.sweep_values, [](const double& x) { return format_number(x); });
                    }});
    return k;
  }();
  return keys;
}

bool key_matches(const Key& key, const std::string& name) {
  if (key.name == name) return true;
  return std::find(key.aliases.begin(), key.aliases.end(), name) != key.aliases.end();
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return s;
}

std::string point_label(const ScenarioConfig& config, double value) {
  if (config.axis == SweepAxis::none) return config.scenario_id;
  return config.scenario_id + "_" + axis_name(config.axis) + "-" + format_number(value);
}

}  // namespace

ConfigError::ConfigError(const std::string& source, int line, const std::string& what)
    : std::runtime_error(line > 0 ? source + ":" + std::to_string(line) + ": " + what : source + ": " + what),
      line_(line) {}

std::string axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::none: return "none";
    case SweepAxis::users: return "users";
    case SweepAxis::contents: return "contents";
    case SweepAxis::cache: return "cache";
    case SweepAxis::epsilon: return "epsilon";
    case SweepAxis::gamma: return "gamma";
  }
  return "none";
}

SweepAxis axis_from_name(const std::string& name) {
  for (auto axis : {SweepAxis::none, SweepAxis::users, SweepAxis::contents, SweepAxis::cache, SweepAxis::epsilon,
                    SweepAxis::gamma}) {
    if (axis_name(axis) == name) return axis;
  }
  throw std::invalid_argument("unknown sweep axis '" + name + "' (none, users, contents, cache, epsilon, gamma)");
}

ScenarioConfig at_sweep_point(const ScenarioConfig& config, double value) {
  ScenarioConfig point = config;
  auto as_int = [&](const char* what) {
    if (value != std::floor(value) || value < 0 || value > 1e9) {
      throw std::invalid_argument(std::string("sweep over ") + what + " needs integer values");
    }
    return static_cast<int>(value);
  };
  switch (config.axis) {
    case SweepAxis::none: break;
    case SweepAxis::users: point.env.num_users = as_int("users"); break;
    case SweepAxis::contents: point.env.num_contents = as_int("contents"); break;
    case SweepAxis::cache: point.env.cache_capacity = as_int("cache"); break;
    case SweepAxis::epsilon: point.ql.epsilon = value; break;
    case SweepAxis::gamma: point.ql.gamma = value; break;
  }
  point.axis = SweepAxis::none;
  point.sweep_values.clear();
  return point;
}

void ScenarioConfig::validate() const {
  if (agents.empty()) throw std::invalid_argument("at least one agent is required");
  for (const auto& a : agents) {
    const auto& known = known_agents();
    if (std::find(known.begin(), known.end(), a) == known.end()) {
      throw std::invalid_argument("unknown agent '" + a + "' (greedy, ql, fa, fixed, random)");
    }
  }
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  if (ma_window == 0) throw std::invalid_argument("ma_window must be positive");
  if (final_window == 0) throw std::invalid_argument("final_window must be positive");
  if (slots < 0) throw std::invalid_argument("slots must be non-negative");
  if (axis != SweepAxis::none && sweep_values.empty()) throw std::invalid_argument("sweep axis set without values");
  if (axis == SweepAxis::none && !sweep_values.empty()) throw std::invalid_argument("sweep values set without an axis");
  for (double v : sweep_values) {
    if (!(v > 0.0)) throw std::invalid_argument("sweep values must be positive");
  }
  const std::vector<double> points = axis == SweepAxis::none ? std::vector<double>{0.0} : sweep_values;
  for (double v : points) {
    const ScenarioConfig point = at_sweep_point(*this, v);
    const std::string where = axis == SweepAxis::none ? "" : " at " + axis_name(axis) + " = " + format_number(v);
    try {
      point.env.validate();
      point.ql.validate();
      point.fa.validate();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(e.what() + where);
    }
  }
}

ScenarioConfig parse_config(std::istream& in, const std::string& source) {
  ScenarioConfig config;
  const auto& keys = registry();
  std::set<std::string> known_sections;
  for (const auto& k : keys) known_sections.insert(k.section);

  std::string section;
  std::set<const Key*> seen;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source, number, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!known_sections.count(section)) throw ConfigError(source, number, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, number, "expected 'key = value'");
    const std::string name = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (name.empty()) throw ConfigError(source, number, "missing key name");

    std::vector<const Key*> matches;
    for (const auto& k : keys) {
      if ((section.empty() || k.section == section) && key_matches(k, name)) matches.push_back(&k);
    }
    if (matches.empty()) {
      throw ConfigError(source, number,
                        "unknown key '" + name + "'" + (section.empty() ? "" : " in section [" + section + "]"));
    }
    if (matches.size() > 1) throw ConfigError(source, number, "ambiguous key '" + name + "'; put it under a section");
    if (!seen.insert(matches.front()).second) throw ConfigError(source, number, "duplicate key '" + name + "'");
    try {
      matches.front()->set(config, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(source, number, "bad value for '" + name + "': " + e.what());
    }
  }
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, 0, e.what());
  }
  return config;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open file");
  return parse_config(in, path);
}

std::string render_config(const ScenarioConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& k : registry()) {
    if (k.section != section) {
      if (!section.empty()) out << '\n';
      section = k.section;
      out << '[' << section << "]\n";
    }
    out << k.name << " = " << k.get(config) << '\n';
  }
  return out.str();
}

std::uint64_t agent_seed(std::uint64_t seed, const std::string& agent) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : agent) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return demand::derive_seed(seed, h);
}

std::unique_ptr<agents::Agent> make_agent(const std::string& name, const ScenarioConfig& config,
                                          std::uint64_t seed) {
  const auto own = agent_seed(seed, name);
  if (name == "greedy") return std::make_unique<agents::GreedyAgent>(config.env);
  if (name == "ql") return std::make_unique<agents::QLearningAgent>(agents::QTable(config.ql), own);
  if (name == "fa") return std::make_unique<agents::FaAgent>(config.env, config.fa, own);
  if (name == "fixed") return std::make_unique<agents::FixedAgent>(config.env);
  if (name == "random") return std::make_unique<agents::RandomAgent>(own);
  throw std::invalid_argument("unknown agent '" + name + "'");
}

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols{"scenario_id",   "agent",         "seed",         "slot",
                                             "cost_s",        "cost_backhaul_s", "cost_access_s", "cost_sched_s",
                                             "ma_cost_s",     "cache_hits",    "cache_misses"};
  return cols;
}

void write_metrics_header(std::ostream& out) {
  const auto& cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}

void write_metrics_rows(std::ostream& out, const std::string& scenario_id, const std::string& agent,
                        std::uint64_t seed, const agents::DelayTrace& trace) {
  char buf[256];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(buf, sizeof buf, ",%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%d\n", i + 1, trace.cost[i], trace.backhaul[i],
                  trace.access[i], trace.scheduling[i], trace.moving_average[i], trace.hits[i], trace.misses[i]);
    out << scenario_id << ',' << agent << ',' << seed << buf;
  }
}

const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols{"scenario_id", "sweep_axis", "sweep_value", "agent",
                                             "seed",        "slots",      "final_mean_s", "hit_ratio",
                                             "cache_hits",  "cache_misses", "request_hash", "explored_actions"};
  return cols;
}

void write_summary(std::ostream& out, const std::vector<RunSummary>& rows, SweepAxis axis) {
  const auto& cols = summary_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : rows) {
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.request_hash));
    out << r.scenario_id << ',' << axis_name(axis) << ',' << format_number(r.sweep_value) << ',' << r.agent << ','
        << r.seed << ',' << r.slots << ',' << format_number(r.final_mean) << ',' << format_number(r.hit_ratio) << ','
        << r.hits << ',' << r.misses << ',' << hash << ',' << r.explored_actions << '\n';
  }
}

RunSummary run_single(const ScenarioConfig& config, const std::string& agent, std::uint64_t seed,
                      agents::DelayTrace* trace_out) {
  mdp::Environment env(config.env, seed);
  auto policy = make_agent(agent, config, seed);
  auto trace = agents::run_agent(env, *policy, config.slots, config.ma_window);
  if (auto* ql = dynamic_cast<agents::QLearningAgent*>(policy.get())) {
    trace.explored_actions = ql->table().action_count();
  }
  RunSummary s;
  s.scenario_id = config.scenario_id;
  s.agent = agent;
  s.seed = seed;
  s.slots = config.slots;
  s.final_mean = trace.tail_mean(config.final_window);
  s.hit_ratio = trace.tail_hit_ratio(config.final_window);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    s.hits += trace.hits[i];
    s.misses += trace.misses[i];
  }
  s.request_hash = env.request_log_hash();
  s.explored_actions = trace.explored_actions;
  if (trace_out) *trace_out = std::move(trace);
  return s;
}

std::vector<RunSummary> run_experiment(const ScenarioConfig& config, const std::string& out_dir, std::ostream* log) {
  config.validate();
  if (!out_dir.empty()) fs::create_directories(out_dir);
  const std::vector<double> points = config.axis == SweepAxis::none ? std::vector<double>{0.0} : config.sweep_values;
  std::vector<RunSummary> rows;
  auto flush_summary = [&] {
    if (out_dir.empty()) return;
    std::ofstream out(fs::path(out_dir) / "summary.csv");
    write_summary(out, rows, config.axis);
  };
  for (double value : points) {
    const ScenarioConfig point = at_sweep_point(config, value);
    const std::string label = point_label(config, value);
    for (const auto& agent : config.agents) {
      for (auto seed : config.seeds) {
        agents::DelayTrace trace;
        RunSummary s;
        try {
          s = run_single(point, agent, seed, &trace);
        } catch (...) {
          flush_summary();
          throw;
        }
        s.scenario_id = label;
        s.sweep_value = value;
        if (!out_dir.empty()) {
          const auto path = fs::path(out_dir) / (sanitize(label) + "_" + agent + "_s" + std::to_string(seed) + ".csv");
          std::ofstream out(path);
          if (!out) throw std::runtime_error("cannot write " + path.string());
          write_metrics_header(out);
          write_metrics_rows(out, label, agent, seed, trace);
        }
        rows.push_back(s);
        flush_summary();
        if (log) {
          *log << label << ' ' << agent << " seed " << seed << ": final mean " << std::setprecision(6) << s.final_mean
               << " s, hit ratio " << s.hit_ratio << '\n';
        }
      }
    }
  }
  return rows;
}

// --- plots ----------------------------------------------------------------

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string tick_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  }
};

Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot read " + path);
  Table t;
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw SchemaError(path + ": empty CSV");
  std::istringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) t.header.push_back(trim(cell));
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> row;
    std::istringstream rs(line);
    while (std::getline(rs, cell, ',')) row.push_back(cell);
    if (row.size() != t.header.size()) throw SchemaError(path + ": row width differs from the header");
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw SchemaError(path + ": no data rows");
  return t;
}

void require_columns(const Table& t, const std::vector<std::string>& cols, const std::string& path) {
  for (const auto& c : cols) {
    if (t.column(c) < 0) throw SchemaError(path + ": missing column '" + c + "'");
  }
}

}  // namespace

std::string render_line_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                            const std::vector<Series>& series) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double width = 720;
  const double height = 440;
  const double left = 80;
  const double right = 170;
  const double top = 40;
  const double bottom = 60;
  double x_min = std::numeric_limits<double>::infinity();
  double x_max = -x_min;
  double y_min = x_min;
  double y_max = -x_min;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x_min = std::min(x_min, s.x[i]);
      x_max = std::max(x_max, s.x[i]);
      y_min = std::min(y_min, s.y[i]);
      y_max = std::max(y_max, s.y[i]);
    }
  }
  if (!std::isfinite(x_min)) {
    x_min = 0;
    x_max = 1;
    y_min = 0;
    y_max = 1;
  }
  y_min = std::min(0.0, y_min);
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max == y_min) y_max = y_min + 1;
  y_max += 0.05 * (y_max - y_min);
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - x_min) / (x_max - x_min) * pw; };
  auto py = [&](double y) { return top + ph - (y - y_min) / (y_max - y_min) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fixed(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << xml_escape(title) << "</text>\n";
  svg << "<rect x=\"" << fixed(left) << "\" y=\"" << fixed(top) << "\" width=\"" << fixed(pw) << "\" height=\""
      << fixed(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x_min + (x_max - x_min) * i / 5.0;
    const double yv = y_min + (y_max - y_min) * i / 5.0;
    svg << "<line x1=\"" << fixed(px(xv)) << "\" y1=\"" << fixed(top + ph) << "\" x2=\"" << fixed(px(xv))
        << "\" y2=\"" << fixed(top + ph + 5) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << fixed(px(xv)) << "\" y=\"" << fixed(top + ph + 18) << "\" text-anchor=\"middle\">"
        << tick_label(xv) << "</text>\n";
    svg << "<line x1=\"" << fixed(left - 5) << "\" y1=\"" << fixed(py(yv)) << "\" x2=\"" << fixed(left)
        << "\" y2=\"" << fixed(py(yv)) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << fixed(left - 8) << "\" y=\"" << fixed(py(yv) + 4) << "\" text-anchor=\"end\">"
        << tick_label(yv) << "</text>\n";
  }
  svg << "<text x=\"" << fixed(left + pw / 2) << "\" y=\"" << fixed(height - 18) << "\" text-anchor=\"middle\">"
      << xml_escape(x_label) << "</text>\n";
  svg << "<text x=\"18\" y=\"" << fixed(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << fixed(top + ph / 2) << ")\">" << xml_escape(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = palette[k % 10];
    // At most ~1500 vertices per line keeps files small; the stride is a
    // pure function of the length so output stays reproducible.
    const std::size_t stride = std::max<std::size_t>(1, s.x.size() / 1500);
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); i += stride) {
      svg << fixed(px(s.x[i])) << ',' << fixed(py(s.y[i])) << ' ';
    }
    if (!s.x.empty() && (s.x.size() - 1) % stride != 0) {
      svg << fixed(px(s.x.back())) << ',' << fixed(py(s.y.back()));
    }
    svg << "\"/>\n";
    if (s.x.size() <= 20) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        svg << "<circle cx=\"" << fixed(px(s.x[i])) << "\" cy=\"" << fixed(py(s.y[i])) << "\" r=\"3\" fill=\""
            << color << "\"/>\n";
      }
    }
    const double ly = top + 14 + 18.0 * static_cast<double>(k);
    svg << "<line x1=\"" << fixed(left + pw + 12) << "\" y1=\"" << fixed(ly) << "\" x2=\"" << fixed(left + pw + 32)
        << "\" y2=\"" << fixed(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << fixed(left + pw + 38) << "\" y=\"" << fixed(ly + 4) << "\">" << xml_escape(s.label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::string> emit_plots(const std::vector<std::string>& csv_paths, const std::string& out_dir) {
  if (csv_paths.empty()) throw SchemaError("no CSV files to plot");
  // Group the convergence curves by scenario; one line per agent and seed.
  std::map<std::string, std::vector<Series>> convergence;
  std::vector<std::pair<std::string, Table>> summaries;
  for (const auto& path : csv_paths) {
    Table t = read_csv(path);
    if (t.column("final_mean_s") >= 0) {
      require_columns(t, summary_columns(), path);
      summaries.emplace_back(path, std::move(t));
      continue;
    }
    require_columns(t, metrics_columns(), path);
    const int c_scn = t.column("scenario_id");
    const int c_agent = t.column("agent");
    const int c_seed = t.column("seed");
    const int c_slot = t.column("slot");
    const int c_ma = t.column("ma_cost_s");
    std::map<std::string, Series> by_label;
    std::map<std::string, std::string> scenario_of;
    for (const auto& row : t.rows) {
      const std::string label = row[c_agent] + " s" + row[c_seed] + " " + row[c_scn];
      auto& s = by_label[label];
      s.label = row[c_agent] + " s" + row[c_seed];
      s.x.push_back(std::stod(row[c_slot]));
      s.y.push_back(std::stod(row[c_ma]));
      scenario_of[label] = row[c_scn];
    }
    for (auto& [label, s] : by_label) {
      // Curves from different sweep points of one scenario share a chart.
      std::string scenario = scenario_of[label];
      for (auto axis : {SweepAxis::users, SweepAxis::contents, SweepAxis::cache, SweepAxis::epsilon, SweepAxis::gamma}) {
        const auto cut = scenario.rfind("_" + axis_name(axis) + "-");
        if (cut != std::string::npos) {
          s.label += " " + scenario.substr(cut + 1);
          scenario = scenario.substr(0, cut);
          break;
        }
      }
      convergence[scenario].push_back(std::move(s));
    }
  }

  fs::create_directories(out_dir);
  std::vector<std::string> written;
  auto write = [&](const std::string& name, const std::string& content) {
    const auto path = (fs::path(out_dir) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
    written.push_back(path);
  };
  for (auto& [scenario, series] : convergence) {
    std::sort(series.begin(), series.end(), [](const Series& a, const Series& b) { return a.label < b.label; });
    write(sanitize(scenario) + "_convergence.svg",
          render_line_svg("Moving-average delay, " + scenario, "slot", "delay (s)", series));
  }
  for (const auto& [path, t] : summaries) {
    const int c_axis = t.column("sweep_axis");
    const int c_value = t.column("sweep_value");
    const int c_agent = t.column("agent");
    const int c_mean = t.column("final_mean_s");
    const int c_hit = t.column("hit_ratio");
    const std::string axis = t.rows.front()[c_axis];
    if (axis == "none") continue;
    // Mean over seeds per (agent, sweep value).
    std::map<std::string, std::map<double, std::pair<double, double>>> delay;
    std::map<std::string, std::map<double, std::pair<double, double>>> hits;
    for (const auto& row : t.rows) {
      const double v = std::stod(row[c_value]);
      auto& d = delay[row[c_agent]][v];
      d.first += std::stod(row[c_mean]);
      d.second += 1;
      auto& h = hits[row[c_agent]][v];
      h.first += std::stod(row[c_hit]);
      h.second += 1;
    }
    auto to_series = [](const std::map<std::string, std::map<double, std::pair<double, double>>>& data) {
      std::vector<Series> out;
      for (const auto& [agent, points] : data) {
        Series s{agent, {}, {}};
        for (const auto& [x, acc] : points) {
          s.x.push_back(x);
          s.y.push_back(acc.first / acc.second);
        }
        out.push_back(std::move(s));
      }
      return out;
    };
    const std::string stem = sanitize(fs::path(path).parent_path().filename().string());
    const std::string prefix = (stem.empty() ? std::string("summary") : stem) + "_" + axis;
    write(prefix + "_delay.svg", render_line_svg("Final-window delay vs " + axis, axis, "delay (s)", to_series(delay)));
    write(prefix + "_hit_ratio.svg", render_line_svg("Cache hit ratio vs " + axis, axis, "hit ratio", to_series(hits)));
  }
  return written;
}

}  // namespace uavcache::harness
