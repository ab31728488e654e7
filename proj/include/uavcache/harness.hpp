#pragma once

// Experiment plumbing: scenario configuration files, paired multi-agent
// runs, per-slot CSV metrics, summaries and SVG plots.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "uavcache/agents.hpp"
#include "uavcache/fa.hpp"

namespace uavcache::harness {

/// A malformed configuration file. `line` is 1-based, 0 when the problem is
/// not tied to a line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

enum class SweepAxis { none, users, contents, cache, epsilon, gamma };

std::string axis_name(SweepAxis axis);
SweepAxis axis_from_name(const std::string& name);

struct ScenarioConfig {
  std::string scenario_id = "default";
  mdp::EnvConfig env;
  std::vector<std::string> agents{"greedy", "ql", "fixed", "random"};
  agents::QHyper ql;
  agents::FaHyper fa;
  long slots = 100000;
  std::vector<std::uint64_t> seeds{1};
  SweepAxis axis = SweepAxis::none;
  std::vector<double> sweep_values;
  std::size_t ma_window = 1000;
  std::size_t final_window = 10000;

  /// Throws std::invalid_argument naming the violated invariant, checking
  /// every sweep point.
  void validate() const;
};

inline const std::vector<std::string>& known_agents() {
  static const std::vector<std::string> names{"greedy", "ql", "fa", "fixed", "random"};
  return names;
}

/// Parses `key = value` lines under `[section]` headers. `#` and `;` start
/// comments. Keys before the first header may use any unambiguous key name
/// or short alias (N, M, Z, seed, ...). Unknown keys, duplicates and bad
/// values raise ConfigError with the line number. The result is validated.
ScenarioConfig parse_config(std::istream& in, const std::string& source = "<config>");
ScenarioConfig load_config(const std::string& path);

/// Every effective setting in the file format, suitable for logging and for
/// feeding back into parse_config.
std::string render_config(const ScenarioConfig& config);

/// The configuration of one sweep point.
ScenarioConfig at_sweep_point(const ScenarioConfig& config, double value);

/// Builds a named agent for an environment built from `config`.
std::unique_ptr<agents::Agent> make_agent(const std::string& name, const ScenarioConfig& config,
                                          std::uint64_t seed);

/// Seed of an agent's private randomness; the environment uses the run seed
/// directly so every agent sees the same request and geometry streams.
std::uint64_t agent_seed(std::uint64_t seed, const std::string& agent);

struct RunSummary {
  std::string scenario_id;
  std::string agent;
  std::uint64_t seed = 0;
  double sweep_value = 0.0;
  long slots = 0;
  double final_mean = 0.0;
  double hit_ratio = 0.0;
  long hits = 0;
  long misses = 0;
  std::uint64_t request_hash = 0;
  std::size_t explored_actions = 0;
};

/// Per-slot CSV columns.
const std::vector<std::string>& metrics_columns();
void write_metrics_header(std::ostream& out);
void write_metrics_rows(std::ostream& out, const std::string& scenario_id, const std::string& agent,
                        std::uint64_t seed, const agents::DelayTrace& trace);

const std::vector<std::string>& summary_columns();
void write_summary(std::ostream& out, const std::vector<RunSummary>& rows, SweepAxis axis);

/// One full run of `agent` on a fresh environment.
RunSummary run_single(const ScenarioConfig& config, const std::string& agent, std::uint64_t seed,
                      agents::DelayTrace* trace_out = nullptr);

/// Every (sweep value, agent, seed) run. Per-slot metrics go to
/// `<out_dir>/<scenario>[_<axis>-<value>]_<agent>_s<seed>.csv` and the
/// summary to `<out_dir>/summary.csv`, rewritten after every run so a failure
/// leaves the finished runs on disk. An empty `out_dir` writes nothing.
std::vector<RunSummary> run_experiment(const ScenarioConfig& config, const std::string& out_dir,
                                       std::ostream* log = nullptr);

// --- plots ----------------------------------------------------------------

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Deterministic SVG line chart.
std::string render_line_svg(const std::string& title, const std::string& x_label,
                            const std::string& y_label, const std::vector<Series>& series);

/// Thrown when a CSV lacks the expected columns or rows.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Renders plots from metrics CSVs (moving-average delay versus slot) and
/// summary CSVs (final delay and hit ratio versus the sweep value). Returns
/// the written file paths.
std::vector<std::string> emit_plots(const std::vector<std::string>& csv_paths, const std::string& out_dir);

}  // namespace uavcache::harness
