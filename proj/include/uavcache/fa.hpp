#pragma once

// Function-approximation agent: a per-slot gradient search over the relaxed
// action, a FIFO memory of (state, searched action) pairs, and a small MLP
// that learns to imitate the searched actions.

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "uavcache/agents.hpp"

namespace uavcache::agents {

using mdp::RelaxedAction;

// --- relaxed search -------------------------------------------------------

struct SearchParams {
  int iterations = 200;
  double step_size = 0.05;      // decays as step_size / sqrt(k)
  double perturbation = 1e-3;   // central-difference half width
};

/// Lower/upper box of every relaxed coordinate for one state: idle users are
/// pinned to 0, users at the wait bound to 1, power coefficients to the
/// level range.
struct RelaxedBox {
  RelaxedAction lower;
  RelaxedAction upper;

  static RelaxedBox for_state(const NetworkState& state, const mdp::EnvConfig& config);
  void clamp(RelaxedAction& action) const;
  bool contains(const RelaxedAction& action) const;
};

/// Uniform point of the box.
RelaxedAction random_relaxed_action(const RelaxedBox& box, Rng& rng);

struct SearchResult {
  RelaxedAction action;
  double loss = 0.0;          // relaxed loss of `action`
  double initial_loss = 0.0;  // relaxed loss of the starting point
};

/// Projected gradient descent on the relaxed cost from `start`, with
/// gradients from central finite differences and steps normalized per
/// coordinate. Returns the best iterate. Throws std::runtime_error when the
/// loss stops being finite.
SearchResult sgd_action_search(const NetworkState& state, const mdp::SlotContext& ctx,
                               const mdp::EnvConfig& config, const RelaxedAction& start,
                               const SearchParams& params = {});

/// Rounds a relaxed action to a legal one: the Z largest positive caching
/// entries (ties to the lower index), users at or above 0.5 that are
/// pending plus every user at the wait bound, and each group's coefficient
/// snapped to the nearest level (ties upward). `relaxed.power` is read per
/// group in the order of mdp::form_groups over the scheduled users.
ActionVector project_action(const RelaxedAction& relaxed, const NetworkState& state,
                            const mdp::EnvConfig& config);

// --- memory ---------------------------------------------------------------

/// FIFO store of (state features, action target) pairs.
class MemoryMatrix {
 public:
  explicit MemoryMatrix(std::size_t capacity = 1024);

  void store(Eigen::VectorXd features, Eigen::VectorXd target);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Eigen::VectorXd& features(std::size_t i) const { return entries_[i].first; }
  const Eigen::VectorXd& target(std::size_t i) const { return entries_[i].second; }

 private:
  std::size_t capacity_;
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> entries_;
};

/// Network input: cache bits followed by per-user pending flags.
Eigen::VectorXd state_features(const NetworkState& state);

/// Supervision target of an action: caching bits, schedule bits, then the
/// coefficient of each of ceil(N/2) groups (the lowest level for unused
/// groups).
Eigen::VectorXd action_target(const ActionVector& action, const mdp::EnvConfig& config);

/// Relaxed action read back from a network output.
RelaxedAction output_to_relaxed(const Eigen::VectorXd& output, const mdp::EnvConfig& config);

// --- network --------------------------------------------------------------

struct TrainParams {
  double learning_rate = 0.1;
  double momentum = 0.9;
  int batch_size = 32;
  int iterations = 200;
  double clip_norm = 5.0;
  double bn_momentum = 0.1;
};

/// Two hidden ReLU layers of width 4(M+N) and 2(M+N), each with batch
/// normalization, and a linear output of size K = M + N + ceil(N/2).
class NeuralApproximator {
 public:
  NeuralApproximator(int input_dim, int output_dim, std::uint64_t seed);
  static NeuralApproximator for_config(const mdp::EnvConfig& config, std::uint64_t seed);

  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  int trained_rounds() const { return rounds_; }

  /// Fresh random weights and cleared normalization statistics.
  void reset();

  /// Inference pass (running normalization statistics).
  Eigen::VectorXd predict(const Eigen::VectorXd& x) const;

  /// Mean over the batch of the per-output mean squared error, inference mode.
  double loss(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) const;

  /// One clipped momentum-SGD step on a batch (columns are samples); returns
  /// the batch loss before the step.
  double train_batch(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                     const TrainParams& params);

  /// `params.iterations` steps on uniformly drawn mini-batches. Throws
  /// std::invalid_argument when the memory holds fewer than one batch.
  double train(const MemoryMatrix& memory, const TrainParams& params, Rng& rng);

  bool parameters_finite() const;

  void save(const std::string& path) const;
  static NeuralApproximator load(const std::string& path);

 private:
  struct Dense {
    Eigen::MatrixXd w;
    Eigen::VectorXd b;
    Eigen::MatrixXd vw;  // momentum buffers
    Eigen::VectorXd vb;
  };
  struct Norm {
    Eigen::VectorXd gamma, beta, running_mean, running_var;
    Eigen::VectorXd vgamma, vbeta;
  };

  Eigen::MatrixXd forward_eval(const Eigen::MatrixXd& x) const;

  int input_dim_;
  int output_dim_;
  std::uint64_t seed_;
  std::uint64_t resets_ = 0;
  int rounds_ = 0;
  Dense l1_, l2_, out_;
  Norm n1_, n2_;
};

// --- agent ----------------------------------------------------------------

struct FaHyper {
  SearchParams search;
  TrainParams train;
  std::size_t memory_capacity = 1024;
  long reset_period = 100;

  void validate() const;
};

class FaAgent : public Agent {
 public:
  FaAgent(const mdp::EnvConfig& config, FaHyper hyper, std::uint64_t seed);
  std::string name() const override { return "fa"; }
  ActionVector act(const Environment& env) override;
  void observe(const NetworkState& state, const ActionVector& action,
               const mdp::StepOutcome& outcome) override;

  /// Action chosen by the network for `state`, projected to legality.
  ActionVector infer_action(const NetworkState& state, const mdp::EnvConfig& config) const;

  const NeuralApproximator& network() const { return net_; }
  const MemoryMatrix& memory() const { return memory_; }
  long slots_seen() const { return t_; }

 private:
  FaHyper hyper_;
  NeuralApproximator net_;
  MemoryMatrix memory_;
  Rng rng_;
  long t_ = 0;
};

/// Runs the function-approximation agent for `slots` slots.
std::pair<NeuralApproximator, DelayTrace> run_fa(Environment& env, const FaHyper& hyper, long slots,
                                                 std::uint64_t seed, std::size_t ma_window = 1000);

}  // namespace uavcache::agents
