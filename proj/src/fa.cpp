#include "uavcache/fa.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace uavcache::agents {

namespace {

constexpr const char* kNetFormat = "uavcache-mlp";
constexpr int kNetVersion = 1;
constexpr double kBnEps = 1e-5;

// Relaxed cost with everything that does not depend on the action
// precomputed. Must agree with mdp::relaxed_cost.
class RelaxedObjective {
 public:
  RelaxedObjective(const NetworkState& state, const mdp::SlotContext& ctx, const mdp::EnvConfig& config)
      : ctx_(ctx), config_(config) {
    const std::size_t m_count = state.num_contents();
    uncached_.resize(m_count);
    requested_.assign(m_count, 0.0);
    for (std::size_t m = 0; m < m_count; ++m) uncached_[m] = 1.0 - state.cache.cached[m];
    for (std::size_t n = 0; n < state.num_users(); ++n) {
      if (!state.pending(n)) continue;
      requested_[state.requests.pending[n]] += 1.0;
      waiting_.push_back(static_cast<int>(n));
    }
    for (std::size_t m = 0; m < m_count; ++m) requested_[m] *= uncached_[m];
    groups_ = mdp::form_groups(waiting_, ctx.user_distance);
  }

  const std::vector<mdp::Group>& groups() const { return groups_; }

  double operator()(const RelaxedAction& a) const {
    double queued = 0.0;
    for (std::size_t m = 0; m < uncached_.size(); ++m) {
      queued += std::min(requested_[m] + a.proactive[m] * uncached_[m], 1.0);
    }
    const double backhaul =
        queued > 0.0 ? config_.content_bits * queued * queued / ctx_.backhaul_rate : 0.0;

    double served = 0.0;
    double scheduling = 0.0;
    for (int n : waiting_) {
      served += a.schedule[n];
      scheduling += (1.0 - a.schedule[n]) * config_.slot_length;
    }
    double access = 0.0;
    if (served > 0.0) {
      const double p_group = ctx_.access.uav_power_w / std::max(1.0, served / 2.0);
      const double scale = config_.content_bits * served / (2.0 * ctx_.access.bandwidth_hz);
      for (std::size_t g = 0; g < groups_.size(); ++g) {
        const auto& grp = groups_[g];
        if (grp.far == mdp::kSolo) {
          const double snr = channel::solo_snr(p_group, ctx_.user_loss_db[grp.near], ctx_.access.noise_w);
          access += a.schedule[grp.near] * scale / std::log2(1.0 + snr);
          continue;
        }
        const double h = std::clamp(a.power[g], 1e-6, 0.5);
        const auto sinr = channel::noma_sinr(p_group, h, ctx_.user_loss_db[grp.near],
                                             ctx_.user_loss_db[grp.far], ctx_.access.noise_w);
        access += a.schedule[grp.near] * scale / std::log2(1.0 + sinr.near);
        access += a.schedule[grp.far] * scale / std::log2(1.0 + sinr.far);
      }
    }
    return backhaul + (access + scheduling);
  }

 private:
  const mdp::SlotContext& ctx_;
  const mdp::EnvConfig& config_;
  std::vector<double> uncached_;
  std::vector<double> requested_;
  std::vector<int> waiting_;
  std::vector<mdp::Group> groups_;
};

// Pointer to coordinate i of the flattened (proactive, schedule, power) vector.
double& coord(RelaxedAction& a, std::size_t i) {
  if (i < a.proactive.size()) return a.proactive[i];
  i -= a.proactive.size();
  if (i < a.schedule.size()) return a.schedule[i];
  return a.power[i - a.schedule.size()];
}

double coord(const RelaxedAction& a, std::size_t i) { return coord(const_cast<RelaxedAction&>(a), i); }

std::size_t dimension(const RelaxedAction& a) {
  return a.proactive.size() + a.schedule.size() + a.power.size();
}

std::uint8_t snap_level(const std::vector<double>& levels, double h) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < levels.size(); ++i) {
    // `<=` resolves an exact midpoint toward the higher level.
    if (std::abs(levels[i] - h) <= std::abs(levels[best] - h)) best = i;
  }
  return static_cast<std::uint8_t>(best);
}

Eigen::MatrixXd he_init(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / cols));
  Eigen::MatrixXd w(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) w(i, j) = dist(rng);
  }
  return w;
}

nlohmann::json to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.cols());
    for (int j = 0; j < m.cols(); ++j) row[j] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::MatrixXd matrix_from(const nlohmann::json& j, int rows, int cols) {
  if (static_cast<int>(j.size()) != rows) throw std::runtime_error("network file: row count mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const auto row = j[i].get<std::vector<double>>();
    if (static_cast<int>(row.size()) != cols) throw std::runtime_error("network file: column count mismatch");
    for (int k = 0; k < cols; ++k) m(i, k) = row[k];
  }
  return m;
}

Eigen::VectorXd vector_from(const nlohmann::json& j, int size) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<int>(v.size()) != size) throw std::runtime_error("network file: vector size mismatch");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), size);
}

}  // namespace

// --- relaxed search -------------------------------------------------------

RelaxedBox RelaxedBox::for_state(const NetworkState& state, const mdp::EnvConfig& config) {
  const std::size_t m_count = state.num_contents();
  const std::size_t n_count = state.num_users();
  const std::size_t groups = static_cast<std::size_t>(config.power_block_size());
  RelaxedBox box;
  box.lower = {std::vector<double>(m_count, 0.0), std::vector<double>(n_count, 0.0),
               std::vector<double>(groups, config.power_levels.front())};
  box.upper = {std::vector<double>(m_count, 1.0), std::vector<double>(n_count, 0.0),
               std::vector<double>(groups, config.power_levels.back())};
  for (std::size_t n = 0; n < n_count; ++n) {
    if (state.forced(n, config.max_wait)) {
      box.lower.schedule[n] = 1.0;
      box.upper.schedule[n] = 1.0;
    } else if (state.pending(n)) {
      box.upper.schedule[n] = 1.0;
    }
  }
  return box;
}

void RelaxedBox::clamp(RelaxedAction& action) const {
  for (std::size_t i = 0; i < dimension(action); ++i) {
    coord(action, i) = std::clamp(coord(action, i), coord(lower, i), coord(upper, i));
  }
}

bool RelaxedBox::contains(const RelaxedAction& action) const {
  if (action.proactive.size() != lower.proactive.size() || action.schedule.size() != lower.schedule.size() ||
      action.power.size() != lower.power.size()) {
    return false;
  }
  for (std::size_t i = 0; i < dimension(action); ++i) {
    const double v = coord(action, i);
    if (!(v >= coord(lower, i) && v <= coord(upper, i))) return false;
  }
  return true;
}

RelaxedAction random_relaxed_action(const RelaxedBox& box, Rng& rng) {
  RelaxedAction a = box.lower;
  for (std::size_t i = 0; i < dimension(a); ++i) {
    const double lo = coord(box.lower, i);
    const double hi = coord(box.upper, i);
    coord(a, i) = lo + (hi - lo) * demand::uniform01(rng);
  }
  return a;
}

SearchResult sgd_action_search(const NetworkState& state, const mdp::SlotContext& ctx,
                               const mdp::EnvConfig& config, const RelaxedAction& start,
                               const SearchParams& params) {
  const auto box = RelaxedBox::for_state(state, config);
  const RelaxedObjective loss(state, ctx, config);

  // Coordinates the loss can depend on: all caching entries, optional users,
  // and the coefficient of every two-user group.
  std::vector<std::size_t> active;
  const std::size_t m_count = start.proactive.size();
  const std::size_t n_count = start.schedule.size();
  for (std::size_t i = 0; i < m_count; ++i) active.push_back(i);
  for (std::size_t n = 0; n < n_count; ++n) {
    if (box.lower.schedule[n] < box.upper.schedule[n]) active.push_back(m_count + n);
  }
  for (std::size_t g = 0; g < loss.groups().size(); ++g) {
    if (loss.groups()[g].far != mdp::kSolo) active.push_back(m_count + n_count + g);
  }

  RelaxedAction x = start;
  box.clamp(x);
  const double initial = loss(x);
  if (!std::isfinite(initial)) throw std::runtime_error("sgd_action_search: initial loss is not finite");
  SearchResult best{x, initial, initial};

  std::vector<double> grad(active.size());
  for (int k = 1; k <= params.iterations; ++k) {
    for (std::size_t j = 0; j < active.size(); ++j) {
      double& v = coord(x, active[j]);
      const double saved = v;
      const double lo = std::max(saved - params.perturbation, coord(box.lower, active[j]));
      const double hi = std::min(saved + params.perturbation, coord(box.upper, active[j]));
      v = hi;
      const double up = loss(x);
      v = lo;
      const double down = loss(x);
      v = saved;
      grad[j] = hi > lo ? (up - down) / (hi - lo) : 0.0;
    }
    // Normalized (sign) steps: the cost terms differ by orders of magnitude
    // across blocks, so raw gradients would leave the small ones frozen.
    const double step = params.step_size / std::sqrt(static_cast<double>(k));
    for (std::size_t j = 0; j < active.size(); ++j) {
      if (grad[j] > 0.0) {
        coord(x, active[j]) -= step;
      } else if (grad[j] < 0.0) {
        coord(x, active[j]) += step;
      }
    }
    box.clamp(x);
    const double value = loss(x);
    if (!std::isfinite(value)) {
      throw std::runtime_error("sgd_action_search: loss became non-finite at iteration " + std::to_string(k));
    }
    if (value < best.loss) {
      best.loss = value;
      best.action = x;
    }
  }
  return best;
}

ActionVector project_action(const RelaxedAction& relaxed, const NetworkState& state,
                            const mdp::EnvConfig& config) {
  ActionVector action;
  const std::size_t m_count = state.num_contents();
  std::vector<int> order(m_count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return relaxed.proactive[a] > relaxed.proactive[b]; });
  action.proactive.assign(m_count, 0);
  for (std::size_t i = 0; i < m_count && static_cast<int>(i) < config.cache_capacity; ++i) {
    if (relaxed.proactive[order[i]] > 0.0) action.proactive[order[i]] = 1;
  }

  std::vector<int> scheduled;
  action.schedule.assign(state.num_users(), 0);
  for (std::size_t n = 0; n < state.num_users(); ++n) {
    const bool chosen = state.pending(n) && relaxed.schedule[n] >= 0.5;
    if (chosen || state.forced(n, config.max_wait)) {
      action.schedule[n] = 1;
      scheduled.push_back(static_cast<int>(n));
    }
  }
  action.power_levels.resize((scheduled.size() + 1) / 2);
  for (std::size_t g = 0; g < action.power_levels.size(); ++g) {
    const double h = g < relaxed.power.size() ? relaxed.power[g] : config.power_levels.front();
    action.power_levels[g] = snap_level(config.power_levels, h);
  }
  return action;
}

// --- memory ---------------------------------------------------------------

MemoryMatrix::MemoryMatrix(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("MemoryMatrix: capacity must be positive");
}

void MemoryMatrix::store(Eigen::VectorXd features, Eigen::VectorXd target) {
  entries_.emplace_back(std::move(features), std::move(target));
  if (entries_.size() > capacity_) entries_.pop_front();
}

Eigen::VectorXd state_features(const NetworkState& state) {
  const auto m_count = static_cast<Eigen::Index>(state.num_contents());
  Eigen::VectorXd x(m_count + static_cast<Eigen::Index>(state.num_users()));
  for (Eigen::Index m = 0; m < m_count; ++m) x(m) = state.cache.cached[m];
  for (std::size_t n = 0; n < state.num_users(); ++n) x(m_count + n) = state.pending(n) ? 1.0 : 0.0;
  return x;
}

Eigen::VectorXd action_target(const ActionVector& action, const mdp::EnvConfig& config) {
  const auto m_count = static_cast<Eigen::Index>(action.proactive.size());
  const auto n_count = static_cast<Eigen::Index>(action.schedule.size());
  const auto groups = static_cast<Eigen::Index>(config.power_block_size());
  Eigen::VectorXd y(m_count + n_count + groups);
  for (Eigen::Index m = 0; m < m_count; ++m) y(m) = action.proactive[m];
  for (Eigen::Index n = 0; n < n_count; ++n) y(m_count + n) = action.schedule[n];
  for (Eigen::Index g = 0; g < groups; ++g) {
    y(m_count + n_count + g) = g < static_cast<Eigen::Index>(action.power_levels.size())
                                   ? config.power_levels[action.power_levels[g]]
                                   : config.power_levels.front();
  }
  return y;
}

RelaxedAction output_to_relaxed(const Eigen::VectorXd& output, const mdp::EnvConfig& config) {
  const auto m_count = static_cast<std::size_t>(config.num_contents);
  const auto n_count = static_cast<std::size_t>(config.num_users);
  const auto groups = static_cast<std::size_t>(config.power_block_size());
  if (static_cast<std::size_t>(output.size()) != m_count + n_count + groups) {
    throw std::invalid_argument("output_to_relaxed: output size does not match the configuration");
  }
  RelaxedAction a;
  a.proactive.assign(output.data(), output.data() + m_count);
  a.schedule.assign(output.data() + m_count, output.data() + m_count + n_count);
  a.power.assign(output.data() + m_count + n_count, output.data() + output.size());
  return a;
}

// --- network --------------------------------------------------------------

NeuralApproximator::NeuralApproximator(int input_dim, int output_dim, std::uint64_t seed)
    : input_dim_(input_dim), output_dim_(output_dim), seed_(seed) {
  if (input_dim < 1 || output_dim < 1) throw std::invalid_argument("NeuralApproximator: empty layer");
  reset();
}

NeuralApproximator NeuralApproximator::for_config(const mdp::EnvConfig& config, std::uint64_t seed) {
  return NeuralApproximator(config.num_contents + config.num_users,
                            config.num_contents + config.num_users + config.power_block_size(), seed);
}

void NeuralApproximator::reset() {
  Rng rng(demand::derive_seed(seed_, resets_++));
  const int h1 = 4 * input_dim_;
  const int h2 = 2 * input_dim_;
  auto dense = [&](int rows, int cols) {
    return Dense{he_init(rows, cols, rng), Eigen::VectorXd::Zero(rows), Eigen::MatrixXd::Zero(rows, cols),
                 Eigen::VectorXd::Zero(rows)};
  };
  auto norm = [](int width) {
    return Norm{Eigen::VectorXd::Ones(width),  Eigen::VectorXd::Zero(width), Eigen::VectorXd::Zero(width),
                Eigen::VectorXd::Ones(width),  Eigen::VectorXd::Zero(width), Eigen::VectorXd::Zero(width)};
  };
  l1_ = dense(h1, input_dim_);
  l2_ = dense(h2, h1);
  out_ = dense(output_dim_, h2);
  n1_ = norm(h1);
  n2_ = norm(h2);
  rounds_ = 0;
}

Eigen::MatrixXd NeuralApproximator::forward_eval(const Eigen::MatrixXd& x) const {
  auto normalize = [](const Eigen::MatrixXd& z, const Norm& n) {
    const Eigen::VectorXd inv = (n.running_var.array() + kBnEps).rsqrt();
    Eigen::MatrixXd y = ((z.colwise() - n.running_mean).array().colwise() * (inv.array() * n.gamma.array())).matrix();
    return (y.colwise() + n.beta).eval();
  };
  Eigen::MatrixXd a1 = normalize((l1_.w * x).colwise() + l1_.b, n1_).cwiseMax(0.0);
  Eigen::MatrixXd a2 = normalize((l2_.w * a1).colwise() + l2_.b, n2_).cwiseMax(0.0);
  return (out_.w * a2).colwise() + out_.b;
}

Eigen::VectorXd NeuralApproximator::predict(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim_) throw std::invalid_argument("predict: input size mismatch");
  return forward_eval(x);
}

double NeuralApproximator::loss(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) const {
  const Eigen::MatrixXd diff = forward_eval(inputs) - targets;
  return diff.squaredNorm() / static_cast<double>(diff.size());
}

double NeuralApproximator::train_batch(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                                       const TrainParams& params) {
  // Forward in training mode, keeping what the backward pass needs.
  struct NormCache {
    Eigen::MatrixXd xhat;
    Eigen::VectorXd inv_std;
  };
  auto bn_forward = [&](const Eigen::MatrixXd& z, Norm& n, NormCache& c) {
    const Eigen::VectorXd mean = z.rowwise().mean();
    const Eigen::MatrixXd centered = z.colwise() - mean;
    const Eigen::VectorXd var = centered.array().square().rowwise().mean();
    c.inv_std = (var.array() + kBnEps).rsqrt();
    c.xhat = (centered.array().colwise() * c.inv_std.array()).matrix();
    n.running_mean = (1.0 - params.bn_momentum) * n.running_mean + params.bn_momentum * mean;
    n.running_var = (1.0 - params.bn_momentum) * n.running_var + params.bn_momentum * var;
    Eigen::MatrixXd y = (c.xhat.array().colwise() * n.gamma.array()).matrix();
    return (y.colwise() + n.beta).eval();
  };
  NormCache c1, c2;
  const Eigen::MatrixXd y1 = bn_forward((l1_.w * inputs).colwise() + l1_.b, n1_, c1);
  const Eigen::MatrixXd a1 = y1.cwiseMax(0.0);
  const Eigen::MatrixXd y2 = bn_forward((l2_.w * a1).colwise() + l2_.b, n2_, c2);
  const Eigen::MatrixXd a2 = y2.cwiseMax(0.0);
  const Eigen::MatrixXd out = (out_.w * a2).colwise() + out_.b;
  const Eigen::MatrixXd diff = out - targets;
  const double loss_value = diff.squaredNorm() / static_cast<double>(diff.size());

  // Backward.
  const Eigen::MatrixXd d_out = diff * (2.0 / static_cast<double>(diff.size()));
  Eigen::MatrixXd g_w3 = d_out * a2.transpose();
  Eigen::VectorXd g_b3 = d_out.rowwise().sum();
  Eigen::MatrixXd d_a2 = out_.w.transpose() * d_out;
  Eigen::MatrixXd d_y2 = (y2.array() > 0.0).select(d_a2, 0.0);

  auto bn_backward = [&](const Eigen::MatrixXd& d_y, const Norm& n, const NormCache& c, Eigen::VectorXd& g_gamma,
                         Eigen::VectorXd& g_beta) {
    g_gamma = (d_y.array() * c.xhat.array()).rowwise().sum();
    g_beta = d_y.rowwise().sum();
    const Eigen::MatrixXd d_xhat = (d_y.array().colwise() * n.gamma.array()).matrix();
    const Eigen::VectorXd mean_dx = d_xhat.rowwise().mean();
    const Eigen::VectorXd mean_dx_xhat = (d_xhat.array() * c.xhat.array()).rowwise().mean();
    Eigen::MatrixXd d_z = d_xhat.colwise() - mean_dx;
    d_z -= (c.xhat.array().colwise() * mean_dx_xhat.array()).matrix();
    return (d_z.array().colwise() * c.inv_std.array()).matrix().eval();
  };
  Eigen::VectorXd g_gamma2, g_beta2, g_gamma1, g_beta1;
  const Eigen::MatrixXd d_z2 = bn_backward(d_y2, n2_, c2, g_gamma2, g_beta2);
  Eigen::MatrixXd g_w2 = d_z2 * a1.transpose();
  Eigen::VectorXd g_b2 = d_z2.rowwise().sum();
  const Eigen::MatrixXd d_a1 = l2_.w.transpose() * d_z2;
  const Eigen::MatrixXd d_y1 = (y1.array() > 0.0).select(d_a1, 0.0);
  const Eigen::MatrixXd d_z1 = bn_backward(d_y1, n1_, c1, g_gamma1, g_beta1);
  Eigen::MatrixXd g_w1 = d_z1 * inputs.transpose();
  Eigen::VectorXd g_b1 = d_z1.rowwise().sum();

  // Clip the global gradient norm.
  const double norm_sq = g_w1.squaredNorm() + g_b1.squaredNorm() + g_w2.squaredNorm() + g_b2.squaredNorm() +
                         g_w3.squaredNorm() + g_b3.squaredNorm() + g_gamma1.squaredNorm() +
                         g_beta1.squaredNorm() + g_gamma2.squaredNorm() + g_beta2.squaredNorm();
  const double norm = std::sqrt(norm_sq);
  const double scale = norm > params.clip_norm ? params.clip_norm / norm : 1.0;

  auto update = [&](auto& param, auto& velocity, const auto& grad) {
    velocity = params.momentum * velocity - params.learning_rate * scale * grad;
    param += velocity;
  };
  update(l1_.w, l1_.vw, g_w1);
  update(l1_.b, l1_.vb, g_b1);
  update(l2_.w, l2_.vw, g_w2);
  update(l2_.b, l2_.vb, g_b2);
  update(out_.w, out_.vw, g_w3);
  update(out_.b, out_.vb, g_b3);
  update(n1_.gamma, n1_.vgamma, g_gamma1);
  update(n1_.beta, n1_.vbeta, g_beta1);
  update(n2_.gamma, n2_.vgamma, g_gamma2);
  update(n2_.beta, n2_.vbeta, g_beta2);
  return loss_value;
}

double NeuralApproximator::train(const MemoryMatrix& memory, const TrainParams& params, Rng& rng) {
  if (params.batch_size < 1) throw std::invalid_argument("train: batch size must be positive");
  if (memory.size() < static_cast<std::size_t>(params.batch_size)) {
    throw std::invalid_argument("train: memory holds " + std::to_string(memory.size()) +
                                " mappings, fewer than the batch size " + std::to_string(params.batch_size));
  }
  Eigen::MatrixXd inputs(input_dim_, params.batch_size);
  Eigen::MatrixXd targets(output_dim_, params.batch_size);
  double last = 0.0;
  for (int it = 0; it < params.iterations; ++it) {
    for (int b = 0; b < params.batch_size; ++b) {
      const auto i = std::min(memory.size() - 1,
                              static_cast<std::size_t>(demand::uniform01(rng) * static_cast<double>(memory.size())));
      inputs.col(b) = memory.features(i);
      targets.col(b) = memory.target(i);
    }
    last = train_batch(inputs, targets, params);
  }
  ++rounds_;
  return last;
}

bool NeuralApproximator::parameters_finite() const {
  return l1_.w.allFinite() && l1_.b.allFinite() && l2_.w.allFinite() && l2_.b.allFinite() &&
         out_.w.allFinite() && out_.b.allFinite() && n1_.gamma.allFinite() && n1_.beta.allFinite() &&
         n2_.gamma.allFinite() && n2_.beta.allFinite() && n1_.running_var.allFinite() &&
         n2_.running_var.allFinite();
}

void NeuralApproximator::save(const std::string& path) const {
  nlohmann::json j;
  j["format"] = kNetFormat;
  j["version"] = kNetVersion;
  j["input_dim"] = input_dim_;
  j["output_dim"] = output_dim_;
  j["seed"] = seed_;
  j["resets"] = resets_;
  j["trained_rounds"] = rounds_;
  auto dense = [](const Dense& d) { return nlohmann::json{{"weight", to_json(d.w)}, {"bias", to_json(d.b)}}; };
  auto norm = [](const Norm& n) {
    return nlohmann::json{{"scale", to_json(n.gamma)},
                          {"shift", to_json(n.beta)},
                          {"running_mean", to_json(n.running_mean)},
                          {"running_var", to_json(n.running_var)}};
  };
  j["layers"] = {dense(l1_), dense(l2_), dense(out_)};
  j["norms"] = {norm(n1_), norm(n2_)};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write network to " + path);
  out << j.dump() << '\n';
}

NeuralApproximator NeuralApproximator::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read network from " + path);
  const auto j = nlohmann::json::parse(in);
  if (j.value("format", "") != kNetFormat) throw std::runtime_error(path + " is not a network file");
  if (j.value("version", 0) != kNetVersion) {
    throw std::runtime_error(path + ": unsupported network version " + std::to_string(j.value("version", 0)));
  }
  NeuralApproximator net(j.at("input_dim").get<int>(), j.at("output_dim").get<int>(),
                         j.at("seed").get<std::uint64_t>());
  net.resets_ = j.at("resets").get<std::uint64_t>();
  net.rounds_ = j.at("trained_rounds").get<int>();
  auto read_dense = [](const nlohmann::json& d, Dense& layer) {
    layer.w = matrix_from(d.at("weight"), static_cast<int>(layer.w.rows()), static_cast<int>(layer.w.cols()));
    layer.b = vector_from(d.at("bias"), static_cast<int>(layer.b.size()));
  };
  auto read_norm = [](const nlohmann::json& d, Norm& n) {
    const int w = static_cast<int>(n.gamma.size());
    n.gamma = vector_from(d.at("scale"), w);
    n.beta = vector_from(d.at("shift"), w);
    n.running_mean = vector_from(d.at("running_mean"), w);
    n.running_var = vector_from(d.at("running_var"), w);
  };
  const auto& layers = j.at("layers");
  const auto& norms = j.at("norms");
  if (layers.size() != 3 || norms.size() != 2) throw std::runtime_error(path + ": unexpected layer count");
  read_dense(layers[0], net.l1_);
  read_dense(layers[1], net.l2_);
  read_dense(layers[2], net.out_);
  read_norm(norms[0], net.n1_);
  read_norm(norms[1], net.n2_);
  return net;
}

// --- agent ----------------------------------------------------------------

void FaHyper::validate() const {
  if (search.iterations < 0) throw std::invalid_argument("search iterations must be non-negative");
  if (!(search.step_size > 0.0)) throw std::invalid_argument("search step size must be positive");
  if (!(search.perturbation > 0.0)) throw std::invalid_argument("search perturbation must be positive");
  if (train.batch_size < 1) throw std::invalid_argument("training batch size must be positive");
  if (train.iterations < 0) throw std::invalid_argument("training iterations must be non-negative");
  if (!(train.learning_rate > 0.0)) throw std::invalid_argument("training learning rate must be positive");
  if (!(train.clip_norm > 0.0)) throw std::invalid_argument("gradient clip threshold must be positive");
  if (memory_capacity == 0) throw std::invalid_argument("memory capacity must be positive");
  if (reset_period < 1) throw std::invalid_argument("reset period must be at least 1 slot");
}

FaAgent::FaAgent(const mdp::EnvConfig& config, FaHyper hyper, std::uint64_t seed)
    : hyper_(hyper),
      net_(NeuralApproximator::for_config(config, demand::derive_seed(seed, 1))),
      memory_(hyper.memory_capacity),
      rng_(demand::derive_seed(seed, 2)) {
  hyper_.validate();
}

ActionVector FaAgent::infer_action(const NetworkState& state, const mdp::EnvConfig& config) const {
  return project_action(output_to_relaxed(net_.predict(state_features(state)), config), state, config);
}

ActionVector FaAgent::act(const Environment& env) {
  ++t_;
  const auto& state = env.state();
  const auto& config = env.config();
  const auto box = RelaxedBox::for_state(state, config);
  const auto start = random_relaxed_action(box, rng_);
  const auto found = sgd_action_search(state, env.context(), config, start, hyper_.search);
  const auto searched = project_action(found.action, state, config);
  memory_.store(state_features(state), action_target(searched, config));
  return net_.trained_rounds() > 0 ? infer_action(state, config) : searched;
}

void FaAgent::observe(const NetworkState&, const ActionVector&, const mdp::StepOutcome&) {
  if (t_ % hyper_.reset_period != 0) return;
  if (memory_.size() < static_cast<std::size_t>(hyper_.train.batch_size)) return;
  net_.reset();
  net_.train(memory_, hyper_.train, rng_);
  if (!net_.parameters_finite()) {
    throw std::runtime_error("network parameters became non-finite after training at slot " + std::to_string(t_));
  }
}

std::pair<NeuralApproximator, DelayTrace> run_fa(Environment& env, const FaHyper& hyper, long slots,
                                                 std::uint64_t seed, std::size_t ma_window) {
  FaAgent agent(env.config(), hyper, seed);
  auto trace = run_agent(env, agent, slots, ma_window);
  return {agent.network(), std::move(trace)};
}

}  // namespace uavcache::agents
