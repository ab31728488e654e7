#include "uavcache/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace uavcache::channel {

double distance_3d(const Position3D& a, const Position3D& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

Trajectory::Trajectory(Position3D center, double radius, double speed, double altitude,
                       double slot_length, double initial_phase)
    : center_(center),
      radius_(radius),
      speed_(speed),
      altitude_(altitude),
      slot_length_(slot_length),
      initial_phase_(initial_phase),
      phase_step_(0.0) {
  if (!(radius > 0.0) || !(speed >= 0.0) || !(altitude > 0.0) || !(slot_length > 0.0)) {
    throw std::invalid_argument("trajectory: radius, altitude and slot length must be positive, speed non-negative");
  }
  phase_step_ = speed_ * slot_length_ / radius_;
}

Position3D Trajectory::position_at(long slot) const {
  const double phase = initial_phase_ + phase_step_ * static_cast<double>(slot - 1);
  return {center_.x + radius_ * std::cos(phase), center_.y + radius_ * std::sin(phase), altitude_};
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
double linear_to_db(double linear) { return 10.0 * std::log10(linear); }
double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
double watts_to_dbm(double watts) { return 10.0 * std::log10(watts) + 30.0; }

double noise_power_watts(double density_dbm_hz, double bandwidth_hz) {
  if (!(bandwidth_hz > 0.0)) throw std::domain_error("noise bandwidth must be positive");
  return dbm_to_watts(density_dbm_hz + 10.0 * std::log10(bandwidth_hz));
}

double los_breakpoint(double altitude) {
  return std::max(294.05 * std::log10(altitude) - 432.94, 18.0);
}

double los_decay(double altitude) { return 233.98 * std::log10(altitude) - 0.95; }

double los_probability(double d3, double altitude) {
  if (!(altitude > 0.0) || !std::isfinite(d3)) {
    throw std::domain_error("los_probability: altitude must be positive and distance finite");
  }
  // Allow a rounding sliver below the altitude, e.g. a node directly beneath.
  if (d3 < altitude * (1.0 - 1e-12)) {
    throw std::domain_error("los_probability: 3D distance " + std::to_string(d3) +
                            " below altitude " + std::to_string(altitude));
  }
  const double r = std::sqrt(std::max(d3 * d3 - altitude * altitude, 0.0));
  const double d_o = los_breakpoint(altitude);
  if (r <= d_o) return 1.0;
  const double p1 = los_decay(altitude);
  const double ratio = d_o / r;
  const double p = ratio + std::exp(-r / p1) * (1.0 - ratio);
  return std::clamp(p, 0.0, 1.0);
}

namespace {

void check_loss_inputs(double d3, double altitude, double carrier_ghz) {
  if (!(d3 > 0.0) || !(altitude > 0.0) || !(carrier_ghz > 0.0)) {
    throw std::domain_error("path loss: distance, altitude and frequency must be positive");
  }
}

}  // namespace

double path_loss_los(double d3, double altitude, double carrier_ghz) {
  check_loss_inputs(d3, altitude, carrier_ghz);
  const double ld = std::log10(d3);
  return 22.25 * ld - 0.5 * std::log10(altitude) * ld + 20.0 * std::log10(carrier_ghz) + 30.9;
}

double path_loss_nlos(double d3, double altitude, double carrier_ghz) {
  check_loss_inputs(d3, altitude, carrier_ghz);
  const double ld = std::log10(d3);
  return 43.2 * ld - 7.6 * std::log10(altitude) * ld + 20.0 * std::log10(carrier_ghz) + 32.4;
}

double mix_path_loss(double p_los, double g_los, double g_nlos) {
  return p_los * g_los + (1.0 - p_los) * std::max(g_los, g_nlos);
}

double avg_path_loss(double d3, double altitude, double carrier_ghz) {
  const double g_los = path_loss_los(d3, altitude, carrier_ghz);
  const double g_nlos = path_loss_nlos(d3, altitude, carrier_ghz);
  return mix_path_loss(los_probability(d3, altitude), g_los, g_nlos);
}

double backhaul_sinr(double serving_loss_db, std::span<const double> neighbor_losses_db,
                     const RadioParams& params) {
  const double noise = noise_power_watts(params.noise_density_dbm_hz, params.backhaul_bandwidth_hz);
  const double p_serving = dbm_to_watts(params.p_mbs_dbm);
  const double p_neighbor = dbm_to_watts(params.neighbor_p_mbs_dbm);
  double interference = 0.0;
  for (double loss : neighbor_losses_db) interference += p_neighbor * db_to_linear(-loss);
  return p_serving * db_to_linear(-serving_loss_db) / (noise + interference);
}

NomaSinr noma_sinr(double group_power_w, double near_coeff, double loss_near_db,
                   double loss_far_db, double noise_w) {
  if (!(near_coeff > 0.0 && near_coeff <= 0.5)) {
    throw std::domain_error("noma_sinr: near-user power coefficient must lie in (0, 0.5]");
  }
  const double gain_near = db_to_linear(-loss_near_db);
  const double gain_far = db_to_linear(-loss_far_db);
  const double interference = group_power_w * near_coeff * gain_far;
  return {group_power_w * near_coeff * gain_near / noise_w,
          group_power_w * (1.0 - near_coeff) * gain_far / (interference + noise_w)};
}

bool sic_feasible(double group_power_w, double near_coeff, double loss_near_db,
                  double loss_far_db, double noise_w) {
  const double gain_near = db_to_linear(-loss_near_db);
  const double gain_far = db_to_linear(-loss_far_db);
  const double far_at_near = group_power_w * (1.0 - near_coeff) * gain_near /
                             (group_power_w * near_coeff * gain_near + noise_w);
  const double far_at_far = group_power_w * (1.0 - near_coeff) * gain_far /
                            (group_power_w * near_coeff * gain_far + noise_w);
  return far_at_near >= far_at_far;
}

double solo_snr(double group_power_w, double loss_db, double noise_w) {
  return group_power_w * db_to_linear(-loss_db) / noise_w;
}

}  // namespace uavcache::channel
