#pragma once

// Radio-layer models for the UAV cell: geometry, air-to-ground path loss,
// line-of-sight probability and the backhaul / NOMA access SINRs.
//
// Units: distances in meters, losses in dB, carrier frequency in GHz,
// powers in watts unless the name says dBm.

#include <span>

namespace uavcache::channel {

struct Position3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;  // 0 for ground nodes, altitude for the UAV
};

double distance_3d(const Position3D& a, const Position3D& b);

/// Circular flight path flown at constant speed and altitude. The position is
/// held constant within a slot and the phase advances by speed*slot/radius
/// radians per slot.
class Trajectory {
 public:
  Trajectory(Position3D center, double radius, double speed, double altitude,
             double slot_length, double initial_phase = 0.0);

  Position3D position_at(long slot) const;  // slot is 1-based

  double radius() const { return radius_; }
  double altitude() const { return altitude_; }
  double phase_step() const { return phase_step_; }

 private:
  Position3D center_;
  double radius_;
  double speed_;
  double altitude_;
  double slot_length_;
  double initial_phase_;
  double phase_step_;
};

struct RadioParams {
  double p_mbs_dbm = 46.0;
  double p_uav_dbm = 30.0;
  double neighbor_p_mbs_dbm = 46.0;
  double backhaul_bandwidth_hz = 20e6;
  double access_bandwidth_hz = 20e6;
  double noise_density_dbm_hz = -174.0;
  double carrier_ghz = 2.0;
};

double db_to_linear(double db);
double linear_to_db(double linear);
double dbm_to_watts(double dbm);
double watts_to_dbm(double watts);

/// Thermal noise power over `bandwidth_hz` for a density given in dBm/Hz.
double noise_power_watts(double density_dbm_hz, double bandwidth_hz);

// Breakpoint distance d_o and decay constant p_1 of the LoS probability model.
double los_breakpoint(double altitude);
double los_decay(double altitude);

/// Probability of line of sight between a ground node and an aerial node at
/// `altitude`, `d3` apart. Uses the multiplicative form
///   d_o/r + exp(-r/p_1) * (1 - d_o/r)
/// beyond the breakpoint, clamped to [0, 1].
/// Throws std::domain_error when d3 < altitude or altitude <= 0.
double los_probability(double d3, double altitude);

double path_loss_los(double d3, double altitude, double carrier_ghz);
double path_loss_nlos(double d3, double altitude, double carrier_ghz);

/// LoS/NLoS mixture: p*g_los + (1-p)*max(g_los, g_nlos).
double mix_path_loss(double p_los, double g_los, double g_nlos);

/// Expected path loss in dB, weighting the two link states by los_probability.
double avg_path_loss(double d3, double altitude, double carrier_ghz);

/// Backhaul SINR (linear) at the UAV given the serving-MBS loss and the losses
/// from each interfering neighbor MBS. An empty neighbor list yields the SNR.
double backhaul_sinr(double serving_loss_db, std::span<const double> neighbor_losses_db,
                     const RadioParams& params);

struct NomaSinr {
  double near = 0.0;
  double far = 0.0;
};

/// Downlink NOMA pair SINRs. `near_coeff` is the near-user share of the group
/// power and must lie in (0, 0.5]; the far user gets the remainder and sees
/// the near user's signal as interference.
NomaSinr noma_sinr(double group_power_w, double near_coeff, double loss_near_db,
                   double loss_far_db, double noise_w);

/// True when the near user can decode (and cancel) the far user's signal at
/// least as well as the far user decodes it.
bool sic_feasible(double group_power_w, double near_coeff, double loss_near_db,
                  double loss_far_db, double noise_w);

/// SNR of a user served alone with the whole group power.
double solo_snr(double group_power_w, double loss_db, double noise_w);

}  // namespace uavcache::channel
