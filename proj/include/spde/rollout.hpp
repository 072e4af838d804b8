#pragma once

#include "spde/actuation.hpp"
#include "spde/models.hpp"
#include "spde/noise.hpp"
#include "spde/policy.hpp"

#include <vector>

namespace spde {

// One sampled trajectory: states X_0..X_T, per-step controls u_t, raw noise
// draws, and the Girsanov inner-product records
//   noise_term[t]  = <Phi_t, dW_t>
//   policy_term[t] = u_t^T gram u_t = <Phi_t, Phi_t>.
// noise_proj[t] = m^T-pairing of dW_t, so noise_term[t] = u_t . noise_proj[t].
// Whether dW drives the whole field (the experiments as stated) or is
// restricted to the actuation channel G = m (the Eq.-(1) shared-channel
// form).
enum class NoiseChannel { Field, Actuation };

struct Trajectory {
    std::vector<Field> states;
    std::vector<Eigen::VectorXd> controls;
    std::vector<Eigen::VectorXd> noise_xi;
    std::vector<Eigen::VectorXd> noise_proj;
    Eigen::VectorXd noise_term;
    Eigen::VectorXd policy_term;
    double dt = 0;
    bool finite = true; // false once any state blew up
    NoiseChannel channel = NoiseChannel::Field;

    int steps() const { return static_cast<int>(controls.size()); }
    double noise_term_sum() const { return noise_term.sum(); }                 // N_r
    double policy_term_sum() const { return policy_term.sum() * dt; }          // P_r
};

// Algorithm main loop body: u = phi(X_{t-1}), advance through the model's
// stepper with the control field and fresh noise, record the per-step
// Girsanov terms.
Trajectory rollout(const SpdeModel& model, const ActuatorMap& map,
                   const PolicyParams& policy, const Field& x0, int steps, double dt,
                   Rng& rng, NoiseChannel channel = NoiseChannel::Field);

} // namespace spde
