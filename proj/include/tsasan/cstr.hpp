// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsasan/common.hpp"

namespace tsasan {

// Closed-loop continuous stirred-tank reactor. Three states (reactant
// concentration C, reactor temperature T, jacket temperature T_c) with an
// Arrhenius rate constant and a PI controller that tracks the reactor
// temperature setpoint by manipulating the coolant flow Q_c. The jacket heat
// transfer coefficient is modeled as UA(Q_c) = a * Q_c^b.
//
// Units: minutes, liters, moles, joules, kelvin, grams.

struct CstrParams {
    double feed_flow = 100.0;           // Q   [L/min]
    double volume = 100.0;              // V   [L]
    double jacket_volume = 50.0;        // V_c [L]
    double inlet_conc = 1.0;            // C_i0 [mol/L]
    double inlet_temp = 365.0;          // T_i0 [K]
    double coolant_inlet_temp = 293.0;  // T_ci0 [K]
    double k0 = 6.15e11;                // pre-exponential factor [1/min]
    double e_over_r = 9500.0;           // activation energy over gas constant [K]
    double reaction_enthalpy = -5.0e4;  // dHr [J/mol], negative = exothermic
    double density = 1000.0;            // rho   [g/L]
    double coolant_density = 1000.0;    // rho_c [g/L]
    double heat_capacity = 4.18;        // Cp  [J/(g K)]
    double coolant_heat_capacity = 4.18;// Cpc [J/(g K)]
    double heat_coeff_a = 17900.0;      // a0 in UA = a * Qc^b
    double heat_coeff_b = 0.5;          // b0

    // controller
    double base_setpoint = 350.0;       // mode 1 reactor temperature [K]
    double controller_gain = 6.0;       // Kc [ (L/min) / K ]
    double integral_time = 3.0;         // tau_I [min]
    double qc_max = 500.0;              // actuator clamp [L/min]
    double controller_period = 0.05;    // PI scan period [min], independent of the RK4 step

    // integration / sampling
    double integration_step = 0.05;     // RK4 step [min]
    double sample_interval = 1.0;       // one measurement row per minute
    long duration_samples = 1200;       // 20 h at 1 sample/min

    // noise
    std::array<double, 3> noise_std = {0.002, 0.02, 0.02};  // per state derivative
    std::vector<double> meas_noise_std = {0.002, 0.05, 0.002, 0.05, 0.05, 0.05, 0.2};

    void validate() const;  // throws ConfigError
};

struct ModeSpec {
    std::string mode_id;     // "M1", "M2", "M3"
    double temp_setpoint;    // K

    // M2 = base + 5 K, M3 = base + 10 K
    static ModeSpec by_id(const std::string& id, const CstrParams& params);
    static const std::vector<std::string>& all_ids();
};

struct FaultSpec {
    enum class Target {
        none,
        inlet_conc,          // F1: feed concentration disturbance
        inlet_temp,          // F2: feed temperature disturbance
        conc_sensor,         // F3: drift on the measured C
        temp_sensor,         // F4: drift on the measured T (feeds the controller)
        coolant_flow,        // F5: actuator offset between commanded and applied Q_c
        coolant_inlet_temp,  // F6: coolant inlet temperature disturbance
        jacket_temp_sensor,  // F7: drift on the measured T_c
        heat_coeff_a,        // F8: exponential decay of a
        heat_coeff_b,        // F9: exponential decay of b
    };
    enum class Profile { none, ramp, exp_decay };

    std::string id = "H";
    Target target = Target::none;
    Profile profile = Profile::none;
    double rate = 0.0;
    double onset_min = 200.0;

    bool is_healthy() const { return target == Target::none; }

    // Value of a perturbed quantity given its base value, at `minutes_since_onset >= 0`.
    // ramp: base + rate * t; exp_decay: base * exp(-rate * t).
    double apply(double base, double minutes_since_onset) const;
    // Additive drift for sensor/actuator targets (ramp profiles only).
    double additive(double minutes_since_onset) const;

    static FaultSpec by_id(const std::string& id);  // throws UsageError listing valid ids
    static const std::vector<std::string>& all_ids();
};

// One simulated trajectory. `measurements` is the sensor view (sensor-fault
// drifts and measurement noise applied; the Q_c column reports the commanded
// flow). `truth` is the physical view (actual inputs and states, applied
// coolant flow, no sensor effects); it is kept for validation and is not
// exported.
struct SimRun {
    std::string mode_id;
    std::string fault_id;
    std::vector<std::string> var_names;  // C_i, T_i, C, T, T_c, T_ci, Q_c
    Matrix measurements;                 // duration_samples x 7
    Matrix truth;
    std::vector<double> qc_command;
    long onset_index = 0;
    uint64_t seed = 0;
    CstrParams params;
};

inline const std::vector<std::string>& monitored_variables() {
    static const std::vector<std::string> names = {"C_i", "T_i", "C", "T", "T_c", "T_ci", "Q_c"};
    return names;
}

// Noiseless right-hand side of the plant ODEs at nominal inputs (Q_c held).
std::array<double, 3> plant_rhs(const CstrParams& p, double conc, double temp, double jacket_temp,
                                double qc);

// Runs the noiseless closed loop until the sampled reactor temperature is
// stable over a trailing 60-minute window and the state derivatives have
// died out; returns (C, T, T_c, Q_c). Throws ConfigError if the loop has not
// converged within 2000 simulated minutes.
std::array<double, 4> steady_state(const CstrParams& params, const ModeSpec& mode);

SimRun simulate(const CstrParams& params, const ModeSpec& mode, const FaultSpec& fault,
                uint64_t seed);

// Bounded-difference-quotient stability test on the first `window + 1`
// samples of x: true iff |x[t] - x[0]| / t < threshold for t = 1..window
// (t in sample units).
bool check_mode_stability(const std::vector<double>& x, double threshold, long window);

// CSV (17-digit decimal text) plus a JSON sidecar manifest at the same path
// with the .csv suffix replaced by .json.
void export_run(const SimRun& run, const std::string& csv_path);
SimRun load_run(const std::string& csv_path);

nlohmann::json cstr_params_to_json(const CstrParams& p);
CstrParams cstr_params_from_json(const nlohmann::json& j);

}  // namespace tsasan
