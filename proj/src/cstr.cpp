// SPDX-License-Identifier: Apache-2.0
#include "tsasan/cstr.hpp"

#include <cmath>
#include <json.hpp>

#include "tsasan/csvio.hpp"

namespace tsasan {

using nlohmann::json;

void CstrParams::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ConfigError(std::string("CstrParams: ") + name + " must be strictly positive");
        }
    };
    positive(feed_flow, "feed_flow");
    positive(volume, "volume");
    positive(jacket_volume, "jacket_volume");
    positive(inlet_conc, "inlet_conc");
    positive(inlet_temp, "inlet_temp");
    positive(coolant_inlet_temp, "coolant_inlet_temp");
    positive(k0, "k0");
    positive(e_over_r, "e_over_r");
    positive(density, "density");
    positive(coolant_density, "coolant_density");
    positive(heat_capacity, "heat_capacity");
    positive(coolant_heat_capacity, "coolant_heat_capacity");
    positive(heat_coeff_a, "heat_coeff_a");
    positive(heat_coeff_b, "heat_coeff_b");
    positive(base_setpoint, "base_setpoint");
    positive(controller_gain, "controller_gain");
    positive(integral_time, "integral_time");
    positive(qc_max, "qc_max");
    positive(integration_step, "integration_step");
    positive(sample_interval, "sample_interval");
    if (reaction_enthalpy == 0.0 || !std::isfinite(reaction_enthalpy)) {
        throw ConfigError("CstrParams: reaction_enthalpy must be nonzero");
    }
    if (duration_samples < 1) throw ConfigError("CstrParams: duration_samples must be >= 1");
    for (double s : noise_std) {
        if (s < 0.0 || !std::isfinite(s)) throw ConfigError("CstrParams: negative process noise std");
    }
    if (meas_noise_std.size() != monitored_variables().size()) {
        throw ConfigError("CstrParams: meas_noise_std must have one entry per monitored variable");
    }
    for (double s : meas_noise_std) {
        if (s < 0.0 || !std::isfinite(s)) throw ConfigError("CstrParams: negative measurement noise std");
    }
    positive(controller_period, "controller_period");
    const double steps = sample_interval / integration_step;
    if (std::fabs(steps - std::round(steps)) > 1e-9 || std::round(steps) < 1.0) {
        throw ConfigError("CstrParams: integration_step must divide sample_interval");
    }
    const double ctrl_steps = controller_period / integration_step;
    if (std::fabs(ctrl_steps - std::round(ctrl_steps)) > 1e-9 || std::round(ctrl_steps) < 1.0) {
        throw ConfigError("CstrParams: integration_step must divide controller_period");
    }
}

const std::vector<std::string>& ModeSpec::all_ids() {
    static const std::vector<std::string> ids = {"M1", "M2", "M3"};
    return ids;
}

ModeSpec ModeSpec::by_id(const std::string& id, const CstrParams& params) {
    if (id == "M1") return {"M1", params.base_setpoint};
    if (id == "M2") return {"M2", params.base_setpoint + 5.0};
    if (id == "M3") return {"M3", params.base_setpoint + 10.0};
    throw UsageError("unknown mode '" + id + "'; valid modes: M1, M2, M3");
}

const std::vector<std::string>& FaultSpec::all_ids() {
    static const std::vector<std::string> ids = {"H",  "F1", "F2", "F3", "F4",
                                                 "F5", "F6", "F7", "F8", "F9"};
    return ids;
}

FaultSpec FaultSpec::by_id(const std::string& id) {
    using T = Target;
    using P = Profile;
    if (id == "H") return {};
    if (id == "F1") return {"F1", T::inlet_conc, P::ramp, 0.001, 200.0};
    if (id == "F2") return {"F2", T::inlet_temp, P::ramp, 0.05, 200.0};
    if (id == "F3") return {"F3", T::conc_sensor, P::ramp, 0.001, 200.0};
    if (id == "F4") return {"F4", T::temp_sensor, P::ramp, 0.05, 200.0};
    if (id == "F5") return {"F5", T::coolant_flow, P::ramp, -0.1, 200.0};
    if (id == "F6") return {"F6", T::coolant_inlet_temp, P::ramp, 0.05, 200.0};
    if (id == "F7") return {"F7", T::jacket_temp_sensor, P::ramp, 0.05, 200.0};
    if (id == "F8") return {"F8", T::heat_coeff_a, P::exp_decay, 0.0005, 200.0};
    if (id == "F9") return {"F9", T::heat_coeff_b, P::exp_decay, 0.001, 200.0};
    std::string msg = "unknown fault '" + id + "'; valid faults:";
    for (const auto& f : all_ids()) msg += " " + f;
    throw UsageError(msg);
}

double FaultSpec::apply(double base, double minutes_since_onset) const {
    if (minutes_since_onset < 0.0) return base;
    switch (profile) {
        case Profile::none: return base;
        case Profile::ramp: return base + rate * minutes_since_onset;
        case Profile::exp_decay: return base * std::exp(-rate * minutes_since_onset);
    }
    return base;
}

double FaultSpec::additive(double minutes_since_onset) const {
    if (minutes_since_onset < 0.0 || profile != Profile::ramp) return 0.0;
    return rate * minutes_since_onset;
}

std::array<double, 3> plant_rhs(const CstrParams& p, double conc, double temp, double jacket_temp,
                                double qc) {
    const double k = p.k0 * std::exp(-p.e_over_r / temp);
    const double ua = p.heat_coeff_a * std::pow(std::max(qc, 0.0), p.heat_coeff_b);
    const double rho_cp = p.density * p.heat_capacity;
    const double rho_cp_c = p.coolant_density * p.coolant_heat_capacity;
    const double dconc = p.feed_flow / p.volume * (p.inlet_conc - conc) - k * conc;
    const double dtemp = p.feed_flow / p.volume * (p.inlet_temp - temp) -
                         p.reaction_enthalpy * k * conc / rho_cp -
                         ua / (rho_cp * p.volume) * (temp - jacket_temp);
    const double djacket = qc / p.jacket_volume * (p.coolant_inlet_temp - jacket_temp) +
                           ua / (rho_cp_c * p.jacket_volume) * (temp - jacket_temp);
    return {dconc, dtemp, djacket};
}

namespace {

struct State {
    double conc;
    double temp;
    double jacket;
};

// Plant inputs after fault perturbation at absolute time tau.
struct Inputs {
    double inlet_conc;
    double inlet_temp;
    double coolant_inlet_temp;
    double coeff_a;
    double coeff_b;
};

Inputs effective_inputs(const CstrParams& p, const FaultSpec& fault, double tau) {
    Inputs in{p.inlet_conc, p.inlet_temp, p.coolant_inlet_temp, p.heat_coeff_a, p.heat_coeff_b};
    const double tf = tau - fault.onset_min;
    if (tf < 0.0) return in;
    switch (fault.target) {
        case FaultSpec::Target::inlet_conc: in.inlet_conc = fault.apply(p.inlet_conc, tf); break;
        case FaultSpec::Target::inlet_temp: in.inlet_temp = fault.apply(p.inlet_temp, tf); break;
        case FaultSpec::Target::coolant_inlet_temp:
            in.coolant_inlet_temp = fault.apply(p.coolant_inlet_temp, tf);
            break;
        case FaultSpec::Target::heat_coeff_a: in.coeff_a = fault.apply(p.heat_coeff_a, tf); break;
        case FaultSpec::Target::heat_coeff_b: in.coeff_b = fault.apply(p.heat_coeff_b, tf); break;
        default: break;
    }
    return in;
}

std::array<double, 3> rhs_with_inputs(const CstrParams& p, const Inputs& in, const State& s,
                                      double qc_applied) {
    const double k = p.k0 * std::exp(-p.e_over_r / s.temp);
    const double ua = in.coeff_a * std::pow(std::max(qc_applied, 0.0), in.coeff_b);
    const double rho_cp = p.density * p.heat_capacity;
    const double rho_cp_c = p.coolant_density * p.coolant_heat_capacity;
    const double dconc = p.feed_flow / p.volume * (in.inlet_conc - s.conc) - k * s.conc;
    const double dtemp = p.feed_flow / p.volume * (in.inlet_temp - s.temp) -
                         p.reaction_enthalpy * k * s.conc / rho_cp -
                         ua / (rho_cp * p.volume) * (s.temp - s.jacket);
    const double djacket = qc_applied / p.jacket_volume * (in.coolant_inlet_temp - s.jacket) +
                           ua / (rho_cp_c * p.jacket_volume) * (s.temp - s.jacket);
    return {dconc, dtemp, djacket};
}

class ClosedLoop {
public:
    ClosedLoop(const CstrParams& p, const ModeSpec& mode, const FaultSpec& fault, bool with_noise,
               uint64_t seed, State init, double qc_init)
        : p_(p),
          mode_(mode),
          fault_(fault),
          with_noise_(with_noise),
          proc_rng_(Rng::derive(seed, "process")),
          state_(init),
          qc_cmd_(qc_init) {
        prev_error_ = measured_temp(0.0) - mode_.temp_setpoint;
    }

    // Reactor temperature as the controller sees it (sensor drift included,
    // measurement noise excluded; the loop reads a continuous signal).
    double measured_temp(double tau) const {
        double t = state_.temp;
        if (fault_.target == FaultSpec::Target::temp_sensor) {
            t += fault_.additive(tau - fault_.onset_min);
        }
        return t;
    }

    double applied_qc(double tau) const {
        double qc = qc_cmd_;
        if (fault_.target == FaultSpec::Target::coolant_flow) {
            qc += fault_.additive(tau - fault_.onset_min);
        }
        return std::max(qc, 0.0);
    }

    // Advances one integration step from absolute time tau. The velocity-form
    // PI runs on its own scan period (zero-order hold in between), so halving
    // the RK4 step leaves the control sequence untouched.
    void step(double tau) {
        const double dt = p_.integration_step;
        const long steps_per_scan =
            static_cast<long>(std::round(p_.controller_period / p_.integration_step));
        if (substep_ % steps_per_scan == 0) {
            const double err = measured_temp(tau) - mode_.temp_setpoint;
            qc_cmd_ += p_.controller_gain * (err - prev_error_) +
                       p_.controller_gain * p_.controller_period / p_.integral_time * err;
            qc_cmd_ = std::min(std::max(qc_cmd_, 0.0), p_.qc_max);
            prev_error_ = err;
        }
        ++substep_;

        std::array<double, 3> noise = {0.0, 0.0, 0.0};
        if (with_noise_) {
            for (size_t i = 0; i < 3; ++i) noise[i] = proc_rng_.normal() * p_.noise_std[i];
        }
        auto f = [&](double t_abs, const State& s) {
            auto d = rhs_with_inputs(p_, effective_inputs(p_, fault_, t_abs), s, applied_qc(t_abs));
            return std::array<double, 3>{d[0] + noise[0], d[1] + noise[1], d[2] + noise[2]};
        };
        const auto k1 = f(tau, state_);
        const auto k2 = f(tau + dt / 2, advance(state_, k1, dt / 2));
        const auto k3 = f(tau + dt / 2, advance(state_, k2, dt / 2));
        const auto k4 = f(tau + dt, advance(state_, k3, dt));
        state_.conc += dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
        state_.temp += dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
        state_.jacket += dt / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]);
        check_divergence(tau + dt);
    }

    const State& state() const { return state_; }
    double qc_command() const { return qc_cmd_; }

private:
    static State advance(const State& s, const std::array<double, 3>& d, double h) {
        return {s.conc + h * d[0], s.temp + h * d[1], s.jacket + h * d[2]};
    }

    void check_divergence(double tau) const {
        const double limit = 1e6;
        if (!std::isfinite(state_.conc) || !std::isfinite(state_.temp) ||
            !std::isfinite(state_.jacket) || std::fabs(state_.conc) > limit ||
            std::fabs(state_.temp) > limit || std::fabs(state_.jacket) > limit) {
            throw SimulationError("integration diverged at t=" + fmt17(tau) + " min: C=" +
                                  fmt17(state_.conc) + " T=" + fmt17(state_.temp) + " T_c=" +
                                  fmt17(state_.jacket));
        }
    }

    const CstrParams& p_;
    const ModeSpec& mode_;
    const FaultSpec& fault_;
    bool with_noise_;
    Rng proc_rng_;
    State state_;
    double qc_cmd_;
    double prev_error_ = 0.0;
    long substep_ = 0;
};

}  // namespace

bool check_mode_stability(const std::vector<double>& x, double threshold, long window) {
    if (window < 2) throw ConfigError("check_mode_stability: window must be >= 2");
    if (static_cast<long>(x.size()) < window + 1) {
        throw DataError("check_mode_stability: need " + std::to_string(window + 1) +
                        " samples, got " + std::to_string(x.size()));
    }
    for (long t = 1; t <= window; ++t) {
        if (std::fabs(x[static_cast<size_t>(t)] - x[0]) / static_cast<double>(t) >= threshold) {
            return false;
        }
    }
    return true;
}

std::array<double, 4> steady_state(const CstrParams& params, const ModeSpec& mode) {
    params.validate();
    const FaultSpec healthy;
    State init{0.5 * params.inlet_conc, mode.temp_setpoint,
               0.5 * (mode.temp_setpoint + params.coolant_inlet_temp)};
    ClosedLoop loop(params, mode, healthy, /*with_noise=*/false, /*seed=*/0, init, 100.0);

    const long steps_per_min = static_cast<long>(std::round(1.0 / params.integration_step));
    const long max_minutes = 2000;
    std::vector<double> temps;
    temps.push_back(loop.state().temp);
    for (long minute = 0; minute < max_minutes; ++minute) {
        for (long s = 0; s < steps_per_min; ++s) {
            loop.step(static_cast<double>(minute) + static_cast<double>(s) * params.integration_step);
        }
        temps.push_back(loop.state().temp);
        if (static_cast<long>(temps.size()) >= 62) {
            std::vector<double> tail(temps.end() - 61, temps.end());
            const auto& st = loop.state();
            auto d = plant_rhs(params, st.conc, st.temp, st.jacket, loop.qc_command());
            const bool settled = check_mode_stability(tail, 0.01, 60) &&
                                 std::fabs(st.temp - mode.temp_setpoint) < 0.05 &&
                                 std::fabs(d[0]) < 1e-4 && std::fabs(d[1]) < 1e-4 &&
                                 std::fabs(d[2]) < 1e-4;
            if (settled) {
                return {st.conc, st.temp, st.jacket, loop.qc_command()};
            }
        }
    }
    throw ConfigError("steady_state: closed loop did not settle for mode " + mode.mode_id +
                      " within 2000 minutes; check plant and controller parameters");
}

SimRun simulate(const CstrParams& params, const ModeSpec& mode, const FaultSpec& fault,
                uint64_t seed) {
    params.validate();
    auto ss = steady_state(params, mode);

    SimRun run;
    run.mode_id = mode.mode_id;
    run.fault_id = fault.id;
    run.var_names = monitored_variables();
    run.onset_index = static_cast<long>(std::round(fault.onset_min / params.sample_interval));
    run.seed = seed;
    run.params = params;
    const size_t nvars = run.var_names.size();
    const size_t nsamples = static_cast<size_t>(params.duration_samples);
    run.measurements = Matrix(nsamples, nvars);
    run.truth = Matrix(nsamples, nvars);
    run.qc_command.resize(nsamples);

    ClosedLoop loop(params, mode, fault, /*with_noise=*/true, seed,
                    State{ss[0], ss[1], ss[2]}, ss[3]);
    Rng meas_rng = Rng::derive(seed, "measurement");
    const long steps_per_sample =
        static_cast<long>(std::round(params.sample_interval / params.integration_step));

    for (size_t m = 0; m < nsamples; ++m) {
        const double tau = static_cast<double>(m) * params.sample_interval;
        const double tf = tau - fault.onset_min;
        const Inputs in = effective_inputs(params, fault, tau);
        const State& st = loop.state();

        const std::array<double, 7> truth_row = {
            in.inlet_conc, in.inlet_temp, st.conc, st.temp,
            st.jacket,     in.coolant_inlet_temp,  loop.applied_qc(tau)};
        std::array<double, 7> meas_row = truth_row;
        // Sensor view: drifted state measurements, commanded coolant flow.
        if (fault.target == FaultSpec::Target::conc_sensor) meas_row[2] += fault.additive(tf);
        if (fault.target == FaultSpec::Target::temp_sensor) meas_row[3] += fault.additive(tf);
        if (fault.target == FaultSpec::Target::jacket_temp_sensor) meas_row[4] += fault.additive(tf);
        meas_row[6] = loop.qc_command();
        for (size_t v = 0; v < nvars; ++v) {
            const double noise = meas_rng.normal() * params.meas_noise_std[v];
            run.truth.at(m, v) = truth_row[v];
            run.measurements.at(m, v) = meas_row[v] + noise;
        }
        run.qc_command[m] = loop.qc_command();

        if (m + 1 < nsamples) {
            for (long s = 0; s < steps_per_sample; ++s) {
                loop.step(tau + static_cast<double>(s) * params.integration_step);
            }
        }
    }
    if (!all_finite(run.measurements.data)) {
        throw SimulationError("simulate: non-finite measurement in run " + mode.mode_id + "/" +
                              fault.id);
    }
    return run;
}

json cstr_params_to_json(const CstrParams& p) {
    return json{{"feed_flow", p.feed_flow},
                {"volume", p.volume},
                {"jacket_volume", p.jacket_volume},
                {"inlet_conc", p.inlet_conc},
                {"inlet_temp", p.inlet_temp},
                {"coolant_inlet_temp", p.coolant_inlet_temp},
                {"k0", p.k0},
                {"e_over_r", p.e_over_r},
                {"reaction_enthalpy", p.reaction_enthalpy},
                {"density", p.density},
                {"coolant_density", p.coolant_density},
                {"heat_capacity", p.heat_capacity},
                {"coolant_heat_capacity", p.coolant_heat_capacity},
                {"heat_coeff_a", p.heat_coeff_a},
                {"heat_coeff_b", p.heat_coeff_b},
                {"base_setpoint", p.base_setpoint},
                {"controller_gain", p.controller_gain},
                {"integral_time", p.integral_time},
                {"qc_max", p.qc_max},
                {"controller_period", p.controller_period},
                {"integration_step", p.integration_step},
                {"sample_interval", p.sample_interval},
                {"duration_samples", p.duration_samples},
                {"noise_std", p.noise_std},
                {"meas_noise_std", p.meas_noise_std}};
}

CstrParams cstr_params_from_json(const json& j) {
    CstrParams p;
    p.feed_flow = j.at("feed_flow");
    p.volume = j.at("volume");
    p.jacket_volume = j.at("jacket_volume");
    p.inlet_conc = j.at("inlet_conc");
    p.inlet_temp = j.at("inlet_temp");
    p.coolant_inlet_temp = j.at("coolant_inlet_temp");
    p.k0 = j.at("k0");
    p.e_over_r = j.at("e_over_r");
    p.reaction_enthalpy = j.at("reaction_enthalpy");
    p.density = j.at("density");
    p.coolant_density = j.at("coolant_density");
    p.heat_capacity = j.at("heat_capacity");
    p.coolant_heat_capacity = j.at("coolant_heat_capacity");
    p.heat_coeff_a = j.at("heat_coeff_a");
    p.heat_coeff_b = j.at("heat_coeff_b");
    p.base_setpoint = j.at("base_setpoint");
    p.controller_gain = j.at("controller_gain");
    p.integral_time = j.at("integral_time");
    p.qc_max = j.at("qc_max");
    p.controller_period = j.at("controller_period");
    p.integration_step = j.at("integration_step");
    p.sample_interval = j.at("sample_interval");
    p.duration_samples = j.at("duration_samples");
    p.noise_std = j.at("noise_std");
    p.meas_noise_std = j.at("meas_noise_std").get<std::vector<double>>();
    return p;
}

namespace {

std::string manifest_path_for(const std::string& csv_path) {
    if (csv_path.size() >= 4 && csv_path.substr(csv_path.size() - 4) == ".csv") {
        return csv_path.substr(0, csv_path.size() - 4) + ".json";
    }
    return csv_path + ".json";
}

}  // namespace

void export_run(const SimRun& run, const std::string& csv_path) {
    Matrix table(run.measurements.rows, run.measurements.cols + 1);
    for (size_t r = 0; r < run.measurements.rows; ++r) {
        table.at(r, 0) = static_cast<double>(r) * run.params.sample_interval;
        for (size_t c = 0; c < run.measurements.cols; ++c) {
            table.at(r, c + 1) = run.measurements.at(r, c);
        }
    }
    std::vector<std::string> header = {"time_min"};
    header.insert(header.end(), run.var_names.begin(), run.var_names.end());
    write_numeric_csv(csv_path, header, table);

    json manifest{{"schema_version", 1},
                  {"mode_id", run.mode_id},
                  {"fault_id", run.fault_id},
                  {"onset_index", run.onset_index},
                  {"seed", run.seed},
                  {"params", cstr_params_to_json(run.params)}};
    write_text_file(manifest_path_for(csv_path), manifest.dump(2) + "\n");
}

SimRun load_run(const std::string& csv_path) {
    CsvTable table = read_numeric_csv(csv_path);
    json manifest;
    try {
        manifest = json::parse(read_text_file(manifest_path_for(csv_path)));
    } catch (const json::parse_error& e) {
        throw ParseError(manifest_path_for(csv_path) + ": " + e.what());
    }
    SimRun run;
    run.mode_id = manifest.at("mode_id");
    run.fault_id = manifest.at("fault_id");
    run.onset_index = manifest.at("onset_index");
    run.seed = manifest.at("seed");
    run.params = cstr_params_from_json(manifest.at("params"));
    if (table.header.empty() || table.header[0] != "time_min") {
        throw ParseError(csv_path + ": first column must be time_min");
    }
    run.var_names.assign(table.header.begin() + 1, table.header.end());
    run.measurements = Matrix(table.values.rows, table.values.cols - 1);
    for (size_t r = 0; r < table.values.rows; ++r) {
        for (size_t c = 1; c < table.values.cols; ++c) {
            run.measurements.at(r, c - 1) = table.values.at(r, c);
        }
    }
    return run;
}

}  // namespace tsasan
