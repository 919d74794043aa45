#include "lambo/mec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lambo/rng.hpp"

namespace lambo {

namespace {

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        raise(Errc::ConfigError, std::string(name) + " must be strictly positive");
    }
}

}  // namespace

void PhysParams::validate() const {
    require_positive(bandwidth_hz, "bandwidth_hz");
    require_positive(noise_power_w, "noise_power_w");
    require_positive(tx_power_w, "tx_power_w");
    require_positive(local_power_w, "local_power_w");
    require_positive(ref_gain, "ref_gain");
    require_positive(t_max_s, "t_max_s");
    require_positive(penalty_lambda, "penalty_lambda");
    if (pathloss_exp < 2.0) {
        raise(Errc::ConfigError, "pathloss_exp must be >= 2");
    }
}

void MecInstance::validate() const {
    if (ues.empty() || servers.empty()) {
        raise(Errc::ConfigError, "instance needs at least one UE and one server");
    }
    phys.validate();
    if (gains.size() != ues.size()) {
        raise(Errc::ShapeMismatch, "gains row count != number of UEs");
    }
    for (const auto& row : gains) {
        if (row.size() != servers.size()) {
            raise(Errc::ShapeMismatch, "gains column count != number of servers");
        }
        for (double g : row) {
            if (!(g > 0.0)) raise(Errc::ConfigError, "gains must be strictly positive");
        }
    }
    for (const auto& ue : ues) {
        if (!(ue.data_bits > 0.0) || !(ue.cycles > 0.0) || !(ue.f_local > 0.0)) {
            raise(Errc::ConfigError, "UE task fields must be strictly positive");
        }
    }
    for (const auto& s : servers) {
        if (!(s.capacity > 0.0)) raise(Errc::ConfigError, "server capacity must be strictly positive");
    }
}

void Decision::validate(int n_ues, int n_servers) const {
    if (static_cast<int>(assoc.size()) != n_ues || static_cast<int>(alloc.size()) != n_ues) {
        raise(Errc::ShapeMismatch, "decision length != number of UEs");
    }
    for (int i = 0; i < n_ues; ++i) {
        if (assoc[i] < 0 || assoc[i] > n_servers) {
            raise(Errc::InvalidDecision, "association out of range");
        }
        if (assoc[i] == 0 && alloc[i] != 0.0) {
            raise(Errc::InvalidDecision, "local UE must have zero allocation");
        }
        if (assoc[i] >= 1 && !(alloc[i] > 0.0)) {
            raise(Errc::InvalidDecision, "offloaded UE must have positive allocation");
        }
    }
}

void GenConfig::validate() const {
    if (n_ues < 1 || n_servers < 1) {
        raise(Errc::ConfigError, "n_ues and n_servers must be >= 1");
    }
    require_positive(area_m, "area_m");
    require_positive(data_mean_bits, "data_mean_bits");
    require_positive(cycles_mean, "cycles_mean");
    require_positive(f_local, "f_local");
    if (data_log_sigma < 0.0 || cycles_log_sigma < 0.0) {
        raise(Errc::ConfigError, "log sigmas must be >= 0");
    }
    if (capacities.empty()) raise(Errc::ConfigError, "capacities list must be non-empty");
    for (double c : capacities) require_positive(c, "capacity");
    phys.validate();
}

double channel_gain(Vec2 ue_pos, Vec2 server_pos, const PhysParams& phys) {
    const double dx = ue_pos.x - server_pos.x;
    const double dy = ue_pos.y - server_pos.y;
    const double d = std::max(std::sqrt(dx * dx + dy * dy), 1.0);
    return phys.ref_gain * std::pow(d, -phys.pathloss_exp);
}

double uplink_rate(double gain, const PhysParams& phys) {
    const double snr = phys.tx_power_w * gain / phys.noise_power_w;
    return phys.bandwidth_hz * std::log2(1.0 + snr);
}

Evaluation evaluate(const MecInstance& instance, const Decision& decision, Prompt prompt) {
    const int n = instance.n_ues();
    const int m = instance.n_servers();
    decision.validate(n, m);

    Evaluation ev;
    ev.per_ue_latency.resize(n);
    ev.per_ue_energy.resize(n);

    std::vector<double> server_load(m, 0.0);
    double latency_sum = 0.0;
    double energy_sum = 0.0;

    for (int i = 0; i < n; ++i) {
        const Ue& ue = instance.ues[i];
        double t, e;
        if (decision.assoc[i] == 0) {
            t = ue.cycles / ue.f_local;
            e = instance.phys.local_power_w * t;
        } else {
            const int s = decision.assoc[i] - 1;
            const double rate = uplink_rate(instance.gains[i][s], instance.phys);
            const double t_tx = ue.data_bits / rate;
            t = t_tx + ue.cycles / decision.alloc[i];
            e = instance.phys.tx_power_w * t_tx;
            server_load[s] += decision.alloc[i];
        }
        ev.per_ue_latency[i] = t;
        ev.per_ue_energy[i] = e;
        latency_sum += t;
        energy_sum += e;

        const double t_max = instance.phys.t_max_s;
        ev.latency_violation += std::max(0.0, (t - t_max) / t_max);
    }

    for (int s = 0; s < m; ++s) {
        const double cap = instance.servers[s].capacity;
        ev.capacity_violation += std::max(0.0, (server_load[s] - cap) / cap);
    }

    ev.objective = prompt.kind == PromptKind::MinLatency ? latency_sum / n : energy_sum;
    ev.penalized = ev.objective +
                   instance.phys.penalty_lambda * (ev.latency_violation + ev.capacity_violation);
    return ev;
}

namespace {

void recompute_gains(MecInstance& inst, Rng* fading_rng) {
    const int n = inst.n_ues();
    const int m = inst.n_servers();
    inst.gains.assign(n, std::vector<double>(m));
    for (int i = 0; i < n; ++i) {
        for (int s = 0; s < m; ++s) {
            double g = channel_gain(inst.ues[i].position, inst.servers[s].position, inst.phys);
            if (inst.phys.rayleigh_fading && fading_rng != nullptr) {
                g *= fading_rng->exponential1();
            }
            inst.gains[i][s] = g;
        }
    }
}

double reflect_into(double v, double hi) {
    // One or two reflections suffice for any displacement bounded by hi.
    if (v < 0.0) v = -v;
    if (v > hi) v = 2.0 * hi - v;
    return std::clamp(v, 0.0, hi);
}

}  // namespace

MecInstance generate_instance(const GenConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(derive_seed(seed, 0xA11C0DE));

    MecInstance inst;
    inst.phys = config.phys;
    inst.area_m = config.area_m;
    inst.seed = seed;

    inst.servers.resize(config.n_servers);
    for (int s = 0; s < config.n_servers; ++s) {
        inst.servers[s].position = {rng.uniform(0.0, config.area_m), rng.uniform(0.0, config.area_m)};
        inst.servers[s].capacity = config.capacities[s % config.capacities.size()];
    }

    inst.ues.resize(config.n_ues);
    for (int i = 0; i < config.n_ues; ++i) {
        Ue& ue = inst.ues[i];
        ue.position = {rng.uniform(0.0, config.area_m), rng.uniform(0.0, config.area_m)};
        ue.data_bits = rng.lognormal_with_mean(config.data_mean_bits, config.data_log_sigma);
        ue.cycles = rng.lognormal_with_mean(config.cycles_mean, config.cycles_log_sigma);
        ue.f_local = config.f_local;
    }

    recompute_gains(inst, &rng);
    inst.validate();
    return inst;
}

MecInstance step_dynamics(const MecInstance& instance, double dt_s, std::uint64_t seed) {
    if (!(dt_s > 0.0)) raise(Errc::ConfigError, "dt_s must be > 0");
    Rng rng(derive_seed(seed, 0xD1AA17C5));

    MecInstance next = instance;
    for (auto& ue : next.ues) {
        const double heading = rng.uniform(0.0, 6.283185307179586476925286766559);
        const double speed = kMaxUeSpeedMps * rng.uniform_open0();
        const double step = speed * dt_s;
        ue.position.x = reflect_into(ue.position.x + step * std::cos(heading), next.area_m);
        ue.position.y = reflect_into(ue.position.y + step * std::sin(heading), next.area_m);
    }
    recompute_gains(next, &rng);
    return next;
}

}  // namespace lambo
