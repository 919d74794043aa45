#pragma once

#include <cstdint>
#include <vector>

#include "lambo/error.hpp"

namespace lambo {

/// Physical-layer and constraint constants shared by every UE/server pair.
struct PhysParams {
    double bandwidth_hz = 1e6;
    double noise_power_w = 1e-10;
    double tx_power_w = 1.0;
    double local_power_w = 1.0;
    double ref_gain = 1e-4;      // channel gain at 1 m
    double pathloss_exp = 3.0;
    double t_max_s = 1.5;
    double penalty_lambda = 10.0;
    bool rayleigh_fading = false;  // multiplicative exponential(1) factor, redrawn on dynamics steps

    void validate() const;
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

struct Ue {
    Vec2 position;
    double data_bits = 0.0;   // task upload size
    double cycles = 0.0;      // total CPU cycles required
    double f_local = 0.0;     // local CPU speed, cycles/s
};

struct EdgeServer {
    Vec2 position;
    double capacity = 0.0;  // cycles/s
};

/// Full snapshot of the system: the ground-truth object every module evaluates against.
struct MecInstance {
    std::vector<Ue> ues;
    std::vector<EdgeServer> servers;
    std::vector<std::vector<double>> gains;  // N x M, dimensionless
    PhysParams phys;
    double area_m = 50.0;
    std::uint64_t seed = 0;  // provenance; 0 for hand-built instances

    int n_ues() const { return static_cast<int>(ues.size()); }
    int n_servers() const { return static_cast<int>(servers.size()); }
    void validate() const;
};

enum class PromptKind { MinLatency, MinEnergy };

/// Task instruction token. token_id 0 <=> MinLatency, 1 <=> MinEnergy.
struct Prompt {
    PromptKind kind = PromptKind::MinLatency;

    int token_id() const { return kind == PromptKind::MinLatency ? 0 : 1; }
    static Prompt min_latency() { return Prompt{PromptKind::MinLatency}; }
    static Prompt min_energy() { return Prompt{PromptKind::MinEnergy}; }
};

/// Per-UE association and absolute allocated server cycles.
/// assoc[i] = 0 means local execution, m >= 1 means server m (1-based).
struct Decision {
    std::vector<int> assoc;
    std::vector<double> alloc;  // cycles/s; 0 where assoc = 0

    void validate(int n_ues, int n_servers) const;
};

struct Evaluation {
    double objective = 0.0;  // seconds (avg) for MinLatency, joules (total) for MinEnergy
    std::vector<double> per_ue_latency;
    std::vector<double> per_ue_energy;
    double latency_violation = 0.0;
    double capacity_violation = 0.0;
    double penalized = 0.0;
};

/// Configuration for the seeded instance generator.
struct GenConfig {
    int n_ues = 50;
    int n_servers = 4;
    double area_m = 50.0;
    // Cycled/truncated to n_servers.
    std::vector<double> capacities = {1.5e10, 1.5e10, 3e10, 5e10};
    double data_mean_bits = 2e6;
    double data_log_sigma = 0.5;
    double cycles_mean = 1e9;
    double cycles_log_sigma = 0.5;
    double f_local = 1e9;
    PhysParams phys;

    void validate() const;
};

/// Large-scale path loss, clamped below 1 m: g = g0 * max(d, 1)^(-alpha).
double channel_gain(Vec2 ue_pos, Vec2 server_pos, const PhysParams& phys);

/// Shannon uplink rate in bits/s: B * log2(1 + p_tx * g / sigma^2).
double uplink_rate(double gain, const PhysParams& phys);

/// Ground-truth evaluator. Pure; throws ShapeMismatch on a wrong-length decision.
Evaluation evaluate(const MecInstance& instance, const Decision& decision, Prompt prompt);

/// Deterministic seeded instance: uniform positions, log-normal task sizes.
MecInstance generate_instance(const GenConfig& config, std::uint64_t seed);

/// Random-waypoint mobility step: speed ~ U(0, 1.2] m/s per UE, positions
/// reflected at the area boundary, gains recomputed. Tasks are unchanged.
MecInstance step_dynamics(const MecInstance& instance, double dt_s, std::uint64_t seed);

constexpr double kMaxUeSpeedMps = 1.2;

}  // namespace lambo
