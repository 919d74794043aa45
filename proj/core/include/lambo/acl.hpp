#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "lambo/aed.hpp"
#include "lambo/mec.hpp"
#include "lambo/solvers.hpp"
#include "lambo/tensor.hpp"

namespace lambo {

struct AclConfig {
    int epochs = 300;
    int instances_per_epoch = 128;
    int batch_size = 16;
    double lr = 1e-4;
    double penalty_lambda = 10.0;
    double entropy_beta = 0.01;
    std::uint64_t seed = 42;
    int eval_every = 10;
    int holdout_size = 64;
    double early_stop_delta = 1e-4;
    int early_stop_window = 10;

    void validate() const;
};

struct TrainLogRow {
    int epoch = 0;
    double mean_reward = 0.0;
    double mean_penalized_min_latency = 0.0;
    double mean_penalized_min_energy = 0.0;
    double actor_loss = 0.0;
    double critic_loss = 0.0;
    double mean_entropy = 0.0;
    bool has_holdout = false;
    double holdout_min_latency = 0.0;  // greedy mean penalized on the held-out set
    double holdout_min_energy = 0.0;
};

using TrainLog = std::vector<TrainLogRow>;

/// R = -penalized objective; higher is better.
double reward(const MecInstance& instance, const Decision& decision, Prompt prompt);

/// Critic forward as a graph node (same embedding + encoder as the actor,
/// mean-pooled, linear scalar head).
Var critic_value_graph(Tape& tape, const AttachedParams& params, const MecInstance& instance,
                       Prompt prompt, const AedConfig& config);

double critic_value(const MecInstance& instance, Prompt prompt, const ParamSet& critic_params,
                    const AedConfig& config);

using InstanceGenerator = std::function<MecInstance(std::uint64_t index)>;

/// Generator drawing instance k from derive_seed(base_seed, k).
InstanceGenerator seeded_generator(GenConfig config, std::uint64_t base_seed);

struct PretrainResult {
    ParamSet actor;
    ParamSet critic;
    TrainLog log;
    bool aborted_non_finite = false;  // params are the last finished epoch when set
};

/// Actor-critic pre-training across both prompts (uniform per instance).
/// Advantage A = R - V, actor loss -A*log_prob - beta*entropy, critic loss
/// (R - V)^2, one optimizer step per batch on each network. Deterministic
/// for a fixed config seed. Stops early once the windowed best mean reward
/// improves by less than early_stop_delta.
PretrainResult pretrain(const InstanceGenerator& generator, const AedConfig& aed_config,
                        const AclConfig& acl_config);

struct PolicyEval {
    double mean_objective = 0.0;    // penalized, for comparability across solvers
    std::optional<double> mean_gap_to_oracle;
};

/// Greedy (or sampled) policy evaluation over an instance set. When
/// oracle_budget is given the mean relative gap to the exact oracle is
/// computed, raising OracleTooLarge if enumeration does not fit the budget.
PolicyEval evaluate_policy(const ParamSet& actor, const AedConfig& config,
                           const std::vector<MecInstance>& instances, Prompt prompt,
                           DecodeMode mode,
                           const std::optional<OracleBudget>& oracle_budget = std::nullopt);

}  // namespace lambo
