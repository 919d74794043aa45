#pragma once

#include <cstdint>
#include <vector>

#include "lambo/acl.hpp"
#include "lambo/aed.hpp"
#include "lambo/mec.hpp"
#include "lambo/solvers.hpp"

namespace lambo {

enum class QueryMode { TopKPerWindow, Threshold };

struct QueryPolicy {
    QueryMode mode = QueryMode::TopKPerWindow;
    int budget = 50;      // max expert calls consumed for labels
    int window = 4;       // steps per selection window (TopK mode)
    int k = 1;            // labels per window (TopK mode)
    double threshold = 0.0;  // nats (Threshold mode)

    void validate() const;
};

struct ExpertLabel {
    std::vector<int> assoc;
    std::vector<double> alloc_abs;
    double objective = 0.0;  // penalized value of the label
    bool feasible = true;    // false when even the best assignment violates a constraint
};

enum class ExpertKind { Auto, Exact, De };

struct FinetuneConfig {
    double lr = 1e-3;
    double w_ce = 1.0;
    double w_mse = 1.0;
    int steps_per_batch = 25;  // optimizer steps per labeled batch
    int batch_size = 8;
    double dt_s = 1.0;         // drift between consecutive samples
    int replay_capacity = 256;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Mean over UEs of the per-UE masked-categorical entropy, in nats.
/// Expects a sample-free (greedy) forward pass.
double instance_uncertainty(const DecodeOutput& output);

/// Offline selection over a scored stream; returns selected indices in
/// arrival order. TopK picks the k highest scores per consecutive window
/// (ties to earlier arrival); Threshold keeps scores >= threshold. Both
/// stop once the budget is exhausted.
std::vector<int> select_queries(const std::vector<double>& scores, const QueryPolicy& policy);

/// Exact enumeration when it fits the budget, differential evolution
/// otherwise (or as forced by kind). Infeasible optima are returned as
/// minimal-violation labels with feasible = false.
ExpertLabel expert_solve(const MecInstance& instance, Prompt prompt, ExpertKind kind,
                         const OracleBudget& budget = {}, const DeConfig& de = {});

struct LabelTargets {
    std::vector<int> cls;              // association target per UE
    std::vector<double> rho_exact;     // fraction-of-remaining replaying alloc_abs exactly
    std::vector<double> rho_clamped;   // loss target, clamped to [0.01, 0.99]
};

/// Converts absolute expert allocations into the decoder's sequential
/// fraction-of-remaining parameterization (canonical UE order). Replaying
/// rho_exact through the decode state updates reproduces alloc_abs.
LabelTargets label_to_targets(const MecInstance& instance, const ExpertLabel& label);

struct LabeledExample {
    MecInstance instance;
    Prompt prompt;
    ExpertLabel label;
};

struct FinetuneStats {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    int steps = 0;
};

/// Supervised decoder update: w_ce * cross-entropy on the masked categorical
/// plus w_mse * squared rho error over offloaded UEs, teacher-forced on the
/// label trajectory. Only decoder and head parameters change; encoder and
/// input-embedding bytes are identical before and after.
FinetuneStats finetune_decoder(ParamSet& actor, const AedConfig& config,
                               const std::vector<LabeledExample>& labeled,
                               const FinetuneConfig& finetune, OptimState* optim = nullptr);

struct SessionStep {
    int step = 0;
    bool queried = false;
    double score = 0.0;
    double adapting_penalized = 0.0;
    double frozen_penalized = 0.0;
    double expert_penalized = 0.0;
};

struct SessionResult {
    std::vector<SessionStep> steps;
    double mean_adapting_gap = 0.0;  // mean relative gap to the expert
    double mean_frozen_gap = 0.0;
    int queries_used = 0;
    ParamSet adapted;  // decoder-tuned parameters at session end
};

/// Online drift loop: step the environment, decode greedily with both the
/// adapting and the frozen model, score uncertainty, query the expert within
/// the policy budget, and fine-tune the decoder on a replay of recent labels.
SessionResult drift_session(const MecInstance& initial_instance, const ParamSet& pretrained_actor,
                            const AedConfig& config, Prompt prompt, const QueryPolicy& policy,
                            const FinetuneConfig& finetune, int steps,
                            ExpertKind expert = ExpertKind::Exact,
                            const OracleBudget& budget = {}, const DeConfig& de = {});

}  // namespace lambo
