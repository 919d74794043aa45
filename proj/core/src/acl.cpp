#include "lambo/acl.hpp"

#include <algorithm>
#include <cmath>

namespace lambo {

void AclConfig::validate() const {
    if (epochs < 1 || instances_per_epoch < 1 || batch_size < 1) {
        raise(Errc::ConfigError, "epochs, instances_per_epoch, batch_size must be >= 1");
    }
    if (!(lr > 0.0) || !(penalty_lambda > 0.0)) {
        raise(Errc::ConfigError, "lr and penalty_lambda must be > 0");
    }
    if (entropy_beta < 0.0) raise(Errc::ConfigError, "entropy_beta must be >= 0");
    if (eval_every < 1 || holdout_size < 1 || early_stop_window < 1) {
        raise(Errc::ConfigError, "eval_every, holdout_size, early_stop_window must be >= 1");
    }
}

double reward(const MecInstance& instance, const Decision& decision, Prompt prompt) {
    return -evaluate(instance, decision, prompt).penalized;
}

Var critic_value_graph(Tape& tape, const AttachedParams& params, const MecInstance& instance,
                       Prompt prompt, const AedConfig& config) {
    const EmbeddingSet embeddings = embed_inputs(tape, params, instance, prompt, config);
    const Var context = encode(tape, params, embeddings, config);
    const Var pooled = tape.mean_rows(context);
    const Var v = tape.add_rowvec(tape.matmul(pooled, params["value.w"]), params["value.b"]);
    return tape.pick(v, 0, 0);
}

double critic_value(const MecInstance& instance, Prompt prompt, const ParamSet& critic_params,
                    const AedConfig& config) {
    Tape tape;
    AttachedParams ap(tape, critic_params);
    return tape.value(critic_value_graph(tape, ap, instance, prompt, config)).data[0];
}

InstanceGenerator seeded_generator(GenConfig config, std::uint64_t base_seed) {
    config.validate();
    return [config, base_seed](std::uint64_t index) {
        return generate_instance(config, derive_seed(base_seed, 0x175, index));
    };
}

namespace {

struct GradAccum {
    std::vector<Tensor> grads;

    explicit GradAccum(const ParamSet& params) {
        grads.reserve(params.tensors.size());
        for (const Tensor& t : params.tensors) grads.emplace_back(t.rows(), t.cols());
    }
    void add_scaled(const Tape& tape, const std::vector<Var>& vars, double scale) {
        for (std::size_t i = 0; i < grads.size(); ++i) {
            const Tensor& g = tape.grad(vars[i]);
            if (g.data.empty()) continue;
            for (std::size_t k = 0; k < grads[i].data.size(); ++k) {
                grads[i].data[k] += scale * g.data[k];
            }
        }
    }
    void reset() {
        for (Tensor& g : grads) std::fill(g.data.begin(), g.data.end(), 0.0);
    }
};

double greedy_mean_penalized(const ParamSet& actor, const AedConfig& cfg,
                             const std::vector<MecInstance>& set, Prompt prompt) {
    double sum = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const DecodeOutput out =
            decode_sequence(set[i], prompt, actor, cfg, DecodeMode::Greedy, 0);
        sum += evaluate(set[i], out.decision, prompt).penalized;
    }
    return sum / static_cast<double>(set.size());
}

}  // namespace

PretrainResult pretrain(const InstanceGenerator& generator, const AedConfig& aed_config,
                        const AclConfig& acl) {
    aed_config.validate();
    acl.validate();

    PretrainResult result;
    result.actor = init_actor_params(aed_config, derive_seed(acl.seed, 0xA));
    result.critic = init_critic_params(aed_config, derive_seed(acl.seed, 0xC));

    OptimState actor_opt(result.actor, AdamConfig{acl.lr});
    OptimState critic_opt(result.critic, AdamConfig{acl.lr});
    GradAccum actor_grads(result.actor);
    GradAccum critic_grads(result.critic);

    std::vector<MecInstance> holdout;
    holdout.reserve(acl.holdout_size);
    for (int i = 0; i < acl.holdout_size; ++i) {
        holdout.push_back(generator(derive_seed(acl.seed, 0x401D, i)));
    }

    ParamSet actor_snapshot = result.actor;
    ParamSet critic_snapshot = result.critic;
    std::vector<double> reward_history;
    std::uint64_t rollout_index = 0;

    for (int epoch = 0; epoch < acl.epochs; ++epoch) {
        TrainLogRow row;
        row.epoch = epoch;
        int n_lat = 0, n_en = 0;
        double entropy_count = 0.0;

        try {
            int done = 0;
            while (done < acl.instances_per_epoch) {
                const int batch = std::min(acl.batch_size, acl.instances_per_epoch - done);
                actor_grads.reset();
                critic_grads.reset();

                for (int k = 0; k < batch; ++k, ++done, ++rollout_index) {
                    MecInstance instance = generator(rollout_index);
                    instance.phys.penalty_lambda = acl.penalty_lambda;

                    Rng prompt_rng(derive_seed(acl.seed, 0x9007, rollout_index));
                    const Prompt prompt = prompt_rng.uniform01() < 0.5 ? Prompt::min_latency()
                                                                       : Prompt::min_energy();

                    DecodeGraph g = decode_sequence_graph(
                        instance, prompt, result.actor, aed_config, DecodeMode::Sample,
                        derive_seed(acl.seed, 0x5A3, rollout_index));
                    const Evaluation ev = evaluate(instance, g.output.decision, prompt);
                    const double r = -ev.penalized;

                    // Critic forward/backward on its own tape.
                    Tape critic_tape;
                    AttachedParams critic_ap(critic_tape, result.critic);
                    const Var v_node =
                        critic_value_graph(critic_tape, critic_ap, instance, prompt, aed_config);
                    const double v = critic_tape.value(v_node).data[0];
                    const Var v_diff =
                        critic_tape.add_scalar(critic_tape.scale(v_node, -1.0), r);
                    const Var critic_loss = critic_tape.mul(v_diff, v_diff);
                    critic_tape.backward(critic_loss);
                    critic_grads.add_scaled(critic_tape, critic_ap.vars(), 1.0 / batch);

                    // Actor loss: -(R - V) * log_prob - beta * entropy.
                    const double advantage = r - v;
                    const Var actor_loss =
                        g.tape.add(g.tape.scale(g.log_prob, -advantage),
                                   g.tape.scale(g.entropy_sum, -acl.entropy_beta));
                    g.tape.backward(actor_loss);
                    actor_grads.add_scaled(g.tape, g.param_vars, 1.0 / batch);

                    row.mean_reward += r;
                    row.actor_loss += g.tape.value(actor_loss).data[0];
                    row.critic_loss += critic_tape.value(critic_loss).data[0];
                    for (double h : g.output.per_ue_entropy) row.mean_entropy += h;
                    entropy_count += static_cast<double>(g.output.per_ue_entropy.size());
                    if (prompt.kind == PromptKind::MinLatency) {
                        row.mean_penalized_min_latency += ev.penalized;
                        ++n_lat;
                    } else {
                        row.mean_penalized_min_energy += ev.penalized;
                        ++n_en;
                    }
                }

                optim_step(result.actor, actor_grads.grads, actor_opt);
                optim_step(result.critic, critic_grads.grads, critic_opt);
            }
        } catch (const Error& e) {
            if (e.code() != Errc::NonFinite) throw;
            // Training diverged: return the last completed epoch's parameters.
            result.actor = actor_snapshot;
            result.critic = critic_snapshot;
            result.aborted_non_finite = true;
            return result;
        }

        row.mean_reward /= acl.instances_per_epoch;
        row.actor_loss /= acl.instances_per_epoch;
        row.critic_loss /= acl.instances_per_epoch;
        row.mean_entropy /= entropy_count > 0.0 ? entropy_count : 1.0;
        if (n_lat > 0) row.mean_penalized_min_latency /= n_lat;
        if (n_en > 0) row.mean_penalized_min_energy /= n_en;

        if ((epoch + 1) % acl.eval_every == 0 || epoch + 1 == acl.epochs) {
            row.has_holdout = true;
            row.holdout_min_latency =
                greedy_mean_penalized(result.actor, aed_config, holdout, Prompt::min_latency());
            row.holdout_min_energy =
                greedy_mean_penalized(result.actor, aed_config, holdout, Prompt::min_energy());
        }
        result.log.push_back(row);

        actor_snapshot = result.actor;
        critic_snapshot = result.critic;
        reward_history.push_back(row.mean_reward);

        // Early stop: best mean reward of the last window improves on the
        // previous window's best by less than delta.
        const int w = acl.early_stop_window;
        if (static_cast<int>(reward_history.size()) >= 2 * w) {
            const auto last = reward_history.end();
            const double recent_best = *std::max_element(last - w, last);
            const double prev_best = *std::max_element(last - 2 * w, last - w);
            if (recent_best - prev_best < acl.early_stop_delta) break;
        }
    }

    return result;
}

PolicyEval evaluate_policy(const ParamSet& actor, const AedConfig& config,
                           const std::vector<MecInstance>& instances, Prompt prompt,
                           DecodeMode mode, const std::optional<OracleBudget>& oracle_budget) {
    if (instances.empty()) raise(Errc::ConfigError, "evaluate_policy: empty instance set");
    PolicyEval out;
    double gap_sum = 0.0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const DecodeOutput decoded =
            decode_sequence(instances[i], prompt, actor, config, mode, derive_seed(0xE7A1, i));
        const double j = evaluate(instances[i], decoded.decision, prompt).penalized;
        out.mean_objective += j;
        if (oracle_budget.has_value()) {
            const ExactResult oracle = solve_exact(instances[i], prompt, *oracle_budget);
            gap_sum += (j - oracle.objective) / oracle.objective;
        }
    }
    out.mean_objective /= static_cast<double>(instances.size());
    if (oracle_budget.has_value()) {
        out.mean_gap_to_oracle = gap_sum / static_cast<double>(instances.size());
    }
    return out;
}

}  // namespace lambo
