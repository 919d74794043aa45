#include "lambo/alef.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace lambo {

void QueryPolicy::validate() const {
    if (budget < 0) raise(Errc::ConfigError, "query budget must be >= 0");
    if (mode == QueryMode::TopKPerWindow && (window < 1 || k < 1)) {
        raise(Errc::ConfigError, "TopK policy needs window >= 1 and k >= 1");
    }
    if (threshold < 0.0) raise(Errc::ConfigError, "entropy threshold must be >= 0");
}

void FinetuneConfig::validate() const {
    if (!(lr > 0.0)) raise(Errc::ConfigError, "finetune lr must be > 0");
    if (w_ce < 0.0 || w_mse < 0.0) raise(Errc::ConfigError, "loss weights must be >= 0");
    if (steps_per_batch < 1 || batch_size < 1 || replay_capacity < 1) {
        raise(Errc::ConfigError, "steps_per_batch, batch_size, replay_capacity must be >= 1");
    }
    if (!(dt_s > 0.0)) raise(Errc::ConfigError, "dt_s must be > 0");
}

double instance_uncertainty(const DecodeOutput& output) {
    if (output.per_ue_entropy.empty()) return 0.0;
    double sum = 0.0;
    for (double h : output.per_ue_entropy) sum += h;
    return sum / static_cast<double>(output.per_ue_entropy.size());
}

std::vector<int> select_queries(const std::vector<double>& scores, const QueryPolicy& policy) {
    policy.validate();
    for (double s : scores) {
        if (!std::isfinite(s)) raise(Errc::NonFinite, "select_queries: non-finite score");
    }
    std::vector<int> selected;
    if (policy.budget == 0) return selected;

    if (policy.mode == QueryMode::Threshold) {
        for (int i = 0; i < static_cast<int>(scores.size()); ++i) {
            if (scores[i] >= policy.threshold) {
                selected.push_back(i);
                if (static_cast<int>(selected.size()) == policy.budget) break;
            }
        }
        return selected;
    }

    const int n = static_cast<int>(scores.size());
    for (int begin = 0; begin < n; begin += policy.window) {
        const int end = std::min(begin + policy.window, n);
        std::vector<int> idx;
        for (int i = begin; i < end; ++i) idx.push_back(i);
        // Stable sort keeps earlier arrivals first on score ties.
        std::stable_sort(idx.begin(), idx.end(),
                         [&](int a, int b) { return scores[a] > scores[b]; });
        std::vector<int> window_pick(idx.begin(),
                                     idx.begin() + std::min<std::size_t>(policy.k, idx.size()));
        std::sort(window_pick.begin(), window_pick.end());
        for (int i : window_pick) {
            selected.push_back(i);
            if (static_cast<int>(selected.size()) == policy.budget) return selected;
        }
    }
    return selected;
}

ExpertLabel expert_solve(const MecInstance& instance, Prompt prompt, ExpertKind kind,
                         const OracleBudget& budget, const DeConfig& de) {
    const std::int64_t count = exact_enumeration_count(instance.n_ues(), instance.n_servers());
    const bool use_exact =
        kind == ExpertKind::Exact || (kind == ExpertKind::Auto && count <= budget.max_enumerations);

    ExpertLabel label;
    if (use_exact) {
        const ExactResult exact = solve_exact(instance, prompt, budget);
        label.assoc = exact.decision.assoc;
        label.alloc_abs = exact.decision.alloc;
        label.objective = exact.objective;
        label.feasible = exact.feasible;
    } else {
        const Decision d = solve_de(instance, prompt, de);
        const Evaluation ev = evaluate(instance, d, prompt);
        label.assoc = d.assoc;
        label.alloc_abs = d.alloc;
        label.objective = ev.penalized;
        label.feasible = ev.latency_violation == 0.0 && ev.capacity_violation == 0.0;
    }
    return label;
}

LabelTargets label_to_targets(const MecInstance& instance, const ExpertLabel& label) {
    const int n = instance.n_ues();
    const int m = instance.n_servers();
    if (static_cast<int>(label.assoc.size()) != n ||
        static_cast<int>(label.alloc_abs.size()) != n) {
        raise(Errc::ShapeMismatch, "label length != number of UEs");
    }

    LabelTargets targets;
    targets.cls = label.assoc;
    targets.rho_exact.assign(n, 0.0);
    targets.rho_clamped.assign(n, 0.0);

    std::vector<double> remaining(m);
    for (int s = 0; s < m; ++s) remaining[s] = instance.servers[s].capacity;

    for (int i = 0; i < n; ++i) {
        if (label.assoc[i] == 0) continue;
        const int s = label.assoc[i] - 1;
        if (!(remaining[s] > 0.0)) {
            raise(Errc::InvalidDecision, "label over-allocates a server");
        }
        // Rounding in the label can push the last fraction a hair above 1.
        const double rho = std::min(1.0, label.alloc_abs[i] / remaining[s]);
        targets.rho_exact[i] = rho;
        targets.rho_clamped[i] = std::clamp(rho, 0.01, 0.99);
        remaining[s] = std::max(0.0, remaining[s] - label.alloc_abs[i]);
    }
    return targets;
}

namespace {

struct ExampleTargets {
    const LabeledExample* example;
    LabelTargets targets;
};

/// Teacher-forced loss for one example; nodes live on the returned graph's tape.
Var example_loss(DecodeGraph& g, const ExampleTargets& ex, const FinetuneConfig& cfg) {
    Tape& tape = g.tape;
    const int n = ex.example->instance.n_ues();
    Var loss = tape.leaf(Tensor::scalar(0.0));
    int offloaded = 0;
    for (int i = 0; i < n; ++i) {
        const int cls = ex.targets.cls[i];
        const Var ce = tape.scale(tape.pick(g.step_log_prob_rows[i], 0, cls), -1.0);
        loss = tape.add(loss, tape.scale(ce, cfg.w_ce / n));
        if (cls >= 1) ++offloaded;
    }
    if (offloaded > 0 && cfg.w_mse > 0.0) {
        for (int i = 0; i < n; ++i) {
            if (ex.targets.cls[i] == 0) continue;
            const Var diff =
                tape.add_scalar(g.step_rho_means[i], -ex.targets.rho_clamped[i]);
            loss = tape.add(loss, tape.scale(tape.mul(diff, diff), cfg.w_mse / offloaded));
        }
    }
    return loss;
}

DecodeGraph forced_graph(const ParamSet& actor, const AedConfig& cfg, const ExampleTargets& ex) {
    ForcedTrajectory traj;
    traj.assoc = ex.targets.cls;
    traj.rho = ex.targets.rho_exact;
    return decode_sequence_graph(ex.example->instance, ex.example->prompt, actor, cfg,
                                 DecodeMode::Greedy, 0, &traj);
}

double set_loss(const ParamSet& actor, const AedConfig& cfg,
                const std::vector<ExampleTargets>& set, const FinetuneConfig& finetune) {
    double total = 0.0;
    for (const auto& ex : set) {
        DecodeGraph g = forced_graph(actor, cfg, ex);
        total += g.tape.value(example_loss(g, ex, finetune)).data[0];
    }
    return total / static_cast<double>(set.size());
}

}  // namespace

FinetuneStats finetune_decoder(ParamSet& actor, const AedConfig& cfg,
                               const std::vector<LabeledExample>& labeled,
                               const FinetuneConfig& finetune, OptimState* optim) {
    finetune.validate();
    if (labeled.empty()) raise(Errc::ConfigError, "finetune_decoder: empty labeled set");

    std::vector<ExampleTargets> set;
    set.reserve(labeled.size());
    for (const auto& ex : labeled) {
        set.push_back({&ex, label_to_targets(ex.instance, ex.label)});
    }

    const std::vector<int> trainable = actor.indices_with_prefix(kDecoderPrefixes);
    OptimState local_optim(actor, AdamConfig{finetune.lr});
    OptimState& opt = optim != nullptr ? *optim : local_optim;

    FinetuneStats stats;
    stats.initial_loss = set_loss(actor, cfg, set, finetune);

    std::vector<Tensor> grads;
    grads.reserve(actor.tensors.size());
    for (const Tensor& t : actor.tensors) grads.emplace_back(t.rows(), t.cols());

    Rng rng(derive_seed(finetune.seed, 0xF17E));
    for (int step = 0; step < finetune.steps_per_batch; ++step) {
        for (Tensor& g : grads) std::fill(g.data.begin(), g.data.end(), 0.0);
        const int batch = std::min<int>(finetune.batch_size, static_cast<int>(set.size()));
        for (int b = 0; b < batch; ++b) {
            const std::size_t pick = set.size() <= static_cast<std::size_t>(finetune.batch_size)
                                         ? static_cast<std::size_t>(b)
                                         : rng.below(set.size());
            DecodeGraph g = forced_graph(actor, cfg, set[pick]);
            const Var loss = example_loss(g, set[pick], finetune);
            g.tape.backward(loss);
            for (std::size_t i = 0; i < grads.size(); ++i) {
                const Tensor& gt = g.tape.grad(g.param_vars[i]);
                if (gt.data.empty()) continue;
                for (std::size_t k = 0; k < grads[i].data.size(); ++k) {
                    grads[i].data[k] += gt.data[k] / batch;
                }
            }
        }
        optim_step(actor, grads, opt, trainable);
        ++stats.steps;
    }

    stats.final_loss = set_loss(actor, cfg, set, finetune);
    return stats;
}

SessionResult drift_session(const MecInstance& initial_instance, const ParamSet& pretrained_actor,
                            const AedConfig& cfg, Prompt prompt, const QueryPolicy& policy,
                            const FinetuneConfig& finetune, int steps, ExpertKind expert,
                            const OracleBudget& budget, const DeConfig& de) {
    policy.validate();
    finetune.validate();
    if (steps < 1) raise(Errc::ConfigError, "drift_session: steps must be >= 1");

    SessionResult result;
    result.adapted = pretrained_actor;
    const ParamSet& frozen = pretrained_actor;
    OptimState optim(result.adapted, AdamConfig{finetune.lr});

    std::deque<LabeledExample> replay;
    struct WindowEntry {
        int step;
        double score;
        LabeledExample example;
    };
    std::vector<WindowEntry> window;

    auto tune_on_replay = [&]() {
        std::vector<LabeledExample> batch(replay.begin(), replay.end());
        finetune_decoder(result.adapted, cfg, batch, finetune, &optim);
    };
    auto query = [&](WindowEntry& entry, SessionStep& row) {
        replay.push_back(std::move(entry.example));
        while (static_cast<int>(replay.size()) > finetune.replay_capacity) replay.pop_front();
        ++result.queries_used;
        row.queried = true;
    };

    MecInstance instance = initial_instance;
    double adapting_gap_sum = 0.0, frozen_gap_sum = 0.0;

    for (int t = 1; t <= steps; ++t) {
        instance = step_dynamics(instance, finetune.dt_s, derive_seed(finetune.seed, 0xD81F7, t));

        const DecodeOutput adapting_out =
            decode_sequence(instance, prompt, result.adapted, cfg, DecodeMode::Greedy, 0);
        const DecodeOutput frozen_out =
            decode_sequence(instance, prompt, frozen, cfg, DecodeMode::Greedy, 0);
        const ExpertLabel label = expert_solve(instance, prompt, expert, budget, de);

        SessionStep row;
        row.step = t;
        row.score = instance_uncertainty(adapting_out);
        row.adapting_penalized = evaluate(instance, adapting_out.decision, prompt).penalized;
        row.frozen_penalized = evaluate(instance, frozen_out.decision, prompt).penalized;
        row.expert_penalized = label.objective;
        adapting_gap_sum += (row.adapting_penalized - row.expert_penalized) / row.expert_penalized;
        frozen_gap_sum += (row.frozen_penalized - row.expert_penalized) / row.expert_penalized;

        const bool budget_left = result.queries_used < policy.budget;
        if (policy.mode == QueryMode::Threshold) {
            if (budget_left && row.score >= policy.threshold) {
                WindowEntry entry{t, row.score, {instance, prompt, label}};
                query(entry, row);
                result.steps.push_back(row);
                tune_on_replay();
                continue;
            }
            result.steps.push_back(row);
            continue;
        }

        window.push_back({t, row.score, {instance, prompt, label}});
        result.steps.push_back(row);
        if (static_cast<int>(window.size()) == policy.window || t == steps) {
            std::stable_sort(window.begin(), window.end(),
                             [](const WindowEntry& a, const WindowEntry& b) {
                                 return a.score > b.score;
                             });
            bool tuned = false;
            for (int j = 0; j < policy.k && j < static_cast<int>(window.size()); ++j) {
                if (result.queries_used >= policy.budget) break;
                query(window[j], result.steps[window[j].step - 1]);
                tuned = true;
            }
            window.clear();
            if (tuned) tune_on_replay();
        }
    }

    result.mean_adapting_gap = adapting_gap_sum / steps;
    result.mean_frozen_gap = frozen_gap_sum / steps;
    return result;
}

}  // namespace lambo
