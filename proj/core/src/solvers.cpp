#include "lambo/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lambo/rng.hpp"

namespace lambo {

void DeConfig::validate() const {
    if (population < 4) raise(Errc::ConfigError, "DE population must be >= 4");
    if (generations < 0) raise(Errc::ConfigError, "DE generations must be >= 0");
    if (!(diff_weight > 0.0) || diff_weight > 2.0) {
        raise(Errc::ConfigError, "DE diff_weight must be in (0, 2]");
    }
    if (crossover < 0.0 || crossover > 1.0) {
        raise(Errc::ConfigError, "DE crossover must be in [0, 1]");
    }
}

Decision solve_local(const MecInstance& instance) {
    Decision d;
    d.assoc.assign(instance.n_ues(), 0);
    d.alloc.assign(instance.n_ues(), 0.0);
    return d;
}

namespace {

// Shared repair: turn (association, fraction-of-remaining) pairs into
// absolute allocations in canonical UE order.
Decision repair_fractions(const MecInstance& instance, const std::vector<int>& assoc,
                          const std::vector<double>& fractions) {
    const int n = instance.n_ues();
    Decision d;
    d.assoc = assoc;
    d.alloc.assign(n, 0.0);
    std::vector<double> remaining(instance.n_servers());
    for (int s = 0; s < instance.n_servers(); ++s) remaining[s] = instance.servers[s].capacity;
    for (int i = 0; i < n; ++i) {
        if (assoc[i] == 0) continue;
        const int s = assoc[i] - 1;
        d.alloc[i] = fractions[i] * remaining[s];
        remaining[s] -= d.alloc[i];
    }
    return d;
}

}  // namespace

Decision solve_random(const MecInstance& instance, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x5A4D));
    const int n = instance.n_ues();
    const int m = instance.n_servers();
    std::vector<int> assoc(n);
    std::vector<double> frac(n, 0.0);
    for (int i = 0; i < n; ++i) {
        assoc[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(m) + 1));
        if (assoc[i] >= 1) frac[i] = rng.uniform_open0();  // (0, 1]
    }
    // A fraction of exactly 1 would zero the remaining capacity; nudge inside.
    for (double& f : frac) {
        if (f == 1.0) f = 1.0 - 1e-12;
    }
    return repair_fractions(instance, assoc, frac);
}

std::vector<double> inner_alloc_latency(const std::vector<double>& assigned_cycles,
                                        double capacity) {
    if (assigned_cycles.empty() || !(capacity > 0.0)) {
        raise(Errc::ConfigError, "inner_alloc_latency: empty task list or non-positive capacity");
    }
    double sqrt_sum = 0.0;
    for (double c : assigned_cycles) sqrt_sum += std::sqrt(c);
    std::vector<double> out(assigned_cycles.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = capacity * std::sqrt(assigned_cycles[j]) / sqrt_sum;
    }
    return out;
}

std::optional<std::vector<double>> inner_alloc_energy(const std::vector<double>& assigned_cycles,
                                                      double capacity,
                                                      const std::vector<double>& t_tx,
                                                      double t_max) {
    std::vector<double> out(assigned_cycles.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < out.size(); ++j) {
        const double slack = t_max - t_tx[j];
        if (!(slack > 0.0)) return std::nullopt;
        out[j] = assigned_cycles[j] / slack;
        sum += out[j];
    }
    if (sum > capacity) return std::nullopt;
    return out;
}

std::int64_t exact_enumeration_count(int n_ues, int n_servers) {
    std::int64_t count = 1;
    for (int i = 0; i < n_ues; ++i) {
        if (count > std::numeric_limits<std::int64_t>::max() / (n_servers + 1)) {
            return std::numeric_limits<std::int64_t>::max();
        }
        count *= n_servers + 1;
    }
    return count;
}

namespace {

// Allocation for one server group under the prompt's rule. The energy rule
// can be infeasible; fall back to the latency split, which always exists and
// exhausts the capacity, and let the penalty account for the damage.
std::vector<double> server_alloc(Prompt prompt, const std::vector<double>& cycles, double capacity,
                                 const std::vector<double>& t_tx, double t_max) {
    if (prompt.kind == PromptKind::MinEnergy) {
        if (auto alloc = inner_alloc_energy(cycles, capacity, t_tx, t_max)) return *alloc;
    }
    return inner_alloc_latency(cycles, capacity);
}

Decision decision_for_assoc(const MecInstance& instance, Prompt prompt,
                            const std::vector<int>& assoc) {
    const int n = instance.n_ues();
    const int m = instance.n_servers();
    Decision d;
    d.assoc = assoc;
    d.alloc.assign(n, 0.0);
    for (int s = 0; s < m; ++s) {
        std::vector<int> members;
        std::vector<double> cycles, t_tx;
        for (int i = 0; i < n; ++i) {
            if (assoc[i] != s + 1) continue;
            members.push_back(i);
            cycles.push_back(instance.ues[i].cycles);
            const double rate = uplink_rate(instance.gains[i][s], instance.phys);
            t_tx.push_back(instance.ues[i].data_bits / rate);
        }
        if (members.empty()) continue;
        const std::vector<double> alloc = server_alloc(prompt, cycles, instance.servers[s].capacity,
                                                       t_tx, instance.phys.t_max_s);
        for (std::size_t j = 0; j < members.size(); ++j) d.alloc[members[j]] = alloc[j];
    }
    return d;
}

}  // namespace

ExactResult solve_exact(const MecInstance& instance, Prompt prompt, const OracleBudget& budget) {
    const int n = instance.n_ues();
    const int m = instance.n_servers();
    const std::int64_t count = exact_enumeration_count(n, m);
    if (count > budget.max_enumerations) {
        raise(Errc::OracleTooLarge,
              "exact enumeration needs " + std::to_string(count) + " associations, budget is " +
                  std::to_string(budget.max_enumerations));
    }

    std::vector<int> assoc(n, 0);
    ExactResult best;
    best.objective = std::numeric_limits<double>::infinity();
    bool first = true;
    while (true) {
        Decision d = decision_for_assoc(instance, prompt, assoc);
        const Evaluation ev = evaluate(instance, d, prompt);
        // Strict improvement keeps the lexicographically smallest association
        // on ties: the mixed-radix counter visits them in lexicographic order.
        if (first || ev.penalized < best.objective) {
            first = false;
            best.decision = std::move(d);
            best.objective = ev.penalized;
            best.feasible = ev.latency_violation == 0.0 && ev.capacity_violation == 0.0;
        }
        int pos = n - 1;
        while (pos >= 0 && assoc[pos] == m) {
            assoc[pos] = 0;
            --pos;
        }
        if (pos < 0) break;
        ++assoc[pos];
    }
    return best;
}

Decision solve_de(const MecInstance& instance, Prompt prompt, const DeConfig& config) {
    config.validate();
    Rng rng(derive_seed(config.seed, 0xDE));
    const int n = instance.n_ues();
    const int m = instance.n_servers();
    const int dim = 2 * n;
    const double assoc_hi = static_cast<double>(m) + 1.0 - 1e-9;
    constexpr double kFracLo = 1e-9;
    constexpr double kFracHi = 1.0 - 1e-9;

    auto decode = [&](const std::vector<double>& genome) {
        std::vector<int> assoc(n);
        std::vector<double> frac(n);
        for (int i = 0; i < n; ++i) {
            assoc[i] = std::min(m, static_cast<int>(genome[i]));
            frac[i] = genome[n + i];
        }
        return repair_fractions(instance, assoc, frac);
    };
    auto fitness = [&](const std::vector<double>& genome) {
        return evaluate(instance, decode(genome), prompt).penalized;
    };

    std::vector<std::vector<double>> pop(config.population, std::vector<double>(dim));
    std::vector<double> fit(config.population);
    for (auto& genome : pop) {
        for (int i = 0; i < n; ++i) genome[i] = rng.uniform(0.0, assoc_hi);
        for (int i = 0; i < n; ++i) genome[n + i] = rng.uniform(kFracLo, kFracHi);
    }
    for (int p = 0; p < config.population; ++p) fit[p] = fitness(pop[p]);

    std::vector<double> trial(dim);
    for (int gen = 0; gen < config.generations; ++gen) {
        for (int p = 0; p < config.population; ++p) {
            int r1, r2, r3;
            do { r1 = static_cast<int>(rng.below(config.population)); } while (r1 == p);
            do { r2 = static_cast<int>(rng.below(config.population)); } while (r2 == p || r2 == r1);
            do {
                r3 = static_cast<int>(rng.below(config.population));
            } while (r3 == p || r3 == r1 || r3 == r2);

            const int j_rand = static_cast<int>(rng.below(dim));
            for (int j = 0; j < dim; ++j) {
                if (j == j_rand || rng.uniform01() < config.crossover) {
                    trial[j] = pop[r1][j] + config.diff_weight * (pop[r2][j] - pop[r3][j]);
                } else {
                    trial[j] = pop[p][j];
                }
                if (j < n) {
                    trial[j] = std::clamp(trial[j], 0.0, assoc_hi);
                } else {
                    trial[j] = std::clamp(trial[j], kFracLo, kFracHi);
                }
            }
            const double trial_fit = fitness(trial);
            if (trial_fit <= fit[p]) {
                pop[p] = trial;
                fit[p] = trial_fit;
            }
        }
    }

    int best = 0;
    for (int p = 1; p < config.population; ++p) {
        if (fit[p] < fit[best]) best = p;
    }
    return decode(pop[best]);
}

}  // namespace lambo
