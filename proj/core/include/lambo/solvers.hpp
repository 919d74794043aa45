#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lambo/mec.hpp"

namespace lambo {

struct DeConfig {
    int population = 50;
    int generations = 200;
    double diff_weight = 0.5;  // F
    double crossover = 0.9;    // CR
    std::uint64_t seed = 0;

    void validate() const;
};

struct OracleBudget {
    std::int64_t max_enumerations = 1 << 20;
};

/// Everything runs locally; no server cycles allocated.
Decision solve_local(const MecInstance& instance);

/// Uniform association over {local, servers}; offloaded UEs take a uniform
/// fraction of the chosen server's remaining capacity in index order, the
/// same repair the learned policy uses, so capacity holds by construction.
Decision solve_random(const MecInstance& instance, std::uint64_t seed);

/// Minimize sum C_j/f_j subject to sum f_j <= F: f_j = F*sqrt(C_j)/sum(sqrt(C_k)).
std::vector<double> inner_alloc_latency(const std::vector<double>& assigned_cycles, double capacity);

/// Energy is allocation-independent, so give each task the minimum feasible
/// allocation f_j = C_j/(T_max - t_tx_j). Empty when some t_tx >= T_max or
/// the sum exceeds capacity.
std::optional<std::vector<double>> inner_alloc_energy(const std::vector<double>& assigned_cycles,
                                                      double capacity,
                                                      const std::vector<double>& t_tx,
                                                      double t_max);

struct ExactResult {
    Decision decision;
    double objective = 0.0;  // penalized
    bool feasible = true;    // false when even the best association violates a constraint
};

/// Exhaustive search over all (M+1)^N associations with the prompt's
/// closed-form inner allocation per server. Raises OracleTooLarge when the
/// enumeration count exceeds the budget. Ties break toward the
/// lexicographically smallest association vector.
ExactResult solve_exact(const MecInstance& instance, Prompt prompt, const OracleBudget& budget = {});

/// Number of associations an exact solve would enumerate, saturated at int64 max.
std::int64_t exact_enumeration_count(int n_ues, int n_servers);

/// DE/rand/1/bin over a 2N-dimensional genome: first N genes floor to the
/// association, last N are sequential fractions of remaining capacity.
Decision solve_de(const MecInstance& instance, Prompt prompt, const DeConfig& config);

}  // namespace lambo
