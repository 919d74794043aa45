#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "lambo/aed.hpp"
#include "lambo/rng.hpp"
#include "lambo/solvers.hpp"

using namespace lambo;
using lambo::testing::tiny_instance;

namespace {

// Independent oracle for the tiny two-UE/one-server instance: enumerate the
// four associations and grid-search the capacity split instead of using the
// closed-form allocation rules.
double tiny_brute_force(const MecInstance& inst, Prompt prompt) {
    double best = std::numeric_limits<double>::infinity();
    const double capacity = inst.servers[0].capacity;
    for (int a0 = 0; a0 <= 1; ++a0) {
        for (int a1 = 0; a1 <= 1; ++a1) {
            Decision d;
            d.assoc = {a0, a1};
            d.alloc = {0.0, 0.0};
            if (a0 + a1 == 0) {
                best = std::min(best, evaluate(inst, d, prompt).penalized);
            } else if (a0 + a1 == 1) {
                const int off = a0 == 1 ? 0 : 1;
                for (int g = 1; g <= 400; ++g) {
                    d.alloc[off] = capacity * g / 400.0;
                    best = std::min(best, evaluate(inst, d, prompt).penalized);
                    d.alloc[off] = 0.0;
                }
            } else {
                for (int g = 1; g < 4000; ++g) {
                    d.alloc = {capacity * g / 4000.0, capacity * (4000.0 - g) / 4000.0};
                    best = std::min(best, evaluate(inst, d, prompt).penalized);
                }
            }
        }
    }
    return best;
}

GenConfig gen_cfg(int n_ues, int n_servers) {
    GenConfig cfg;
    cfg.n_ues = n_ues;
    cfg.n_servers = n_servers;
    return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("solvers");

TEST_CASE("solve_local keeps everything on the UEs") {
    const MecInstance inst = tiny_instance();
    const Decision d = solve_local(inst);
    CHECK(d.assoc == std::vector<int>{0, 0});
    const Evaluation lat = evaluate(inst, d, Prompt::min_latency());
    CHECK(lat.objective == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(lat.capacity_violation == 0.0);
    CHECK(evaluate(inst, d, Prompt::min_energy()).objective ==
          doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("solve_random is reproducible and capacity-feasible") {
    const MecInstance inst = generate_instance(gen_cfg(8, 3), 2);
    const Decision a = solve_random(inst, 99);
    const Decision b = solve_random(inst, 99);
    CHECK(a.assoc == b.assoc);
    for (std::size_t i = 0; i < a.alloc.size(); ++i) CHECK(a.alloc[i] == b.alloc[i]);

    int offloaded = 0, local = 0;
    for (int seed = 0; seed < 1000; ++seed) {
        const Decision d = solve_random(inst, seed);
        CHECK(decision_capacity_audit(inst, d));
        CHECK_NOTHROW(d.validate(inst.n_ues(), inst.n_servers()));
        for (int assoc : d.assoc) (assoc == 0 ? local : offloaded) += 1;
    }
    // Uniform over {0..M}: both outcomes show up.
    CHECK(local > 0);
    CHECK(offloaded > 0);
}

TEST_CASE("inner_alloc_latency matches the stated example and degenerate cases") {
    const std::vector<double> f = inner_alloc_latency({1e9, 4e9}, 1.5e10);
    CHECK(f[0] == doctest::Approx(5e9).epsilon(1e-12));
    CHECK(f[1] == doctest::Approx(1e10).epsilon(1e-12));

    const std::vector<double> single = inner_alloc_latency({7e8}, 2e10);
    CHECK(single[0] == doctest::Approx(2e10).epsilon(1e-12));

    const std::vector<double> equal = inner_alloc_latency({3e9, 3e9, 3e9}, 9e9);
    for (double v : equal) CHECK(v == doctest::Approx(3e9).epsilon(1e-12));
}

TEST_CASE("inner_alloc_latency optimality under grid perturbation") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 2 + static_cast<int>(rng.below(4));
        std::vector<double> cycles;
        for (int j = 0; j < k; ++j) cycles.push_back(rng.uniform(1e8, 5e9));
        const double capacity = rng.uniform(5e9, 5e10);
        const std::vector<double> f = inner_alloc_latency(cycles, capacity);

        double sum = 0.0, base = 0.0;
        for (int j = 0; j < k; ++j) {
            sum += f[j];
            base += cycles[j] / f[j];
        }
        CHECK(sum == doctest::Approx(capacity).epsilon(1e-9));

        // Moving capacity between any pair never improves the latency sum.
        for (int a = 0; a < k; ++a) {
            for (int b = 0; b < k; ++b) {
                if (a == b) continue;
                const double delta = 1e-3 * capacity;
                if (f[a] <= delta) continue;
                double perturbed = 0.0;
                for (int j = 0; j < k; ++j) {
                    double fj = f[j];
                    if (j == a) fj -= delta;
                    if (j == b) fj += delta;
                    perturbed += cycles[j] / fj;
                }
                CHECK(perturbed > base * (1.0 - 1e-6));
            }
        }
    }
}

TEST_CASE("inner_alloc_energy: minimal feasible allocation or nothing") {
    const auto f = inner_alloc_energy({1e9}, 1.5e10, {0.2}, 1.5);
    REQUIRE(f.has_value());
    CHECK((*f)[0] == doctest::Approx(1e9 / 1.3).epsilon(1e-12));

    CHECK_FALSE(inner_alloc_energy({1e9}, 1.5e10, {1.5}, 1.5).has_value());
    CHECK_FALSE(inner_alloc_energy({1e9}, 1.5e10, {2.0}, 1.5).has_value());

    // Two tasks that fit together.
    const auto both = inner_alloc_energy({1e9, 1e9}, 1.5e10, {0.2, 0.2}, 1.5);
    REQUIRE(both.has_value());
    CHECK((*both)[0] + (*both)[1] < 1.5e10);

    // Sum over capacity is infeasible.
    CHECK_FALSE(inner_alloc_energy({1e9, 1e9}, 1.5e9, {1.4, 1.4}, 1.5).has_value());
}

TEST_CASE("solve_exact reproduces the tiny-instance oracle values") {
    const MecInstance inst = tiny_instance();

    const ExactResult lat = solve_exact(inst, Prompt::min_latency());
    CHECK(lat.decision.assoc == std::vector<int>{1, 1});
    CHECK(lat.objective == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    CHECK(lat.decision.alloc[0] == doctest::Approx(7.5e9).epsilon(1e-9));
    CHECK(lat.decision.alloc[1] == doctest::Approx(7.5e9).epsilon(1e-9));
    CHECK(lat.feasible);
    // Independent grid-search oracle agrees.
    CHECK(lat.objective == doctest::Approx(tiny_brute_force(inst, Prompt::min_latency()))
                               .epsilon(1e-4));

    const ExactResult en = solve_exact(inst, Prompt::min_energy());
    CHECK(en.decision.assoc == std::vector<int>{1, 1});
    CHECK(en.objective == doctest::Approx(0.4).epsilon(1e-6));
    CHECK(en.objective ==
          doctest::Approx(tiny_brute_force(inst, Prompt::min_energy())).epsilon(1e-4));
}

TEST_CASE("solve_exact prefers local when the channel is hopeless") {
    MecInstance inst = tiny_instance();
    inst.ues.resize(1);
    inst.gains = {{1e-12}};  // SNR 0.01: uplink takes far longer than T_max
    const ExactResult r = solve_exact(inst, Prompt::min_latency());
    CHECK(r.decision.assoc == std::vector<int>{0});
}

TEST_CASE("solve_exact enforces its enumeration budget") {
    const MecInstance inst = generate_instance(gen_cfg(12, 4), 3);
    CHECK(exact_enumeration_count(12, 4) > (1 << 20));
    CHECK_THROWS_AS(solve_exact(inst, Prompt::min_latency()), Error);
    try {
        solve_exact(inst, Prompt::min_latency());
    } catch (const Error& e) {
        CHECK(e.code() == Errc::OracleTooLarge);
    }
}

TEST_CASE("solve_de approaches the exact optimum on the tiny instance") {
    const MecInstance inst = tiny_instance();
    DeConfig de;
    de.population = 30;
    de.generations = 100;
    de.seed = 1;
    const Decision d = solve_de(inst, Prompt::min_latency(), de);
    const double objective = evaluate(inst, d, Prompt::min_latency()).penalized;
    CHECK(objective <= (1.0 / 3.0) * 1.01);

    // Determinism and degenerate generations.
    const Decision d2 = solve_de(inst, Prompt::min_latency(), de);
    CHECK(d.assoc == d2.assoc);
    for (std::size_t i = 0; i < d.alloc.size(); ++i) CHECK(d.alloc[i] == d2.alloc[i]);

    DeConfig zero_gen = de;
    zero_gen.generations = 0;
    const Decision best_random = solve_de(inst, Prompt::min_latency(), zero_gen);
    CHECK(decision_capacity_audit(inst, best_random));
    CHECK(evaluate(inst, best_random, Prompt::min_latency()).penalized >= objective);
}

TEST_CASE("solver chain: exact <= de <= random, all capacity-feasible") {
    DeConfig de;
    de.population = 30;
    de.generations = 80;
    for (int trial = 0; trial < 25; ++trial) {
        const MecInstance inst = generate_instance(gen_cfg(4, 2), 500 + trial);
        const Prompt prompt = trial % 2 == 0 ? Prompt::min_latency() : Prompt::min_energy();
        de.seed = trial;

        const ExactResult exact = solve_exact(inst, prompt);
        const Decision d_de = solve_de(inst, prompt, de);
        const Decision d_rand = solve_random(inst, trial);
        const Decision d_local = solve_local(inst);

        const double j_de = evaluate(inst, d_de, prompt).penalized;
        const double j_rand = evaluate(inst, d_rand, prompt).penalized;

        CHECK(decision_capacity_audit(inst, exact.decision));
        CHECK(decision_capacity_audit(inst, d_de));
        CHECK(decision_capacity_audit(inst, d_rand));
        CHECK(decision_capacity_audit(inst, d_local));

        CHECK(exact.objective <= j_de * (1.0 + 1e-9));
        CHECK(j_de <= j_rand * (1.0 + 1e-9));
    }
}

TEST_CASE("de config validation") {
    DeConfig de;
    de.population = 2;
    CHECK_THROWS_AS(de.validate(), Error);
    de = DeConfig{};
    de.crossover = 1.5;
    CHECK_THROWS_AS(de.validate(), Error);
    de = DeConfig{};
    de.diff_weight = 0.0;
    CHECK_THROWS_AS(de.validate(), Error);
}

TEST_SUITE_END();
