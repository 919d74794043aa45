#include <benchmark/benchmark.h>

#include "lambo/acl.hpp"
#include "lambo/aed.hpp"
#include "lambo/mec.hpp"
#include "lambo/solvers.hpp"

namespace {

using namespace lambo;

GenConfig small_gen() {
    GenConfig gen;
    gen.n_ues = 4;
    gen.n_servers = 2;
    return gen;
}

void BM_Evaluate(benchmark::State& state) {
    const MecInstance inst = generate_instance(small_gen(), 1);
    const Decision d = solve_random(inst, 7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(evaluate(inst, d, Prompt::min_latency()).penalized);
    }
}
BENCHMARK(BM_Evaluate);

void BM_DecodeGreedy(benchmark::State& state) {
    GenConfig gen = small_gen();
    gen.n_ues = static_cast<int>(state.range(0));
    const MecInstance inst = generate_instance(gen, 1);
    AedConfig cfg = AedConfig::desk_default(gen.n_servers);
    const ParamSet actor = init_actor_params(cfg, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            decode_sequence(inst, Prompt::min_latency(), actor, cfg, DecodeMode::Greedy, 0)
                .decision.assoc[0]);
    }
}
BENCHMARK(BM_DecodeGreedy)->Arg(4)->Arg(16)->Arg(50);

void BM_SampleBackward(benchmark::State& state) {
    const MecInstance inst = generate_instance(small_gen(), 1);
    AedConfig cfg = AedConfig::desk_default(2);
    const ParamSet actor = init_actor_params(cfg, 3);
    for (auto _ : state) {
        DecodeGraph g = decode_sequence_graph(inst, Prompt::min_latency(), actor, cfg,
                                              DecodeMode::Sample, 11);
        const Var loss = g.tape.add(g.tape.scale(g.log_prob, -1.0),
                                    g.tape.scale(g.entropy_sum, -0.01));
        g.tape.backward(loss);
        benchmark::DoNotOptimize(g.tape.grad(g.param_vars[0]).data[0]);
    }
}
BENCHMARK(BM_SampleBackward);

void BM_ExactOracle(benchmark::State& state) {
    GenConfig gen = small_gen();
    gen.n_ues = static_cast<int>(state.range(0));
    const MecInstance inst = generate_instance(gen, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_exact(inst, Prompt::min_latency()).objective);
    }
}
BENCHMARK(BM_ExactOracle)->Arg(4)->Arg(8);

void BM_DifferentialEvolution(benchmark::State& state) {
    const MecInstance inst = generate_instance(small_gen(), 1);
    DeConfig de;
    de.population = 30;
    de.generations = static_cast<int>(state.range(0));
    de.seed = 5;
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_de(inst, Prompt::min_latency(), de).assoc[0]);
    }
}
BENCHMARK(BM_DifferentialEvolution)->Arg(20)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
