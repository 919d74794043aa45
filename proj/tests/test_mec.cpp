#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "lambo/mec.hpp"
#include "lambo/rng.hpp"

using namespace lambo;
using lambo::testing::one_ue_instance;
using lambo::testing::tiny_instance;

TEST_SUITE_BEGIN("mec");

TEST_CASE("channel gain follows the clamped power law") {
    PhysParams phys;
    phys.ref_gain = 1e-4;
    phys.pathloss_exp = 3.0;
    CHECK(channel_gain({0, 0}, {10, 0}, phys) == doctest::Approx(1e-7).epsilon(1e-12));
    CHECK(channel_gain({0, 0}, {1, 0}, phys) == doctest::Approx(1e-4).epsilon(1e-12));
    // Distances below 1 m clamp to the reference gain.
    CHECK(channel_gain({0, 0}, {0.5, 0}, phys) == doctest::Approx(1e-4).epsilon(1e-12));
}

TEST_CASE("channel gain is non-increasing in distance") {
    PhysParams phys;
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const double d1 = rng.uniform(0.0, 80.0);
        const double d2 = d1 + rng.uniform(0.0, 20.0);
        CHECK(channel_gain({0, 0}, {d1, 0}, phys) >= channel_gain({0, 0}, {d2, 0}, phys));
    }
}

TEST_CASE("uplink rate hits the exact log2 anchor points") {
    PhysParams phys;  // B = 1e6, sigma^2 = 1e-10, p = 1
    CHECK(uplink_rate(1.023e-7, phys) == doctest::Approx(1e7).epsilon(1e-12));  // SNR 1023
    CHECK(uplink_rate(1e-10, phys) == doctest::Approx(1e6).epsilon(1e-12));    // SNR 1
    CHECK(uplink_rate(3e-10, phys) == doctest::Approx(2e6).epsilon(1e-12));    // SNR 3
}

TEST_CASE("uplink rate strictly increases with gain") {
    PhysParams phys;
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const double g = std::exp(rng.uniform(std::log(1e-10), std::log(1e-4)));
        CHECK(uplink_rate(g * 1.01, phys) > uplink_rate(g, phys));
    }
}

TEST_CASE("evaluate: local execution on the one-UE instance") {
    const MecInstance inst = one_ue_instance();
    Decision d;
    d.assoc = {0};
    d.alloc = {0.0};
    const Evaluation ev = evaluate(inst, d, Prompt::min_latency());
    CHECK(ev.objective == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ev.per_ue_energy[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ev.latency_violation == 0.0);
    CHECK(ev.capacity_violation == 0.0);
    CHECK(ev.penalized == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("evaluate: offloaded with a generous allocation") {
    const MecInstance inst = one_ue_instance();
    Decision d;
    d.assoc = {1};
    d.alloc = {1e10};
    const Evaluation ev = evaluate(inst, d, Prompt::min_energy());
    CHECK(ev.per_ue_latency[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(ev.objective == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(ev.penalized == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("evaluate: latency violation enters the penalty") {
    const MecInstance inst = one_ue_instance();
    Decision d;
    d.assoc = {1};
    d.alloc = {5e8};
    const Evaluation ev = evaluate(inst, d, Prompt::min_latency());
    CHECK(ev.per_ue_latency[0] == doctest::Approx(2.2).epsilon(1e-12));
    CHECK(ev.latency_violation == doctest::Approx(0.7 / 1.5).epsilon(1e-12));
    CHECK(ev.penalized == doctest::Approx(2.2 + 10.0 * 0.7 / 1.5).epsilon(1e-9));
}

TEST_CASE("evaluate rejects wrong-length decisions") {
    const MecInstance inst = tiny_instance();
    Decision d;
    d.assoc = {0};
    d.alloc = {0.0};
    CHECK_THROWS_AS(evaluate(inst, d, Prompt::min_latency()), Error);
    try {
        evaluate(inst, d, Prompt::min_latency());
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ShapeMismatch);
    }
}

TEST_CASE("evaluate is pure: penalized recomputes from parts") {
    GenConfig gen;
    gen.n_ues = 6;
    gen.n_servers = 3;
    Rng rng(123);
    for (int trial = 0; trial < 50; ++trial) {
        const MecInstance inst = generate_instance(gen, trial);
        Decision d;
        d.assoc.resize(inst.n_ues());
        d.alloc.resize(inst.n_ues());
        for (int i = 0; i < inst.n_ues(); ++i) {
            d.assoc[i] = static_cast<int>(rng.below(inst.n_servers() + 1));
            d.alloc[i] = d.assoc[i] == 0 ? 0.0 : rng.uniform(1e8, 2e10);
        }
        const Prompt prompt = trial % 2 == 0 ? Prompt::min_latency() : Prompt::min_energy();
        const Evaluation a = evaluate(inst, d, prompt);
        const Evaluation b = evaluate(inst, d, prompt);
        CHECK(a.penalized == b.penalized);
        CHECK(a.penalized ==
              doctest::Approx(a.objective + inst.phys.penalty_lambda *
                                                (a.latency_violation + a.capacity_violation))
                  .epsilon(1e-12));
        CHECK(a.latency_violation >= 0.0);
        CHECK(a.capacity_violation >= 0.0);
    }
}

TEST_CASE("all-local decision: average of C/f_local, no capacity violation") {
    GenConfig gen;
    gen.n_ues = 8;
    gen.n_servers = 2;
    for (int trial = 0; trial < 20; ++trial) {
        const MecInstance inst = generate_instance(gen, 100 + trial);
        Decision d;
        d.assoc.assign(inst.n_ues(), 0);
        d.alloc.assign(inst.n_ues(), 0.0);
        const Evaluation ev = evaluate(inst, d, Prompt::min_latency());
        double expected = 0.0;
        for (const Ue& ue : inst.ues) expected += ue.cycles / ue.f_local;
        expected /= inst.n_ues();
        CHECK(ev.objective == doctest::Approx(expected).epsilon(1e-12));
        CHECK(ev.capacity_violation == 0.0);
    }
}

TEST_CASE("for a fixed association latency falls with more allocation, energy is unmoved") {
    const MecInstance inst = tiny_instance();
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        Decision d;
        d.assoc = {1, 1};
        const double f0 = rng.uniform(1e8, 7e9);
        const double f1 = rng.uniform(1e8, 7e9);
        d.alloc = {f0, f1};
        const Evaluation base_lat = evaluate(inst, d, Prompt::min_latency());
        const Evaluation base_en = evaluate(inst, d, Prompt::min_energy());
        d.alloc = {f0 * 1.1, f1};
        const Evaluation more = evaluate(inst, d, Prompt::min_latency());
        CHECK(more.objective < base_lat.objective);
        CHECK(evaluate(inst, d, Prompt::min_energy()).objective ==
              doctest::Approx(base_en.objective).epsilon(1e-15));
    }
}

TEST_CASE("generate_instance is bit-deterministic and respects the paper defaults") {
    GenConfig gen;  // 50 UEs, 4 servers
    const MecInstance a = generate_instance(gen, 42);
    const MecInstance b = generate_instance(gen, 42);
    REQUIRE(a.n_ues() == 50);
    REQUIRE(a.n_servers() == 4);
    CHECK(a.servers[0].capacity == 1.5e10);
    CHECK(a.servers[1].capacity == 1.5e10);
    CHECK(a.servers[2].capacity == 3e10);
    CHECK(a.servers[3].capacity == 5e10);
    CHECK(a.phys.t_max_s == 1.5);
    CHECK(a.phys.tx_power_w == 1.0);
    for (int i = 0; i < a.n_ues(); ++i) {
        CHECK(a.ues[i].position.x == b.ues[i].position.x);
        CHECK(a.ues[i].position.y == b.ues[i].position.y);
        CHECK(a.ues[i].data_bits == b.ues[i].data_bits);
        CHECK(a.ues[i].position.x >= 0.0);
        CHECK(a.ues[i].position.x <= 50.0);
        CHECK(a.ues[i].position.y >= 0.0);
        CHECK(a.ues[i].position.y <= 50.0);
    }
    for (int i = 0; i < a.n_ues(); ++i) {
        for (int s = 0; s < a.n_servers(); ++s) CHECK(a.gains[i][s] == b.gains[i][s]);
    }
    const MecInstance c = generate_instance(gen, 43);
    CHECK(a.ues[0].position.x != c.ues[0].position.x);
}

TEST_CASE("generate_instance validates its config") {
    GenConfig gen;
    gen.n_ues = 0;
    CHECK_THROWS_AS(generate_instance(gen, 1), Error);
    gen = GenConfig{};
    gen.data_mean_bits = -1.0;
    CHECK_THROWS_AS(generate_instance(gen, 1), Error);
}

TEST_CASE("step_dynamics bounds displacement by the max speed") {
    GenConfig gen;
    gen.n_ues = 30;
    gen.n_servers = 2;
    const MecInstance inst = generate_instance(gen, 9);
    for (double dt : {1.0, 1e-9, 3.0}) {
        const MecInstance moved = step_dynamics(inst, dt, 77);
        for (int i = 0; i < inst.n_ues(); ++i) {
            const double dx = moved.ues[i].position.x - inst.ues[i].position.x;
            const double dy = moved.ues[i].position.y - inst.ues[i].position.y;
            CHECK(std::sqrt(dx * dx + dy * dy) <= kMaxUeSpeedMps * dt * (1.0 + 1e-12));
            CHECK(moved.ues[i].position.x >= 0.0);
            CHECK(moved.ues[i].position.x <= moved.area_m);
            // Tasks are untouched by mobility.
            CHECK(moved.ues[i].data_bits == inst.ues[i].data_bits);
            CHECK(moved.ues[i].cycles == inst.ues[i].cycles);
        }
    }
}

TEST_CASE("step_dynamics recomputes gains consistently and is deterministic") {
    GenConfig gen;
    gen.n_ues = 5;
    gen.n_servers = 3;
    const MecInstance inst = generate_instance(gen, 4);
    const MecInstance a = step_dynamics(inst, 1.0, 5);
    const MecInstance b = step_dynamics(inst, 1.0, 5);
    for (int i = 0; i < a.n_ues(); ++i) {
        for (int s = 0; s < a.n_servers(); ++s) {
            CHECK(a.gains[i][s] == b.gains[i][s]);
            CHECK(a.gains[i][s] ==
                  doctest::Approx(channel_gain(a.ues[i].position, a.servers[s].position, a.phys))
                      .epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(step_dynamics(inst, 0.0, 1), Error);
}

TEST_CASE("rayleigh profile redraws fading on dynamics steps") {
    GenConfig gen;
    gen.n_ues = 4;
    gen.n_servers = 2;
    gen.phys.rayleigh_fading = true;
    const MecInstance inst = generate_instance(gen, 21);
    const MecInstance moved = step_dynamics(inst, 1.0, 22);
    for (int i = 0; i < inst.n_ues(); ++i) {
        for (int s = 0; s < inst.n_servers(); ++s) {
            CHECK(inst.gains[i][s] > 0.0);
            CHECK(moved.gains[i][s] > 0.0);
            // Fading makes gains differ from pure path loss.
            const double pl = channel_gain(inst.ues[i].position, inst.servers[s].position,
                                           inst.phys);
            CHECK(inst.gains[i][s] != pl);
        }
    }
}

TEST_SUITE_END();
