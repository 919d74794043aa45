#pragma once

#include "lambo/mec.hpp"

namespace lambo::testing {

// Two identical UEs, one server: D = 2e6 bits, C = 1e9 cycles, f_local = 1e9,
// gain 1.023e-7 (SNR 1023 -> uplink rate exactly 1e7 bits/s), F = 1.5e10.
// Oracle values: MinLatency 1/3 s with both offloaded and an even split;
// MinEnergy 0.4 J (two transmissions at 0.2 J).
inline MecInstance tiny_instance() {
    MecInstance inst;
    inst.area_m = 50.0;
    inst.phys = PhysParams{};
    Ue ue;
    ue.position = {10.0, 10.0};
    ue.data_bits = 2e6;
    ue.cycles = 1e9;
    ue.f_local = 1e9;
    inst.ues = {ue, ue};
    EdgeServer server;
    server.position = {20.0, 20.0};
    server.capacity = 1.5e10;
    inst.servers = {server};
    inst.gains = {{1.023e-7}, {1.023e-7}};
    return inst;
}

// Same physics with a single UE; used by the evaluate examples.
inline MecInstance one_ue_instance() {
    MecInstance inst = tiny_instance();
    inst.ues.resize(1);
    inst.gains.resize(1);
    return inst;
}

}  // namespace lambo::testing
