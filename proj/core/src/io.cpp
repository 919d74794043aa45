#include "lambo/io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace lambo {

using nlohmann::json;

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string prompt_to_string(Prompt prompt) {
    return prompt.kind == PromptKind::MinLatency ? "min_latency" : "min_energy";
}

Prompt prompt_from_string(const std::string& text) {
    if (text == "min_latency") return Prompt::min_latency();
    if (text == "min_energy") return Prompt::min_energy();
    raise(Errc::UnknownPrompt, "unknown prompt: " + text);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::IoError, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(Errc::IoError, "cannot write " + path);
    out << content;
    if (!out) raise(Errc::IoError, "write failed for " + path);
}

// -- JSON conversions ---------------------------------------------------------

namespace {

json to_json(const PhysParams& p) {
    return json{{"bandwidth_hz", p.bandwidth_hz},
                {"noise_power_w", p.noise_power_w},
                {"tx_power_w", p.tx_power_w},
                {"local_power_w", p.local_power_w},
                {"ref_gain", p.ref_gain},
                {"pathloss_exp", p.pathloss_exp},
                {"t_max_s", p.t_max_s},
                {"penalty_lambda", p.penalty_lambda},
                {"rayleigh_fading", p.rayleigh_fading}};
}

PhysParams phys_from_json(const json& j) {
    PhysParams p;
    p.bandwidth_hz = j.value("bandwidth_hz", p.bandwidth_hz);
    p.noise_power_w = j.value("noise_power_w", p.noise_power_w);
    p.tx_power_w = j.value("tx_power_w", p.tx_power_w);
    p.local_power_w = j.value("local_power_w", p.local_power_w);
    p.ref_gain = j.value("ref_gain", p.ref_gain);
    p.pathloss_exp = j.value("pathloss_exp", p.pathloss_exp);
    p.t_max_s = j.value("t_max_s", p.t_max_s);
    p.penalty_lambda = j.value("penalty_lambda", p.penalty_lambda);
    p.rayleigh_fading = j.value("rayleigh_fading", p.rayleigh_fading);
    return p;
}

json to_json(const std::vector<FeatureNorm>& norms) {
    json arr = json::array();
    for (const auto& fn : norms) arr.push_back(json::array({fn.offset, fn.scale}));
    return arr;
}

std::vector<FeatureNorm> norms_from_json(const json& arr) {
    std::vector<FeatureNorm> norms;
    for (const auto& e : arr) norms.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
    return norms;
}

json to_json(const AedConfig& c) {
    json j{{"d_model", c.d_model},
           {"n_heads", c.n_heads},
           {"enc_layers", c.enc_layers},
           {"dec_layers", c.dec_layers},
           {"d_ffn", c.d_ffn},
           {"prompt_vocab", c.prompt_vocab},
           {"n_servers", c.n_servers},
           {"f_min_frac", c.f_min_frac},
           {"layer_norm_eps", c.layer_norm_eps},
           {"rho_sample_sigma", c.rho_sample_sigma}};
    if (!c.norm_constants.empty()) j["norm_constants"] = to_json(c.norm_constants);
    return j;
}

AedConfig aed_from_json(const json& j) {
    AedConfig c;
    c.d_model = j.value("d_model", c.d_model);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.enc_layers = j.value("enc_layers", c.enc_layers);
    c.dec_layers = j.value("dec_layers", c.dec_layers);
    c.d_ffn = j.value("d_ffn", c.d_ffn);
    c.prompt_vocab = j.value("prompt_vocab", c.prompt_vocab);
    c.n_servers = j.value("n_servers", c.n_servers);
    c.f_min_frac = j.value("f_min_frac", c.f_min_frac);
    c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
    c.rho_sample_sigma = j.value("rho_sample_sigma", c.rho_sample_sigma);
    if (j.contains("norm_constants")) c.norm_constants = norms_from_json(j.at("norm_constants"));
    return c;
}

json to_json(const AclConfig& c) {
    return json{{"epochs", c.epochs},
                {"instances_per_epoch", c.instances_per_epoch},
                {"batch_size", c.batch_size},
                {"lr", c.lr},
                {"penalty_lambda", c.penalty_lambda},
                {"entropy_beta", c.entropy_beta},
                {"seed", c.seed},
                {"eval_every", c.eval_every},
                {"holdout_size", c.holdout_size},
                {"early_stop_delta", c.early_stop_delta},
                {"early_stop_window", c.early_stop_window}};
}

AclConfig acl_from_json(const json& j) {
    AclConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.instances_per_epoch = j.value("instances_per_epoch", c.instances_per_epoch);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.penalty_lambda = j.value("penalty_lambda", c.penalty_lambda);
    c.entropy_beta = j.value("entropy_beta", c.entropy_beta);
    c.seed = j.value("seed", c.seed);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.holdout_size = j.value("holdout_size", c.holdout_size);
    c.early_stop_delta = j.value("early_stop_delta", c.early_stop_delta);
    c.early_stop_window = j.value("early_stop_window", c.early_stop_window);
    return c;
}

GenConfig gen_from_json(const json& j) {
    GenConfig c;
    c.n_ues = j.value("n_ues", c.n_ues);
    c.n_servers = j.value("n_servers", c.n_servers);
    c.area_m = j.value("area_m", c.area_m);
    if (j.contains("capacities")) c.capacities = j.at("capacities").get<std::vector<double>>();
    c.data_mean_bits = j.value("data_mean_bits", c.data_mean_bits);
    c.data_log_sigma = j.value("data_log_sigma", c.data_log_sigma);
    c.cycles_mean = j.value("cycles_mean", c.cycles_mean);
    c.cycles_log_sigma = j.value("cycles_log_sigma", c.cycles_log_sigma);
    c.f_local = j.value("f_local", c.f_local);
    if (j.contains("phys")) c.phys = phys_from_json(j.at("phys"));
    return c;
}

json to_json(const GenConfig& c) {
    return json{{"n_ues", c.n_ues},          {"n_servers", c.n_servers},
                {"area_m", c.area_m},        {"capacities", c.capacities},
                {"data_mean_bits", c.data_mean_bits}, {"data_log_sigma", c.data_log_sigma},
                {"cycles_mean", c.cycles_mean},       {"cycles_log_sigma", c.cycles_log_sigma},
                {"f_local", c.f_local},      {"phys", to_json(c.phys)}};
}

DeConfig de_from_json(const json& j) {
    DeConfig c;
    c.population = j.value("population", c.population);
    c.generations = j.value("generations", c.generations);
    c.diff_weight = j.value("diff_weight", c.diff_weight);
    c.crossover = j.value("crossover", c.crossover);
    c.seed = j.value("seed", c.seed);
    return c;
}

QueryPolicy query_from_json(const json& j) {
    QueryPolicy p;
    const std::string mode = j.value("mode", std::string("topk"));
    if (mode == "topk") {
        p.mode = QueryMode::TopKPerWindow;
    } else if (mode == "threshold") {
        p.mode = QueryMode::Threshold;
    } else {
        raise(Errc::ConfigError, "query mode must be topk or threshold");
    }
    p.budget = j.value("budget", p.budget);
    p.window = j.value("window", p.window);
    p.k = j.value("k", p.k);
    p.threshold = j.value("threshold", p.threshold);
    return p;
}

FinetuneConfig finetune_from_json(const json& j) {
    FinetuneConfig c;
    c.lr = j.value("lr", c.lr);
    c.w_ce = j.value("w_ce", c.w_ce);
    c.w_mse = j.value("w_mse", c.w_mse);
    c.steps_per_batch = j.value("steps_per_batch", c.steps_per_batch);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.dt_s = j.value("dt_s", c.dt_s);
    c.replay_capacity = j.value("replay_capacity", c.replay_capacity);
    c.seed = j.value("seed", c.seed);
    return c;
}

json parse_json(const std::string& text, const char* what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) raise(Errc::IoError, std::string("invalid JSON in ") + what);
    return j;
}

}  // namespace

RunConfigBundle parse_config_bundle(const std::string& json_text) {
    const json j = parse_json(json_text, "config");
    RunConfigBundle b;
    if (j.contains("aed")) {
        b.aed = aed_from_json(j.at("aed"));
        b.has_aed = true;
    }
    if (j.contains("acl")) {
        b.acl = acl_from_json(j.at("acl"));
        b.has_acl = true;
    }
    if (j.contains("gen")) {
        b.gen = gen_from_json(j.at("gen"));
        b.has_gen = true;
    }
    if (j.contains("de")) b.de = de_from_json(j.at("de"));
    if (j.contains("query")) b.query = query_from_json(j.at("query"));
    if (j.contains("finetune")) b.finetune = finetune_from_json(j.at("finetune"));
    return b;
}

std::string aed_config_to_json(const AedConfig& config) { return to_json(config).dump(); }
std::string gen_config_to_json(const GenConfig& config) { return to_json(config).dump(); }

// -- instance records ---------------------------------------------------------

std::string instance_to_json_line(const MecInstance& instance) {
    json ues = json::array();
    for (const Ue& ue : instance.ues) {
        ues.push_back(json{{"pos", json::array({ue.position.x, ue.position.y})},
                           {"data_bits", ue.data_bits},
                           {"cycles", ue.cycles},
                           {"f_local", ue.f_local}});
    }
    json servers = json::array();
    for (const EdgeServer& s : instance.servers) {
        servers.push_back(json{{"pos", json::array({s.position.x, s.position.y})},
                               {"capacity", s.capacity}});
    }
    const json j{{"seed", instance.seed},   {"area_m", instance.area_m},
                 {"phys", to_json(instance.phys)}, {"ues", ues},
                 {"servers", servers},      {"gains", instance.gains}};
    return j.dump();
}

MecInstance instance_from_json_line(const std::string& line) {
    const json j = parse_json(line, "instance record");
    MecInstance inst;
    inst.seed = j.value("seed", std::uint64_t{0});
    inst.area_m = j.value("area_m", 50.0);
    inst.phys = phys_from_json(j.value("phys", json::object()));
    for (const auto& u : j.at("ues")) {
        Ue ue;
        ue.position = {u.at("pos").at(0).get<double>(), u.at("pos").at(1).get<double>()};
        ue.data_bits = u.at("data_bits").get<double>();
        ue.cycles = u.at("cycles").get<double>();
        ue.f_local = u.at("f_local").get<double>();
        inst.ues.push_back(ue);
    }
    for (const auto& s : j.at("servers")) {
        EdgeServer server;
        server.position = {s.at("pos").at(0).get<double>(), s.at("pos").at(1).get<double>()};
        server.capacity = s.at("capacity").get<double>();
        inst.servers.push_back(server);
    }
    if (j.contains("gains")) {
        inst.gains = j.at("gains").get<std::vector<std::vector<double>>>();
    } else {
        inst.gains.assign(inst.ues.size(), std::vector<double>(inst.servers.size()));
        for (std::size_t i = 0; i < inst.ues.size(); ++i) {
            for (std::size_t s = 0; s < inst.servers.size(); ++s) {
                inst.gains[i][s] =
                    channel_gain(inst.ues[i].position, inst.servers[s].position, inst.phys);
            }
        }
    }
    inst.validate();
    return inst;
}

void write_instances_jsonl(const std::string& path, const std::vector<MecInstance>& instances) {
    std::string out;
    for (const MecInstance& inst : instances) {
        out += instance_to_json_line(inst);
        out += '\n';
    }
    write_text_file(path, out);
}

std::vector<MecInstance> read_instances_jsonl(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::vector<MecInstance> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(instance_from_json_line(line));
    }
    return out;
}

// -- checkpoints ---------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'L', 'M', 'B', '1'};

void append_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t read_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void save_checkpoint(const CheckpointData& data, const std::string& path) {
    // Canonical header: norm constants are always materialized so that a
    // load/save round trip reproduces the exact bytes.
    AedConfig aed = data.aed;
    aed.norm_constants = aed.effective_norms();

    json tensors = json::array();
    std::string blob;
    std::uint64_t offset = 0;
    auto append_set = [&](const ParamSet& set, const std::string& prefix) {
        for (std::size_t i = 0; i < set.tensors.size(); ++i) {
            const Tensor& t = set.tensors[i];
            tensors.push_back(json{{"name", prefix + set.names[i]},
                                   {"shape", t.shape},
                                   {"byte_offset", offset}});
            const std::size_t nbytes = t.data.size() * sizeof(double);
            const std::size_t at = blob.size();
            blob.resize(at + nbytes);
            std::memcpy(blob.data() + at, t.data.data(), nbytes);  // little-endian host
            offset += nbytes;
        }
    };
    append_set(data.actor, "actor.");
    if (data.has_critic) append_set(data.critic, "critic.");

    json header{{"format_version", 1},
                {"dtype", "f64"},
                {"aed_config", to_json(aed)},
                {"norm_constants", to_json(aed.norm_constants)},
                {"tensors", tensors}};
    if (data.acl.has_value()) header["acl_config"] = to_json(*data.acl);

    const std::string header_text = header.dump();
    std::string out;
    out.append(kMagic, 4);
    append_u32_le(out, static_cast<std::uint32_t>(header_text.size()));
    out += header_text;
    out += blob;
    write_text_file(path, out);
}

CheckpointData load_checkpoint(const std::string& path) {
    const std::string raw = read_text_file(path);
    if (raw.size() < 8 || std::memcmp(raw.data(), kMagic, 4) != 0) {
        raise(Errc::BadMagic, "not an LMB1 checkpoint: " + path);
    }
    const std::uint32_t header_len =
        read_u32_le(reinterpret_cast<const unsigned char*>(raw.data()) + 4);
    if (raw.size() < 8 + static_cast<std::size_t>(header_len)) {
        raise(Errc::TruncatedFile, "checkpoint header extends past end of file");
    }
    const json header = parse_json(raw.substr(8, header_len), "checkpoint header");
    if (header.value("format_version", -1) != 1) {
        raise(Errc::VersionUnsupported, "unsupported checkpoint format_version");
    }
    if (header.value("dtype", std::string()) != "f64") {
        raise(Errc::VersionUnsupported, "unsupported checkpoint dtype");
    }

    CheckpointData data;
    data.aed = aed_from_json(header.at("aed_config"));
    if (header.contains("acl_config")) data.acl = acl_from_json(header.at("acl_config"));

    const char* blob = raw.data() + 8 + header_len;
    const std::size_t blob_size = raw.size() - 8 - header_len;
    std::uint64_t expected_offset = 0;
    for (const auto& t : header.at("tensors")) {
        const std::string name = t.at("name").get<std::string>();
        const std::vector<int> shape = t.at("shape").get<std::vector<int>>();
        const std::uint64_t byte_offset = t.at("byte_offset").get<std::uint64_t>();
        if (shape.size() != 2 || shape[0] < 1 || shape[1] < 1) {
            raise(Errc::IoError, "bad tensor shape for " + name);
        }
        if (byte_offset != expected_offset) {
            raise(Errc::OffsetOverlap, "tensor offsets overlap or leave gaps at " + name);
        }
        const std::size_t nbytes =
            static_cast<std::size_t>(shape[0]) * shape[1] * sizeof(double);
        if (byte_offset + nbytes > blob_size) {
            raise(Errc::TruncatedFile, "tensor data extends past end of file: " + name);
        }
        Tensor tensor(shape[0], shape[1]);
        std::memcpy(tensor.data.data(), blob + byte_offset, nbytes);
        expected_offset += nbytes;

        if (name.rfind("actor.", 0) == 0) {
            data.actor.add(name.substr(6), std::move(tensor));
        } else if (name.rfind("critic.", 0) == 0) {
            data.critic.add(name.substr(7), std::move(tensor));
            data.has_critic = true;
        } else {
            raise(Errc::IoError, "tensor outside actor./critic. namespaces: " + name);
        }
    }
    return data;
}

// -- CSV ------------------------------------------------------------------------

std::string result_csv_header() {
    return "run_id,solver,prompt,n_ues,objective,penalized,gap_to_oracle,wall_ms,seed";
}

std::string result_csv(const std::vector<ResultRow>& rows) {
    std::string out = result_csv_header();
    out += '\n';
    for (const ResultRow& r : rows) {
        out += r.run_id;
        out += ',';
        out += r.solver;
        out += ',';
        out += r.prompt;
        out += ',';
        out += std::to_string(r.n_ues);
        out += ',';
        out += format_double(r.objective);
        out += ',';
        out += format_double(r.penalized);
        out += ',';
        if (r.gap_to_oracle.has_value()) out += format_double(*r.gap_to_oracle);
        out += ',';
        out += format_double(r.wall_ms);
        out += ',';
        out += std::to_string(r.seed);
        out += '\n';
    }
    return out;
}

std::string train_log_csv(const TrainLog& log) {
    std::string out =
        "epoch,mean_reward,mean_penalized_min_latency,mean_penalized_min_energy,actor_loss,"
        "critic_loss,mean_entropy,holdout_min_latency,holdout_min_energy\n";
    for (const TrainLogRow& r : log) {
        out += std::to_string(r.epoch);
        out += ',';
        out += format_double(r.mean_reward);
        out += ',';
        out += format_double(r.mean_penalized_min_latency);
        out += ',';
        out += format_double(r.mean_penalized_min_energy);
        out += ',';
        out += format_double(r.actor_loss);
        out += ',';
        out += format_double(r.critic_loss);
        out += ',';
        out += format_double(r.mean_entropy);
        out += ',';
        if (r.has_holdout) out += format_double(r.holdout_min_latency);
        out += ',';
        if (r.has_holdout) out += format_double(r.holdout_min_energy);
        out += '\n';
    }
    return out;
}

std::string session_csv(const SessionResult& session) {
    std::string out =
        "step,queried,score,adapting_penalized,frozen_penalized,expert_penalized\n";
    for (const SessionStep& s : session.steps) {
        out += std::to_string(s.step);
        out += ',';
        out += s.queried ? "1" : "0";
        out += ',';
        out += format_double(s.score);
        out += ',';
        out += format_double(s.adapting_penalized);
        out += ',';
        out += format_double(s.frozen_penalized);
        out += ',';
        out += format_double(s.expert_penalized);
        out += '\n';
    }
    return out;
}

// -- orchestration ----------------------------------------------------------------

namespace {

struct OracleCache {
    bool available = false;
    double penalized = 0.0;
};

Decision solver_decision(const std::string& solver, const MecInstance& inst, Prompt prompt,
                         const CompareRequest& req, int prompt_idx, std::size_t instance_idx) {
    if (solver == "local") return solve_local(inst);
    if (solver == "random") {
        return solve_random(inst, derive_seed(req.seed, 0x7A2D0 + prompt_idx, instance_idx));
    }
    if (solver == "de") {
        DeConfig de = req.de;
        de.seed = derive_seed(req.seed, 0xDE00 + prompt_idx, instance_idx);
        return solve_de(inst, prompt, de);
    }
    if (solver == "exact") return solve_exact(inst, prompt, req.budget).decision;
    if (solver == "lambo") {
        if (req.actor == nullptr || req.aed == nullptr) {
            raise(Errc::ConfigError, "lambo solver requires a checkpoint");
        }
        return decode_sequence(inst, prompt, *req.actor, *req.aed, DecodeMode::Greedy, 0).decision;
    }
    raise(Errc::ConfigError, "unknown solver: " + solver);
}

}  // namespace

std::vector<ResultRow> run_compare(const CompareRequest& req) {
    if (req.instances.empty()) raise(Errc::ConfigError, "compare: no instances");
    if (req.solvers.empty()) raise(Errc::ConfigError, "compare: no solvers");

    std::vector<ResultRow> rows;
    for (int pi = 0; pi < static_cast<int>(req.prompts.size()); ++pi) {
        const Prompt prompt = req.prompts[pi];
        for (std::size_t ii = 0; ii < req.instances.size(); ++ii) {
            const MecInstance& inst = req.instances[ii];

            OracleCache oracle;
            if (exact_enumeration_count(inst.n_ues(), inst.n_servers()) <=
                req.budget.max_enumerations) {
                oracle.available = true;
                oracle.penalized = solve_exact(inst, prompt, req.budget).objective;
            }

            for (const std::string& solver : req.solvers) {
                const auto t0 = std::chrono::steady_clock::now();
                const Decision d = solver_decision(solver, inst, prompt, req, pi, ii);
                const Evaluation ev = evaluate(inst, d, prompt);
                const auto t1 = std::chrono::steady_clock::now();

                ResultRow row;
                row.run_id = req.run_id;
                row.solver = solver;
                row.prompt = prompt_to_string(prompt);
                row.n_ues = inst.n_ues();
                row.objective = ev.objective;
                row.penalized = ev.penalized;
                if (oracle.available && oracle.penalized > 0.0) {
                    row.gap_to_oracle = (ev.penalized - oracle.penalized) / oracle.penalized;
                }
                row.wall_ms =
                    req.timing
                        ? std::chrono::duration<double, std::milli>(t1 - t0).count()
                        : 0.0;
                row.seed = req.seed;
                rows.push_back(std::move(row));
            }
        }
    }
    return rows;
}

ExperimentResult run_experiment(const std::string& spec_json, const std::string& base_dir) {
    const json spec = parse_json(spec_json, "experiment spec");
    const std::uint64_t seed = spec.value("seed", std::uint64_t{0});
    const int count = spec.value("count", 20);
    if (count < 1) raise(Errc::ConfigError, "experiment count must be >= 1");

    GenConfig gen = spec.contains("gen") ? gen_from_json(spec.at("gen")) : GenConfig{};
    const InstanceGenerator generator = seeded_generator(gen, derive_seed(seed, 0xE7A));
    std::vector<MecInstance> instances;
    instances.reserve(count);
    for (int i = 0; i < count; ++i) instances.push_back(generator(i));

    CompareRequest req;
    req.instances = std::move(instances);
    req.seed = seed;
    req.run_id = spec.value("run_id", std::string("experiment"));
    req.timing = spec.value("timing", false);
    if (spec.contains("de")) req.de = de_from_json(spec.at("de"));
    if (spec.contains("budget")) req.budget.max_enumerations = spec.at("budget").get<std::int64_t>();
    if (spec.contains("solvers")) req.solvers = spec.at("solvers").get<std::vector<std::string>>();

    ExperimentResult result;

    // Plain solver rows first.
    if (!req.solvers.empty()) {
        result.rows = run_compare(req);
    }

    // Model rows: each named AED config is loaded or pre-trained, then
    // evaluated greedily like any other solver.
    if (spec.contains("models")) {
        int model_index = 0;
        for (const auto& model : spec.at("models")) {
            const std::string name = model.value("name", "lambo-" + std::to_string(model_index));
            ParamSet actor;
            AedConfig aed;
            if (model.contains("checkpoint")) {
                std::string path = model.at("checkpoint").get<std::string>();
                if (!path.empty() && path[0] != '/' && !base_dir.empty()) {
                    path = base_dir + "/" + path;
                }
                CheckpointData ck = load_checkpoint(path);
                actor = std::move(ck.actor);
                aed = ck.aed;
            } else {
                aed = model.contains("aed") ? aed_from_json(model.at("aed"))
                                            : AedConfig::desk_default(gen.n_servers);
                aed.n_servers = gen.n_servers;
                AclConfig acl =
                    model.contains("acl") ? acl_from_json(model.at("acl")) : AclConfig{};
                if (!model.contains("acl") || !model.at("acl").contains("seed")) {
                    acl.seed = derive_seed(seed, 0xACE, model_index);
                }
                const InstanceGenerator train_gen =
                    seeded_generator(gen, derive_seed(seed, 0x7E81, model_index));
                actor = pretrain(train_gen, aed, acl).actor;
            }

            CompareRequest model_req = req;
            model_req.solvers = {"lambo"};
            model_req.actor = &actor;
            model_req.aed = &aed;
            std::vector<ResultRow> rows = run_compare(model_req);
            for (ResultRow& r : rows) r.solver = name;
            result.rows.insert(result.rows.end(), rows.begin(), rows.end());
            ++model_index;
        }
    }
    if (result.rows.empty()) raise(Errc::ConfigError, "experiment produced no rows");

    // Summary with normal-approximation 95% confidence intervals.
    json summary;
    summary["run_id"] = req.run_id;
    summary["count"] = count;
    summary["seed"] = seed;
    json per_solver = json::object();
    for (const ResultRow& row : result.rows) {
        per_solver[row.solver][row.prompt]["values"].push_back(row.objective);
        per_solver[row.solver][row.prompt]["penalized"].push_back(row.penalized);
    }
    json solvers_out = json::object();
    for (auto& [solver, prompts] : per_solver.items()) {
        for (auto& [prompt, data] : prompts.items()) {
            const auto values = data.at("values").get<std::vector<double>>();
            const auto pens = data.at("penalized").get<std::vector<double>>();
            const double n = static_cast<double>(values.size());
            double mean = 0.0, mean_pen = 0.0;
            for (double v : values) mean += v;
            for (double v : pens) mean_pen += v;
            mean /= n;
            mean_pen /= n;
            double var = 0.0;
            for (double v : values) var += (v - mean) * (v - mean);
            const double sd = n > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
            solvers_out[solver][prompt] = json{{"mean", mean},
                                               {"ci95", 1.96 * sd / std::sqrt(n)},
                                               {"n", values.size()},
                                               {"mean_penalized", mean_pen}};
        }
    }
    summary["solvers"] = solvers_out;
    result.summary_json = summary.dump(2) + "\n";
    return result;
}

}  // namespace lambo
