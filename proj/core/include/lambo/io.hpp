#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lambo/acl.hpp"
#include "lambo/aed.hpp"
#include "lambo/alef.hpp"
#include "lambo/mec.hpp"
#include "lambo/solvers.hpp"
#include "lambo/tensor.hpp"

namespace lambo {

// -- small helpers ----------------------------------------------------------

/// Shortest round-trip decimal form, locale-independent (dot decimal).
std::string format_double(double v);

std::string prompt_to_string(Prompt prompt);
Prompt prompt_from_string(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// -- configuration ----------------------------------------------------------

/// One JSON document with optional "aed", "acl", "gen", "de", "query",
/// "finetune" sections; absent sections keep their defaults.
struct RunConfigBundle {
    AedConfig aed;
    AclConfig acl;
    GenConfig gen;
    DeConfig de;
    QueryPolicy query;
    FinetuneConfig finetune;
    bool has_aed = false;
    bool has_acl = false;
    bool has_gen = false;
};

RunConfigBundle parse_config_bundle(const std::string& json_text);

std::string aed_config_to_json(const AedConfig& config);
std::string gen_config_to_json(const GenConfig& config);

// -- instance records (JSONL) -------------------------------------------------

std::string instance_to_json_line(const MecInstance& instance);
/// Gains are optional in the record and recomputed from positions when absent.
MecInstance instance_from_json_line(const std::string& line);

void write_instances_jsonl(const std::string& path, const std::vector<MecInstance>& instances);
std::vector<MecInstance> read_instances_jsonl(const std::string& path);

// -- checkpoints ("LMB1") -----------------------------------------------------
//
// Layout: 4-byte magic "LMB1"; 4-byte little-endian header length; UTF-8 JSON
// header {format_version, dtype, aed_config, acl_config?, norm_constants,
// tensors:[{name, shape, byte_offset}]}; concatenated little-endian f64 data.
// Offsets are relative to the data section and strictly ascending.

struct CheckpointData {
    ParamSet actor;
    ParamSet critic;  // empty when has_critic is false
    bool has_critic = false;
    AedConfig aed;
    std::optional<AclConfig> acl;
};

void save_checkpoint(const CheckpointData& data, const std::string& path);
CheckpointData load_checkpoint(const std::string& path);

// -- result rows (CSV) --------------------------------------------------------

struct ResultRow {
    std::string run_id;
    std::string solver;
    std::string prompt;
    int n_ues = 0;
    double objective = 0.0;
    double penalized = 0.0;
    std::optional<double> gap_to_oracle;
    double wall_ms = 0.0;
    std::uint64_t seed = 0;
};

std::string result_csv_header();
std::string result_csv(const std::vector<ResultRow>& rows);
std::string train_log_csv(const TrainLog& log);
std::string session_csv(const SessionResult& session);

// -- orchestration ------------------------------------------------------------

struct CompareRequest {
    std::vector<MecInstance> instances;
    std::vector<std::string> solvers;  // local | random | de | exact | lambo
    std::vector<Prompt> prompts = {Prompt::min_latency(), Prompt::min_energy()};
    const ParamSet* actor = nullptr;   // required for "lambo"
    const AedConfig* aed = nullptr;
    DeConfig de;
    OracleBudget budget;
    std::uint64_t seed = 0;
    std::string run_id = "compare";
    bool timing = false;  // off by default so reruns are byte-identical
};

/// One row per (prompt, instance, solver), in that order. The oracle gap is
/// filled whenever exact enumeration fits the budget.
std::vector<ResultRow> run_compare(const CompareRequest& request);

struct ExperimentResult {
    std::vector<ResultRow> rows;
    std::string summary_json;  // per-solver/prompt mean, 95% CI, n
};

/// Experiment spec (JSON): {seed, count, run_id?, gen?, solvers: [...],
/// models: [{name, aed?, acl?, checkpoint?}], de?, budget?, timing?}.
/// Models with a checkpoint path are loaded (relative to base_dir); others
/// are pre-trained in place. Each model contributes rows under its name.
ExperimentResult run_experiment(const std::string& spec_json, const std::string& base_dir);

}  // namespace lambo
