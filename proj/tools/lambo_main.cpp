// lambo: prompt-conditioned offloading for simulated edge systems.
//
// Subcommands: gen, pretrain, eval, finetune, oracle, compare, experiment.
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lambo/acl.hpp"
#include "lambo/aed.hpp"
#include "lambo/alef.hpp"
#include "lambo/error.hpp"
#include "lambo/io.hpp"
#include "lambo/mec.hpp"
#include "lambo/solvers.hpp"

namespace {

using namespace lambo;

const char* errc_name(Errc code) {
    switch (code) {
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::NonFinite: return "NonFinite";
        case Errc::NotScalar: return "NotScalar";
        case Errc::ConfigError: return "ConfigError";
        case Errc::UnknownPrompt: return "UnknownPrompt";
        case Errc::InvalidDecision: return "InvalidDecision";
        case Errc::OracleTooLarge: return "OracleTooLarge";
        case Errc::Infeasible: return "Infeasible";
        case Errc::BadMagic: return "BadMagic";
        case Errc::VersionUnsupported: return "VersionUnsupported";
        case Errc::TruncatedFile: return "TruncatedFile";
        case Errc::OffsetOverlap: return "OffsetOverlap";
        case Errc::IoError: return "IoError";
    }
    return "Error";
}

struct CommonArgs {
    std::uint64_t seed = 0;
    std::string config_path;
    int n_ues = 0;
    int n_servers = 0;

    RunConfigBundle bundle() const {
        RunConfigBundle b;
        if (!config_path.empty()) b = parse_config_bundle(read_text_file(config_path));
        if (n_ues > 0) b.gen.n_ues = n_ues;
        if (n_servers > 0) b.gen.n_servers = n_servers;
        return b;
    }
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--seed", args.seed, "Base seed for all randomness");
    cmd->add_option("--config", args.config_path, "JSON config file");
    cmd->add_option("--n-ues", args.n_ues, "Number of UEs");
    cmd->add_option("--n-servers", args.n_servers, "Number of edge servers");
}

std::vector<Prompt> prompts_from_flag(const std::string& flag) {
    if (flag.empty()) return {Prompt::min_latency(), Prompt::min_energy()};
    return {prompt_from_string(flag)};
}

int cmd_gen(const CommonArgs& common, int count, const std::string& out_path) {
    RunConfigBundle cfg = common.bundle();
    std::vector<MecInstance> instances;
    instances.reserve(count);
    const InstanceGenerator generator = seeded_generator(cfg.gen, common.seed);
    for (int i = 0; i < count; ++i) instances.push_back(generator(i));
    write_instances_jsonl(out_path, instances);
    std::cout << "wrote " << instances.size() << " instances to " << out_path << "\n";
    return 0;
}

int cmd_pretrain(const CommonArgs& common, const std::string& out_path,
                 const std::string& log_path) {
    RunConfigBundle cfg = common.bundle();
    if (!cfg.has_aed) cfg.aed = AedConfig::desk_default(cfg.gen.n_servers);
    cfg.aed.n_servers = cfg.gen.n_servers;
    if (common.seed != 0 || !cfg.has_acl) cfg.acl.seed = common.seed;

    const InstanceGenerator generator = seeded_generator(cfg.gen, derive_seed(cfg.acl.seed, 0x6E4));
    const PretrainResult result = pretrain(generator, cfg.aed, cfg.acl);

    CheckpointData ck;
    ck.actor = result.actor;
    ck.critic = result.critic;
    ck.has_critic = true;
    ck.aed = cfg.aed;
    ck.acl = cfg.acl;
    save_checkpoint(ck, out_path);
    if (!log_path.empty()) write_text_file(log_path, train_log_csv(result.log));

    std::cout << "pretrained " << result.log.size() << " epochs; checkpoint " << out_path;
    if (result.aborted_non_finite) std::cout << " (aborted on non-finite, last good epoch kept)";
    std::cout << "\n";
    if (!result.log.empty()) {
        const TrainLogRow& last = result.log.back();
        std::cout << "final mean reward " << format_double(last.mean_reward) << "\n";
    }
    return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& checkpoint_path,
             const std::string& instances_path, const std::string& prompt_flag,
             std::int64_t budget, bool want_gap, const std::string& out_path) {
    const CheckpointData ck = load_checkpoint(checkpoint_path);
    const std::vector<MecInstance> instances = read_instances_jsonl(instances_path);

    std::vector<ResultRow> rows;
    for (Prompt prompt : prompts_from_flag(prompt_flag)) {
        std::optional<OracleBudget> oracle;
        if (want_gap) oracle = OracleBudget{budget};
        const PolicyEval eval =
            evaluate_policy(ck.actor, ck.aed, instances, prompt, DecodeMode::Greedy, oracle);
        std::cout << prompt_to_string(prompt)
                  << " mean_penalized=" << format_double(eval.mean_objective);
        if (eval.mean_gap_to_oracle.has_value()) {
            std::cout << " mean_gap_to_oracle=" << format_double(*eval.mean_gap_to_oracle);
        }
        std::cout << "\n";

        if (!out_path.empty()) {
            CompareRequest req;
            req.instances = instances;
            req.solvers = {"lambo"};
            req.prompts = {prompt};
            req.actor = &ck.actor;
            req.aed = &ck.aed;
            req.budget.max_enumerations = want_gap ? budget : 0;
            req.seed = common.seed;
            req.run_id = "eval";
            std::vector<ResultRow> prompt_rows = run_compare(req);
            rows.insert(rows.end(), prompt_rows.begin(), prompt_rows.end());
        }
    }
    if (!out_path.empty()) write_text_file(out_path, result_csv(rows));
    return 0;
}

int cmd_oracle(const CommonArgs& common, const std::string& instances_path,
               const std::string& prompt_flag, std::int64_t budget, const std::string& out_path) {
    const std::vector<MecInstance> instances = read_instances_jsonl(instances_path);
    CompareRequest req;
    req.instances = instances;
    req.solvers = {"exact"};
    req.prompts = prompts_from_flag(prompt_flag);
    req.budget.max_enumerations = budget;
    req.seed = common.seed;
    req.run_id = "oracle";

    // Surface OracleTooLarge before producing partial output.
    for (const MecInstance& inst : instances) {
        const std::int64_t need = exact_enumeration_count(inst.n_ues(), inst.n_servers());
        if (need > budget) {
            raise(Errc::OracleTooLarge, "instance needs " + std::to_string(need) +
                                            " enumerations, budget is " + std::to_string(budget));
        }
    }
    const std::vector<ResultRow> rows = run_compare(req);
    const std::string csv = result_csv(rows);
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        write_text_file(out_path, csv);
    }
    return 0;
}

int cmd_compare(const CommonArgs& common, const std::string& instances_path,
                const std::vector<std::string>& solvers, const std::string& prompt_flag,
                const std::string& checkpoint_path, std::int64_t budget, bool timing,
                const std::string& out_path) {
    RunConfigBundle cfg = common.bundle();
    CompareRequest req;
    req.instances = read_instances_jsonl(instances_path);
    req.solvers = solvers;
    req.prompts = prompts_from_flag(prompt_flag);
    req.budget.max_enumerations = budget;
    req.de = cfg.de;
    req.seed = common.seed;
    req.timing = timing;

    CheckpointData ck;
    const bool wants_lambo =
        std::find(solvers.begin(), solvers.end(), "lambo") != solvers.end();
    if (wants_lambo) {
        if (checkpoint_path.empty()) {
            throw CLI::ValidationError("--checkpoint is required with --solver lambo");
        }
        ck = load_checkpoint(checkpoint_path);
        req.actor = &ck.actor;
        req.aed = &ck.aed;
    }

    const std::string csv = result_csv(run_compare(req));
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        write_text_file(out_path, csv);
    }
    return 0;
}

int cmd_finetune(const CommonArgs& common, const std::string& checkpoint_path,
                 const std::string& instances_path, const std::string& prompt_flag, int steps,
                 int query_budget, std::int64_t budget, const std::string& metrics_path,
                 const std::string& checkpoint_out) {
    RunConfigBundle cfg = common.bundle();
    const CheckpointData ck = load_checkpoint(checkpoint_path);

    MecInstance initial;
    if (!instances_path.empty()) {
        const std::vector<MecInstance> instances = read_instances_jsonl(instances_path);
        if (instances.empty()) raise(Errc::IoError, "no instances in " + instances_path);
        initial = instances.front();
    } else {
        cfg.gen.n_servers = ck.aed.n_servers;
        initial = generate_instance(cfg.gen, common.seed);
    }

    const Prompt prompt =
        prompt_flag.empty() ? Prompt::min_latency() : prompt_from_string(prompt_flag);
    QueryPolicy policy = cfg.query;
    if (query_budget >= 0) policy.budget = query_budget;
    FinetuneConfig finetune = cfg.finetune;
    finetune.seed = common.seed;

    const SessionResult session = drift_session(initial, ck.actor, ck.aed, prompt, policy,
                                                finetune, steps, ExpertKind::Auto,
                                                OracleBudget{budget}, cfg.de);
    if (!metrics_path.empty()) write_text_file(metrics_path, session_csv(session));
    if (!checkpoint_out.empty()) {
        CheckpointData out = ck;
        out.actor = session.adapted;
        save_checkpoint(out, checkpoint_out);
    }
    std::cout << "session steps=" << session.steps.size()
              << " queries=" << session.queries_used
              << " adapting_gap=" << format_double(session.mean_adapting_gap)
              << " frozen_gap=" << format_double(session.mean_frozen_gap) << "\n";
    return 0;
}

int cmd_experiment(const std::string& spec_path, const std::string& out_dir) {
    const std::string spec = read_text_file(spec_path);
    std::filesystem::create_directories(out_dir);
    const std::string base_dir = std::filesystem::path(spec_path).parent_path().string();
    const ExperimentResult result = run_experiment(spec, base_dir);
    write_text_file(out_dir + "/results.csv", result_csv(result.rows));
    write_text_file(out_dir + "/summary.json", result.summary_json);
    std::cout << "wrote " << result.rows.size() << " rows to " << out_dir << "/results.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prompt-conditioned offloading: simulator, policy, solvers"};
    app.require_subcommand(1);

    CommonArgs common;

    auto* gen = app.add_subcommand("gen", "Generate a seeded instance file (JSONL)");
    add_common(gen, common);
    int gen_count = 1;
    std::string gen_out = "instances.jsonl";
    gen->add_option("--count", gen_count, "Number of instances");
    gen->add_option("--out", gen_out, "Output JSONL path")->required();

    auto* pre = app.add_subcommand("pretrain", "Actor-critic pre-training");
    add_common(pre, common);
    std::string pre_out = "model.lmb", pre_log;
    pre->add_option("--out", pre_out, "Checkpoint output path")->required();
    pre->add_option("--log", pre_log, "Training log CSV path");

    auto* eval = app.add_subcommand("eval", "Greedy policy evaluation");
    add_common(eval, common);
    std::string eval_ckpt, eval_instances, eval_prompt, eval_out;
    std::int64_t eval_budget = 1 << 20;
    bool eval_gap = false;
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
    eval->add_option("--instances", eval_instances, "Instance JSONL path")->required();
    eval->add_option("--prompt", eval_prompt, "min_latency or min_energy (default both)");
    eval->add_option("--budget", eval_budget, "Oracle enumeration budget");
    eval->add_flag("--gap", eval_gap, "Also report the mean gap to the exact oracle");
    eval->add_option("--out", eval_out, "Result CSV path");

    auto* oracle = app.add_subcommand("oracle", "Exact-oracle objectives per instance");
    add_common(oracle, common);
    std::string oracle_instances, oracle_prompt, oracle_out;
    std::int64_t oracle_budget = 1 << 20;
    oracle->add_option("--instances", oracle_instances, "Instance JSONL path")->required();
    oracle->add_option("--prompt", oracle_prompt, "min_latency or min_energy (default both)");
    oracle->add_option("--budget", oracle_budget, "Max enumerations");
    oracle->add_option("--out", oracle_out, "Result CSV path (stdout when omitted)");

    auto* compare = app.add_subcommand("compare", "Run solvers over an instance file per prompt");
    add_common(compare, common);
    std::vector<std::string> compare_solvers;
    std::string compare_instances, compare_prompt, compare_ckpt, compare_out;
    std::int64_t compare_budget = 1 << 20;
    bool compare_timing = false;
    compare->add_option("--instances", compare_instances, "Instance JSONL path")->required();
    compare->add_option("--solver", compare_solvers, "local|random|de|exact|lambo (repeatable)")
        ->required();
    compare->add_option("--prompt", compare_prompt, "Restrict to one prompt");
    compare->add_option("--checkpoint", compare_ckpt, "Checkpoint for the lambo solver");
    compare->add_option("--budget", compare_budget, "Oracle enumeration budget");
    compare->add_flag("--timing", compare_timing, "Measure wall_ms (breaks rerun byte-identity)");
    compare->add_option("--out", compare_out, "Result CSV path (stdout when omitted)");

    auto* finetune = app.add_subcommand("finetune", "Active-learning drift session");
    add_common(finetune, common);
    std::string ft_ckpt, ft_instances, ft_prompt, ft_metrics, ft_ckpt_out;
    int ft_steps = 200, ft_query_budget = -1;
    std::int64_t ft_budget = 1 << 20;
    finetune->add_option("--checkpoint", ft_ckpt, "Pre-trained checkpoint")->required();
    finetune->add_option("--instances", ft_instances, "Initial instance source (first record)");
    finetune->add_option("--prompt", ft_prompt, "Session prompt (default min_latency)");
    finetune->add_option("--steps", ft_steps, "Drift steps");
    finetune->add_option("--query-budget", ft_query_budget, "Max expert labels");
    finetune->add_option("--budget", ft_budget, "Oracle enumeration budget for the expert");
    finetune->add_option("--out", ft_metrics, "Session metrics CSV path");
    finetune->add_option("--checkpoint-out", ft_ckpt_out, "Adapted checkpoint path");

    auto* experiment = app.add_subcommand("experiment", "Run a multi-solver experiment spec");
    std::string exp_spec, exp_out_dir = "results";
    experiment->add_option("--spec", exp_spec, "Experiment spec JSON")->required();
    experiment->add_option("--out-dir", exp_out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (app.got_subcommand(gen)) return cmd_gen(common, gen_count, gen_out);
        if (app.got_subcommand(pre)) return cmd_pretrain(common, pre_out, pre_log);
        if (app.got_subcommand(eval)) {
            return cmd_eval(common, eval_ckpt, eval_instances, eval_prompt, eval_budget, eval_gap,
                            eval_out);
        }
        if (app.got_subcommand(oracle)) {
            return cmd_oracle(common, oracle_instances, oracle_prompt, oracle_budget, oracle_out);
        }
        if (app.got_subcommand(compare)) {
            return cmd_compare(common, compare_instances, compare_solvers, compare_prompt,
                               compare_ckpt, compare_budget, compare_timing, compare_out);
        }
        if (app.got_subcommand(finetune)) {
            return cmd_finetune(common, ft_ckpt, ft_instances, ft_prompt, ft_steps,
                                ft_query_budget, ft_budget, ft_metrics, ft_ckpt_out);
        }
        if (app.got_subcommand(experiment)) return cmd_experiment(exp_spec, exp_out_dir);
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << errc_name(e.code()) << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
