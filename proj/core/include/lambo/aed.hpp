#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "lambo/mec.hpp"
#include "lambo/tensor.hpp"

namespace lambo {

/// Affine feature normalization: normalized = (raw - offset) / scale.
struct FeatureNorm {
    double offset = 0.0;
    double scale = 1.0;
};

/// Architecture of the policy network. The head widths and the UE feature
/// count depend on the number of servers, so a config is bound to one M.
struct AedConfig {
    int d_model = 64;
    int n_heads = 4;
    int enc_layers = 4;
    int dec_layers = 1;
    int d_ffn = 256;
    int prompt_vocab = 2;
    int n_servers = 4;
    double f_min_frac = 0.01;  // server masked when remaining < f_min_frac * capacity
    double layer_norm_eps = 1e-9;
    double rho_sample_sigma = 0.1;
    std::vector<FeatureNorm> norm_constants;  // per UE feature; filled with defaults when empty

    int ue_feature_count() const { return n_servers + 5; }  // gains, D, C, f_local, x, y
    std::vector<FeatureNorm> effective_norms() const;

    /// Raises ConfigError unless d_model % n_heads == 0, enc_layers >= dec_layers >= 1,
    /// f_min_frac in (0,1), and the encoder stack holds at least as many
    /// parameters as the decoder stack (the asymmetric contract).
    void validate() const;

    static AedConfig desk_default(int n_servers);
};

/// Analytic parameter counts for the asymmetry check and reporting.
std::int64_t encoder_stack_param_count(const AedConfig& config);
std::int64_t decoder_stack_param_count(const AedConfig& config);

ParamSet init_actor_params(const AedConfig& config, std::uint64_t seed);
ParamSet init_critic_params(const AedConfig& config, std::uint64_t seed);

/// Parameter name prefixes of the two fine-tuning partitions.
extern const std::vector<std::string> kFrozenPrefixes;    // input embedding + encoder
extern const std::vector<std::string> kDecoderPrefixes;   // decoder + output heads

/// Name-addressed view of a ParamSet attached to a tape as gradient leaves.
class AttachedParams {
public:
    AttachedParams(Tape& tape, const ParamSet& params);
    /// Wraps leaves attached elsewhere (vars aligns with params.tensors).
    AttachedParams(const ParamSet& params, std::vector<Var> vars);

    Var operator[](const std::string& name) const;
    const std::vector<Var>& vars() const { return vars_; }

private:
    std::vector<Var> vars_;
    std::unordered_map<std::string, Var> by_name_;
};

struct EmbeddingSet {
    Var ue_tokens = -1;    // N x d_model
    Var prompt_token = -1; // 1 x d_model
};

/// Remaining per-server capacity during sequential decoding.
struct MecState {
    std::vector<double> remaining;
};

EmbeddingSet embed_inputs(Tape& tape, const AttachedParams& params, const MecInstance& instance,
                          Prompt prompt, const AedConfig& config);

/// Projection of remaining/capacity into the embedding space.
Var mec_token(Tape& tape, const AttachedParams& params, const MecState& state,
              const MecInstance& instance, const AedConfig& config);

/// Deep-encoder forward over the N UE tokens plus the prompt token.
Var encode(Tape& tape, const AttachedParams& params, const EmbeddingSet& embeddings,
           const AedConfig& config);

struct StepHeads {
    Var assoc_logits = -1;  // 1 x (M+1), unmasked
    Var rho_logit = -1;     // 1 x 1, pre-sigmoid
    Var rho_mean = -1;      // 1 x 1, sigmoid output
};

/// Builds the decoder query input for one UE from its embedding token, the
/// current MEC token, and the prompt token.
Var build_query_input(Tape& tape, const AttachedParams& params, Var ue_token, Var mec_tok,
                      Var prompt_tok, const AedConfig& config);

/// One decoding step: shallow-decoder forward over the already-decided query
/// inputs (current last), cross-attending to the encoder context, then the
/// two output heads for the last position.
StepHeads decode_step(Tape& tape, const AttachedParams& params, Var context,
                      const std::vector<Var>& query_inputs, const AedConfig& config);

enum class DecodeMode { Greedy, Sample };

struct DecodeOutput {
    Tensor probs;                        // N x (M+1); masked entries exactly 0
    std::vector<double> rho_mean;        // strictly in (0,1)
    Decision decision;
    double log_prob = 0.0;
    std::vector<double> per_ue_entropy;  // nats
};

/// A trajectory to replay through the decoder: associations plus exact
/// fraction-of-remaining values for offloaded UEs (ignored where assoc = 0).
/// with_rho_log_prob additionally rebuilds the sampling density term for the
/// replayed fractions (they must then lie strictly inside (0, 1)).
struct ForcedTrajectory {
    std::vector<int> assoc;
    std::vector<double> rho;
    bool with_rho_log_prob = false;
};

/// Graph handles produced by one decode pass on a caller-owned tape.
struct DecodeBuild {
    Var log_prob = -1;                      // scalar
    Var entropy_sum = -1;                   // scalar
    std::vector<Var> step_log_prob_rows;    // per UE: 1 x (M+1) masked log-softmax
    std::vector<Var> step_rho_means;        // per UE: 1 x 1 sigmoid node
    DecodeOutput output;
    ForcedTrajectory trajectory;            // actions taken, replayable
};

/// Sequential decode building nodes on an existing tape (for training and
/// gradient checks).
DecodeBuild decode_on_tape(Tape& tape, const AttachedParams& params, const MecInstance& instance,
                           Prompt prompt, const AedConfig& config, DecodeMode mode,
                           std::uint64_t seed, const ForcedTrajectory* forced = nullptr);

/// Decode graph owning its tape; `output` carries the plain values.
struct DecodeGraph {
    Tape tape;
    std::vector<Var> param_vars;  // aligned with the ParamSet
    Var log_prob = -1;
    Var entropy_sum = -1;
    std::vector<Var> step_log_prob_rows;
    std::vector<Var> step_rho_means;
    DecodeOutput output;
    ForcedTrajectory trajectory;
};

/// Constraint-aware sequential decoding. Server m is masked at a step when
/// remaining[m] < f_min_frac * capacity[m]; allocations are fractions of the
/// remaining capacity, so the result satisfies every server capacity by
/// construction. `forced` replays a fixed trajectory (teacher forcing).
DecodeGraph decode_sequence_graph(const MecInstance& instance, Prompt prompt,
                                  const ParamSet& params, const AedConfig& config, DecodeMode mode,
                                  std::uint64_t seed, const ForcedTrajectory* forced = nullptr);

DecodeOutput decode_sequence(const MecInstance& instance, Prompt prompt, const ParamSet& params,
                             const AedConfig& config, DecodeMode mode, std::uint64_t seed);

/// True iff per-server allocated cycles never exceed capacity (relative
/// slack 1e-12 for accumulated rounding). AED outputs must always pass.
bool decision_capacity_audit(const MecInstance& instance, const Decision& decision);

}  // namespace lambo
