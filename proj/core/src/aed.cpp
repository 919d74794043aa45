#include "lambo/aed.hpp"

#include <algorithm>
#include <cmath>

namespace lambo {

namespace {

constexpr double kMaskValue = -1e30;  // exactly representable; softmax underflows to 0
constexpr double kRhoEps = 1e-12;     // keeps reported rho inside the open interval

double stable_sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

std::vector<FeatureNorm> AedConfig::effective_norms() const {
    if (!norm_constants.empty()) return norm_constants;
    std::vector<FeatureNorm> norms(ue_feature_count());
    for (int m = 0; m < n_servers; ++m) norms[m] = {0.0, 1e-7};  // channel gains
    norms[n_servers + 0] = {0.0, 2e6};  // data bits
    norms[n_servers + 1] = {0.0, 1e9};  // cycles
    norms[n_servers + 2] = {0.0, 1e9};  // local CPU
    norms[n_servers + 3] = {0.0, 1.0};  // x / area
    norms[n_servers + 4] = {0.0, 1.0};  // y / area
    return norms;
}

void AedConfig::validate() const {
    if (d_model < 1 || n_heads < 1 || d_ffn < 1) {
        raise(Errc::ConfigError, "d_model, n_heads, d_ffn must be >= 1");
    }
    if (d_model % n_heads != 0) raise(Errc::ConfigError, "d_model must be divisible by n_heads");
    if (dec_layers < 1 || enc_layers < dec_layers) {
        raise(Errc::ConfigError, "need enc_layers >= dec_layers >= 1");
    }
    if (prompt_vocab != 2) raise(Errc::ConfigError, "prompt vocabulary is fixed to 2 tokens");
    if (n_servers < 1) raise(Errc::ConfigError, "n_servers must be >= 1");
    if (!(f_min_frac > 0.0) || !(f_min_frac < 1.0)) {
        raise(Errc::ConfigError, "f_min_frac must be in (0, 1)");
    }
    if (!norm_constants.empty() &&
        static_cast<int>(norm_constants.size()) != ue_feature_count()) {
        raise(Errc::ConfigError, "norm_constants length must equal the UE feature count");
    }
    for (const auto& fn : effective_norms()) {
        if (!(fn.scale != 0.0) || !std::isfinite(fn.scale) || !std::isfinite(fn.offset)) {
            raise(Errc::ConfigError, "feature norms must be finite with non-zero scale");
        }
    }
    if (encoder_stack_param_count(*this) < decoder_stack_param_count(*this)) {
        raise(Errc::ConfigError,
              "asymmetric contract violated: decoder stack has more parameters than encoder stack");
    }
}

AedConfig AedConfig::desk_default(int n_servers) {
    AedConfig cfg;
    cfg.n_servers = n_servers;
    return cfg;
}

std::int64_t encoder_stack_param_count(const AedConfig& c) {
    const std::int64_t d = c.d_model, f = c.d_ffn;
    const std::int64_t attn = 4 * d * d + 3 * d;  // q/v/o biased, k unbiased
    const std::int64_t ffn = d * f + f + f * d + d;
    const std::int64_t norms = 4 * d;  // two learnable layer norms
    return c.enc_layers * (attn + ffn + norms);
}

std::int64_t decoder_stack_param_count(const AedConfig& c) {
    const std::int64_t d = c.d_model, f = c.d_ffn, heads = c.n_servers + 1;
    const std::int64_t attn = 4 * d * d + 3 * d;
    const std::int64_t ffn = d * f + f + f * d + d;
    const std::int64_t per_layer = 2 * attn + ffn + 6 * d;
    const std::int64_t in_proj = 3 * d * d + d;
    const std::int64_t out_heads = d * heads + heads + d + 1;
    return in_proj + c.dec_layers * per_layer + out_heads;
}

namespace {

Tensor xavier(int rows, int cols, Rng& rng) {
    Tensor t(rows, cols);
    const double bound = std::sqrt(6.0 / (rows + cols));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

void add_linear(ParamSet& ps, const std::string& name, int in, int out, Rng& rng) {
    ps.add(name + ".w", xavier(in, out, rng));
    ps.add(name + ".b", Tensor(1, out));
}

void add_layer_norm(ParamSet& ps, const std::string& name, int d) {
    ps.add(name + ".g", Tensor(1, d, 1.0));
    ps.add(name + ".b", Tensor(1, d));
}

void add_attention(ParamSet& ps, const std::string& prefix, int d, Rng& rng) {
    add_linear(ps, prefix + ".q", d, d, rng);
    // No key bias: softmax scores are invariant to a per-row shift, so a key
    // bias is an exactly-flat direction that only collects gradient noise.
    ps.add(prefix + ".k.w", xavier(d, d, rng));
    add_linear(ps, prefix + ".v", d, d, rng);
    add_linear(ps, prefix + ".o", d, d, rng);
}

void add_embedding_and_encoder(ParamSet& ps, const AedConfig& cfg, Rng& rng) {
    add_linear(ps, "embed.ue", cfg.ue_feature_count(), cfg.d_model, rng);
    Tensor prompt_table(cfg.prompt_vocab, cfg.d_model);
    for (double& v : prompt_table.data) v = rng.normal(0.0, 0.5);
    ps.add("embed.prompt.table", std::move(prompt_table));
    add_linear(ps, "embed.mec", cfg.n_servers, cfg.d_model, rng);

    for (int l = 0; l < cfg.enc_layers; ++l) {
        const std::string p = "enc." + std::to_string(l);
        add_attention(ps, p + ".attn", cfg.d_model, rng);
        add_layer_norm(ps, p + ".ln1", cfg.d_model);
        add_linear(ps, p + ".ffn.1", cfg.d_model, cfg.d_ffn, rng);
        add_linear(ps, p + ".ffn.2", cfg.d_ffn, cfg.d_model, rng);
        add_layer_norm(ps, p + ".ln2", cfg.d_model);
    }
}

}  // namespace

const std::vector<std::string> kFrozenPrefixes = {"embed.", "enc."};
const std::vector<std::string> kDecoderPrefixes = {"dec.", "head."};

ParamSet init_actor_params(const AedConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0xAC708));
    ParamSet ps;
    add_embedding_and_encoder(ps, cfg, rng);

    add_linear(ps, "dec.in", 3 * cfg.d_model, cfg.d_model, rng);
    for (int l = 0; l < cfg.dec_layers; ++l) {
        const std::string p = "dec." + std::to_string(l);
        add_attention(ps, p + ".self", cfg.d_model, rng);
        add_layer_norm(ps, p + ".ln1", cfg.d_model);
        add_attention(ps, p + ".cross", cfg.d_model, rng);
        add_layer_norm(ps, p + ".ln2", cfg.d_model);
        add_linear(ps, p + ".ffn.1", cfg.d_model, cfg.d_ffn, rng);
        add_linear(ps, p + ".ffn.2", cfg.d_ffn, cfg.d_model, rng);
        add_layer_norm(ps, p + ".ln3", cfg.d_model);
    }
    add_linear(ps, "head.assoc", cfg.d_model, cfg.n_servers + 1, rng);
    add_linear(ps, "head.rho", cfg.d_model, 1, rng);
    return ps;
}

ParamSet init_critic_params(const AedConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0xC8171C));
    ParamSet ps;
    add_embedding_and_encoder(ps, cfg, rng);
    add_linear(ps, "value", cfg.d_model, 1, rng);
    return ps;
}

AttachedParams::AttachedParams(Tape& tape, const ParamSet& params)
    : AttachedParams(params, params.attach(tape)) {}

AttachedParams::AttachedParams(const ParamSet& params, std::vector<Var> vars)
    : vars_(std::move(vars)) {
    if (vars_.size() != params.names.size()) {
        raise(Errc::ShapeMismatch, "attached vars do not align with the parameter set");
    }
    by_name_.reserve(params.names.size());
    for (std::size_t i = 0; i < params.names.size(); ++i) {
        by_name_.emplace(params.names[i], vars_[i]);
    }
}

Var AttachedParams::operator[](const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) raise(Errc::ConfigError, "unknown parameter: " + name);
    return it->second;
}

namespace {

Var linear(Tape& tape, const AttachedParams& p, const std::string& name, Var x) {
    return tape.add_rowvec(tape.matmul(x, p[name + ".w"]), p[name + ".b"]);
}

Var learnable_norm(Tape& tape, const AttachedParams& p, const std::string& name, Var x,
                   double eps) {
    return tape.add_rowvec(tape.mul_rowvec(tape.layer_norm(x, eps), p[name + ".g"]),
                           p[name + ".b"]);
}

/// Multi-head scaled dot-product attention. x_q supplies queries, x_kv keys
/// and values; additive_mask (rows(x_q) x rows(x_kv)) is applied to every
/// head's scores when non-negative.
Var multi_head_attention(Tape& tape, const AttachedParams& p, const std::string& prefix, Var x_q,
                         Var x_kv, const AedConfig& cfg, Var additive_mask) {
    const Var q = linear(tape, p, prefix + ".q", x_q);
    const Var k = tape.matmul(x_kv, p[prefix + ".k.w"]);
    const Var v = linear(tape, p, prefix + ".v", x_kv);
    const int head_dim = cfg.d_model / cfg.n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

    std::vector<Var> heads;
    heads.reserve(cfg.n_heads);
    for (int h = 0; h < cfg.n_heads; ++h) {
        const int c0 = h * head_dim, c1 = c0 + head_dim;
        const Var qh = tape.slice_cols(q, c0, c1);
        const Var kh = tape.slice_cols(k, c0, c1);
        const Var vh = tape.slice_cols(v, c0, c1);
        Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt);
        if (additive_mask >= 0) scores = tape.add(scores, additive_mask);
        heads.push_back(tape.matmul(tape.softmax(scores), vh));
    }
    return linear(tape, p, prefix + ".o", tape.concat_cols(heads));
}

Var feed_forward(Tape& tape, const AttachedParams& p, const std::string& prefix, Var x) {
    return linear(tape, p, prefix + ".2", tape.relu(linear(tape, p, prefix + ".1", x)));
}

Var causal_mask_leaf(Tape& tape, int n) {
    Tensor mask(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) mask.at(i, j) = kMaskValue;
    return tape.leaf(std::move(mask));
}

}  // namespace

EmbeddingSet embed_inputs(Tape& tape, const AttachedParams& params, const MecInstance& instance,
                          Prompt prompt, const AedConfig& cfg) {
    const int n = instance.n_ues();
    const int m = instance.n_servers();
    if (m != cfg.n_servers) {
        raise(Errc::ShapeMismatch, "instance server count does not match the model config");
    }
    if (prompt.token_id() < 0 || prompt.token_id() >= cfg.prompt_vocab) {
        raise(Errc::UnknownPrompt, "prompt token outside vocabulary");
    }

    const std::vector<FeatureNorm> norms = cfg.effective_norms();
    Tensor features(n, cfg.ue_feature_count());
    for (int i = 0; i < n; ++i) {
        const Ue& ue = instance.ues[i];
        std::vector<double> raw(cfg.ue_feature_count());
        for (int s = 0; s < m; ++s) raw[s] = instance.gains[i][s];
        raw[m + 0] = ue.data_bits;
        raw[m + 1] = ue.cycles;
        raw[m + 2] = ue.f_local;
        raw[m + 3] = ue.position.x / instance.area_m;
        raw[m + 4] = ue.position.y / instance.area_m;
        for (int f = 0; f < cfg.ue_feature_count(); ++f) {
            features.at(i, f) = (raw[f] - norms[f].offset) / norms[f].scale;
        }
    }

    EmbeddingSet set;
    set.ue_tokens = linear(tape, params, "embed.ue", tape.leaf(std::move(features)));
    set.prompt_token = tape.embedding_lookup(params["embed.prompt.table"], prompt.token_id());
    return set;
}

Var mec_token(Tape& tape, const AttachedParams& params, const MecState& state,
              const MecInstance& instance, const AedConfig& cfg) {
    Tensor feat(1, cfg.n_servers);
    for (int s = 0; s < cfg.n_servers; ++s) {
        feat.at(0, s) = state.remaining[s] / instance.servers[s].capacity;
    }
    return linear(tape, params, "embed.mec", tape.leaf(std::move(feat)));
}

Var encode(Tape& tape, const AttachedParams& params, const EmbeddingSet& embeddings,
           const AedConfig& cfg) {
    Var x = tape.concat_rows({embeddings.ue_tokens, embeddings.prompt_token});
    for (int l = 0; l < cfg.enc_layers; ++l) {
        const std::string p = "enc." + std::to_string(l);
        const Var attn = multi_head_attention(tape, params, p + ".attn", x, x, cfg, -1);
        x = learnable_norm(tape, params, p + ".ln1", tape.add(x, attn), cfg.layer_norm_eps);
        const Var ffn = feed_forward(tape, params, p + ".ffn", x);
        x = learnable_norm(tape, params, p + ".ln2", tape.add(x, ffn), cfg.layer_norm_eps);
    }
    return x;
}

Var build_query_input(Tape& tape, const AttachedParams& params, Var ue_token, Var mec_tok,
                      Var prompt_tok, const AedConfig& cfg) {
    (void)cfg;
    return linear(tape, params, "dec.in",
                  tape.concat_cols({ue_token, mec_tok, prompt_tok}));
}

StepHeads decode_step(Tape& tape, const AttachedParams& params, Var context,
                      const std::vector<Var>& query_inputs, const AedConfig& cfg) {
    if (query_inputs.empty()) raise(Errc::ShapeMismatch, "decode_step: no query inputs");
    Var x = tape.concat_rows(query_inputs);
    const Var causal = causal_mask_leaf(tape, static_cast<int>(query_inputs.size()));
    for (int l = 0; l < cfg.dec_layers; ++l) {
        const std::string p = "dec." + std::to_string(l);
        const Var self_attn = multi_head_attention(tape, params, p + ".self", x, x, cfg, causal);
        x = learnable_norm(tape, params, p + ".ln1", tape.add(x, self_attn), cfg.layer_norm_eps);
        const Var cross = multi_head_attention(tape, params, p + ".cross", x, context, cfg, -1);
        x = learnable_norm(tape, params, p + ".ln2", tape.add(x, cross), cfg.layer_norm_eps);
        const Var ffn = feed_forward(tape, params, p + ".ffn", x);
        x = learnable_norm(tape, params, p + ".ln3", tape.add(x, ffn), cfg.layer_norm_eps);
    }
    const Var last = tape.row(x, static_cast<int>(query_inputs.size()) - 1);

    StepHeads heads;
    heads.assoc_logits = linear(tape, params, "head.assoc", last);
    heads.rho_logit = linear(tape, params, "head.rho", last);
    heads.rho_mean = tape.sigmoid(heads.rho_logit);
    return heads;
}

DecodeBuild decode_on_tape(Tape& tape, const AttachedParams& ap, const MecInstance& instance,
                           Prompt prompt, const AedConfig& cfg, DecodeMode mode,
                           std::uint64_t seed, const ForcedTrajectory* forced) {
    cfg.validate();
    instance.validate();
    const int n = instance.n_ues();
    const int m = instance.n_servers();
    if (forced != nullptr && (static_cast<int>(forced->assoc.size()) != n ||
                              static_cast<int>(forced->rho.size()) != n)) {
        raise(Errc::ShapeMismatch, "forced trajectory length != number of UEs");
    }

    DecodeBuild g;
    const EmbeddingSet embeddings = embed_inputs(tape, ap, instance, prompt, cfg);
    const Var context = encode(tape, ap, embeddings, cfg);

    Rng rng(derive_seed(seed, 0xDEC0DE));
    MecState state;
    state.remaining.resize(m);
    for (int s = 0; s < m; ++s) state.remaining[s] = instance.servers[s].capacity;

    DecodeOutput& out = g.output;
    out.probs = Tensor(n, m + 1);
    out.rho_mean.resize(n);
    out.per_ue_entropy.resize(n);
    out.decision.assoc.assign(n, 0);
    out.decision.alloc.assign(n, 0.0);
    g.trajectory.assoc.assign(n, 0);
    g.trajectory.rho.assign(n, 0.0);

    Var log_prob = tape.leaf(Tensor::scalar(0.0));
    Var entropy_sum = tape.leaf(Tensor::scalar(0.0));
    std::vector<Var> query_inputs;
    query_inputs.reserve(n);

    auto add_rho_log_prob = [&](const StepHeads& heads, double rho) {
        // Logit-normal density of the (clamped) draw around the head output;
        // the head logit s enters through -(logit(rho) - s)^2 / (2 sigma^2).
        const double used_logit = logit(rho);
        const Var diff = tape.add_scalar(tape.scale(heads.rho_logit, -1.0), used_logit);
        const double sig = cfg.rho_sample_sigma;
        Var rho_lp = tape.scale(tape.mul(diff, diff), -0.5 / (sig * sig));
        rho_lp = tape.add_scalar(rho_lp, -std::log(sig) - 0.5 * std::log(6.283185307179586) -
                                             std::log(rho * (1.0 - rho)));
        log_prob = tape.add(log_prob, rho_lp);
    };

    for (int i = 0; i < n; ++i) {
        const Var mec_tok = mec_token(tape, ap, state, instance, cfg);
        const Var ue_tok = tape.row(embeddings.ue_tokens, i);
        query_inputs.push_back(
            build_query_input(tape, ap, ue_tok, mec_tok, embeddings.prompt_token, cfg));
        const StepHeads heads = decode_step(tape, ap, context, query_inputs, cfg);

        // Mask servers whose remaining capacity is below the meaningful floor.
        Tensor mask_row(1, m + 1);
        for (int s = 0; s < m; ++s) {
            if (state.remaining[s] < cfg.f_min_frac * instance.servers[s].capacity) {
                mask_row.at(0, s + 1) = kMaskValue;
            }
        }
        const Var mask = tape.leaf(std::move(mask_row));
        const Var masked_logits = tape.add(heads.assoc_logits, mask);
        const Var probs = tape.softmax(masked_logits);
        const Var log_probs = tape.log_softmax(masked_logits);
        g.step_log_prob_rows.push_back(log_probs);
        g.step_rho_means.push_back(heads.rho_mean);

        // Entropy of the masked categorical. Masked entries have p exactly 0
        // and a finite log-prob (-1e30 scale), so p*logp contributes exact 0.
        const Var entropy = tape.scale(tape.sum_all(tape.mul(probs, log_probs)), -1.0);
        entropy_sum = tape.add(entropy_sum, entropy);

        const Tensor& prow = tape.value(probs);
        for (int a = 0; a <= m; ++a) out.probs.at(i, a) = prow.at(0, a);
        out.per_ue_entropy[i] = tape.value(entropy).data[0];

        // Choose the association.
        int action;
        if (forced != nullptr) {
            action = forced->assoc[i];
            if (action < 0 || action > m || prow.at(0, action) <= 0.0) {
                raise(Errc::InvalidDecision, "forced association is masked at this step");
            }
        } else if (mode == DecodeMode::Greedy) {
            action = 0;
            for (int a = 1; a <= m; ++a) {
                if (prow.at(0, a) > prow.at(0, action)) action = a;
            }
        } else {
            const double u = rng.uniform01();
            double cum = 0.0;
            action = -1;
            for (int a = 0; a <= m; ++a) {
                cum += prow.at(0, a);
                if (u < cum) {
                    action = a;
                    break;
                }
            }
            if (action < 0 || prow.at(0, action) == 0.0) {
                // Rounding pushed the draw past the last positive entry.
                action = 0;
                for (int a = 1; a <= m; ++a) {
                    if (prow.at(0, a) > prow.at(0, action)) action = a;
                }
            }
        }

        log_prob = tape.add(log_prob, tape.pick(log_probs, 0, action));
        out.decision.assoc[i] = action;
        g.trajectory.assoc[i] = action;

        const double rho_mean_value =
            std::clamp(tape.value(heads.rho_mean).data[0], kRhoEps, 1.0 - kRhoEps);
        out.rho_mean[i] = rho_mean_value;

        if (action >= 1) {
            const int s = action - 1;
            double rho;
            if (forced != nullptr) {
                rho = forced->rho[i];
                if (!(rho > 0.0) || !(rho <= 1.0)) {
                    raise(Errc::InvalidDecision, "forced rho outside (0, 1]");
                }
                if (forced->with_rho_log_prob && rho < 1.0) add_rho_log_prob(heads, rho);
            } else if (mode == DecodeMode::Greedy) {
                rho = rho_mean_value;
            } else {
                const double s_value = tape.value(heads.rho_logit).data[0];
                const double sampled_logit = s_value + cfg.rho_sample_sigma * rng.normal();
                rho = std::clamp(stable_sigmoid(sampled_logit), 0.01, 0.99);
                add_rho_log_prob(heads, rho);
            }
            const double alloc = rho * state.remaining[s];
            out.decision.alloc[i] = alloc;
            g.trajectory.rho[i] = rho;
            state.remaining[s] -= alloc;
        }
    }

    g.log_prob = log_prob;
    g.entropy_sum = entropy_sum;
    out.log_prob = tape.value(log_prob).data[0];
    return g;
}

DecodeGraph decode_sequence_graph(const MecInstance& instance, Prompt prompt,
                                  const ParamSet& params, const AedConfig& cfg, DecodeMode mode,
                                  std::uint64_t seed, const ForcedTrajectory* forced) {
    DecodeGraph g;
    AttachedParams ap(g.tape, params);
    g.param_vars = ap.vars();
    DecodeBuild build = decode_on_tape(g.tape, ap, instance, prompt, cfg, mode, seed, forced);
    g.log_prob = build.log_prob;
    g.entropy_sum = build.entropy_sum;
    g.step_log_prob_rows = std::move(build.step_log_prob_rows);
    g.step_rho_means = std::move(build.step_rho_means);
    g.output = std::move(build.output);
    g.trajectory = std::move(build.trajectory);
    return g;
}

DecodeOutput decode_sequence(const MecInstance& instance, Prompt prompt, const ParamSet& params,
                             const AedConfig& cfg, DecodeMode mode, std::uint64_t seed) {
    return decode_sequence_graph(instance, prompt, params, cfg, mode, seed).output;
}

bool decision_capacity_audit(const MecInstance& instance, const Decision& decision) {
    const int n = instance.n_ues();
    const int m = instance.n_servers();
    if (static_cast<int>(decision.assoc.size()) != n) return false;
    std::vector<double> load(m, 0.0);
    for (int i = 0; i < n; ++i) {
        if (decision.assoc[i] >= 1) load[decision.assoc[i] - 1] += decision.alloc[i];
    }
    for (int s = 0; s < m; ++s) {
        const double cap = instance.servers[s].capacity;
        if (load[s] > cap * (1.0 + 1e-12)) return false;
    }
    return true;
}

}  // namespace lambo
