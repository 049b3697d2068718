#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "melctl/autodiff.hpp"
#include "melctl/tensor.hpp"
#include "melctl/tokens.hpp"

namespace melctl {

struct TransformerConfig {
    int layers = 4;
    int dim = 64;
    int heads = 4;
    int ffn_dim = 256;
    int max_len = 512;
    int v_sem = 64;
    int v_aco = 256;
    int n_codebooks = 2;
    int pitch_vocab = kPitchVocab;
    double dropout = 0.0;

    void validate() const;
    int head_dim() const { return dim / heads; }
    Token mask_id() const { return v_aco; }       // reserved per acoustic codebook
    Token sem_pad_id() const { return v_sem; }    // PAD row of the semantic table
};

TransformerConfig s2a_toy_config();
TransformerConfig svt_toy_config();
TransformerConfig svt_paper_config();

// Named parameter tensors plus bookkeeping. std::map keeps registry order
// deterministic for init, checkpointing, and hashing.
struct ModelState {
    TransformerConfig config;
    std::map<std::string, Matrix> params;
    std::uint64_t seed = 0;
    long long step = 0;
};

ModelState init_s2a_state(const TransformerConfig& cfg, std::uint64_t seed);
ModelState init_svt_state(const TransformerConfig& cfg, std::uint64_t seed);

// Low-rank adapters keyed by target parameter name. `up` is zero-initialized
// so the adapted model starts functionally identical to the base.
struct LoraAdapters {
    int rank = 16;
    double alpha = 32.0;
    double dropout = 0.1;
    std::map<std::string, std::pair<Matrix, Matrix>> mats;  // name -> (down, up)

    std::size_t trainable_params() const;
};

std::vector<std::string> lora_attention_targets(const TransformerConfig& cfg);
LoraAdapters make_lora(const ModelState& state, const std::vector<std::string>& targets,
                       int rank, double alpha, std::uint64_t seed);
Matrix lora_apply(const Matrix& base, const Matrix& down, const Matrix& up, double alpha,
                  int rank);
ModelState lora_merge(const ModelState& state, const LoraAdapters& adapters);

// Leaf ids for every parameter (and adapter) on a tape, plus the effective
// LoRA-adapted matrices where an adapter targets a parameter.
struct ParamBinding {
    Tape* tape = nullptr;
    std::map<std::string, int> ids;      // base parameters and lora.* leaves
    std::map<std::string, int> eff;      // adapted matrices

    int operator()(const std::string& name) const;
};

ParamBinding bind_params(Tape& tape, const ModelState& state, const LoraAdapters* lora);

// Frame masking: ceil(ratio * L) frames replaced by the MASK id across all
// codebooks.
struct MaskResult {
    AcousticGrid grid;
    std::vector<char> mask;
};
MaskResult mask_tokens(const AcousticGrid& grid, double ratio, Token mask_id,
                       std::uint64_t seed);

// e_c = e_p + e_s per frame; PAD frames hit the PAD row of each table.
int embed_condition(Tape& tape, const ParamBinding& pb, const TransformerConfig& cfg,
                    const SemanticSeq& semantic, const RegulatedPitchSeq& regulated);

struct S2aForward {
    int frames = -1;                 // tape id: L x d final states, target rows only
    std::vector<int> logits;         // per codebook: L x v_aco
};

// Prompt frames are prepended as unmasked context with a segment flag and
// excluded from the outputs. `prefix`, when >= 0, is a tape id of virtual
// token embeddings prepended before the prompt (prefix tuning).
S2aForward forward_s2a(Tape& tape, const ParamBinding& pb, const TransformerConfig& cfg,
                       const AcousticGrid& masked, int cond,
                       const AcousticGrid& prompt, int prefix = -1);

// Encoder-only pitch transcription head: per-frame logits over the pitch
// vocabulary. soft_codes, when given, carries L x (v_aco+1) probability rows
// per codebook used instead of hard token lookups (the gradient path for SVT
// guidance of the S2A model).
int forward_svt(Tape& tape, const ParamBinding& pb, const TransformerConfig& cfg,
                const AcousticGrid& grid,
                const std::vector<int>* soft_codes = nullptr);

// Checkpoints: JSON manifest + one raw little-endian float32 blob per
// parameter, named by registry key, in a directory.
void save_checkpoint(const ModelState& state, const std::string& dir);
ModelState load_checkpoint(const std::string& dir);

Matrix sinusoidal_positions(std::size_t len, std::size_t dim);

}  // namespace melctl
