#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "melctl/corpus.hpp"
#include "melctl/losses.hpp"
#include "melctl/net.hpp"
#include "melctl/optim.hpp"

namespace melctl {

struct BatchPlan {
    int k_total = 32;
    int k_seq = 8;  // sequence-CL samples; the rest do frame-CL
    double mask_ratio_min = 0.4;
    double mask_ratio_max = 0.9;

    void validate() const;
};

struct DecodeConfig {
    int steps = 8;
    double temperature = 0.0;  // gumbel scale on unmasking confidences
    std::uint64_t seed = 0;
};

enum class FinetuneStrategy { lora, pitch_only, prefix, full };

FinetuneStrategy strategy_from_string(const std::string& s);
std::string to_string(FinetuneStrategy s);

// Adaptation state on top of a frozen base model.
struct S2aTuning {
    FinetuneStrategy strategy = FinetuneStrategy::lora;
    LoraAdapters lora;
    Matrix prefix;  // prefix-tuning virtual token embeddings, rows x dim

    std::size_t trainable_params(const ModelState& base) const;
};

S2aTuning make_tuning(const ModelState& base, FinetuneStrategy strategy, int lora_rank,
                      double lora_alpha, std::uint64_t seed, int prefix_tokens = 20);

// Contiguous prompt segment from a source utterance. Length is drawn from
// [min(target_len/4, 5), target_len/2); deterministic under seed.
AcousticGrid prompt_gen(const AcousticGrid& source, std::size_t target_len,
                        std::uint64_t seed);

struct S2aStepOptions {
    bool no_scl = false;
    bool no_fcl = false;
    bool no_svt = false;
};

struct TrainBatch {
    std::vector<std::size_t> seq_idx;    // one group: shared semantic, same singer
    std::vector<std::size_t> frame_idx;  // remaining samples
};

struct StepResult {
    double mask = 0.0;
    double scl = 0.0;
    double fcl = 0.0;
    double svt = 0.0;
    double total = 0.0;
};

// One Algorithm-1 update: split batch, build the paired inputs (fresh prompts
// for the sequence-CL half, pitch perturbation for the frame-CL half), two
// forward passes, combined loss, one optimizer step on the trainable subset.
StepResult train_step(const Corpus& corpus, const TrainBatch& batch,
                      const ModelState& base, S2aTuning& tuning, const ModelState& svt,
                      const LossWeights& weights, const BatchPlan& plan,
                      const S2aStepOptions& opts, AdamW& opt, std::uint64_t seed);

// Assemble a TrainBatch deterministically: one contrastive group plus random
// frame-CL samples. Throws if the corpus has no group of size >= k_seq.
TrainBatch plan_batch(const Corpus& corpus, const BatchPlan& plan, std::uint64_t seed);

// Names updated by the optimizer for a given strategy.
std::vector<std::string> trainable_names(const ModelState& base, const S2aTuning& tuning);

// MaskGCT-style iterative parallel decoding with score-given output length.
AcousticGrid decode(const SemanticSeq& semantic, const RegulatedPitchSeq& regulated,
                    const AcousticGrid& prompt, const ModelState& base,
                    const S2aTuning* tuning, const DecodeConfig& cfg);

}  // namespace melctl
