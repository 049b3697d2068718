#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "melctl/corpus.hpp"
#include "melctl/losses.hpp"
#include "melctl/net.hpp"

namespace melctl {

struct SvtTrainOptions {
    int epochs = 30;
    double lr = 1e-3;
    double weight_decay = 0.01;
    double heldout_fraction = 0.2;
    bool ce_only = false;           // drops the segment/duration terms
    std::uint64_t seed = 0;
    std::string log_csv;            // per-epoch log, empty disables
};

struct SvtCheckpoint {
    ModelState state;
    std::string corpus_hash;
    double final_ce = 0.0;
    double final_seg = 0.0;
    double final_dur = 0.0;
    double heldout_accuracy = 0.0;
};

// Trains on all but the held-out tail of the corpus; deterministic under the
// option seed. Throws on a non-finite loss, naming the step.
SvtCheckpoint train_svt(const Corpus& corpus, const TransformerConfig& cfg,
                        const LossWeights& weights, const SvtTrainOptions& opts);

// Argmax decoding per frame; ties break toward the lowest class index.
// Also returns the full L x C probability rows.
std::pair<RegulatedPitchSeq, Matrix> transcribe(const ModelState& svt,
                                                const AcousticGrid& grid);

// Count of maximal constant runs in a pitch sequence (fragmentation measure).
std::size_t count_pitch_runs(const RegulatedPitchSeq& seq);

std::string corpus_fingerprint(const Corpus& corpus);

}  // namespace melctl
