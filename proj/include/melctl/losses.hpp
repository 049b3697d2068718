#pragma once

#include <cstddef>
#include <vector>

#include "melctl/autodiff.hpp"
#include "melctl/tensor.hpp"
#include "melctl/tokens.hpp"

namespace melctl {

struct LossWeights {
    double lambda_scl = 0.5;
    double lambda_fcl = 1.0;
    double lambda_cl = 0.1;
    double lambda_seg = 0.5;
    double lambda_dur = 0.3;
    double lambda_svt = 0.2;
    double lambda_mask = 1.0;
    double tau = 0.07;
    double alpha = 0.5;
    double delta = 0.5;
    double perturb_fraction = 0.5;
    int offset_bound = 6;
    bool normalize_scl = true;

    void validate() const;
};

// L x L supervision target over {-1, 0, alpha, 1}; entries < 0 are invalid
// cells excluded from the frame-level regression.
struct SoftLabelMatrix {
    Matrix y;
};

// Symmetric InfoNCE over K pooled embeddings per side; rows are L2-normalized
// internally when normalize is set. Gradients accumulate into dga/dgb when
// non-null.
double scl_loss(const Matrix& ga, const Matrix& gb, double tau, bool normalize,
                Matrix* dga, Matrix* dgb);

SoftLabelMatrix build_soft_labels(const RegulatedPitchSeq& reg_a,
                                  const RegulatedPitchSeq& reg_b,
                                  const SemanticSeq& semantic, double alpha);

// Masked regression of the cosine-similarity matrix of (fa, fb) onto Y.
double fcl_loss(const Matrix& fa, const Matrix& fb, const SoftLabelMatrix& labels,
                Matrix* dfa, Matrix* dfb);

double combined_cl(double scl, double fcl, const LossWeights& w);

// Mean cross-entropy over non-PAD frames.
double ce_loss(const Matrix& logits, const RegulatedPitchSeq& targets, Matrix* dlogits);

// Smoothness within pitch runs, hinge margin at ground-truth boundaries.
// probs rows must sum to 1 within 1e-6.
double seg_loss(const Matrix& probs, const RegulatedPitchSeq& targets, double delta,
                Matrix* dprobs);

// Squared deviation between accumulated per-note probability mass and the
// floor-allocated frame counts.
double dur_loss(const Matrix& probs, const PitchSeq& pitch, const DurationSeq& dur,
                std::size_t frames, Matrix* dprobs);

double svt_total(double ce, double seg, double dur, const LossWeights& w);

// Cross-entropy over masked frames only, one codebook; the caller averages
// across codebooks.
double masked_ce_loss(const Matrix& logits, const std::vector<Token>& targets,
                      const std::vector<char>& frame_mask, Matrix* dlogits);

// Tape wrappers: each appends a 1x1 loss node whose backward routes the
// hand-derived gradients into the input nodes.
int tape_scl(Tape& t, int ga, int gb, double tau, bool normalize);
int tape_fcl(Tape& t, int fa, int fb, const SoftLabelMatrix& labels);
int tape_ce(Tape& t, int logits, const RegulatedPitchSeq& targets);
int tape_seg(Tape& t, int probs, const RegulatedPitchSeq& targets, double delta);
int tape_dur(Tape& t, int probs, const PitchSeq& pitch, const DurationSeq& dur,
             std::size_t frames);
int tape_masked_ce(Tape& t, int logits, const std::vector<Token>& targets,
                   const std::vector<char>& frame_mask);

}  // namespace melctl
