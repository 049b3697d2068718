#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "melctl/corpus.hpp"
#include "melctl/tokens.hpp"

namespace melctl {

// Fraction of matching frames, skipping frames where the reference is PAD.
double pitch_frame_accuracy(const RegulatedPitchSeq& pred, const RegulatedPitchSeq& ref);

// RMSE in Hz over frames where both contours are voiced (nonzero).
double f0_rmse(const std::vector<double>& pred, const std::vector<double>& ref);

// Mean Euclidean distance between per-frame oracle code features.
double spectral_distance(const AcousticGrid& pred, const AcousticGrid& ref,
                         const WorldSpec& spec);

struct ContourStats {
    double mean = 0.0;
    double std_dev = 0.0;
    double skew = 0.0;  // 0 by convention on constant input
    double kurt = 0.0;  // excess kurtosis, same convention
};

ContourStats contour_stats(const std::vector<double>& x);

// Mean absolute first difference over the mean level, voiced pairs only, in %.
double jitter(const std::vector<double>& f0);
double shimmer(const std::vector<double>& energy);

// Autocorrelation HNR near the hinted period, capped at 40 dB.
double hnr_estimate(const std::vector<double>& waveform, double f0_hint,
                    int sample_rate);

struct LeakageRow {
    double pitch_mean = 0.0, pitch_std = 0.0, pitch_skew = 0.0, pitch_kurt = 0.0;
    double energy_mean = 0.0, energy_std = 0.0, energy_skew = 0.0, energy_kurt = 0.0;
    double jitter = 0.0, shimmer = 0.0, hnr = 0.0;
};

struct LeakageReport {
    LeakageRow paired;
    LeakageRow unpaired;
    std::size_t samples = 0;
    // two-sided permutation p-value for the paired-vs-unpaired pitch-mean gap
    double p_pitch_mean = 1.0;
    double gap_pitch_mean = 0.0;  // unpaired minus paired

    std::string table_text() const;
    std::string csv() const;
};

// Synthesis hook: produce acoustic tokens for a target score given a prompt.
using SynthFn = std::function<AcousticGrid(const TokenSample& target,
                                           const AcousticGrid& prompt,
                                           std::uint64_t seed)>;

// Decoded contours for a generated grid: unknown codes fall back to REST.
ContourPair contours_of_grid(const AcousticGrid& grid, const WorldCodec& codec,
                             int singer_fallback);

// Table-I style comparison: synthesize each sample with a prompt from another
// utterance of the same singer, then compare the output's prosody statistics
// against that prompt (paired) and against a second, unused prompt from the
// same singer (unpaired). Throws when a singer lacks three utterances.
LeakageReport leakage_report(const Corpus& corpus, const SynthFn& synthesize,
                             std::uint64_t seed, std::size_t permutations = 10000);

}  // namespace melctl
