#pragma once

#include <cstdint>
#include <vector>

#include "melctl/tensor.hpp"

namespace melctl {

using Token = int;

// Pitch vocabulary: MIDI 0..127, plus reserved frame markers.
constexpr Token kRest = 128;
constexpr Token kPad = 129;
constexpr int kPitchVocab = 130;

using PitchSeq = std::vector<Token>;       // entries in [0,127] or kRest
using DurationSeq = std::vector<int>;      // positive score-time counts
using RegulatedPitchSeq = std::vector<Token>;  // frame-rate, entries in [0,129]
using SemanticSeq = std::vector<Token>;

// L x N grid of acoustic codes, row-major over frames.
struct AcousticGrid {
    std::size_t frames = 0;
    std::size_t codebooks = 0;
    std::vector<Token> codes;

    AcousticGrid() = default;
    AcousticGrid(std::size_t l, std::size_t n, Token fill = 0)
        : frames(l), codebooks(n), codes(l * n, fill) {}

    Token& at(std::size_t t, std::size_t cb) { return codes[t * codebooks + cb]; }
    Token at(std::size_t t, std::size_t cb) const { return codes[t * codebooks + cb]; }

    bool operator==(const AcousticGrid& o) const = default;
};

void validate_pitch_seq(const PitchSeq& pitch);
void validate_duration_seq(const PitchSeq& pitch, const DurationSeq& dur);

// Frame-span boundaries for each note: token i covers [start[i], end[i]).
// Spans telescope so they always cover exactly [0, L).
struct FrameSpans {
    std::vector<std::size_t> start;
    std::vector<std::size_t> end;
};

FrameSpans regulate_spans(const DurationSeq& dur, std::size_t frames);

// Expand score pitch tokens to frame rate by duration-proportional rounding.
RegulatedPitchSeq regulate_pitch(const PitchSeq& pitch, const DurationSeq& dur,
                                 std::size_t frames);

// Offset ceil(fraction * #non-rest) pitch tokens by a nonzero integer in
// [-offset_bound, offset_bound], clamped into [0,127]. REST tokens are never
// touched. Deterministic under seed.
PitchSeq perturb_pitch(const PitchSeq& pitch, double fraction, int offset_bound,
                       std::uint64_t seed);

std::vector<Token> pad_to(const std::vector<Token>& seq, std::size_t len, Token pad_id);

}  // namespace melctl
