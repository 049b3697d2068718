#include "melctl/tokens.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace melctl {

void validate_pitch_seq(const PitchSeq& pitch) {
    if (pitch.empty()) throw std::invalid_argument("pitch sequence is empty");
    for (Token t : pitch) {
        if (t < 0 || t > kRest)
            throw std::invalid_argument("pitch token out of range: " + std::to_string(t));
    }
}

void validate_duration_seq(const PitchSeq& pitch, const DurationSeq& dur) {
    if (pitch.size() != dur.size())
        throw std::invalid_argument("pitch/duration length mismatch: " +
                                    std::to_string(pitch.size()) + " vs " +
                                    std::to_string(dur.size()));
    for (int d : dur) {
        if (d < 1) throw std::invalid_argument("duration count must be >= 1");
    }
}

FrameSpans regulate_spans(const DurationSeq& dur, std::size_t frames) {
    if (dur.empty()) throw std::invalid_argument("empty duration sequence");
    if (frames < 1) throw std::invalid_argument("frame count must be >= 1");
    long long total = 0;
    for (int d : dur) total += d;

    // Boundary b_i = round_half_away(c_i * L / D), in exact integer arithmetic.
    FrameSpans spans;
    spans.start.resize(dur.size());
    spans.end.resize(dur.size());
    long long cum = 0;
    long long prev = 0;
    for (std::size_t i = 0; i < dur.size(); ++i) {
        cum += dur[i];
        const long long b = (2 * cum * (long long)frames + total) / (2 * total);
        spans.start[i] = (std::size_t)prev;
        spans.end[i] = (std::size_t)b;
        prev = b;
    }
    spans.end.back() = frames;  // c_S == D, boundary is exactly L
    return spans;
}

RegulatedPitchSeq regulate_pitch(const PitchSeq& pitch, const DurationSeq& dur,
                                 std::size_t frames) {
    validate_pitch_seq(pitch);
    validate_duration_seq(pitch, dur);
    const FrameSpans spans = regulate_spans(dur, frames);
    RegulatedPitchSeq out;
    out.reserve(frames);
    for (std::size_t i = 0; i < pitch.size(); ++i) {
        for (std::size_t k = spans.start[i]; k < spans.end[i]; ++k) out.push_back(pitch[i]);
    }
    return out;
}

PitchSeq perturb_pitch(const PitchSeq& pitch, double fraction, int offset_bound,
                       std::uint64_t seed) {
    validate_pitch_seq(pitch);
    if (fraction < 0.0 || fraction > 1.0)
        throw std::invalid_argument("perturbation fraction must be in [0,1]");
    if (offset_bound < 0) throw std::invalid_argument("offset bound must be >= 0");

    PitchSeq out = pitch;
    if (fraction == 0.0 || offset_bound == 0) return out;

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pitch.size(); ++i) {
        if (pitch[i] != kRest) candidates.push_back(i);
    }
    if (candidates.empty()) return out;

    const std::size_t n_sel =
        (std::size_t)std::ceil(fraction * (double)candidates.size());

    Rng rng(seed);
    // partial Fisher-Yates picks exactly n_sel positions
    for (std::size_t k = 0; k < n_sel; ++k) {
        const std::size_t j = k + (std::size_t)rng.uniform(candidates.size() - k);
        std::swap(candidates[k], candidates[j]);
        const std::size_t pos = candidates[k];
        // rejection-sample an offset whose clamped result actually changes the token
        Token v = pitch[pos];
        for (;;) {
            int off = 1 + (int)rng.uniform((std::uint64_t)offset_bound);
            if (rng.uniform(2) == 0) off = -off;
            Token cand = std::clamp(pitch[pos] + off, 0, 127);
            if (cand != pitch[pos]) {
                v = cand;
                break;
            }
        }
        out[pos] = v;
    }
    return out;
}

std::vector<Token> pad_to(const std::vector<Token>& seq, std::size_t len, Token pad_id) {
    if (seq.size() > len)
        throw std::invalid_argument("pad_to: sequence longer than target length");
    std::vector<Token> out = seq;
    out.resize(len, pad_id);
    return out;
}

}  // namespace melctl
