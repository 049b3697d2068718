#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "melctl/tokens.hpp"

namespace melctl {

constexpr Token kUnknown = -1;

// Parameters of the synthetic token world. The codec it defines is exactly
// invertible, which is what makes leakage and disentanglement measurable.
struct WorldSpec {
    int v_sem = 64;
    int v_aco = 256;
    int n_codebooks = 2;
    int n_singers = 4;
    int pitch_low = 55;
    int pitch_high = 79;
    std::uint64_t seed = 1;
    double leak_strength = 0.0;  // beta: fraction of semantic ids whose
                                 // codebook-0 code also keys on pitch

    int pitch_classes() const { return pitch_high - pitch_low + 2; }  // + REST
};

struct TokenSample {
    SemanticSeq semantic;
    PitchSeq pitch;
    DurationSeq dur;
    RegulatedPitchSeq regulated;
    AcousticGrid acoustic;
    int singer_id = 0;
    int group_id = -1;

    bool operator==(const TokenSample& o) const = default;
};

struct ContourPair {
    std::vector<double> f0;      // Hz, 0 on REST frames
    std::vector<double> energy;  // non-negative
};

// Deterministic invertible code maps for one WorldSpec. Even codebooks key on
// (semantic, singer), odd codebooks on (regulated pitch, singer). With
// leak_strength > 0 a fraction of semantic ids additionally fold a coarse
// pitch bucket into their codebook-0 code, emulating pitch-into-timbre
// entanglement.
class WorldCodec {
  public:
    explicit WorldCodec(const WorldSpec& spec);

    const WorldSpec& spec() const { return spec_; }

    AcousticGrid encode(const SemanticSeq& semantic, const RegulatedPitchSeq& regulated,
                        int singer) const;

    struct Decoded {
        SemanticSeq semantic;
        RegulatedPitchSeq regulated;
        std::vector<int> singer_per_frame;  // kUnknown where the code is foreign
        int singer = kUnknown;              // majority vote over known frames
    };
    Decoded decode(const AcousticGrid& grid) const;

    bool semantic_entangled(Token s) const { return entangled_[(std::size_t)s]; }

    // Fixed pseudo-random feature vector for one (codebook, code) pair; the
    // frame feature used by the spectral distance metric is their concatenation.
    std::vector<double> code_feature(int codebook, Token code, int dim = 8) const;

  private:
    WorldSpec spec_;
    std::vector<std::vector<Token>> code_of_;  // per codebook: domain index -> code
    std::vector<std::vector<int>> inv_;        // per codebook: code -> domain index or -1
    std::vector<char> entangled_;

    int pitch_class(Token p) const;
    int pitch_bucket(Token p) const;
    std::size_t domain_size(int codebook) const;
    std::size_t domain_index(int codebook, Token sem, Token reg, int singer) const;
};

TokenSample gen_sample(const WorldSpec& spec, std::size_t notes, std::size_t frames,
                       int singer, std::uint64_t seed);

// K samples sharing one semantic sequence and singer but distinct pitch
// sequences; the batch shape sequence-level contrastive learning needs.
std::vector<TokenSample> gen_group(const WorldSpec& spec, std::size_t notes,
                                   std::size_t frames, int singer, std::size_t k,
                                   int group_id, std::uint64_t seed);

ContourPair render_contours(const TokenSample& sample, const WorldSpec& spec);
ContourPair contours_from_fields(const RegulatedPitchSeq& regulated,
                                 const SemanticSeq& semantic, int singer,
                                 const WorldSpec& spec);

std::vector<double> render_waveform(const ContourPair& contours, double target_hnr_db,
                                    int sample_rate, std::uint64_t seed);

void write_corpus(const std::vector<TokenSample>& samples, const WorldSpec& spec,
                  const std::string& path);
struct Corpus {
    WorldSpec spec;
    std::vector<TokenSample> samples;
};
Corpus read_corpus(const std::string& path);

void write_waveform_raw(const std::vector<double>& wave, int sample_rate,
                        const std::string& path);

}  // namespace melctl
