#include "melctl/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace melctl {

using nlohmann::json;

namespace {

std::vector<Token> seeded_permutation(int n, Rng& rng) {
    std::vector<Token> p(n);
    std::iota(p.begin(), p.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        const int j = (int)rng.uniform((std::uint64_t)i + 1);
        std::swap(p[i], p[j]);
    }
    return p;
}

}  // namespace

int WorldCodec::pitch_class(Token p) const {
    if (p == kRest || p == kPad) return spec_.pitch_high - spec_.pitch_low + 1;
    if (p < spec_.pitch_low || p > spec_.pitch_high)
        throw std::invalid_argument("pitch token outside world range: " + std::to_string(p));
    return p - spec_.pitch_low;
}

int WorldCodec::pitch_bucket(Token p) const {
    if (p == kRest || p == kPad) return 0;
    const int mid = (spec_.pitch_low + spec_.pitch_high) / 2;
    return p > mid ? 1 : 0;
}

std::size_t WorldCodec::domain_size(int cb) const {
    if (cb % 2 == 1) return (std::size_t)spec_.n_singers * (std::size_t)spec_.pitch_classes();
    std::size_t n = (std::size_t)spec_.n_singers * (std::size_t)spec_.v_sem;
    if (cb == 0 && spec_.leak_strength > 0.0) n *= 2;
    return n;
}

std::size_t WorldCodec::domain_index(int cb, Token sem, Token reg, int singer) const {
    if (cb % 2 == 1) {
        return (std::size_t)singer * (std::size_t)spec_.pitch_classes() +
               (std::size_t)pitch_class(reg);
    }
    if (sem < 0 || sem >= spec_.v_sem)
        throw std::invalid_argument("semantic token outside vocabulary");
    std::size_t base = (std::size_t)singer * (std::size_t)spec_.v_sem + (std::size_t)sem;
    if (cb == 0 && spec_.leak_strength > 0.0) {
        const int bucket = entangled_[(std::size_t)sem] ? pitch_bucket(reg) : 0;
        base = base * 2 + (std::size_t)bucket;
    }
    return base;
}

WorldCodec::WorldCodec(const WorldSpec& spec) : spec_(spec) {
    if (spec_.n_codebooks < 1) throw std::invalid_argument("need at least one codebook");
    if (spec_.n_singers < 1 || spec_.v_sem < 1 || spec_.v_aco < 1)
        throw std::invalid_argument("invalid world spec");
    if (spec_.pitch_high < spec_.pitch_low || spec_.pitch_low < 0 || spec_.pitch_high > 127)
        throw std::invalid_argument("invalid pitch range");
    if (spec_.leak_strength < 0.0 || spec_.leak_strength > 1.0)
        throw std::invalid_argument("leak strength must be in [0,1]");

    Rng rng(spec_.seed ^ 0x5eedc0dec0ffeeULL);

    entangled_.assign((std::size_t)spec_.v_sem, 0);
    const int n_ent = (int)std::floor(spec_.leak_strength * spec_.v_sem + 1e-12);
    std::vector<Token> ids = seeded_permutation(spec_.v_sem, rng);
    for (int i = 0; i < n_ent; ++i) entangled_[(std::size_t)ids[(std::size_t)i]] = 1;

    code_of_.resize((std::size_t)spec_.n_codebooks);
    inv_.resize((std::size_t)spec_.n_codebooks);
    for (int cb = 0; cb < spec_.n_codebooks; ++cb) {
        const std::size_t dom = domain_size(cb);
        if (dom > (std::size_t)spec_.v_aco)
            throw std::invalid_argument(
                "acoustic vocabulary too small for injectivity: codebook " +
                std::to_string(cb) + " needs " + std::to_string(dom) + " codes, have " +
                std::to_string(spec_.v_aco));
        std::vector<Token> perm = seeded_permutation(spec_.v_aco, rng);
        code_of_[(std::size_t)cb].assign(perm.begin(), perm.begin() + (long)dom);
        inv_[(std::size_t)cb].assign((std::size_t)spec_.v_aco, -1);
        for (std::size_t i = 0; i < dom; ++i)
            inv_[(std::size_t)cb][(std::size_t)perm[i]] = (int)i;
    }
}

AcousticGrid WorldCodec::encode(const SemanticSeq& semantic,
                                const RegulatedPitchSeq& regulated, int singer) const {
    if (semantic.size() != regulated.size())
        throw std::invalid_argument("semantic/regulated length mismatch");
    if (singer < 0 || singer >= spec_.n_singers)
        throw std::invalid_argument("singer id out of range");
    AcousticGrid grid(semantic.size(), (std::size_t)spec_.n_codebooks);
    for (std::size_t t = 0; t < semantic.size(); ++t) {
        for (int cb = 0; cb < spec_.n_codebooks; ++cb) {
            const std::size_t idx = domain_index(cb, semantic[t], regulated[t], singer);
            grid.at(t, (std::size_t)cb) = code_of_[(std::size_t)cb][idx];
        }
    }
    return grid;
}

WorldCodec::Decoded WorldCodec::decode(const AcousticGrid& grid) const {
    Decoded out;
    out.semantic.assign(grid.frames, kUnknown);
    out.regulated.assign(grid.frames, kUnknown);
    out.singer_per_frame.assign(grid.frames, kUnknown);
    std::map<int, std::size_t> singer_votes;
    for (std::size_t t = 0; t < grid.frames; ++t) {
        int frame_singer = kUnknown;
        if (grid.codebooks >= 1) {
            const Token c0 = grid.at(t, 0);
            if (c0 >= 0 && c0 < spec_.v_aco && inv_[0][(std::size_t)c0] >= 0) {
                std::size_t idx = (std::size_t)inv_[0][(std::size_t)c0];
                if (spec_.leak_strength > 0.0) idx /= 2;
                out.semantic[t] = (Token)(idx % (std::size_t)spec_.v_sem);
                frame_singer = (int)(idx / (std::size_t)spec_.v_sem);
            }
        }
        if (grid.codebooks >= 2) {
            const Token c1 = grid.at(t, 1);
            if (c1 >= 0 && c1 < spec_.v_aco && inv_[1][(std::size_t)c1] >= 0) {
                const std::size_t idx = (std::size_t)inv_[1][(std::size_t)c1];
                const int pc = (int)(idx % (std::size_t)spec_.pitch_classes());
                out.regulated[t] =
                    pc == spec_.pitch_high - spec_.pitch_low + 1 ? kRest : spec_.pitch_low + pc;
                frame_singer = (int)(idx / (std::size_t)spec_.pitch_classes());
            }
        }
        out.singer_per_frame[t] = frame_singer;
        if (frame_singer != kUnknown) singer_votes[frame_singer]++;
    }
    std::size_t best = 0;
    for (const auto& [s, n] : singer_votes) {
        if (n > best) {
            best = n;
            out.singer = s;
        }
    }
    return out;
}

std::vector<double> WorldCodec::code_feature(int codebook, Token code, int dim) const {
    Rng rng(spec_.seed ^ (0x00fea12eULL + (std::uint64_t)codebook * 0x9e3779b9ULL +
                          (std::uint64_t)(std::uint32_t)code * 0x85ebca6bULL));
    std::vector<double> v((std::size_t)dim);
    double norm = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm > 0) {
        for (double& x : v) x /= norm;
    }
    return v;
}

TokenSample gen_sample(const WorldSpec& spec, std::size_t notes, std::size_t frames,
                       int singer, std::uint64_t seed) {
    if (notes < 1) throw std::invalid_argument("need at least one note");
    if (frames < notes) throw std::invalid_argument("need frames >= notes");
    if (singer < 0 || singer >= spec.n_singers)
        throw std::invalid_argument("singer id out of range");

    Rng rng(seed ^ (spec.seed * 0xa0761d6478bd642fULL));

    TokenSample s;
    s.singer_id = singer;
    const int range = spec.pitch_high - spec.pitch_low + 1;
    for (std::size_t i = 0; i < notes; ++i) {
        if (rng.uniform(8) == 0)
            s.pitch.push_back(kRest);
        else
            s.pitch.push_back(spec.pitch_low + (Token)rng.uniform((std::uint64_t)range));
        s.dur.push_back(1 + (int)rng.uniform(4));
    }
    s.regulated = regulate_pitch(s.pitch, s.dur, frames);

    // phoneme-like semantic runs of 2..4 frames
    while (s.semantic.size() < frames) {
        const Token id = (Token)rng.uniform((std::uint64_t)spec.v_sem);
        std::size_t run = 2 + rng.uniform(3);
        while (run-- && s.semantic.size() < frames) s.semantic.push_back(id);
    }

    WorldCodec codec(spec);
    s.acoustic = codec.encode(s.semantic, s.regulated, singer);
    return s;
}

std::vector<TokenSample> gen_group(const WorldSpec& spec, std::size_t notes,
                                   std::size_t frames, int singer, std::size_t k,
                                   int group_id, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("a contrastive group needs k >= 2");
    std::vector<TokenSample> out;
    TokenSample first = gen_sample(spec, notes, frames, singer, seed);
    first.group_id = group_id;
    out.push_back(first);
    WorldCodec codec(spec);
    for (std::size_t i = 1; i < k; ++i) {
        Rng rng(seed ^ (0x517cc1b727220a95ULL * (i + 1)));
        TokenSample s = first;
        const int range = spec.pitch_high - spec.pitch_low + 1;
        for (std::size_t j = 0; j < s.pitch.size(); ++j) {
            if (rng.uniform(8) == 0)
                s.pitch[j] = kRest;
            else
                s.pitch[j] = spec.pitch_low + (Token)rng.uniform((std::uint64_t)range);
        }
        s.regulated = regulate_pitch(s.pitch, s.dur, frames);
        s.acoustic = codec.encode(s.semantic, s.regulated, s.singer_id);
        out.push_back(s);
    }
    return out;
}

ContourPair contours_from_fields(const RegulatedPitchSeq& regulated,
                                 const SemanticSeq& semantic, int singer,
                                 const WorldSpec& spec) {
    (void)spec;
    ContourPair c;
    c.f0.resize(regulated.size());
    c.energy.resize(regulated.size());
    for (std::size_t t = 0; t < regulated.size(); ++t) {
        const Token p = regulated[t];
        if (p == kRest || p == kPad || p == kUnknown) {
            c.f0[t] = 0.0;
            c.energy[t] = 0.0;
        } else {
            c.f0[t] = 440.0 * std::pow(2.0, (p - 69) / 12.0);
            const Token sem = t < semantic.size() && semantic[t] >= 0 ? semantic[t] : 0;
            c.energy[t] = 0.4 + 0.1 * singer + 0.02 * (sem % 5);
        }
    }
    return c;
}

ContourPair render_contours(const TokenSample& sample, const WorldSpec& spec) {
    return contours_from_fields(sample.regulated, sample.semantic, sample.singer_id, spec);
}

std::vector<double> render_waveform(const ContourPair& contours, double target_hnr_db,
                                    int sample_rate, std::uint64_t seed) {
    if (!std::isfinite(target_hnr_db)) throw std::invalid_argument("non-finite HNR target");
    if (sample_rate < 8000) throw std::invalid_argument("sample rate must be >= 8000");
    if (contours.f0.size() != contours.energy.size())
        throw std::invalid_argument("contour length mismatch");

    const std::size_t hop = (std::size_t)(sample_rate / 100);  // 10 ms frames
    const std::size_t n = contours.f0.size() * hop;

    std::vector<double> harm(n, 0.0);
    double phase = 0.0;
    double harm_power = 0.0;
    for (std::size_t t = 0; t < contours.f0.size(); ++t) {
        const double f0 = contours.f0[t];
        const double e = contours.energy[t];
        for (std::size_t i = 0; i < hop; ++i) {
            double x = 0.0;
            if (f0 > 0.0 && e > 0.0) {
                phase += f0 / sample_rate;
                phase -= std::floor(phase);
                x = e * (2.0 * phase - 1.0);  // sawtooth source
            }
            harm[t * hop + i] = x;
            harm_power += x * x;
        }
    }

    if (harm_power == 0.0) return harm;

    Rng rng(seed);
    std::vector<double> noise(n);
    double noise_power = 0.0;
    for (double& x : noise) {
        x = rng.normal();
        noise_power += x * x;
    }
    // scale noise so the harmonic/noise power ratio is exact by construction
    const double target_noise_power = harm_power / std::pow(10.0, target_hnr_db / 10.0);
    const double scale = noise_power > 0 ? std::sqrt(target_noise_power / noise_power) : 0.0;
    for (std::size_t i = 0; i < n; ++i) harm[i] += scale * noise[i];
    return harm;
}

namespace {

json spec_to_json(const WorldSpec& s) {
    return json{{"v_sem", s.v_sem},
                {"v_aco", s.v_aco},
                {"n_codebooks", s.n_codebooks},
                {"n_singers", s.n_singers},
                {"pitch_low", s.pitch_low},
                {"pitch_high", s.pitch_high},
                {"seed", s.seed},
                {"leak_strength", s.leak_strength}};
}

WorldSpec spec_from_json(const json& j) {
    WorldSpec s;
    s.v_sem = j.at("v_sem").get<int>();
    s.v_aco = j.at("v_aco").get<int>();
    s.n_codebooks = j.at("n_codebooks").get<int>();
    s.n_singers = j.at("n_singers").get<int>();
    s.pitch_low = j.at("pitch_low").get<int>();
    s.pitch_high = j.at("pitch_high").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.leak_strength = j.at("leak_strength").get<double>();
    return s;
}

}  // namespace

void write_corpus(const std::vector<TokenSample>& samples, const WorldSpec& spec,
                  const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    json header{{"format", "melctl-corpus"}, {"version", 1}, {"spec", spec_to_json(spec)}};
    out << header.dump() << "\n";
    for (const TokenSample& s : samples) {
        json rec{{"semantic", s.semantic}, {"pitch", s.pitch},
                 {"dur", s.dur},           {"regulated", s.regulated},
                 {"frames", s.acoustic.frames}, {"codebooks", s.acoustic.codebooks},
                 {"acoustic", s.acoustic.codes}, {"singer_id", s.singer_id},
                 {"group_id", s.group_id}};
        out << rec.dump() << "\n";
    }
}

Corpus read_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus: " + path);
    std::string line;
    std::size_t lineno = 0;
    Corpus corpus;
    if (!std::getline(in, line)) throw std::runtime_error("empty corpus file: " + path);
    ++lineno;
    try {
        json header = json::parse(line);
        if (header.at("format").get<std::string>() != "melctl-corpus")
            throw std::runtime_error("not a melctl corpus");
        const int version = header.at("version").get<int>();
        if (version != 1)
            throw std::runtime_error("unsupported corpus version " + std::to_string(version));
        corpus.spec = spec_from_json(header.at("spec"));
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ":1: malformed header: " + e.what());
    }
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            json rec = json::parse(line);
            TokenSample s;
            s.semantic = rec.at("semantic").get<SemanticSeq>();
            s.pitch = rec.at("pitch").get<PitchSeq>();
            s.dur = rec.at("dur").get<DurationSeq>();
            s.regulated = rec.at("regulated").get<RegulatedPitchSeq>();
            s.acoustic.frames = rec.at("frames").get<std::size_t>();
            s.acoustic.codebooks = rec.at("codebooks").get<std::size_t>();
            s.acoustic.codes = rec.at("acoustic").get<std::vector<Token>>();
            s.singer_id = rec.at("singer_id").get<int>();
            s.group_id = rec.at("group_id").get<int>();
            if (s.acoustic.codes.size() != s.acoustic.frames * s.acoustic.codebooks)
                throw std::runtime_error("acoustic grid size mismatch");
            corpus.samples.push_back(std::move(s));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": malformed record: " + e.what());
        }
    }
    return corpus;
}

void write_waveform_raw(const std::vector<double>& wave, int sample_rate,
                        const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (double d : wave) {
        float f = (float)d;
        static_assert(sizeof(float) == 4);
        char buf[4];
        std::memcpy(buf, &f, 4);
        out.write(buf, 4);
    }
    std::ofstream manifest(path + ".json");
    manifest << json{{"sample_rate", sample_rate}, {"length", wave.size()}}.dump() << "\n";
}

}  // namespace melctl
