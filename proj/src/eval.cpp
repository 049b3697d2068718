#include "melctl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "melctl/s2a.hpp"

namespace melctl {

double pitch_frame_accuracy(const RegulatedPitchSeq& pred, const RegulatedPitchSeq& ref) {
    if (pred.size() != ref.size())
        throw std::invalid_argument("pitch_frame_accuracy: length mismatch");
    std::size_t hit = 0, total = 0;
    for (std::size_t t = 0; t < ref.size(); ++t) {
        if (ref[t] == kPad) continue;
        ++total;
        if (pred[t] == ref[t]) ++hit;
    }
    if (total == 0) throw std::invalid_argument("pitch_frame_accuracy: all PAD");
    return (double)hit / (double)total;
}

double f0_rmse(const std::vector<double>& pred, const std::vector<double>& ref) {
    if (pred.size() != ref.size()) throw std::invalid_argument("f0_rmse: length mismatch");
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < pred.size(); ++t) {
        if (pred[t] == 0.0 || ref[t] == 0.0) continue;
        const double d = pred[t] - ref[t];
        acc += d * d;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("f0_rmse: no jointly voiced frames");
    return std::sqrt(acc / (double)n);
}

double spectral_distance(const AcousticGrid& pred, const AcousticGrid& ref,
                         const WorldSpec& spec) {
    if (pred.frames != ref.frames || pred.codebooks != ref.codebooks)
        throw std::invalid_argument("spectral_distance: shape mismatch");
    if (pred.frames == 0) throw std::invalid_argument("spectral_distance: empty grids");
    const WorldCodec codec(spec);
    double acc = 0.0;
    for (std::size_t t = 0; t < pred.frames; ++t) {
        double d2 = 0.0;
        for (std::size_t cb = 0; cb < pred.codebooks; ++cb) {
            const auto fa = codec.code_feature((int)cb, pred.at(t, cb));
            const auto fb = codec.code_feature((int)cb, ref.at(t, cb));
            for (std::size_t k = 0; k < fa.size(); ++k) {
                const double d = fa[k] - fb[k];
                d2 += d * d;
            }
        }
        acc += std::sqrt(d2);
    }
    return acc / (double)pred.frames;
}

ContourStats contour_stats(const std::vector<double>& x) {
    if (x.size() < 2) throw std::invalid_argument("contour_stats: need length >= 2");
    const double n = (double)x.size();
    double mean = 0.0;
    for (double v : x) {
        if (!std::isfinite(v)) throw std::invalid_argument("contour_stats: non-finite input");
        mean += v;
    }
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    ContourStats s;
    s.mean = mean;
    s.std_dev = std::sqrt(m2);
    // constant sequences: skew and kurtosis are 0 by convention, not NaN
    if (m2 > 1e-18 * (1.0 + mean * mean)) {
        s.skew = m3 / std::pow(m2, 1.5);
        s.kurt = m4 / (m2 * m2) - 3.0;
    }
    return s;
}

namespace {

double relative_variation(const std::vector<double>& x, const char* what) {
    double diff = 0.0, level = 0.0;
    std::size_t pairs = 0;
    for (std::size_t t = 1; t < x.size(); ++t) {
        if (x[t] == 0.0 || x[t - 1] == 0.0) continue;
        diff += std::abs(x[t] - x[t - 1]);
        level += 0.5 * (x[t] + x[t - 1]);
        ++pairs;
    }
    if (pairs == 0)
        throw std::invalid_argument(std::string(what) + ": no voiced consecutive frames");
    const double mean_level = level / (double)pairs;
    if (mean_level <= 0.0)
        throw std::invalid_argument(std::string(what) + ": non-positive mean level");
    return (diff / (double)pairs) / mean_level * 100.0;
}

}  // namespace

double jitter(const std::vector<double>& f0) { return relative_variation(f0, "jitter"); }

double shimmer(const std::vector<double>& energy) {
    return relative_variation(energy, "shimmer");
}

double hnr_estimate(const std::vector<double>& waveform, double f0_hint,
                    int sample_rate) {
    if (f0_hint <= 0.0 || sample_rate <= 0)
        throw std::invalid_argument("hnr_estimate: invalid f0 hint or sample rate");
    const double period = (double)sample_rate / f0_hint;
    const std::size_t n = waveform.size();
    if ((double)n < 3.0 * period)
        throw std::invalid_argument("hnr_estimate: need at least 3 pitch periods");

    double mean = 0.0;
    for (double v : waveform) mean += v;
    mean /= (double)n;
    std::vector<double> x(n);
    double power = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = waveform[i] - mean;
        power += x[i] * x[i];
    }
    if (power <= 0.0) throw std::invalid_argument("hnr_estimate: degenerate signal");

    const std::size_t lo = (std::size_t)std::max(2.0, std::floor(period * 0.8));
    const std::size_t hi =
        std::min((std::size_t)std::ceil(period * 1.25), n - 1);
    if (lo >= hi) throw std::invalid_argument("hnr_estimate: period out of range");

    double r_max = -1.0;
    for (std::size_t tau = lo; tau <= hi; ++tau) {
        double num = 0.0, pa = 0.0, pb = 0.0;
        for (std::size_t t = 0; t + tau < n; ++t) {
            num += x[t] * x[t + tau];
            pa += x[t] * x[t];
            pb += x[t + tau] * x[t + tau];
        }
        if (pa <= 0.0 || pb <= 0.0) continue;
        r_max = std::max(r_max, num / std::sqrt(pa * pb));
    }
    const double cap = 40.0;
    if (r_max <= 0.0) return -cap;
    if (r_max >= 1.0) return cap;
    return std::min(cap, std::max(-cap, 10.0 * std::log10(r_max / (1.0 - r_max))));
}

ContourPair contours_of_grid(const AcousticGrid& grid, const WorldCodec& codec,
                             int singer_fallback) {
    WorldCodec::Decoded dec = codec.decode(grid);
    for (Token& p : dec.regulated)
        if (p == kUnknown || p == kPad) p = kRest;  // foreign codes count as unvoiced
    for (Token& s : dec.semantic)
        if (s == kUnknown) s = 0;
    const int singer = dec.singer == kUnknown ? singer_fallback : dec.singer;
    return contours_from_fields(dec.regulated, dec.semantic, singer, codec.spec());
}

namespace {

struct RowSample {
    double v[11];  // column order matches LeakageRow
};

void accumulate(LeakageRow& row, const RowSample& s, double w) {
    double* cols[11] = {&row.pitch_mean,  &row.pitch_std,  &row.pitch_skew,
                        &row.pitch_kurt,  &row.energy_mean, &row.energy_std,
                        &row.energy_skew, &row.energy_kurt, &row.jitter,
                        &row.shimmer,     &row.hnr};
    for (int k = 0; k < 11; ++k) *cols[k] += w * s.v[k];
}

double safe_jitter(const std::vector<double>& c) {
    try {
        return relative_variation(c, "jitter");
    } catch (const std::invalid_argument&) {
        return 0.0;
    }
}

double voiced_mean(const std::vector<double>& f0) {
    double acc = 0.0;
    std::size_t n = 0;
    for (double v : f0)
        if (v > 0.0) {
            acc += v;
            ++n;
        }
    return n == 0 ? 0.0 : acc / (double)n;
}

RowSample prosody_vector(const ContourPair& c, std::uint64_t wave_seed) {
    RowSample out{};
    // pitch statistics are taken over voiced frames only, as is conventional
    // for F0 analysis; an (almost) unvoiced contour degrades to zero stats
    std::vector<double> voiced;
    for (double v : c.f0)
        if (v > 0.0) voiced.push_back(v);
    const ContourStats ps =
        voiced.size() >= 2 ? contour_stats(voiced) : ContourStats{};
    const ContourStats es = contour_stats(c.energy);
    out.v[0] = ps.mean;
    out.v[1] = ps.std_dev;
    out.v[2] = ps.skew;
    out.v[3] = ps.kurt;
    out.v[4] = es.mean;
    out.v[5] = es.std_dev;
    out.v[6] = es.skew;
    out.v[7] = es.kurt;
    out.v[8] = safe_jitter(c.f0);
    out.v[9] = safe_jitter(c.energy);
    const double hint = voiced_mean(c.f0);
    out.v[10] = 0.0;
    if (hint > 0.0) {
        const int sr = 8000;
        const std::vector<double> wave = render_waveform(c, 20.0, sr, wave_seed);
        if ((double)wave.size() >= 3.0 * sr / hint)
            out.v[10] = hnr_estimate(wave, hint, sr);
    }
    return out;
}

RowSample abs_diff(const RowSample& a, const RowSample& b) {
    RowSample d{};
    for (int k = 0; k < 11; ++k) d.v[k] = std::abs(a.v[k] - b.v[k]);
    return d;
}

}  // namespace

LeakageReport leakage_report(const Corpus& corpus, const SynthFn& synthesize,
                             std::uint64_t seed, std::size_t permutations) {
    const WorldCodec codec(corpus.spec);
    Rng rng(seed ^ 0x1eacULL);

    LeakageReport rep;
    std::vector<double> dp, du;  // per-sample pitch-mean diffs
    std::vector<RowSample> paired_rows, unpaired_rows;

    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
        const TokenSample& target = corpus.samples[i];
        std::vector<std::size_t> others;
        for (std::size_t j = 0; j < corpus.samples.size(); ++j)
            if (j != i && corpus.samples[j].singer_id == target.singer_id)
                others.push_back(j);
        if (others.size() < 2)
            throw std::runtime_error(
                "leakage_report: need at least 3 utterances per singer (singer " +
                std::to_string(target.singer_id) + ")");
        const std::size_t a = (std::size_t)rng.uniform(others.size());
        std::size_t b = (std::size_t)rng.uniform(others.size() - 1);
        if (b >= a) ++b;
        const AcousticGrid prompt = prompt_gen(corpus.samples[others[a]].acoustic,
                                               target.acoustic.frames, rng.next_u64());
        const AcousticGrid alt = prompt_gen(corpus.samples[others[b]].acoustic,
                                            target.acoustic.frames, rng.next_u64());

        const AcousticGrid out = synthesize(target, prompt, rng.next_u64());
        const ContourPair co = contours_of_grid(out, codec, target.singer_id);
        const ContourPair cp = contours_of_grid(prompt, codec, target.singer_id);
        const ContourPair ca = contours_of_grid(alt, codec, target.singer_id);

        const RowSample so = prosody_vector(co, seed ^ (i * 3 + 0));
        const RowSample sp = prosody_vector(cp, seed ^ (i * 3 + 1));
        const RowSample sa = prosody_vector(ca, seed ^ (i * 3 + 2));

        paired_rows.push_back(abs_diff(so, sp));
        unpaired_rows.push_back(abs_diff(so, sa));
        dp.push_back(paired_rows.back().v[0]);
        du.push_back(unpaired_rows.back().v[0]);
    }

    const double w = 1.0 / (double)paired_rows.size();
    for (std::size_t i = 0; i < paired_rows.size(); ++i) {
        accumulate(rep.paired, paired_rows[i], w);
        accumulate(rep.unpaired, unpaired_rows[i], w);
    }
    rep.samples = paired_rows.size();

    double gap = 0.0;
    for (std::size_t i = 0; i < dp.size(); ++i) gap += du[i] - dp[i];
    gap /= (double)dp.size();
    rep.gap_pitch_mean = gap;

    // sign-flip permutation test on the per-sample paired/unpaired gap
    Rng perm_rng(seed ^ 0x9e2aULL);
    std::size_t extreme = 0;
    for (std::size_t p = 0; p < permutations; ++p) {
        double g = 0.0;
        for (std::size_t i = 0; i < dp.size(); ++i) {
            const double d = du[i] - dp[i];
            g += (perm_rng.next_u64() & 1) ? d : -d;
        }
        g /= (double)dp.size();
        if (std::abs(g) >= std::abs(gap)) ++extreme;
    }
    rep.p_pitch_mean = (double)(extreme + 1) / (double)(permutations + 1);
    return rep;
}

namespace {

void emit_row(std::ostream& os, const char* name, const LeakageRow& r, const char* sep) {
    os << name << sep << r.pitch_mean << sep << r.pitch_std << sep << r.pitch_skew << sep
       << r.pitch_kurt << sep << r.energy_mean << sep << r.energy_std << sep
       << r.energy_skew << sep << r.energy_kurt << sep << r.jitter << sep << r.shimmer
       << sep << r.hnr << "\n";
}

}  // namespace

std::string LeakageReport::table_text() const {
    std::ostringstream os;
    os << "prosody differences vs prompt (n=" << samples << ")\n";
    os << "row\tpitch_mean\tpitch_std\tpitch_skew\tpitch_kurt\tenergy_mean\tenergy_std"
          "\tenergy_skew\tenergy_kurt\tjitter\tshimmer\thnr\n";
    emit_row(os, "paired", paired, "\t");
    emit_row(os, "unpaired", unpaired, "\t");
    os << "pitch_mean gap (unpaired - paired): " << gap_pitch_mean
       << ", permutation p = " << p_pitch_mean << "\n";
    return os.str();
}

std::string LeakageReport::csv() const {
    std::ostringstream os;
    os << "row,pitch_mean,pitch_std,pitch_skew,pitch_kurt,energy_mean,energy_std,"
          "energy_skew,energy_kurt,jitter,shimmer,hnr\n";
    emit_row(os, "paired", paired, ",");
    emit_row(os, "unpaired", unpaired, ",");
    return os.str();
}

}  // namespace melctl
