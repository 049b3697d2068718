// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line and
// the binary exits nonzero if any selected criterion fails. Run a single
// criterion with `acceptance --only N`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "melctl/eval.hpp"
#include "melctl/s2a.hpp"
#include "melctl/svt.hpp"

using namespace melctl;

namespace {

// pinned tolerances
constexpr double kGradRelTol = 1e-4;
constexpr double kGradTimeBudgetSec = 60.0;
constexpr double kSvtAccuracyFloor = 0.99;
constexpr double kSvtTimeBudgetSec = 300.0;
constexpr double kLeakTimeBudgetSec = 1200.0;
constexpr double kAccuracyMargin = 0.05;
constexpr double kLoraIdentityTol = 1e-7;
constexpr double kLoraMergeRelTol = 1e-6;
constexpr double kLoraRatioCap = 0.10;
constexpr double kHnrTolDb = 1.0;

struct Check {
    bool ok = true;
    std::string first_failure;

    void expect(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            first_failure = what;
        }
    }
};

double now_sec() {
    using clk = std::chrono::steady_clock;
    return std::chrono::duration<double>(clk::now().time_since_epoch()).count();
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng.normal();
    return m;
}

// central finite differences on every input element of a scalar tape loss
bool fd_matches(const std::function<int(Tape&, const std::vector<int>&)>& build,
                const std::vector<Matrix>& inputs) {
    Tape tape;
    std::vector<int> ids;
    for (const Matrix& m : inputs) ids.push_back(tape.leaf(m));
    tape.backward(build(tape, ids));
    const double h = 1e-6;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t e = 0; e < inputs[k].size(); ++e) {
            auto eval = [&](double d) {
                std::vector<Matrix> bumped = inputs;
                bumped[k].data[e] += d;
                Tape t2;
                std::vector<int> ids2;
                for (const Matrix& m : bumped) ids2.push_back(t2.leaf(m));
                return t2.val(build(t2, ids2)).data[0];
            };
            const double fd = (eval(h) - eval(-h)) / (2 * h);
            const double an = tape.grad(ids[k]).data[e];
            if (std::abs(fd - an) > kGradRelTol * std::max(1.0, std::abs(fd)))
                return false;
        }
    }
    return true;
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// 1. gradient suite: every loss against finite differences, 100 instances
bool criterion_gradients() {
    const double t0 = now_sec();
    Rng rng(101);
    Check c;

    for (int i = 0; i < 100 && c.ok; ++i) {
        const std::size_t k = 2 + rng.uniform(3);
        const std::size_t d = 3 + rng.uniform(4);
        const double tau = 0.1 + 0.3 * rng.uniform_real();
        c.expect(fd_matches(
                     [&, tau](Tape& t, const std::vector<int>& in) {
                         return tape_scl(t, in[0], in[1], tau, true);
                     },
                     {random_matrix(k, d, rng), random_matrix(k, d, rng)}),
                 "scl instance " + std::to_string(i));
    }
    for (int i = 0; i < 100 && c.ok; ++i) {
        const std::size_t l = 2 + rng.uniform(4);
        SoftLabelMatrix y;
        y.y = Matrix(l, l);
        const double opts[4] = {-1.0, 0.0, 0.5, 1.0};
        for (double& v : y.y.data) v = opts[rng.uniform(4)];
        c.expect(fd_matches(
                     [&](Tape& t, const std::vector<int>& in) {
                         return tape_fcl(t, in[0], in[1], y);
                     },
                     {random_matrix(l, 5, rng), random_matrix(l, 5, rng)}),
                 "fcl instance " + std::to_string(i));
    }
    for (int i = 0; i < 100 && c.ok; ++i) {
        const std::size_t l = 2 + rng.uniform(5);
        RegulatedPitchSeq tgt(l);
        for (Token& t : tgt) t = rng.uniform_real() < 0.2 ? kPad : (Token)rng.uniform(128);
        bool any = false;
        for (Token t : tgt) any |= t != kPad;
        if (!any) tgt[0] = 60;
        c.expect(fd_matches(
                     [&](Tape& t, const std::vector<int>& in) {
                         return tape_ce(t, in[0], tgt);
                     },
                     {random_matrix(l, kPitchVocab, rng)}),
                 "ce instance " + std::to_string(i));
    }
    for (int i = 0; i < 100 && c.ok; ++i) {
        const std::size_t l = 3 + rng.uniform(4);
        RegulatedPitchSeq tgt(l);
        Token cur = (Token)(60 + rng.uniform(4));
        for (Token& t : tgt) {
            if (rng.uniform_real() < 0.4) cur = (Token)(60 + rng.uniform(4));
            t = cur;
        }
        c.expect(fd_matches(
                     [&](Tape& t, const std::vector<int>& in) {
                         return tape_seg(t, t.softmax_rows(in[0]), tgt, 0.5);
                     },
                     {random_matrix(l, kPitchVocab, rng)}),
                 "seg instance " + std::to_string(i));
    }
    for (int i = 0; i < 100 && c.ok; ++i) {
        const std::size_t notes = 1 + rng.uniform(3);
        PitchSeq pitch(notes);
        DurationSeq dur(notes);
        std::size_t total = 0;
        for (std::size_t n = 0; n < notes; ++n) {
            pitch[n] = (Token)(58 + rng.uniform(8));
            dur[n] = 1 + (int)rng.uniform(3);
            total += (std::size_t)dur[n];
        }
        const std::size_t frames = total + rng.uniform(3);
        c.expect(fd_matches(
                     [&](Tape& t, const std::vector<int>& in) {
                         return tape_dur(t, t.softmax_rows(in[0]), pitch, dur, frames);
                     },
                     {random_matrix(frames, kPitchVocab, rng)}),
                 "dur instance " + std::to_string(i));
    }
    for (int i = 0; i < 100 && c.ok; ++i) {
        const std::size_t l = 2 + rng.uniform(4);
        const std::size_t v = 8;
        std::vector<Token> tgt(l);
        std::vector<char> mask(l, 0);
        for (std::size_t t = 0; t < l; ++t) {
            tgt[t] = (Token)rng.uniform(v);
            mask[t] = rng.uniform_real() < 0.6 ? 1 : 0;
        }
        mask[rng.uniform(l)] = 1;
        c.expect(fd_matches(
                     [&](Tape& t, const std::vector<int>& in) {
                         return tape_masked_ce(t, in[0], tgt, mask);
                     },
                     {random_matrix(l, v, rng)}),
                 "masked_ce instance " + std::to_string(i));
    }

    const double elapsed = now_sec() - t0;
    c.expect(elapsed < kGradTimeBudgetSec,
             "gradient suite too slow: " + std::to_string(elapsed) + "s");
    if (!c.ok) std::printf("    [1] %s\n", c.first_failure.c_str());
    std::printf("    [1] 600 loss instances checked in %.1fs\n", elapsed);
    return c.ok;
}

// ---------------------------------------------------------------------------
// 2. length regulation telescoping on 10^4 random scores
bool criterion_regulation() {
    Rng rng(202);
    Check c;
    for (int iter = 0; iter < 10000 && c.ok; ++iter) {
        const std::size_t notes = 1 + rng.uniform(12);
        PitchSeq pitch(notes);
        DurationSeq dur(notes);
        for (std::size_t n = 0; n < notes; ++n) {
            pitch[n] = rng.uniform_real() < 0.15 ? kRest : (Token)rng.uniform(128);
            dur[n] = 1 + (int)rng.uniform(9);
        }
        const std::size_t frames = 1 + rng.uniform(200);
        const FrameSpans spans = regulate_spans(dur, frames);
        c.expect(spans.start.size() == notes && spans.end.size() == notes,
                 "span count mismatch");
        if (!c.ok) break;
        c.expect(spans.start[0] == 0, "first span not at 0");
        c.expect(spans.end[notes - 1] == frames, "last span misses L");
        for (std::size_t n = 0; n < notes; ++n) {
            c.expect(spans.end[n] >= spans.start[n], "negative span");
            if (n + 1 < notes)
                c.expect(spans.end[n] == spans.start[n + 1], "gap between spans");
        }
        const RegulatedPitchSeq reg = regulate_pitch(pitch, dur, frames);
        c.expect(reg.size() == frames, "regulated length mismatch");
        for (std::size_t n = 0; n < notes && c.ok; ++n)
            for (std::size_t t = spans.start[n]; t < spans.end[n]; ++t)
                c.expect(reg[t] == pitch[n], "regulated content mismatch");
    }
    if (!c.ok) std::printf("    [2] %s\n", c.first_failure.c_str());
    return c.ok;
}

// ---------------------------------------------------------------------------
// 3. soft-label construction vs a cell-by-cell oracle on 10^3 pairs
bool criterion_soft_labels() {
    Rng rng(303);
    Check c;
    for (int iter = 0; iter < 1000 && c.ok; ++iter) {
        const std::size_t l = 1 + rng.uniform(12);
        RegulatedPitchSeq a(l), b(l);
        SemanticSeq sem(l);
        auto draw = [&]() -> Token {
            const double u = rng.uniform_real();
            if (u < 0.15) return kRest;
            if (u < 0.25) return kPad;
            return (Token)(55 + rng.uniform(6));
        };
        for (std::size_t t = 0; t < l; ++t) {
            a[t] = draw();
            b[t] = draw();
            sem[t] = (Token)rng.uniform(4);
        }
        const double alpha = iter % 2 ? 0.5 : rng.uniform_real();
        const SoftLabelMatrix got = build_soft_labels(a, b, sem, alpha);
        for (std::size_t i = 0; i < l; ++i)
            for (std::size_t j = 0; j < l; ++j) {
                double want;
                if (a[i] == kRest || a[i] == kPad || b[j] == kRest || b[j] == kPad)
                    want = -1.0;
                else if (a[i] != b[j])
                    want = 0.0;
                else
                    want = sem[i] == sem[j] ? 1.0 : alpha;
                c.expect(got.y.at(i, j) == want,
                         "cell (" + std::to_string(i) + "," + std::to_string(j) + ")");
            }
    }
    if (!c.ok) std::printf("    [3] %s\n", c.first_failure.c_str());
    return c.ok;
}

// ---------------------------------------------------------------------------
// shared toy worlds

WorldSpec clean_world(std::uint64_t seed) {
    WorldSpec w;
    w.v_sem = 8;
    w.n_singers = 2;
    w.pitch_low = 60;
    w.pitch_high = 67;
    w.leak_strength = 0.0;
    w.seed = seed;
    return w;
}

Corpus make_corpus(const WorldSpec& spec, std::size_t n, std::size_t notes,
                   std::size_t frames, std::uint64_t seed) {
    Corpus c;
    c.spec = spec;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i)
        c.samples.push_back(gen_sample(spec, notes, frames,
                                       (int)rng.uniform((std::uint64_t)spec.n_singers),
                                       rng.next_u64()));
    return c;
}

TransformerConfig small_svt_config(int v_sem) {
    TransformerConfig cfg = svt_toy_config();
    cfg.layers = 2;
    cfg.dim = 32;
    cfg.heads = 2;
    cfg.ffn_dim = 64;
    cfg.v_sem = v_sem;
    return cfg;
}

// ---------------------------------------------------------------------------
// 4. SVT fidelity in a disentangled world
bool criterion_svt_fidelity() {
    const double t0 = now_sec();
    const Corpus corpus = make_corpus(clean_world(11), 80, 6, 24, 40);
    SvtTrainOptions opts;
    opts.epochs = 30;
    opts.seed = 3;
    const SvtCheckpoint ckpt =
        train_svt(corpus, small_svt_config(corpus.spec.v_sem), LossWeights{}, opts);
    const double elapsed = now_sec() - t0;
    std::printf("    [4] held-out accuracy %.4f in %.1fs\n", ckpt.heldout_accuracy,
                elapsed);
    return ckpt.heldout_accuracy >= kSvtAccuracyFloor && elapsed < kSvtTimeBudgetSec;
}

// ---------------------------------------------------------------------------
// 5. segment/duration losses reduce fragmentation, 3 seeds
bool criterion_fragmentation() {
    bool ok = true;
    for (std::uint64_t seed : {1, 2, 3}) {
        WorldSpec spec = clean_world(seed);
        const Corpus train = make_corpus(spec, 24, 6, 24, 70 + seed);
        const Corpus eval_set = make_corpus(spec, 40, 6, 24, 700 + seed);
        auto frag_count = [&](bool ce_only) {
            SvtTrainOptions opts;
            opts.epochs = 2;
            opts.seed = seed;
            opts.ce_only = ce_only;
            const SvtCheckpoint ckpt =
                train_svt(train, small_svt_config(spec.v_sem), LossWeights{}, opts);
            std::size_t frags = 0;
            for (const TokenSample& s : eval_set.samples)
                frags += count_pitch_runs(transcribe(ckpt.state, s.acoustic).first);
            return frags;
        };
        const std::size_t with = frag_count(false);
        const std::size_t without = frag_count(true);
        std::printf("    [5] seed %llu: fragments full=%zu ce_only=%zu\n",
                    (unsigned long long)seed, with, without);
        ok = ok && with < without;
    }
    return ok;
}

// ---------------------------------------------------------------------------
// 6. duration control: decoded length equals the summed note durations
bool criterion_duration_control() {
    TransformerConfig cfg = s2a_toy_config();
    cfg.layers = 2;
    cfg.dim = 16;
    cfg.heads = 2;
    cfg.ffn_dim = 32;
    cfg.v_sem = 8;
    cfg.v_aco = 64;
    const ModelState base = init_s2a_state(cfg, 9);
    Rng rng(606);
    Check c;
    for (int iter = 0; iter < 100 && c.ok; ++iter) {
        const std::size_t notes = 1 + rng.uniform(6);
        PitchSeq pitch(notes);
        DurationSeq dur(notes);
        std::size_t total = 0;
        for (std::size_t n = 0; n < notes; ++n) {
            pitch[n] = (Token)(55 + rng.uniform(20));
            dur[n] = 1 + (int)rng.uniform(5);
            total += (std::size_t)dur[n];
        }
        const RegulatedPitchSeq reg = regulate_pitch(pitch, dur, total);
        c.expect(reg.size() == total, "regulation length");
        SemanticSeq sem(total);
        for (Token& t : sem) t = (Token)rng.uniform((std::uint64_t)cfg.v_sem);
        DecodeConfig dc;
        dc.steps = 3;
        dc.seed = rng.next_u64();
        const AcousticGrid prompt(0, (std::size_t)cfg.n_codebooks);
        const AcousticGrid out = decode(sem, reg, prompt, base, nullptr, dc);
        c.expect(out.frames == total,
                 "decode length " + std::to_string(out.frames) + " vs " +
                     std::to_string(total));
        for (Token code : out.codes)
            c.expect(code >= 0 && code < cfg.v_aco, "code outside vocabulary");
    }
    if (!c.ok) std::printf("    [6] %s\n", c.first_failure.c_str());
    return c.ok;
}

// ---------------------------------------------------------------------------
// 7. leakage reproduction in an entangled world, 3 seeds

struct LeakWorldRun {
    double gap_full = 0.0;
    double gap_ablated = 0.0;
    double acc_full = 0.0;
    double acc_ablated = 0.0;
};

ModelState train_s2a_model(const Corpus& train, const ModelState& init,
                           const ModelState& svt, bool ablated, int steps,
                           std::uint64_t seed) {
    ModelState base = init;
    S2aTuning tuning = make_tuning(base, FinetuneStrategy::full, 0, 0.0, seed);
    AdamWConfig ocfg;
    ocfg.lr = 3e-3;
    AdamW opt(ocfg);
    BatchPlan plan;
    plan.k_total = 6;
    plan.k_seq = 3;
    // near-total masking leaves the prompt as the only acoustic context, which
    // is what builds the prompt-reading pathway the leak flows through
    plan.mask_ratio_min = 0.85;
    plan.mask_ratio_max = 1.0;
    LossWeights w;
    w.lambda_cl = 1.0;
    S2aStepOptions opts;
    if (ablated) opts.no_scl = opts.no_fcl = opts.no_svt = true;
    Rng rng(seed ^ 0x77aaULL);
    for (int s = 0; s < steps; ++s) {
        const TrainBatch batch = plan_batch(train, plan, rng.next_u64());
        train_step(train, batch, base, tuning, svt, w, plan, opts, opt, rng.next_u64());
    }
    return base;
}

LeakWorldRun run_leak_world(std::uint64_t seed, int steps) {
    WorldSpec spec;
    spec.v_sem = 16;
    spec.v_aco = 256;
    spec.n_singers = 4;
    spec.pitch_low = 55;
    spec.pitch_high = 79;
    spec.leak_strength = 0.5;
    spec.seed = 500 + seed;

    const std::size_t frames = 16, notes = 5;
    Corpus train;
    train.spec = spec;
    Rng rng(seed ^ 0xf00dULL);
    int gid = 0;
    for (int singer = 0; singer < 3; ++singer) {
        for (int g = 0; g < 2; ++g) {
            auto grp = gen_group(spec, notes, frames, singer, 3, gid++, rng.next_u64());
            for (auto& s : grp) train.samples.push_back(std::move(s));
        }
        for (int k = 0; k < 4; ++k)
            train.samples.push_back(gen_sample(spec, notes, frames, singer, rng.next_u64()));
    }
    // singer 3 never appears in training: its utterances probe generalization
    // of the pitch conditioning. The leakage report instead uses fresh
    // utterances of *seen* singers, where the prompt tokens are readable and
    // prompt-following can actually show up as a prosody leak.
    Corpus heldout;
    heldout.spec = spec;
    for (int k = 0; k < 40; ++k)
        heldout.samples.push_back(gen_sample(spec, notes, frames, 3, rng.next_u64()));
    Corpus leak_eval;
    leak_eval.spec = spec;
    for (int singer = 0; singer < 3; ++singer)
        for (int k = 0; k < 12; ++k)
            leak_eval.samples.push_back(
                gen_sample(spec, notes, frames, singer, rng.next_u64()));

    SvtTrainOptions sopts;
    sopts.epochs = 6;
    sopts.seed = seed;
    const SvtCheckpoint svt =
        train_svt(train, small_svt_config(spec.v_sem), LossWeights{}, sopts);

    TransformerConfig cfg = s2a_toy_config();
    cfg.layers = 2;
    cfg.dim = 32;
    cfg.heads = 2;
    cfg.ffn_dim = 64;
    cfg.v_sem = spec.v_sem;
    cfg.v_aco = spec.v_aco;
    const ModelState init = init_s2a_state(cfg, seed ^ 0x51ULL);

    const ModelState full =
        train_s2a_model(train, init, svt.state, false, steps, seed);
    const ModelState ablated =
        train_s2a_model(train, init, svt.state, true, steps, seed);

    auto synth_with = [](const ModelState& model) {
        return SynthFn([&model](const TokenSample& target, const AcousticGrid& prompt,
                                std::uint64_t s) {
            DecodeConfig dc;
            dc.steps = 6;
            dc.seed = s;
            return decode(target.semantic, target.regulated, prompt, model, nullptr, dc);
        });
    };
    const LeakageReport rep_full = leakage_report(leak_eval, synth_with(full), 77, 2000);
    const LeakageReport rep_abl = leakage_report(leak_eval, synth_with(ablated), 77, 2000);

    const WorldCodec codec(spec);
    auto accuracy = [&](const ModelState& model) {
        double acc = 0.0;
        for (std::size_t i = 0; i < heldout.samples.size(); ++i) {
            const TokenSample& s = heldout.samples[i];
            const TokenSample& other =
                heldout.samples[(i + 1) % heldout.samples.size()];
            const AcousticGrid prompt =
                prompt_gen(other.acoustic, s.acoustic.frames, 900 + i);
            DecodeConfig dc;
            dc.steps = 6;
            dc.seed = 1000 + i;
            const AcousticGrid out =
                decode(s.semantic, s.regulated, prompt, model, nullptr, dc);
            acc += pitch_frame_accuracy(codec.decode(out).regulated, s.regulated);
        }
        return acc / (double)heldout.samples.size();
    };

    LeakWorldRun r;
    r.gap_full = rep_full.gap_pitch_mean;
    r.gap_ablated = rep_abl.gap_pitch_mean;
    r.acc_full = accuracy(full);
    r.acc_ablated = accuracy(ablated);
    return r;
}

bool criterion_leakage(int steps) {
    const double t0 = now_sec();
    double gap_full = 0.0, gap_abl = 0.0, acc_full = 0.0, acc_abl = 0.0;
    const int n_seeds = 3;
    for (std::uint64_t seed = 1; seed <= n_seeds; ++seed) {
        const LeakWorldRun r = run_leak_world(seed, steps);
        std::printf(
            "    [7] seed %llu: gap full=%.3f ablated=%.3f | acc full=%.3f "
            "ablated=%.3f\n",
            (unsigned long long)seed, r.gap_full, r.gap_ablated, r.acc_full,
            r.acc_ablated);
        gap_full += r.gap_full / n_seeds;
        gap_abl += r.gap_ablated / n_seeds;
        acc_full += r.acc_full / n_seeds;
        acc_abl += r.acc_ablated / n_seeds;
    }
    const double elapsed = now_sec() - t0;
    std::printf("    [7] means: gap full=%.3f ablated=%.3f | acc full=%.3f "
                "ablated=%.3f | %.1fs\n",
                gap_full, gap_abl, acc_full, acc_abl, elapsed);
    return gap_abl > gap_full && acc_full >= acc_abl + kAccuracyMargin &&
           elapsed < kLeakTimeBudgetSec;
}

// ---------------------------------------------------------------------------
// 8. LoRA adapter contract
bool criterion_lora() {
    const TransformerConfig cfg = s2a_toy_config();
    const ModelState base = init_s2a_state(cfg, 5);
    S2aTuning tuning = make_tuning(base, FinetuneStrategy::lora, 4, 8.0, 7);

    Rng rng(808);
    const std::size_t l = 6;
    SemanticSeq sem(l);
    RegulatedPitchSeq reg(l);
    for (std::size_t t = 0; t < l; ++t) {
        sem[t] = (Token)rng.uniform((std::uint64_t)cfg.v_sem);
        reg[t] = (Token)(55 + rng.uniform(20));
    }
    AcousticGrid masked(l, (std::size_t)cfg.n_codebooks, cfg.mask_id());
    AcousticGrid prompt(3, (std::size_t)cfg.n_codebooks);
    for (Token& t : prompt.codes) t = (Token)rng.uniform((std::uint64_t)cfg.v_aco);

    auto logits_with = [&](const ModelState& state, const LoraAdapters* lora) {
        Tape tape;
        const ParamBinding pb = bind_params(tape, state, lora);
        const int cond = embed_condition(tape, pb, state.config, sem, reg);
        const S2aForward fwd = forward_s2a(tape, pb, state.config, masked, cond, prompt);
        std::vector<Matrix> out;
        for (int id : fwd.logits) out.push_back(tape.val(id));
        return out;
    };

    const auto base_logits = logits_with(base, nullptr);
    const auto zero_logits = logits_with(base, &tuning.lora);
    double max_diff = 0.0;
    for (std::size_t cb = 0; cb < base_logits.size(); ++cb)
        for (std::size_t e = 0; e < base_logits[cb].size(); ++e)
            max_diff = std::max(max_diff, std::abs(base_logits[cb].data[e] -
                                                   zero_logits[cb].data[e]));

    for (auto& [name, dm] : tuning.lora.mats)
        for (double& v : dm.second.data) v = 0.05 * rng.normal();
    const auto adapted = logits_with(base, &tuning.lora);
    const ModelState merged = lora_merge(base, tuning.lora);
    const auto merged_logits = logits_with(merged, nullptr);
    double max_rel = 0.0;
    for (std::size_t cb = 0; cb < adapted.size(); ++cb)
        for (std::size_t e = 0; e < adapted[cb].size(); ++e) {
            const double a = adapted[cb].data[e], m = merged_logits[cb].data[e];
            max_rel = std::max(max_rel, std::abs(a - m) / std::max(1.0, std::abs(m)));
        }

    std::size_t total = 0;
    for (const auto& [name, m] : base.params) total += m.size();
    const double ratio = (double)tuning.trainable_params(base) / (double)total;

    std::printf("    [8] identity diff %.2e | merge rel %.2e | trainable ratio %.4f\n",
                max_diff, max_rel, ratio);
    return max_diff <= kLoraIdentityTol && max_rel <= kLoraMergeRelTol &&
           ratio < kLoraRatioCap;
}

// ---------------------------------------------------------------------------
// 9. HNR estimator vs generator ground truth
bool criterion_hnr() {
    ContourPair c;
    c.f0.assign(80, 200.0);  // 8000/200 = integer period
    c.energy.assign(80, 1.0);
    const int sr = 8000;
    bool ok = true;
    for (double target : {0.0, 10.0, 20.0, 30.0}) {
        const std::vector<double> wave = render_waveform(c, target, sr, 3);
        const double est = hnr_estimate(wave, 200.0, sr);
        std::printf("    [9] target %4.0f dB -> estimate %6.2f dB\n", target, est);
        ok = ok && std::abs(est - target) <= kHnrTolDb;
    }
    return ok;
}

// ---------------------------------------------------------------------------
// 10. bitwise determinism of corpus files, checkpoints, and metric CSVs
bool criterion_determinism() {
    Check c;

    const WorldSpec spec = clean_world(21);
    const Corpus ca = make_corpus(spec, 12, 5, 20, 33);
    const Corpus cb = make_corpus(spec, 12, 5, 20, 33);
    write_corpus(ca.samples, spec, "/tmp/melctl_acc10_a.jsonl");
    write_corpus(cb.samples, spec, "/tmp/melctl_acc10_b.jsonl");
    c.expect(file_bytes("/tmp/melctl_acc10_a.jsonl") ==
                 file_bytes("/tmp/melctl_acc10_b.jsonl"),
             "corpus bytes differ");

    SvtTrainOptions opts;
    opts.epochs = 2;
    opts.seed = 13;
    const TransformerConfig cfg = small_svt_config(spec.v_sem);
    const SvtCheckpoint k1 = train_svt(ca, cfg, LossWeights{}, opts);
    const SvtCheckpoint k2 = train_svt(cb, cfg, LossWeights{}, opts);
    for (const auto& [name, m] : k1.state.params)
        c.expect(k2.state.params.at(name).data == m.data,
                 "checkpoint parameter differs: " + name);
    save_checkpoint(k1.state, "/tmp/melctl_acc10_ck_a");
    save_checkpoint(k2.state, "/tmp/melctl_acc10_ck_b");
    c.expect(file_bytes("/tmp/melctl_acc10_ck_a/manifest.json") ==
                 file_bytes("/tmp/melctl_acc10_ck_b/manifest.json"),
             "checkpoint manifests differ");
    for (const auto& [name, m] : k1.state.params)
        c.expect(file_bytes("/tmp/melctl_acc10_ck_a/" + name + ".bin") ==
                     file_bytes("/tmp/melctl_acc10_ck_b/" + name + ".bin"),
                 "checkpoint blob differs: " + name);

    const WorldCodec codec(spec);
    auto metrics_csv = [&](const Corpus& corpus, const ModelState& svt) {
        std::ostringstream csv;
        csv << "index,pitch_accuracy,fragments\n";
        for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
            const auto [pred, probs] = transcribe(svt, corpus.samples[i].acoustic);
            char line[128];
            std::snprintf(line, sizeof(line), "%zu,%.10f,%zu\n", i,
                          pitch_frame_accuracy(pred, corpus.samples[i].regulated),
                          count_pitch_runs(pred));
            csv << line;
        }
        return csv.str();
    };
    c.expect(metrics_csv(ca, k1.state) == metrics_csv(cb, k2.state),
             "metric csv differs");

    const SynthFn ideal = [&](const TokenSample& t, const AcousticGrid&, std::uint64_t) {
        return codec.encode(t.semantic, t.regulated, t.singer_id);
    };
    Corpus leak_corpus;
    leak_corpus.spec = spec;
    Rng rng(44);
    for (int singer = 0; singer < 2; ++singer)
        for (int k = 0; k < 3; ++k)
            leak_corpus.samples.push_back(gen_sample(spec, 5, 20, singer, rng.next_u64()));
    c.expect(leakage_report(leak_corpus, ideal, 9, 300).csv() ==
                 leakage_report(leak_corpus, ideal, 9, 300).csv(),
             "leakage csv differs");

    if (!c.ok) std::printf("    [10] %s\n", c.first_failure.c_str());
    return c.ok;
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    int leak_steps = 150;
    for (int i = 1; i < argc; ++i) {
        if (!std::strcmp(argv[i], "--only") && i + 1 < argc)
            only = std::atoi(argv[++i]);
        else if (!std::strcmp(argv[i], "--leak-steps") && i + 1 < argc)
            leak_steps = std::atoi(argv[++i]);
    }

    struct Entry {
        int id;
        const char* name;
        std::function<bool()> run;
    };
    const std::vector<Entry> entries = {
        {1, "loss gradients vs finite differences", criterion_gradients},
        {2, "length regulation telescoping", criterion_regulation},
        {3, "soft labels vs cell oracle", criterion_soft_labels},
        {4, "svt fidelity (clean world)", criterion_svt_fidelity},
        {5, "fragmentation reduction", criterion_fragmentation},
        {6, "duration control", criterion_duration_control},
        {7, "leakage reproduction",
         [leak_steps] { return criterion_leakage(leak_steps); }},
        {8, "lora contract", criterion_lora},
        {9, "hnr estimator", criterion_hnr},
        {10, "determinism", criterion_determinism},
    };

    int failures = 0;
    for (const Entry& e : entries) {
        if (only && e.id != only) continue;
        const double t0 = now_sec();
        bool ok = false;
        try {
            ok = e.run();
        } catch (const std::exception& ex) {
            std::printf("    [%d] exception: %s\n", e.id, ex.what());
        }
        std::printf("[%2d] %-40s %s (%.1fs)\n", e.id, e.name, ok ? "PASS" : "FAIL",
                    now_sec() - t0);
        if (!ok) ++failures;
    }
    return failures;
}
