#include "melctl/s2a.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace melctl {

void BatchPlan::validate() const {
    if (k_seq < 2) throw std::invalid_argument("batch plan needs k_seq >= 2");
    if (k_total <= k_seq)
        throw std::invalid_argument("batch plan needs k_total > k_seq");
    if (!(mask_ratio_min > 0.0 && mask_ratio_max <= 1.0 &&
          mask_ratio_min <= mask_ratio_max))
        throw std::invalid_argument("invalid mask ratio range");
}

FinetuneStrategy strategy_from_string(const std::string& s) {
    if (s == "lora") return FinetuneStrategy::lora;
    if (s == "pitch-only" || s == "pitch_only") return FinetuneStrategy::pitch_only;
    if (s == "prefix") return FinetuneStrategy::prefix;
    if (s == "full") return FinetuneStrategy::full;
    throw std::invalid_argument("unknown fine-tune strategy: " + s);
}

std::string to_string(FinetuneStrategy s) {
    switch (s) {
        case FinetuneStrategy::lora: return "lora";
        case FinetuneStrategy::pitch_only: return "pitch-only";
        case FinetuneStrategy::prefix: return "prefix";
        case FinetuneStrategy::full: return "full";
    }
    return "?";
}

S2aTuning make_tuning(const ModelState& base, FinetuneStrategy strategy, int lora_rank,
                      double lora_alpha, std::uint64_t seed, int prefix_tokens) {
    S2aTuning t;
    t.strategy = strategy;
    if (strategy == FinetuneStrategy::lora) {
        // adapt attention and, in low-rank form, the output heads; the full
        // head matrices stay frozen so the trainable footprint remains small
        std::vector<std::string> targets = lora_attention_targets(base.config);
        for (int cb = 0; cb < base.config.n_codebooks; ++cb)
            targets.push_back("head.aco." + std::to_string(cb) + ".w");
        t.lora = make_lora(base, targets, lora_rank, lora_alpha, seed);
    } else if (strategy == FinetuneStrategy::prefix) {
        Rng rng(seed ^ 0x9fefULL);
        t.prefix = Matrix((std::size_t)prefix_tokens, (std::size_t)base.config.dim);
        for (double& x : t.prefix.data) x = 0.02 * rng.normal();
    }
    return t;
}

std::vector<std::string> trainable_names(const ModelState& base, const S2aTuning& tuning) {
    std::vector<std::string> names;
    if (tuning.strategy == FinetuneStrategy::full) {
        for (const auto& [name, m] : base.params) names.push_back(name);
        return names;
    }
    if (tuning.strategy == FinetuneStrategy::pitch_only) return {"emb.pitch"};
    // the conditioning embeddings are trained directly; under LoRA the output
    // heads are reached through their adapters instead of full-matrix updates
    const bool direct_heads = tuning.strategy == FinetuneStrategy::prefix;
    for (const auto& [name, m] : base.params) {
        if (name == "emb.pitch" || name == "emb.sem" || name == "emb.segment" ||
            (direct_heads && name.rfind("head.aco.", 0) == 0))
            names.push_back(name);
    }
    if (tuning.strategy == FinetuneStrategy::lora) {
        for (const auto& [target, dm] : tuning.lora.mats) {
            names.push_back("lora." + target + ".down");
            names.push_back("lora." + target + ".up");
        }
    } else if (tuning.strategy == FinetuneStrategy::prefix) {
        names.push_back("prefix.tokens");
    }
    return names;
}

std::size_t S2aTuning::trainable_params(const ModelState& base) const {
    std::size_t n = 0;
    for (const std::string& name : trainable_names(base, *this)) {
        if (name == "prefix.tokens") {
            n += prefix.size();
        } else if (name.rfind("lora.", 0) == 0) {
            // counted below via the adapter registry
        } else {
            n += base.params.at(name).size();
        }
    }
    if (strategy == FinetuneStrategy::lora) n += lora.trainable_params();
    return n;
}

AcousticGrid prompt_gen(const AcousticGrid& source, std::size_t target_len,
                        std::uint64_t seed) {
    if (target_len < 2) throw std::invalid_argument("prompt_gen: target length < 2");
    if (source.frames == 0) throw std::invalid_argument("prompt_gen: empty source");
    const std::size_t lo = std::min<std::size_t>(target_len / 4, 5);
    const std::size_t hi = target_len / 2;
    Rng rng(seed);
    std::size_t len =
        hi > lo ? lo + (std::size_t)rng.uniform((std::uint64_t)(hi - lo)) : lo;
    if (len == 0) len = 1;
    if (len > source.frames)
        throw std::invalid_argument("prompt_gen: source utterance too short");
    const std::size_t start =
        (std::size_t)rng.uniform((std::uint64_t)(source.frames - len + 1));
    AcousticGrid out(len, source.codebooks);
    for (std::size_t t = 0; t < len; ++t)
        for (std::size_t cb = 0; cb < source.codebooks; ++cb)
            out.at(t, cb) = source.at(start + t, cb);
    return out;
}

namespace {

// another utterance by the same singer; throws when none exists
std::size_t other_utterance(const Corpus& corpus, std::size_t idx, Rng& rng) {
    std::vector<std::size_t> cands;
    for (std::size_t j = 0; j < corpus.samples.size(); ++j) {
        if (j != idx && corpus.samples[j].singer_id == corpus.samples[idx].singer_id)
            cands.push_back(j);
    }
    if (cands.empty())
        throw std::runtime_error("no second utterance available for singer " +
                                 std::to_string(corpus.samples[idx].singer_id));
    return cands[(std::size_t)rng.uniform(cands.size())];
}

void assert_group_structure(const Corpus& corpus, const std::vector<std::size_t>& seq_idx) {
    if (seq_idx.size() < 2)
        throw std::invalid_argument("sequence-CL half needs at least two samples");
    const TokenSample& first = corpus.samples[seq_idx[0]];
    for (std::size_t i = 1; i < seq_idx.size(); ++i) {
        const TokenSample& s = corpus.samples[seq_idx[i]];
        if (s.group_id != first.group_id || s.group_id < 0)
            throw std::invalid_argument("sequence-CL samples must share a group");
        if (s.semantic != first.semantic)
            throw std::invalid_argument("sequence-CL samples must share semantics");
        if (s.singer_id != first.singer_id)
            throw std::invalid_argument("sequence-CL samples must share the singer");
    }
}

struct SampleForward {
    S2aForward fwd;
    MaskResult mask;
};

SampleForward run_sample(Tape& tape, const ParamBinding& pb, const TransformerConfig& cfg,
                         const TokenSample& sample, const RegulatedPitchSeq& regulated,
                         const AcousticGrid& prompt_source, double mask_ratio,
                         int prefix, std::uint64_t seed) {
    SampleForward out;
    out.mask = mask_tokens(sample.acoustic, mask_ratio, cfg.mask_id(), seed);
    const AcousticGrid prompt =
        prompt_gen(prompt_source, sample.acoustic.frames, seed ^ 0x9d2c5680ULL);
    const int cond = embed_condition(tape, pb, cfg, sample.semantic, regulated);
    out.fwd = forward_s2a(tape, pb, cfg, out.mask.grid, cond, prompt, prefix);
    return out;
}

double draw_ratio(const BatchPlan& plan, Rng& rng) {
    return plan.mask_ratio_min +
           (plan.mask_ratio_max - plan.mask_ratio_min) * rng.uniform_real();
}

}  // namespace

TrainBatch plan_batch(const Corpus& corpus, const BatchPlan& plan, std::uint64_t seed) {
    plan.validate();
    Rng rng(seed ^ 0xba7c4ULL);

    std::vector<int> group_ids;
    for (const TokenSample& s : corpus.samples) {
        if (s.group_id >= 0 &&
            std::find(group_ids.begin(), group_ids.end(), s.group_id) == group_ids.end())
            group_ids.push_back(s.group_id);
    }
    std::vector<int> usable;
    for (int g : group_ids) {
        std::size_t n = 0;
        for (const TokenSample& s : corpus.samples)
            if (s.group_id == g) ++n;
        if (n >= (std::size_t)plan.k_seq) usable.push_back(g);
    }
    if (usable.empty())
        throw std::runtime_error("corpus has no contrastive group of size >= " +
                                 std::to_string(plan.k_seq));
    const int g = usable[(std::size_t)rng.uniform(usable.size())];

    TrainBatch batch;
    for (std::size_t i = 0; i < corpus.samples.size() &&
                            batch.seq_idx.size() < (std::size_t)plan.k_seq;
         ++i) {
        if (corpus.samples[i].group_id == g) batch.seq_idx.push_back(i);
    }

    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
        if (std::find(batch.seq_idx.begin(), batch.seq_idx.end(), i) ==
            batch.seq_idx.end())
            rest.push_back(i);
    }
    const std::size_t need = (std::size_t)(plan.k_total - plan.k_seq);
    if (rest.size() < need)
        throw std::runtime_error("corpus too small for the requested batch plan");
    for (std::size_t k = 0; k < need; ++k) {
        const std::size_t j = k + (std::size_t)rng.uniform(rest.size() - k);
        std::swap(rest[k], rest[j]);
        batch.frame_idx.push_back(rest[k]);
    }
    return batch;
}

StepResult train_step(const Corpus& corpus, const TrainBatch& batch,
                      const ModelState& base, S2aTuning& tuning, const ModelState& svt,
                      const LossWeights& weights, const BatchPlan& plan,
                      const S2aStepOptions& opts, AdamW& opt, std::uint64_t seed) {
    weights.validate();
    plan.validate();
    const TransformerConfig& cfg = base.config;
    const bool want_scl = !opts.no_scl && weights.lambda_cl > 0.0 && weights.lambda_scl > 0.0;
    const bool want_fcl = !opts.no_fcl && weights.lambda_cl > 0.0 && weights.lambda_fcl > 0.0;
    const bool want_svt = !opts.no_svt && weights.lambda_svt > 0.0;
    if (want_scl) assert_group_structure(corpus, batch.seq_idx);
    if (batch.frame_idx.empty())
        throw std::invalid_argument("train_step: empty frame-CL half");

    Tape tape;
    ParamBinding pb = bind_params(
        tape, base, tuning.strategy == FinetuneStrategy::lora ? &tuning.lora : nullptr);
    int prefix = -1;
    if (tuning.strategy == FinetuneStrategy::prefix) {
        prefix = tape.leaf(tuning.prefix);
        pb.ids["prefix.tokens"] = prefix;
    }
    ParamBinding svt_pb;
    if (want_svt) svt_pb = bind_params(tape, svt, nullptr);

    Rng rng(seed ^ 0x57e9ULL);

    StepResult res;

    // ---- sequence-CL half: identical content, different prompts
    if (want_scl) {
        int pooled_a = -1, pooled_b = -1;
        for (std::size_t i = 0; i < batch.seq_idx.size(); ++i) {
            const std::size_t idx = batch.seq_idx[i];
            const TokenSample& s = corpus.samples[idx];
            const double ratio = draw_ratio(plan, rng);
            const std::size_t srcA = other_utterance(corpus, idx, rng);
            const std::size_t srcB = other_utterance(corpus, idx, rng);
            SampleForward a =
                run_sample(tape, pb, cfg, s, s.regulated, corpus.samples[srcA].acoustic,
                           ratio, prefix, rng.next_u64());
            SampleForward b =
                run_sample(tape, pb, cfg, s, s.regulated, corpus.samples[srcB].acoustic,
                           ratio, prefix, rng.next_u64());
            const int ga = tape.mean_rows(a.fwd.frames);
            const int gb = tape.mean_rows(b.fwd.frames);
            pooled_a = pooled_a < 0 ? ga : tape.concat_rows(pooled_a, ga);
            pooled_b = pooled_b < 0 ? gb : tape.concat_rows(pooled_b, gb);
        }
        const int scl =
            tape_scl(tape, pooled_a, pooled_b, weights.tau, weights.normalize_scl);
        res.scl = tape.val(scl).data[0];
        // fold into the total below via the saved id
        pb.ids["__scl"] = scl;
    }

    // ---- frame-CL half: original vs pitch-perturbed conditioning
    int mask_sum = -1, fcl_sum = -1, svt_sum = -1;
    for (std::size_t i = 0; i < batch.frame_idx.size(); ++i) {
        const std::size_t idx = batch.frame_idx[i];
        const TokenSample& s = corpus.samples[idx];
        const double ratio = draw_ratio(plan, rng);
        SampleForward a = run_sample(tape, pb, cfg, s, s.regulated, s.acoustic, ratio,
                                     prefix, rng.next_u64());

        // mask prediction loss on the primary pass
        std::vector<int> mask_terms;
        for (int cb = 0; cb < cfg.n_codebooks; ++cb) {
            std::vector<Token> targets(s.acoustic.frames);
            for (std::size_t t = 0; t < s.acoustic.frames; ++t)
                targets[t] = s.acoustic.at(t, (std::size_t)cb);
            mask_terms.push_back(
                tape_masked_ce(tape, a.fwd.logits[(std::size_t)cb], targets, a.mask.mask));
        }
        int mloss = mask_terms[0];
        for (std::size_t k = 1; k < mask_terms.size(); ++k)
            mloss = tape.add(mloss, mask_terms[k]);
        mloss = tape.scale(mloss, 1.0 / (double)cfg.n_codebooks);
        mask_sum = mask_sum < 0 ? mloss : tape.add(mask_sum, mloss);

        if (want_fcl) {
            const PitchSeq perturbed = perturb_pitch(
                s.pitch, weights.perturb_fraction, weights.offset_bound, rng.next_u64());
            const RegulatedPitchSeq reg_b =
                regulate_pitch(perturbed, s.dur, s.acoustic.frames);
            SampleForward b = run_sample(tape, pb, cfg, s, reg_b, s.acoustic, ratio,
                                         prefix, rng.next_u64());
            const SoftLabelMatrix labels =
                build_soft_labels(s.regulated, reg_b, s.semantic, weights.alpha);
            const int fcl = tape_fcl(tape, a.fwd.frames, b.fwd.frames, labels);
            fcl_sum = fcl_sum < 0 ? fcl : tape.add(fcl_sum, fcl);
        }

        if (want_svt) {
            // soft tokens: probability-weighted SVT embeddings; SVT weights stay
            // frozen while gradients flow back into the S2A logits
            std::vector<int> soft;
            for (int cb = 0; cb < cfg.n_codebooks; ++cb) {
                const int probs = tape.softmax_rows(a.fwd.logits[(std::size_t)cb]);
                // append a zero column for the MASK row of the embedding table
                const int zero = tape.leaf(Matrix(s.acoustic.frames, 1));
                soft.push_back(tape.concat_cols({probs, zero}));
            }
            const int svt_logits = forward_svt(tape, svt_pb, svt.config,
                                               AcousticGrid(s.acoustic.frames,
                                                            (std::size_t)cfg.n_codebooks),
                                               &soft);
            const int ce = tape_ce(tape, svt_logits, s.regulated);
            const int probs = tape.softmax_rows(svt_logits);
            const int seg = tape_seg(tape, probs, s.regulated, weights.delta);
            const int dur = tape_dur(tape, probs, s.pitch, s.dur, s.acoustic.frames);
            const int total =
                tape.add(ce, tape.add(tape.scale(seg, weights.lambda_seg),
                                      tape.scale(dur, weights.lambda_dur)));
            svt_sum = svt_sum < 0 ? total : tape.add(svt_sum, total);
        }
    }

    const double inv_frames = 1.0 / (double)batch.frame_idx.size();
    mask_sum = tape.scale(mask_sum, inv_frames);
    res.mask = tape.val(mask_sum).data[0];

    int total = tape.scale(mask_sum, weights.lambda_mask);
    double cl_value = 0.0;
    if (want_fcl) {
        fcl_sum = tape.scale(fcl_sum, inv_frames);
        res.fcl = tape.val(fcl_sum).data[0];
    }
    if (want_scl || want_fcl) {
        int cl = -1;
        if (want_scl) cl = tape.scale(pb.ids["__scl"], weights.lambda_scl);
        if (want_fcl) {
            const int f = tape.scale(fcl_sum, weights.lambda_fcl);
            cl = cl < 0 ? f : tape.add(cl, f);
        }
        cl_value = tape.val(cl).data[0];
        total = tape.add(total, tape.scale(cl, weights.lambda_cl));
    }
    (void)cl_value;
    if (want_svt) {
        svt_sum = tape.scale(svt_sum, inv_frames);
        res.svt = tape.val(svt_sum).data[0];
        total = tape.add(total, tape.scale(svt_sum, weights.lambda_svt));
    }

    res.total = tape.val(total).data[0];
    if (!std::isfinite(res.total)) {
        throw std::runtime_error(
            "train_step: non-finite loss (mask=" + std::to_string(res.mask) +
            " scl=" + std::to_string(res.scl) + " fcl=" + std::to_string(res.fcl) +
            " svt=" + std::to_string(res.svt) + ")");
    }

    tape.backward(total);

    std::vector<AdamW::Update> updates;
    std::map<std::string, Matrix*> targets;
    ModelState& mutable_base = const_cast<ModelState&>(base);
    for (const std::string& name : trainable_names(base, tuning)) {
        Matrix* p = nullptr;
        if (name == "prefix.tokens") {
            p = &tuning.prefix;
        } else if (name.rfind("lora.", 0) == 0) {
            const bool is_down = name.size() > 5 && name.rfind(".down") == name.size() - 5;
            const std::string target =
                name.substr(5, name.size() - 5 - (is_down ? 5 : 3));
            auto& dm = tuning.lora.mats.at(target);
            p = is_down ? &dm.first : &dm.second;
        } else {
            p = &mutable_base.params.at(name);
        }
        updates.push_back({name, p, &tape.grad(pb.ids.at(name))});
    }
    opt.step(updates);
    return res;
}

AcousticGrid decode(const SemanticSeq& semantic, const RegulatedPitchSeq& regulated,
                    const AcousticGrid& prompt, const ModelState& base,
                    const S2aTuning* tuning, const DecodeConfig& cfg) {
    if (cfg.steps < 1) throw std::invalid_argument("decode: need at least one step");
    if (semantic.size() != regulated.size())
        throw std::invalid_argument("decode: conditioning length mismatch");
    const TransformerConfig& tc = base.config;
    const std::size_t frames = semantic.size();

    AcousticGrid grid(frames, (std::size_t)tc.n_codebooks, tc.mask_id());
    std::vector<char> masked(frames, 1);
    Rng rng(cfg.seed ^ 0xdec0deULL);

    for (int step = 1; step <= cfg.steps; ++step) {
        Tape tape;
        ParamBinding pb = bind_params(
            tape, base,
            tuning && tuning->strategy == FinetuneStrategy::lora ? &tuning->lora
                                                                 : nullptr);
        int prefix = -1;
        if (tuning && tuning->strategy == FinetuneStrategy::prefix)
            prefix = tape.leaf(tuning->prefix);
        const int cond = embed_condition(tape, pb, tc, semantic, regulated);
        const S2aForward fwd = forward_s2a(tape, pb, tc, grid, cond, prompt, prefix);

        // best token and mean log-probability per still-masked frame
        std::vector<double> confidence(frames, 0.0);
        std::vector<std::vector<Token>> best(frames);
        for (std::size_t t = 0; t < frames; ++t) {
            if (!masked[t]) continue;
            best[t].resize((std::size_t)tc.n_codebooks);
            for (int cb = 0; cb < tc.n_codebooks; ++cb) {
                const Matrix& logits = tape.val(fwd.logits[(std::size_t)cb]);
                double mx = logits.at(t, 0);
                std::size_t arg = 0;
                double lse = 0.0;
                for (std::size_t j = 1; j < logits.cols; ++j) {
                    if (logits.at(t, j) > mx) {
                        mx = logits.at(t, j);
                        arg = j;
                    }
                }
                for (std::size_t j = 0; j < logits.cols; ++j)
                    lse += std::exp(logits.at(t, j) - mx);
                confidence[t] += -std::log(lse);  // log p(argmax) up to the max term
                best[t][(std::size_t)cb] = (Token)arg;
            }
            confidence[t] /= (double)tc.n_codebooks;
            if (cfg.temperature > 0.0) {
                const double u = std::max(rng.uniform_real(), 1e-12);
                confidence[t] += cfg.temperature * (-std::log(-std::log(u)));
            }
        }

        // cosine schedule on how many frames stay masked after this round
        std::size_t remain =
            step == cfg.steps
                ? 0
                : (std::size_t)std::floor(
                      (double)frames *
                      std::cos(M_PI / 2.0 * (double)step / (double)cfg.steps));
        std::size_t currently_masked = 0;
        for (char m : masked) currently_masked += (std::size_t)m;
        if (remain >= currently_masked) remain = currently_masked > 0 ? currently_masked - 1 : 0;

        std::vector<std::size_t> idx;
        for (std::size_t t = 0; t < frames; ++t)
            if (masked[t]) idx.push_back(t);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            if (confidence[a] != confidence[b]) return confidence[a] > confidence[b];
            return a < b;
        });
        const std::size_t unmask_count = idx.size() - remain;
        for (std::size_t k = 0; k < unmask_count; ++k) {
            const std::size_t t = idx[k];
            masked[t] = 0;
            for (int cb = 0; cb < tc.n_codebooks; ++cb)
                grid.at(t, (std::size_t)cb) = best[t][(std::size_t)cb];
        }
        if (remain == 0) break;
    }
    return grid;
}

}  // namespace melctl
