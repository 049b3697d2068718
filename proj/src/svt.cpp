#include "melctl/svt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "melctl/optim.hpp"

namespace melctl {

namespace {

double heldout_accuracy(const ModelState& state, const Corpus& corpus,
                        std::size_t first_heldout) {
    std::size_t hit = 0, total = 0;
    for (std::size_t i = first_heldout; i < corpus.samples.size(); ++i) {
        const TokenSample& s = corpus.samples[i];
        const auto [pred, probs] = transcribe(state, s.acoustic);
        for (std::size_t t = 0; t < pred.size(); ++t) {
            if (s.regulated[t] == kPad) continue;
            ++total;
            if (pred[t] == s.regulated[t]) ++hit;
        }
    }
    return total == 0 ? 0.0 : (double)hit / (double)total;
}

}  // namespace

std::string corpus_fingerprint(const Corpus& corpus) {
    // FNV-1a over the integer content; cheap but stable across runs
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](long long v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (std::uint64_t)(v >> (8 * i)) & 0xff;
            h *= 1099511628211ULL;
        }
    };
    mix((long long)corpus.samples.size());
    mix((long long)corpus.spec.seed);
    for (const TokenSample& s : corpus.samples) {
        for (Token t : s.semantic) mix(t);
        for (Token t : s.pitch) mix(t);
        for (int d : s.dur) mix(d);
        for (Token t : s.acoustic.codes) mix(t);
        mix(s.singer_id);
        mix(s.group_id);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return std::string(buf);
}

SvtCheckpoint train_svt(const Corpus& corpus, const TransformerConfig& cfg,
                        const LossWeights& weights, const SvtTrainOptions& opts) {
    weights.validate();
    if (corpus.samples.empty()) throw std::invalid_argument("train_svt: empty corpus");
    for (const TokenSample& s : corpus.samples) {
        if (s.acoustic.codebooks != (std::size_t)cfg.n_codebooks)
            throw std::invalid_argument("train_svt: corpus codebook count mismatch");
    }

    SvtCheckpoint ckpt;
    ckpt.state = init_svt_state(cfg, opts.seed);
    ckpt.corpus_hash = corpus_fingerprint(corpus);

    const std::size_t n = corpus.samples.size();
    std::size_t first_heldout =
        n - (std::size_t)std::floor(opts.heldout_fraction * (double)n);
    if (first_heldout == 0) first_heldout = 1;

    AdamWConfig ocfg;
    ocfg.lr = opts.lr;
    ocfg.weight_decay = opts.weight_decay;
    AdamW opt(ocfg);

    std::ofstream log;
    if (!opts.log_csv.empty()) {
        log.open(opts.log_csv);
        if (!log) throw std::runtime_error("cannot open log: " + opts.log_csv);
        log << "epoch,ce,seg,dur,total,heldout_acc\n";
    }

    Rng order_rng(opts.seed ^ 0x0de7e881ULL);
    std::vector<std::size_t> order(first_heldout);
    for (std::size_t i = 0; i < first_heldout; ++i) order[i] = i;

    long long step = 0;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[(std::size_t)order_rng.uniform(i)]);

        double ep_ce = 0.0, ep_seg = 0.0, ep_dur = 0.0;
        for (std::size_t idx : order) {
            const TokenSample& s = corpus.samples[idx];
            Tape tape;
            ParamBinding pb = bind_params(tape, ckpt.state, nullptr);
            const int logits = forward_svt(tape, pb, cfg, s.acoustic);
            const int ce = tape_ce(tape, logits, s.regulated);
            int total = ce;
            double seg_v = 0.0, dur_v = 0.0;
            if (!opts.ce_only) {
                const int probs = tape.softmax_rows(logits);
                const int seg = tape_seg(tape, probs, s.regulated, weights.delta);
                const int dur =
                    tape_dur(tape, probs, s.pitch, s.dur, s.acoustic.frames);
                seg_v = tape.val(seg).data[0];
                dur_v = tape.val(dur).data[0];
                total = tape.add(total, tape.add(tape.scale(seg, weights.lambda_seg),
                                                 tape.scale(dur, weights.lambda_dur)));
            }
            const double total_v = tape.val(total).data[0];
            if (!std::isfinite(total_v))
                throw std::runtime_error("train_svt diverged at step " +
                                         std::to_string(step));
            ep_ce += tape.val(ce).data[0];
            ep_seg += seg_v;
            ep_dur += dur_v;

            tape.backward(total);
            std::vector<AdamW::Update> updates;
            for (auto& [name, m] : ckpt.state.params)
                updates.push_back({name, &m, &tape.grad(pb.ids.at(name))});
            opt.step(updates);
            ++step;
        }

        const double inv = order.empty() ? 0.0 : 1.0 / (double)order.size();
        ckpt.final_ce = ep_ce * inv;
        ckpt.final_seg = ep_seg * inv;
        ckpt.final_dur = ep_dur * inv;
        ckpt.heldout_accuracy = heldout_accuracy(ckpt.state, corpus, first_heldout);
        if (log) {
            log << epoch << "," << ckpt.final_ce << "," << ckpt.final_seg << ","
                << ckpt.final_dur << ","
                << svt_total(ckpt.final_ce, ckpt.final_seg, ckpt.final_dur, weights) << ","
                << ckpt.heldout_accuracy << "\n";
        }
    }
    if (opts.epochs == 0)
        ckpt.heldout_accuracy = heldout_accuracy(ckpt.state, corpus, first_heldout);
    ckpt.state.step = step;
    return ckpt;
}

std::pair<RegulatedPitchSeq, Matrix> transcribe(const ModelState& svt,
                                                const AcousticGrid& grid) {
    if (grid.codebooks != (std::size_t)svt.config.n_codebooks)
        throw std::invalid_argument("transcribe: codebook count mismatch");
    Tape tape;
    ParamBinding pb = bind_params(tape, svt, nullptr);
    const int logits = forward_svt(tape, pb, svt.config, grid);
    const int probs = tape.softmax_rows(logits);
    const Matrix& p = tape.val(probs);
    RegulatedPitchSeq out(grid.frames);
    for (std::size_t t = 0; t < grid.frames; ++t) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < p.cols; ++j)
            if (p.at(t, j) > p.at(t, best)) best = j;  // ties keep the lowest index
        out[t] = (Token)best;
    }
    return {out, p};
}

std::size_t count_pitch_runs(const RegulatedPitchSeq& seq) {
    if (seq.empty()) return 0;
    std::size_t runs = 1;
    for (std::size_t t = 1; t < seq.size(); ++t)
        if (seq[t] != seq[t - 1]) ++runs;
    return runs;
}

}  // namespace melctl
