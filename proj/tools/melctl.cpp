// melctl: corpus generation, SVT training, S2A fine-tuning, decoding, and
// evaluation as subcommands of one binary. Every subcommand reads a JSON
// config (unknown keys rejected), takes --seed/--out overrides, and writes
// its artifacts plus a manifest under the output directory.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "melctl/corpus.hpp"
#include "melctl/eval.hpp"
#include "melctl/net.hpp"
#include "melctl/s2a.hpp"
#include "melctl/svt.hpp"
#include "melctl/tensor.hpp"

using json = nlohmann::json;
using namespace melctl;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
    if (!j.is_object()) throw std::runtime_error("config section '" + where + "' must be an object");
    for (const auto& [key, v] : j.items()) {
        if (!allowed.count(key))
            throw std::runtime_error("unknown config key '" + key + "' in " + where);
    }
}

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    return json::parse(in);
}

WorldSpec parse_world(const json& j) {
    reject_unknown(j, {"v_sem", "v_aco", "n_codebooks", "n_singers", "pitch_low",
                       "pitch_high", "seed", "leak_strength"},
                   "world");
    WorldSpec w;
    w.v_sem = j.value("v_sem", w.v_sem);
    w.v_aco = j.value("v_aco", w.v_aco);
    w.n_codebooks = j.value("n_codebooks", w.n_codebooks);
    w.n_singers = j.value("n_singers", w.n_singers);
    w.pitch_low = j.value("pitch_low", w.pitch_low);
    w.pitch_high = j.value("pitch_high", w.pitch_high);
    w.seed = j.value("seed", w.seed);
    w.leak_strength = j.value("leak_strength", w.leak_strength);
    return w;
}

LossWeights parse_weights(const json& j) {
    reject_unknown(j, {"lambda_scl", "lambda_fcl", "lambda_cl", "lambda_seg",
                       "lambda_dur", "lambda_svt", "lambda_mask", "tau", "alpha",
                       "delta", "perturb_fraction", "offset_bound", "normalize_scl"},
                   "weights");
    LossWeights w;
    w.lambda_scl = j.value("lambda_scl", w.lambda_scl);
    w.lambda_fcl = j.value("lambda_fcl", w.lambda_fcl);
    w.lambda_cl = j.value("lambda_cl", w.lambda_cl);
    w.lambda_seg = j.value("lambda_seg", w.lambda_seg);
    w.lambda_dur = j.value("lambda_dur", w.lambda_dur);
    w.lambda_svt = j.value("lambda_svt", w.lambda_svt);
    w.lambda_mask = j.value("lambda_mask", w.lambda_mask);
    w.tau = j.value("tau", w.tau);
    w.alpha = j.value("alpha", w.alpha);
    w.delta = j.value("delta", w.delta);
    w.perturb_fraction = j.value("perturb_fraction", w.perturb_fraction);
    w.offset_bound = j.value("offset_bound", w.offset_bound);
    w.normalize_scl = j.value("normalize_scl", w.normalize_scl);
    w.validate();
    return w;
}

BatchPlan parse_plan(const json& j) {
    reject_unknown(j, {"k_total", "k_seq", "mask_ratio_min", "mask_ratio_max"}, "plan");
    BatchPlan p;
    p.k_total = j.value("k_total", p.k_total);
    p.k_seq = j.value("k_seq", p.k_seq);
    p.mask_ratio_min = j.value("mask_ratio_min", p.mask_ratio_min);
    p.mask_ratio_max = j.value("mask_ratio_max", p.mask_ratio_max);
    p.validate();
    return p;
}

TransformerConfig parse_preset(const std::string& name) {
    if (name == "s2a-toy") return s2a_toy_config();
    if (name == "svt-toy") return svt_toy_config();
    if (name == "svt-paper") return svt_paper_config();
    throw std::runtime_error("unknown model preset: " + name);
}

// FNV-1a over the float32 serialization of every parameter; matches what a
// byte hash of the checkpoint blobs would see.
std::string state_hash(const ModelState& state) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix_bytes = [&h](const void* p, std::size_t n) {
        const unsigned char* b = (const unsigned char*)p;
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [name, m] : state.params) {
        mix_bytes(name.data(), name.size());
        for (double v : m.data) {
            const float f = (float)v;
            mix_bytes(&f, sizeof f);
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return buf;
}

struct Ablation {
    S2aStepOptions opts;
    bool no_cl = false;
};

Ablation parse_ablation(const std::string& name) {
    Ablation a;
    if (name.empty() || name == "full") return a;
    std::string rest = name;
    while (!rest.empty()) {
        const std::size_t plus = rest.find('+');
        const std::string part = rest.substr(0, plus);
        if (part == "no_cl") {
            a.no_cl = a.opts.no_scl = a.opts.no_fcl = true;
        } else if (part == "no_scl") {
            a.opts.no_scl = true;
        } else if (part == "no_fcl") {
            a.opts.no_fcl = true;
        } else if (part == "no_svt") {
            a.opts.no_svt = true;
        } else {
            throw std::runtime_error("unknown ablation switch: " + part);
        }
        rest = plus == std::string::npos ? "" : rest.substr(plus + 1);
    }
    return a;
}

// Adapter matrices travel as a sibling checkpoint so the base stays loadable
// on its own.
void save_tuning(const S2aTuning& tuning, const TransformerConfig& cfg,
                 const std::string& dir) {
    fs::create_directories(dir);
    json meta;
    meta["strategy"] = to_string(tuning.strategy);
    meta["lora_rank"] = tuning.lora.rank;
    meta["lora_alpha"] = tuning.lora.alpha;
    std::ofstream(dir + "/tuning.json") << meta.dump(2) << "\n";

    ModelState extra;
    extra.config = cfg;
    if (tuning.strategy == FinetuneStrategy::lora) {
        for (const auto& [target, dm] : tuning.lora.mats) {
            extra.params["lora." + target + ".down"] = dm.first;
            extra.params["lora." + target + ".up"] = dm.second;
        }
    } else if (tuning.strategy == FinetuneStrategy::prefix) {
        extra.params["prefix.tokens"] = tuning.prefix;
    }
    if (!extra.params.empty()) save_checkpoint(extra, dir + "/adapters");
}

S2aTuning load_tuning(const ModelState& base, const std::string& dir) {
    std::ifstream in(dir + "/tuning.json");
    if (!in) throw std::runtime_error("missing tuning manifest in " + dir);
    json meta = json::parse(in);
    S2aTuning t = make_tuning(base, strategy_from_string(meta.at("strategy")),
                              meta.at("lora_rank"), meta.at("lora_alpha"),
                              /*seed=*/0);
    if (t.strategy == FinetuneStrategy::lora || t.strategy == FinetuneStrategy::prefix) {
        const ModelState extra = load_checkpoint(dir + "/adapters");
        if (t.strategy == FinetuneStrategy::prefix) {
            t.prefix = extra.params.at("prefix.tokens");
        } else {
            for (auto& [target, dm] : t.lora.mats) {
                dm.first = extra.params.at("lora." + target + ".down");
                dm.second = extra.params.at("lora." + target + ".up");
            }
        }
    }
    return t;
}

// ---------------------------------------------------------------------------

int cmd_gen_corpus(const json& cfg, std::uint64_t seed, const std::string& out) {
    reject_unknown(cfg, {"world", "groups_per_singer", "group_size", "singles_per_singer",
                         "notes", "frames", "heldout_singers"},
                   "gen-corpus config");
    WorldSpec world = parse_world(cfg.value("world", json::object()));
    world.seed = seed ? seed : world.seed;
    const int groups_per_singer = cfg.value("groups_per_singer", 2);
    const int group_size = cfg.value("group_size", 4);
    const int singles_per_singer = cfg.value("singles_per_singer", 4);
    const std::size_t notes = cfg.value("notes", 8);
    const std::size_t frames = cfg.value("frames", 32);
    const int heldout_singers = cfg.value("heldout_singers", 1);

    if (heldout_singers >= world.n_singers)
        throw std::runtime_error("zero-shot split needs more singers than are held out");
    if (heldout_singers > 0 && world.n_singers < 2)
        throw std::runtime_error("zero-shot split requires at least two singers");

    std::vector<TokenSample> train, heldout;
    Rng rng(world.seed ^ 0xc0a9ULL);
    int group_id = 0;
    for (int singer = 0; singer < world.n_singers; ++singer) {
        auto& dst = singer >= world.n_singers - heldout_singers ? heldout : train;
        for (int g = 0; g < groups_per_singer; ++g) {
            auto grp = gen_group(world, notes, frames, singer, (std::size_t)group_size,
                                 group_id++, rng.next_u64());
            for (auto& s : grp) dst.push_back(std::move(s));
        }
        for (int k = 0; k < singles_per_singer; ++k)
            dst.push_back(gen_sample(world, notes, frames, singer, rng.next_u64()));
    }

    fs::create_directories(out);
    write_corpus(train, world, out + "/train.jsonl");
    write_corpus(heldout, world, out + "/heldout.jsonl");

    json manifest;
    manifest["world"] = {{"v_sem", world.v_sem},
                         {"v_aco", world.v_aco},
                         {"n_codebooks", world.n_codebooks},
                         {"n_singers", world.n_singers},
                         {"pitch_low", world.pitch_low},
                         {"pitch_high", world.pitch_high},
                         {"seed", world.seed},
                         {"leak_strength", world.leak_strength}};
    manifest["train_samples"] = train.size();
    manifest["heldout_samples"] = heldout.size();
    manifest["heldout_singers"] = heldout_singers;
    std::ofstream(out + "/manifest.json") << manifest.dump(2) << "\n";
    std::cout << "wrote " << train.size() << " train / " << heldout.size()
              << " heldout samples to " << out << "\n";
    return 0;
}

int cmd_train_svt(const json& cfg, std::uint64_t seed, const std::string& out) {
    reject_unknown(cfg, {"corpus", "preset", "epochs", "lr", "weight_decay",
                         "heldout_fraction", "ce_only", "weights"},
                   "train-svt config");
    const Corpus corpus = read_corpus(cfg.at("corpus"));
    TransformerConfig tc = parse_preset(cfg.value("preset", "svt-toy"));
    tc.v_aco = corpus.spec.v_aco;
    tc.n_codebooks = corpus.spec.n_codebooks;
    tc.v_sem = corpus.spec.v_sem;
    const LossWeights weights = parse_weights(cfg.value("weights", json::object()));

    SvtTrainOptions opts;
    opts.epochs = cfg.value("epochs", opts.epochs);
    opts.lr = cfg.value("lr", opts.lr);
    opts.weight_decay = cfg.value("weight_decay", opts.weight_decay);
    opts.heldout_fraction = cfg.value("heldout_fraction", opts.heldout_fraction);
    opts.ce_only = cfg.value("ce_only", false);
    opts.seed = seed;
    fs::create_directories(out);
    opts.log_csv = out + "/svt_log.csv";

    const SvtCheckpoint ckpt = train_svt(corpus, tc, weights, opts);
    save_checkpoint(ckpt.state, out + "/svt");

    json manifest;
    manifest["corpus_hash"] = ckpt.corpus_hash;
    manifest["heldout_accuracy"] = ckpt.heldout_accuracy;
    manifest["final_ce"] = ckpt.final_ce;
    manifest["final_seg"] = ckpt.final_seg;
    manifest["final_dur"] = ckpt.final_dur;
    manifest["checkpoint_hash"] = state_hash(ckpt.state);
    std::ofstream(out + "/svt_manifest.json") << manifest.dump(2) << "\n";
    std::cout << "svt heldout accuracy " << ckpt.heldout_accuracy << ", checkpoint "
              << out << "/svt\n";
    return 0;
}

int cmd_train_s2a(const json& cfg, std::uint64_t seed, const std::string& out,
                  const std::string& ablation_flag) {
    reject_unknown(cfg, {"corpus", "preset", "steps", "lr", "strategy", "lora_rank",
                         "lora_alpha", "prefix_tokens", "svt_checkpoint", "weights",
                         "plan", "ablation", "warmup_steps"},
                   "train-s2a config");
    const Corpus corpus = read_corpus(cfg.at("corpus"));
    TransformerConfig tc = parse_preset(cfg.value("preset", "s2a-toy"));
    tc.v_aco = corpus.spec.v_aco;
    tc.n_codebooks = corpus.spec.n_codebooks;
    tc.v_sem = corpus.spec.v_sem;
    LossWeights weights = parse_weights(cfg.value("weights", json::object()));
    const BatchPlan plan = parse_plan(cfg.value("plan", json::object()));
    const int steps = cfg.value("steps", 50);

    const Ablation ab =
        parse_ablation(!ablation_flag.empty() ? ablation_flag : cfg.value("ablation", ""));
    if (ab.no_cl) weights.lambda_cl = 0.0;

    ModelState svt;
    svt.config = tc;
    if (!ab.opts.no_svt) {
        if (!cfg.contains("svt_checkpoint"))
            throw std::runtime_error("train-s2a needs svt_checkpoint unless no_svt is set");
        svt = load_checkpoint(cfg.at("svt_checkpoint"));
    }

    ModelState base = init_s2a_state(tc, seed);
    S2aTuning tuning = make_tuning(
        base, strategy_from_string(cfg.value("strategy", "lora")),
        cfg.value("lora_rank", 8), cfg.value("lora_alpha", 16.0), seed ^ 0x10aULL,
        cfg.value("prefix_tokens", 20));

    AdamWConfig ocfg;
    ocfg.lr = cfg.value("lr", 1e-3);
    ocfg.warmup_steps = cfg.value("warmup_steps", 0);
    AdamW opt(ocfg);

    fs::create_directories(out);
    std::ofstream log(out + "/s2a_log.csv");
    log << "step,mask,scl,fcl,svt,total\n";

    Rng rng(seed ^ 0x52aULL);
    for (int step = 0; step < steps; ++step) {
        const TrainBatch batch = plan_batch(corpus, plan, rng.next_u64());
        const StepResult r = train_step(corpus, batch, base, tuning, svt, weights, plan,
                                        ab.opts, opt, rng.next_u64());
        log << step << "," << r.mask << "," << r.scl << "," << r.fcl << "," << r.svt
            << "," << r.total << "\n";
    }
    base.step = steps;

    save_checkpoint(base, out + "/s2a/base");
    save_tuning(tuning, tc, out + "/s2a");

    json manifest;
    manifest["steps"] = steps;
    manifest["strategy"] = to_string(tuning.strategy);
    manifest["trainable_params"] = tuning.trainable_params(base);
    manifest["checkpoint_hash"] = state_hash(base);
    manifest["corpus_hash"] = corpus_fingerprint(corpus);
    std::ofstream(out + "/s2a_manifest.json") << manifest.dump(2) << "\n";
    std::cout << "s2a trained " << steps << " steps (" << to_string(tuning.strategy)
              << "), checkpoint " << out << "/s2a\n";
    return 0;
}

// picks a prompt source by the same singer, preferring a different utterance
std::size_t other_prompt_index(const Corpus& corpus, std::size_t idx, Rng& rng) {
    std::vector<std::size_t> cands;
    for (std::size_t j = 0; j < corpus.samples.size(); ++j)
        if (j != idx && corpus.samples[j].singer_id == corpus.samples[idx].singer_id)
            cands.push_back(j);
    if (cands.empty()) return idx;
    return cands[(std::size_t)rng.uniform(cands.size())];
}

int cmd_decode(const json& cfg, std::uint64_t seed, const std::string& out) {
    reject_unknown(cfg, {"corpus", "model", "steps", "temperature", "n_samples"},
                   "decode config");
    const Corpus corpus = read_corpus(cfg.at("corpus"));
    const std::string model_dir = cfg.at("model");
    const ModelState base = load_checkpoint(model_dir + "/base");
    const S2aTuning tuning = load_tuning(base, model_dir);
    const WorldCodec codec(corpus.spec);

    DecodeConfig dc;
    dc.steps = cfg.value("steps", dc.steps);
    dc.temperature = cfg.value("temperature", dc.temperature);

    std::size_t n = corpus.samples.size();
    if (cfg.contains("n_samples")) n = std::min<std::size_t>(n, cfg.at("n_samples"));

    fs::create_directories(out);
    std::ofstream os(out + "/decoded.jsonl");
    Rng rng(seed ^ 0xdecULL);
    for (std::size_t i = 0; i < n; ++i) {
        const TokenSample& s = corpus.samples[i];
        const std::size_t src = other_prompt_index(corpus, i, rng);
        const AcousticGrid prompt =
            prompt_gen(corpus.samples[src].acoustic, s.acoustic.frames, rng.next_u64());
        dc.seed = rng.next_u64();
        const AcousticGrid grid =
            decode(s.semantic, s.regulated, prompt, base, &tuning, dc);
        const WorldCodec::Decoded oracle = codec.decode(grid);

        json rec;
        rec["index"] = i;
        rec["frames"] = grid.frames;
        rec["codes"] = grid.codes;
        rec["oracle"] = {{"semantic", oracle.semantic},
                         {"regulated", oracle.regulated},
                         {"singer", oracle.singer}};
        os << rec.dump() << "\n";
    }
    json manifest;
    manifest["samples"] = n;
    manifest["corpus_hash"] = corpus_fingerprint(corpus);
    std::ofstream(out + "/decode_manifest.json") << manifest.dump(2) << "\n";
    std::cout << "decoded " << n << " samples to " << out << "/decoded.jsonl\n";
    return 0;
}

int cmd_eval(const json& cfg, std::uint64_t seed, const std::string& out) {
    reject_unknown(cfg, {"corpus", "decoded", "model", "leakage", "thresholds"},
                   "eval config");
    const Corpus corpus = read_corpus(cfg.at("corpus"));
    const WorldCodec codec(corpus.spec);

    // per-sample metrics against the decoded grids
    std::ifstream in(std::string(cfg.at("decoded")) + "/decoded.jsonl");
    if (!in) throw std::runtime_error("missing decode output: " +
                                      std::string(cfg.at("decoded")));
    fs::create_directories(out);
    std::ofstream csv(out + "/metrics.csv");
    csv << "index,pitch_accuracy,f0_rmse,spectral_distance\n";

    double acc_sum = 0.0, rmse_sum = 0.0, dist_sum = 0.0;
    std::size_t n = 0, rmse_n = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json rec = json::parse(line);
        const std::size_t i = rec.at("index");
        const TokenSample& ref = corpus.samples.at(i);
        AcousticGrid grid(ref.acoustic.frames, ref.acoustic.codebooks);
        grid.codes = rec.at("codes").get<std::vector<Token>>();

        WorldCodec::Decoded dec = codec.decode(grid);
        for (Token& p : dec.regulated)
            if (p == kUnknown) p = kRest;
        const double acc = pitch_frame_accuracy(dec.regulated, ref.regulated);
        const double dist = spectral_distance(grid, ref.acoustic, corpus.spec);
        double rmse = 0.0;
        bool have_rmse = false;
        const ContourPair cp = contours_of_grid(grid, codec, ref.singer_id);
        const ContourPair cr = contours_from_fields(ref.regulated, ref.semantic,
                                                    ref.singer_id, corpus.spec);
        try {
            rmse = f0_rmse(cp.f0, cr.f0);
            have_rmse = true;
        } catch (const std::invalid_argument&) {
        }
        csv << i << "," << acc << "," << (have_rmse ? rmse : -1.0) << "," << dist << "\n";
        acc_sum += acc;
        dist_sum += dist;
        if (have_rmse) {
            rmse_sum += rmse;
            ++rmse_n;
        }
        ++n;
    }
    if (n == 0) throw std::runtime_error("eval: decode output is empty");
    const double mean_acc = acc_sum / (double)n;
    const double mean_rmse = rmse_n ? rmse_sum / (double)rmse_n : -1.0;
    const double mean_dist = dist_sum / (double)n;

    json summary;
    summary["samples"] = n;
    summary["pitch_accuracy"] = mean_acc;
    summary["f0_rmse"] = mean_rmse;
    summary["spectral_distance"] = mean_dist;

    if (cfg.contains("leakage") && cfg.at("leakage").value("enabled", false)) {
        const json& lk = cfg.at("leakage");
        reject_unknown(lk, {"enabled", "model", "steps", "permutations"}, "eval.leakage");
        const std::string model_dir = lk.at("model");
        const ModelState base = load_checkpoint(model_dir + "/base");
        const S2aTuning tuning = load_tuning(base, model_dir);
        DecodeConfig dc;
        dc.steps = lk.value("steps", dc.steps);
        const SynthFn synth = [&](const TokenSample& target, const AcousticGrid& prompt,
                                  std::uint64_t s) {
            DecodeConfig d = dc;
            d.seed = s;
            return decode(target.semantic, target.regulated, prompt, base, &tuning, d);
        };
        const LeakageReport rep =
            leakage_report(corpus, synth, seed, lk.value("permutations", 10000));
        std::ofstream(out + "/leakage.txt") << rep.table_text();
        std::ofstream(out + "/leakage.csv") << rep.csv();
        summary["leakage_gap_pitch_mean"] = rep.gap_pitch_mean;
        summary["leakage_p_pitch_mean"] = rep.p_pitch_mean;
    }

    int rc = 0;
    if (cfg.contains("thresholds")) {
        const json& th = cfg.at("thresholds");
        reject_unknown(th, {"min_pitch_accuracy", "max_f0_rmse", "max_spectral_distance"},
                       "eval.thresholds");
        if (th.contains("min_pitch_accuracy") &&
            mean_acc < (double)th.at("min_pitch_accuracy")) {
            std::cerr << "threshold violated: pitch_accuracy " << mean_acc << " < "
                      << th.at("min_pitch_accuracy") << "\n";
            rc = 2;
        }
        if (th.contains("max_f0_rmse") && mean_rmse >= 0.0 &&
            mean_rmse > (double)th.at("max_f0_rmse")) {
            std::cerr << "threshold violated: f0_rmse " << mean_rmse << " > "
                      << th.at("max_f0_rmse") << "\n";
            rc = 2;
        }
        if (th.contains("max_spectral_distance") &&
            mean_dist > (double)th.at("max_spectral_distance")) {
            std::cerr << "threshold violated: spectral_distance " << mean_dist << " > "
                      << th.at("max_spectral_distance") << "\n";
            rc = 2;
        }
    }

    std::ofstream(out + "/summary.json") << summary.dump(2) << "\n";
    std::cout << "pitch_accuracy " << mean_acc << ", f0_rmse " << mean_rmse
              << ", spectral_distance " << mean_dist << "\n";
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* env = std::getenv("MELCTL_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) set_thread_cap(n);
    }

    CLI::App app{"melody-controlled token synthesis toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir, ablation;
    std::uint64_t seed = 1;
    app.add_option("--config", config_path, "JSON config file")->required();
    app.add_option("--seed", seed, "master seed");
    app.add_option("--out", out_dir, "output directory")->required();
    app.add_option("--ablation", ablation,
                   "ablation switches, e.g. no_cl or no_cl+no_svt");

    auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic token corpus");
    auto* tsvt = app.add_subcommand("train-svt", "train the pitch transcription model");
    auto* ts2a = app.add_subcommand("train-s2a", "fine-tune the acoustic model");
    auto* dec = app.add_subcommand("decode", "iterative parallel decoding");
    auto* ev = app.add_subcommand("eval", "metrics and leakage report");
    for (CLI::App* s : {gen, tsvt, ts2a, dec, ev}) s->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        const json cfg = load_config(config_path);
        if (gen->parsed()) return cmd_gen_corpus(cfg, seed, out_dir);
        if (tsvt->parsed()) return cmd_train_svt(cfg, seed, out_dir);
        if (ts2a->parsed()) return cmd_train_s2a(cfg, seed, out_dir, ablation);
        if (dec->parsed()) return cmd_decode(cfg, seed, out_dir);
        if (ev->parsed()) return cmd_eval(cfg, seed, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
