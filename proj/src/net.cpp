#include "melctl/net.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace melctl {

using nlohmann::json;

void TransformerConfig::validate() const {
    if (layers < 1 || dim < 1 || heads < 1 || ffn_dim < 1 || max_len < 1)
        throw std::invalid_argument("transformer config fields must be positive");
    if (dim % heads != 0)
        throw std::invalid_argument("hidden dim must be divisible by heads");
    if (v_sem < 1 || v_aco < 1 || n_codebooks < 1 || pitch_vocab < 1)
        throw std::invalid_argument("vocabulary sizes must be positive");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("dropout must be in [0,1)");
}

TransformerConfig s2a_toy_config() {
    TransformerConfig c;
    c.layers = 4;
    c.dim = 64;
    c.heads = 4;
    c.ffn_dim = 256;
    return c;
}

TransformerConfig svt_toy_config() {
    TransformerConfig c;
    c.layers = 4;
    c.dim = 64;
    c.heads = 4;
    c.ffn_dim = 256;
    return c;
}

TransformerConfig svt_paper_config() {
    TransformerConfig c;
    c.layers = 4;
    c.dim = 512;
    c.heads = 8;
    c.ffn_dim = 2048;
    c.n_codebooks = 12;
    return c;
}

namespace {

Matrix randn(std::size_t r, std::size_t c, Rng& rng, double std_dev = 0.02) {
    Matrix m(r, c);
    for (double& x : m.data) x = std_dev * rng.normal();
    return m;
}

int svt_sub_dim(const TransformerConfig& cfg) {
    const int sub = (cfg.dim + cfg.n_codebooks / 2) / cfg.n_codebooks;
    return sub < 1 ? 1 : sub;
}

void init_layers(ModelState& s, const TransformerConfig& cfg, Rng& rng) {
    for (int i = 0; i < cfg.layers; ++i) {
        const std::string p = "layer." + std::to_string(i) + ".";
        s.params[p + "ln1.g"] = Matrix(1, (std::size_t)cfg.dim, 1.0);
        s.params[p + "ln1.b"] = Matrix(1, (std::size_t)cfg.dim);
        s.params[p + "attn.wq"] = randn((std::size_t)cfg.dim, (std::size_t)cfg.dim, rng);
        s.params[p + "attn.wk"] = randn((std::size_t)cfg.dim, (std::size_t)cfg.dim, rng);
        s.params[p + "attn.wv"] = randn((std::size_t)cfg.dim, (std::size_t)cfg.dim, rng);
        s.params[p + "attn.wo"] = randn((std::size_t)cfg.dim, (std::size_t)cfg.dim, rng);
        s.params[p + "ln2.g"] = Matrix(1, (std::size_t)cfg.dim, 1.0);
        s.params[p + "ln2.b"] = Matrix(1, (std::size_t)cfg.dim);
        s.params[p + "ffn.w1"] = randn((std::size_t)cfg.dim, (std::size_t)cfg.ffn_dim, rng);
        s.params[p + "ffn.b1"] = Matrix(1, (std::size_t)cfg.ffn_dim);
        s.params[p + "ffn.w2"] = randn((std::size_t)cfg.ffn_dim, (std::size_t)cfg.dim, rng);
        s.params[p + "ffn.b2"] = Matrix(1, (std::size_t)cfg.dim);
    }
    s.params["final.ln.g"] = Matrix(1, (std::size_t)cfg.dim, 1.0);
    s.params["final.ln.b"] = Matrix(1, (std::size_t)cfg.dim);
}

}  // namespace

ModelState init_s2a_state(const TransformerConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelState s;
    s.config = cfg;
    s.seed = seed;
    Rng rng(seed ^ 0x52a0c0defULL);
    s.params["emb.sem"] =
        randn((std::size_t)cfg.v_sem + 1, (std::size_t)cfg.dim, rng);
    s.params["emb.pitch"] = randn((std::size_t)cfg.pitch_vocab, (std::size_t)cfg.dim, rng);
    for (int cb = 0; cb < cfg.n_codebooks; ++cb)
        s.params["emb.aco." + std::to_string(cb)] =
            randn((std::size_t)cfg.v_aco + 1, (std::size_t)cfg.dim, rng);
    s.params["emb.segment"] = randn(2, (std::size_t)cfg.dim, rng);
    init_layers(s, cfg, rng);
    for (int cb = 0; cb < cfg.n_codebooks; ++cb) {
        s.params["head.aco." + std::to_string(cb) + ".w"] =
            randn((std::size_t)cfg.dim, (std::size_t)cfg.v_aco, rng);
        s.params["head.aco." + std::to_string(cb) + ".b"] =
            Matrix(1, (std::size_t)cfg.v_aco);
    }
    return s;
}

ModelState init_svt_state(const TransformerConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelState s;
    s.config = cfg;
    s.seed = seed;
    Rng rng(seed ^ 0x57Fc0defULL);
    const int sub = svt_sub_dim(cfg);
    for (int cb = 0; cb < cfg.n_codebooks; ++cb)
        s.params["emb.aco." + std::to_string(cb)] =
            randn((std::size_t)cfg.v_aco + 1, (std::size_t)sub, rng);
    s.params["in.proj.w"] =
        randn((std::size_t)(cfg.n_codebooks * sub), (std::size_t)cfg.dim, rng);
    s.params["in.proj.b"] = Matrix(1, (std::size_t)cfg.dim);
    s.params["in.ln.g"] = Matrix(1, (std::size_t)cfg.dim, 1.0);
    s.params["in.ln.b"] = Matrix(1, (std::size_t)cfg.dim);
    init_layers(s, cfg, rng);
    s.params["head.pitch.w"] = randn((std::size_t)cfg.dim, (std::size_t)cfg.pitch_vocab, rng);
    s.params["head.pitch.b"] = Matrix(1, (std::size_t)cfg.pitch_vocab);
    return s;
}

std::size_t LoraAdapters::trainable_params() const {
    std::size_t n = 0;
    for (const auto& [name, dm] : mats) n += dm.first.size() + dm.second.size();
    return n;
}

std::vector<std::string> lora_attention_targets(const TransformerConfig& cfg) {
    std::vector<std::string> t;
    for (int i = 0; i < cfg.layers; ++i) {
        const std::string p = "layer." + std::to_string(i) + ".attn.";
        for (const char* w : {"wq", "wk", "wv", "wo"}) t.push_back(p + w);
    }
    return t;
}

LoraAdapters make_lora(const ModelState& state, const std::vector<std::string>& targets,
                       int rank, double alpha, std::uint64_t seed) {
    if (rank < 1) throw std::invalid_argument("lora rank must be >= 1");
    LoraAdapters out;
    out.rank = rank;
    out.alpha = alpha;
    Rng rng(seed ^ 0x10aaULL);
    for (const std::string& name : targets) {
        auto it = state.params.find(name);
        if (it == state.params.end())
            throw std::invalid_argument("lora target not in registry: " + name);
        const Matrix& w = it->second;
        Matrix down = randn(w.rows, (std::size_t)rank, rng, 1.0 / std::sqrt((double)rank));
        Matrix up((std::size_t)rank, w.cols);  // zero so the adapted model starts at base
        out.mats[name] = {std::move(down), std::move(up)};
    }
    return out;
}

Matrix lora_apply(const Matrix& base, const Matrix& down, const Matrix& up, double alpha,
                  int rank) {
    check_shape(down.rows == base.rows && up.cols == base.cols && down.cols == up.rows &&
                    down.cols == (std::size_t)rank,
                "lora_apply");
    Matrix delta(base.rows, base.cols);
    matmul(down, up, delta);
    Matrix out = base;
    const double s = alpha / (double)rank;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += s * delta.data[i];
    return out;
}

ModelState lora_merge(const ModelState& state, const LoraAdapters& adapters) {
    ModelState out = state;
    for (const auto& [name, dm] : adapters.mats)
        out.params[name] = lora_apply(state.params.at(name), dm.first, dm.second,
                                      adapters.alpha, adapters.rank);
    return out;
}

int ParamBinding::operator()(const std::string& name) const {
    auto e = eff.find(name);
    if (e != eff.end()) return e->second;
    auto it = ids.find(name);
    if (it == ids.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
}

ParamBinding bind_params(Tape& tape, const ModelState& state, const LoraAdapters* lora) {
    ParamBinding pb;
    pb.tape = &tape;
    for (const auto& [name, m] : state.params) pb.ids[name] = tape.leaf(m);
    if (lora) {
        const double s = lora->alpha / (double)lora->rank;
        for (const auto& [name, dm] : lora->mats) {
            const int down = tape.leaf(dm.first);
            const int up = tape.leaf(dm.second);
            pb.ids["lora." + name + ".down"] = down;
            pb.ids["lora." + name + ".up"] = up;
            pb.eff[name] = tape.add(pb.ids[name], tape.scale(tape.matmul(down, up), s));
        }
    }
    return pb;
}

MaskResult mask_tokens(const AcousticGrid& grid, double ratio, Token mask_id,
                       std::uint64_t seed) {
    if (grid.frames == 0) throw std::invalid_argument("mask_tokens: empty grid");
    if (!(ratio > 0.0 && ratio <= 1.0))
        throw std::invalid_argument("mask ratio must be in (0,1]");
    MaskResult out;
    out.grid = grid;
    out.mask.assign(grid.frames, 0);
    const std::size_t n_mask = (std::size_t)std::ceil(ratio * (double)grid.frames);
    std::vector<std::size_t> order(grid.frames);
    for (std::size_t i = 0; i < grid.frames; ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t k = 0; k < n_mask; ++k) {
        const std::size_t j = k + (std::size_t)rng.uniform(order.size() - k);
        std::swap(order[k], order[j]);
        const std::size_t t = order[k];
        out.mask[t] = 1;
        for (std::size_t cb = 0; cb < grid.codebooks; ++cb) out.grid.at(t, cb) = mask_id;
    }
    return out;
}

Matrix sinusoidal_positions(std::size_t len, std::size_t dim) {
    Matrix pe(len, dim);
    for (std::size_t pos = 0; pos < len; ++pos) {
        for (std::size_t i = 0; i < dim / 2; ++i) {
            const double freq = std::pow(10000.0, -2.0 * (double)i / (double)dim);
            pe.at(pos, 2 * i) = std::sin((double)pos * freq);
            if (2 * i + 1 < dim) pe.at(pos, 2 * i + 1) = std::cos((double)pos * freq);
        }
    }
    return pe;
}

int embed_condition(Tape& tape, const ParamBinding& pb, const TransformerConfig& cfg,
                    const SemanticSeq& semantic, const RegulatedPitchSeq& regulated) {
    if (semantic.size() != regulated.size())
        throw std::invalid_argument("embed_condition: length mismatch");
    std::vector<int> sem_idx(semantic.size()), pit_idx(regulated.size());
    for (std::size_t t = 0; t < semantic.size(); ++t) {
        const bool pad = regulated[t] == kPad;
        sem_idx[t] = pad ? cfg.sem_pad_id() : semantic[t];
        pit_idx[t] = regulated[t];
    }
    const int es = tape.gather_rows(pb("emb.sem"), sem_idx);
    const int ep = tape.gather_rows(pb("emb.pitch"), pit_idx);
    return tape.add(ep, es);
}

namespace {

// pre-LN encoder stack; returns the id of the final-layernormed states
int transformer_body(Tape& tape, const ParamBinding& pb, const TransformerConfig& cfg,
                     int x) {
    const std::size_t hd = (std::size_t)cfg.head_dim();
    const double inv_sqrt = 1.0 / std::sqrt((double)hd);
    for (int i = 0; i < cfg.layers; ++i) {
        const std::string p = "layer." + std::to_string(i) + ".";
        int h = tape.layernorm(x, pb(p + "ln1.g"), pb(p + "ln1.b"));
        const int q = tape.matmul(h, pb(p + "attn.wq"));
        const int k = tape.matmul(h, pb(p + "attn.wk"));
        const int v = tape.matmul(h, pb(p + "attn.wv"));
        std::vector<int> heads;
        for (int hh = 0; hh < cfg.heads; ++hh) {
            const std::size_t off = (std::size_t)hh * hd;
            const int qh = tape.slice_cols(q, off, hd);
            const int kh = tape.slice_cols(k, off, hd);
            const int vh = tape.slice_cols(v, off, hd);
            const int scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt);
            const int probs = tape.softmax_rows(scores);
            heads.push_back(tape.matmul(probs, vh));
        }
        const int attn = tape.matmul(tape.concat_cols(heads), pb(p + "attn.wo"));
        x = tape.add(x, attn);
        h = tape.layernorm(x, pb(p + "ln2.g"), pb(p + "ln2.b"));
        int f = tape.add_bias(tape.matmul(h, pb(p + "ffn.w1")), pb(p + "ffn.b1"));
        f = tape.gelu(f);
        f = tape.add_bias(tape.matmul(f, pb(p + "ffn.w2")), pb(p + "ffn.b2"));
        x = tape.add(x, f);
    }
    return tape.layernorm(x, pb("final.ln.g"), pb("final.ln.b"));
}

int acoustic_frame_embed(Tape& tape, const ParamBinding& pb, const TransformerConfig& cfg,
                         const AcousticGrid& grid) {
    int sum = -1;
    for (int cb = 0; cb < cfg.n_codebooks; ++cb) {
        std::vector<int> idx(grid.frames);
        for (std::size_t t = 0; t < grid.frames; ++t) {
            const Token c = grid.at(t, (std::size_t)cb);
            if (c < 0 || c > cfg.v_aco)
                throw std::invalid_argument("acoustic code out of range");
            idx[t] = c;
        }
        const int e = tape.gather_rows(pb("emb.aco." + std::to_string(cb)), idx);
        sum = sum < 0 ? e : tape.add(sum, e);
    }
    return sum;
}

int segment_rows(Tape& tape, const ParamBinding& pb, std::size_t n, int which) {
    std::vector<int> idx(n, which);
    return tape.gather_rows(pb("emb.segment"), idx);
}

}  // namespace

S2aForward forward_s2a(Tape& tape, const ParamBinding& pb, const TransformerConfig& cfg,
                       const AcousticGrid& masked, int cond, const AcousticGrid& prompt,
                       int prefix) {
    if (masked.codebooks != (std::size_t)cfg.n_codebooks ||
        (prompt.frames > 0 && prompt.codebooks != (std::size_t)cfg.n_codebooks))
        throw std::invalid_argument("forward_s2a: codebook count mismatch");
    const std::size_t lt = masked.frames;
    const std::size_t lr = prompt.frames;
    const std::size_t lp = prefix >= 0 ? tape.val(prefix).rows : 0;
    if (tape.val(cond).rows != lt)
        throw std::invalid_argument("forward_s2a: conditioning length mismatch");
    if (lp + lr + lt > (std::size_t)cfg.max_len)
        throw std::invalid_argument("forward_s2a: sequence exceeds max length");

    int target = tape.add(acoustic_frame_embed(tape, pb, cfg, masked), cond);
    target = tape.add(target, segment_rows(tape, pb, lt, 1));

    int x;
    if (lr > 0) {
        int pr = tape.add(acoustic_frame_embed(tape, pb, cfg, prompt),
                          segment_rows(tape, pb, lr, 0));
        x = tape.concat_rows(pr, target);
    } else {
        x = target;
    }
    if (prefix >= 0) x = tape.concat_rows(prefix, x);
    x = tape.add(x, tape.leaf(sinusoidal_positions(lp + lr + lt, (std::size_t)cfg.dim)));

    const int body = transformer_body(tape, pb, cfg, x);
    S2aForward out;
    out.frames = tape.slice_rows(body, lp + lr, lt);
    for (int cb = 0; cb < cfg.n_codebooks; ++cb) {
        const std::string h = "head.aco." + std::to_string(cb);
        out.logits.push_back(
            tape.add_bias(tape.matmul(out.frames, pb(h + ".w")), pb(h + ".b")));
    }
    return out;
}

int forward_svt(Tape& tape, const ParamBinding& pb, const TransformerConfig& cfg,
                const AcousticGrid& grid, const std::vector<int>* soft_codes) {
    if (!soft_codes && grid.codebooks != (std::size_t)cfg.n_codebooks)
        throw std::invalid_argument("forward_svt: codebook count mismatch");
    if (soft_codes && soft_codes->size() != (std::size_t)cfg.n_codebooks)
        throw std::invalid_argument("forward_svt: soft code count mismatch");

    std::vector<int> parts;
    std::size_t frames = grid.frames;
    for (int cb = 0; cb < cfg.n_codebooks; ++cb) {
        const int table = pb("emb.aco." + std::to_string(cb));
        if (soft_codes) {
            // probability-weighted embedding rows; gradients flow to the probs
            parts.push_back(tape.matmul((*soft_codes)[(std::size_t)cb], table));
            frames = tape.val((*soft_codes)[(std::size_t)cb]).rows;
        } else {
            std::vector<int> idx(grid.frames);
            for (std::size_t t = 0; t < grid.frames; ++t) {
                const Token c = grid.at(t, (std::size_t)cb);
                if (c < 0 || c > cfg.v_aco)
                    throw std::invalid_argument("acoustic code out of range");
                idx[t] = c;
            }
            parts.push_back(tape.gather_rows(table, idx));
        }
    }
    int x = tape.add_bias(tape.matmul(tape.concat_cols(parts), pb("in.proj.w")),
                          pb("in.proj.b"));
    x = tape.layernorm(x, pb("in.ln.g"), pb("in.ln.b"));
    x = tape.add(x, tape.leaf(sinusoidal_positions(frames, (std::size_t)cfg.dim)));
    const int body = transformer_body(tape, pb, cfg, x);
    return tape.add_bias(tape.matmul(body, pb("head.pitch.w")), pb("head.pitch.b"));
}

namespace {

json config_to_json(const TransformerConfig& c) {
    return json{{"layers", c.layers},   {"dim", c.dim},
                {"heads", c.heads},     {"ffn_dim", c.ffn_dim},
                {"max_len", c.max_len}, {"v_sem", c.v_sem},
                {"v_aco", c.v_aco},     {"n_codebooks", c.n_codebooks},
                {"pitch_vocab", c.pitch_vocab}, {"dropout", c.dropout}};
}

TransformerConfig config_from_json(const json& j) {
    TransformerConfig c;
    c.layers = j.at("layers").get<int>();
    c.dim = j.at("dim").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.v_sem = j.at("v_sem").get<int>();
    c.v_aco = j.at("v_aco").get<int>();
    c.n_codebooks = j.at("n_codebooks").get<int>();
    c.pitch_vocab = j.at("pitch_vocab").get<int>();
    c.dropout = j.at("dropout").get<double>();
    return c;
}

}  // namespace

void save_checkpoint(const ModelState& state, const std::string& dir) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["config"] = config_to_json(state.config);
    manifest["seed"] = state.seed;
    manifest["step"] = state.step;
    json registry = json::array();
    for (const auto& [name, m] : state.params)
        registry.push_back(json{{"name", name}, {"rows", m.rows}, {"cols", m.cols}});
    manifest["params"] = registry;
    {
        std::ofstream out(dir + "/manifest.json");
        if (!out) throw std::runtime_error("cannot write manifest in " + dir);
        out << manifest.dump(2) << "\n";
    }
    for (const auto& [name, m] : state.params) {
        std::ofstream out(dir + "/" + name + ".bin", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write blob " + name);
        for (double d : m.data) {
            const float f = (float)d;
            char buf[4];
            std::memcpy(buf, &f, 4);
            out.write(buf, 4);
        }
    }
}

ModelState load_checkpoint(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw std::runtime_error("missing manifest in " + dir);
    json manifest = json::parse(in);
    ModelState state;
    state.config = config_from_json(manifest.at("config"));
    state.seed = manifest.at("seed").get<std::uint64_t>();
    state.step = manifest.at("step").get<long long>();
    for (const auto& entry : manifest.at("params")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::size_t rows = entry.at("rows").get<std::size_t>();
        const std::size_t cols = entry.at("cols").get<std::size_t>();
        std::ifstream blob(dir + "/" + name + ".bin", std::ios::binary);
        if (!blob) throw std::runtime_error("missing parameter blob: " + name);
        Matrix m(rows, cols);
        for (double& d : m.data) {
            char buf[4];
            if (!blob.read(buf, 4))
                throw std::runtime_error("truncated parameter blob: " + name);
            float f;
            std::memcpy(&f, buf, 4);
            d = (double)f;
        }
        state.params[name] = std::move(m);
    }
    return state;
}

}  // namespace melctl
