#include "melctl/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace melctl {

void LossWeights::validate() const {
    auto nonneg = [](double v, const char* name) {
        if (!(v >= 0.0)) throw std::invalid_argument(std::string(name) + " must be >= 0");
    };
    nonneg(lambda_scl, "lambda_scl");
    nonneg(lambda_fcl, "lambda_fcl");
    nonneg(lambda_cl, "lambda_cl");
    nonneg(lambda_seg, "lambda_seg");
    nonneg(lambda_dur, "lambda_dur");
    nonneg(lambda_svt, "lambda_svt");
    nonneg(lambda_mask, "lambda_mask");
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
    if (!(delta > 0.0 && delta <= std::sqrt(2.0)))
        throw std::invalid_argument("delta must be in (0, sqrt(2)]");
    if (!(perturb_fraction >= 0.0 && perturb_fraction <= 1.0))
        throw std::invalid_argument("perturb_fraction must be in [0,1]");
    if (offset_bound < 0) throw std::invalid_argument("offset_bound must be >= 0");
}

namespace {

// Row-normalize; returns norms. Throws on a zero-norm row.
Matrix normalize_rows(const Matrix& m, std::vector<double>& norms, const char* who) {
    Matrix out = m;
    norms.resize(m.rows);
    for (std::size_t r = 0; r < m.rows; ++r) {
        double n2 = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) n2 += m.at(r, j) * m.at(r, j);
        const double n = std::sqrt(n2);
        if (n == 0.0)
            throw std::invalid_argument(std::string(who) + ": zero-norm row " +
                                        std::to_string(r));
        norms[r] = n;
        for (std::size_t j = 0; j < m.cols; ++j) out.at(r, j) /= n;
    }
    return out;
}

// d(raw)/d(normalized-grad): dv = (dvhat - vhat * (vhat . dvhat)) / ||v||
void backprop_normalize(const Matrix& normalized, const std::vector<double>& norms,
                        const Matrix& d_normalized, Matrix& d_raw) {
    for (std::size_t r = 0; r < normalized.rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < normalized.cols; ++j)
            dot += normalized.at(r, j) * d_normalized.at(r, j);
        for (std::size_t j = 0; j < normalized.cols; ++j)
            d_raw.at(r, j) +=
                (d_normalized.at(r, j) - normalized.at(r, j) * dot) / norms[r];
    }
}

void log_softmax_row(const double* x, std::size_t n, std::vector<double>& out) {
    out.resize(n);
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(x[j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < n; ++j) out[j] = x[j] - lse;
}

}  // namespace

double scl_loss(const Matrix& ga, const Matrix& gb, double tau, bool normalize,
                Matrix* dga, Matrix* dgb) {
    check_shape(ga.same_shape(gb), "scl_loss inputs");
    const std::size_t k = ga.rows;
    if (k < 2) throw std::invalid_argument("scl_loss needs K >= 2");
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");

    std::vector<double> na, nb;
    Matrix ah = normalize ? normalize_rows(ga, na, "scl_loss ga") : ga;
    Matrix bh = normalize ? normalize_rows(gb, nb, "scl_loss gb") : gb;

    Matrix s(k, k);
    matmul_a_bt(ah, bh, s);
    for (double& x : s.data) x /= tau;

    double loss = 0.0;
    Matrix ds(k, k);
    std::vector<double> lsm;
    // direction A: softmax over columns j for each row i of S
    for (std::size_t i = 0; i < k; ++i) {
        log_softmax_row(s.row(i), k, lsm);
        loss -= lsm[i];
        for (std::size_t j = 0; j < k; ++j)
            ds.at(i, j) += (std::exp(lsm[j]) - (i == j ? 1.0 : 0.0)) / (2.0 * k);
    }
    // direction B: softmax over columns of S^T, i.e. over rows of S per column
    std::vector<double> col(k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) col[j] = s.at(j, i);
        log_softmax_row(col.data(), k, lsm);
        loss -= lsm[i];
        for (std::size_t j = 0; j < k; ++j)
            ds.at(j, i) += (std::exp(lsm[j]) - (i == j ? 1.0 : 0.0)) / (2.0 * k);
    }
    loss /= 2.0 * k;

    if (dga || dgb) {
        for (double& x : ds.data) x /= tau;
        Matrix dah(k, ga.cols), dbh(k, ga.cols);
        matmul(ds, bh, dah);      // dA^ += dS * B^
        matmul_at_b(ds, ah, dbh); // dB^ += dS^T * A^
        if (dga) {
            if (normalize)
                backprop_normalize(ah, na, dah, *dga);
            else
                for (std::size_t i = 0; i < dah.size(); ++i) dga->data[i] += dah.data[i];
        }
        if (dgb) {
            if (normalize)
                backprop_normalize(bh, nb, dbh, *dgb);
            else
                for (std::size_t i = 0; i < dbh.size(); ++i) dgb->data[i] += dbh.data[i];
        }
    }
    return loss;
}

SoftLabelMatrix build_soft_labels(const RegulatedPitchSeq& reg_a,
                                  const RegulatedPitchSeq& reg_b,
                                  const SemanticSeq& semantic, double alpha) {
    if (reg_a.size() != reg_b.size() || reg_a.size() != semantic.size())
        throw std::invalid_argument("build_soft_labels: length mismatch");
    const std::size_t l = reg_a.size();
    SoftLabelMatrix out;
    out.y = Matrix(l, l);
    for (std::size_t i = 0; i < l; ++i) {
        const bool bad_i = reg_a[i] == kRest || reg_a[i] == kPad;
        for (std::size_t j = 0; j < l; ++j) {
            const bool bad_j = reg_b[j] == kRest || reg_b[j] == kPad;
            double v;
            if (bad_i || bad_j)
                v = -1.0;  // silence/padding overrides everything
            else if (reg_a[i] != reg_b[j])
                v = 0.0;
            else
                v = semantic[i] == semantic[j] ? 1.0 : alpha;
            out.y.at(i, j) = v;
        }
    }
    return out;
}

double fcl_loss(const Matrix& fa, const Matrix& fb, const SoftLabelMatrix& labels,
                Matrix* dfa, Matrix* dfb) {
    check_shape(fa.same_shape(fb), "fcl_loss inputs");
    check_shape(labels.y.rows == fa.rows && labels.y.cols == fa.rows, "fcl_loss labels");

    std::vector<double> na, nb;
    const Matrix ah = normalize_rows(fa, na, "fcl_loss fa");
    const Matrix bh = normalize_rows(fb, nb, "fcl_loss fb");

    const std::size_t l = fa.rows;
    Matrix s(l, l);
    matmul_a_bt(ah, bh, s);

    double loss = 0.0;
    Matrix ds(l, l);
    for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t j = 0; j < l; ++j) {
            const double y = labels.y.at(i, j);
            if (y < 0.0) continue;
            const double diff = s.at(i, j) - y;
            loss += diff * diff;
            ds.at(i, j) = 2.0 * diff;
        }
    }

    if (dfa || dfb) {
        Matrix dah(l, fa.cols), dbh(l, fa.cols);
        matmul(ds, bh, dah);
        matmul_at_b(ds, ah, dbh);
        if (dfa) backprop_normalize(ah, na, dah, *dfa);
        if (dfb) backprop_normalize(bh, nb, dbh, *dfb);
    }
    return loss;
}

double combined_cl(double scl, double fcl, const LossWeights& w) {
    return w.lambda_scl * scl + w.lambda_fcl * fcl;
}

double ce_loss(const Matrix& logits, const RegulatedPitchSeq& targets, Matrix* dlogits) {
    check_shape(logits.rows == targets.size(), "ce_loss shapes");
    std::size_t count = 0;
    for (Token t : targets)
        if (t != kPad) ++count;
    if (count == 0) throw std::invalid_argument("ce_loss: all frames are PAD");

    double loss = 0.0;
    std::vector<double> lsm;
    for (std::size_t r = 0; r < logits.rows; ++r) {
        const Token tgt = targets[r];
        if (tgt == kPad) continue;
        if (tgt < 0 || (std::size_t)tgt >= logits.cols)
            throw std::invalid_argument("ce_loss: target out of range");
        log_softmax_row(logits.row(r), logits.cols, lsm);
        loss -= lsm[(std::size_t)tgt];
        if (dlogits) {
            for (std::size_t j = 0; j < logits.cols; ++j)
                dlogits->at(r, j) +=
                    (std::exp(lsm[j]) - (j == (std::size_t)tgt ? 1.0 : 0.0)) / (double)count;
        }
    }
    return loss / (double)count;
}

double seg_loss(const Matrix& probs, const RegulatedPitchSeq& targets, double delta,
                Matrix* dprobs) {
    check_shape(probs.rows == targets.size(), "seg_loss shapes");
    if (probs.rows < 2) throw std::invalid_argument("seg_loss needs L >= 2");
    for (std::size_t r = 0; r < probs.rows; ++r) {
        double sum = 0.0;
        for (std::size_t j = 0; j < probs.cols; ++j) sum += probs.at(r, j);
        if (std::abs(sum - 1.0) > 1e-6)
            throw std::invalid_argument("seg_loss: row " + std::to_string(r) +
                                        " is not a probability distribution");
    }

    double loss = 0.0;
    std::vector<double> diff(probs.cols);
    for (std::size_t t = 1; t < probs.rows; ++t) {
        double n2 = 0.0;
        for (std::size_t j = 0; j < probs.cols; ++j) {
            diff[j] = probs.at(t, j) - probs.at(t - 1, j);
            n2 += diff[j] * diff[j];
        }
        const bool boundary = targets[t] != targets[t - 1];
        if (!boundary) {
            loss += n2;
            if (dprobs) {
                for (std::size_t j = 0; j < probs.cols; ++j) {
                    dprobs->at(t, j) += 2.0 * diff[j];
                    dprobs->at(t - 1, j) -= 2.0 * diff[j];
                }
            }
        } else {
            const double n = std::sqrt(n2);
            const double hinge = delta - n;
            if (hinge > 0.0) {
                loss += hinge * hinge;
                if (dprobs && n > 0.0) {
                    const double c = -2.0 * hinge / n;
                    for (std::size_t j = 0; j < probs.cols; ++j) {
                        dprobs->at(t, j) += c * diff[j];
                        dprobs->at(t - 1, j) -= c * diff[j];
                    }
                }
            }
        }
    }
    return loss;
}

double dur_loss(const Matrix& probs, const PitchSeq& pitch, const DurationSeq& dur,
                std::size_t frames, Matrix* dprobs) {
    validate_pitch_seq(pitch);
    validate_duration_seq(pitch, dur);
    check_shape(probs.rows == frames, "dur_loss shapes");

    long long total = 0;
    for (int d : dur) total += d;

    double loss = 0.0;
    std::size_t t0 = 0;
    for (std::size_t i = 0; i < pitch.size(); ++i) {
        const std::size_t alloc =
            (std::size_t)(((long long)dur[i] * (long long)frames) / total);
        if (alloc == 0) continue;
        if (t0 + alloc > frames)
            throw std::logic_error("dur_loss: allocation exceeds frame count");
        const std::size_t cls = (std::size_t)pitch[i];
        if (cls >= probs.cols) throw std::invalid_argument("dur_loss: pitch out of range");
        double mass = 0.0;
        for (std::size_t t = t0; t < t0 + alloc; ++t) mass += probs.at(t, cls);
        const double diff = mass - (double)alloc;
        loss += diff * diff;
        if (dprobs) {
            for (std::size_t t = t0; t < t0 + alloc; ++t) dprobs->at(t, cls) += 2.0 * diff;
        }
        t0 += alloc;
    }
    return loss;
}

double svt_total(double ce, double seg, double dur, const LossWeights& w) {
    return ce + w.lambda_seg * seg + w.lambda_dur * dur;
}

double masked_ce_loss(const Matrix& logits, const std::vector<Token>& targets,
                      const std::vector<char>& frame_mask, Matrix* dlogits) {
    check_shape(logits.rows == targets.size() && frame_mask.size() == targets.size(),
                "masked_ce_loss shapes");
    std::size_t count = 0;
    for (char m : frame_mask)
        if (m) ++count;
    if (count == 0) throw std::invalid_argument("masked_ce_loss: empty mask");

    double loss = 0.0;
    std::vector<double> lsm;
    for (std::size_t r = 0; r < logits.rows; ++r) {
        if (!frame_mask[r]) continue;
        const Token tgt = targets[r];
        if (tgt < 0 || (std::size_t)tgt >= logits.cols)
            throw std::invalid_argument("masked_ce_loss: target out of range");
        log_softmax_row(logits.row(r), logits.cols, lsm);
        loss -= lsm[(std::size_t)tgt];
        if (dlogits) {
            for (std::size_t j = 0; j < logits.cols; ++j)
                dlogits->at(r, j) +=
                    (std::exp(lsm[j]) - (j == (std::size_t)tgt ? 1.0 : 0.0)) / (double)count;
        }
    }
    return loss / (double)count;
}

namespace {

// Shared shape for the loss tape nodes: 1x1 value, input gradients computed at
// forward time and scaled by the incoming scalar gradient on backward.
int push_loss_node(Tape& t, double loss, std::vector<int> inputs,
                   std::vector<Matrix> input_grads) {
    Matrix v(1, 1);
    v.data[0] = loss;
    return t.custom(std::move(v), inputs,
                    [ids = inputs, grads = std::move(input_grads)](Tape& tape, int self) {
                        const double g = tape.grad(self).data[0];
                        for (std::size_t i = 0; i < ids.size(); ++i) {
                            Matrix& dst = tape.grad(ids[i]);
                            const Matrix& gm = grads[i];
                            for (std::size_t k = 0; k < gm.size(); ++k)
                                dst.data[k] += g * gm.data[k];
                        }
                    });
}

}  // namespace

int tape_scl(Tape& t, int ga, int gb, double tau, bool normalize) {
    const Matrix& va = t.val(ga);
    const Matrix& vb = t.val(gb);
    Matrix dga(va.rows, va.cols), dgb(vb.rows, vb.cols);
    const double loss = scl_loss(va, vb, tau, normalize, &dga, &dgb);
    return push_loss_node(t, loss, {ga, gb}, {std::move(dga), std::move(dgb)});
}

int tape_fcl(Tape& t, int fa, int fb, const SoftLabelMatrix& labels) {
    const Matrix& va = t.val(fa);
    const Matrix& vb = t.val(fb);
    Matrix dfa(va.rows, va.cols), dfb(vb.rows, vb.cols);
    const double loss = fcl_loss(va, vb, labels, &dfa, &dfb);
    return push_loss_node(t, loss, {fa, fb}, {std::move(dfa), std::move(dfb)});
}

int tape_ce(Tape& t, int logits, const RegulatedPitchSeq& targets) {
    const Matrix& v = t.val(logits);
    Matrix d(v.rows, v.cols);
    const double loss = ce_loss(v, targets, &d);
    return push_loss_node(t, loss, {logits}, {std::move(d)});
}

int tape_seg(Tape& t, int probs, const RegulatedPitchSeq& targets, double delta) {
    const Matrix& v = t.val(probs);
    Matrix d(v.rows, v.cols);
    const double loss = seg_loss(v, targets, delta, &d);
    return push_loss_node(t, loss, {probs}, {std::move(d)});
}

int tape_dur(Tape& t, int probs, const PitchSeq& pitch, const DurationSeq& dur,
             std::size_t frames) {
    const Matrix& v = t.val(probs);
    Matrix d(v.rows, v.cols);
    const double loss = dur_loss(v, pitch, dur, frames, &d);
    return push_loss_node(t, loss, {probs}, {std::move(d)});
}

int tape_masked_ce(Tape& t, int logits, const std::vector<Token>& targets,
                   const std::vector<char>& frame_mask) {
    const Matrix& v = t.val(logits);
    Matrix d(v.rows, v.cols);
    const double loss = masked_ce_loss(v, targets, frame_mask, &d);
    return push_loss_node(t, loss, {logits}, {std::move(d)});
}

}  // namespace melctl
