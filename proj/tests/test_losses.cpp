#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "melctl/losses.hpp"

using namespace melctl;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (double& x : m.data) x = rng.normal();
    return m;
}

// FD check of a scalar tape loss against the analytic gradients of its leaves
void check_loss_gradient(const std::function<int(Tape&, const std::vector<int>&)>& build,
                         std::vector<Matrix> inputs, double tol = 1e-4) {
    Tape tape;
    std::vector<int> ids;
    for (const Matrix& m : inputs) ids.push_back(tape.leaf(m));
    tape.backward(build(tape, ids));

    const double h = 1e-5;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t e = 0; e < inputs[k].size(); e += 1 + inputs[k].size() / 9) {
            auto eval = [&](double delta) {
                std::vector<Matrix> bumped = inputs;
                bumped[k].data[e] += delta;
                Tape t2;
                std::vector<int> ids2;
                for (const Matrix& m : bumped) ids2.push_back(t2.leaf(m));
                return t2.val(build(t2, ids2)).data[0];
            };
            const double fd = (eval(h) - eval(-h)) / (2 * h);
            const double an = tape.grad(ids[k]).data[e];
            CHECK(std::abs(fd - an) <= tol * std::max(1.0, std::abs(fd)));
        }
    }
}

}  // namespace

TEST_CASE("scl_loss closed forms and invariances") {
    Matrix g(2, 2);
    g.at(0, 0) = 1.0;
    g.at(1, 1) = 1.0;  // orthogonal rows

    SUBCASE("aligned orthogonal pair at tau=1") {
        const double loss = scl_loss(g, g, 1.0, true, nullptr, nullptr);
        CHECK(loss == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)))
                          .epsilon(1e-12));
    }
    SUBCASE("misaligned positives cost more") {
        Matrix swapped(2, 2);
        swapped.at(0, 1) = 1.0;
        swapped.at(1, 0) = 1.0;
        CHECK(scl_loss(g, swapped, 1.0, true, nullptr, nullptr) >
              scl_loss(g, g, 1.0, true, nullptr, nullptr));
    }
    SUBCASE("scale invariance under normalization") {
        Matrix scaled = g;
        for (double& x : scaled.data) x *= 3.0;
        CHECK(scl_loss(scaled, g, 0.5, true, nullptr, nullptr) ==
              doctest::Approx(scl_loss(g, g, 0.5, true, nullptr, nullptr)));
    }
    SUBCASE("zero-norm row is reported with its index") {
        Matrix bad(2, 2);
        bad.at(0, 0) = 1.0;  // row 1 is all zero
        CHECK_THROWS_WITH_AS(scl_loss(bad, g, 1.0, true, nullptr, nullptr),
                             doctest::Contains("1"), std::invalid_argument);
    }
    SUBCASE("identity alignment beats row permutations") {
        Rng rng(17);
        Matrix a = random_matrix(3, 5, rng);
        const double aligned = scl_loss(a, a, 0.2, true, nullptr, nullptr);
        const int perms[5][3] = {{0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
        for (const auto& p : perms) {
            Matrix b(3, 5);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 5; ++j) b.at(i, j) = a.at(p[i], j);
            CHECK(scl_loss(a, b, 0.2, true, nullptr, nullptr) >= aligned);
        }
    }
}

TEST_CASE("build_soft_labels matches the hand-worked cells") {
    SUBCASE("pitch and semantic alignment") {
        const SoftLabelMatrix y =
            build_soft_labels({60, 60, 62}, {60, 61, 62}, {5, 5, 7}, 0.5);
        const double expect[3][3] = {{1, 0, 0}, {1, 0, 0}, {0, 0, 1}};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) CHECK(y.y.at(i, j) == expect[i][j]);
    }
    SUBCASE("pitch match with semantic mismatch yields alpha") {
        const SoftLabelMatrix y = build_soft_labels({60, 60}, {70, 60}, {3, 4}, 0.5);
        CHECK(y.y.at(0, 1) == 0.5);
        CHECK(y.y.at(0, 0) == 0.0);
    }
    SUBCASE("REST columns are fully invalid") {
        const SoftLabelMatrix y = build_soft_labels({60, 62}, {kRest, 60}, {1, 1}, 0.5);
        CHECK(y.y.at(0, 0) == -1.0);
        CHECK(y.y.at(1, 0) == -1.0);
    }
    SUBCASE("transpose symmetry with a shared semantic sequence") {
        Rng rng(23);
        for (int iter = 0; iter < 50; ++iter) {
            const std::size_t n = 2 + rng.uniform(8);
            RegulatedPitchSeq a(n), b(n);
            SemanticSeq s(n);
            for (std::size_t i = 0; i < n; ++i) {
                a[i] = rng.uniform(10) == 0 ? kRest : 55 + (Token)rng.uniform(10);
                b[i] = rng.uniform(10) == 0 ? kRest : 55 + (Token)rng.uniform(10);
                s[i] = (Token)rng.uniform(4);
            }
            const Matrix& yab = build_soft_labels(a, b, s, 0.5).y;
            const Matrix& yba = build_soft_labels(b, a, s, 0.5).y;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) CHECK(yab.at(i, j) == yba.at(j, i));
        }
    }
}

TEST_CASE("fcl_loss closed forms") {
    Matrix f(2, 2);
    f.at(0, 0) = 1.0;
    f.at(1, 1) = 1.0;

    SUBCASE("identity labels leave only off-diagonal similarity") {
        SoftLabelMatrix y{Matrix(2, 2)};
        y.y.at(0, 0) = y.y.at(1, 1) = 1.0;
        const double loss = fcl_loss(f, f, y, nullptr, nullptr);
        CHECK(loss == doctest::Approx(0.0));  // orthogonal: S off-diag is 0 too
        Matrix g(2, 2);
        g.at(0, 0) = 1.0;
        g.at(1, 0) = g.at(1, 1) = std::sqrt(0.5);
        const double s01 = std::sqrt(0.5);
        CHECK(fcl_loss(g, g, y, nullptr, nullptr) ==
              doctest::Approx(2 * s01 * s01).epsilon(1e-9));
    }
    SUBCASE("fully masked labels cost nothing") {
        SoftLabelMatrix y{Matrix(2, 2, -1.0)};
        CHECK(fcl_loss(f, f, y, nullptr, nullptr) == 0.0);
    }
    SUBCASE("rotation invariance") {
        Rng rng(31);
        Matrix a = random_matrix(4, 2, rng);
        Matrix b = random_matrix(4, 2, rng);
        SoftLabelMatrix y{Matrix(4, 4)};
        for (int i = 0; i < 4; ++i) y.y.at(i, i) = 1.0;
        const double before = fcl_loss(a, b, y, nullptr, nullptr);
        const double th = 0.7;  // rotate both sides by the same angle
        auto rotate = [&](const Matrix& m) {
            Matrix r(4, 2);
            for (int i = 0; i < 4; ++i) {
                r.at(i, 0) = std::cos(th) * m.at(i, 0) - std::sin(th) * m.at(i, 1);
                r.at(i, 1) = std::sin(th) * m.at(i, 0) + std::cos(th) * m.at(i, 1);
            }
            return r;
        };
        CHECK(fcl_loss(rotate(a), rotate(b), y, nullptr, nullptr) ==
              doctest::Approx(before).epsilon(1e-6));
    }
}

TEST_CASE("combined and total arithmetic") {
    LossWeights w;
    CHECK(combined_cl(1.0, 2.0, w) == doctest::Approx(0.5 * 1.0 + 1.0 * 2.0));
    LossWeights w0 = w;
    w0.lambda_fcl = 0.0;
    CHECK(combined_cl(3.0, 99.0, w0) == doctest::Approx(1.5));
    CHECK(combined_cl(0.0, 0.0, w) == 0.0);
    CHECK(svt_total(1.0, 2.0, 3.0, w) == doctest::Approx(2.9));
    CHECK(svt_total(0.0, 0.0, 0.0, w) == 0.0);
    LossWeights wc = w;
    wc.lambda_seg = wc.lambda_dur = 0.0;
    CHECK(svt_total(1.7, 5.0, 5.0, wc) == doctest::Approx(1.7));
}

TEST_CASE("ce_loss over non-PAD frames") {
    Matrix logits(2, 130);
    CHECK(ce_loss(logits, {60, 61}, nullptr) == doctest::Approx(std::log(130.0)));

    Matrix strong(1, 130);
    strong.at(0, 60) = 50.0;
    CHECK(ce_loss(strong, {60}, nullptr) == doctest::Approx(0.0).epsilon(1e-9));

    Matrix padded(4, 130);
    const double base = ce_loss(logits, {60, 61}, nullptr);
    CHECK(ce_loss(padded, {60, 61, kPad, kPad}, nullptr) == doctest::Approx(base));

    CHECK_THROWS_AS(ce_loss(padded, {kPad, kPad, kPad, kPad}, nullptr),
                    std::invalid_argument);
}

TEST_CASE("seg_loss hinge behavior") {
    const std::size_t C = 130;
    Matrix uniform(3, C, 1.0 / (double)C);

    CHECK(seg_loss(uniform, {60, 60, 60}, 0.5, nullptr) == doctest::Approx(0.0));
    CHECK(seg_loss(uniform, {60, 60, 62}, 0.5, nullptr) == doctest::Approx(0.25));

    Matrix onehot(2, C);
    onehot.at(0, 60) = 1.0;
    onehot.at(1, 62) = 1.0;
    CHECK(seg_loss(onehot, {60, 62}, 0.5, nullptr) == doctest::Approx(0.0));

    Matrix bad(2, C, 0.1);
    CHECK_THROWS_AS(seg_loss(bad, {60, 62}, 0.5, nullptr), std::invalid_argument);
}

TEST_CASE("dur_loss closed forms") {
    const std::size_t C = 130;
    SUBCASE("one-hot probs matching targets") {
        const PitchSeq pitch{60, 62};
        const DurationSeq dur{1, 1};
        Matrix probs(4, C);
        for (int t = 0; t < 2; ++t) probs.at(t, 60) = 1.0;
        for (int t = 2; t < 4; ++t) probs.at(t, 62) = 1.0;
        CHECK(dur_loss(probs, pitch, dur, 4, nullptr) == doctest::Approx(0.0));
    }
    SUBCASE("uniform probs closed form") {
        const PitchSeq pitch{60, 62};
        const DurationSeq dur{1, 1};
        Matrix probs(4, C, 1.0 / (double)C);
        // a = (2, 2); each term (2/130 - 2)^2
        const double term = std::pow(2.0 * (1.0 - 1.0 / 130.0), 2.0);
        CHECK(dur_loss(probs, pitch, dur, 4, nullptr) == doctest::Approx(2 * term));
    }
    SUBCASE("zero-allocation notes contribute nothing") {
        const PitchSeq pitch{60, 62};
        const DurationSeq dur{1, 100};
        Matrix probs(8, C, 1.0 / (double)C);
        // a_0 = floor(1*8/101) = 0
        const double a1 = std::floor(100.0 * 8.0 / 101.0);
        const double term = std::pow(a1 / 130.0 - a1, 2.0);
        CHECK(dur_loss(probs, pitch, dur, 8, nullptr) == doctest::Approx(term));
    }
}

TEST_CASE("masked_ce_loss") {
    Matrix logits(3, 256);
    const std::vector<Token> targets{5, 6, 7};
    CHECK(masked_ce_loss(logits, targets, {1, 0, 1}, nullptr) ==
          doctest::Approx(std::log(256.0)));
    CHECK_THROWS_AS(masked_ce_loss(logits, targets, {0, 0, 0}, nullptr),
                    std::invalid_argument);

    // unmasked frames contribute no gradient
    Matrix d(3, 256);
    masked_ce_loss(logits, targets, {1, 0, 1}, &d);
    for (std::size_t j = 0; j < 256; ++j) CHECK(d.at(1, j) == 0.0);
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(41);

    SUBCASE("scl") {
        for (int i = 0; i < 20; ++i)
            check_loss_gradient(
                [](Tape& t, const std::vector<int>& in) {
                    return tape_scl(t, in[0], in[1], 0.2, true);
                },
                {random_matrix(3, 4, rng), random_matrix(3, 4, rng)});
    }
    SUBCASE("fcl") {
        Rng lr(43);
        for (int i = 0; i < 20; ++i) {
            SoftLabelMatrix y{Matrix(3, 3)};
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) {
                    const double opts[4] = {-1.0, 0.0, 0.5, 1.0};
                    y.y.at(r, c) = opts[lr.uniform(4)];
                }
            check_loss_gradient(
                [&y](Tape& t, const std::vector<int>& in) {
                    return tape_fcl(t, in[0], in[1], y);
                },
                {random_matrix(3, 5, rng), random_matrix(3, 5, rng)});
        }
    }
    SUBCASE("ce") {
        for (int i = 0; i < 20; ++i)
            check_loss_gradient(
                [](Tape& t, const std::vector<int>& in) {
                    return tape_ce(t, in[0], {60, kPad, 62, 63});
                },
                {random_matrix(4, 130, rng)});
    }
    SUBCASE("seg through softmax") {
        for (int i = 0; i < 20; ++i)
            check_loss_gradient(
                [](Tape& t, const std::vector<int>& in) {
                    return tape_seg(t, t.softmax_rows(in[0]), {60, 60, 62, 62}, 0.5);
                },
                {random_matrix(4, 130, rng)});
    }
    SUBCASE("dur through softmax") {
        for (int i = 0; i < 20; ++i)
            check_loss_gradient(
                [](Tape& t, const std::vector<int>& in) {
                    return tape_dur(t, t.softmax_rows(in[0]), {60, 62}, {1, 2}, 6);
                },
                {random_matrix(6, 130, rng)});
    }
    SUBCASE("masked ce") {
        for (int i = 0; i < 20; ++i)
            check_loss_gradient(
                [](Tape& t, const std::vector<int>& in) {
                    return tape_masked_ce(t, in[0], {1, 2, 3, 4}, {1, 1, 0, 1});
                },
                {random_matrix(4, 16, rng)});
    }
}

TEST_CASE("weights validation") {
    LossWeights w;
    CHECK_NOTHROW(w.validate());
    w.tau = 0.0;
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
    w = LossWeights{};
    w.alpha = 1.5;
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
    w = LossWeights{};
    w.lambda_cl = -0.1;
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}
