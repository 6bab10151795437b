#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "soli/losses.hpp"
#include "soli/rng.hpp"

using namespace soli;

namespace {

Tensor<double> row_tensor(std::vector<double> vals) {
    Tensor<double> t({1, static_cast<int>(vals.size())});
    t.data = std::move(vals);
    return t;
}

TokenBatch targets_of(std::vector<int> ids, int batch, int len) {
    TokenBatch t(batch, len);
    t.ids = std::move(ids);
    return t;
}

} // namespace

// ---------------------------------------------------------------------------
// cross entropy
// ---------------------------------------------------------------------------

TEST_CASE("cross entropy of a certain prediction is zero", "[losses]") {
    // Huge margin on the target class => softmax probability 1 in f64.
    Tensor<double> logits({1, 2, 3});
    logits.at(0, 0, 1) = 1000.0;
    logits.at(0, 1, 2) = 1000.0;
    auto res = cross_entropy(logits, targets_of({1, 2}, 1, 2), /*pad_id=*/0);
    CHECK(res.loss.value == 0.0);
    CHECK(res.positions == 2);
}

TEST_CASE("cross entropy of uniform logits is ln M", "[losses]") {
    Tensor<double> logits({2, 3, 4}); // all zeros -> uniform over M=4
    auto res = cross_entropy(logits, targets_of({1, 2, 3, 3, 2, 1}, 2, 3), 0);
    CHECK(res.loss.value == Catch::Approx(std::log(4.0)).margin(1e-9));
}

TEST_CASE("cross entropy at probability one half", "[losses]") {
    Tensor<double> logits({1, 1, 2}); // equal logits, M=2 -> p(target)=0.5
    auto res = cross_entropy(logits, targets_of({1}, 1, 1), 0);
    CHECK(res.loss.value == Catch::Approx(0.6931471805599453).margin(1e-9));
}

TEST_CASE("cross entropy masks pad positions", "[losses]") {
    Tensor<double> logits({1, 3, 4});
    logits.at(0, 2, 1) = 50.0; // would dominate if the pad position counted
    auto with_pad = cross_entropy(logits, targets_of({1, 2, 0}, 1, 3), 0);
    Tensor<double> two({1, 2, 4});
    auto dense = cross_entropy(two, targets_of({1, 2}, 1, 2), 0);
    CHECK(with_pad.loss.value == Catch::Approx(dense.loss.value).margin(1e-12));
    CHECK(with_pad.positions == 2);
    // Pad positions carry no gradient.
    for (int m = 0; m < 4; ++m) CHECK(with_pad.grad_logits.at(0, 2, m) == 0.0);
}

TEST_CASE("cross entropy rejects degenerate and invalid batches", "[losses]") {
    Tensor<double> logits({1, 2, 4});
    CHECK_THROWS_AS(cross_entropy(logits, targets_of({0, 0}, 1, 2), 0), ArgumentError);
    CHECK_THROWS_AS(cross_entropy(logits, targets_of({1, 9}, 1, 2), 0), ArgumentError);
}

// ---------------------------------------------------------------------------
// euclidean distance
// ---------------------------------------------------------------------------

TEST_CASE("euclidean distance basics", "[losses]") {
    CHECK(euclidean_distance(row_tensor({1, 2, 3}), row_tensor({1, 2, 3}))[0] == 0.0);
    CHECK(euclidean_distance(row_tensor({0, 0}), row_tensor({3, 4}))[0] ==
          Catch::Approx(5.0).margin(1e-12));
    CHECK_THROWS_AS(euclidean_distance(row_tensor({1}), row_tensor({1, 2})), ArgumentError);
}

TEST_CASE("euclidean distance matches a scalar loop oracle", "[losses]") {
    SplitMix64 rng(99);
    const int N = 7, E = 13;
    Tensor<double> a({N, E}), b({N, E});
    for (auto& v : a.data) v = rng.u01() * 4 - 2;
    for (auto& v : b.data) v = rng.u01() * 4 - 2;
    auto d = euclidean_distance(a, b);
    for (int i = 0; i < N; ++i) {
        double acc = 0;
        for (int e = 0; e < E; ++e) acc += (a.at(i, e) - b.at(i, e)) * (a.at(i, e) - b.at(i, e));
        CHECK(d[static_cast<std::size_t>(i)] == Catch::Approx(std::sqrt(acc)).epsilon(1e-6));
    }
}

// ---------------------------------------------------------------------------
// contrastive
// ---------------------------------------------------------------------------

TEST_CASE("contrastive closed forms", "[losses]") {
    // Positive pair, identical embeddings -> 0.
    ContrastiveBatch<double> pos_same{row_tensor({1, 2}), row_tensor({1, 2}), {1}, 1.0};
    CHECK(contrastive(pos_same).loss.value == 0.0);

    // Negative pair beyond the margin -> 0 (clamped).
    ContrastiveBatch<double> neg_far{row_tensor({0, 0}), row_tensor({3, 4}), {0}, 1.0};
    auto far = contrastive(neg_far);
    CHECK(far.loss.value == 0.0);
    for (double g : far.grad_a.data) CHECK(g == 0.0);

    // Negative with D=0.4, m=1 -> 0.36.
    ContrastiveBatch<double> neg_near{row_tensor({0.0}), row_tensor({0.4}), {0}, 1.0};
    auto near = contrastive(neg_near);
    CHECK(near.loss.value == Catch::Approx(0.36).margin(1e-12));
    CHECK(near.grad_a.data[0] != 0.0);

    // Positive with D=2 -> 4.
    ContrastiveBatch<double> pos_far{row_tensor({0, 0}), row_tensor({0, 2}), {1}, 1.0};
    CHECK(contrastive(pos_far).loss.value == Catch::Approx(4.0).margin(1e-12));
}

TEST_CASE("contrastive is a mean over the batch", "[losses]") {
    Tensor<double> a({2, 1}), b({2, 1});
    a.data = {0.0, 0.0};
    b.data = {0.4, 2.0};
    ContrastiveBatch<double> batch{a, b, {0, 1}, 1.0};
    CHECK(contrastive(batch).loss.value == Catch::Approx((0.36 + 4.0) / 2).margin(1e-12));
}

TEST_CASE("contrastive is permutation invariant", "[losses]") {
    SplitMix64 rng(3);
    const int N = 9, E = 5;
    Tensor<double> a({N, E}), b({N, E});
    std::vector<int> y(N);
    for (auto& v : a.data) v = rng.u01() * 2 - 1;
    for (auto& v : b.data) v = rng.u01() * 2 - 1;
    for (auto& l : y) l = rng.coin(0.5) ? 1 : 0;

    std::vector<int> perm(N);
    for (int i = 0; i < N; ++i) perm[static_cast<std::size_t>(i)] = i;
    rng.shuffle(perm);
    Tensor<double> pa({N, E}), pb({N, E});
    std::vector<int> py(N);
    for (int i = 0; i < N; ++i) {
        py[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(perm[i])];
        for (int e = 0; e < E; ++e) {
            pa.at(i, e) = a.at(perm[static_cast<std::size_t>(i)], e);
            pb.at(i, e) = b.at(perm[static_cast<std::size_t>(i)], e);
        }
    }
    auto l1 = contrastive(ContrastiveBatch<double>{a, b, y, 1.0});
    auto l2 = contrastive(ContrastiveBatch<double>{pa, pb, py, 1.0});
    CHECK(l1.loss.value == Catch::Approx(l2.loss.value).epsilon(1e-12));
}

TEST_CASE("contrastive gradients match central finite differences", "[losses]") {
    SplitMix64 rng(17);
    const int N = 4, E = 3;
    Tensor<double> a({N, E}), b({N, E});
    for (auto& v : a.data) v = rng.u01() * 2 - 1;
    for (auto& v : b.data) v = rng.u01() * 2 - 1;
    std::vector<int> y = {1, 0, 1, 0};
    const double m = 1.5;

    auto eval = [&](const Tensor<double>& aa, const Tensor<double>& bb) {
        return contrastive(ContrastiveBatch<double>{aa, bb, y, m}).loss.value;
    };
    auto res = contrastive(ContrastiveBatch<double>{a, b, y, m});
    const double h = 1e-5;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        Tensor<double> ap = a, am = a;
        ap.data[i] += h;
        am.data[i] -= h;
        double fd = (eval(ap, b) - eval(am, b)) / (2 * h);
        CHECK(res.grad_a.data[i] == Catch::Approx(fd).margin(1e-7));
    }
    for (std::size_t i = 0; i < b.data.size(); ++i) {
        Tensor<double> bp = b, bm = b;
        bp.data[i] += h;
        bm.data[i] -= h;
        double fd = (eval(a, bp) - eval(a, bm)) / (2 * h);
        CHECK(res.grad_b.data[i] == Catch::Approx(fd).margin(1e-7));
    }
}

TEST_CASE("contrastive argument validation", "[losses]") {
    ContrastiveBatch<double> bad{row_tensor({1}), row_tensor({1}), {1}, 0.0};
    CHECK_THROWS_AS(contrastive(bad), ArgumentError);
    ContrastiveBatch<double> bad_label{row_tensor({1}), row_tensor({1}), {2}, 1.0};
    CHECK_THROWS_AS(contrastive(bad_label), ArgumentError);
}

// ---------------------------------------------------------------------------
// combined loss
// ---------------------------------------------------------------------------

TEST_CASE("combined loss degenerate cases are exact", "[losses]") {
    auto c = make_contrastive_loss(0.36);
    auto ce = make_cross_entropy_loss(1.0);

    CHECK(soli_loss(c, ce, 0.0, 2.0).value == 2.0 * 1.0);
    CHECK(soli_loss(c, ce, 3.0, 0.0).value == 3.0 * 0.36);
    CHECK(soli_loss(c, ce, 0.5, 2.0).value == Catch::Approx(2.18).margin(1e-12));
    CHECK_THROWS_AS(soli_loss(c, ce, 0.0, 0.0), ConfigError);
    CHECK_THROWS_AS(soli_loss(c, ce, -1.0, 1.0), ArgumentError);
}

TEST_CASE("combined loss is linear in each weight", "[losses]") {
    auto c = make_contrastive_loss(0.7);
    auto ce = make_cross_entropy_loss(1.3);
    auto l1 = soli_loss(c, ce, 1.0, 1.0);
    auto l2 = soli_loss(c, ce, 2.0, 1.0);
    CHECK(l2.value - l1.value == Catch::Approx(0.7).margin(1e-12));
    auto l3 = soli_loss(c, ce, 1.0, 2.0);
    CHECK(l3.value - l1.value == Catch::Approx(1.3).margin(1e-12));
    // Breakdown identity.
    CHECK(l1.value == Catch::Approx(l1.gamma * l1.contrastive + l1.lambda * l1.cross_entropy)
                          .epsilon(1e-9));
}
