#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "couda/metrics.hpp"
#include "couda/rng.hpp"
#include "test_util.hpp"

using namespace couda;
using namespace couda::test;

namespace {

// Per-class counting written as directly as possible, kept separate from
// the library's confusion-matrix path.
struct OracleReport {
    double accuracy;
    std::vector<double> precision, recall, f1;
    double macro_precision, macro_recall, macro_f1;
};

OracleReport oracle_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred, int k) {
    OracleReport r;
    int hits = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i)
        if (y_true[i] == y_pred[i]) ++hits;
    r.accuracy = static_cast<double>(hits) / y_true.size();

    r.precision.resize(k);
    r.recall.resize(k);
    r.f1.resize(k);
    for (int c = 0; c < k; ++c) {
        int tp = 0, pred_c = 0, true_c = 0;
        for (std::size_t i = 0; i < y_true.size(); ++i) {
            if (y_pred[i] == c) ++pred_c;
            if (y_true[i] == c) ++true_c;
            if (y_pred[i] == c && y_true[i] == c) ++tp;
        }
        r.precision[c] = pred_c == 0 ? 0.0 : static_cast<double>(tp) / pred_c;
        r.recall[c] = true_c == 0 ? 0.0 : static_cast<double>(tp) / true_c;
        double pr = r.precision[c] + r.recall[c];
        r.f1[c] = pr == 0.0 ? 0.0 : 2.0 * r.precision[c] * r.recall[c] / pr;
    }
    r.macro_precision = r.macro_recall = r.macro_f1 = 0.0;
    for (int c = 0; c < k; ++c) {
        r.macro_precision += r.precision[c];
        r.macro_recall += r.recall[c];
        r.macro_f1 += r.f1[c];
    }
    r.macro_precision /= k;
    r.macro_recall /= k;
    r.macro_f1 /= k;
    return r;
}

}  // namespace

TEST_CASE("perfect predictions score one everywhere") {
    std::vector<int> y = {0, 1, 2, 1, 0, 2};
    MetricsReport r = compute_metrics(y, y, 3);
    CHECK(r.accuracy == 1.0);
    CHECK(r.macro_precision == 1.0);
    CHECK(r.macro_recall == 1.0);
    CHECK(r.macro_f1 == 1.0);
    for (int c = 0; c < 3; ++c) {
        CHECK(r.precision[c] == 1.0);
        CHECK(r.recall[c] == 1.0);
        CHECK(r.f1[c] == 1.0);
    }
}

TEST_CASE("worked four-sample example") {
    MetricsReport r = compute_metrics({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
    CHECK(r.accuracy == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(r.macro_precision == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
    CHECK(r.macro_precision == doctest::Approx(0.8333).epsilon(1e-4));
    CHECK(r.macro_recall == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(r.macro_f1 == doctest::Approx((2.0 / 3.0 + 0.8) / 2.0).epsilon(1e-12));
    CHECK(r.macro_f1 == doctest::Approx(0.7333).epsilon(1e-4));
    CHECK(r.confusion[0][0] == 1);
    CHECK(r.confusion[0][1] == 1);
    CHECK(r.confusion[1][0] == 0);
    CHECK(r.confusion[1][1] == 2);
    CHECK(r.n == 4);
}

TEST_CASE("a constant predictor on balanced two-class data") {
    std::vector<int> y_true = {0, 1, 0, 1, 0, 1};
    std::vector<int> y_pred(6, 0);
    MetricsReport r = compute_metrics(y_true, y_pred, 2);
    CHECK(r.accuracy == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.macro_f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(r.precision[1] == 0.0);
    CHECK(r.recall[1] == 0.0);
    CHECK(r.f1[1] == 0.0);
}

TEST_CASE("library metrics match the counting oracle on random pairs") {
    Rng rng(808);
    for (int trial = 0; trial < 1000; ++trial) {
        int k = 2 + static_cast<int>(rng.below(5));
        int n = 1 + static_cast<int>(rng.below(40));
        std::vector<int> y_true(n), y_pred(n);
        for (int i = 0; i < n; ++i) {
            y_true[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
            y_pred[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
        }
        MetricsReport r = compute_metrics(y_true, y_pred, k);
        OracleReport o = oracle_metrics(y_true, y_pred, k);
        CHECK(r.accuracy == o.accuracy);
        CHECK(r.macro_precision == o.macro_precision);
        CHECK(r.macro_recall == o.macro_recall);
        CHECK(r.macro_f1 == o.macro_f1);
        for (int c = 0; c < k; ++c) {
            CHECK(r.precision[c] == o.precision[c]);
            CHECK(r.recall[c] == o.recall[c]);
            CHECK(r.f1[c] == o.f1[c]);
        }
    }
}

TEST_CASE("metrics are invariant under relabeling") {
    Rng rng(909);
    std::vector<int> y_true(60), y_pred(60);
    for (int i = 0; i < 60; ++i) {
        y_true[i] = static_cast<int>(rng.below(4));
        y_pred[i] = static_cast<int>(rng.below(4));
    }
    MetricsReport base = compute_metrics(y_true, y_pred, 4);

    std::vector<int> perm = {2, 0, 3, 1};
    std::vector<int> pt(60), pp(60);
    for (int i = 0; i < 60; ++i) {
        pt[i] = perm[y_true[i]];
        pp[i] = perm[y_pred[i]];
    }
    MetricsReport permuted = compute_metrics(pt, pp, 4);
    CHECK(base.accuracy == permuted.accuracy);
    CHECK(base.macro_precision == doctest::Approx(permuted.macro_precision).epsilon(1e-15));
    CHECK(base.macro_recall == doctest::Approx(permuted.macro_recall).epsilon(1e-15));
    CHECK(base.macro_f1 == doctest::Approx(permuted.macro_f1).epsilon(1e-15));
}

TEST_CASE("metric inputs are validated") {
    CHECK_THROWS(compute_metrics({0, 1}, {0}, 2));
    CHECK_THROWS(compute_metrics({}, {}, 2));
    CHECK_THROWS(compute_metrics({0, 2}, {0, 1}, 2));
    CHECK_THROWS(compute_metrics({0, 1}, {0, -1}, 2));
}

TEST_CASE("fresh noise layers estimate the initialization prior") {
    auto model = CollaborativeModel::make_default(2, 3, 77);
    Rng rng(7);
    Tensor one = random_matrix(rng, 1, 2);
    Tensor many = random_matrix(rng, 100, 2);
    Tensor q1 = estimated_q(*model, one);
    Tensor q100 = estimated_q(*model, many);
    for (int i = 0; i < 3; ++i) {
        double total = 0.0;
        for (int j = 0; j < 3; ++j) {
            double expected = i == j ? 0.2 : 0.4;
            CHECK(q1.at(i, j) == doctest::Approx(expected).epsilon(1e-12));
            CHECK(q1.at(i, j) == doctest::Approx(q100.at(i, j)).epsilon(1e-12));
            total += q100.at(i, j);
        }
        CHECK(std::fabs(total - 1.0) < 1e-9);
    }
    CHECK_THROWS(estimated_q(*model, Tensor({0, 2}, {})));
}

TEST_CASE("q error measures max-abs and frobenius distance") {
    Tensor q = Tensor::eye(3);
    auto [maxabs, fro] = q_error(q, q);
    CHECK(maxabs == 0.0);
    CHECK(fro == 0.0);

    Tensor bumped({3, 3}, {1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0});
    auto [m2, f2] = q_error(bumped, q);
    CHECK(m2 == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(f2 == doctest::Approx(0.1).epsilon(1e-12));

    std::vector<double> noisy(9, 0.05);
    for (int i = 0; i < 3; ++i) noisy[i * 3 + i] = 0.9;
    auto [m3, f3] = q_error(Tensor({3, 3}, std::move(noisy)), q);
    CHECK(m3 == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(f3 == doctest::Approx(std::sqrt(3 * 0.01 + 6 * 0.0025)).epsilon(1e-12));

    CHECK_THROWS(q_error(Tensor::eye(2), Tensor::eye(3)));
}

TEST_CASE("reports serialize every metric") {
    MetricsReport r = compute_metrics({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
    attach_q(r, Tensor::eye(2), Tensor::eye(2));
    CHECK(r.has_q);
    CHECK(r.q_error_maxabs == 0.0);

    std::string path = (std::filesystem::temp_directory_path() / "couda_test_report.csv").string();
    save_report(r, path);
    std::ifstream in(path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content.find("accuracy,") != std::string::npos);
    CHECK(content.find("macro_f1,") != std::string::npos);
    CHECK(content.find("precision_0,") != std::string::npos);
    CHECK(content.find("q_error_maxabs,") != std::string::npos);
    CHECK(content.find("Q_est_0,") != std::string::npos);
    CHECK(content.find("Q_true_1,") != std::string::npos);
    std::remove(path.c_str());
}
