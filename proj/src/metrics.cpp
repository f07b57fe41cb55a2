#include "couda/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace couda {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

MetricsReport compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred, int k) {
    if (k < 2) throw std::invalid_argument("compute_metrics: need at least two classes");
    if (y_true.size() != y_pred.size() || y_true.empty())
        throw std::invalid_argument("compute_metrics: label lists must have equal, positive length");
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] < 0 || y_true[i] >= k || y_pred[i] < 0 || y_pred[i] >= k)
            throw std::invalid_argument("compute_metrics: label outside [0, " + std::to_string(k) + ") at index " +
                                        std::to_string(i));
    }

    MetricsReport r;
    r.k = k;
    r.n = static_cast<int>(y_true.size());
    r.confusion.assign(k, std::vector<int>(k, 0));
    for (std::size_t i = 0; i < y_true.size(); ++i) r.confusion[y_true[i]][y_pred[i]]++;

    int correct = 0;
    for (int c = 0; c < k; ++c) correct += r.confusion[c][c];
    r.accuracy = static_cast<double>(correct) / r.n;

    r.precision.assign(k, 0.0);
    r.recall.assign(k, 0.0);
    r.f1.assign(k, 0.0);
    for (int c = 0; c < k; ++c) {
        int col = 0, row = 0;
        for (int t = 0; t < k; ++t) {
            col += r.confusion[t][c];
            row += r.confusion[c][t];
        }
        if (col > 0) r.precision[c] = static_cast<double>(r.confusion[c][c]) / col;
        if (row > 0) r.recall[c] = static_cast<double>(r.confusion[c][c]) / row;
        const double pr = r.precision[c] + r.recall[c];
        if (pr > 0.0) r.f1[c] = 2.0 * r.precision[c] * r.recall[c] / pr;
    }

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

Tensor estimated_q(const CollaborativeModel& model, const Tensor& source_x) {
    if (source_x.shape().size() != 2 || source_x.cols() != model.in_dim())
        throw std::invalid_argument("estimated_q: sample " + shape_str(source_x.shape()) +
                                    " does not match model input dim " + std::to_string(model.in_dim()));
    const int n = source_x.rows();
    const int k = model.k();

    std::vector<double> acc(static_cast<std::size_t>(k) * k, 0.0);
    auto accumulate = [&](const PeerNetwork& peer) {
        Tensor f = peer.extractor().forward(nullptr, source_x);
        Tensor t = model.noise().transitions(nullptr, f);  // n*K x K
        const auto& td = t.data();
        for (int i = 0; i < n; ++i)
            for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += td[static_cast<std::size_t>(i) * k * k + j];
    };
    accumulate(model.peer1());
    accumulate(model.peer2());

    for (double& v : acc) v /= 2.0 * n;
    return Tensor({k, k}, std::move(acc));
}

std::pair<double, double> q_error(const Tensor& q_est, const Tensor& q_true) {
    if (q_est.shape() != q_true.shape())
        throw std::invalid_argument("q_error: shapes " + shape_str(q_est.shape()) + " vs " +
                                    shape_str(q_true.shape()) + " do not match");
    const auto& a = q_est.data();
    const auto& b = q_true.data();
    double maxabs = 0.0, frob = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::fabs(a[i] - b[i]);
        maxabs = std::max(maxabs, d);
        frob += d * d;
    }
    return {maxabs, std::sqrt(frob)};
}

void attach_q(MetricsReport& report, Tensor q_est, Tensor q_true) {
    auto [maxabs, frob] = q_error(q_est, q_true);
    report.has_q = true;
    report.q_est = std::move(q_est);
    report.q_true = std::move(q_true);
    report.q_error_maxabs = maxabs;
    report.q_error_frobenius = frob;
}

void save_report(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_report: cannot open " + path + " for writing");

    out << "accuracy," << fmt(report.accuracy) << "\n";
    out << "macro_precision," << fmt(report.macro_precision) << "\n";
    out << "macro_recall," << fmt(report.macro_recall) << "\n";
    out << "macro_f1," << fmt(report.macro_f1) << "\n";
    for (int c = 0; c < report.k; ++c) {
        out << "precision_" << c << ',' << fmt(report.precision[c]) << "\n";
        out << "recall_" << c << ',' << fmt(report.recall[c]) << "\n";
        out << "f1_" << c << ',' << fmt(report.f1[c]) << "\n";
    }
    for (int c = 0; c < report.k; ++c) {
        out << "confusion_" << c;
        for (int t = 0; t < report.k; ++t) out << ',' << report.confusion[c][t];
        out << "\n";
    }
    if (report.has_q) {
        out << "q_error_maxabs," << fmt(report.q_error_maxabs) << "\n";
        out << "q_error_frobenius," << fmt(report.q_error_frobenius) << "\n";
        for (int i = 0; i < report.k; ++i) {
            out << "Q_est_" << i;
            for (int j = 0; j < report.k; ++j) out << ',' << fmt(report.q_est.at(i, j));
            out << "\n";
        }
        for (int i = 0; i < report.k; ++i) {
            out << "Q_true_" << i;
            for (int j = 0; j < report.k; ++j) out << ',' << fmt(report.q_true.at(i, j));
            out << "\n";
        }
    }
    if (!out) throw std::runtime_error("save_report: write to " + path + " failed");
}

}  // namespace couda
