#pragma once

#include <string>
#include <utility>
#include <vector>

#include "couda/autodiff.hpp"
#include "couda/model.hpp"

namespace couda {

struct MetricsReport {
    int k = 0;
    int n = 0;
    double accuracy = 0.0;
    std::vector<double> precision;  // per class; 0 when the class is never predicted
    std::vector<double> recall;     // per class; 0 when the class never occurs
    std::vector<double> f1;         // 0 when precision + recall is 0
    double macro_precision = 0.0;   // unweighted means of the per-class values
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::vector<std::vector<int>> confusion;  // [true][predicted]

    // Filled when a noise-matrix estimate is available.
    bool has_q = false;
    Tensor q_est;
    Tensor q_true;
    double q_error_maxabs = 0.0;
    double q_error_frobenius = 0.0;
};

// Counting metrics over predicted labels. Labels must lie in [0, K).
MetricsReport compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred, int k);

// Model's estimate of the label-corruption matrix: the noise layer's
// transition matrix averaged over the given source samples and over both
// peers' feature extractors.
Tensor estimated_q(const CollaborativeModel& model, const Tensor& source_x);

// (max-abs, Frobenius) distance between two K x K matrices.
std::pair<double, double> q_error(const Tensor& q_est, const Tensor& q_true);

// Attaches q_est / q_true and their errors to a report.
void attach_q(MetricsReport& report, Tensor q_est, Tensor q_true);

// CSV: one `name,value` line per scalar metric, confusion rows, then
// Q_est / Q_true row blocks when present.
void save_report(const MetricsReport& report, const std::string& path);

}  // namespace couda
