#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "couda/autodiff.hpp"

namespace couda {

// Configuration of the synthetic two-domain task: Gaussian class clusters,
// with target samples pushed through an affine shift. The target map is the
// literal composition rotation(scale(translation(x))): translate by
// `translation`, multiply by `scale_factor`, then rotate by `rotation`
// radians in the first two coordinates.
struct ShiftSpec {
    int n_classes = 3;
    int dim = 2;
    int per_class = 300;  // samples per class per domain split
    double rotation = 0.0;
    std::vector<double> translation;  // empty means zeros; else length dim
    double scale_factor = 1.0;
    double spread = 0.8;  // per-coordinate standard deviation

    void validate() const;
};

// One corrupted two-domain dataset. Target training labels are dropped at
// generation; only the held-out target test split keeps labels for scoring.
struct DatasetBundle {
    int k = 0;
    int dim = 0;
    Tensor source_x;
    std::vector<int> source_z;        // observed (possibly noisy) labels
    std::vector<int> source_y_clean;  // kept for diagnostics only
    Tensor target_x;
    Tensor target_test_x;
    std::vector<int> target_test_y;
    Tensor true_q;  // K x K row-stochastic corruption matrix
    std::uint64_t seed = 0;

    int n_source() const { return source_x.rows(); }
    int n_target() const { return target_x.rows(); }
};

// Draws the three splits (source, target, target test) from shared cluster
// means and applies the shift to both target splits. Labels start clean
// (source_z == source_y_clean, true_q == identity). Deterministic: the same
// spec and seed give bit-identical bundles.
DatasetBundle gen_shifted_gaussians(const ShiftSpec& spec, std::uint64_t seed);

// Uniform label noise: each label flips with probability rho to a uniformly
// chosen OTHER class. Returns the noisy labels and the true transition
// matrix (1 - rho) I + rho / (K - 1) (ones - I).
std::pair<std::vector<int>, Tensor> inject_label_noise(const std::vector<int>& labels, double rho, int k,
                                                       std::uint64_t seed);

// Convenience: applies inject_label_noise to the bundle's source labels.
void apply_label_noise(DatasetBundle& bundle, double rho, std::uint64_t seed);

// Class-imbalance corruption: every class is independently selected with
// probability p_class; selected classes keep ceil(half) of their source
// samples (uniform subsample, original order preserved). Grouping is by
// clean label.
void imbalance_subsample(DatasetBundle& bundle, double p_class, std::uint64_t seed);

void save_bundle(const DatasetBundle& bundle, const std::string& path);
DatasetBundle load_bundle(const std::string& path);

}  // namespace couda
