#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "couda/autodiff.hpp"
#include "couda/data.hpp"
#include "couda/model.hpp"
#include "couda/objectives.hpp"

namespace couda {

// Training diverged (NaN in a loss). Mapped to its own process exit code by
// the command-line tool.
class NumericalFailure : public std::runtime_error {
public:
    explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

enum class NoiseMode {
    adaptive,  // learned noise co-adaptation layer
    identity,  // transition frozen at the identity (layer bypassed, not trained)
};

struct TrainConfig {
    double alpha = 0.1;   // domain-loss weight (via gradient reversal)
    double eta = 0.01;    // diversity weight
    double gamma = 2.0;   // focal exponent
    double eps_init = 0.8;
    double learning_rate = 1e-3;
    int batch_size = 16;
    int steps = 2000;
    std::uint64_t seed = 0;
    WeightMetric weight_metric = WeightMetric::cosine;
    DiversityMetric diversity_metric = DiversityMetric::js;
    DomainLossKind domain_loss_kind = DomainLossKind::least_squares;
    EnsembleMode ensemble = EnsembleMode::average;
    int log_every = 100;
    bool uniform_lambda = false;  // freeze every transferability weight at 1
    NoiseMode noise_mode = NoiseMode::adaptive;

    void validate() const;
};

struct CurvePoint {
    int step = 0;
    double domain_loss = 0.0;
    double classification_loss = 0.0;
    double diversity_loss = 0.0;
    double mean_lambda = 0.0;
};

struct CurveLog {
    std::vector<CurvePoint> points;
    void save(const std::string& path) const;
};

// Adam over a fixed parameter list. Parameters missing from a gradient map
// are an error; zero gradients leave a fresh parameter exactly in place.
class Adam {
public:
    Adam(std::vector<Parameter*> params, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);

    void step(const GradMap& grads);

private:
    std::vector<Parameter*> params_;
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::unordered_map<const Parameter*, std::vector<double>> m_, v_;
};

// Joint minimax training: per step, one source and one target mini-batch
// (uniform with replacement), both peers forwarded, transfer weights frozen
// from the current predictions, all three losses built on one tape, one
// backward pass, one Adam step over every trainable parameter. Logs every
// log_every steps (and at step 1). In adaptive mode the noise layer is
// first reset to the eps_init prior; steps == 0 then runs no optimization
// steps, so a freshly built model comes back bit-identical.
CurveLog train(CollaborativeModel& model, const DatasetBundle& bundle, const TrainConfig& config);

struct InferResult {
    Tensor probs;             // n x K, rows sum to 1
    std::vector<int> labels;  // argmax, lowest index on ties
};

// Peer-ensemble prediction. average: mean of the two peers' probabilities;
// maximum: elementwise max renormalized to sum 1. The noise layer plays no
// part at inference time.
InferResult infer(const CollaborativeModel& model, const Tensor& x, EnsembleMode mode);

// Flat versioned text container of every parameter (name, shape, hex float
// data). Loading requires the model to have exactly the same parameter
// names and shapes; values round-trip bit for bit.
void save_checkpoint(const CollaborativeModel& model, const std::string& path);
void load_checkpoint(CollaborativeModel& model, const std::string& path);

}  // namespace couda
