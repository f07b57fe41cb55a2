#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "couda/autodiff.hpp"
#include "couda/rng.hpp"

namespace couda {

enum class Activation { relu, leaky_relu };
enum class FinalActivation { none, softmax, sigmoid };

struct MlpSpec {
    // Widths including the input: {in, hidden..., out}. At least one layer.
    std::vector<int> layer_widths;
    Activation activation = Activation::relu;
    FinalActivation final_activation = FinalActivation::none;
    double leaky_slope = 0.2;

    void validate() const;
    int in_width() const { return layer_widths.front(); }
    int out_width() const { return layer_widths.back(); }
};

// Fully connected stack. Hidden layers use spec.activation, the last layer
// uses spec.final_activation. Weights are Xavier-uniform, biases zero.
class Mlp {
public:
    Mlp(const std::string& name, MlpSpec spec, Rng& init);

    // x: n x in. Records on the tape when one is given; with tape == nullptr
    // this is a plain evaluation.
    Tensor forward(Tape* tape, const Tensor& x) const;

    const MlpSpec& spec() const { return spec_; }
    int num_layers() const { return static_cast<int>(weights_.size()); }
    Parameter& weight(int layer) { return *weights_[layer]; }
    Parameter& bias(int layer) { return *biases_[layer]; }

    std::vector<Parameter*> parameters() const;

private:
    MlpSpec spec_;
    std::vector<std::unique_ptr<Parameter>> weights_;
    std::vector<std::unique_ptr<Parameter>> biases_;
};

struct PeerOutput {
    Tensor features;  // n x feat_dim
    Tensor probs;     // n x K, rows sum to 1
};

// Feature extractor plus softmax classifier; two of these run side by side.
class PeerNetwork {
public:
    PeerNetwork(const std::string& name, MlpSpec extractor, MlpSpec classifier, Rng& init);

    PeerOutput forward(Tape* tape, const Tensor& x) const;

    Mlp& extractor() { return extractor_; }
    Mlp& classifier() { return classifier_; }
    const Mlp& extractor() const { return extractor_; }
    const Mlp& classifier() const { return classifier_; }

    std::vector<Parameter*> parameters() const;

private:
    Mlp extractor_;
    Mlp classifier_;
};

// Domain discriminator: sigmoid head over extractor features, one output
// per row in (0, 1).
class Discriminator {
public:
    Discriminator(const std::string& name, MlpSpec spec, Rng& init);

    Tensor forward(Tape* tape, const Tensor& features) const;

    Mlp& net() { return net_; }
    std::vector<Parameter*> parameters() const { return net_.parameters(); }

private:
    Mlp net_;
};

// Noise co-adaptation layer: per true class k, a softmax over observed
// classes conditioned on the feature vector,
//   p(z = m | y = k, f) = softmax_m(w_km . f + b_km).
// Weights form a K x K x d tensor (w_km is a d-vector), biases K x K.
class NoiseCoAdaptationLayer {
public:
    // Starts at the default initialization (eps = 0.8).
    NoiseCoAdaptationLayer(int k, int feat_dim);

    int k() const { return k_; }
    int feat_dim() const { return feat_dim_; }
    Parameter& weights() { return *weights_; }
    Parameter& bias() { return *bias_; }
    const Parameter& weights() const { return *weights_; }
    const Parameter& bias() const { return *bias_; }

    // Stacked transition rows for a feature batch (n x d): the result is
    // (n*K x K) where row i*K + k is the transition row for true class k of
    // sample i. Every row sums to 1.
    Tensor transitions(Tape* tape, const Tensor& features) const;

    // K x K transition matrix for a single feature vector, no recording.
    Tensor transition_matrix(const std::vector<double>& feature) const;

    std::vector<Parameter*> parameters() const { return {weights_.get(), bias_.get()}; }

private:
    int k_;
    int feat_dim_;
    std::unique_ptr<Parameter> weights_;  // shape {K, K, d}
    std::unique_ptr<Parameter> bias_;     // shape {K, K}
};

// Sets weights to zero and biases to log of a symmetric confusion prior:
// b_ij = log(1 - eps) on the diagonal, log(eps / (K - 1)) off it. Rows of
// the implied transition matrix then equal that prior exactly.
void init_noise_layer(NoiseCoAdaptationLayer& layer, double eps);

// Mixes a clean prediction through a transition matrix: z_m = sum_k T_km y_k.
// Single-row form; validates that yhat and every row of transition are
// normalized within 1e-6.
std::vector<double> noisy_prediction(const std::vector<double>& yhat, const Tensor& transition);

// Batched form used in training: yhat (n x K) and stacked transitions
// (n*K x K) as produced by NoiseCoAdaptationLayer::transitions.
Tensor noisy_prediction(Tape* tape, const Tensor& yhat, const Tensor& transitions);

// Both peers, the shared discriminator and the shared noise layer.
class CollaborativeModel {
public:
    CollaborativeModel(int in_dim, int k, MlpSpec extractor, MlpSpec classifier, MlpSpec discriminator,
                       std::uint64_t seed);

    // Desk-scale default: extractor {in, 32, 16} relu, classifier {16, K}
    // softmax, discriminator {16, 16, 16, 1} leaky_relu(0.2) + sigmoid.
    static std::unique_ptr<CollaborativeModel> make_default(int in_dim, int k, std::uint64_t seed);

    int in_dim() const { return in_dim_; }
    int k() const { return k_; }
    int feat_dim() const { return peer1_->extractor().spec().out_width(); }

    PeerNetwork& peer1() { return *peer1_; }
    PeerNetwork& peer2() { return *peer2_; }
    Discriminator& discriminator() { return *discriminator_; }
    NoiseCoAdaptationLayer& noise() { return *noise_; }
    const PeerNetwork& peer1() const { return *peer1_; }
    const PeerNetwork& peer2() const { return *peer2_; }
    const Discriminator& discriminator() const { return *discriminator_; }
    const NoiseCoAdaptationLayer& noise() const { return *noise_; }

    // All parameters in a stable order (peer1, peer2, discriminator, noise).
    std::vector<Parameter*> parameters() const;
    Parameter* find(const std::string& name) const;

private:
    int in_dim_;
    int k_;
    std::unique_ptr<PeerNetwork> peer1_;
    std::unique_ptr<PeerNetwork> peer2_;
    std::unique_ptr<Discriminator> discriminator_;
    std::unique_ptr<NoiseCoAdaptationLayer> noise_;
};

}  // namespace couda
