#include "couda/model.hpp"

#include <cmath>
#include <stdexcept>

namespace couda {

namespace {

void check_rows_normalized(const std::string& what, const Tensor& t) {
    const auto& d = t.data();
    const int m = t.rows(), n = t.cols();
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += d[static_cast<std::size_t>(i) * n + j];
        if (std::fabs(s - 1.0) > 1e-6)
            throw std::invalid_argument(what + ": row " + std::to_string(i) + " sums to " + std::to_string(s) +
                                        ", expected 1 within 1e-6");
    }
}

Tensor param_tensor(Tape* tape, Parameter& p) {
    if (tape) return tape->leaf(p);
    return Tensor(p.shape(), p.value());
}

// Row-vector bias added to every row of x, built from listed primitives.
Tensor add_rowvec(const Tensor& x, const Tensor& b_row) {
    return add(x, matmul(Tensor::ones({x.rows(), 1}), b_row));
}

}  // namespace

// ---- MlpSpec / Mlp ----

void MlpSpec::validate() const {
    if (layer_widths.size() < 2)
        throw std::invalid_argument("MlpSpec: need at least one layer (two widths)");
    for (int w : layer_widths) {
        if (w <= 0) throw std::invalid_argument("MlpSpec: widths must be positive");
    }
    if (leaky_slope < 0.0) throw std::invalid_argument("MlpSpec: leaky_slope must be non-negative");
}

Mlp::Mlp(const std::string& name, MlpSpec spec, Rng& init) : spec_(std::move(spec)) {
    spec_.validate();
    const int layers = static_cast<int>(spec_.layer_widths.size()) - 1;
    for (int l = 0; l < layers; ++l) {
        const int fan_in = spec_.layer_widths[l];
        const int fan_out = spec_.layer_widths[l + 1];
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out);
        for (double& v : w) v = init.uniform(-bound, bound);
        weights_.push_back(
            std::make_unique<Parameter>(name + ".w" + std::to_string(l), Shape{fan_in, fan_out}, std::move(w)));
        biases_.push_back(std::make_unique<Parameter>(name + ".b" + std::to_string(l), Shape{1, fan_out}));
    }
}

Tensor Mlp::forward(Tape* tape, const Tensor& x) const {
    if (x.shape().size() != 2 || x.cols() != spec_.in_width())
        throw std::invalid_argument("Mlp::forward: input " + shape_str(x.shape()) + " does not match in width " +
                                    std::to_string(spec_.in_width()));
    Tensor h = x;
    const int layers = num_layers();
    for (int l = 0; l < layers; ++l) {
        h = add_rowvec(matmul(h, param_tensor(tape, *weights_[l])), param_tensor(tape, *biases_[l]));
        if (l + 1 < layers) {
            h = spec_.activation == Activation::relu ? relu(h) : leaky_relu(h, spec_.leaky_slope);
        }
    }
    switch (spec_.final_activation) {
        case FinalActivation::none: break;
        case FinalActivation::softmax: h = softmax_rows(h); break;
        case FinalActivation::sigmoid: h = sigmoid(h); break;
    }
    return h;
}

std::vector<Parameter*> Mlp::parameters() const {
    std::vector<Parameter*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(weights_[l].get());
        out.push_back(biases_[l].get());
    }
    return out;
}

// ---- PeerNetwork ----

PeerNetwork::PeerNetwork(const std::string& name, MlpSpec extractor, MlpSpec classifier, Rng& init)
    : extractor_(name + ".extractor", std::move(extractor), init),
      classifier_(name + ".classifier", std::move(classifier), init) {
    if (classifier_.spec().in_width() != extractor_.spec().out_width())
        throw std::invalid_argument(name + ": classifier input width " +
                                    std::to_string(classifier_.spec().in_width()) +
                                    " does not match extractor output width " +
                                    std::to_string(extractor_.spec().out_width()));
    if (classifier_.spec().final_activation != FinalActivation::softmax)
        throw std::invalid_argument(name + ": classifier must end in a softmax");
}

PeerOutput PeerNetwork::forward(Tape* tape, const Tensor& x) const {
    PeerOutput out;
    out.features = extractor_.forward(tape, x);
    out.probs = classifier_.forward(tape, out.features);
    return out;
}

std::vector<Parameter*> PeerNetwork::parameters() const {
    std::vector<Parameter*> out = extractor_.parameters();
    for (Parameter* p : classifier_.parameters()) out.push_back(p);
    return out;
}

// ---- Discriminator ----

Discriminator::Discriminator(const std::string& name, MlpSpec spec, Rng& init)
    : net_(name, std::move(spec), init) {
    if (net_.spec().out_width() != 1)
        throw std::invalid_argument(name + ": discriminator must have a single output");
    if (net_.spec().final_activation != FinalActivation::sigmoid)
        throw std::invalid_argument(name + ": discriminator must end in a sigmoid");
}

Tensor Discriminator::forward(Tape* tape, const Tensor& features) const {
    return net_.forward(tape, features);
}

// ---- NoiseCoAdaptationLayer ----

NoiseCoAdaptationLayer::NoiseCoAdaptationLayer(int k, int feat_dim) : k_(k), feat_dim_(feat_dim) {
    if (k < 2) throw std::invalid_argument("NoiseCoAdaptationLayer: need at least two classes");
    if (feat_dim < 1) throw std::invalid_argument("NoiseCoAdaptationLayer: feature dim must be positive");
    weights_ = std::make_unique<Parameter>("noise.weights", Shape{k, k, feat_dim});
    bias_ = std::make_unique<Parameter>("noise.bias", Shape{k, k});
    init_noise_layer(*this, 0.8);
}

Tensor NoiseCoAdaptationLayer::transitions(Tape* tape, const Tensor& features) const {
    if (features.shape().size() != 2 || features.cols() != feat_dim_)
        throw std::invalid_argument("NoiseCoAdaptationLayer: features " + shape_str(features.shape()) +
                                    " do not match feature dim " + std::to_string(feat_dim_));
    const int n = features.rows();
    // (K*K x d) -> (d x K*K); column k*K+m holds w_km.
    Tensor w = transpose(reshape(param_tensor(tape, *weights_), {k_ * k_, feat_dim_}));
    Tensor logits = add_rowvec(matmul(features, w), reshape(param_tensor(tape, *bias_), {1, k_ * k_}));
    // Each row of logits holds K blocks of K; viewing them as separate rows
    // makes the row softmax a per-block softmax over observed classes.
    return softmax_rows(reshape(logits, {n * k_, k_}));
}

Tensor NoiseCoAdaptationLayer::transition_matrix(const std::vector<double>& feature) const {
    if (static_cast<int>(feature.size()) != feat_dim_)
        throw std::invalid_argument("NoiseCoAdaptationLayer: feature size " + std::to_string(feature.size()) +
                                    " does not match feature dim " + std::to_string(feat_dim_));
    Tensor t = transitions(nullptr, Tensor({1, feat_dim_}, feature));
    return reshape(t, {k_, k_});
}

void init_noise_layer(NoiseCoAdaptationLayer& layer, double eps) {
    if (!(eps > 0.0 && eps < 1.0))
        throw std::invalid_argument("init_noise_layer: eps must lie strictly between 0 and 1");
    const int k = layer.k();
    auto& w = layer.weights().value();
    std::fill(w.begin(), w.end(), 0.0);
    auto& b = layer.bias().value();
    const double diag = std::log(1.0 - eps);
    const double off = std::log(eps / (k - 1));
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) b[static_cast<std::size_t>(i) * k + j] = i == j ? diag : off;
}

std::vector<double> noisy_prediction(const std::vector<double>& yhat, const Tensor& transition) {
    const int k = static_cast<int>(yhat.size());
    if (transition.shape() != Shape{k, k})
        throw std::invalid_argument("noisy_prediction: transition " + shape_str(transition.shape()) +
                                    " does not match prediction length " + std::to_string(k));
    double s = 0.0;
    for (double v : yhat) s += v;
    if (std::fabs(s - 1.0) > 1e-6)
        throw std::invalid_argument("noisy_prediction: prediction sums to " + std::to_string(s) +
                                    ", expected 1 within 1e-6");
    check_rows_normalized("noisy_prediction: transition", transition);

    std::vector<double> z(yhat.size(), 0.0);
    for (int kk = 0; kk < k; ++kk)
        for (int m = 0; m < k; ++m) z[m] += transition.at(kk, m) * yhat[kk];
    return z;
}

Tensor noisy_prediction(Tape* tape, const Tensor& yhat, const Tensor& transitions) {
    const int n = yhat.rows();
    const int k = yhat.cols();
    if (transitions.shape() != Shape{n * k, k})
        throw std::invalid_argument("noisy_prediction: transitions " + shape_str(transitions.shape()) +
                                    " do not match predictions " + shape_str(yhat.shape()));
    check_rows_normalized("noisy_prediction: predictions", yhat);
    check_rows_normalized("noisy_prediction: transitions", transitions);
    (void)tape;  // both inputs already carry the tape when recording

    // z[i, m] = sum_k y[i, k] * T[i*K + k, m], assembled from primitives:
    // replicate y entries across a block row, multiply, then sum each block
    // of K rows with a constant block-summing matrix.
    Tensor y_col = reshape(yhat, {n * k, 1});
    Tensor y_rep = matmul(y_col, Tensor::ones({1, k}));
    Tensor prod = mul(y_rep, transitions);
    std::vector<double> s(static_cast<std::size_t>(n) * n * k, 0.0);
    for (int i = 0; i < n; ++i)
        for (int kk = 0; kk < k; ++kk) s[static_cast<std::size_t>(i) * n * k + i * k + kk] = 1.0;
    return matmul(Tensor({n, n * k}, std::move(s)), prod);
}

// ---- CollaborativeModel ----

CollaborativeModel::CollaborativeModel(int in_dim, int k, MlpSpec extractor, MlpSpec classifier,
                                       MlpSpec discriminator, std::uint64_t seed)
    : in_dim_(in_dim), k_(k) {
    if (in_dim < 1) throw std::invalid_argument("CollaborativeModel: input dim must be positive");
    if (k < 2) throw std::invalid_argument("CollaborativeModel: need at least two classes");
    if (extractor.layer_widths.front() != in_dim)
        throw std::invalid_argument("CollaborativeModel: extractor input width does not match in_dim");
    if (classifier.layer_widths.back() != k)
        throw std::invalid_argument("CollaborativeModel: classifier output width does not match K");
    if (discriminator.layer_widths.front() != extractor.layer_widths.back())
        throw std::invalid_argument("CollaborativeModel: discriminator input width does not match features");

    Rng rng1(sub_seed(seed, "init-peer1"));
    Rng rng2(sub_seed(seed, "init-peer2"));
    Rng rng_d(sub_seed(seed, "init-disc"));
    peer1_ = std::make_unique<PeerNetwork>("peer1", extractor, classifier, rng1);
    peer2_ = std::make_unique<PeerNetwork>("peer2", extractor, classifier, rng2);
    discriminator_ = std::make_unique<Discriminator>("disc", discriminator, rng_d);
    noise_ = std::make_unique<NoiseCoAdaptationLayer>(k, extractor.layer_widths.back());
}

std::unique_ptr<CollaborativeModel> CollaborativeModel::make_default(int in_dim, int k, std::uint64_t seed) {
    MlpSpec extractor{{in_dim, 32, 16}, Activation::relu, FinalActivation::none};
    MlpSpec classifier{{16, k}, Activation::relu, FinalActivation::softmax};
    MlpSpec disc{{16, 16, 16, 1}, Activation::leaky_relu, FinalActivation::sigmoid, 0.2};
    return std::make_unique<CollaborativeModel>(in_dim, k, extractor, classifier, disc, seed);
}

std::vector<Parameter*> CollaborativeModel::parameters() const {
    std::vector<Parameter*> out = peer1_->parameters();
    for (Parameter* p : peer2_->parameters()) out.push_back(p);
    for (Parameter* p : discriminator_->parameters()) out.push_back(p);
    for (Parameter* p : noise_->parameters()) out.push_back(p);
    return out;
}

Parameter* CollaborativeModel::find(const std::string& name) const {
    for (Parameter* p : parameters())
        if (p->name() == name) return p;
    return nullptr;
}

}  // namespace couda
