#include "couda/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "couda/rng.hpp"

namespace couda {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_hex(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

}  // namespace

// ---- config ----

void TrainConfig::validate() const {
    if (alpha < 0.0) throw std::invalid_argument("TrainConfig: alpha must be non-negative");
    if (eta < 0.0) throw std::invalid_argument("TrainConfig: eta must be non-negative");
    if (gamma < 0.0) throw std::invalid_argument("TrainConfig: gamma must be non-negative");
    if (!(eps_init > 0.0 && eps_init < 1.0))
        throw std::invalid_argument("TrainConfig: eps_init must lie strictly between 0 and 1");
    if (learning_rate < 0.0) throw std::invalid_argument("TrainConfig: learning rate must be non-negative");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be positive");
    if (steps < 0) throw std::invalid_argument("TrainConfig: steps must be non-negative");
    if (log_every < 1) throw std::invalid_argument("TrainConfig: log_every must be positive");
}

// ---- curve log ----

void CurveLog::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("CurveLog: cannot open " + path + " for writing");
    out << "step,domain_loss,classification_loss,diversity_loss,mean_lambda\n";
    for (const CurvePoint& p : points) {
        out << p.step << ',' << fmt(p.domain_loss) << ',' << fmt(p.classification_loss) << ','
            << fmt(p.diversity_loss) << ',' << fmt(p.mean_lambda) << "\n";
    }
    if (!out) throw std::runtime_error("CurveLog: write to " + path + " failed");
}

// ---- Adam ----

Adam::Adam(std::vector<Parameter*> params, double learning_rate, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (Parameter* p : params_) {
        m_[p] = std::vector<double>(static_cast<std::size_t>(p->size()), 0.0);
        v_[p] = std::vector<double>(static_cast<std::size_t>(p->size()), 0.0);
    }
}

void Adam::step(const GradMap& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (Parameter* p : params_) {
        const std::vector<double>& g = grads.at(*p);
        std::vector<double>& m = m_[p];
        std::vector<double>& v = v_[p];
        std::vector<double>& w = p->value();
        for (std::size_t i = 0; i < g.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

// ---- training loop ----

namespace {

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
    const int d = x.cols();
    const auto& data = x.data();
    std::vector<double> out;
    out.reserve(idx.size() * static_cast<std::size_t>(d));
    for (int i : idx)
        out.insert(out.end(), data.begin() + static_cast<std::size_t>(i) * d,
                   data.begin() + static_cast<std::size_t>(i + 1) * d);
    return Tensor({static_cast<int>(idx.size()), d}, std::move(out));
}

Tensor onehot_rows(const std::vector<int>& labels, const std::vector<int>& idx, int k) {
    std::vector<double> out(idx.size() * static_cast<std::size_t>(k), 0.0);
    for (std::size_t i = 0; i < idx.size(); ++i) out[i * k + labels[idx[i]]] = 1.0;
    return Tensor({static_cast<int>(idx.size()), k}, std::move(out));
}

}  // namespace

CurveLog train(CollaborativeModel& model, const DatasetBundle& bundle, const TrainConfig& config) {
    config.validate();
    if (bundle.k != model.k())
        throw std::invalid_argument("train: bundle has K=" + std::to_string(bundle.k) + ", model has K=" +
                                    std::to_string(model.k()));
    if (bundle.dim != model.in_dim())
        throw std::invalid_argument("train: bundle dim " + std::to_string(bundle.dim) +
                                    " does not match model input dim " + std::to_string(model.in_dim()));

    const bool adaptive = config.noise_mode == NoiseMode::adaptive;
    if (adaptive) init_noise_layer(model.noise(), config.eps_init);

    std::vector<Parameter*> trainable = model.peer1().parameters();
    for (Parameter* p : model.peer2().parameters()) trainable.push_back(p);
    for (Parameter* p : model.discriminator().parameters()) trainable.push_back(p);
    if (adaptive)
        for (Parameter* p : model.noise().parameters()) trainable.push_back(p);
    Adam adam(trainable, config.learning_rate);

    Rng batch_rng(sub_seed(config.seed, "batching"));
    const int n_s = bundle.n_source();
    const int n_t = bundle.n_target();
    const int b = config.batch_size;

    CurveLog curve;
    for (int step = 1; step <= config.steps; ++step) {
        std::vector<int> idx_s(static_cast<std::size_t>(b)), idx_t(static_cast<std::size_t>(b));
        for (int& i : idx_s) i = static_cast<int>(batch_rng.below(static_cast<std::uint64_t>(n_s)));
        for (int& i : idx_t) i = static_cast<int>(batch_rng.below(static_cast<std::uint64_t>(n_t)));

        Tensor xs = gather_rows(bundle.source_x, idx_s);
        Tensor xt = gather_rows(bundle.target_x, idx_t);
        Tensor z = onehot_rows(bundle.source_z, idx_s, bundle.k);

        Tape tape;
        PeerOutput p1s = model.peer1().forward(&tape, xs);
        PeerOutput p1t = model.peer1().forward(&tape, xt);
        PeerOutput p2s = model.peer2().forward(&tape, xs);
        PeerOutput p2t = model.peer2().forward(&tape, xt);

        std::vector<double> lam_s, lam_t;
        if (config.uniform_lambda) {
            lam_s.assign(static_cast<std::size_t>(b), 1.0);
            lam_t.assign(static_cast<std::size_t>(b), 1.0);
        } else {
            lam_s = transfer_weights(p1s.probs, p2s.probs, config.weight_metric);
            lam_t = transfer_weights(p1t.probs, p2t.probs, config.weight_metric);
        }

        // alpha == 0 still evaluates the domain loss for the log, without a
        // reversal layer; it stays out of the total, so the discriminator
        // receives zero gradient.
        Tensor ld = domain_loss(&tape, model.discriminator(), p1s.features, p2s.features, p1t.features,
                                p2t.features, lam_s, lam_t, config.domain_loss_kind,
                                config.alpha > 0.0 ? config.alpha : 0.0);

        Tensor zh1 = p1s.probs;
        Tensor zh2 = p2s.probs;
        if (adaptive) {
            zh1 = noisy_prediction(&tape, p1s.probs, model.noise().transitions(&tape, p1s.features));
            zh2 = noisy_prediction(&tape, p2s.probs, model.noise().transitions(&tape, p2s.features));
        }
        Tensor lc = focal_loss(zh1, zh2, z, config.gamma);

        Tensor ldiv = diversity_loss(concat(p1s.probs, p1t.probs, 0), concat(p2s.probs, p2t.probs, 0),
                                     config.diversity_metric);

        std::string nan_losses;
        if (std::isnan(ld.value())) nan_losses += " domain";
        if (std::isnan(lc.value())) nan_losses += " classification";
        if (std::isnan(ldiv.value())) nan_losses += " diversity";
        if (!nan_losses.empty())
            throw NumericalFailure("train: NaN at step " + std::to_string(step) + " in:" + nan_losses);

        Tensor total = total_objective(config.alpha, config.eta,
                                       config.alpha > 0.0 ? std::optional<Tensor>(ld) : std::nullopt, lc, ldiv);
        GradMap grads = tape.backward(total);
        adam.step(grads);

        if (step == 1 || step % config.log_every == 0) {
            double lam_sum = 0.0;
            for (double l : lam_s) lam_sum += l;
            for (double l : lam_t) lam_sum += l;
            curve.points.push_back(
                {step, ld.value(), lc.value(), ldiv.value(), lam_sum / (2.0 * b)});
        }
    }
    return curve;
}

// ---- inference ----

InferResult infer(const CollaborativeModel& model, const Tensor& x, EnsembleMode mode) {
    Tensor y1 = model.peer1().forward(nullptr, x).probs;
    Tensor y2 = model.peer2().forward(nullptr, x).probs;
    const int n = y1.rows(), k = y1.cols();
    const auto& a = y1.data();
    const auto& b = y2.data();

    std::vector<double> probs(a.size());
    switch (mode) {
        case EnsembleMode::average:
            for (std::size_t i = 0; i < a.size(); ++i) probs[i] = 0.5 * (a[i] + b[i]);
            break;
        case EnsembleMode::maximum:
            for (int i = 0; i < n; ++i) {
                double s = 0.0;
                for (int j = 0; j < k; ++j) {
                    const std::size_t at = static_cast<std::size_t>(i) * k + j;
                    probs[at] = std::max(a[at], b[at]);
                    s += probs[at];
                }
                for (int j = 0; j < k; ++j) probs[static_cast<std::size_t>(i) * k + j] /= s;
            }
            break;
    }

    InferResult out;
    out.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int j = 1; j < k; ++j)
            if (probs[static_cast<std::size_t>(i) * k + j] > probs[static_cast<std::size_t>(i) * k + best])
                best = j;
        out.labels[i] = best;
    }
    out.probs = Tensor({n, k}, std::move(probs));
    return out;
}

// ---- checkpoints ----

void save_checkpoint(const CollaborativeModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path + " for writing");

    const auto params = model.parameters();
    out << "couda-checkpoint v1\n";
    out << "tensors " << params.size() << "\n";
    for (const Parameter* p : params) {
        out << "tensor " << p->name() << ' ' << p->shape().size();
        for (int d : p->shape()) out << ' ' << d;
        out << "\n";
        const auto& v = p->value();
        for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << fmt_hex(v[i]);
        out << "\n";
    }
    if (!out) throw std::runtime_error("save_checkpoint: write to " + path + " failed");
}

void load_checkpoint(CollaborativeModel& model, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);

    std::string line;
    if (!std::getline(in, line) || line != "couda-checkpoint v1")
        throw std::runtime_error("load_checkpoint: " + path + " is not a couda-checkpoint v1 file");
    std::size_t count = 0;
    if (!std::getline(in, line) || std::sscanf(line.c_str(), "tensors %zu", &count) != 1)
        throw std::runtime_error("load_checkpoint: bad tensor count in " + path);

    const auto params = model.parameters();
    if (count != params.size())
        throw std::runtime_error("load_checkpoint: " + path + " holds " + std::to_string(count) +
                                 " tensors, model has " + std::to_string(params.size()));

    std::unordered_map<std::string, Parameter*> by_name;
    for (Parameter* p : params) by_name[p->name()] = p;

    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line))
            throw std::runtime_error("load_checkpoint: truncated header in " + path);
        std::istringstream hs(line);
        std::string tag, name;
        std::size_t ndim = 0;
        if (!(hs >> tag >> name >> ndim) || tag != "tensor")
            throw std::runtime_error("load_checkpoint: bad tensor header '" + line + "'");
        Shape shape(ndim);
        for (std::size_t d = 0; d < ndim; ++d) {
            if (!(hs >> shape[d])) throw std::runtime_error("load_checkpoint: bad shape for " + name);
        }

        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("load_checkpoint: model has no parameter named " + name);
        Parameter* p = it->second;
        if (p->shape() != shape)
            throw std::runtime_error("load_checkpoint: " + name + " has shape " + shape_str(shape) +
                                     ", model expects " + shape_str(p->shape()));

        if (!std::getline(in, line))
            throw std::runtime_error("load_checkpoint: truncated data for " + name);
        std::istringstream ds(line);
        std::vector<double>& v = p->value();
        for (std::size_t j = 0; j < v.size(); ++j) {
            std::string tok;
            if (!(ds >> tok)) throw std::runtime_error("load_checkpoint: not enough values for " + name);
            char* end = nullptr;
            v[j] = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0')
                throw std::runtime_error("load_checkpoint: bad value '" + tok + "' in " + name);
        }
        std::string extra;
        if (ds >> extra) throw std::runtime_error("load_checkpoint: too many values for " + name);
    }
}

}  // namespace couda
