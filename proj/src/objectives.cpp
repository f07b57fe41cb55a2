#include "couda/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace couda {

namespace {

constexpr double kProbFloor = 1e-12;

void check_same_shape(const std::string& what, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(what + ": shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
                                    " do not match");
}

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

Tensor log_clamped(const Tensor& p) { return log(clamp_min(p, kProbFloor)); }

// Column vector of per-row sums.
Tensor row_sums(const Tensor& x) { return matmul(x, Tensor::ones({x.cols(), 1})); }

Tensor row_l2_norms(const Tensor& x) {
    return pow(clamp_min(row_sums(pow(x, 2.0)), 1e-24), 0.5);
}

}  // namespace

const char* to_string(WeightMetric m) {
    switch (m) {
        case WeightMetric::cosine: return "cosine";
        case WeightMetric::l1: return "l1";
        case WeightMetric::l2: return "l2";
    }
    return "?";
}

const char* to_string(DiversityMetric m) {
    switch (m) {
        case DiversityMetric::js: return "js";
        case DiversityMetric::kl: return "kl";
        case DiversityMetric::l1: return "l1";
        case DiversityMetric::l2: return "l2";
        case DiversityMetric::cos: return "cos";
    }
    return "?";
}

const char* to_string(DomainLossKind k) {
    switch (k) {
        case DomainLossKind::least_squares: return "least_squares";
        case DomainLossKind::gan: return "gan";
    }
    return "?";
}

const char* to_string(EnsembleMode m) {
    switch (m) {
        case EnsembleMode::average: return "average";
        case EnsembleMode::maximum: return "maximum";
    }
    return "?";
}

WeightMetric parse_weight_metric(const std::string& s) {
    if (s == "cosine") return WeightMetric::cosine;
    if (s == "l1") return WeightMetric::l1;
    if (s == "l2") return WeightMetric::l2;
    throw std::invalid_argument("unknown weight metric '" + s + "' (valid: cosine, l1, l2)");
}

DiversityMetric parse_diversity_metric(const std::string& s) {
    if (s == "js") return DiversityMetric::js;
    if (s == "kl") return DiversityMetric::kl;
    if (s == "l1") return DiversityMetric::l1;
    if (s == "l2") return DiversityMetric::l2;
    if (s == "cos") return DiversityMetric::cos;
    throw std::invalid_argument("unknown diversity metric '" + s + "' (valid: js, kl, l1, l2, cos)");
}

DomainLossKind parse_domain_loss_kind(const std::string& s) {
    if (s == "least_squares") return DomainLossKind::least_squares;
    if (s == "gan") return DomainLossKind::gan;
    throw std::invalid_argument("unknown domain loss '" + s + "' (valid: least_squares, gan)");
}

EnsembleMode parse_ensemble_mode(const std::string& s) {
    if (s == "average") return EnsembleMode::average;
    if (s == "maximum") return EnsembleMode::maximum;
    throw std::invalid_argument("unknown ensemble mode '" + s + "' (valid: average, maximum)");
}

// ---- transferability weight ----

double transfer_weight(const std::vector<double>& y1, const std::vector<double>& y2, WeightMetric metric) {
    if (y1.size() != y2.size() || y1.empty())
        throw std::invalid_argument("transfer_weight: predictions must have equal, positive length");

    switch (metric) {
        case WeightMetric::cosine: {
            double dot = 0.0, n1 = 0.0, n2 = 0.0;
            for (std::size_t i = 0; i < y1.size(); ++i) {
                dot += y1[i] * y2[i];
                n1 += y1[i] * y1[i];
                n2 += y2[i] * y2[i];
            }
            if (n1 == 0.0 || n2 == 0.0)
                throw std::invalid_argument("transfer_weight: zero-norm prediction");
            return 2.0 - dot / (std::sqrt(n1) * std::sqrt(n2));
        }
        case WeightMetric::l1: {
            double d = 0.0;
            for (std::size_t i = 0; i < y1.size(); ++i) d += std::fabs(y1[i] - y2[i]);
            return 1.0 + d;
        }
        case WeightMetric::l2: {
            double d = 0.0;
            for (std::size_t i = 0; i < y1.size(); ++i) d += (y1[i] - y2[i]) * (y1[i] - y2[i]);
            return 1.0 + std::sqrt(d);
        }
    }
    throw std::invalid_argument("transfer_weight: unknown metric");
}

std::vector<double> transfer_weights(const Tensor& y1, const Tensor& y2, WeightMetric metric) {
    check_same_shape("transfer_weights", y1, y2);
    const int n = y1.rows(), k = y1.cols();
    const auto& a = y1.data();
    const auto& b = y2.data();
    std::vector<double> out(static_cast<std::size_t>(n));
    std::vector<double> r1(static_cast<std::size_t>(k)), r2(static_cast<std::size_t>(k));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) {
            r1[j] = a[static_cast<std::size_t>(i) * k + j];
            r2[j] = b[static_cast<std::size_t>(i) * k + j];
        }
        out[i] = transfer_weight(r1, r2, metric);
    }
    return out;
}

// ---- domain loss ----

namespace {

Tensor domain_side_loss(const Tensor& d, const std::vector<double>& lambda, DomainLossKind kind,
                        bool is_target) {
    const int n = d.rows();
    Tensor w({n, 1}, lambda);
    Tensor per_row;
    switch (kind) {
        case DomainLossKind::least_squares:
            // (d - label)^2 with label 0 for source, 1 for target.
            per_row = is_target ? pow(sub(d, Tensor::scalar(1.0)), 2.0) : pow(d, 2.0);
            break;
        case DomainLossKind::gan:
            // -log(1 - d) for source, -log(d) for target.
            per_row = is_target ? scale(log_clamped(d), -1.0)
                                : scale(log_clamped(sub(Tensor::scalar(1.0), d)), -1.0);
            break;
    }
    return scale(sum(mul(w, per_row)), 1.0 / n);
}

}  // namespace

Tensor domain_loss(Tape* tape, const Discriminator& disc, const Tensor& f1_source, const Tensor& f2_source,
                   const Tensor& f1_target, const Tensor& f2_target, const std::vector<double>& lambda_source,
                   const std::vector<double>& lambda_target, DomainLossKind kind, double grl_coeff) {
    if (f1_source.rows() != f2_source.rows() || f1_target.rows() != f2_target.rows())
        throw std::invalid_argument("domain_loss: peer batches differ in size");
    if (lambda_source.size() != static_cast<std::size_t>(f1_source.rows()))
        throw std::invalid_argument("domain_loss: " + std::to_string(lambda_source.size()) +
                                    " source weights for " + std::to_string(f1_source.rows()) + " source rows");
    if (lambda_target.size() != static_cast<std::size_t>(f1_target.rows()))
        throw std::invalid_argument("domain_loss: " + std::to_string(lambda_target.size()) +
                                    " target weights for " + std::to_string(f1_target.rows()) + " target rows");
    if (grl_coeff < 0.0) throw std::invalid_argument("domain_loss: grl_coeff must be non-negative");

    auto head = [&](const Tensor& f) {
        return disc.forward(tape, grl_coeff > 0.0 ? grad_reverse(f, grl_coeff) : f);
    };

    Tensor peer1 = add(domain_side_loss(head(f1_source), lambda_source, kind, false),
                       domain_side_loss(head(f1_target), lambda_target, kind, true));
    Tensor peer2 = add(domain_side_loss(head(f2_source), lambda_source, kind, false),
                       domain_side_loss(head(f2_target), lambda_target, kind, true));
    return add(peer1, peer2);
}

// ---- focal classification loss ----

Tensor focal_loss(const Tensor& zhat1, const Tensor& zhat2, const Tensor& z_onehot, double gamma) {
    if (gamma < 0.0) throw std::invalid_argument("focal_loss: gamma must be non-negative");
    check_same_shape("focal_loss", zhat1, zhat2);
    check_same_shape("focal_loss", zhat1, z_onehot);
    check_rows_normalized("focal_loss: predictions", zhat1);
    check_rows_normalized("focal_loss: predictions", zhat2);

    const auto& z = z_onehot.data();
    for (double v : z) {
        if (v != 0.0 && v != 1.0)
            throw std::invalid_argument("focal_loss: labels must be one-hot rows");
    }
    check_rows_normalized("focal_loss: labels", z_onehot);

    const int n = zhat1.rows();
    auto peer_term = [&](const Tensor& zhat) {
        return sum(mul(z_onehot, mul(pow(sub(Tensor::scalar(1.0), zhat), gamma), log_clamped(zhat))));
    };
    return scale(add(peer_term(zhat1), peer_term(zhat2)), -1.0 / n);
}

// ---- diversity loss ----

Tensor diversity_loss(const Tensor& y1, const Tensor& y2, DiversityMetric metric) {
    check_same_shape("diversity_loss", y1, y2);
    check_rows_normalized("diversity_loss", y1);
    check_rows_normalized("diversity_loss", y2);
    const int n = y1.rows();

    // sum_rows p (log p - log q); zero entries contribute exactly zero.
    auto kl_sum = [](const Tensor& p, const Tensor& q) {
        return sum(mul(p, sub(log_clamped(p), log_clamped(q))));
    };

    Tensor total;
    switch (metric) {
        case DiversityMetric::js: {
            Tensor m = scale(add(y1, y2), 0.5);
            total = add(kl_sum(y1, m), kl_sum(y2, m));
            break;
        }
        case DiversityMetric::kl:
            total = kl_sum(y1, y2);
            break;
        case DiversityMetric::l1:
            total = sum(abs(sub(y1, y2)));
            break;
        case DiversityMetric::l2:
            total = sum(row_l2_norms(sub(y1, y2)));
            break;
        case DiversityMetric::cos: {
            Tensor dots = row_sums(mul(y1, y2));
            Tensor cossim = mul(dots, pow(mul(row_l2_norms(y1), row_l2_norms(y2)), -1.0));
            total = sum(sub(Tensor::scalar(1.0), cossim));
            break;
        }
    }
    return scale(total, 1.0 / n);
}

// ---- composed objective ----

Tensor total_objective(double alpha, double eta, const std::optional<Tensor>& domain_term,
                       const Tensor& classification_term, const Tensor& diversity_term) {
    if (alpha < 0.0 || eta < 0.0)
        throw std::invalid_argument("total_objective: alpha and eta must be non-negative");
    if (alpha > 0.0 && !domain_term)
        throw std::invalid_argument("total_objective: alpha > 0 requires a domain term");

    Tensor total = classification_term;
    if (alpha > 0.0) total = add(*domain_term, total);
    if (eta > 0.0) total = sub(total, scale(diversity_term, eta));
    return total;
}

}  // namespace couda
