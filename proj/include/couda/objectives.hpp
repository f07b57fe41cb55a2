#pragma once

#include <optional>
#include <string>
#include <vector>

#include "couda/autodiff.hpp"
#include "couda/model.hpp"

namespace couda {

enum class WeightMetric { cosine, l1, l2 };
enum class DiversityMetric { js, kl, l1, l2, cos };
enum class DomainLossKind { least_squares, gan };
enum class EnsembleMode { average, maximum };

const char* to_string(WeightMetric m);
const char* to_string(DiversityMetric m);
const char* to_string(DomainLossKind k);
const char* to_string(EnsembleMode m);
WeightMetric parse_weight_metric(const std::string& s);
DiversityMetric parse_diversity_metric(const std::string& s);
DomainLossKind parse_domain_loss_kind(const std::string& s);
EnsembleMode parse_ensemble_mode(const std::string& s);

// Transferability weight of one sample from the two peers' predictions.
// cosine: 2 - <y1,y2>/(|y1||y2|), in [1,2] for probability rows and 1 only
// when they agree. l1/l2: 1 + distance. Symmetric; never part of the
// gradient graph.
double transfer_weight(const std::vector<double>& y1, const std::vector<double>& y2, WeightMetric metric);

// Row-wise weights for a batch; reads values only (detached).
std::vector<double> transfer_weights(const Tensor& y1, const Tensor& y2, WeightMetric metric);

// Weighted adversarial domain loss over both peers. Source rows carry
// domain label 0, target rows label 1; the discriminator descends this
// loss. A positive grl_coeff inserts grad_reverse(features, grl_coeff)
// in front of the discriminator so that one backward pass also pushes the
// extractors the opposite way; grl_coeff == 0 builds the plain graph.
Tensor domain_loss(Tape* tape, const Discriminator& disc, const Tensor& f1_source, const Tensor& f2_source,
                   const Tensor& f1_target, const Tensor& f2_target, const std::vector<double>& lambda_source,
                   const std::vector<double>& lambda_target, DomainLossKind kind, double grl_coeff);

// Focal classification loss over both peers' noise-adapted predictions:
//   -(1/n) sum_i sum_peer z_i . ((1 - zhat)^gamma (x) log zhat)_i
// gamma = 0 reduces to the sum of two cross-entropies.
Tensor focal_loss(const Tensor& zhat1, const Tensor& zhat2, const Tensor& z_onehot, double gamma);

// Prediction disagreement between the peers, averaged over rows. js is the
// Jensen-Shannon divergence (range [0, 2 ln 2] under this scaling); kl is
// KL(y1 || y2); l1/l2 are row distances; cos is 1 - cosine similarity.
Tensor diversity_loss(const Tensor& y1, const Tensor& y2, DiversityMetric metric);

// Scalar the shared parameters descend: domain term (already carrying the
// gradient reversal) + classification - eta * diversity. With alpha == 0
// the domain term is omitted entirely, so the discriminator sees no
// gradient; with eta == 0 the diversity term is omitted.
Tensor total_objective(double alpha, double eta, const std::optional<Tensor>& domain_term,
                       const Tensor& classification_term, const Tensor& diversity_term);

}  // namespace couda
