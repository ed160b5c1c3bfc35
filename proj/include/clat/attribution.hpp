#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clat/common.hpp"
#include "clat/dump.hpp"
#include "clat/head.hpp"
#include "clat/sae.hpp"

namespace clat {

enum class AttributionMethod {
  kActXGradExact,
  kClosedForm,
  kLogitLens,
  kActXLogitLens,
  kEnergy,
  kIntegratedGradients,
  kRandom,
};

std::string to_string(AttributionMethod m);
// Accepts the canonical snake_case tags and the CLI spellings
// (act-x-grad, closed-form, logit-lens, act-x-logit-lens, energy, ig, random).
AttributionMethod attribution_method_from_string(const std::string& s);

// An embedding split into x = sum_i a_i v_i + b_dec + eps. Attribution always
// works against the original embedding; eps absorbs whatever the SAE misses.
struct Decomposition {
  Vec x;
  ActivationVector activations;
  Vec bias;
  Vec error;

  bool valid() const { return x.size() > 0 && bias.size() == x.size() && error.size() == x.size(); }
  // Pre-head direction and activation of a latent or pseudo-component id.
  Vec direction(const SaeModel& model, std::size_t j) const;
  double activation(std::size_t j) const;
};

Decomposition decompose(const SaeModel& model, const Vec& x_cls);

struct AttributionRecord {
  std::string sample_id;
  std::size_t prompt_index = 0;
  AttributionMethod method = AttributionMethod::kActXGradExact;
  std::map<std::uint32_t, double> scores;  // active components only
  double pseudo_bias_score = 0.0;
  double pseudo_error_score = 0.0;
  double output_y = 0.0;

  double score(std::uint32_t j) const {
    auto it = scores.find(j);
    return it == scores.end() ? 0.0 : it->second;
  }
  // Sum over components plus both pseudo-components.
  double total() const;
};

// Output y and its gradient with respect to the pre-head embedding x. The
// directional derivative along any pre-head vector u is grad . u, so
// dy/da_j = grad . v_j. This is the exact chain rule through the cosine, the
// projection and the LayerNorm (including beta, which drops out).
struct OutputGradient {
  double y = 0.0;
  Vec grad;
};
OutputGradient output_gradient(const HeadParams& head, const Vec& x_cls, const Vec& t);

double logit_lens(const HeadParams& head, const Vec& v_j, const Vec& t);

AttributionRecord attribute_exact(const SaeModel& model, const HeadParams& head, const Decomposition& d,
                                  const Vec& t);
AttributionRecord attribute_exact(const SaeModel& model, const HeadParams& head, const Vec& x_cls, const Vec& t);

// Closed-form approximation derived under beta = 0: both the sample and every
// component are projected with beta forced to zero.
AttributionRecord attribute_closed_form(const SaeModel& model, const HeadParams& head, const Decomposition& d,
                                        const Vec& t);
AttributionRecord attribute_closed_form(const SaeModel& model, const HeadParams& head, const Vec& x_cls,
                                        const Vec& t);

// energy, act_x_logit_lens, logit_lens or random (seeded permutation of the
// active latents). Any other method raises UnknownMethod.
AttributionRecord attribute_baseline(const SaeModel& model, const HeadParams& head, const Decomposition& d,
                                     const Vec& t, AttributionMethod method, std::uint64_t seed = 0);

// Midpoint-rule integrated gradients from the all-latents-off point b + eps.
AttributionRecord attribute_integrated_gradients(const SaeModel& model, const HeadParams& head,
                                                 const Decomposition& d, const Vec& t, std::size_t steps = 10);

struct AttributionOptions {
  AttributionMethod method = AttributionMethod::kActXGradExact;
  std::size_t ig_steps = 10;
  std::uint64_t seed = 0;
};
AttributionRecord attribute(const SaeModel& model, const HeadParams& head, const Decomposition& d, const Vec& t,
                            const AttributionOptions& options);

// y(x) - y(x - a_j v_j): the exact effect of zeroing one latent (or removing a
// pseudo-component) on the original embedding.
double deletion_effect(const SaeModel& model, const HeadParams& head, const Decomposition& d, const Vec& t,
                       std::size_t j);
double deletion_effect(const SaeModel& model, const HeadParams& head, const Decomposition& d, const Vec& t,
                       std::span<const std::size_t> ids);

nlohmann::json to_json(const AttributionRecord& r);
AttributionRecord record_from_json(const nlohmann::json& j);

// Bulk export in coordinate form: "record_index", "component", "score" (one
// row per nonzero score, pseudo-components as d_sae and d_sae + 1) plus
// "output_y" per record.
TensorDump records_to_dump(std::span<const AttributionRecord> records, std::size_t d_sae);

}  // namespace clat
