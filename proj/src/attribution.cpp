#include "clat/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace clat {

std::string to_string(AttributionMethod m) {
  switch (m) {
    case AttributionMethod::kActXGradExact: return "act_x_grad_exact";
    case AttributionMethod::kClosedForm: return "closed_form";
    case AttributionMethod::kLogitLens: return "logit_lens";
    case AttributionMethod::kActXLogitLens: return "act_x_logit_lens";
    case AttributionMethod::kEnergy: return "energy";
    case AttributionMethod::kIntegratedGradients: return "integrated_gradients";
    case AttributionMethod::kRandom: return "random";
  }
  return "unknown";
}

AttributionMethod attribution_method_from_string(const std::string& s) {
  static const std::map<std::string, AttributionMethod> names = {
      {"act_x_grad_exact", AttributionMethod::kActXGradExact},
      {"act-x-grad", AttributionMethod::kActXGradExact},
      {"act_x_grad", AttributionMethod::kActXGradExact},
      {"closed_form", AttributionMethod::kClosedForm},
      {"closed-form", AttributionMethod::kClosedForm},
      {"logit_lens", AttributionMethod::kLogitLens},
      {"logit-lens", AttributionMethod::kLogitLens},
      {"act_x_logit_lens", AttributionMethod::kActXLogitLens},
      {"act-x-logit-lens", AttributionMethod::kActXLogitLens},
      {"energy", AttributionMethod::kEnergy},
      {"integrated_gradients", AttributionMethod::kIntegratedGradients},
      {"integrated-gradients", AttributionMethod::kIntegratedGradients},
      {"ig", AttributionMethod::kIntegratedGradients},
      {"random", AttributionMethod::kRandom},
  };
  auto it = names.find(s);
  require(it != names.end(), ErrorCode::kUnknownMethod, "unknown attribution method '" + s + "'");
  return it->second;
}

Vec Decomposition::direction(const SaeModel& model, std::size_t j) const {
  if (j == bias_component(model.d_sae())) return bias;
  if (j == error_component(model.d_sae())) return error;
  require(j < model.d_sae(), ErrorCode::kIndexOutOfRange, "component " + std::to_string(j));
  return model.atom(j);
}

double Decomposition::activation(std::size_t j) const {
  const std::size_t d_sae = activations.d_sae;
  if (j == bias_component(d_sae) || j == error_component(d_sae)) return 1.0;
  return activations.at(j);
}

Decomposition decompose(const SaeModel& model, const Vec& x_cls) {
  Decomposition d;
  d.x = x_cls;
  d.activations = encode(model, x_cls);
  d.bias = model.b_dec;
  d.error = x_cls - decode(model, d.activations);
  return d;
}

double AttributionRecord::total() const {
  double s = pseudo_bias_score + pseudo_error_score;
  for (const auto& [j, r] : scores) s += r;
  return s;
}

OutputGradient output_gradient(const HeadParams& head, const Vec& x_cls, const Vec& t) {
  require(x_cls.size() == head.gamma.size(), ErrorCode::kDimMismatch, "embedding width differs from head");
  require(t.size() == head.w_proj.cols(), ErrorCode::kDimMismatch, "text embedding width differs from head");
  const Centered c = center(x_cls);
  const Vec x_proj = head.w_proj.transpose() * ((c.values / c.norm).cwiseProduct(head.gamma) + head.beta);
  const double x_norm = x_proj.norm();
  const double t_norm = t.norm();
  require(x_norm > 0, ErrorCode::kZeroNorm, "projected embedding is zero");
  require(t_norm > 0, ErrorCode::kZeroNorm, "text embedding is zero");

  OutputGradient out;
  out.y = x_proj.dot(t) / (x_norm * t_norm);
  // d y / d x_proj for the cosine.
  const Vec g_proj = (t / t_norm - out.y * x_proj / x_norm) / x_norm;
  // Back through the projection and the gamma scaling of the normalised part.
  const Vec h = head.gamma.cwiseProduct(head.w_proj * g_proj) / c.norm;
  // Back through (x - mean) / ||x - mean||: the Jacobian is
  // (I - n n^T)(I - 11^T/d) / ||c|| with n = c / ||c||; beta is constant.
  const Vec h_centered = h.array() - h.mean();
  out.grad = h_centered - c.values * (h.dot(c.values) / (c.norm * c.norm));
  return out;
}

double logit_lens(const HeadParams& head, const Vec& v_j, const Vec& t) {
  return predict(project_component(head, v_j), t);
}

namespace {

void require_decomposed(const SaeModel& model, const Decomposition& d) {
  require(d.valid(), ErrorCode::kNotDecomposed, "embedding was not decomposed by the SAE");
  require(d.activations.d_sae == model.d_sae() && static_cast<std::size_t>(d.x.size()) == model.d_pre(),
          ErrorCode::kNotDecomposed, "decomposition does not belong to this SAE");
}

AttributionRecord empty_record(AttributionMethod method, double y) {
  AttributionRecord r;
  r.method = method;
  r.output_y = y;
  return r;
}

}  // namespace

AttributionRecord attribute_exact(const SaeModel& model, const HeadParams& head, const Decomposition& d,
                                  const Vec& t) {
  require_decomposed(model, d);
  const OutputGradient g = output_gradient(head, d.x, t);
  AttributionRecord r = empty_record(AttributionMethod::kActXGradExact, g.y);
  for (std::size_t n = 0; n < d.activations.size(); ++n) {
    const auto j = d.activations.indices[n];
    r.scores[j] = d.activations.values[n] * model.decoder.row(j).dot(g.grad);
  }
  r.pseudo_bias_score = d.bias.dot(g.grad);
  r.pseudo_error_score = d.error.dot(g.grad);
  return r;
}

AttributionRecord attribute_exact(const SaeModel& model, const HeadParams& head, const Vec& x_cls, const Vec& t) {
  return attribute_exact(model, head, decompose(model, x_cls), t);
}

AttributionRecord attribute_closed_form(const SaeModel& model, const HeadParams& head, const Decomposition& d,
                                        const Vec& t) {
  require_decomposed(model, d);
  HeadParams no_beta = head;
  no_beta.beta.setZero();

  const Centered c = center(d.x);
  const Vec x_proj = project(no_beta, d.x).values;
  const double x_norm = x_proj.norm();
  require(x_norm > 0, ErrorCode::kZeroNorm, "projected embedding is zero");
  const double y = cosine(x_proj, t);
  const Vec x_unit = x_proj / x_norm;

  // a * ||v_proj||/||x_proj|| * ||u - mu_u||/||x - mu_x|| * (LL - y * cos(v_proj, x_proj))
  auto score = [&](const Vec& u, double a) {
    const Vec u_c = u.array() - u.mean();
    const double u_norm = u_c.norm();
    if (a == 0.0 || u_norm == 0.0) return 0.0;
    const Vec v_proj = no_beta.w_proj.transpose() * (u_c / u_norm).cwiseProduct(no_beta.gamma);
    const double v_norm = v_proj.norm();
    if (v_norm == 0.0) return 0.0;
    const double lens = cosine(v_proj, t);
    const double align = v_proj.dot(x_unit) / v_norm;
    return a * (v_norm / x_norm) * (u_norm / c.norm) * (lens - y * align);
  };

  AttributionRecord r = empty_record(AttributionMethod::kClosedForm, head_output(head, d.x, t));
  for (std::size_t n = 0; n < d.activations.size(); ++n) {
    const auto j = d.activations.indices[n];
    r.scores[j] = score(model.atom(j), d.activations.values[n]);
  }
  r.pseudo_bias_score = score(d.bias, 1.0);
  r.pseudo_error_score = score(d.error, 1.0);
  return r;
}

AttributionRecord attribute_closed_form(const SaeModel& model, const HeadParams& head, const Vec& x_cls,
                                        const Vec& t) {
  return attribute_closed_form(model, head, decompose(model, x_cls), t);
}

namespace {

// Logit lens of a pseudo-component that may be (numerically) constant.
double lens_or_zero(const HeadParams& head, const Vec& v, const Vec& t) {
  try {
    return logit_lens(head, v, t);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kDegenerateInput || e.code() == ErrorCode::kZeroNorm) return 0.0;
    throw;
  }
}

}  // namespace

AttributionRecord attribute_baseline(const SaeModel& model, const HeadParams& head, const Decomposition& d,
                                     const Vec& t, AttributionMethod method, std::uint64_t seed) {
  require_decomposed(model, d);
  AttributionRecord r = empty_record(method, head_output(head, d.x, t));
  const auto& act = d.activations;
  switch (method) {
    case AttributionMethod::kEnergy:
      for (std::size_t n = 0; n < act.size(); ++n)
        r.scores[act.indices[n]] = act.values[n] * model.decoder.row(act.indices[n]).norm();
      r.pseudo_bias_score = d.bias.norm();
      r.pseudo_error_score = d.error.norm();
      break;
    case AttributionMethod::kActXLogitLens:
    case AttributionMethod::kLogitLens: {
      const bool weighted = method == AttributionMethod::kActXLogitLens;
      for (std::size_t n = 0; n < act.size(); ++n) {
        const double lens = logit_lens(head, model.atom(act.indices[n]), t);
        r.scores[act.indices[n]] = weighted ? act.values[n] * lens : lens;
      }
      r.pseudo_bias_score = lens_or_zero(head, d.bias, t);
      r.pseudo_error_score = lens_or_zero(head, d.error, t);
      break;
    }
    case AttributionMethod::kRandom: {
      // Active latents receive the scores n, n-1, ..., 1 in a seeded random
      // order, so ranking by score reproduces the permutation.
      std::vector<std::size_t> order(act.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 rng(seed);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t rank = 0; rank < order.size(); ++rank)
        r.scores[act.indices[order[rank]]] = static_cast<double>(order.size() - rank);
      break;
    }
    default:
      throw Error(ErrorCode::kUnknownMethod, "'" + to_string(method) + "' is not a baseline method");
  }
  return r;
}

AttributionRecord attribute_integrated_gradients(const SaeModel& model, const HeadParams& head,
                                                 const Decomposition& d, const Vec& t, std::size_t steps) {
  require_decomposed(model, d);
  require(steps >= 1, ErrorCode::kInvalidConfig, "integrated gradients needs at least one step");
  const auto& act = d.activations;
  const Vec base = d.bias + d.error;
  Vec latent = Vec::Zero(d.x.size());
  for (std::size_t n = 0; n < act.size(); ++n) latent += act.values[n] * model.decoder.row(act.indices[n]).transpose();

  std::vector<double> sums(act.size(), 0.0);
  for (std::size_t s = 1; s <= steps; ++s) {
    const double alpha = (static_cast<double>(s) - 0.5) / static_cast<double>(steps);
    const OutputGradient g = output_gradient(head, base + alpha * latent, t);
    for (std::size_t n = 0; n < act.size(); ++n) sums[n] += model.decoder.row(act.indices[n]).dot(g.grad);
  }
  AttributionRecord r = empty_record(AttributionMethod::kIntegratedGradients, head_output(head, d.x, t));
  for (std::size_t n = 0; n < act.size(); ++n)
    r.scores[act.indices[n]] = act.values[n] * sums[n] / static_cast<double>(steps);
  return r;
}

AttributionRecord attribute(const SaeModel& model, const HeadParams& head, const Decomposition& d, const Vec& t,
                            const AttributionOptions& options) {
  switch (options.method) {
    case AttributionMethod::kActXGradExact: return attribute_exact(model, head, d, t);
    case AttributionMethod::kClosedForm: return attribute_closed_form(model, head, d, t);
    case AttributionMethod::kIntegratedGradients:
      return attribute_integrated_gradients(model, head, d, t, options.ig_steps);
    default: return attribute_baseline(model, head, d, t, options.method, options.seed);
  }
}

double deletion_effect(const SaeModel& model, const HeadParams& head, const Decomposition& d, const Vec& t,
                       std::size_t j) {
  const std::size_t ids[] = {j};
  return deletion_effect(model, head, d, t, ids);
}

double deletion_effect(const SaeModel& model, const HeadParams& head, const Decomposition& d, const Vec& t,
                       std::span<const std::size_t> ids) {
  require_decomposed(model, d);
  Vec ablated = d.x;
  bool changed = false;
  for (auto j : ids) {
    const double a = d.activation(j);
    if (a == 0.0) continue;
    ablated -= a * d.direction(model, j);
    changed = true;
  }
  if (!changed) return 0.0;
  return head_output(head, d.x, t) - head_output(head, ablated, t);
}

nlohmann::json to_json(const AttributionRecord& r) {
  nlohmann::json j;
  j["sample_id"] = r.sample_id;
  j["prompt_index"] = r.prompt_index;
  j["method"] = to_string(r.method);
  j["output_y"] = r.output_y;
  j["pseudo_bias_score"] = r.pseudo_bias_score;
  j["pseudo_error_score"] = r.pseudo_error_score;
  std::vector<std::uint32_t> ids;
  std::vector<double> values;
  for (const auto& [id, v] : r.scores) {
    ids.push_back(id);
    values.push_back(v);
  }
  j["components"] = ids;
  j["scores"] = values;
  return j;
}

AttributionRecord record_from_json(const nlohmann::json& j) {
  AttributionRecord r;
  try {
    r.sample_id = j.at("sample_id").get<std::string>();
    r.prompt_index = j.at("prompt_index").get<std::size_t>();
    r.method = attribution_method_from_string(j.at("method").get<std::string>());
    r.output_y = j.at("output_y").get<double>();
    r.pseudo_bias_score = j.at("pseudo_bias_score").get<double>();
    r.pseudo_error_score = j.at("pseudo_error_score").get<double>();
    const auto ids = j.at("components").get<std::vector<std::uint32_t>>();
    const auto values = j.at("scores").get<std::vector<double>>();
    require(ids.size() == values.size(), ErrorCode::kDimMismatch, "components/scores length differ");
    for (std::size_t n = 0; n < ids.size(); ++n) r.scores[ids[n]] = values[n];
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kBadFormat, std::string("attribution record: ") + e.what());
  }
  return r;
}

TensorDump records_to_dump(std::span<const AttributionRecord> records, std::size_t d_sae) {
  require(!records.empty(), ErrorCode::kEmptySet, "no attribution records to export");
  Tensor rows{"record_index", {}, {}};
  Tensor cols{"component", {}, {}};
  Tensor vals{"score", {}, {}};
  Tensor ys{"output_y", {records.size()}, {}};
  auto push = [&](std::size_t i, std::size_t j, double v) {
    rows.data.push_back(static_cast<float>(i));
    cols.data.push_back(static_cast<float>(j));
    vals.data.push_back(static_cast<float>(v));
  };
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (const auto& [j, v] : records[i].scores) push(i, j, v);
    push(i, bias_component(d_sae), records[i].pseudo_bias_score);
    push(i, error_component(d_sae), records[i].pseudo_error_score);
    ys.data.push_back(static_cast<float>(records[i].output_y));
  }
  rows.dims = cols.dims = vals.dims = {rows.data.size()};
  TensorDump dump;
  dump.add(std::move(rows));
  dump.add(std::move(cols));
  dump.add(std::move(vals));
  dump.add(std::move(ys));
  return dump;
}

}  // namespace clat
