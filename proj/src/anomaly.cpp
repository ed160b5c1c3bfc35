#include "clat/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "clat/parallel.hpp"

namespace clat {

std::string to_string(FlagKind k) { return k == FlagKind::kHiddenConcept ? "hidden_concept" : "overreliance"; }

std::vector<AnomalyFlag> hidden_concepts(std::span<const AttributionRecord> records,
                                         std::span<const ComponentProfile> profiles, double tau_rel,
                                         double tau_align, int class_id) {
  std::map<std::size_t, const ComponentProfile*> by_id;
  for (const auto& p : profiles) by_id[p.component_id] = &p;
  std::vector<AnomalyFlag> flags;
  for (const auto& r : records) {
    for (const auto& [j, rel] : r.scores) {
      auto it = by_id.find(j);
      if (it == by_id.end()) continue;
      if (rel >= tau_rel && it->second->alignment <= tau_align) {
        AnomalyFlag f;
        f.sample_id = r.sample_id;
        f.class_id = class_id;
        f.component_id = j;
        f.relevance = rel;
        f.alignment = it->second->alignment;
        f.kind = FlagKind::kHiddenConcept;
        f.threshold_a = tau_rel;
        f.threshold_b = tau_align;
        flags.push_back(std::move(f));
      }
    }
  }
  return flags;
}

std::vector<AnomalyFlag> hidden_concepts_by_activation(std::span<const ComponentProfile> profiles, double tau_act,
                                                       double tau_align) {
  std::vector<AnomalyFlag> flags;
  for (const auto& p : profiles) {
    if (p.top_activation_mean >= tau_act && p.alignment <= tau_align) {
      AnomalyFlag f;
      f.component_id = p.component_id;
      f.relevance = p.top_activation_mean;
      f.alignment = p.alignment;
      f.kind = FlagKind::kHiddenConcept;
      f.threshold_a = tau_act;
      f.threshold_b = tau_align;
      flags.push_back(std::move(f));
    }
  }
  return flags;
}

RelevanceStats RelevanceTable::get(std::size_t component) const {
  auto it = stats_.find(component);
  if (it != stats_.end()) return it->second;
  RelevanceStats s;
  s.component_id = component;
  s.class_id = class_id_;
  s.n = n_;
  return s;
}

RelevanceTable fit_relevance_stats(std::span<const AttributionRecord> records, int class_id) {
  require(records.size() >= 2, ErrorCode::kTooFewSamples, "relevance statistics need at least two samples");
  const double n = static_cast<double>(records.size());
  std::set<std::size_t> components;
  for (const auto& r : records)
    for (const auto& [j, v] : r.scores) components.insert(j);

  std::map<std::size_t, RelevanceStats> stats;
  for (auto j : components) {
    double sum = 0;
    const double first = records.front().score(static_cast<std::uint32_t>(j));
    bool constant = true;
    for (const auto& r : records) {
      const double v = r.score(static_cast<std::uint32_t>(j));
      sum += v;
      constant = constant && v == first;
    }
    // a constant column gets its exact value and zero spread, not rounding noise
    const double mean = constant ? first : sum / n;
    double m2 = 0, m3 = 0;
    for (const auto& r : records) {
      const double d = r.score(static_cast<std::uint32_t>(j)) - mean;
      m2 += d * d;
      m3 += d * d * d;
    }
    RelevanceStats s;
    s.component_id = j;
    s.class_id = class_id;
    s.n = records.size();
    s.mean = mean;
    s.std = std::sqrt(m2 / (n - 1.0));
    s.skewness = m2 > 0 ? (m3 / n) / std::pow(m2 / n, 1.5) : 0.0;
    stats.emplace(j, s);
  }
  return RelevanceTable(std::move(stats), records.size(), class_id);
}

double z_score(const RelevanceStats& stats, double r_test) {
  if (stats.std > 0) return (r_test - stats.mean) / stats.std;
  if (r_test == stats.mean) return 0.0;
  return r_test > stats.mean ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
}

namespace {

std::vector<AttributionRecord> attribute_all(const EmbeddingDataset& data, const SaeModel& model,
                                             const HeadParams& head, const Vec& t, std::size_t prompt_index,
                                             std::span<const std::size_t> samples, const MiningConfig& cfg) {
  std::vector<AttributionRecord> out(samples.size());
  parallel_for(samples.size(), cfg.threads, [&](std::size_t n) {
    const std::size_t i = samples[n];
    const Vec x = data.cls_embeddings.row(static_cast<Eigen::Index>(i)).transpose();
    AttributionOptions opts = cfg.attribution;
    opts.seed = cfg.attribution.seed + i;
    out[n] = attribute(model, head, decompose(model, x), t, opts);
    out[n].sample_id = data.sample_ids[i];
    out[n].prompt_index = prompt_index;
  });
  return out;
}

}  // namespace

MiningResult mine_failure_modes(const EmbeddingDataset& data, const SaeModel& model, const HeadParams& head,
                                const TextBank& bank, const MiningConfig& cfg) {
  require(cfg.stride >= 1, ErrorCode::kInvalidConfig, "stride must be at least 1");
  require(cfg.confidence_slack >= 0, ErrorCode::kInvalidConfig, "confidence_slack must be non-negative");
  std::vector<std::size_t> subset;
  for (std::size_t i = 0; i < data.size(); i += cfg.stride) subset.push_back(i);

  std::vector<int> classes = cfg.classes;
  if (classes.empty()) {
    std::set<int> present(data.labels.begin(), data.labels.end());
    classes.assign(present.begin(), present.end());
  }

  MiningResult result;
  for (int c : classes) {
    std::size_t row = static_cast<std::size_t>(c);
    if (auto it = cfg.class_prompt.find(c); it != cfg.class_prompt.end()) row = it->second;
    require(c >= 0 && row < bank.size(), ErrorCode::kIndexOutOfRange,
            "class " + std::to_string(c) + " has no prompt in bank '" + bank.name + "'");
    const Vec t = bank.embeddings.row(static_cast<Eigen::Index>(row)).transpose();

    std::vector<std::size_t> reference, others;
    for (auto i : subset) (data.labels[i] == c ? reference : others).push_back(i);
    require(!reference.empty(), ErrorCode::kEmptyClass, "class " + std::to_string(c) + " has no samples");

    const auto ref_records = attribute_all(data, model, head, t, row, reference, cfg);
    const RelevanceTable table = fit_relevance_stats(ref_records, c);

    ClassMiningSummary summary;
    summary.class_id = c;
    summary.reference_count = reference.size();
    double sum = 0;
    for (const auto& r : ref_records) sum += r.output_y;
    summary.output_mean = sum / static_cast<double>(ref_records.size());
    double ss = 0;
    for (const auto& r : ref_records) ss += (r.output_y - summary.output_mean) * (r.output_y - summary.output_mean);
    summary.output_std = std::sqrt(ss / static_cast<double>(ref_records.size() - 1));
    summary.output_threshold = summary.output_mean - cfg.confidence_slack * summary.output_std;

    std::vector<double> outputs(others.size());
    parallel_for(others.size(), cfg.threads, [&](std::size_t n) {
      outputs[n] = head_output(head, data.cls_embeddings.row(static_cast<Eigen::Index>(others[n])).transpose(), t);
    });
    std::vector<std::size_t> candidates;
    for (std::size_t n = 0; n < others.size(); ++n)
      if (outputs[n] > summary.output_threshold) candidates.push_back(others[n]);
    summary.candidate_count = candidates.size();
    result.classes.push_back(summary);
    if (candidates.empty()) continue;

    const auto cand_records = attribute_all(data, model, head, t, row, candidates, cfg);
    std::map<std::size_t, FailureCase> by_component;
    std::map<std::size_t, std::vector<AnomalyFlag>> pending;
    for (std::size_t n = 0; n < cand_records.size(); ++n) {
      for (const auto& [j, rel] : cand_records[n].scores) {
        auto& fc = by_component[j];
        fc.class_id = c;
        fc.component_id = j;
        ++fc.firing_count;
        const RelevanceStats stats = table.get(j);
        const double z = z_score(stats, rel);
        if (z > cfg.z_threshold) {
          fc.reference = stats;
          fc.max_z = fc.flagged_samples.empty() ? z : std::max(fc.max_z, z);
          fc.flagged_samples.push_back(candidates[n]);
          AnomalyFlag f;
          f.sample_id = cand_records[n].sample_id;
          f.class_id = c;
          f.component_id = j;
          f.z = z;
          f.relevance = rel;
          f.kind = FlagKind::kOverreliance;
          f.threshold_a = cfg.z_threshold;
          f.threshold_b = static_cast<double>(cfg.min_firing);
          pending[j].push_back(std::move(f));
        }
      }
    }
    for (auto& [j, fc] : by_component) {
      if (fc.flagged_samples.empty() || fc.firing_count < cfg.min_firing) continue;
      for (auto& f : pending[j]) result.flags.push_back(std::move(f));
      result.cases.push_back(std::move(fc));
    }
  }
  return result;
}

namespace {

nlohmann::json z_json(double z) {
  if (std::isinf(z)) return z > 0 ? "inf" : "-inf";
  return z;
}

}  // namespace

nlohmann::json to_json(const AnomalyFlag& f) {
  nlohmann::json j;
  j["sample_id"] = f.sample_id;
  j["class_id"] = f.class_id;
  j["component_id"] = f.component_id;
  j["kind"] = to_string(f.kind);
  j["relevance"] = f.relevance;
  if (f.kind == FlagKind::kOverreliance) {
    j["z"] = z_json(f.z);
    j["z_threshold"] = f.threshold_a;
    j["min_firing"] = f.threshold_b;
  } else {
    j["alignment"] = f.alignment;
    j["tau_rel"] = f.threshold_a;
    j["tau_align"] = f.threshold_b;
  }
  return j;
}

nlohmann::json to_json(const FailureCase& c, const EmbeddingDataset& data) {
  nlohmann::json j;
  j["class_id"] = c.class_id;
  if (auto it = data.class_names.find(c.class_id); it != data.class_names.end()) j["class_name"] = it->second;
  j["component_id"] = c.component_id;
  j["firing_count"] = c.firing_count;
  j["max_z"] = z_json(c.max_z);
  j["reference_mean"] = c.reference.mean;
  j["reference_std"] = c.reference.std;
  j["reference_skewness"] = c.reference.skewness;
  std::vector<std::string> ids;
  for (auto i : c.flagged_samples) ids.push_back(data.sample_ids[i]);
  j["flagged_samples"] = ids;
  return j;
}

}  // namespace clat
