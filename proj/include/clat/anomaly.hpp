#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clat/attribution.hpp"
#include "clat/dump.hpp"
#include "clat/head.hpp"
#include "clat/sae.hpp"
#include "clat/semantics.hpp"

namespace clat {

enum class FlagKind { kHiddenConcept, kOverreliance };
std::string to_string(FlagKind k);

struct AnomalyFlag {
  std::string sample_id;  // empty for dataset-level (activation proxy) flags
  int class_id = -1;
  std::size_t component_id = 0;
  double z = 0.0;          // overreliance only
  double relevance = 0.0;  // relevance, or activation in proxy mode
  double alignment = 0.0;  // hidden concepts only
  FlagKind kind = FlagKind::kOverreliance;
  // Thresholds the flag was raised under: (tau_rel, tau_align) for hidden
  // concepts, (z_threshold, min_firing) for overreliance.
  double threshold_a = 0.0;
  double threshold_b = 0.0;
};

// Components with relevance >= tau_rel on a record and label alignment
// <= tau_align. Components without a profile are skipped.
std::vector<AnomalyFlag> hidden_concepts(std::span<const AttributionRecord> records,
                                         std::span<const ComponentProfile> profiles, double tau_rel,
                                         double tau_align, int class_id = -1);

// Output-agnostic variant using the mean top-q activation of each profile as
// the relevance proxy.
std::vector<AnomalyFlag> hidden_concepts_by_activation(std::span<const ComponentProfile> profiles, double tau_act,
                                                       double tau_align);

struct RelevanceStats {
  std::size_t component_id = 0;
  int class_id = -1;
  double mean = 0.0;
  double std = 0.0;  // n - 1 denominator
  double skewness = 0.0;
  std::size_t n = 0;
};

// Per-component relevance distribution over a reference set. Components that
// are inactive on a reference sample contribute a zero relevance there, and
// components never seen have mean = std = 0.
class RelevanceTable {
 public:
  RelevanceTable() = default;
  RelevanceTable(std::map<std::size_t, RelevanceStats> stats, std::size_t n, int class_id)
      : stats_(std::move(stats)), n_(n), class_id_(class_id) {}

  RelevanceStats get(std::size_t component) const;
  const std::map<std::size_t, RelevanceStats>& stats() const { return stats_; }
  std::size_t sample_count() const { return n_; }

 private:
  std::map<std::size_t, RelevanceStats> stats_;
  std::size_t n_ = 0;
  int class_id_ = -1;
};

RelevanceTable fit_relevance_stats(std::span<const AttributionRecord> records, int class_id = -1);

// (r - mean) / std. With std == 0 the result is 0 when r equals the mean and
// +/-infinity otherwise (the InfiniteZ sentinel).
double z_score(const RelevanceStats& stats, double r_test);
inline bool is_infinite_z(double z) { return std::isinf(z); }

struct MiningConfig {
  double confidence_slack = 1.5;
  double z_threshold = 3.0;
  std::size_t min_firing = 10;
  std::size_t stride = 1;               // keep every stride-th sample of the dataset
  std::vector<int> classes;             // empty: every class with samples
  std::map<int, std::size_t> class_prompt;  // class id -> bank row; default row = class id
  AttributionOptions attribution;
  unsigned threads = 1;
};

struct ClassMiningSummary {
  int class_id = -1;
  std::size_t reference_count = 0;
  std::size_t candidate_count = 0;
  double output_mean = 0.0;
  double output_std = 0.0;
  double output_threshold = 0.0;
};

struct FailureCase {
  int class_id = -1;
  std::size_t component_id = 0;
  std::size_t firing_count = 0;  // candidates on which the component is active
  double max_z = 0.0;
  RelevanceStats reference;
  std::vector<std::size_t> flagged_samples;  // dataset indices with z > threshold
};

struct MiningResult {
  std::vector<AnomalyFlag> flags;
  std::vector<FailureCase> cases;
  std::vector<ClassMiningSummary> classes;
};

// For each class: fit relevance stats on the class's own samples, select the
// non-class samples whose output for the class prompt exceeds
// mean - slack * std of the class outputs, attribute them, and flag
// components with z > z_threshold that fire on at least min_firing of them.
MiningResult mine_failure_modes(const EmbeddingDataset& data, const SaeModel& model, const HeadParams& head,
                                const TextBank& bank, const MiningConfig& cfg);

nlohmann::json to_json(const AnomalyFlag& f);
nlohmann::json to_json(const FailureCase& c, const EmbeddingDataset& data);

}  // namespace clat
