#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "clat/attribution.hpp"
#include "clat/dump.hpp"
#include "clat/head.hpp"
#include "clat/probe.hpp"
#include "clat/sae.hpp"

namespace clat {

enum class CurveMode { kDeletionLocal, kDeletionGlobal, kDeletionRandomRef, kInsertionLocal };
std::string to_string(CurveMode m);
CurveMode curve_mode_from_string(const std::string& s);

// Where global ranking scores come from. Global mode averages each class's
// own samples; random-reference mode averages a seeded random pool drawn from
// the whole dataset, scored against each class prompt.
struct ReferencePolicy {
  std::size_t pool_size = 500;
  std::uint64_t seed = 0;
};

struct CurveRequest {
  AttributionOptions attribution;
  CurveMode mode = CurveMode::kDeletionLocal;
  std::size_t max_steps = 10;
  ReferencePolicy reference;
  unsigned threads = 1;
};

struct PerturbationCurve {
  CurveMode mode = CurveMode::kDeletionLocal;
  AttributionMethod method = AttributionMethod::kActXGradExact;
  std::vector<double> steps;       // mean output per step, max_steps + 1 entries
  Mat per_sample;                  // kept samples x (max_steps + 1)
  std::vector<std::size_t> kept;   // dataset indices of the rows of per_sample
  std::size_t dropped = 0;         // samples that hit DegenerateInput

  std::size_t n_samples() const { return kept.size(); }
};

// Ranks each sample's active latents by the method's scores and removes
// (deletion) or restores (insertion) them one per step, always intervening on
// the original embedding: step s evaluates x minus the contributions a_j v_j
// that are currently switched off. `prompts` holds one text embedding per
// sample (normally its class prompt).
PerturbationCurve run_perturbation_curve(const EmbeddingDataset& data, const SaeModel& model,
                                         const HeadParams& head, std::span<const Vec> prompts,
                                         const CurveRequest& request);

// Area under a curve: the mean of its step values.
double curve_auc(std::span<const double> steps);

struct AucReport {
  double auc = 0.0;
  double sem = 0.0;
  std::vector<double> subset_aucs;
};

// Seeded shuffle, contiguous blocks, curves averaged within each block, AUC
// per block; SEM uses the n - 1 standard deviation over blocks.
AucReport auc_with_sem(const Mat& per_sample_curves, std::size_t subsets = 9, std::uint64_t seed = 0);

// Probability that a positive outranks a negative, ties counted one half,
// from average ranks.
double auroc(std::span<const double> positives, std::span<const double> negatives);

struct FailureCaseSpec {
  std::string category;
  int class_id = -1;
  std::vector<std::size_t> class_samples;
  std::vector<std::size_t> spurious_samples;
  // Negatives for the valid AUC; empty means every sample that is neither in
  // the class nor in the spurious set.
  std::vector<std::size_t> valid_negatives;
};

struct BenchmarkRow {
  std::size_t case_index = 0;
  std::string category;
  int class_id = -1;
  std::string strategy;
  double spurious_auc = 0.0;
  double valid_auc = 0.0;
};

struct BenchmarkSummary {
  std::string category;
  std::string strategy;
  std::size_t n = 0;
  double spurious_mean = 0.0;
  double spurious_sem = 0.0;
  double valid_mean = 0.0;
  double valid_sem = 0.0;
};

struct BenchmarkDelta {
  std::string category;
  std::string strategy;
  std::string baseline;
  std::size_t n = 0;
  double mean = 0.0;  // mean of per-case spurious AUC differences
  double sem = 0.0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  std::vector<BenchmarkSummary> summaries;
  std::vector<BenchmarkDelta> deltas;
};

struct BenchmarkRequest {
  // Bank strategies by bank name or variant tag; "probe" selects the probes.
  std::vector<std::string> strategies{"short_name", "templated", "extended_description"};
  std::string baseline = "short_name";
  // Bank row of each class prompt; default row = class id.
  std::map<int, std::size_t> class_prompt;
};

// Spurious AUC separates class samples from the spurious set; valid AUC from
// the other negatives. Scores are the cosine to the class prompt of each bank
// strategy, or the decision value of the class's linear probe.
BenchmarkReport benchmark_failure_modes(std::span<const FailureCaseSpec> cases, const EmbeddingDataset& data,
                                        const HeadParams& head, const std::map<std::string, TextBank>& banks,
                                        const std::map<int, LinearProbe>& probes, const BenchmarkRequest& request);

// Mean and n - 1 standard error of a sample.
struct MeanSem {
  double mean = 0.0;
  double sem = 0.0;
};
MeanSem mean_sem(std::span<const double> values);

}  // namespace clat
