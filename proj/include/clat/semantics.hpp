#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "clat/common.hpp"
#include "clat/dump.hpp"
#include "clat/sae.hpp"

namespace clat {

struct TopActivating {
  std::vector<std::pair<std::size_t, double>> samples;  // (sample index, activation), descending
  bool truncated = false;                               // fewer than q firings
};

// The q samples with the largest activation of component j; ties go to the
// earlier sample.
TopActivating top_activating(std::span<const ActivationVector> activations, std::size_t j, std::size_t q);

struct ComponentLabel {
  std::size_t label_index = 0;
  double alignment = 0.0;
};

// cos(mean, t) - cos(mean, t_empty)
double alignment_score(const Vec& mean_embedding, const Vec& t, const Vec& t_empty);
// argmax over the bank of alignment_score, ties to the lower prompt index.
ComponentLabel label_component(const Vec& mean_embedding, const TextBank& bank);

// Mean pairwise cosine similarity of the rows (q >= 2).
double clarity(const Mat& embeddings);

struct ComponentProfile {
  std::size_t component_id = 0;
  std::vector<std::pair<std::size_t, double>> top_samples;
  Vec mean_embedding;
  std::size_t label_index = 0;
  double alignment = 0.0;
  double clarity = 0.0;
  double top_activation_mean = 0.0;  // over the q top samples
  double top5_mean = 0.0;
  double dataset_mean = 0.0;  // over all samples, zeros included
  std::size_t firing_count = 0;
  bool truncated = false;
};

struct ProfileConfig {
  std::size_t q = 20;
  std::size_t min_firing = 20;
  unsigned threads = 1;
};

// Profiles every component that fires at least max(min_firing, 2) times.
// scoring_embeddings holds one row per sample in the space used for labelling
// and clarity, which need not be the analysed model's space.
std::vector<ComponentProfile> build_profiles(std::span<const ActivationVector> activations,
                                             const Mat& scoring_embeddings, const TextBank& bank,
                                             const ProfileConfig& cfg);

// Number of distinct labels over the profiles.
std::size_t concept_diversity(std::span<const ComponentProfile> profiles);

enum class ActivationStatistic { kTop5Mean, kDatasetMean, kFiringCount };
std::string to_string(ActivationStatistic s);

double pearson(std::span<const double> a, std::span<const double> b);

// Pearson correlation between an activation statistic (optionally log10) and
// clarity over the profiles.
double activation_clarity_correlation(std::span<const ComponentProfile> profiles, ActivationStatistic stat,
                                      bool log_scale = false);

enum class ClarityGroup { kLow, kMedium, kHigh };
// high: c >= 0.6, medium: 0.4 < c < 0.6, low: otherwise.
ClarityGroup clarity_group(double c);

// Principal-direction basis expressed as an SAE: for each of the first n
// principal axes e_i the dictionary holds +e_i and -e_i, the encoder projects
// the centred input and k = n, so encode/decode reconstructs the projection
// onto the n-dimensional principal subspace.
SaeModel pca_dictionary(const Mat& embeddings, std::size_t n_components);

}  // namespace clat
