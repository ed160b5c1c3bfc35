#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "clat/common.hpp"
#include "clat/dump.hpp"
#include "clat/sae.hpp"

namespace clat {

// Concept direction in projected embedding space: mean(high set) - mean(low set).
struct LatentDirection {
  Vec values;
  std::size_t source_component = 0;
  double low_threshold = 0.0;
  double high_threshold = 0.0;
  std::size_t n_low = 0;
  std::size_t n_high = 0;
};

// Samples with activation of `component` strictly below low_thr form the low
// set and strictly above high_thr the high set; `keep` (if given) filters
// samples by index first. EmptySet when either set ends up empty.
LatentDirection estimate_direction(const Mat& embeddings, std::span<const ActivationVector> activations,
                                   std::size_t component, double low_thr, double high_thr,
                                   const std::function<bool(std::size_t)>& keep = {});

// x + alpha * (p - 0.5) * u
Vec augment_latent(const Vec& x, const LatentDirection& dir, double alpha, double p);

struct ProbeTrainConfig {
  double learning_rate = 0.5;
  std::size_t epochs = 2000;
  double l2 = 0.0;
  std::uint64_t seed = 0;
  double gradient_tolerance = 1e-6;
  // Latent augmentation: each epoch every sample is shifted along the
  // direction with a fresh p ~ U(0, 1).
  std::optional<LatentDirection> augment_direction;
  double augment_alpha = 0.5;
};

struct LinearProbe {
  Vec weights;
  double bias = 0.0;
  int negative_label = 0;
  int positive_label = 1;
  ProbeTrainConfig train_config;
  std::size_t epochs_run = 0;

  double decision(const Vec& x) const { return weights.dot(x) + bias; }
  double probability(const Vec& x) const;
  int predict(const Vec& x) const { return decision(x) > 0 ? positive_label : negative_label; }
};

// Full-batch gradient descent on the mean logistic loss (+ l2/2 ||w||^2),
// starting from zero weights. Labels must be 0 (negative) or 1 (positive).
LinearProbe train_linear_probe(const Mat& embeddings, std::span<const int> labels, const ProbeTrainConfig& cfg);

double accuracy(const LinearProbe& probe, const Mat& embeddings, std::span<const int> labels);

TensorDump probe_to_dump(const LinearProbe& probe);
LinearProbe probe_from_dump(const TensorDump& dump);

// red' = clamp(red * (1 - delta), 0, 1)
double augment_red_value(double red, double delta);

// Planar RGB images with dims [3, H, W] or [N, 3, H, W]; only the red plane
// changes. OutOfRangeInput when any value lies outside [0, 1].
Tensor augment_red_channel(const Tensor& images, double delta);

struct LabeledEmbeddings {
  Mat embeddings;
  std::vector<int> labels;
};

struct SweepRow {
  double delta = 0.0;
  int label = 0;
  std::size_t n = 0;
  double accuracy = 0.0;
  double sem = 0.0;              // binomial sqrt(p(1-p)/n)
  double change_vs_baseline = 0.0;  // accuracy - baseline accuracy for the same label
};

// Per-delta, per-class accuracy of the probe. The delta = 0 entry is the
// baseline and must be present.
std::vector<SweepRow> robustness_sweep(const LinearProbe& probe, const std::map<double, LabeledEmbeddings>& datasets);

}  // namespace clat
