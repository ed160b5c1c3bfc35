#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "clat/common.hpp"
#include "clat/dump.hpp"

namespace clat {

// Sparse activation pattern of one embedding: sorted component ids with their
// strictly positive activations.
struct ActivationVector {
  std::vector<std::uint32_t> indices;
  std::vector<double> values;
  std::size_t d_sae = 0;

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
  // Activation of component j (zero when inactive).
  double at(std::size_t j) const;
};

// Top-k sparse autoencoder x = sum_i a_i v_i + b_dec + eps.
struct SaeModel {
  Mat w_enc;    // d_pre x d_sae
  Vec b_enc;    // d_sae
  Mat decoder;  // d_sae x d_pre, unit-norm rows v_i
  Vec b_dec;    // d_pre
  std::size_t k = 0;

  std::size_t d_sae() const { return static_cast<std::size_t>(decoder.rows()); }
  std::size_t d_pre() const { return static_cast<std::size_t>(decoder.cols()); }
  Vec atom(std::size_t j) const { return decoder.row(static_cast<Eigen::Index>(j)).transpose(); }
};

void validate(const SaeModel& model, double norm_tolerance = 1e-6);

// Rescales every decoder row to unit Euclidean norm.
void normalize_decoder(SaeModel& model);

// Pre-activations x^T W_enc + b_enc, rectified, then only the k largest kept.
// Ties go to the lower component index.
ActivationVector encode(const SaeModel& model, const Vec& x_cls);

// sum_i a_i v_i + b_dec
Vec decode(const SaeModel& model, const ActivationVector& a);

// x - decode(encode(x))
Vec reconstruction_error(const SaeModel& model, const Vec& x_cls);

struct SaeTrainConfig {
  std::size_t d_sae = 0;
  std::size_t k = 0;
  double learning_rate = 1e-6;
  std::size_t epochs = 30;
  std::vector<std::size_t> decay_epochs{24, 28};
  double decay_factor = 10.0;
  double epoch_subsample_fraction = 0.1;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  double weight_decay = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool include_spatial_tokens = false;

  // ImageNet and ISIC schedules of the reference experiments.
  static SaeTrainConfig imagenet();
  static SaeTrainConfig medical();
};

void validate(const SaeTrainConfig& cfg);

struct SaeTrainResult {
  SaeModel model;
  std::vector<double> epoch_losses;  // mean per-sample loss of each epoch
};

// Normalised-embedding reconstruction loss of one token:
// || x/||x|| - xhat/||xhat|| ||^2, with 1e-12 added under the root of ||xhat||.
double normalized_mse(const Vec& x, const Vec& x_hat);

SaeTrainResult train_sae(const EmbeddingDataset& data, const SaeTrainConfig& cfg);

// Serialisation as a CLAD dump (w_enc, b_enc, decoder, b_dec) plus a JSON
// manifest carrying k and d_sae.
void save_sae(const SaeModel& model, const std::filesystem::path& dump_path,
              const std::filesystem::path& manifest_path);
SaeModel load_sae(const std::filesystem::path& dump_path, const std::filesystem::path& manifest_path);
SaeModel sae_from_dump(const TensorDump& dump, const Manifest& manifest);
TensorDump sae_to_dump(const SaeModel& model);
nlohmann::json sae_manifest(const SaeModel& model);

}  // namespace clat
