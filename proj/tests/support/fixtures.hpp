#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "clat/attribution.hpp"
#include "clat/dump.hpp"
#include "clat/sae.hpp"

namespace fixtures {

using clat::Mat;
using clat::Vec;

Vec gaussian(std::mt19937_64& rng, std::size_t n, double scale = 1.0);
Mat gaussian_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale = 1.0);

// Rows are orthonormal and sum to zero (they live in the centred subspace).
Mat centered_orthonormal_rows(std::mt19937_64& rng, std::size_t rows, std::size_t dim);

clat::HeadParams random_head(std::mt19937_64& rng, std::size_t d_pre, std::size_t d_post, bool with_beta);

// Generic random SAE: Gaussian encoder, unit-norm Gaussian decoder, small biases.
clat::SaeModel random_sae(std::mt19937_64& rng, std::size_t d_pre, std::size_t d_sae, std::size_t k);

// SAE whose decoder rows are the given orthonormal atoms and whose encoder is
// their transpose, so x = sum a_i v_i with a_i > 0 decodes exactly.
clat::SaeModel orthonormal_sae(const Mat& atoms, std::size_t k);

struct Instance {
  clat::HeadParams head;
  clat::SaeModel model;
  Vec x;
  Vec t;
};

// Random head, SAE, embedding and text vector; retried until at least one
// latent fires.
Instance random_instance(std::uint64_t seed, std::size_t d_pre, bool with_beta);

// Straight-line reference forward pass: centre, normalise, scale and shift,
// project, cosine. Shares no code with the library.
double reference_output(const clat::HeadParams& head, const Vec& x, const Vec& t);

// (y(x + h u) - y(x - h u)) / 2h with the reference forward pass.
double central_difference(const clat::HeadParams& head, const Vec& x, const Vec& t, const Vec& u, double h);

// Pairwise count: (wins + ties / 2) / (n_pos * n_neg).
double brute_force_auroc(const std::vector<double>& pos, const std::vector<double>& neg);

// One latent (id 0) carries the direction the text prompt is aligned with;
// the others are orthogonal in the pre-head space.
struct CarrierFixture {
  clat::HeadParams head;
  clat::SaeModel model;
  clat::EmbeddingDataset data;
  std::vector<Vec> prompts;
};
CarrierFixture single_carrier(std::uint64_t seed, std::size_t n_samples = 20);

// Class 0 ("bird") and class 1 ("car") plus distractors of class 2 that carry
// a shortcut latent the class 0 prompt partly aligns with.
struct ShortcutFixture {
  clat::HeadParams head;
  clat::SaeModel model;
  clat::EmbeddingDataset data;
  std::vector<clat::TextBank> banks;  // short_name, templated, extended_description
  Mat scoring;
  std::size_t planted = 0;      // the shortcut latent
  std::size_t n_distractors = 0;
};
ShortcutFixture planted_shortcut(std::uint64_t seed);

// Binary task where one coordinate (signal) is weakly predictive and another
// (shortcut) is nearly noise-free on the training split. A separate concept
// pool carries the shortcut latent, on or off, for direction estimation.
struct ProbeShortcutData {
  Mat train;
  std::vector<int> train_labels;
  Mat test;
  std::vector<int> test_labels;
  std::size_t signal_axis = 0;
  std::size_t shortcut_axis = 1;
  Mat concept_pool;
  // Per-sample shortcut activation, as an SAE latent would report it.
  std::vector<clat::ActivationVector> concept_activations;
};
ProbeShortcutData probe_shortcut(std::uint64_t seed);

// Writes dump.clad and manifest.json for the shortcut fixture into dir.
void write_bundle(const ShortcutFixture& f, const std::filesystem::path& dir);

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures
