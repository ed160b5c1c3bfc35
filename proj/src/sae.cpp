#include "clat/sae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace clat {

double ActivationVector::at(std::size_t j) const {
  auto it = std::lower_bound(indices.begin(), indices.end(), static_cast<std::uint32_t>(j));
  if (it == indices.end() || *it != j) return 0.0;
  return values[static_cast<std::size_t>(it - indices.begin())];
}

void validate(const SaeModel& model, double norm_tolerance) {
  const auto d_sae = static_cast<Eigen::Index>(model.d_sae());
  const auto d_pre = static_cast<Eigen::Index>(model.d_pre());
  require(d_sae > 0 && d_pre > 0, ErrorCode::kDimMismatch, "empty SAE");
  require(model.w_enc.rows() == d_pre && model.w_enc.cols() == d_sae, ErrorCode::kDimMismatch,
          "w_enc must be d_pre x d_sae");
  require(model.b_enc.size() == d_sae, ErrorCode::kDimMismatch, "b_enc must have d_sae entries");
  require(model.b_dec.size() == d_pre, ErrorCode::kDimMismatch, "b_dec must have d_pre entries");
  require(model.k >= 1 && model.k <= model.d_sae(), ErrorCode::kInvalidConfig, "k must lie in [1, d_sae]");
  require(model.w_enc.allFinite() && model.b_enc.allFinite() && model.decoder.allFinite() &&
              model.b_dec.allFinite(),
          ErrorCode::kNonFiniteValue, "SAE parameters contain NaN or Inf");
  for (Eigen::Index i = 0; i < d_sae; ++i) {
    const double n = model.decoder.row(i).norm();
    require(std::abs(n - 1.0) <= norm_tolerance, ErrorCode::kBadFormat,
            "decoder row " + std::to_string(i) + " has norm " + std::to_string(n));
  }
}

void normalize_decoder(SaeModel& model) {
  for (Eigen::Index i = 0; i < model.decoder.rows(); ++i) {
    const double n = model.decoder.row(i).norm();
    if (n > 0) model.decoder.row(i) /= n;
  }
}

namespace {

// Selects the k largest positive entries of `pre`, ties to lower index.
ActivationVector top_k(const Vec& pre, std::size_t k) {
  ActivationVector out;
  out.d_sae = static_cast<std::size_t>(pre.size());
  std::vector<std::uint32_t> positive;
  for (Eigen::Index i = 0; i < pre.size(); ++i)
    if (pre[i] > 0.0) positive.push_back(static_cast<std::uint32_t>(i));
  auto before = [&](std::uint32_t a, std::uint32_t b) { return pre[a] > pre[b] || (pre[a] == pre[b] && a < b); };
  if (positive.size() > k) {
    std::nth_element(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(k), positive.end(), before);
    positive.resize(k);
  }
  std::sort(positive.begin(), positive.end());
  out.indices = std::move(positive);
  out.values.reserve(out.indices.size());
  for (auto i : out.indices) out.values.push_back(pre[i]);
  return out;
}

}  // namespace

ActivationVector encode(const SaeModel& model, const Vec& x_cls) {
  require(static_cast<std::size_t>(x_cls.size()) == model.d_pre(), ErrorCode::kDimMismatch,
          "embedding width " + std::to_string(x_cls.size()) + " != SAE d_pre " + std::to_string(model.d_pre()));
  const Vec pre = model.w_enc.transpose() * x_cls + model.b_enc;
  return top_k(pre, model.k);
}

Vec decode(const SaeModel& model, const ActivationVector& a) {
  Vec x = model.b_dec;
  for (std::size_t n = 0; n < a.size(); ++n) {
    const auto j = a.indices[n];
    require(j < model.d_sae(), ErrorCode::kIndexOutOfRange, "component " + std::to_string(j) + " >= d_sae");
    x.noalias() += a.values[n] * model.decoder.row(j).transpose();
  }
  return x;
}

Vec reconstruction_error(const SaeModel& model, const Vec& x_cls) { return x_cls - decode(model, encode(model, x_cls)); }

SaeTrainConfig SaeTrainConfig::imagenet() {
  SaeTrainConfig cfg;
  cfg.d_sae = 30000;
  cfg.k = 64;
  cfg.learning_rate = 1e-6;
  cfg.epochs = 30;
  cfg.decay_epochs = {24, 28};
  cfg.decay_factor = 10.0;
  cfg.epoch_subsample_fraction = 0.1;
  return cfg;
}

SaeTrainConfig SaeTrainConfig::medical() {
  SaeTrainConfig cfg = imagenet();
  cfg.learning_rate = 5e-5;
  cfg.epochs = 25;
  cfg.decay_epochs = {17, 23};
  cfg.epoch_subsample_fraction = 1.0;
  return cfg;
}

void validate(const SaeTrainConfig& cfg) {
  require(cfg.d_sae >= 1, ErrorCode::kInvalidConfig, "d_sae must be positive");
  require(cfg.k >= 1 && cfg.k <= cfg.d_sae, ErrorCode::kInvalidConfig, "k must lie in [1, d_sae]");
  require(cfg.learning_rate > 0, ErrorCode::kInvalidConfig, "learning_rate must be positive");
  require(cfg.epochs >= 1, ErrorCode::kInvalidConfig, "epochs must be positive");
  for (auto e : cfg.decay_epochs)
    require(e >= 1 && e <= cfg.epochs, ErrorCode::kInvalidConfig, "decay epoch outside [1, epochs]");
  require(cfg.decay_factor > 0, ErrorCode::kInvalidConfig, "decay_factor must be positive");
  require(cfg.epoch_subsample_fraction > 0 && cfg.epoch_subsample_fraction <= 1, ErrorCode::kInvalidConfig,
          "epoch_subsample_fraction must lie in (0, 1]");
  require(cfg.batch_size >= 1, ErrorCode::kInvalidConfig, "batch_size must be positive");
  require(cfg.weight_decay >= 0, ErrorCode::kInvalidConfig, "weight_decay must be non-negative");
}

double normalized_mse(const Vec& x, const Vec& x_hat) {
  const double r = std::sqrt(x_hat.squaredNorm() + 1e-12);
  return (x / x.norm() - x_hat / r).squaredNorm();
}

namespace {

struct Gradients {
  Mat w_enc;
  Vec b_enc;
  Mat decoder;
  Vec b_dec;

  explicit Gradients(const SaeModel& m)
      : w_enc(Mat::Zero(m.w_enc.rows(), m.w_enc.cols())),
        b_enc(Vec::Zero(m.b_enc.size())),
        decoder(Mat::Zero(m.decoder.rows(), m.decoder.cols())),
        b_dec(Vec::Zero(m.b_dec.size())) {}

  void zero() {
    w_enc.setZero();
    b_enc.setZero();
    decoder.setZero();
    b_dec.setZero();
  }
};

// Forward + backward of the normalised loss for one token, scaled by weight.
// The top-k selection is treated as fixed (straight-through on the selected
// set), which is the exact gradient almost everywhere.
double accumulate_token(const SaeModel& m, const Vec& x, double weight, Gradients& g) {
  const double x_norm = x.norm();
  require(x_norm > 0, ErrorCode::kDegenerateBatch, "batch embedding has zero norm");
  const ActivationVector a = encode(m, x);
  const Vec x_hat = decode(m, a);
  const double r = std::sqrt(x_hat.squaredNorm() + 1e-12);
  const Vec n = x_hat / r;
  const Vec diff = n - x / x_norm;
  const double loss = diff.squaredNorm();

  const Vec gn = 2.0 * weight * diff;
  const Vec gx_hat = (gn - n * n.dot(gn)) / r;
  g.b_dec += gx_hat;
  for (std::size_t s = 0; s < a.size(); ++s) {
    const auto j = static_cast<Eigen::Index>(a.indices[s]);
    g.decoder.row(j) += a.values[s] * gx_hat.transpose();
    const double ga = m.decoder.row(j).dot(gx_hat);
    g.w_enc.col(j) += ga * x;
    g.b_enc[j] += ga;
  }
  return loss;
}

template <typename Param>
void adamw_update(Param& p, const Param& grad, Param& m1, Param& m2, double lr, const SaeTrainConfig& cfg,
                  double bc1, double bc2) {
  m1 = cfg.adam_beta1 * m1 + (1.0 - cfg.adam_beta1) * grad;
  m2 = cfg.adam_beta2 * m2 + (1.0 - cfg.adam_beta2) * grad.cwiseProduct(grad);
  p *= (1.0 - lr * cfg.weight_decay);
  p.array() -= lr * (m1.array() / bc1) / ((m2.array() / bc2).sqrt() + cfg.adam_eps);
}

}  // namespace

SaeTrainResult train_sae(const EmbeddingDataset& data, const SaeTrainConfig& cfg) {
  validate(cfg);
  require(data.size() > 0, ErrorCode::kEmptyDataset, "training set is empty");
  require(data.size() >= cfg.batch_size, ErrorCode::kInvalidConfig,
          "training set smaller than batch_size (" + std::to_string(data.size()) + " < " +
              std::to_string(cfg.batch_size) + ")");
  const bool use_spatial = cfg.include_spatial_tokens && data.has_spatial();
  const auto d_pre = static_cast<Eigen::Index>(data.dim());
  const auto d_sae = static_cast<Eigen::Index>(cfg.d_sae);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  SaeModel model;
  model.k = cfg.k;
  model.decoder.resize(d_sae, d_pre);
  for (Eigen::Index i = 0; i < model.decoder.size(); ++i) model.decoder.data()[i] = normal(rng);
  normalize_decoder(model);
  model.w_enc = model.decoder.transpose();
  model.b_enc = Vec::Zero(d_sae);
  model.b_dec = Vec::Zero(d_pre);

  Gradients grad(model);
  Gradients m1(model);
  Gradients m2(model);

  const std::size_t n_total = data.size();
  const auto n_epoch = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(cfg.epoch_subsample_fraction * static_cast<double>(n_total))), 1, n_total);

  std::vector<std::size_t> order(n_total);
  std::vector<double> epoch_losses;
  double lr = cfg.learning_rate;
  std::uint64_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < n_epoch; begin += cfg.batch_size) {
      const std::size_t end = std::min(n_epoch, begin + cfg.batch_size);
      grad.zero();
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t i = order[b];
        const Vec x = data.cls_embeddings.row(static_cast<Eigen::Index>(i)).transpose();
        double loss = accumulate_token(model, x, 1.0, grad);
        if (use_spatial) {
          const Mat& tokens = data.spatial_tokens[i];
          const double w = 1.0 / static_cast<double>(tokens.rows());
          for (Eigen::Index t = 0; t < tokens.rows(); ++t)
            loss += w * accumulate_token(model, tokens.row(t).transpose(), w, grad);
        }
        loss_sum += loss;
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      grad.w_enc *= inv;
      grad.b_enc *= inv;
      grad.decoder *= inv;
      grad.b_dec *= inv;

      ++step;
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
      adamw_update(model.w_enc, grad.w_enc, m1.w_enc, m2.w_enc, lr, cfg, bc1, bc2);
      adamw_update(model.b_enc, grad.b_enc, m1.b_enc, m2.b_enc, lr, cfg, bc1, bc2);
      adamw_update(model.decoder, grad.decoder, m1.decoder, m2.decoder, lr, cfg, bc1, bc2);
      adamw_update(model.b_dec, grad.b_dec, m1.b_dec, m2.b_dec, lr, cfg, bc1, bc2);
      normalize_decoder(model);
    }
    epoch_losses.push_back(loss_sum / static_cast<double>(n_epoch));

    if (std::find(cfg.decay_epochs.begin(), cfg.decay_epochs.end(), epoch) != cfg.decay_epochs.end())
      lr /= cfg.decay_factor;
  }
  return {std::move(model), std::move(epoch_losses)};
}

TensorDump sae_to_dump(const SaeModel& model) {
  TensorDump dump;
  dump.add_matrix("w_enc", model.w_enc);
  dump.add_vector("b_enc", model.b_enc);
  dump.add_matrix("decoder", model.decoder);
  dump.add_vector("b_dec", model.b_dec);
  return dump;
}

nlohmann::json sae_manifest(const SaeModel& model) {
  nlohmann::json m;
  m["format_version"] = 1;
  m["kind"] = "sae";
  m["k"] = model.k;
  m["d_sae"] = model.d_sae();
  m["d_pre"] = model.d_pre();
  m["roles"] = {{"w_enc", "w_enc"}, {"b_enc", "b_enc"}, {"decoder", "decoder"}, {"b_dec", "b_dec"}};
  return m;
}

void save_sae(const SaeModel& model, const std::filesystem::path& dump_path,
              const std::filesystem::path& manifest_path) {
  sae_to_dump(model).write(dump_path);
  Manifest(sae_manifest(model)).write(manifest_path);
}

SaeModel sae_from_dump(const TensorDump& dump, const Manifest& manifest) {
  SaeModel model;
  model.w_enc = dump.matrix(manifest.role("w_enc"));
  model.b_enc = dump.vector(manifest.role("b_enc"));
  model.decoder = dump.matrix(manifest.role("decoder"));
  model.b_dec = dump.vector(manifest.role("b_dec"));
  const auto& doc = manifest.json();
  require(doc.contains("k"), ErrorCode::kBadFormat, "SAE manifest lacks k");
  model.k = doc["k"].get<std::size_t>();
  if (doc.contains("d_sae"))
    require(doc["d_sae"].get<std::size_t>() == model.d_sae(), ErrorCode::kDimMismatch,
            "manifest d_sae disagrees with decoder rows");
  // float32 storage perturbs unit norms at the 1e-7 level; restore exactly.
  validate(model, 1e-4);
  normalize_decoder(model);
  return model;
}

SaeModel load_sae(const std::filesystem::path& dump_path, const std::filesystem::path& manifest_path) {
  return sae_from_dump(TensorDump::read(dump_path), Manifest::read(manifest_path));
}

}  // namespace clat
