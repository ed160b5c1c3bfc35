#include "clat/probe.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace clat {

LatentDirection estimate_direction(const Mat& embeddings, std::span<const ActivationVector> activations,
                                   std::size_t component, double low_thr, double high_thr,
                                   const std::function<bool(std::size_t)>& keep) {
  require(static_cast<std::size_t>(embeddings.rows()) == activations.size(), ErrorCode::kDimMismatch,
          "embeddings and activations differ in sample count");
  Vec low = Vec::Zero(embeddings.cols());
  Vec high = Vec::Zero(embeddings.cols());
  LatentDirection dir;
  dir.source_component = component;
  dir.low_threshold = low_thr;
  dir.high_threshold = high_thr;
  for (std::size_t i = 0; i < activations.size(); ++i) {
    if (keep && !keep(i)) continue;
    const double a = activations[i].at(component);
    if (a < low_thr) {
      low += embeddings.row(static_cast<Eigen::Index>(i)).transpose();
      ++dir.n_low;
    }
    if (a > high_thr) {
      high += embeddings.row(static_cast<Eigen::Index>(i)).transpose();
      ++dir.n_high;
    }
  }
  require(dir.n_low > 0, ErrorCode::kEmptySet, "no samples below the low threshold");
  require(dir.n_high > 0, ErrorCode::kEmptySet, "no samples above the high threshold");
  dir.values = high / static_cast<double>(dir.n_high) - low / static_cast<double>(dir.n_low);
  return dir;
}

Vec augment_latent(const Vec& x, const LatentDirection& dir, double alpha, double p) {
  require(x.size() == dir.values.size(), ErrorCode::kDimMismatch, "direction width differs from embedding");
  return x + alpha * (p - 0.5) * dir.values;
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double LinearProbe::probability(const Vec& x) const { return sigmoid(decision(x)); }

LinearProbe train_linear_probe(const Mat& embeddings, std::span<const int> labels, const ProbeTrainConfig& cfg) {
  const auto n = embeddings.rows();
  require(static_cast<std::size_t>(n) == labels.size(), ErrorCode::kDimMismatch, "label count differs from rows");
  require(n > 0, ErrorCode::kEmptyDataset, "no training samples");
  require(cfg.learning_rate > 0 && cfg.l2 >= 0, ErrorCode::kInvalidConfig, "probe learning rate / l2");
  bool has_pos = false, has_neg = false;
  Vec y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    require(l == 0 || l == 1, ErrorCode::kOutOfRangeInput, "probe labels must be 0 or 1");
    y[i] = l;
    (l == 1 ? has_pos : has_neg) = true;
  }
  require(has_pos && has_neg, ErrorCode::kSingleClass, "probe training needs both classes");
  if (cfg.augment_direction)
    require(cfg.augment_direction->values.size() == embeddings.cols(), ErrorCode::kDimMismatch,
            "augmentation direction width");

  LinearProbe probe;
  probe.weights = Vec::Zero(embeddings.cols());
  probe.train_config = cfg;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Mat x = embeddings;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.augment_direction) {
      const Vec& u = cfg.augment_direction->values;
      for (Eigen::Index i = 0; i < n; ++i)
        x.row(i) = embeddings.row(i) + cfg.augment_alpha * (uniform(rng) - 0.5) * u.transpose();
    }
    Vec residual = (x * probe.weights).array() + probe.bias;
    for (Eigen::Index i = 0; i < n; ++i) residual[i] = sigmoid(residual[i]) - y[i];
    const Vec grad_w = x.transpose() * residual * inv_n + cfg.l2 * probe.weights;
    const double grad_b = residual.sum() * inv_n;
    probe.epochs_run = epoch + 1;
    if (std::sqrt(grad_w.squaredNorm() + grad_b * grad_b) < cfg.gradient_tolerance) break;
    probe.weights -= cfg.learning_rate * grad_w;
    probe.bias -= cfg.learning_rate * grad_b;
  }
  return probe;
}

double accuracy(const LinearProbe& probe, const Mat& embeddings, std::span<const int> labels) {
  require(static_cast<std::size_t>(embeddings.rows()) == labels.size(), ErrorCode::kDimMismatch,
          "label count differs from rows");
  require(!labels.empty(), ErrorCode::kEmptySet, "accuracy of an empty set");
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i)
    if (probe.predict(embeddings.row(i).transpose()) == labels[static_cast<std::size_t>(i)]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

TensorDump probe_to_dump(const LinearProbe& probe) {
  TensorDump dump;
  dump.add_vector("probe_weights", probe.weights);
  Vec meta(3);
  meta << probe.bias, probe.negative_label, probe.positive_label;
  dump.add_vector("probe_meta", meta);
  return dump;
}

LinearProbe probe_from_dump(const TensorDump& dump) {
  LinearProbe probe;
  probe.weights = dump.vector("probe_weights");
  const Vec meta = dump.vector("probe_meta");
  require(meta.size() == 3, ErrorCode::kDimMismatch, "probe_meta must hold bias and both labels");
  probe.bias = meta[0];
  probe.negative_label = static_cast<int>(meta[1]);
  probe.positive_label = static_cast<int>(meta[2]);
  return probe;
}

double augment_red_value(double red, double delta) { return std::clamp(red * (1.0 - delta), 0.0, 1.0); }

Tensor augment_red_channel(const Tensor& images, double delta) {
  const auto& dims = images.dims;
  require(dims.size() == 3 || dims.size() == 4, ErrorCode::kDimMismatch, "images must be [3,H,W] or [N,3,H,W]");
  const std::size_t channel_axis = dims.size() - 3;
  require(dims[channel_axis] == 3, ErrorCode::kDimMismatch, "images must have three planar channels");
  for (float v : images.data)
    require(v >= 0.0f && v <= 1.0f, ErrorCode::kOutOfRangeInput, "pixel value outside [0, 1]");
  Tensor out = images;
  const std::size_t plane = dims[channel_axis + 1] * dims[channel_axis + 2];
  const std::size_t count = dims.size() == 4 ? dims[0] : 1;
  for (std::size_t img = 0; img < count; ++img) {
    float* red = out.data.data() + img * 3 * plane;
    for (std::size_t p = 0; p < plane; ++p) red[p] = static_cast<float>(augment_red_value(red[p], delta));
  }
  return out;
}

std::vector<SweepRow> robustness_sweep(const LinearProbe& probe, const std::map<double, LabeledEmbeddings>& datasets) {
  auto base_it = datasets.find(0.0);
  require(base_it != datasets.end(), ErrorCode::kMissingBaseline, "sweep needs a delta = 0 baseline");

  auto per_label = [&](const LabeledEmbeddings& set) {
    require(static_cast<std::size_t>(set.embeddings.rows()) == set.labels.size(), ErrorCode::kDimMismatch,
            "label count differs from rows");
    std::map<int, std::pair<std::size_t, std::size_t>> counts;  // label -> (correct, n)
    for (Eigen::Index i = 0; i < set.embeddings.rows(); ++i) {
      const int l = set.labels[static_cast<std::size_t>(i)];
      auto& c = counts[l];
      ++c.second;
      if (probe.predict(set.embeddings.row(i).transpose()) == l) ++c.first;
    }
    return counts;
  };

  const auto baseline = per_label(base_it->second);
  std::vector<SweepRow> rows;
  for (const auto& [delta, set] : datasets) {
    for (const auto& [label, c] : per_label(set)) {
      SweepRow row;
      row.delta = delta;
      row.label = label;
      row.n = c.second;
      row.accuracy = static_cast<double>(c.first) / static_cast<double>(c.second);
      row.sem = std::sqrt(row.accuracy * (1.0 - row.accuracy) / static_cast<double>(c.second));
      if (auto b = baseline.find(label); b != baseline.end())
        row.change_vs_baseline = row.accuracy - static_cast<double>(b->second.first) / static_cast<double>(b->second.second);
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace clat
