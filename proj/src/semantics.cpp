#include "clat/semantics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <set>

#include "clat/head.hpp"
#include "clat/parallel.hpp"

namespace clat {

namespace {

bool ranks_before(const std::pair<std::size_t, double>& a, const std::pair<std::size_t, double>& b) {
  return a.second > b.second || (a.second == b.second && a.first < b.first);
}

std::vector<std::pair<std::size_t, double>> take_top(std::vector<std::pair<std::size_t, double>> firing,
                                                     std::size_t q) {
  if (firing.size() > q) {
    std::partial_sort(firing.begin(), firing.begin() + static_cast<std::ptrdiff_t>(q), firing.end(), ranks_before);
    firing.resize(q);
  } else {
    std::sort(firing.begin(), firing.end(), ranks_before);
  }
  return firing;
}

}  // namespace

TopActivating top_activating(std::span<const ActivationVector> activations, std::size_t j, std::size_t q) {
  require(q >= 1, ErrorCode::kInvalidConfig, "q must be at least 1");
  std::vector<std::pair<std::size_t, double>> firing;
  for (std::size_t i = 0; i < activations.size(); ++i) {
    const double a = activations[i].at(j);
    if (a > 0) firing.emplace_back(i, a);
  }
  require(!firing.empty(), ErrorCode::kNoActivations, "component " + std::to_string(j) + " never fires");
  TopActivating out;
  out.truncated = firing.size() < q;
  out.samples = take_top(std::move(firing), q);
  return out;
}

double alignment_score(const Vec& mean_embedding, const Vec& t, const Vec& t_empty) {
  return cosine(mean_embedding, t) - cosine(mean_embedding, t_empty);
}

ComponentLabel label_component(const Vec& mean_embedding, const TextBank& bank) {
  require(bank.size() > 0, ErrorCode::kEmptyBank, "cannot label against an empty bank");
  require(mean_embedding.size() == bank.embeddings.cols(), ErrorCode::kDimMismatch,
          "mean embedding width differs from text bank");
  const double m_norm = mean_embedding.norm();
  require(m_norm > 0, ErrorCode::kZeroNorm, "mean embedding is zero");
  const double empty = cosine(mean_embedding, bank.empty_prompt_embedding);
  ComponentLabel best;
  bool first = true;
  for (Eigen::Index r = 0; r < bank.embeddings.rows(); ++r) {
    const double s = cosine(mean_embedding, bank.embeddings.row(r).transpose()) - empty;
    if (first || s > best.alignment) {
      best = {static_cast<std::size_t>(r), s};
      first = false;
    }
  }
  return best;
}

double clarity(const Mat& embeddings) {
  const auto q = embeddings.rows();
  require(q >= 2, ErrorCode::kTooFewSamples, "clarity needs at least two samples");
  Mat unit = embeddings;
  for (Eigen::Index i = 0; i < q; ++i) {
    const double n = unit.row(i).norm();
    require(n > 0, ErrorCode::kZeroNorm, "sample embedding is zero");
    unit.row(i) /= n;
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < q; ++i)
    for (Eigen::Index k = i + 1; k < q; ++k) sum += unit.row(i).dot(unit.row(k));
  const double pairs = static_cast<double>(q) * static_cast<double>(q - 1) / 2.0;
  return std::clamp(sum / pairs, -1.0, 1.0);
}

std::vector<ComponentProfile> build_profiles(std::span<const ActivationVector> activations,
                                             const Mat& scoring_embeddings, const TextBank& bank,
                                             const ProfileConfig& cfg) {
  require(cfg.q >= 2, ErrorCode::kInvalidConfig, "profiling needs q >= 2");
  require(static_cast<std::size_t>(scoring_embeddings.rows()) == activations.size(), ErrorCode::kDimMismatch,
          "scoring embeddings and activations differ in sample count");
  require(!activations.empty(), ErrorCode::kEmptyDataset, "no activations to profile");
  const std::size_t d_sae = activations.front().d_sae;
  const double n_samples = static_cast<double>(activations.size());

  std::vector<std::vector<std::pair<std::size_t, double>>> columns(d_sae);
  for (std::size_t i = 0; i < activations.size(); ++i) {
    const auto& a = activations[i];
    for (std::size_t n = 0; n < a.size(); ++n) columns[a.indices[n]].emplace_back(i, a.values[n]);
  }
  const std::size_t min_firing = std::max<std::size_t>(cfg.min_firing, 2);
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < d_sae; ++j)
    if (columns[j].size() >= min_firing) kept.push_back(j);

  std::vector<ComponentProfile> profiles(kept.size());
  parallel_for(kept.size(), cfg.threads, [&](std::size_t slot) {
    const std::size_t j = kept[slot];
    ComponentProfile p;
    p.component_id = j;
    p.firing_count = columns[j].size();
    double total = 0.0;
    for (const auto& [i, a] : columns[j]) total += a;
    p.dataset_mean = total / n_samples;
    p.truncated = columns[j].size() < cfg.q;
    p.top_samples = take_top(columns[j], cfg.q);

    Mat rows(static_cast<Eigen::Index>(p.top_samples.size()), scoring_embeddings.cols());
    double top_sum = 0.0;
    double top5_sum = 0.0;
    for (std::size_t r = 0; r < p.top_samples.size(); ++r) {
      rows.row(static_cast<Eigen::Index>(r)) = scoring_embeddings.row(static_cast<Eigen::Index>(p.top_samples[r].first));
      top_sum += p.top_samples[r].second;
      if (r < 5) top5_sum += p.top_samples[r].second;
    }
    p.top_activation_mean = top_sum / static_cast<double>(p.top_samples.size());
    p.top5_mean = top5_sum / static_cast<double>(std::min<std::size_t>(5, p.top_samples.size()));
    p.mean_embedding = rows.colwise().mean().transpose();
    const ComponentLabel label = label_component(p.mean_embedding, bank);
    p.label_index = label.label_index;
    p.alignment = label.alignment;
    p.clarity = clarity(rows);
    profiles[slot] = std::move(p);
  });
  return profiles;
}

std::size_t concept_diversity(std::span<const ComponentProfile> profiles) {
  std::set<std::size_t> labels;
  for (const auto& p : profiles) labels.insert(p.label_index);
  return labels.size();
}

std::string to_string(ActivationStatistic s) {
  switch (s) {
    case ActivationStatistic::kTop5Mean: return "top5_mean";
    case ActivationStatistic::kDatasetMean: return "dataset_mean";
    case ActivationStatistic::kFiringCount: return "firing_count";
  }
  return "unknown";
}

double pearson(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::kDimMismatch, "pearson inputs differ in length");
  require(a.size() >= 3, ErrorCode::kTooFewSamples, "pearson needs at least three points");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  require(saa > 0 && sbb > 0, ErrorCode::kZeroVariance, "correlation of a constant series");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double activation_clarity_correlation(std::span<const ComponentProfile> profiles, ActivationStatistic stat,
                                      bool log_scale) {
  std::vector<double> xs, cs;
  for (const auto& p : profiles) {
    double v = 0;
    switch (stat) {
      case ActivationStatistic::kTop5Mean: v = p.top5_mean; break;
      case ActivationStatistic::kDatasetMean: v = p.dataset_mean; break;
      case ActivationStatistic::kFiringCount: v = static_cast<double>(p.firing_count); break;
    }
    if (log_scale) {
      require(v > 0, ErrorCode::kOutOfRangeInput, "log scale of a non-positive statistic");
      v = std::log10(v);
    }
    xs.push_back(v);
    cs.push_back(p.clarity);
  }
  return pearson(xs, cs);
}

ClarityGroup clarity_group(double c) {
  if (c >= 0.6) return ClarityGroup::kHigh;
  if (c > 0.4) return ClarityGroup::kMedium;
  return ClarityGroup::kLow;
}

SaeModel pca_dictionary(const Mat& embeddings, std::size_t n_components) {
  const auto n = embeddings.rows();
  const auto d = embeddings.cols();
  require(n >= 2, ErrorCode::kTooFewSamples, "PCA needs at least two samples");
  require(n_components >= 1 && static_cast<Eigen::Index>(n_components) <= d, ErrorCode::kInvalidConfig,
          "n_components must lie in [1, d]");
  const Vec mean = embeddings.colwise().mean().transpose();
  const Mat centered = embeddings.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  require(solver.info() == Eigen::Success, ErrorCode::kDegenerateInput, "PCA eigen-decomposition failed");

  const auto m = static_cast<Eigen::Index>(n_components);
  SaeModel model;
  model.k = n_components;
  model.decoder.resize(2 * m, d);
  for (Eigen::Index i = 0; i < m; ++i) {
    // Eigenvalues ascend; take from the back. Fix the sign so the largest
    // entry is positive for reproducibility.
    Vec e = solver.eigenvectors().col(d - 1 - i);
    Eigen::Index arg = 0;
    e.cwiseAbs().maxCoeff(&arg);
    if (e[arg] < 0) e = -e;
    model.decoder.row(2 * i) = e.transpose();
    model.decoder.row(2 * i + 1) = -e.transpose();
  }
  model.w_enc = model.decoder.transpose();
  model.b_enc = -(model.decoder * mean);
  model.b_dec = mean;
  return model;
}

}  // namespace clat
