#include "clat/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <set>

#include "clat/parallel.hpp"

namespace clat {

std::string to_string(CurveMode m) {
  switch (m) {
    case CurveMode::kDeletionLocal: return "deletion_local";
    case CurveMode::kDeletionGlobal: return "deletion_global";
    case CurveMode::kDeletionRandomRef: return "deletion_random_ref";
    case CurveMode::kInsertionLocal: return "insertion_local";
  }
  return "unknown";
}

CurveMode curve_mode_from_string(const std::string& s) {
  if (s == "deletion_local" || s == "deletion-local") return CurveMode::kDeletionLocal;
  if (s == "deletion_global" || s == "deletion-global") return CurveMode::kDeletionGlobal;
  if (s == "deletion_random_ref" || s == "deletion-random-ref") return CurveMode::kDeletionRandomRef;
  if (s == "insertion_local" || s == "insertion-local") return CurveMode::kInsertionLocal;
  throw Error(ErrorCode::kInvalidConfig, "unknown curve mode '" + s + "'");
}

namespace {

using ScoreMap = std::map<std::uint32_t, double>;

// Mean score per component over a reference set; degenerate samples skipped.
ScoreMap mean_scores(const std::vector<Decomposition>& decomps, const SaeModel& model, const HeadParams& head,
                     std::span<const std::size_t> samples, const Vec& t, const AttributionOptions& options,
                     unsigned threads) {
  std::vector<std::optional<AttributionRecord>> records(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t n) {
    AttributionOptions opts = options;
    opts.seed = options.seed + samples[n];
    try {
      records[n] = attribute(model, head, decomps[samples[n]], t, opts);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateInput && e.code() != ErrorCode::kZeroNorm) throw;
    }
  });
  ScoreMap sum;
  std::size_t used = 0;
  for (const auto& r : records) {
    if (!r) continue;
    ++used;
    for (const auto& [j, v] : r->scores) sum[j] += v;
  }
  if (used > 0)
    for (auto& [j, v] : sum) v /= static_cast<double>(used);
  return sum;
}

std::vector<std::uint32_t> rank_active(const ActivationVector& act, const ScoreMap& scores) {
  std::vector<std::pair<std::uint32_t, double>> ranked;
  for (auto j : act.indices) {
    auto it = scores.find(j);
    ranked.emplace_back(j, it == scores.end() ? -std::numeric_limits<double>::infinity() : it->second);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second > b.second || (a.second == b.second && a.first < b.first);
  });
  std::vector<std::uint32_t> order;
  for (const auto& [j, s] : ranked) order.push_back(j);
  return order;
}

}  // namespace

PerturbationCurve run_perturbation_curve(const EmbeddingDataset& data, const SaeModel& model,
                                         const HeadParams& head, std::span<const Vec> prompts,
                                         const CurveRequest& request) {
  require(request.max_steps >= 1, ErrorCode::kInvalidConfig, "max_steps must be at least 1");
  require(prompts.size() == data.size(), ErrorCode::kDimMismatch, "need one prompt per sample");
  const std::size_t n = data.size();
  const std::size_t width = request.max_steps + 1;
  const unsigned threads = request.threads;

  std::vector<Decomposition> decomps(n);
  parallel_for(n, threads, [&](std::size_t i) {
    decomps[i] = decompose(model, data.cls_embeddings.row(static_cast<Eigen::Index>(i)).transpose());
  });

  // Per-sample ranking scores (local) or per-class scores (global modes).
  std::vector<std::optional<ScoreMap>> local(n);
  std::map<int, ScoreMap> per_class;
  if (request.mode == CurveMode::kDeletionLocal || request.mode == CurveMode::kInsertionLocal) {
    parallel_for(n, threads, [&](std::size_t i) {
      AttributionOptions opts = request.attribution;
      opts.seed = request.attribution.seed + i;
      try {
        local[i] = attribute(model, head, decomps[i], prompts[i], opts).scores;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDegenerateInput && e.code() != ErrorCode::kZeroNorm) throw;
      }
    });
  } else {
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) members[data.labels[i]].push_back(i);
    std::vector<std::size_t> pool;
    if (request.mode == CurveMode::kDeletionRandomRef) {
      pool.resize(n);
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      std::mt19937_64 rng(request.reference.seed);
      std::shuffle(pool.begin(), pool.end(), rng);
      pool.resize(std::min(n, request.reference.pool_size));
      std::sort(pool.begin(), pool.end());
    }
    for (const auto& [c, idx] : members) {
      const Vec& t = prompts[idx.front()];
      const auto& ref = request.mode == CurveMode::kDeletionGlobal ? idx : pool;
      per_class[c] = mean_scores(decomps, model, head, ref, t, request.attribution, threads);
    }
  }

  std::vector<std::optional<std::vector<double>>> rows(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const ScoreMap* scores = nullptr;
    if (request.mode == CurveMode::kDeletionLocal || request.mode == CurveMode::kInsertionLocal) {
      if (!local[i]) return;
      scores = &*local[i];
    } else {
      scores = &per_class.at(data.labels[i]);
    }
    const Decomposition& d = decomps[i];
    const std::vector<std::uint32_t> order = rank_active(d.activations, *scores);
    const std::size_t m = order.size();

    std::vector<Vec> contrib(m);
    for (std::size_t s = 0; s < m; ++s) contrib[s] = d.activations.at(order[s]) * model.atom(order[s]);

    std::vector<double> values(width);
    try {
      if (request.mode == CurveMode::kInsertionLocal) {
        // suffix[s] = sum of contributions not yet restored after s steps.
        std::vector<Vec> suffix(m + 1, Vec::Zero(d.x.size()));
        for (std::size_t s = m; s-- > 0;) suffix[s] = suffix[s + 1] + contrib[s];
        for (std::size_t s = 0; s < width; ++s) {
          const std::size_t restored = std::min(s, m);
          values[s] = head_output(head, restored == m ? d.x : Vec(d.x - suffix[restored]), prompts[i]);
        }
      } else {
        Vec current = d.x;
        values[0] = head_output(head, current, prompts[i]);
        for (std::size_t s = 1; s < width; ++s) {
          if (s <= m) {
            current -= contrib[s - 1];
            values[s] = head_output(head, current, prompts[i]);
          } else {
            values[s] = values[s - 1];
          }
        }
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateInput && e.code() != ErrorCode::kZeroNorm) throw;
      return;
    }
    rows[i] = std::move(values);
  });

  PerturbationCurve curve;
  curve.mode = request.mode;
  curve.method = request.attribution.method;
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i])
      curve.kept.push_back(i);
    else
      ++curve.dropped;
  }
  curve.per_sample.resize(static_cast<Eigen::Index>(curve.kept.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < curve.kept.size(); ++r)
    for (std::size_t s = 0; s < width; ++s)
      curve.per_sample(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) = (*rows[curve.kept[r]])[s];
  curve.steps.assign(width, 0.0);
  if (!curve.kept.empty()) {
    const Vec mean = curve.per_sample.colwise().mean().transpose();
    for (std::size_t s = 0; s < width; ++s) curve.steps[s] = mean[static_cast<Eigen::Index>(s)];
  }
  return curve;
}

double curve_auc(std::span<const double> steps) {
  require(!steps.empty(), ErrorCode::kEmptySet, "AUC of an empty curve");
  return std::accumulate(steps.begin(), steps.end(), 0.0) / static_cast<double>(steps.size());
}

MeanSem mean_sem(std::span<const double> values) {
  require(!values.empty(), ErrorCode::kEmptySet, "mean of an empty set");
  MeanSem out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return out;
  double ss = 0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.sem = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return out;
}

AucReport auc_with_sem(const Mat& per_sample_curves, std::size_t subsets, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(per_sample_curves.rows());
  require(subsets >= 1, ErrorCode::kInvalidConfig, "need at least one subset");
  require(n >= subsets, ErrorCode::kTooFewSamples,
          std::to_string(n) + " samples cannot fill " + std::to_string(subsets) + " subsets");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  AucReport report;
  const std::size_t base = n / subsets;
  const std::size_t extra = n % subsets;
  std::size_t begin = 0;
  for (std::size_t s = 0; s < subsets; ++s) {
    const std::size_t size = base + (s < extra ? 1 : 0);
    Vec mean = Vec::Zero(per_sample_curves.cols());
    for (std::size_t r = begin; r < begin + size; ++r)
      mean += per_sample_curves.row(static_cast<Eigen::Index>(order[r])).transpose();
    mean /= static_cast<double>(size);
    report.subset_aucs.push_back(curve_auc(std::span<const double>(mean.data(), static_cast<std::size_t>(mean.size()))));
    begin += size;
  }
  const MeanSem ms = mean_sem(report.subset_aucs);
  report.auc = ms.mean;
  report.sem = ms.sem;
  return report;
}

double auroc(std::span<const double> positives, std::span<const double> negatives) {
  require(!positives.empty() && !negatives.empty(), ErrorCode::kEmptySet, "AUROC needs both classes");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(positives.size() + negatives.size());
  for (double s : positives) items.push_back({s, true});
  for (double s : negatives) items.push_back({s, false});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

  // Twice the Mann-Whitney U in integer arithmetic: tied blocks share the
  // average rank, which doubled is (first + last) for 1-based ranks.
  std::int64_t rank_sum_x2 = 0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    const auto shared_x2 = static_cast<std::int64_t>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (items[k].positive) rank_sum_x2 += shared_x2;
    i = j;
  }
  const auto n_pos = static_cast<std::int64_t>(positives.size());
  const auto n_neg = static_cast<std::int64_t>(negatives.size());
  const std::int64_t u_x2 = rank_sum_x2 - n_pos * (n_pos + 1);
  return static_cast<double>(u_x2) / static_cast<double>(2 * n_pos * n_neg);
}

BenchmarkReport benchmark_failure_modes(std::span<const FailureCaseSpec> cases, const EmbeddingDataset& data,
                                        const HeadParams& head, const std::map<std::string, TextBank>& banks,
                                        const std::map<int, LinearProbe>& probes, const BenchmarkRequest& request) {
  auto find_bank = [&](const std::string& strategy) -> const TextBank* {
    if (auto it = banks.find(strategy); it != banks.end()) return &it->second;
    for (const auto& [name, bank] : banks)
      if (to_string(bank.variant) == strategy) return &bank;
    return nullptr;
  };
  for (const auto& s : request.strategies)
    if (s != "probe")
      require(find_bank(s) != nullptr, ErrorCode::kMissingBankVariant, "no text bank for strategy '" + s + "'");
  require(std::find(request.strategies.begin(), request.strategies.end(), request.baseline) !=
              request.strategies.end(),
          ErrorCode::kMissingBankVariant, "baseline '" + request.baseline + "' is not among the strategies");

  Mat projected(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(head.d_post()));
  for (std::size_t i = 0; i < data.size(); ++i)
    projected.row(static_cast<Eigen::Index>(i)) =
        project(head, data.cls_embeddings.row(static_cast<Eigen::Index>(i)).transpose()).values.transpose();

  BenchmarkReport report;
  std::map<std::pair<std::string, std::string>, std::vector<const BenchmarkRow*>> groups;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const auto& fc = cases[ci];
    require(!fc.class_samples.empty() && !fc.spurious_samples.empty(), ErrorCode::kEmptySet,
            "failure case " + std::to_string(ci) + " needs class and spurious samples");
    std::vector<std::size_t> negatives = fc.valid_negatives;
    if (negatives.empty()) {
      std::set<std::size_t> excluded(fc.class_samples.begin(), fc.class_samples.end());
      excluded.insert(fc.spurious_samples.begin(), fc.spurious_samples.end());
      for (std::size_t i = 0; i < data.size(); ++i)
        if (!excluded.contains(i) && data.labels[i] != fc.class_id) negatives.push_back(i);
    }
    require(!negatives.empty(), ErrorCode::kEmptySet, "failure case " + std::to_string(ci) + " has no negatives");

    for (const auto& strategy : request.strategies) {
      std::function<double(std::size_t)> score;
      Vec t;
      const LinearProbe* probe = nullptr;
      if (strategy == "probe") {
        auto it = probes.find(fc.class_id);
        require(it != probes.end(), ErrorCode::kInvalidConfig,
                "no linear probe for class " + std::to_string(fc.class_id));
        probe = &it->second;
        score = [&](std::size_t i) { return probe->decision(projected.row(static_cast<Eigen::Index>(i)).transpose()); };
      } else {
        const TextBank* bank = find_bank(strategy);
        std::size_t row = static_cast<std::size_t>(fc.class_id);
        if (auto it = request.class_prompt.find(fc.class_id); it != request.class_prompt.end()) row = it->second;
        require(fc.class_id >= 0 && row < bank->size(), ErrorCode::kIndexOutOfRange,
                "class " + std::to_string(fc.class_id) + " has no prompt in bank '" + bank->name + "'");
        t = bank->embeddings.row(static_cast<Eigen::Index>(row)).transpose();
        score = [&](std::size_t i) { return cosine(projected.row(static_cast<Eigen::Index>(i)).transpose(), t); };
      }
      auto scores_of = [&](const std::vector<std::size_t>& idx) {
        std::vector<double> out;
        out.reserve(idx.size());
        for (auto i : idx) out.push_back(score(i));
        return out;
      };
      const auto pos = scores_of(fc.class_samples);
      BenchmarkRow row;
      row.case_index = ci;
      row.category = fc.category;
      row.class_id = fc.class_id;
      row.strategy = strategy;
      row.spurious_auc = auroc(pos, scores_of(fc.spurious_samples));
      row.valid_auc = auroc(pos, scores_of(negatives));
      report.rows.push_back(row);
    }
  }

  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>> by_group;
  std::map<std::pair<std::string, std::string>, std::vector<double>> delta_group;
  std::map<std::size_t, double> baseline_auc;
  for (const auto& r : report.rows)
    if (r.strategy == request.baseline) baseline_auc[r.case_index] = r.spurious_auc;
  for (const auto& r : report.rows) {
    auto& g = by_group[{r.category, r.strategy}];
    g.first.push_back(r.spurious_auc);
    g.second.push_back(r.valid_auc);
    if (r.strategy != request.baseline)
      delta_group[{r.category, r.strategy}].push_back(r.spurious_auc - baseline_auc.at(r.case_index));
  }
  for (const auto& [key, v] : by_group) {
    const MeanSem s = mean_sem(v.first);
    const MeanSem va = mean_sem(v.second);
    report.summaries.push_back({key.first, key.second, v.first.size(), s.mean, s.sem, va.mean, va.sem});
  }
  for (const auto& [key, v] : delta_group) {
    const MeanSem d = mean_sem(v);
    report.deltas.push_back({key.first, key.second, request.baseline, v.size(), d.mean, d.sem});
  }
  return report;
}

}  // namespace clat
