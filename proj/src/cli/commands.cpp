#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "clat/anomaly.hpp"
#include "clat/attribution.hpp"
#include "clat/cli.hpp"
#include "clat/dump.hpp"
#include "clat/evalsuite.hpp"
#include "clat/head.hpp"
#include "clat/parallel.hpp"
#include "clat/probe.hpp"
#include "clat/sae.hpp"
#include "clat/semantics.hpp"

namespace clat::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Inputs {
  TensorDump dump;
  Manifest manifest;
};

Inputs open_inputs(const json& cfg) {
  return {TensorDump::read(cfg.at("dump").get<std::string>()),
          Manifest::read(cfg.at("manifest").get<std::string>())};
}

fs::path out_dir(const json& cfg) { return cfg.at("out").get<std::string>(); }

std::uint64_t seed_of(const json& cfg) {
  const auto s = cfg.at("seed").get<long long>();
  require(s >= 0, ErrorCode::kInvalidConfig, "seed must be non-negative");
  return static_cast<std::uint64_t>(s);
}

std::size_t count_of(const json& cfg, const std::string& key, long long min = 1) {
  const auto v = cfg.at(key).get<long long>();
  require(v >= min, ErrorCode::kInvalidConfig, key + " must be at least " + std::to_string(min));
  return static_cast<std::size_t>(v);
}

SaeModel open_sae(const std::string& path) {
  fs::path manifest = path;
  manifest.replace_extension(".json");
  return load_sae(path, manifest);
}

TextBank open_bank(const Inputs& in, const json& cfg) {
  return load_text_bank(in.dump, in.manifest, cfg.at("bank").get<std::string>());
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::kIo, "cannot write " + path.string());
  f << text;
  require(static_cast<bool>(f), ErrorCode::kIo, "write failed for " + path.string());
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::size_t class_row(const TextBank& bank, int label) {
  require(label >= 0 && static_cast<std::size_t>(label) < bank.size(), ErrorCode::kIndexOutOfRange,
          fmt::format("class {} has no prompt in bank '{}'", label, bank.name));
  return static_cast<std::size_t>(label);
}

Vec bank_row(const TextBank& bank, std::size_t row) {
  return bank.embeddings.row(static_cast<Eigen::Index>(row)).transpose();
}

Mat project_all(const HeadParams& head, const EmbeddingDataset& data, unsigned threads) {
  Mat p(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(head.d_post()));
  parallel_for(data.size(), threads, [&](std::size_t i) {
    p.row(static_cast<Eigen::Index>(i)) =
        project(head, data.cls_embeddings.row(static_cast<Eigen::Index>(i)).transpose()).values.transpose();
  });
  return p;
}

std::vector<ActivationVector> encode_all(const SaeModel& model, const EmbeddingDataset& data, unsigned threads) {
  std::vector<ActivationVector> acts(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    acts[i] = encode(model, data.cls_embeddings.row(static_cast<Eigen::Index>(i)).transpose());
  });
  return acts;
}

// ---------------------------------------------------------------------------

void train_sae_cmd(const json& cfg, std::ostream& out) {
  const Inputs in = open_inputs(cfg);
  const EmbeddingDataset data = load_dataset(in.dump, in.manifest);
  const auto preset = cfg.at("preset").get<std::string>();
  SaeTrainConfig c;
  if (preset == "imagenet")
    c = SaeTrainConfig::imagenet();
  else if (preset == "medical")
    c = SaeTrainConfig::medical();
  else
    throw Error(ErrorCode::kInvalidConfig, "preset must be imagenet or medical, got '" + preset + "'");
  c.k = count_of(cfg, "k");
  c.d_sae = count_of(cfg, "dsae");
  c.seed = seed_of(cfg);
  c.include_spatial_tokens = cfg.at("spatial").get<bool>();
  if (cfg.contains("lr")) c.learning_rate = cfg["lr"].get<double>();
  if (cfg.contains("epochs")) c.epochs = count_of(cfg, "epochs", 0);
  if (cfg.contains("decay_epochs")) {
    c.decay_epochs.clear();
    for (const auto& e : cfg["decay_epochs"]) {
      require(e.get<long long>() >= 0, ErrorCode::kInvalidConfig, "decay epochs must be non-negative");
      c.decay_epochs.push_back(e.get<std::size_t>());
    }
  }
  if (cfg.contains("decay_factor")) c.decay_factor = cfg["decay_factor"].get<double>();
  if (cfg.contains("fraction")) c.epoch_subsample_fraction = cfg["fraction"].get<double>();
  if (cfg.contains("batch_size")) c.batch_size = count_of(cfg, "batch_size");
  if (cfg.contains("weight_decay")) c.weight_decay = cfg["weight_decay"].get<double>();
  validate(c);

  const SaeTrainResult res = train_sae(data, c);
  const fs::path dir = out_dir(cfg);
  save_sae(res.model, dir / "sae.clad", dir / "sae.json");
  std::string log = "epoch,loss\n";
  for (std::size_t e = 0; e < res.epoch_losses.size(); ++e) log += fmt::format("{},{}\n", e + 1, res.epoch_losses[e]);
  write_file(dir / "train-log.csv", log);
  out << fmt::format("trained SAE d_sae={} k={} on {} samples; final loss {}\n", c.d_sae, c.k, data.size(),
                     res.epoch_losses.empty() ? 0.0 : res.epoch_losses.back());
}

void attribute_cmd(const json& cfg, std::ostream& out) {
  const Inputs in = open_inputs(cfg);
  const unsigned threads = resolve_threads(cfg);
  const EmbeddingDataset data = load_dataset(in.dump, in.manifest);
  const HeadParams head = load_head(in.dump, in.manifest);
  const SaeModel model = open_sae(cfg.at("sae").get<std::string>());
  const TextBank bank = open_bank(in, cfg);
  AttributionOptions opts;
  opts.method = attribution_method_from_string(cfg.at("method").get<std::string>());
  opts.ig_steps = count_of(cfg, "ig_steps");
  const std::uint64_t seed = seed_of(cfg);
  const long long prompt_index = cfg.at("prompt_index").get<long long>();
  require(prompt_index >= -1 && prompt_index < static_cast<long long>(bank.size()), ErrorCode::kInvalidConfig,
          fmt::format("prompt index {} outside bank '{}' of {} prompts", prompt_index, bank.name, bank.size()));

  std::vector<std::size_t> samples;
  for (const auto& s : cfg.at("samples")) {
    const auto i = s.get<long long>();
    require(i >= 0 && static_cast<std::size_t>(i) < data.size(), ErrorCode::kInvalidConfig,
            fmt::format("sample index {} outside dataset of {}", i, data.size()));
    samples.push_back(static_cast<std::size_t>(i));
  }
  if (samples.empty())
    for (std::size_t i = 0; i < data.size(); ++i) samples.push_back(i);

  std::vector<std::optional<AttributionRecord>> records(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t n) {
    const std::size_t i = samples[n];
    const std::size_t row = prompt_index >= 0 ? static_cast<std::size_t>(prompt_index) : class_row(bank, data.labels[i]);
    AttributionOptions o = opts;
    o.seed = seed + i;
    try {
      const Decomposition d = decompose(model, data.cls_embeddings.row(static_cast<Eigen::Index>(i)).transpose());
      AttributionRecord r = attribute(model, head, d, bank_row(bank, row), o);
      r.sample_id = data.sample_ids[i];
      r.prompt_index = row;
      records[n] = std::move(r);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateInput) throw;
    }
  });

  std::vector<AttributionRecord> kept;
  std::string jsonl;
  for (auto& r : records) {
    if (!r) continue;
    jsonl += to_json(*r).dump() + "\n";
    kept.push_back(std::move(*r));
  }
  const fs::path dir = out_dir(cfg);
  write_file(dir / "attributions.jsonl", jsonl);
  if (!kept.empty()) records_to_dump(kept, model.d_sae()).write(dir / "attributions.clad");
  out << fmt::format("attributed {} samples with {}; {} skipped as degenerate\n", kept.size(),
                     to_string(opts.method), samples.size() - kept.size());
}

void label_cmd(const json& cfg, std::ostream& out) {
  const Inputs in = open_inputs(cfg);
  const unsigned threads = resolve_threads(cfg);
  const EmbeddingDataset data = load_dataset(in.dump, in.manifest);
  const Mat scoring = load_dataset(in.dump, in.manifest, cfg.at("scoring_role").get<std::string>()).cls_embeddings;
  const SaeModel model = open_sae(cfg.at("sae").get<std::string>());
  const TextBank bank = open_bank(in, cfg);
  ProfileConfig pc;
  pc.q = count_of(cfg, "q", 2);
  pc.min_firing = count_of(cfg, "min_firing", 0);
  pc.threads = threads;

  const auto acts = encode_all(model, data, threads);
  const auto profiles = build_profiles(acts, scoring, bank, pc);

  std::string csv =
      "component,label_index,label,alignment,clarity,clarity_group,top_activation_mean,top5_mean,dataset_mean,"
      "firing_count,truncated\n";
  for (const auto& p : profiles) {
    const ClarityGroup g = clarity_group(p.clarity);
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", p.component_id, p.label_index,
                       csv_field(bank.prompts[p.label_index]), p.alignment, p.clarity,
                       g == ClarityGroup::kHigh ? "high" : g == ClarityGroup::kMedium ? "medium" : "low",
                       p.top_activation_mean, p.top5_mean, p.dataset_mean, p.firing_count, p.truncated ? 1 : 0);
  }
  const fs::path dir = out_dir(cfg);
  write_file(dir / "labels.csv", csv);

  json summary;
  summary["profiled_components"] = profiles.size();
  summary["concept_diversity"] = concept_diversity(profiles);
  json corr = json::object();
  for (auto stat : {ActivationStatistic::kTop5Mean, ActivationStatistic::kDatasetMean, ActivationStatistic::kFiringCount}) {
    for (bool log_scale : {false, true}) {
      const std::string key = to_string(stat) + (log_scale ? "_log10" : "");
      try {
        corr[key] = activation_clarity_correlation(profiles, stat, log_scale);
      } catch (const Error&) {
        corr[key] = nullptr;
      }
    }
  }
  summary["activation_clarity_correlation"] = corr;
  write_file(dir / "label-summary.json", summary.dump(2) + "\n");
  out << fmt::format("profiled {} components, {} distinct labels\n", profiles.size(), concept_diversity(profiles));
}

void mine_cmd(const json& cfg, std::ostream& out) {
  const Inputs in = open_inputs(cfg);
  const EmbeddingDataset data = load_dataset(in.dump, in.manifest);
  const HeadParams head = load_head(in.dump, in.manifest);
  const SaeModel model = open_sae(cfg.at("sae").get<std::string>());
  const TextBank bank = open_bank(in, cfg);
  MiningConfig mc;
  mc.confidence_slack = cfg.at("slack").get<double>();
  mc.z_threshold = cfg.at("z").get<double>();
  mc.min_firing = count_of(cfg, "min_firing", 0);
  mc.stride = count_of(cfg, "stride");
  for (const auto& c : cfg.at("classes")) mc.classes.push_back(c.get<int>());
  mc.attribution.method = attribution_method_from_string(cfg.at("method").get<std::string>());
  mc.attribution.seed = seed_of(cfg);
  mc.threads = resolve_threads(cfg);

  const MiningResult res = mine_failure_modes(data, model, head, bank, mc);
  std::string jsonl;
  for (const auto& f : res.flags) jsonl += to_json(f).dump() + "\n";
  json cases = json::array();
  for (const auto& c : res.cases) cases.push_back(to_json(c, data));
  std::string csv = "class_id,reference_count,candidate_count,output_mean,output_std,output_threshold\n";
  for (const auto& s : res.classes)
    csv += fmt::format("{},{},{},{},{},{}\n", s.class_id, s.reference_count, s.candidate_count, s.output_mean,
                       s.output_std, s.output_threshold);
  const fs::path dir = out_dir(cfg);
  write_file(dir / "flags.jsonl", jsonl);
  write_file(dir / "failure-cases.json", cases.dump(2) + "\n");
  write_file(dir / "classes.csv", csv);
  out << fmt::format("{} flags over {} failure cases in {} classes\n", res.flags.size(), res.cases.size(),
                     res.classes.size());
}

void faithfulness_cmd(const json& cfg, std::ostream& out) {
  const Inputs in = open_inputs(cfg);
  const EmbeddingDataset data = load_dataset(in.dump, in.manifest);
  const HeadParams head = load_head(in.dump, in.manifest);
  const SaeModel model = open_sae(cfg.at("sae").get<std::string>());
  const TextBank bank = open_bank(in, cfg);
  const std::uint64_t seed = seed_of(cfg);
  const std::size_t subsets = count_of(cfg, "subsets");

  std::vector<Vec> prompts;
  prompts.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) prompts.push_back(bank_row(bank, class_row(bank, data.labels[i])));

  std::string curves = "method,mode,step,mean_output\n";
  std::string aucs = "method,mode,auc,sem,kept,dropped\n";
  for (const auto& m : cfg.at("methods")) {
    for (const auto& mode : cfg.at("modes")) {
      CurveRequest req;
      req.attribution.method = attribution_method_from_string(m.get<std::string>());
      req.attribution.ig_steps = count_of(cfg, "ig_steps");
      req.attribution.seed = seed;
      req.mode = curve_mode_from_string(mode.get<std::string>());
      req.max_steps = count_of(cfg, "max_steps");
      req.reference.pool_size = count_of(cfg, "pool_size");
      req.reference.seed = seed;
      req.threads = resolve_threads(cfg);
      const PerturbationCurve c = run_perturbation_curve(data, model, head, prompts, req);
      const std::string method = to_string(c.method);
      const std::string mode_name = to_string(c.mode);
      for (std::size_t s = 0; s < c.steps.size(); ++s)
        curves += fmt::format("{},{},{},{}\n", method, mode_name, s, c.steps[s]);
      const AucReport r = auc_with_sem(c.per_sample, subsets, seed);
      aucs += fmt::format("{},{},{},{},{},{}\n", method, mode_name, r.auc, r.sem, c.kept.size(), c.dropped);
      out << fmt::format("{} {}: AUC {} +- {}\n", method, mode_name, r.auc, r.sem);
    }
  }
  const fs::path dir = out_dir(cfg);
  write_file(dir / "curves.csv", curves);
  write_file(dir / "auc.csv", aucs);
}

std::vector<std::size_t> resolve_samples(const json& list, const EmbeddingDataset& data,
                                         const std::map<std::string, std::size_t>& by_id, const std::string& what) {
  require(list.is_array(), ErrorCode::kInvalidConfig, what + " must be a list");
  std::vector<std::size_t> out;
  for (const auto& e : list) {
    if (e.is_string()) {
      auto it = by_id.find(e.get<std::string>());
      require(it != by_id.end(), ErrorCode::kInvalidConfig, what + ": unknown sample id '" + e.get<std::string>() + "'");
      out.push_back(it->second);
    } else {
      require(e.is_number_integer() && e.get<long long>() >= 0 && e.get<std::size_t>() < data.size(),
              ErrorCode::kInvalidConfig, what + " entries must be sample ids or in-range indices");
      out.push_back(e.get<std::size_t>());
    }
  }
  return out;
}

void benchmark_cmd(const json& cfg, std::ostream& out) {
  const Inputs in = open_inputs(cfg);
  const EmbeddingDataset data = load_dataset(in.dump, in.manifest);
  const HeadParams head = load_head(in.dump, in.manifest);
  const auto banks = load_text_banks(in.dump, in.manifest);

  std::ifstream cf(cfg.at("cases").get<std::string>());
  require(static_cast<bool>(cf), ErrorCode::kInvalidConfig, "cannot open cases file");
  const json cases_doc = json::parse(cf);
  require(cases_doc.is_array(), ErrorCode::kInvalidConfig, "cases file must hold a list");
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < data.size(); ++i) by_id[data.sample_ids[i]] = i;
  std::vector<FailureCaseSpec> cases;
  for (const auto& c : cases_doc) {
    for (const auto& [key, v] : c.items())
      require(key == "category" || key == "class_id" || key == "class_samples" || key == "spurious_samples" ||
                  key == "valid_negatives",
              ErrorCode::kInvalidConfig, "unknown failure case key '" + key + "'");
    FailureCaseSpec spec;
    spec.category = c.at("category").get<std::string>();
    spec.class_id = c.at("class_id").get<int>();
    spec.class_samples = resolve_samples(c.at("class_samples"), data, by_id, "class_samples");
    spec.spurious_samples = resolve_samples(c.at("spurious_samples"), data, by_id, "spurious_samples");
    if (c.contains("valid_negatives"))
      spec.valid_negatives = resolve_samples(c["valid_negatives"], data, by_id, "valid_negatives");
    cases.push_back(std::move(spec));
  }

  BenchmarkRequest req;
  req.strategies = cfg.at("strategies").get<std::vector<std::string>>();
  req.baseline = cfg.at("baseline").get<std::string>();
  std::map<int, LinearProbe> probes;
  if (std::find(req.strategies.begin(), req.strategies.end(), "probe") != req.strategies.end()) {
    const fs::path probe_dir = cfg.at("probes").get<std::string>();
    require(!probe_dir.empty(), ErrorCode::kInvalidConfig, "strategy 'probe' needs --probes");
    for (const auto& c : cases)
      if (!probes.contains(c.class_id))
        probes[c.class_id] = probe_from_dump(TensorDump::read(probe_dir / fmt::format("probe_{}.clad", c.class_id)));
  }

  const BenchmarkReport rep = benchmark_failure_modes(cases, data, head, banks, probes, req);
  std::string rows = "case,category,class_id,strategy,spurious_auc,valid_auc\n";
  for (const auto& r : rep.rows)
    rows += fmt::format("{},{},{},{},{},{}\n", r.case_index, csv_field(r.category), r.class_id,
                        csv_field(r.strategy), r.spurious_auc, r.valid_auc);
  std::string summary = "category,strategy,n,spurious_mean,spurious_sem,valid_mean,valid_sem\n";
  for (const auto& s : rep.summaries)
    summary += fmt::format("{},{},{},{},{},{},{}\n", csv_field(s.category), csv_field(s.strategy), s.n,
                           s.spurious_mean, s.spurious_sem, s.valid_mean, s.valid_sem);
  std::string deltas = "category,strategy,baseline,n,delta_mean,delta_sem\n";
  for (const auto& d : rep.deltas)
    deltas += fmt::format("{},{},{},{},{},{}\n", csv_field(d.category), csv_field(d.strategy),
                          csv_field(d.baseline), d.n, d.mean, d.sem);
  const fs::path dir = out_dir(cfg);
  write_file(dir / "benchmark-rows.csv", rows);
  write_file(dir / "benchmark-summary.csv", summary);
  write_file(dir / "benchmark-deltas.csv", deltas);
  out << fmt::format("benchmarked {} cases with {} strategies\n", cases.size(), req.strategies.size());
}

// Indices and 0/1 labels of the samples taking part in a binary probe task.
std::pair<std::vector<std::size_t>, std::vector<int>> binary_task(const std::vector<int>& labels, int pos, int neg) {
  std::vector<std::size_t> idx;
  std::vector<int> y;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == pos) {
      idx.push_back(i);
      y.push_back(1);
    } else if (neg < 0 || labels[i] == neg) {
      idx.push_back(i);
      y.push_back(0);
    }
  }
  return {idx, y};
}

Mat take_rows(const Mat& m, const std::vector<std::size_t>& idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

void probe_cmd(const json& cfg, std::ostream& out) {
  const Inputs in = open_inputs(cfg);
  const unsigned threads = resolve_threads(cfg);
  const EmbeddingDataset data = load_dataset(in.dump, in.manifest);
  const HeadParams head = load_head(in.dump, in.manifest);
  const int pos = cfg.at("positive_class").get<int>();
  const int neg = cfg.at("negative_class").get<int>();
  require(pos >= 0 && neg != pos, ErrorCode::kInvalidConfig, "positive and negative class must differ");
  const Mat projected = project_all(head, data, threads);
  const auto [idx, y] = binary_task(data.labels, pos, neg);

  ProbeTrainConfig pc;
  pc.learning_rate = cfg.at("lr").get<double>();
  pc.epochs = count_of(cfg, "epochs");
  pc.l2 = cfg.at("l2").get<double>();
  pc.seed = seed_of(cfg);
  pc.augment_alpha = cfg.at("alpha").get<double>();
  json report;
  const long long component = cfg.at("augment_component").get<long long>();
  if (component >= 0) {
    const auto sae_path = cfg.at("sae").get<std::string>();
    require(!sae_path.empty(), ErrorCode::kInvalidConfig, "augmentation needs --sae");
    const SaeModel model = open_sae(sae_path);
    require(static_cast<std::size_t>(component) < model.d_sae(), ErrorCode::kInvalidConfig,
            "augment component outside the dictionary");
    const auto acts = encode_all(model, data, threads);
    std::set<std::size_t> in_task(idx.begin(), idx.end());
    pc.augment_direction = estimate_direction(projected, acts, static_cast<std::size_t>(component),
                                              cfg.at("low").get<double>(), cfg.at("high").get<double>(),
                                              [&](std::size_t i) { return in_task.contains(i); });
    report["augmentation"] = {{"component", component},
                              {"alpha", pc.augment_alpha},
                              {"n_low", pc.augment_direction->n_low},
                              {"n_high", pc.augment_direction->n_high}};
  }
  const Mat x = take_rows(projected, idx);
  const LinearProbe probe = train_linear_probe(x, y, pc);
  const fs::path dir = out_dir(cfg);
  probe_to_dump(probe).write(dir / "probe.clad");
  report["positive_class"] = pos;
  report["negative_class"] = neg;
  report["n_train"] = idx.size();
  report["epochs_run"] = probe.epochs_run;
  report["train_accuracy"] = accuracy(probe, x, y);
  write_file(dir / "probe.json", report.dump(2) + "\n");
  out << fmt::format("probe trained on {} samples, train accuracy {}\n", idx.size(), report["train_accuracy"].get<double>());
}

void sweep_cmd(const json& cfg, std::ostream& out) {
  const unsigned threads = resolve_threads(cfg);
  const LinearProbe probe = probe_from_dump(TensorDump::read(cfg.at("probe").get<std::string>()));
  const int pos = cfg.at("positive_class").get<int>();
  const int neg = cfg.at("negative_class").get<int>();
  std::map<double, LabeledEmbeddings> sets;
  for (const auto& entry : cfg.at("sweep")) {
    for (const auto& [key, v] : entry.items())
      require(key == "delta" || key == "dump" || key == "manifest", ErrorCode::kInvalidConfig,
              "unknown sweep entry key '" + key + "'");
    require(entry.contains("delta") && entry["delta"].is_number() && entry.contains("dump") &&
                entry["dump"].is_string() && entry.contains("manifest") && entry["manifest"].is_string(),
            ErrorCode::kInvalidConfig, "sweep entries need numeric delta and dump/manifest paths");
    const double delta = entry["delta"].get<double>();
    require(!sets.contains(delta), ErrorCode::kInvalidConfig, fmt::format("delta {} listed twice", delta));
    const TensorDump dump = TensorDump::read(entry["dump"].get<std::string>());
    const Manifest manifest = Manifest::read(entry["manifest"].get<std::string>());
    const EmbeddingDataset data = load_dataset(dump, manifest);
    const HeadParams head = load_head(dump, manifest);
    const auto [idx, y] = binary_task(data.labels, pos, neg);
    sets[delta] = {take_rows(project_all(head, data, threads), idx), y};
  }
  const auto rows = robustness_sweep(probe, sets);
  std::string csv = "delta,label,n,accuracy,sem,change_vs_baseline\n";
  for (const auto& r : rows)
    csv += fmt::format("{},{},{},{},{},{}\n", r.delta, r.label, r.n, r.accuracy, r.sem, r.change_vs_baseline);
  write_file(out_dir(cfg) / "sweep.csv", csv);
  out << fmt::format("swept {} shifts\n", sets.size());
}

}  // namespace

void run_command(const std::string& command, const nlohmann::json& cfg, std::ostream& out) {
  if (command == "train-sae") return train_sae_cmd(cfg, out);
  if (command == "attribute") return attribute_cmd(cfg, out);
  if (command == "label") return label_cmd(cfg, out);
  if (command == "mine") return mine_cmd(cfg, out);
  if (command == "faithfulness") return faithfulness_cmd(cfg, out);
  if (command == "benchmark") return benchmark_cmd(cfg, out);
  if (command == "probe") return probe_cmd(cfg, out);
  if (command == "sweep") return sweep_cmd(cfg, out);
  throw Error(ErrorCode::kInvalidConfig, "unknown subcommand '" + command + "'");
}

}  // namespace clat::cli
