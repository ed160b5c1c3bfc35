#include "fixtures.hpp"

#include <unistd.h>

#include <atomic>
#include <cmath>

#include <Eigen/QR>

#include "clat/head.hpp"

namespace fixtures {

Vec gaussian(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Vec v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = g(rng);
  return v;
}

Mat gaussian_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

Mat centered_orthonormal_rows(std::mt19937_64& rng, std::size_t rows, std::size_t dim) {
  Mat out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < rows; ++r) {
    Vec v = gaussian(rng, dim);
    v.array() -= v.mean();
    // two Gram-Schmidt passes keep the rows orthogonal to rounding level
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t q = 0; q < r; ++q) {
        const Vec prev = out.row(static_cast<Eigen::Index>(q)).transpose();
        v -= prev.dot(v) * prev;
      }
    out.row(static_cast<Eigen::Index>(r)) = v.normalized().transpose();
  }
  return out;
}

clat::HeadParams random_head(std::mt19937_64& rng, std::size_t d_pre, std::size_t d_post, bool with_beta) {
  std::uniform_real_distribution<double> u(0.5, 1.5);
  clat::HeadParams h;
  h.gamma.resize(static_cast<Eigen::Index>(d_pre));
  for (Eigen::Index i = 0; i < h.gamma.size(); ++i) h.gamma[i] = u(rng);
  h.beta = with_beta ? gaussian(rng, d_pre, 0.3) : Vec::Zero(static_cast<Eigen::Index>(d_pre));
  h.w_proj = gaussian_matrix(rng, d_pre, d_post, 1.0 / std::sqrt(static_cast<double>(d_pre)));
  return h;
}

clat::SaeModel random_sae(std::mt19937_64& rng, std::size_t d_pre, std::size_t d_sae, std::size_t k) {
  clat::SaeModel m;
  m.w_enc = gaussian_matrix(rng, d_pre, d_sae, 1.0 / std::sqrt(static_cast<double>(d_pre)));
  m.b_enc = gaussian(rng, d_sae, 0.1);
  m.decoder = gaussian_matrix(rng, d_sae, d_pre);
  m.decoder.rowwise().normalize();
  m.b_dec = gaussian(rng, d_pre, 0.1);
  m.k = k;
  return m;
}

clat::SaeModel orthonormal_sae(const Mat& atoms, std::size_t k) {
  clat::SaeModel m;
  m.decoder = atoms;
  m.w_enc = atoms.transpose();
  m.b_enc = Vec::Zero(atoms.rows());
  m.b_dec = Vec::Zero(atoms.cols());
  m.k = k;
  return m;
}

Instance random_instance(std::uint64_t seed, std::size_t d_pre, bool with_beta) {
  std::mt19937_64 rng(seed);
  const std::size_t d_post = std::max<std::size_t>(4, d_pre / 2);
  Instance in;
  in.head = random_head(rng, d_pre, d_post, with_beta);
  in.model = random_sae(rng, d_pre, 2 * d_pre, std::min<std::size_t>(6, 2 * d_pre));
  in.t = gaussian(rng, d_post);
  do {
    in.x = gaussian(rng, d_pre);
  } while (clat::encode(in.model, in.x).empty());
  return in;
}

double reference_output(const clat::HeadParams& head, const Vec& x, const Vec& t) {
  const auto d = static_cast<std::size_t>(x.size());
  double mean = 0;
  for (std::size_t i = 0; i < d; ++i) mean += x[static_cast<Eigen::Index>(i)];
  mean /= static_cast<double>(d);
  double norm2 = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double c = x[static_cast<Eigen::Index>(i)] - mean;
    norm2 += c * c;
  }
  const double norm = std::sqrt(norm2);
  std::vector<double> ln(d);
  for (std::size_t i = 0; i < d; ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    ln[i] = (x[e] - mean) / norm * head.gamma[e] + head.beta[e];
  }
  const auto p = static_cast<std::size_t>(head.w_proj.cols());
  double dot = 0, nz = 0, nt = 0;
  for (std::size_t j = 0; j < p; ++j) {
    double z = 0;
    for (std::size_t i = 0; i < d; ++i) z += head.w_proj(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * ln[i];
    const double tj = t[static_cast<Eigen::Index>(j)];
    dot += z * tj;
    nz += z * z;
    nt += tj * tj;
  }
  return dot / (std::sqrt(nz) * std::sqrt(nt));
}

double central_difference(const clat::HeadParams& head, const Vec& x, const Vec& t, const Vec& u, double h) {
  const Vec plus = x + h * u;
  const Vec minus = x - h * u;
  return (reference_output(head, plus, t) - reference_output(head, minus, t)) / (2.0 * h);
}

double brute_force_auroc(const std::vector<double>& pos, const std::vector<double>& neg) {
  long long twice = 0;
  for (double p : pos)
    for (double n : neg) twice += p > n ? 2 : (p == n ? 1 : 0);
  return static_cast<double>(twice) / static_cast<double>(2LL * static_cast<long long>(pos.size() * neg.size()));
}

namespace {

// W_proj^T (gamma * v): the beta-free projected direction of a centred atom.
Vec linear_projection(const clat::HeadParams& head, const Vec& v) {
  return head.w_proj.transpose() * head.gamma.cwiseProduct(v);
}

}  // namespace

CarrierFixture single_carrier(std::uint64_t seed, std::size_t n_samples) {
  std::mt19937_64 rng(seed);
  const std::size_t d_pre = 16, n_atoms = 8;
  CarrierFixture f;
  // one extra orthonormal row is a shared decoder bias, so y stays positive
  // once the carrier is removed
  const Mat basis = centered_orthonormal_rows(rng, n_atoms + 1, d_pre);
  const Mat atoms = basis.topRows(n_atoms);
  const Vec bias = basis.row(static_cast<Eigen::Index>(n_atoms)).transpose();
  f.model = orthonormal_sae(atoms, n_atoms);
  f.model.b_dec = 2.0 * bias;
  f.head = random_head(rng, d_pre, 12, true);
  const Vec t = (0.4 * linear_projection(f.head, atoms.row(0).transpose()).normalized() +
                 0.6 * linear_projection(f.head, bias).normalized())
                    .normalized() +
                gaussian(rng, 12, 0.05);

  std::uniform_real_distribution<double> carrier(1.0, 3.0), other(0.5, 2.5);
  f.data.cls_embeddings.resize(static_cast<Eigen::Index>(n_samples), static_cast<Eigen::Index>(d_pre));
  for (std::size_t i = 0; i < n_samples; ++i) {
    Vec x = f.model.b_dec + carrier(rng) * atoms.row(0).transpose();
    for (std::size_t j = 1; j < n_atoms; ++j) x += other(rng) * atoms.row(static_cast<Eigen::Index>(j)).transpose();
    f.data.cls_embeddings.row(static_cast<Eigen::Index>(i)) = x.transpose();
    f.data.labels.push_back(0);
    f.data.sample_ids.push_back("s" + std::to_string(i));
    f.prompts.push_back(t);
  }
  f.data.class_names[0] = "carrier";
  return f;
}

ShortcutFixture planted_shortcut(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t d_pre = 16, d_post = 16, n_atoms = 10;
  enum { kBird = 0, kCar = 1, kWater = 2 };
  ShortcutFixture f;
  f.planted = kWater;
  // 10 atoms plus 5 residual directions span the centred subspace.
  const Mat basis = centered_orthonormal_rows(rng, 15, d_pre);
  const Mat atoms = basis.topRows(n_atoms);
  const Mat residual = basis.bottomRows(5);
  f.model = orthonormal_sae(atoms, n_atoms);
  // near-isometric head: atoms stay close to orthogonal after projection
  std::uniform_real_distribution<double> scale(0.9, 1.1);
  f.head.gamma.resize(static_cast<Eigen::Index>(d_pre));
  for (Eigen::Index i = 0; i < f.head.gamma.size(); ++i) f.head.gamma[i] = scale(rng);
  f.head.beta = gaussian(rng, d_pre, 0.05);
  const Eigen::HouseholderQR<Mat> qr(gaussian_matrix(rng, d_pre, d_post));
  f.head.w_proj = qr.householderQ();

  auto dir = [&](int a) { return linear_projection(f.head, atoms.row(a).transpose()).normalized(); };
  const Vec t_bird = (dir(kBird) + 0.6 * dir(kWater)).normalized();
  const Vec t_car = dir(kCar);
  const Vec t_water = dir(kWater);

  std::uniform_real_distribution<double> strong(2.0, 3.0), weak(0.05, 0.3), background(0.3, 1.0), offset(-1.0, 1.0);
  std::uniform_real_distribution<double> planted(0.8, 1.3), leak(1.5, 2.5), bird_water(0.0, 0.1);
  struct Spec {
    int label;
    std::size_t count;
  };
  const std::vector<Spec> groups = {{0, 200}, {1, 200}, {2, 30}};
  std::vector<Vec> rows;
  for (const auto& g : groups) {
    for (std::size_t n = 0; n < g.count; ++n) {
      Vec a(static_cast<Eigen::Index>(n_atoms));
      for (std::size_t j = 3; j < n_atoms; ++j) a[static_cast<Eigen::Index>(j)] = background(rng);
      if (g.label == 0) {
        a[kBird] = strong(rng);
        a[kCar] = weak(rng);
        a[kWater] = bird_water(rng);
      } else if (g.label == 1) {
        a[kBird] = weak(rng);
        a[kCar] = strong(rng);
        a[kWater] = weak(rng);
      } else {
        a[kBird] = leak(rng);
        a[kCar] = weak(rng);
        a[kWater] = planted(rng);
      }
      Vec x = atoms.transpose() * a + residual.transpose() * gaussian(rng, 5, 0.1);
      x.array() += offset(rng);
      rows.push_back(x);
      f.data.labels.push_back(g.label);
      f.data.sample_ids.push_back("img" + std::to_string(rows.size() - 1));
    }
  }
  f.n_distractors = 30;
  f.data.cls_embeddings.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d_pre));
  for (std::size_t i = 0; i < rows.size(); ++i) f.data.cls_embeddings.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  f.data.class_names = {{0, "bird"}, {1, "car"}, {2, "water scene"}};

  auto make_bank = [&](const std::string& name, clat::BankVariant variant, double jitter) {
    clat::TextBank b;
    b.name = name;
    b.variant = variant;
    b.prompts = {"bird", "car", "water"};
    b.embeddings.resize(3, static_cast<Eigen::Index>(d_post));
    b.embeddings.row(0) = (t_bird + gaussian(rng, d_post, jitter)).transpose();
    b.embeddings.row(1) = (t_car + gaussian(rng, d_post, jitter)).transpose();
    b.embeddings.row(2) = (t_water + gaussian(rng, d_post, jitter)).transpose();
    b.empty_prompt = "";
    b.empty_prompt_embedding = gaussian(rng, d_post, 0.3);
    if (variant == clat::BankVariant::kTemplated) {
      b.prompts = {"a photo of a bird.", "a photo of a car.", "a photo of water."};
      b.templates = {"a photo of a {}.", "a picture of a {}.", "an image of a {}."};
    }
    if (variant == clat::BankVariant::kExtendedDescription) b.note = "hand-written descriptions";
    return b;
  };
  f.banks.push_back(make_bank("short_name", clat::BankVariant::kShortName, 0.0));
  f.banks.push_back(make_bank("templated", clat::BankVariant::kTemplated, 0.05));
  f.banks.push_back(make_bank("extended_description", clat::BankVariant::kExtendedDescription, 0.1));

  f.scoring.resize(f.data.cls_embeddings.rows(), static_cast<Eigen::Index>(d_post));
  for (Eigen::Index i = 0; i < f.scoring.rows(); ++i)
    f.scoring.row(i) = (clat::project(f.head, f.data.cls_embeddings.row(i).transpose()).values +
                        gaussian(rng, d_post, 0.05))
                           .transpose();
  return f;
}

ProbeShortcutData probe_shortcut(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t d = 16;
  ProbeShortcutData out;
  std::normal_distribution<double> g(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const auto sig = static_cast<Eigen::Index>(out.signal_axis), cut = static_cast<Eigen::Index>(out.shortcut_axis);
  auto draw = [&](Mat& x, std::vector<int>& y, std::size_t n) {
    x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
      const int label = coin(rng) ? 1 : 0;
      const double sign = label == 1 ? 1.0 : -1.0;
      const auto r = static_cast<Eigen::Index>(i);
      for (std::size_t c = 0; c < d; ++c) x(r, static_cast<Eigen::Index>(c)) = g(rng);
      x(r, sig) += 0.8 * sign;
      x(r, cut) = 0.4 * sign + 0.2 * x(r, cut);
      y.push_back(label);
    }
  };
  draw(out.train, out.train_labels, 400);
  draw(out.test, out.test_labels, 20000);

  // concept pool: the shortcut latent is either off (~0) or on (~2)
  const std::size_t n_pool = 400;
  out.concept_pool.resize(static_cast<Eigen::Index>(n_pool), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n_pool; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t c = 0; c < d; ++c) out.concept_pool(r, static_cast<Eigen::Index>(c)) = g(rng);
    out.concept_pool(r, cut) = 2.0 * (coin(rng) ? 1.0 : 0.0) + 0.2 * out.concept_pool(r, cut);
    clat::ActivationVector a;
    a.d_sae = 1;
    if (out.concept_pool(r, cut) > 0) {
      a.indices.push_back(0);
      a.values.push_back(out.concept_pool(r, cut));
    }
    out.concept_activations.push_back(std::move(a));
  }
  return out;
}

void write_bundle(const ShortcutFixture& f, const std::filesystem::path& dir) {
  const clat::DumpBundle b = clat::make_bundle(f.data, f.head, f.banks, f.scoring);
  b.dump.write(dir / "dump.clad");
  clat::Manifest(b.manifest).write(dir / "manifest.json");
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("clat-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace fixtures
