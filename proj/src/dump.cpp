#include "clat/dump.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace clat {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

namespace {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::byte*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T value) {
    std::byte buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(buf), std::end(buf));
    raw(buf, sizeof(T));
  }
  std::vector<std::byte>& bytes() { return out_; }

 private:
  std::vector<std::byte> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> in) : in_(in) {}

  template <typename T>
  T le() {
    require(pos_ + sizeof(T) <= in_.size(), ErrorCode::kBadFormat, "truncated entry table");
    std::byte buf[sizeof(T)];
    std::memcpy(buf, in_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(buf), std::end(buf));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
  }
  std::string str(std::size_t n) {
    require(pos_ + n <= in_.size(), ErrorCode::kBadFormat, "truncated entry name");
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

float read_float_le(const std::byte* p) {
  std::byte buf[4];
  std::memcpy(buf, p, 4);
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(buf), std::end(buf));
  float f;
  std::memcpy(&f, buf, 4);
  return f;
}

void check_finite(const Tensor& t) {
  for (float f : t.data) {
    require(std::isfinite(f), ErrorCode::kNonFiniteValue, "tensor '" + t.name + "' contains NaN or Inf");
  }
}

// nlohmann silently keeps the last duplicate key; track keys per open object
// so manifests with repeated roles are rejected instead.
nlohmann::json parse_strict(const std::string& text) {
  std::vector<std::set<std::string>> open_objects;
  std::string duplicate;
  auto cb = [&](int /*depth*/, nlohmann::json::parse_event_t event, nlohmann::json& parsed) {
    using E = nlohmann::json::parse_event_t;
    if (event == E::object_start) {
      open_objects.emplace_back();
    } else if (event == E::object_end) {
      if (!open_objects.empty()) open_objects.pop_back();
    } else if (event == E::key && !open_objects.empty()) {
      const auto key = parsed.get<std::string>();
      if (!open_objects.back().insert(key).second && duplicate.empty()) duplicate = key;
    }
    return true;
  };
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text, cb);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kBadFormat, std::string("manifest is not valid JSON: ") + e.what());
  }
  require(duplicate.empty(), ErrorCode::kBadFormat, "duplicate key '" + duplicate + "' in manifest");
  return doc;
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::vector<char> chars((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(chars.size());
  std::memcpy(bytes.data(), chars.data(), chars.size());
  return bytes;
}

template <typename T>
T json_get(const nlohmann::json& j, const std::string& what) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kBadFormat, "manifest field " + what + ": " + e.what());
  }
}

}  // namespace

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void TensorDump::add(Tensor tensor) {
  require(!tensor.dims.empty(), ErrorCode::kBadFormat, "tensor '" + tensor.name + "' has rank 0");
  for (auto d : tensor.dims) require(d >= 1, ErrorCode::kBadFormat, "tensor '" + tensor.name + "' has a zero dim");
  require(tensor.element_count() == tensor.data.size(), ErrorCode::kDimMismatch,
          "tensor '" + tensor.name + "' element count does not match dims");
  require(!index_.contains(tensor.name), ErrorCode::kBadFormat, "duplicate tensor name '" + tensor.name + "'");
  index_.emplace(tensor.name, tensors_.size());
  tensors_.push_back(std::move(tensor));
}

void TensorDump::add_matrix(const std::string& name, const Mat& m) {
  Tensor t{name, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
  t.data.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t.data[static_cast<std::size_t>(r * m.cols() + c)] = static_cast<float>(m(r, c));
  add(std::move(t));
}

void TensorDump::add_vector(const std::string& name, const Vec& v) {
  Tensor t{name, {static_cast<std::uint64_t>(v.size())}, {}};
  t.data.resize(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) t.data[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
  add(std::move(t));
}

bool TensorDump::contains(const std::string& name) const { return index_.contains(name); }

const Tensor& TensorDump::get(const std::string& name) const {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorCode::kMissingTensor, "tensor '" + name + "' not in dump");
  return tensors_[it->second];
}

Mat TensorDump::matrix(const std::string& name) const {
  const Tensor& t = get(name);
  require(t.dims.size() == 2, ErrorCode::kDimMismatch, "tensor '" + name + "' is not a matrix");
  check_finite(t);
  Mat m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = t.data[static_cast<std::size_t>(i)];
  return m;
}

Vec TensorDump::vector(const std::string& name) const {
  const Tensor& t = get(name);
  require(t.dims.size() == 1, ErrorCode::kDimMismatch, "tensor '" + name + "' is not a vector");
  check_finite(t);
  Vec v(static_cast<Eigen::Index>(t.dims[0]));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = t.data[static_cast<std::size_t>(i)];
  return v;
}

std::vector<std::byte> TensorDump::serialize() const {
  std::uint64_t table_size = 4 + 4 + 4;
  for (const auto& t : tensors_) table_size += 4 + t.name.size() + 4 + 4 + 8 * t.dims.size() + 8;

  ByteWriter w;
  w.raw(kDumpMagic, 4);
  w.le<std::uint32_t>(kDumpVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(tensors_.size()));
  std::uint64_t offset = table_size;
  for (const auto& t : tensors_) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.raw(t.name.data(), t.name.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(DType::kFloat32));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) w.le<std::uint64_t>(d);
    w.le<std::uint64_t>(offset);
    offset += 4 * t.element_count();
  }
  for (const auto& t : tensors_)
    for (float f : t.data) w.le<float>(f);
  return std::move(w.bytes());
}

TensorDump TensorDump::parse(std::span<const std::byte> bytes) {
  require(bytes.size() >= 12, ErrorCode::kBadFormat, "file shorter than header");
  require(std::memcmp(bytes.data(), kDumpMagic, 4) == 0, ErrorCode::kBadMagic, "magic is not 'CLAD'");
  ByteReader r(bytes.subspan(4));
  const auto version = r.le<std::uint32_t>();
  require(version == kDumpVersion, ErrorCode::kUnsupportedVersion,
          "dump version " + std::to_string(version) + " (expected 1)");
  const auto count = r.le<std::uint32_t>();

  TensorDump dump;
  for (std::uint32_t e = 0; e < count; ++e) {
    Tensor t;
    t.name = r.str(r.le<std::uint32_t>());
    const auto dtype = r.le<std::uint32_t>();
    require(dtype == static_cast<std::uint32_t>(DType::kFloat32), ErrorCode::kBadFormat,
            "tensor '" + t.name + "' has unsupported dtype " + std::to_string(dtype));
    const auto rank = r.le<std::uint32_t>();
    require(rank >= 1, ErrorCode::kBadFormat, "tensor '" + t.name + "' has rank 0");
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.le<std::uint64_t>();
      require(d >= 1, ErrorCode::kBadFormat, "tensor '" + t.name + "' has a zero dim");
      require(n <= bytes.size() / d, ErrorCode::kBadFormat, "tensor '" + t.name + "' is larger than the file");
      n *= d;
      t.dims.push_back(d);
    }
    const auto offset = r.le<std::uint64_t>();
    require(offset <= bytes.size() && n <= (bytes.size() - offset) / 4, ErrorCode::kBadFormat,
            "tensor '" + t.name + "' payload extends past end of file");
    t.data.resize(n);
    const std::byte* p = bytes.data() + offset;
    for (std::uint64_t i = 0; i < n; ++i) t.data[i] = read_float_le(p + 4 * i);
    dump.add(std::move(t));
  }
  return dump;
}

void TensorDump::write(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::kIo, "short write to " + path.string());
}

TensorDump TensorDump::read(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse(bytes);
}

Manifest::Manifest(nlohmann::json doc) : doc_(std::move(doc)) {
  require(doc_.is_object(), ErrorCode::kBadFormat, "manifest root must be an object");
  if (doc_.contains("format_version"))
    require(doc_["format_version"] == 1, ErrorCode::kUnsupportedVersion, "manifest format_version must be 1");
}

Manifest Manifest::parse(const std::string& text) { return Manifest(parse_strict(text)); }

Manifest Manifest::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void Manifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << doc_.dump(2) << "\n";
}

bool Manifest::has_role(const std::string& role) const {
  return doc_.contains("roles") && doc_["roles"].is_object() && doc_["roles"].contains(role);
}

std::string Manifest::role(const std::string& name) const {
  require(has_role(name), ErrorCode::kMissingTensor, "manifest has no role '" + name + "'");
  return json_get<std::string>(doc_["roles"][name], "roles." + name);
}

std::string to_string(BankVariant v) {
  switch (v) {
    case BankVariant::kShortName: return "short_name";
    case BankVariant::kTemplated: return "templated";
    case BankVariant::kExtendedDescription: return "extended_description";
  }
  return "short_name";
}

BankVariant bank_variant_from_string(const std::string& s) {
  if (s == "short_name") return BankVariant::kShortName;
  if (s == "templated") return BankVariant::kTemplated;
  if (s == "extended_description") return BankVariant::kExtendedDescription;
  throw Error(ErrorCode::kBadFormat, "unknown text bank variant '" + s + "'");
}

void validate(const EmbeddingDataset& data) {
  require(data.size() > 0, ErrorCode::kEmptyDataset, "dataset has no samples");
  require(data.cls_embeddings.allFinite(), ErrorCode::kNonFiniteValue, "cls embeddings contain NaN or Inf");
  require(data.labels.size() == data.size(), ErrorCode::kDimMismatch, "label count differs from sample count");
  require(data.sample_ids.size() == data.size(), ErrorCode::kDimMismatch, "sample id count differs from sample count");
  for (int label : data.labels)
    require(data.class_names.contains(label), ErrorCode::kBadFormat,
            "label " + std::to_string(label) + " has no class name");
  if (data.has_spatial()) {
    require(data.spatial_tokens.size() == data.size(), ErrorCode::kDimMismatch, "spatial token count differs");
    for (const auto& s : data.spatial_tokens) {
      require(static_cast<std::size_t>(s.cols()) == data.dim(), ErrorCode::kDimMismatch, "spatial token width");
      require(s.allFinite(), ErrorCode::kNonFiniteValue, "spatial tokens contain NaN or Inf");
    }
  }
}

void validate(const HeadParams& head) {
  require(head.gamma.size() == head.beta.size(), ErrorCode::kDimMismatch, "gamma and beta lengths differ");
  require(head.gamma.size() == head.w_proj.rows(), ErrorCode::kDimMismatch,
          "gamma length " + std::to_string(head.gamma.size()) + " != w_proj rows " +
              std::to_string(head.w_proj.rows()));
  require(head.w_proj.cols() >= 1, ErrorCode::kDimMismatch, "w_proj has no columns");
  require(head.gamma.allFinite() && head.beta.allFinite() && head.w_proj.allFinite(), ErrorCode::kNonFiniteValue,
          "head parameters contain NaN or Inf");
}

void validate(const TextBank& bank) {
  require(!bank.prompts.empty(), ErrorCode::kEmptyBank, "text bank '" + bank.name + "' has no prompts");
  require(static_cast<std::size_t>(bank.embeddings.rows()) == bank.prompts.size(), ErrorCode::kDimMismatch,
          "text bank '" + bank.name + "' has " + std::to_string(bank.prompts.size()) + " prompts but " +
              std::to_string(bank.embeddings.rows()) + " embedding rows");
  require(bank.empty_prompt_embedding.size() == bank.embeddings.cols(), ErrorCode::kDimMismatch,
          "empty prompt embedding width");
  require(bank.embeddings.allFinite() && bank.empty_prompt_embedding.allFinite(), ErrorCode::kNonFiniteValue,
          "text bank contains NaN or Inf");
  for (Eigen::Index r = 0; r < bank.embeddings.rows(); ++r)
    require(bank.embeddings.row(r).norm() > 0, ErrorCode::kZeroNorm, "text embedding row " + std::to_string(r));
  require(bank.empty_prompt_embedding.norm() > 0, ErrorCode::kZeroNorm, "empty prompt embedding is zero");
  if (bank.variant == BankVariant::kTemplated)
    require(!bank.templates.empty(), ErrorCode::kBadFormat, "templated bank must record its templates");
}

EmbeddingDataset load_dataset(const TensorDump& dump, const Manifest& manifest, const std::string& embedding_role) {
  const auto& doc = manifest.json();
  EmbeddingDataset data;
  data.cls_embeddings = dump.matrix(manifest.role(embedding_role));
  const auto n = data.size();

  require(doc.contains("samples"), ErrorCode::kBadFormat, "manifest has no 'samples' section");
  const auto& samples = doc["samples"];
  data.sample_ids = json_get<std::vector<std::string>>(samples.at("ids"), "samples.ids");
  data.labels = json_get<std::vector<int>>(samples.at("labels"), "samples.labels");
  require(data.sample_ids.size() == n, ErrorCode::kDimMismatch,
          "manifest lists " + std::to_string(data.sample_ids.size()) + " sample ids for " + std::to_string(n) +
              " embedding rows");
  require(data.labels.size() == n, ErrorCode::kDimMismatch, "label count differs from embedding rows");

  if (doc.contains("class_names")) {
    for (const auto& [key, value] : doc["class_names"].items()) {
      int id = 0;
      try {
        id = std::stoi(key);
      } catch (const std::exception&) {
        throw Error(ErrorCode::kBadFormat, "class_names key '" + key + "' is not an integer");
      }
      data.class_names[id] = json_get<std::string>(value, "class_names." + key);
    }
  }

  if (embedding_role == "cls_embeddings" && manifest.has_role("spatial_embeddings")) {
    const Tensor& t = dump.get(manifest.role("spatial_embeddings"));
    require(t.dims.size() == 3 && t.dims[0] == n && t.dims[2] == data.dim(), ErrorCode::kDimMismatch,
            "spatial_embeddings must be N x m x d_pre");
    check_finite(t);
    const auto m = static_cast<Eigen::Index>(t.dims[1]);
    const auto d = static_cast<Eigen::Index>(t.dims[2]);
    data.spatial_tokens.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Mat tokens(m, d);
      const float* src = t.data.data() + i * static_cast<std::size_t>(m * d);
      for (Eigen::Index k = 0; k < m * d; ++k) tokens.data()[k] = src[k];
      data.spatial_tokens.push_back(std::move(tokens));
    }
  }
  validate(data);
  return data;
}

EmbeddingDataset load_dataset(const std::filesystem::path& dump_path, const std::filesystem::path& manifest_path,
                              const std::string& embedding_role) {
  return load_dataset(TensorDump::read(dump_path), Manifest::read(manifest_path), embedding_role);
}

HeadParams load_head(const TensorDump& dump, const Manifest& manifest) {
  HeadParams head;
  head.gamma = dump.vector(manifest.role("gamma"));
  head.w_proj = dump.matrix(manifest.role("w_proj"));
  const std::string beta = manifest.role("beta");
  head.beta = beta == "zeros" ? Vec::Zero(head.gamma.size()) : dump.vector(beta);
  validate(head);
  return head;
}

HeadParams load_head(const std::filesystem::path& dump_path, const std::filesystem::path& manifest_path) {
  return load_head(TensorDump::read(dump_path), Manifest::read(manifest_path));
}

namespace {

TextBank bank_from_json(const TensorDump& dump, const std::string& name, const nlohmann::json& j) {
  TextBank bank;
  bank.name = name;
  bank.prompts = json_get<std::vector<std::string>>(j.at("prompts"), "text_banks." + name + ".prompts");
  require(!bank.prompts.empty(), ErrorCode::kEmptyBank, "text bank '" + name + "' has no prompts");
  bank.embeddings = dump.matrix(json_get<std::string>(j.at("tensor"), "text_banks." + name + ".tensor"));
  bank.variant = bank_variant_from_string(j.value("variant", std::string("short_name")));
  bank.empty_prompt = j.value("empty_prompt", std::string());
  bank.empty_prompt_embedding =
      dump.vector(json_get<std::string>(j.at("empty_tensor"), "text_banks." + name + ".empty_tensor"));
  if (j.contains("templates"))
    bank.templates = json_get<std::vector<std::string>>(j["templates"], "text_banks." + name + ".templates");
  bank.note = j.value("note", std::string());
  validate(bank);
  return bank;
}

}  // namespace

TextBank load_text_bank(const TensorDump& dump, const Manifest& manifest, const std::string& bank_name) {
  const auto& doc = manifest.json();
  require(doc.contains("text_banks") && doc["text_banks"].is_object(), ErrorCode::kMissingTensor,
          "manifest has no text_banks");
  const auto& banks = doc["text_banks"];
  if (bank_name.empty()) {
    require(banks.size() == 1, ErrorCode::kInvalidConfig, "manifest has several text banks; name one");
    return bank_from_json(dump, banks.begin().key(), banks.begin().value());
  }
  require(banks.contains(bank_name), ErrorCode::kMissingBankVariant, "no text bank named '" + bank_name + "'");
  return bank_from_json(dump, bank_name, banks[bank_name]);
}

TextBank load_text_bank(const std::filesystem::path& dump_path, const std::filesystem::path& manifest_path,
                        const std::string& bank_name) {
  return load_text_bank(TensorDump::read(dump_path), Manifest::read(manifest_path), bank_name);
}

std::map<std::string, TextBank> load_text_banks(const TensorDump& dump, const Manifest& manifest) {
  std::map<std::string, TextBank> out;
  const auto& doc = manifest.json();
  if (!doc.contains("text_banks")) return out;
  for (const auto& [name, j] : doc["text_banks"].items()) out.emplace(name, bank_from_json(dump, name, j));
  return out;
}

DumpBundle make_bundle(const EmbeddingDataset& data, const std::optional<HeadParams>& head,
                       const std::vector<TextBank>& banks, const std::optional<Mat>& scoring_embeddings) {
  DumpBundle b;
  auto& m = b.manifest;
  m["format_version"] = 1;
  m["roles"]["cls_embeddings"] = "cls_embeddings";
  b.dump.add_matrix("cls_embeddings", data.cls_embeddings);
  if (data.has_spatial()) {
    const auto rows = static_cast<std::uint64_t>(data.spatial_tokens.front().rows());
    Tensor t{"spatial_embeddings", {data.size(), rows, data.dim()}, {}};
    for (const auto& s : data.spatial_tokens)
      for (Eigen::Index k = 0; k < s.size(); ++k) t.data.push_back(static_cast<float>(s.data()[k]));
    b.dump.add(std::move(t));
    m["roles"]["spatial_embeddings"] = "spatial_embeddings";
  }
  if (scoring_embeddings) {
    b.dump.add_matrix("scoring_embeddings", *scoring_embeddings);
    m["roles"]["scoring_embeddings"] = "scoring_embeddings";
  }
  if (head) {
    b.dump.add_vector("gamma", head->gamma);
    b.dump.add_vector("beta", head->beta);
    b.dump.add_matrix("w_proj", head->w_proj);
    m["roles"]["gamma"] = "gamma";
    m["roles"]["beta"] = "beta";
    m["roles"]["w_proj"] = "w_proj";
  }
  m["samples"]["ids"] = data.sample_ids;
  m["samples"]["labels"] = data.labels;
  m["class_names"] = nlohmann::json::object();
  for (const auto& [id, name] : data.class_names) m["class_names"][std::to_string(id)] = name;
  m["text_banks"] = nlohmann::json::object();
  for (const auto& bank : banks) {
    const std::string tensor = "text_" + bank.name;
    const std::string empty = "text_" + bank.name + "_empty";
    b.dump.add_matrix(tensor, bank.embeddings);
    b.dump.add_vector(empty, bank.empty_prompt_embedding);
    auto& jb = m["text_banks"][bank.name];
    jb["tensor"] = tensor;
    jb["empty_tensor"] = empty;
    jb["prompts"] = bank.prompts;
    jb["empty_prompt"] = bank.empty_prompt;
    jb["variant"] = to_string(bank.variant);
    if (!bank.templates.empty()) jb["templates"] = bank.templates;
    if (!bank.note.empty()) jb["note"] = bank.note;
  }
  return b;
}

}  // namespace clat
