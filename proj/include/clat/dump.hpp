#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clat/common.hpp"

namespace clat {

// On-disk tensor container ("CLAD" v1). All integers and floats are
// little-endian. Layout:
//
//   char[4]  magic "CLAD"
//   u32      version (1)
//   u32      entry count
//   entries, each:
//     u32    name length in bytes, followed by the UTF-8 name
//     u32    dtype code (1 = float32)
//     u32    rank
//     u64    dims[rank]
//     u64    byte offset of the payload from the start of the file
//   payload  row-major tensor data
//
// The writer packs payloads contiguously after the entry table in entry
// order; the reader accepts any offsets that stay inside the file.
inline constexpr char kDumpMagic[4] = {'C', 'L', 'A', 'D'};
inline constexpr std::uint32_t kDumpVersion = 1;

enum class DType : std::uint32_t { kFloat32 = 1 };

struct Tensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<float> data;

  std::uint64_t element_count() const;
};

class TensorDump {
 public:
  TensorDump() = default;

  // Throws DimMismatch when the element count does not match dims and
  // BadFormat when the name is already taken or a dim is zero.
  void add(Tensor tensor);
  void add_matrix(const std::string& name, const Mat& m);
  void add_vector(const std::string& name, const Vec& v);

  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  const std::vector<Tensor>& tensors() const { return tensors_; }

  // Typed views; both reject NaN/Inf with NonFiniteValue.
  Mat matrix(const std::string& name) const;
  Vec vector(const std::string& name) const;

  std::vector<std::byte> serialize() const;
  static TensorDump parse(std::span<const std::byte> bytes);

  void write(const std::filesystem::path& path) const;
  static TensorDump read(const std::filesystem::path& path);

 private:
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

// JSON manifest binding dump tensors to roles. Duplicate keys anywhere in the
// document are rejected with BadFormat.
class Manifest {
 public:
  explicit Manifest(nlohmann::json doc);

  static Manifest read(const std::filesystem::path& path);
  static Manifest parse(const std::string& text);
  void write(const std::filesystem::path& path) const;

  const nlohmann::json& json() const { return doc_; }

  bool has_role(const std::string& role) const;
  // Tensor name bound to `role`; MissingTensor if the role is unbound.
  std::string role(const std::string& role) const;

 private:
  nlohmann::json doc_;
};

struct EmbeddingDataset {
  Mat cls_embeddings;               // N x d_pre
  std::vector<Mat> spatial_tokens;  // empty, or N matrices of m x d_pre
  std::vector<int> labels;
  std::vector<std::string> sample_ids;
  std::map<int, std::string> class_names;

  std::size_t size() const { return static_cast<std::size_t>(cls_embeddings.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(cls_embeddings.cols()); }
  bool has_spatial() const { return !spatial_tokens.empty(); }
};

struct HeadParams {
  Vec gamma;
  Vec beta;
  Mat w_proj;  // d_pre x d_post

  std::size_t d_pre() const { return static_cast<std::size_t>(gamma.size()); }
  std::size_t d_post() const { return static_cast<std::size_t>(w_proj.cols()); }
};

enum class BankVariant { kShortName, kTemplated, kExtendedDescription };

std::string to_string(BankVariant v);
BankVariant bank_variant_from_string(const std::string& s);

struct TextBank {
  std::string name;
  std::vector<std::string> prompts;
  Mat embeddings;  // |prompts| x d_post
  std::string empty_prompt;
  Vec empty_prompt_embedding;
  BankVariant variant = BankVariant::kShortName;
  std::vector<std::string> templates;
  std::string note;

  std::size_t size() const { return prompts.size(); }
};

// Validates the invariants of a dataset assembled in memory.
void validate(const EmbeddingDataset& data);
void validate(const HeadParams& head);
void validate(const TextBank& bank);

// Loads the cls_embeddings role (or another N x d role such as
// "scoring_embeddings") together with sample ids, labels and class names.
EmbeddingDataset load_dataset(const TensorDump& dump, const Manifest& manifest,
                              const std::string& embedding_role = "cls_embeddings");
EmbeddingDataset load_dataset(const std::filesystem::path& dump_path,
                              const std::filesystem::path& manifest_path,
                              const std::string& embedding_role = "cls_embeddings");

HeadParams load_head(const TensorDump& dump, const Manifest& manifest);
HeadParams load_head(const std::filesystem::path& dump_path,
                     const std::filesystem::path& manifest_path);

// `bank_name` may be empty when the manifest declares exactly one bank.
TextBank load_text_bank(const TensorDump& dump, const Manifest& manifest,
                        const std::string& bank_name = "");
TextBank load_text_bank(const std::filesystem::path& dump_path,
                        const std::filesystem::path& manifest_path,
                        const std::string& bank_name = "");
std::map<std::string, TextBank> load_text_banks(const TensorDump& dump, const Manifest& manifest);

// Writes every part of a dataset/head/bank set back into dump + manifest form.
struct DumpBundle {
  TensorDump dump;
  nlohmann::json manifest;
};
DumpBundle make_bundle(const EmbeddingDataset& data, const std::optional<HeadParams>& head,
                       const std::vector<TextBank>& banks,
                       const std::optional<Mat>& scoring_embeddings = std::nullopt);

}  // namespace clat
