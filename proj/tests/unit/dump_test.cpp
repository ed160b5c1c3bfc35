#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <limits>

#include "clat/dump.hpp"
#include "fixtures.hpp"

using clat::ErrorCode;
using clat::Mat;
using clat::Vec;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const clat::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected clat::Error";
  return ErrorCode::kIo;
}

std::vector<unsigned char> bytes_of(const std::vector<std::byte>& b) {
  std::vector<unsigned char> out;
  for (auto x : b) out.push_back(static_cast<unsigned char>(x));
  return out;
}

std::vector<std::byte> to_bytes(const std::vector<unsigned char>& b) {
  std::vector<std::byte> out;
  for (auto x : b) out.push_back(static_cast<std::byte>(x));
  return out;
}

}  // namespace

TEST(Dump, SerializedLayoutMatchesHandAssembledBytes) {
  clat::TensorDump d;
  Mat m(1, 2);
  m << 1.0, -2.0;
  d.add_matrix("a", m);
  // magic, version 1, one entry; name "a"; dtype 1; rank 2; dims 1, 2; offset 49; payload
  const std::vector<unsigned char> expected = {
      'C', 'L', 'A', 'D', 1, 0, 0, 0, 1, 0, 0, 0,                    //
      1,   0,   0,   0,   'a',                                        //
      1,   0,   0,   0,   2, 0, 0, 0,                                 //
      1,   0,   0,   0,   0, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0,         //
      49,  0,   0,   0,   0, 0, 0, 0,                                 //
      0,   0,   0x80, 0x3f, 0, 0, 0, 0xc0};
  EXPECT_EQ(bytes_of(d.serialize()), expected);
}

TEST(Dump, MatrixRoundTripIsBitExact) {
  clat::TensorDump d;
  Mat m(2, 4);
  m << 0.1, -0.2, 3.5, 1e-7, -1e6, 0.0, 7.25, -0.333;
  d.add_matrix("m", m);
  const auto bytes = d.serialize();
  const auto back = clat::TensorDump::parse(bytes);
  EXPECT_EQ(back.get("m").dims, (std::vector<std::uint64_t>{2, 4}));
  const Mat r = back.matrix("m");
  for (Eigen::Index i = 0; i < m.size(); ++i) EXPECT_EQ(r.data()[i], static_cast<double>(static_cast<float>(m.data()[i])));
  EXPECT_EQ(back.serialize(), bytes);
}

TEST(Dump, FileRoundTripReproducesPayloadBytes) {
  fixtures::TempDir dir("dump");
  const auto f = fixtures::planted_shortcut(3);
  fixtures::write_bundle(f, dir.path());
  const auto first = clat::TensorDump::read(dir.path() / "dump.clad");
  first.write(dir.path() / "again.clad");
  std::ifstream a(dir.path() / "dump.clad", std::ios::binary), b(dir.path() / "again.clad", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
}

TEST(Dump, BadMagicRejected) {
  clat::TensorDump d;
  d.add_vector("v", Vec::Ones(3));
  auto raw = bytes_of(d.serialize());
  std::memcpy(raw.data(), "XXXX", 4);
  EXPECT_EQ(code_of([&] { clat::TensorDump::parse(to_bytes(raw)); }), ErrorCode::kBadMagic);
}

TEST(Dump, UnsupportedVersionRejected) {
  clat::TensorDump d;
  d.add_vector("v", Vec::Ones(3));
  auto raw = bytes_of(d.serialize());
  raw[4] = 2;
  EXPECT_EQ(code_of([&] { clat::TensorDump::parse(to_bytes(raw)); }), ErrorCode::kUnsupportedVersion);
}

TEST(Dump, TruncatedPayloadRejected) {
  clat::TensorDump d;
  d.add_vector("v", Vec::Ones(3));
  auto raw = bytes_of(d.serialize());
  raw.resize(raw.size() - 2);
  const auto code = code_of([&] { clat::TensorDump::parse(to_bytes(raw)); });
  EXPECT_EQ(code, ErrorCode::kBadFormat);
}

TEST(Dump, NonFiniteValuesRejectedOnLoad) {
  clat::TensorDump d;
  clat::Tensor t{"v", {2}, {1.0f, std::numeric_limits<float>::quiet_NaN()}};
  d.add(t);
  const auto back = clat::TensorDump::parse(d.serialize());
  EXPECT_EQ(code_of([&] { back.vector("v"); }), ErrorCode::kNonFiniteValue);
  clat::TensorDump e;
  e.add(clat::Tensor{"w", {1, 1}, {std::numeric_limits<float>::infinity()}});
  EXPECT_EQ(code_of([&] { e.matrix("w"); }), ErrorCode::kNonFiniteValue);
}

TEST(Dump, AddRejectsMismatchedAndDuplicateTensors) {
  clat::TensorDump d;
  EXPECT_EQ(code_of([&] { d.add(clat::Tensor{"x", {2, 2}, {1, 2, 3}}); }), ErrorCode::kDimMismatch);
  d.add_vector("x", Vec::Ones(2));
  EXPECT_EQ(code_of([&] { d.add_vector("x", Vec::Ones(2)); }), ErrorCode::kBadFormat);
  EXPECT_EQ(code_of([&] { d.get("missing"); }), ErrorCode::kMissingTensor);
}

TEST(Manifest, DuplicateKeysRejected) {
  EXPECT_EQ(code_of([] { clat::Manifest::parse(R"({"roles": {"gamma": "g", "gamma": "h"}})"); }),
            ErrorCode::kBadFormat);
  EXPECT_NO_THROW(clat::Manifest::parse(R"({"roles": {"gamma": "g"}})"));
}

TEST(Manifest, UnboundRoleIsMissingTensor) {
  const auto m = clat::Manifest::parse(R"({"roles": {"gamma": "g"}})");
  EXPECT_TRUE(m.has_role("gamma"));
  EXPECT_FALSE(m.has_role("w_proj"));
  EXPECT_EQ(m.role("gamma"), "g");
  EXPECT_EQ(code_of([&] { m.role("w_proj"); }), ErrorCode::kMissingTensor);
}

namespace {

struct HeadDump {
  clat::TensorDump dump;
  nlohmann::json manifest;
};

HeadDump head_dump(std::size_t gamma_len, std::size_t proj_rows, bool with_beta) {
  HeadDump h;
  h.dump.add_vector("g", Vec::Ones(static_cast<Eigen::Index>(gamma_len)));
  h.dump.add_matrix("w", Mat::Ones(static_cast<Eigen::Index>(proj_rows), 4));
  h.manifest["roles"]["gamma"] = "g";
  h.manifest["roles"]["w_proj"] = "w";
  if (with_beta) {
    h.dump.add_vector("b", Vec::Constant(static_cast<Eigen::Index>(gamma_len), 0.5));
    h.manifest["roles"]["beta"] = "b";
  } else {
    h.manifest["roles"]["beta"] = "zeros";
  }
  return h;
}

}  // namespace

TEST(LoadHead, ShapesFromDump) {
  const auto h = head_dump(8, 8, true);
  const auto head = clat::load_head(h.dump, clat::Manifest(h.manifest));
  EXPECT_EQ(head.d_pre(), 8u);
  EXPECT_EQ(head.d_post(), 4u);
  EXPECT_EQ(head.beta, Vec::Constant(8, 0.5));
}

TEST(LoadHead, ProjectionRowsMustMatchGamma) {
  const auto h = head_dump(8, 6, true);
  EXPECT_EQ(code_of([&] { clat::load_head(h.dump, clat::Manifest(h.manifest)); }), ErrorCode::kDimMismatch);
}

TEST(LoadHead, ZerosBetaSynthesised) {
  const auto h = head_dump(8, 8, false);
  const auto head = clat::load_head(h.dump, clat::Manifest(h.manifest));
  EXPECT_EQ(head.beta, Vec::Zero(8));
}

TEST(LoadHead, AbsentTensorIsMissingTensor) {
  auto h = head_dump(8, 8, true);
  h.manifest["roles"]["gamma"] = "nope";
  EXPECT_EQ(code_of([&] { clat::load_head(h.dump, clat::Manifest(h.manifest)); }), ErrorCode::kMissingTensor);
}

TEST(LoadTextBank, RowCountMustMatchPrompts) {
  const auto f = fixtures::planted_shortcut(5);
  auto b = clat::make_bundle(f.data, f.head, {f.banks.front()});
  const auto bank = clat::load_text_bank(b.dump, clat::Manifest(b.manifest));
  EXPECT_EQ(bank.size(), 3u);
  EXPECT_EQ(bank.embeddings.rows(), 3);
  b.manifest["text_banks"]["short_name"]["prompts"] = {"bird", "car", "water", "extra"};
  EXPECT_EQ(code_of([&] { clat::load_text_bank(b.dump, clat::Manifest(b.manifest)); }), ErrorCode::kDimMismatch);
}

TEST(LoadTextBank, NamedBankSelectionAndVariants) {
  const auto f = fixtures::planted_shortcut(5);
  const auto b = clat::make_bundle(f.data, f.head, f.banks);
  const clat::Manifest m(b.manifest);
  EXPECT_THROW(clat::load_text_bank(b.dump, m), clat::Error);  // three banks, no name
  const auto banks = clat::load_text_banks(b.dump, m);
  ASSERT_EQ(banks.size(), 3u);
  EXPECT_EQ(banks.at("templated").variant, clat::BankVariant::kTemplated);
  EXPECT_EQ(banks.at("templated").templates.size(), 3u);
  EXPECT_EQ(banks.at("extended_description").note, "hand-written descriptions");
}

TEST(LoadDataset, BundleRoundTrip) {
  fixtures::TempDir dir("dataset");
  const auto f = fixtures::planted_shortcut(11);
  fixtures::write_bundle(f, dir.path());
  const auto data = clat::load_dataset(dir.path() / "dump.clad", dir.path() / "manifest.json");
  ASSERT_EQ(data.size(), f.data.size());
  EXPECT_EQ(data.labels, f.data.labels);
  EXPECT_EQ(data.sample_ids, f.data.sample_ids);
  EXPECT_EQ(data.class_names, f.data.class_names);
  EXPECT_LE((data.cls_embeddings - f.data.cls_embeddings).cwiseAbs().maxCoeff(), 1e-6 * f.data.cls_embeddings.cwiseAbs().maxCoeff());
  const auto scoring = clat::load_dataset(dir.path() / "dump.clad", dir.path() / "manifest.json", "scoring_embeddings");
  EXPECT_EQ(scoring.cls_embeddings.cols(), f.scoring.cols());
}

TEST(LoadDataset, SpatialTokensRoundTrip) {
  clat::EmbeddingDataset data;
  data.cls_embeddings = Mat::Random(3, 4);
  for (int i = 0; i < 3; ++i) data.spatial_tokens.push_back(Mat::Random(2, 4));
  data.labels = {0, 1, 0};
  data.sample_ids = {"a", "b", "c"};
  data.class_names = {{0, "x"}, {1, "y"}};
  const auto b = clat::make_bundle(data, std::nullopt, {});
  const auto back = clat::load_dataset(b.dump, clat::Manifest(b.manifest));
  ASSERT_TRUE(back.has_spatial());
  ASSERT_EQ(back.spatial_tokens.size(), 3u);
  EXPECT_NEAR((back.spatial_tokens[1] - data.spatial_tokens[1]).cwiseAbs().maxCoeff(), 0.0, 1e-7);
}

TEST(LoadDataset, LabelCountMismatchRejected) {
  clat::EmbeddingDataset data;
  data.cls_embeddings = Mat::Random(3, 4);
  data.labels = {0, 1, 0};
  data.sample_ids = {"a", "b", "c"};
  auto b = clat::make_bundle(data, std::nullopt, {});
  b.manifest["samples"]["labels"] = {0, 1};
  EXPECT_THROW(clat::load_dataset(b.dump, clat::Manifest(b.manifest)), clat::Error);
}
