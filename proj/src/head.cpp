#include "clat/head.hpp"

#include <algorithm>
#include <cmath>

namespace clat {

Centered center(const Vec& v) {
  require(v.size() > 0, ErrorCode::kDegenerateInput, "empty vector");
  Centered c;
  c.values = v.array() - v.mean();
  c.norm = c.values.norm();
  // A constant vector centres to exact zero in exact arithmetic; in floating
  // point the mean can leave residue at the rounding level of ||v||.
  const double scale = v.norm();
  require(c.norm > 1e-12 * scale && c.norm > 0.0, ErrorCode::kDegenerateInput, "input is constant");
  return c;
}

Vec layernorm(const HeadParams& head, const Vec& v) {
  require(v.size() == head.gamma.size(), ErrorCode::kDimMismatch, "layernorm input width");
  const Centered c = center(v);
  return (c.values / c.norm).cwiseProduct(head.gamma) + head.beta;
}

ProjectedEmbedding project(const HeadParams& head, const Vec& x_cls) {
  return {head.w_proj.transpose() * layernorm(head, x_cls), EmbeddingSource::kSample};
}

ProjectedEmbedding project_component(const HeadParams& head, const Vec& v_j) {
  return {head.w_proj.transpose() * layernorm(head, v_j), EmbeddingSource::kComponent};
}

double cosine(const Vec& a, const Vec& b) {
  require(a.size() == b.size(), ErrorCode::kDimMismatch, "cosine operands differ in width");
  const double na = a.norm();
  const double nb = b.norm();
  require(na > 0 && nb > 0, ErrorCode::kZeroNorm, "cosine of a zero vector");
  const double c = a.dot(b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

double predict(const ProjectedEmbedding& x, const Vec& t) { return cosine(x.values, t); }

}  // namespace clat
