#pragma once

#include "clat/common.hpp"
#include "clat/dump.hpp"

namespace clat {

enum class EmbeddingSource { kSample, kComponent, kReconstruction };

struct ProjectedEmbedding {
  Vec values;  // d_post
  EmbeddingSource source = EmbeddingSource::kSample;
};

// (v - mean(v)) / ||v - mean(v)|| * gamma + beta. The normalisation uses the
// Euclidean norm of the centred vector with no epsilon; DegenerateInput when v
// is constant.
Vec layernorm(const HeadParams& head, const Vec& v);

// Centred vector and its norm, shared by the head and the attribution chain
// rule. Throws DegenerateInput for constant input.
struct Centered {
  Vec values;
  double norm = 0.0;
};
Centered center(const Vec& v);

ProjectedEmbedding project(const HeadParams& head, const Vec& x_cls);
ProjectedEmbedding project_component(const HeadParams& head, const Vec& v_j);

// Cosine similarity between a projected embedding and a text embedding.
double predict(const ProjectedEmbedding& x, const Vec& t);
double cosine(const Vec& a, const Vec& b);

// Convenience: cosine output of the full head for a pre-head embedding.
inline double head_output(const HeadParams& head, const Vec& x_cls, const Vec& t) {
  return predict(project(head, x_cls), t);
}

}  // namespace clat
