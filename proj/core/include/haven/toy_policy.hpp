// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale autoregressive policy shared by the preference (TDPO) and
// reasoning fine-tuning (SRFT) labs. The next-token distribution is
// softmax(phi(context)^T W) where phi is a fixed hash embedding of the
// context concatenated with a small video-feature vector.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "haven/matrix.hpp"

namespace haven {

using TokenId = std::uint32_t;

struct FeatureMap {
  std::size_t text_dim = 12;  // includes the constant bias feature
  std::size_t video_dim = 4;
  std::uint64_t salt = 0x6861766eULL;

  std::size_t dim() const noexcept { return text_dim + video_dim; }

  // Features for predicting the token at `prefix.size()`; `video` may be
  // shorter than video_dim (zero padded) but not longer.
  std::vector<double> features(std::span<const TokenId> prompt, std::span<const TokenId> prefix,
                               std::span<const double> video) const;
};

// Fixed hash tokenizer: same word splitting as the question-length counter,
// lowercased, each word mapped to fnv1a(word) mod vocab.
std::vector<TokenId> hash_tokenize(std::string_view text, std::size_t vocab);

// Deterministic pseudo-features in [-1, 1] derived from a reference string.
std::vector<double> hash_video_features(std::string_view ref, std::size_t dim);

struct ToyPolicy {
  FeatureMap features;
  std::size_t vocab = 32;
  Matrix weights;  // features.dim() x vocab

  static ToyPolicy zeros(FeatureMap fm, std::size_t vocab);
  static ToyPolicy random(FeatureMap fm, std::size_t vocab, double stddev, std::uint64_t seed);

  bool operator==(const ToyPolicy& o) const { return vocab == o.vocab && weights == o.weights; }
};

// Per-position quantities of one forward pass.
struct ForwardTrace {
  std::vector<std::vector<double>> features;  // phi at each position
  std::vector<std::vector<double>> probs;     // softmax at each position
  std::vector<double> logps;                  // log p(y_i | context)
};

// Throws DomainError if a token is outside the vocabulary or the sequence is empty.
ForwardTrace forward(const FeatureMap& fm, const Matrix& weights, std::span<const TokenId> prompt,
                     std::span<const double> video, std::span<const TokenId> tokens);

std::vector<double> token_logprobs(const ToyPolicy& policy, std::span<const TokenId> prompt,
                                   std::span<const double> video, std::span<const TokenId> tokens);

// Accumulates scale * sum_i w_i * phi_i (e_{y_i} - p_i)^T into grad, i.e. the
// gradient of sum_i w_i log p(y_i) with respect to the weights.
void accumulate_logprob_gradient(Matrix& grad, const ForwardTrace& trace,
                                 std::span<const TokenId> tokens, std::span<const double> weights,
                                 double scale);

}  // namespace haven
