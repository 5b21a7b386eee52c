// SPDX-License-Identifier: Apache-2.0

#include "haven/toy_policy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include "haven/digest.hpp"
#include "haven/error.hpp"

namespace haven {

namespace {

constexpr TokenId kBos = 0xffffffffu;

struct Slot {
  std::size_t index;
  double sign;
};

Slot hashed_slot(std::uint64_t salt, std::uint64_t tag, std::uint64_t value, std::size_t width) {
  const std::uint64_t h = mix64(salt ^ mix64(tag * 0x9e3779b97f4a7c15ULL + value));
  return {1 + static_cast<std::size_t>(h % (width - 1)), (h >> 63) ? -1.0 : 1.0};
}

}  // namespace

std::vector<double> FeatureMap::features(std::span<const TokenId> prompt, std::span<const TokenId> prefix,
                                         std::span<const double> video) const {
  if (text_dim < 2) throw DomainError("text_dim must be >= 2");
  if (video.size() > video_dim) throw DimensionError("video feature vector longer than video_dim");
  std::vector<double> f(dim(), 0.0);
  f[0] = 1.0;

  const TokenId prev1 = prefix.empty() ? kBos : prefix.back();
  const TokenId prev2 = prefix.size() < 2 ? kBos : prefix[prefix.size() - 2];
  auto s = hashed_slot(salt, 1, prev1, text_dim);
  f[s.index] += s.sign;
  s = hashed_slot(salt, 2, (static_cast<std::uint64_t>(prev2) << 32) | prev1, text_dim);
  f[s.index] += 0.5 * s.sign;
  s = hashed_slot(salt, 3, prefix.size(), text_dim);
  f[s.index] += 0.25 * s.sign;

  if (!prompt.empty()) {
    const double w = 1.0 / std::sqrt(static_cast<double>(prompt.size()));
    for (TokenId t : prompt) {
      s = hashed_slot(salt, 4, t, text_dim);
      f[s.index] += w * s.sign;
    }
  }
  std::copy(video.begin(), video.end(), f.begin() + static_cast<std::ptrdiff_t>(text_dim));
  return f;
}

std::vector<TokenId> hash_tokenize(std::string_view text, std::size_t vocab) {
  if (vocab == 0) throw DomainError("vocab must be positive");
  std::vector<TokenId> out;
  std::string word;
  const auto flush = [&] {
    if (!word.empty()) {
      out.push_back(static_cast<TokenId>(fnv1a64(word) % vocab));
      word.clear();
    }
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      word += static_cast<char>(std::tolower(c));
    } else {
      flush();
      if (!std::isspace(c)) {
        word = std::string(1, ch);
        flush();
      }
    }
  }
  flush();
  return out;
}

std::vector<double> hash_video_features(std::string_view ref, std::size_t dim) {
  std::vector<double> out(dim);
  const std::uint64_t base = fnv1a64(ref);
  for (std::size_t j = 0; j < dim; ++j) {
    const std::uint64_t h = mix64(base + 0x9e3779b97f4a7c15ULL * (j + 1));
    out[j] = 2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0;
  }
  return out;
}

ToyPolicy ToyPolicy::zeros(FeatureMap fm, std::size_t vocab) {
  ToyPolicy p;
  p.features = fm;
  p.vocab = vocab;
  p.weights = Matrix(fm.dim(), vocab);
  return p;
}

ToyPolicy ToyPolicy::random(FeatureMap fm, std::size_t vocab, double stddev, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ToyPolicy p;
  p.features = fm;
  p.vocab = vocab;
  p.weights = Matrix::random_normal(fm.dim(), vocab, stddev, rng);
  return p;
}

ForwardTrace forward(const FeatureMap& fm, const Matrix& weights, std::span<const TokenId> prompt,
                     std::span<const double> video, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw DomainError("sequence must contain at least one token");
  if (weights.rows() != fm.dim()) throw DimensionError("weights rows must equal feature dim");
  const std::size_t vocab = weights.cols();
  ForwardTrace tr;
  tr.features.reserve(tokens.size());
  tr.probs.reserve(tokens.size());
  tr.logps.reserve(tokens.size());

  std::vector<double> logits(vocab);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= vocab) {
      throw DomainError("token id " + std::to_string(tokens[i]) + " outside vocabulary of " +
                        std::to_string(vocab));
    }
    auto phi = fm.features(prompt, tokens.first(i), video);
    std::fill(logits.begin(), logits.end(), 0.0);
    for (std::size_t r = 0; r < phi.size(); ++r) {
      if (phi[r] == 0.0) continue;
      const auto w = weights.row(r);
      for (std::size_t v = 0; v < vocab; ++v) logits[v] += phi[r] * w[v];
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    const double log_z = mx + std::log(z);
    std::vector<double> p(vocab);
    for (std::size_t v = 0; v < vocab; ++v) p[v] = std::exp(logits[v] - log_z);
    tr.logps.push_back(logits[tokens[i]] - log_z);
    tr.features.push_back(std::move(phi));
    tr.probs.push_back(std::move(p));
  }
  return tr;
}

std::vector<double> token_logprobs(const ToyPolicy& policy, std::span<const TokenId> prompt,
                                   std::span<const double> video, std::span<const TokenId> tokens) {
  return forward(policy.features, policy.weights, prompt, video, tokens).logps;
}

void accumulate_logprob_gradient(Matrix& grad, const ForwardTrace& trace, std::span<const TokenId> tokens,
                                 std::span<const double> weights, double scale) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const double w = scale * weights[i];
    if (w == 0.0) continue;
    const auto& phi = trace.features[i];
    const auto& p = trace.probs[i];
    for (std::size_t r = 0; r < phi.size(); ++r) {
      if (phi[r] == 0.0) continue;
      const double a = w * phi[r];
      auto g = grad.row(r);
      for (std::size_t v = 0; v < p.size(); ++v) g[v] -= a * p[v];
      g[tokens[i]] += a;
    }
  }
}

}  // namespace haven
