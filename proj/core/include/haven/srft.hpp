// SPDX-License-Identifier: Apache-2.0
//
// Supervised reasoning fine-tuning on the toy policy through a low-rank
// adapter, and synthesis of reasoning targets from still images presented as
// static videos.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "haven/matrix.hpp"
#include "haven/model_client.hpp"
#include "haven/toy_policy.hpp"

namespace haven {

// W' = W + alpha * B A with A: rank x k and B: d x rank.
struct LoraAdapter {
  Matrix A;
  Matrix B;
  double alpha = 1.0;
  std::size_t rank = 0;

  // Gaussian A, zero B, so the initial update is exactly zero.
  static LoraAdapter init(std::size_t d, std::size_t k, std::size_t rank, double alpha, double a_stddev,
                          std::uint64_t seed);

  // Throws ConfigError unless 1 <= rank <= min(d, k) / 2 and the factor
  // shapes agree with (d, k).
  void validate(std::size_t d, std::size_t k) const;

  Matrix delta() const;  // alpha * B A
};

// Throws DimensionError on shape mismatch. `w` is not modified.
Matrix lora_compose(const Matrix& w, const LoraAdapter& adapter);

enum class SampleSource { DistilledStaticVideo, Other };
std::string_view to_string(SampleSource s);
std::optional<SampleSource> parse_sample_source(std::string_view s);

struct ReasoningSample {
  std::string video_ref;
  std::string question;
  std::string reasoning_target;
  SampleSource source = SampleSource::Other;
};

nlohmann::json to_json(const ReasoningSample& s);
ReasoningSample reasoning_sample_from_json(const nlohmann::json& j, std::size_t line);
std::vector<ReasoningSample> load_reasoning_samples(const std::filesystem::path& path);
void save_reasoning_samples(const std::filesystem::path& path, std::span<const ReasoningSample> samples);

// Writes n_frames copies of `image` under {frames_root}/{video_ref}/.
// Throws IntegrityError if the written frames are not byte-identical.
void write_static_video(const std::filesystem::path& frames_root, const std::string& video_ref,
                        const ImagePayload& image, std::size_t n_frames);

// Throws IntegrityError unless every frame in the directory is byte-identical
// and there is at least one.
void verify_static_video(const std::filesystem::path& dir);

struct StaticVideoRequest {
  std::string image_id;  // names the frame directory
  ImagePayload image;
  std::string question;
};

// Queries the reasoning endpoint with n_frames copies of the image plus the
// question. Returns nullopt when the endpoint answers with blank text.
std::optional<ReasoningSample> make_static_video_sample(const StaticVideoRequest& req,
                                                        const ChatClient& reasoning, std::size_t n_frames,
                                                        const std::filesystem::path& frames_root);

struct SynthesisResult {
  std::vector<ReasoningSample> samples;  // request order, rejected ones dropped
  std::vector<std::string> rejected;     // image ids with empty responses
  std::vector<std::pair<std::string, std::string>> failed;  // image id, error
};

// Fans requests out over up to `workers` threads; the client's limiter bounds
// in-flight calls.
SynthesisResult synthesize_static_video_samples(std::span<const StaticVideoRequest> reqs,
                                                const ChatClient& reasoning, std::size_t n_frames,
                                                const std::filesystem::path& frames_root,
                                                std::size_t workers);

struct TokenizedSample {
  std::vector<TokenId> prompt;
  std::vector<double> video;
  std::vector<TokenId> target;
};

// Same hash tokenizer and video features as the preference lab.
TokenizedSample tokenize_sample(const ReasoningSample& s, const FeatureMap& fm, std::size_t vocab);

// Mean over samples of the per-token mean negative log-likelihood of the
// target under the composed weights. Throws NumericError if not finite.
double srft_loss(std::span<const TokenizedSample> batch, const Matrix& w, const LoraAdapter& adapter,
                 const FeatureMap& fm);

struct SrftGradient {
  double loss = 0.0;
  Matrix dA;
  Matrix dB;
};

// Gradients flow into the adapter only; there is no gradient for w.
SrftGradient srft_gradient(std::span<const TokenizedSample> batch, const Matrix& w,
                           const LoraAdapter& adapter, const FeatureMap& fm);

struct SrftConfig {
  double alpha = 1.0;
  std::size_t rank = 4;
  double learning_rate = 0.5;
  int steps = 300;
  std::uint64_t seed = 7;
  double init_stddev = 0.1;
};

struct SrftTraceRow {
  int step = 0;
  double loss = 0.0;
};

struct SrftResult {
  LoraAdapter adapter;
  std::vector<SrftTraceRow> trace;  // steps + 1 rows
  std::size_t delta_rank = 0;       // numeric rank of B A after training
};

// Gradient descent on A and B. `w` is held const and re-checked bitwise after
// training (IntegrityError if touched); numeric_rank(BA) <= rank is verified
// (IntegrityError otherwise). DivergenceError carries the step index.
SrftResult train_srft(std::span<const TokenizedSample> batch, const Matrix& w, const FeatureMap& fm,
                      const SrftConfig& cfg);

// Deterministic base weights for the toy policy (features.dim() x vocab).
Matrix make_base_weights(const FeatureMap& fm, std::size_t vocab, std::uint64_t seed);

// Synthetic samples whose targets follow a fixed first-order Markov chain over
// the vocabulary, so a low-rank correction to W can fit them.
std::vector<TokenizedSample> make_synthetic_reasoning_batch(std::size_t n, const FeatureMap& fm,
                                                            std::size_t vocab, std::uint64_t seed);

std::string srft_trace_csv(std::span<const SrftTraceRow> trace);

}  // namespace haven
