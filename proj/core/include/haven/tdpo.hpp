// SPDX-License-Identifier: Apache-2.0
//
// Standard and segment-weighted DPO over token log-probabilities.
//
// The weighted score of a response is
//   K * (sum_{i in original} log p_i + gamma * sum_{i in corrected} log p_i),
//   K = 1 / (|original| + gamma * |corrected|),
// and the DPO loss is -log sigmoid(beta * [(s(chosen) - s(rejected)) under the
// policy minus the same margin under the frozen reference]).

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "haven/toy_policy.hpp"

namespace haven {

enum class Segment : std::uint8_t { Original, Corrected };

struct SegmentedSequence {
  std::vector<TokenId> tokens;
  std::vector<Segment> labels;
  std::string text;

  std::size_t count(Segment s) const;
  // Throws DomainError unless labels cover every token and length >= 1.
  void validate() const;
};

struct PreferencePair {
  std::string id;
  std::vector<TokenId> prompt;
  std::vector<double> video_features;
  SegmentedSequence chosen;    // revised response; corrected spans labelled
  SegmentedSequence rejected;  // original response; all labels Original
};

enum class ScoreMode { Standard, Weighted };
std::string_view to_string(ScoreMode m);
std::optional<ScoreMode> parse_score_mode(std::string_view s);

struct TdpoConfig {
  double gamma = 5.0;
  double beta = 0.1;
  double learning_rate = 0.1;
  int steps = 200;
  std::uint64_t seed = 7;
  ScoreMode score = ScoreMode::Weighted;
  // Standard score divided by sequence length.
  bool normalize_standard = false;

  void validate() const;
};

// K-normalised, gamma-weighted mean. Throws DegenerateWeightError when
// |original| + gamma * |corrected| == 0 and DomainError on length mismatch.
double weighted_logprob(std::span<const double> logps, std::span<const Segment> labels, double gamma);

// Plain sum of log-probabilities.
double standard_logprob(std::span<const double> logps);

// Per-token coefficients w_i such that score = sum_i w_i * logp_i.
std::vector<double> score_coefficients(const SegmentedSequence& seq, const TdpoConfig& cfg);

double sequence_score(const ToyPolicy& policy, const PreferencePair& pair, const SegmentedSequence& seq,
                      const TdpoConfig& cfg);

// Gradient of sequence_score with respect to the policy weights.
Matrix sequence_score_gradient(const ToyPolicy& policy, const PreferencePair& pair,
                               const SegmentedSequence& seq, const TdpoConfig& cfg);

// -log sigmoid(x), stable for large |x|.
double neg_log_sigmoid(double x);

double dpo_loss(const PreferencePair& pair, const ToyPolicy& policy, const ToyPolicy& reference,
                const TdpoConfig& cfg);

struct LossAndGradient {
  double loss = 0.0;
  Matrix grad;
};

// Exact analytic gradient of dpo_loss with respect to policy.weights.
LossAndGradient loss_gradient(const PreferencePair& pair, const ToyPolicy& policy,
                                  const ToyPolicy& reference, const TdpoConfig& cfg);

// Share of pairs whose policy score favours the chosen response.
double margin_rate(std::span<const PreferencePair> pairs, const ToyPolicy& policy, const TdpoConfig& cfg);

struct TdpoTraceRow {
  int step = 0;
  double mean_loss = 0.0;
  double margin_rate = 0.0;
};

struct TdpoResult {
  ToyPolicy policy;
  std::vector<TdpoTraceRow> trace;  // steps + 1 rows, row s after s updates
};

// Full-batch gradient descent from `initial` against a frozen copy of it.
// Throws DivergenceError with the step index if the mean loss stops being finite.
TdpoResult train_tdpo(std::span<const PreferencePair> pairs, const ToyPolicy& initial, const TdpoConfig& cfg);

// Synthetic preference data: each rejected response gets one to three short
// spans rewritten in the chosen response, labelled Corrected.
std::vector<PreferencePair> make_synthetic_pairs(std::size_t n, std::size_t vocab, std::size_t video_dim,
                                                 std::uint64_t seed);

// Mean change in log-probability over the chosen responses' Corrected tokens.
double corrected_token_gain(std::span<const PreferencePair> pairs, const ToyPolicy& before,
                            const ToyPolicy& after);

nlohmann::json to_json(const PreferencePair& p);
// Labels are "o"/"h" per token. Throws SchemaError tagged with `line`.
PreferencePair pair_from_json(const nlohmann::json& j, std::size_t line);
std::vector<PreferencePair> load_preference_pairs(const std::filesystem::path& path);
void save_preference_pairs(const std::filesystem::path& path, std::span<const PreferencePair> pairs);

std::string tdpo_trace_csv(std::span<const TdpoTraceRow> trace);

}  // namespace haven
