// SPDX-License-Identifier: Apache-2.0

#include "haven/tdpo.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "haven/error.hpp"

namespace haven {

using json = nlohmann::json;

std::size_t SegmentedSequence::count(Segment s) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), s));
}

void SegmentedSequence::validate() const {
  if (tokens.empty()) throw DomainError("segmented sequence must contain at least one token");
  if (labels.size() != tokens.size()) {
    throw DomainError("segment labels (" + std::to_string(labels.size()) + ") do not cover tokens (" +
                      std::to_string(tokens.size()) + ")");
  }
}

std::string_view to_string(ScoreMode m) { return m == ScoreMode::Weighted ? "weighted" : "standard"; }

std::optional<ScoreMode> parse_score_mode(std::string_view s) {
  if (s == "weighted") return ScoreMode::Weighted;
  if (s == "standard") return ScoreMode::Standard;
  return std::nullopt;
}

void TdpoConfig::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be finite and >= 0");
  if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (steps < 0) throw ConfigError("steps must be >= 0");
}

double weighted_logprob(std::span<const double> logps, std::span<const Segment> labels, double gamma) {
  if (logps.size() != labels.size()) throw DomainError("log-prob and label lengths differ");
  if (logps.empty()) throw DomainError("weighted_logprob needs at least one token");
  double sum_o = 0.0, sum_h = 0.0;
  std::size_t n_o = 0, n_h = 0;
  for (std::size_t i = 0; i < logps.size(); ++i) {
    if (labels[i] == Segment::Original) {
      sum_o += logps[i];
      ++n_o;
    } else {
      sum_h += logps[i];
      ++n_h;
    }
  }
  const double denom = static_cast<double>(n_o) + gamma * static_cast<double>(n_h);
  if (denom == 0.0) throw DegenerateWeightError("|y_o| + gamma * |y_h| is zero");
  return (sum_o + gamma * sum_h) / denom;
}

double standard_logprob(std::span<const double> logps) {
  double s = 0.0;
  for (double v : logps) s += v;
  return s;
}

std::vector<double> score_coefficients(const SegmentedSequence& seq, const TdpoConfig& cfg) {
  seq.validate();
  const std::size_t n = seq.tokens.size();
  if (cfg.score == ScoreMode::Standard) {
    return std::vector<double>(n, cfg.normalize_standard ? 1.0 / static_cast<double>(n) : 1.0);
  }
  const double denom = static_cast<double>(seq.count(Segment::Original)) +
                       cfg.gamma * static_cast<double>(seq.count(Segment::Corrected));
  if (denom == 0.0) throw DegenerateWeightError("|y_o| + gamma * |y_h| is zero");
  const double k = 1.0 / denom;
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = seq.labels[i] == Segment::Original ? k : k * cfg.gamma;
  return w;
}

double sequence_score(const ToyPolicy& policy, const PreferencePair& pair, const SegmentedSequence& seq,
                      const TdpoConfig& cfg) {
  seq.validate();
  const auto logps = token_logprobs(policy, pair.prompt, pair.video_features, seq.tokens);
  if (cfg.score == ScoreMode::Weighted) return weighted_logprob(logps, seq.labels, cfg.gamma);
  const double s = standard_logprob(logps);
  return cfg.normalize_standard ? s / static_cast<double>(logps.size()) : s;
}

Matrix sequence_score_gradient(const ToyPolicy& policy, const PreferencePair& pair,
                               const SegmentedSequence& seq, const TdpoConfig& cfg) {
  const auto coeffs = score_coefficients(seq, cfg);
  const auto trace = forward(policy.features, policy.weights, pair.prompt, pair.video_features, seq.tokens);
  Matrix g(policy.weights.rows(), policy.weights.cols());
  accumulate_logprob_gradient(g, trace, seq.tokens, coeffs, 1.0);
  return g;
}

double neg_log_sigmoid(double x) {
  // -log(1 / (1 + e^-x)) = log1p(e^-x), rearranged to avoid overflow.
  return x >= 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

namespace {

struct Margins {
  double policy_chosen, policy_rejected, ref_chosen, ref_rejected;
  double z() const { return (policy_chosen - policy_rejected) - (ref_chosen - ref_rejected); }
};

Margins margins(const PreferencePair& pair, const ToyPolicy& policy, const ToyPolicy& reference,
                const TdpoConfig& cfg) {
  Margins m{sequence_score(policy, pair, pair.chosen, cfg), sequence_score(policy, pair, pair.rejected, cfg),
            sequence_score(reference, pair, pair.chosen, cfg),
            sequence_score(reference, pair, pair.rejected, cfg)};
  if (!std::isfinite(m.policy_chosen) || !std::isfinite(m.policy_rejected) ||
      !std::isfinite(m.ref_chosen) || !std::isfinite(m.ref_rejected)) {
    throw NumericError("non-finite sequence score for pair '" + pair.id + "'");
  }
  return m;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double dpo_loss(const PreferencePair& pair, const ToyPolicy& policy, const ToyPolicy& reference,
                const TdpoConfig& cfg) {
  return neg_log_sigmoid(cfg.beta * margins(pair, policy, reference, cfg).z());
}

LossAndGradient loss_gradient(const PreferencePair& pair, const ToyPolicy& policy,
                                  const ToyPolicy& reference, const TdpoConfig& cfg) {
  const Margins m = margins(pair, policy, reference, cfg);
  const double x = cfg.beta * m.z();
  // d/dz [-log sigmoid(beta z)] = -beta * sigmoid(-beta z)
  const double dz = -cfg.beta * sigmoid(-x);

  Matrix g(policy.weights.rows(), policy.weights.cols());
  const auto add = [&](const SegmentedSequence& seq, double sign) {
    const auto coeffs = score_coefficients(seq, cfg);
    const auto tr = forward(policy.features, policy.weights, pair.prompt, pair.video_features, seq.tokens);
    accumulate_logprob_gradient(g, tr, seq.tokens, coeffs, sign * dz);
  };
  add(pair.chosen, 1.0);
  add(pair.rejected, -1.0);
  return {neg_log_sigmoid(x), std::move(g)};
}

double margin_rate(std::span<const PreferencePair> pairs, const ToyPolicy& policy, const TdpoConfig& cfg) {
  if (pairs.empty()) return 0.0;
  std::size_t positive = 0;
  for (const auto& p : pairs) {
    if (sequence_score(policy, p, p.chosen, cfg) > sequence_score(policy, p, p.rejected, cfg)) ++positive;
  }
  return static_cast<double>(positive) / static_cast<double>(pairs.size());
}

TdpoResult train_tdpo(std::span<const PreferencePair> pairs, const ToyPolicy& initial, const TdpoConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw DomainError("train_tdpo needs at least one preference pair");
  const ToyPolicy reference = initial;
  TdpoResult result{initial, {}};
  ToyPolicy& policy = result.policy;
  const double inv_n = 1.0 / static_cast<double>(pairs.size());

  for (int step = 0;; ++step) {
    double loss = 0.0;
    Matrix grad(policy.weights.rows(), policy.weights.cols());
    try {
      for (const auto& p : pairs) {
        auto lg = loss_gradient(p, policy, reference, cfg);
        loss += lg.loss;
        axpy(grad, inv_n, lg.grad);
      }
    } catch (const DivergenceError&) {
      throw;
    } catch (const NumericError& e) {
      throw DivergenceError(step, e.what());
    }
    loss *= inv_n;
    if (!std::isfinite(loss)) throw DivergenceError(step, "TDPO mean loss is not finite");
    result.trace.push_back({step, loss, margin_rate(pairs, policy, cfg)});
    if (step == cfg.steps) break;
    axpy(policy.weights, -cfg.learning_rate, grad);
  }
  return result;
}

std::vector<PreferencePair> make_synthetic_pairs(std::size_t n, std::size_t vocab, std::size_t video_dim,
                                                 std::uint64_t seed) {
  if (vocab < 2) throw DomainError("vocab must be >= 2");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<TokenId> token(0, static_cast<TokenId>(vocab - 1));
  std::uniform_int_distribution<int> length(8, 12);
  std::uniform_int_distribution<int> n_spans(1, 3);
  std::uniform_int_distribution<int> span_len(1, 2);
  std::normal_distribution<double> gauss(0.0, 1.0);
  // Rewritten spans replace tokens from the upper half of the vocabulary with
  // tokens from the lower half, so the preference is learnable.
  const auto half = static_cast<TokenId>(vocab / 2);
  std::uniform_int_distribution<TokenId> grounded(0, half - 1);
  std::uniform_int_distribution<TokenId> hallucinated(half, static_cast<TokenId>(vocab - 1));

  std::vector<PreferencePair> pairs;
  pairs.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    PreferencePair p;
    p.id = "pair-" + std::to_string(k);
    for (int i = 0; i < 4; ++i) p.prompt.push_back(token(rng));
    for (std::size_t i = 0; i < video_dim; ++i) p.video_features.push_back(gauss(rng));

    const int len = length(rng);
    for (int i = 0; i < len; ++i) p.rejected.tokens.push_back(token(rng));
    p.rejected.labels.assign(p.rejected.tokens.size(), Segment::Original);

    p.chosen.tokens = p.rejected.tokens;
    p.chosen.labels.assign(p.rejected.tokens.size(), Segment::Original);
    std::uniform_int_distribution<int> start(0, len - 1);
    const int spans = n_spans(rng);
    for (int s = 0; s < spans; ++s) {
      const int b = start(rng);
      const int e = std::min(len, b + span_len(rng));
      for (int i = b; i < e; ++i) {
        const auto at = static_cast<std::size_t>(i);
        p.rejected.tokens[at] = hallucinated(rng);
        p.chosen.tokens[at] = grounded(rng);
        p.chosen.labels[at] = Segment::Corrected;
      }
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

double corrected_token_gain(std::span<const PreferencePair> pairs, const ToyPolicy& before,
                            const ToyPolicy& after) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& p : pairs) {
    const auto lb = token_logprobs(before, p.prompt, p.video_features, p.chosen.tokens);
    const auto la = token_logprobs(after, p.prompt, p.video_features, p.chosen.tokens);
    for (std::size_t i = 0; i < p.chosen.tokens.size(); ++i) {
      if (p.chosen.labels[i] != Segment::Corrected) continue;
      total += la[i] - lb[i];
      ++n;
    }
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

namespace {

json sequence_json(const SegmentedSequence& s) {
  std::string labels;
  json arr = json::array();
  for (Segment l : s.labels) arr.push_back(l == Segment::Original ? "o" : "h");
  return json{{"tokens", s.tokens}, {"labels", arr}, {"text", s.text}};
}

SegmentedSequence sequence_from_json(const json& j, std::size_t line, const char* which) {
  SegmentedSequence s;
  try {
    s.tokens = j.at("tokens").get<std::vector<TokenId>>();
    for (const auto& l : j.at("labels")) {
      const auto v = l.get<std::string>();
      if (v == "o") {
        s.labels.push_back(Segment::Original);
      } else if (v == "h") {
        s.labels.push_back(Segment::Corrected);
      } else {
        throw SchemaError(line, std::string(which) + ": label must be \"o\" or \"h\", got \"" + v + "\"");
      }
    }
    s.text = j.value("text", std::string{});
  } catch (const json::exception& e) {
    throw SchemaError(line, std::string(which) + ": " + e.what());
  }
  try {
    s.validate();
  } catch (const DomainError& e) {
    throw SchemaError(line, std::string(which) + ": " + e.what());
  }
  return s;
}

}  // namespace

json to_json(const PreferencePair& p) {
  return json{{"id", p.id},
              {"prompt", p.prompt},
              {"video_features", p.video_features},
              {"chosen", sequence_json(p.chosen)},
              {"rejected", sequence_json(p.rejected)}};
}

PreferencePair pair_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw SchemaError(line, "record must be a JSON object");
  PreferencePair p;
  p.id = j.value("id", "line-" + std::to_string(line));
  try {
    p.prompt = j.at("prompt").get<std::vector<TokenId>>();
    if (j.contains("video_features")) p.video_features = j["video_features"].get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw SchemaError(line, e.what());
  }
  if (!j.contains("chosen") || !j.contains("rejected")) {
    throw SchemaError(line, "record needs chosen and rejected");
  }
  p.chosen = sequence_from_json(j["chosen"], line, "chosen");
  p.rejected = sequence_from_json(j["rejected"], line, "rejected");
  return p;
}

std::vector<PreferencePair> load_preference_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open preference data " + path.string());
  std::vector<PreferencePair> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(line, e.what());
    }
    out.push_back(pair_from_json(j, line));
  }
  return out;
}

void save_preference_pairs(const std::filesystem::path& path, std::span<const PreferencePair> pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& p : pairs) out << to_json(p).dump() << '\n';
}

std::string tdpo_trace_csv(std::span<const TdpoTraceRow> trace) {
  std::ostringstream os;
  os << "step,mean_loss,margin_rate\n";
  char buf[96];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.9f,%.4f\n", r.step, r.mean_loss, r.margin_rate);
    os << buf;
  }
  return os.str();
}

}  // namespace haven
