// SPDX-License-Identifier: Apache-2.0

#include "haven/srft.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "haven/digest.hpp"
#include "haven/error.hpp"
#include "haven/frames.hpp"

namespace haven {

using json = nlohmann::json;

LoraAdapter LoraAdapter::init(std::size_t d, std::size_t k, std::size_t rank, double alpha, double a_stddev,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LoraAdapter a;
  a.A = Matrix::random_normal(rank, k, a_stddev, rng);
  a.B = Matrix(d, rank);
  a.alpha = alpha;
  a.rank = rank;
  a.validate(d, k);
  return a;
}

void LoraAdapter::validate(std::size_t d, std::size_t k) const {
  if (rank == 0) throw ConfigError("adapter rank must be positive");
  if (2 * rank > std::min(d, k)) {
    throw ConfigError("adapter rank " + std::to_string(rank) + " exceeds min(d, k) / 2 for " +
                      std::to_string(d) + "x" + std::to_string(k));
  }
  if (A.rows() != rank || A.cols() != k) throw ConfigError("adapter A must be rank x k");
  if (B.rows() != d || B.cols() != rank) throw ConfigError("adapter B must be d x rank");
  if (!std::isfinite(alpha)) throw ConfigError("adapter alpha must be finite");
}

Matrix LoraAdapter::delta() const {
  Matrix d = matmul(B, A);
  for (double& v : d.data()) v *= alpha;
  return d;
}

Matrix lora_compose(const Matrix& w, const LoraAdapter& adapter) {
  if (adapter.B.rows() != w.rows() || adapter.A.cols() != w.cols() || adapter.B.cols() != adapter.A.rows()) {
    throw DimensionError("adapter shapes do not match base weight " + std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()));
  }
  Matrix out = w;
  axpy(out, adapter.alpha, matmul(adapter.B, adapter.A));
  return out;
}

std::string_view to_string(SampleSource s) {
  return s == SampleSource::DistilledStaticVideo ? "distilled_static_video" : "other";
}

std::optional<SampleSource> parse_sample_source(std::string_view s) {
  if (s == "distilled_static_video") return SampleSource::DistilledStaticVideo;
  if (s == "other") return SampleSource::Other;
  return std::nullopt;
}

json to_json(const ReasoningSample& s) {
  return json{{"video_ref", s.video_ref},
              {"question", s.question},
              {"reasoning_target", s.reasoning_target},
              {"source", to_string(s.source)}};
}

ReasoningSample reasoning_sample_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw SchemaError(line, "record must be a JSON object");
  ReasoningSample s;
  try {
    s.video_ref = j.at("video_ref").get<std::string>();
    s.question = j.at("question").get<std::string>();
    s.reasoning_target = j.at("reasoning_target").get<std::string>();
    const auto src = j.value("source", std::string("other"));
    const auto parsed = parse_sample_source(src);
    if (!parsed) throw SchemaError(line, "unknown source '" + src + "'");
    s.source = *parsed;
  } catch (const json::exception& e) {
    throw SchemaError(line, e.what());
  }
  return s;
}

std::vector<ReasoningSample> load_reasoning_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open reasoning samples " + path.string());
  std::vector<ReasoningSample> out;
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
    out.push_back(reasoning_sample_from_json(j, line));
  }
  return out;
}

void save_reasoning_samples(const std::filesystem::path& path, std::span<const ReasoningSample> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

namespace {

std::string extension_for(const std::string& mime) {
  if (mime == "image/png") return ".png";
  if (mime == "image/webp") return ".webp";
  if (mime == "image/gif") return ".gif";
  return ".jpg";
}

}  // namespace

void write_static_video(const std::filesystem::path& frames_root, const std::string& video_ref,
                        const ImagePayload& image, std::size_t n_frames) {
  if (n_frames == 0) throw DomainError("n_frames must be >= 1");
  const auto dir = frames_root / video_ref;
  std::filesystem::create_directories(dir);
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) std::filesystem::remove(entry.path());
  }
  const auto ext = extension_for(image.mime);
  char name[32];
  for (std::size_t i = 0; i < n_frames; ++i) {
    std::snprintf(name, sizeof name, "frame_%05zu", i);
    write_file_bytes(dir / (name + ext), image.bytes);
  }
  verify_static_video(dir);
}

void verify_static_video(const std::filesystem::path& dir) {
  std::optional<std::string> first;
  std::size_t n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto bytes = read_file_bytes(entry.path());
    if (!first) {
      first = std::move(bytes);
    } else if (bytes != *first) {
      throw IntegrityError("static video " + dir.string() + ": frame " + entry.path().filename().string() +
                           " differs from the others");
    }
    ++n;
  }
  if (n == 0) throw IntegrityError("static video " + dir.string() + " has no frames");
}

std::optional<ReasoningSample> make_static_video_sample(const StaticVideoRequest& req,
                                                        const ChatClient& reasoning, std::size_t n_frames,
                                                        const std::filesystem::path& frames_root) {
  if (n_frames == 0) throw DomainError("n_frames must be >= 1");
  Question q;
  q.id = req.image_id;
  q.text = req.question;
  SamplingConfig sampling;
  sampling.n_frames = n_frames;
  const std::vector<ImagePayload> frames(n_frames, req.image);
  const auto chat = build_inference_request(q, frames, sampling);
  const auto completion = reasoning.complete(chat.messages);
  if (completion.text.find_first_not_of(" \t\r\n") == std::string::npos) return std::nullopt;

  ReasoningSample s;
  s.video_ref = "static/" + req.image_id;
  s.question = req.question;
  s.reasoning_target = completion.text;
  s.source = SampleSource::DistilledStaticVideo;
  write_static_video(frames_root, s.video_ref, req.image, n_frames);
  return s;
}

SynthesisResult synthesize_static_video_samples(std::span<const StaticVideoRequest> reqs,
                                                const ChatClient& reasoning, std::size_t n_frames,
                                                const std::filesystem::path& frames_root,
                                                std::size_t workers) {
  enum class Outcome { Ok, Empty, Failed };
  struct Slot {
    Outcome outcome = Outcome::Failed;
    std::optional<ReasoningSample> sample;
    std::string error;
  };
  std::vector<Slot> slots(reqs.size());
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < reqs.size(); i = next++) {
      try {
        slots[i].sample = make_static_video_sample(reqs[i], reasoning, n_frames, frames_root);
        slots[i].outcome = slots[i].sample ? Outcome::Ok : Outcome::Empty;
      } catch (const Error& e) {
        slots[i].error = e.what();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, reqs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  SynthesisResult out;
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    switch (slots[i].outcome) {
      case Outcome::Ok: out.samples.push_back(std::move(*slots[i].sample)); break;
      case Outcome::Empty: out.rejected.push_back(reqs[i].image_id); break;
      case Outcome::Failed: out.failed.emplace_back(reqs[i].image_id, slots[i].error); break;
    }
  }
  return out;
}

TokenizedSample tokenize_sample(const ReasoningSample& s, const FeatureMap& fm, std::size_t vocab) {
  TokenizedSample t;
  t.prompt = hash_tokenize(s.question, vocab);
  t.video = hash_video_features(s.video_ref, fm.video_dim);
  t.target = hash_tokenize(s.reasoning_target, vocab);
  if (t.target.empty()) throw DomainError("reasoning target for " + s.video_ref + " has no tokens");
  return t;
}

namespace {

// Loss and gradient with respect to the composed weights.
double composed_loss(std::span<const TokenizedSample> batch, const Matrix& composed, const FeatureMap& fm,
                     Matrix* grad) {
  if (batch.empty()) throw DomainError("SRFT batch must not be empty");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& s : batch) {
    const auto tr = forward(fm, composed, s.prompt, s.video, s.target);
    const double inv_len = 1.0 / static_cast<double>(s.target.size());
    double nll = 0.0;
    for (double lp : tr.logps) nll -= lp;
    loss += nll * inv_len;
    if (grad) {
      const std::vector<double> w(s.target.size(), inv_len);
      accumulate_logprob_gradient(*grad, tr, s.target, w, -inv_n);
    }
  }
  loss *= inv_n;
  if (!std::isfinite(loss)) throw NumericError("SRFT loss is not finite");
  return loss;
}

}  // namespace

double srft_loss(std::span<const TokenizedSample> batch, const Matrix& w, const LoraAdapter& adapter,
                 const FeatureMap& fm) {
  return composed_loss(batch, lora_compose(w, adapter), fm, nullptr);
}

SrftGradient srft_gradient(std::span<const TokenizedSample> batch, const Matrix& w,
                           const LoraAdapter& adapter, const FeatureMap& fm) {
  const Matrix composed = lora_compose(w, adapter);
  Matrix g(w.rows(), w.cols());
  SrftGradient out;
  out.loss = composed_loss(batch, composed, fm, &g);
  // W' = W + alpha B A: dL/dB = alpha G A^T, dL/dA = alpha B^T G.
  out.dB = matmul(g, transpose(adapter.A));
  out.dA = matmul(transpose(adapter.B), g);
  for (double& v : out.dB.data()) v *= adapter.alpha;
  for (double& v : out.dA.data()) v *= adapter.alpha;
  return out;
}

SrftResult train_srft(std::span<const TokenizedSample> batch, const Matrix& w, const FeatureMap& fm,
                      const SrftConfig& cfg) {
  if (batch.empty()) throw DomainError("SRFT batch must not be empty");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (cfg.steps < 0) throw ConfigError("steps must be >= 0");
  const std::uint64_t w_digest = fnv1a64(std::string_view(reinterpret_cast<const char*>(w.data().data()),
                                                          w.size() * sizeof(double)));
  const Matrix w_before = w;

  SrftResult r;
  r.adapter = LoraAdapter::init(w.rows(), w.cols(), cfg.rank, cfg.alpha, cfg.init_stddev, cfg.seed);
  for (int step = 0;; ++step) {
    SrftGradient g;
    try {
      g = srft_gradient(batch, w, r.adapter, fm);
    } catch (const DivergenceError&) {
      throw;
    } catch (const NumericError& e) {
      throw DivergenceError(step, e.what());
    }
    if (!std::isfinite(g.loss)) throw DivergenceError(step, "SRFT loss is not finite");
    r.trace.push_back({step, g.loss});
    if (step == cfg.steps) break;
    axpy(r.adapter.A, -cfg.learning_rate, g.dA);
    axpy(r.adapter.B, -cfg.learning_rate, g.dB);
    if (!all_finite(r.adapter.A) || !all_finite(r.adapter.B)) {
      throw DivergenceError(step, "SRFT adapter weights are not finite");
    }
  }

  const std::uint64_t after = fnv1a64(std::string_view(reinterpret_cast<const char*>(w.data().data()),
                                                       w.size() * sizeof(double)));
  if (after != w_digest || !(w == w_before)) throw IntegrityError("base weights changed during SRFT");
  r.delta_rank = numeric_rank(r.adapter.delta());
  if (r.delta_rank > cfg.rank) {
    throw IntegrityError("adapter update has rank " + std::to_string(r.delta_rank) + " > " +
                         std::to_string(cfg.rank));
  }
  return r;
}

Matrix make_base_weights(const FeatureMap& fm, std::size_t vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Matrix::random_normal(fm.dim(), vocab, 0.1, rng);
}

std::vector<TokenizedSample> make_synthetic_reasoning_batch(std::size_t n, const FeatureMap& fm,
                                                            std::size_t vocab, std::uint64_t seed) {
  if (vocab < 2) throw DomainError("vocab must be >= 2");
  std::mt19937_64 rng(seed);
  std::vector<TokenId> successor(vocab);
  for (std::size_t v = 0; v < vocab; ++v) successor[v] = static_cast<TokenId>(v);
  std::shuffle(successor.begin(), successor.end(), rng);

  std::uniform_int_distribution<TokenId> token(0, static_cast<TokenId>(vocab - 1));
  std::uniform_int_distribution<int> length(10, 16);
  std::bernoulli_distribution follow(0.8);
  std::normal_distribution<double> gauss(0.0, 0.5);

  std::vector<TokenizedSample> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    TokenizedSample s;
    for (int i = 0; i < 4; ++i) s.prompt.push_back(token(rng));
    for (std::size_t i = 0; i < fm.video_dim; ++i) s.video.push_back(gauss(rng));
    const int len = length(rng);
    TokenId t = token(rng);
    for (int i = 0; i < len; ++i) {
      s.target.push_back(t);
      t = follow(rng) ? successor[t] : token(rng);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string srft_trace_csv(std::span<const SrftTraceRow> trace) {
  std::ostringstream os;
  os << "step,loss\n";
  char buf[64];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.9f\n", r.step, r.loss);
    os << buf;
  }
  return os.str();
}

}  // namespace haven
