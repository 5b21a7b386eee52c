// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "generators.hpp"
#include "haven/error.hpp"
#include "haven/mock_server.hpp"
#include "haven/srft.hpp"
#include "oracles.hpp"

using namespace haven;

TEST_CASE("compose on a hand example") {
  LoraAdapter a;
  a.rank = 1;
  a.alpha = 2.0;
  a.A = Matrix(1, 2);
  a.A(0, 0) = 1.0;
  a.A(0, 1) = -1.0;
  a.B = Matrix(2, 1);
  a.B(0, 0) = 0.5;
  a.B(1, 0) = 3.0;
  Matrix w(2, 2, 1.0);
  const auto wc = lora_compose(w, a);
  CHECK(wc(0, 0) == doctest::Approx(2.0));
  CHECK(wc(0, 1) == doctest::Approx(0.0));
  CHECK(wc(1, 0) == doctest::Approx(7.0));
  CHECK(wc(1, 1) == doctest::Approx(-5.0));
  CHECK(w == Matrix(2, 2, 1.0));
  CHECK_THROWS_AS(lora_compose(Matrix(3, 2), a), DimensionError);
}

TEST_CASE("fresh adapter leaves the weights unchanged") {
  const auto a = LoraAdapter::init(16, 32, 4, 1.5, 0.1, 3);
  std::mt19937_64 rng(1);
  const auto w = Matrix::random_normal(16, 32, 1.0, rng);
  CHECK(lora_compose(w, a) == w);
}

TEST_CASE("delta is linear in alpha") {
  auto a = LoraAdapter::init(8, 10, 2, 1.0, 0.3, 5);
  std::mt19937_64 rng(6);
  a.B = Matrix::random_normal(8, 2, 0.3, rng);
  const auto d1 = a.delta();
  a.alpha = 3.0;
  const auto d3 = a.delta();
  for (std::size_t i = 0; i < d1.size(); ++i) CHECK(d3.data()[i] == doctest::Approx(3.0 * d1.data()[i]));
}

TEST_CASE("rank bound") {
  CHECK_NOTHROW(LoraAdapter::init(16, 32, 8, 1, 0.1, 1).validate(16, 32));
  CHECK_THROWS_AS(LoraAdapter::init(16, 32, 9, 1, 0.1, 1).validate(16, 32), ConfigError);
  CHECK_THROWS_AS(LoraAdapter::init(16, 32, 0, 1, 0.1, 1).validate(16, 32), ConfigError);
  CHECK_THROWS_AS(LoraAdapter::init(16, 32, 4, 1, 0.1, 1).validate(16, 30), ConfigError);
}

TEST_CASE("uniform predictions give a loss of ln V") {
  FeatureMap fm;
  const std::size_t vocab = 4;
  const Matrix w(fm.dim(), vocab);
  const auto a = LoraAdapter::init(fm.dim(), vocab, 1, 1.0, 0.1, 1);
  const std::vector<TokenizedSample> batch{{{1, 2}, {0.1, 0.2}, {0, 3, 2}}, {{0}, {}, {1}}};
  CHECK(srft_loss(batch, w, a, fm) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("adapter gradients match central differences") {
  FeatureMap fm;
  const auto batch = make_synthetic_reasoning_batch(4, fm, 32, 2);
  const auto w = make_base_weights(fm, 32, 3);
  auto a = LoraAdapter::init(fm.dim(), 32, 3, 1.5, 0.2, 4);
  std::mt19937_64 rng(5);
  a.B = Matrix::random_normal(fm.dim(), 3, 0.2, rng);
  const auto g = srft_gradient(batch, w, a, fm);
  CHECK(g.loss == doctest::Approx(srft_loss(batch, w, a, fm)));
  const auto fa = testing::finite_difference([&] { return srft_loss(batch, w, a, fm); }, a.A);
  const auto fb = testing::finite_difference([&] { return srft_loss(batch, w, a, fm); }, a.B);
  CHECK(testing::relative_error(g.dA, fa) < 1e-6);
  CHECK(testing::relative_error(g.dB, fb) < 1e-6);
}

TEST_CASE("training touches only the adapter and keeps the update low rank") {
  FeatureMap fm;
  const auto batch = make_synthetic_reasoning_batch(20, fm, 32, 8);
  const auto w = make_base_weights(fm, 32, 8);
  const auto copy = w;
  SrftConfig cfg;
  cfg.rank = 2;
  cfg.steps = 40;
  const auto r = train_srft(batch, w, fm, cfg);
  CHECK(std::memcmp(w.data().data(), copy.data().data(), w.size() * sizeof(double)) == 0);
  REQUIRE(r.trace.size() == 41);
  CHECK(r.trace.back().loss < r.trace.front().loss);
  CHECK(r.delta_rank <= 2);
  const auto sv = testing::singular_values(r.adapter.delta());
  for (Eigen::Index i = 2; i < sv.size(); ++i) CHECK(sv[i] < 1e-9 * std::max(1.0, sv[0]));
}

TEST_CASE("zero steps give an exactly zero update") {
  FeatureMap fm;
  const auto batch = make_synthetic_reasoning_batch(3, fm, 32, 1);
  SrftConfig cfg;
  cfg.steps = 0;
  const auto r = train_srft(batch, make_base_weights(fm, 32, 1), fm, cfg);
  const auto delta = r.adapter.delta();
  for (double x : delta.data()) CHECK(x == 0.0);
  CHECK(r.delta_rank == 0);
}

TEST_CASE("reasoning sample JSON round trip") {
  const auto dir = testing::scratch_dir("srft-io");
  const std::vector<ReasoningSample> s{{"static/img1", "What is it?", "It is a dog.", SampleSource::DistilledStaticVideo},
                                       {"vid/2", "Why?", "Because.", SampleSource::Other}};
  save_reasoning_samples(dir / "s.jsonl", s);
  const auto back = load_reasoning_samples(dir / "s.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].source == SampleSource::DistilledStaticVideo);
  CHECK(back[1].reasoning_target == "Because.");
  CHECK(parse_sample_source("distilled_static_video") == SampleSource::DistilledStaticVideo);
  CHECK_FALSE(parse_sample_source("static"));
}

TEST_CASE("static videos are byte-identical frames") {
  const auto dir = testing::scratch_dir("srft-static");
  write_static_video(dir, "static/a", ImagePayload{"PIXELS", "image/png"}, 6);
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "static/a")) {
    CHECK(testing::read_text(e.path()) == "PIXELS");
    ++n;
  }
  CHECK(n == 6);
  CHECK_NOTHROW(verify_static_video(dir / "static/a"));
  {
    std::ofstream f(dir / "static/a" / "frame_00003.png", std::ios::binary | std::ios::trunc);
    f << "OTHER";
  }
  CHECK_THROWS_AS(verify_static_video(dir / "static/a"), IntegrityError);
  std::filesystem::create_directories(dir / "empty");
  CHECK_THROWS_AS(verify_static_video(dir / "empty"), IntegrityError);
}

TEST_CASE("synthesis over a scripted endpoint") {
  MockScript script;
  script.answers["reasoner"]["Describe the scene."] = "A red ball rolls left, so the answer is left.";
  script.answers["reasoner"]["Say nothing."] = "   ";
  auto transport = std::make_shared<ScriptedTransport>(script);
  EndpointConfig ep;
  ep.base_url = "http://127.0.0.1:1/v1";
  ep.model_name = "reasoner";
  ChatClient client(ep, transport);

  std::vector<StaticVideoRequest> reqs;
  for (int i = 0; i < 5; ++i) {
    reqs.push_back({"img" + std::to_string(i), ImagePayload{"bytes" + std::to_string(i)}, "Describe the scene."});
  }
  reqs.push_back({"quiet", ImagePayload{"q"}, "Say nothing."});

  const auto dir = testing::scratch_dir("srft-synth");
  const auto r = synthesize_static_video_samples(reqs, client, 4, dir, 3);
  REQUIRE(r.samples.size() == 5);
  CHECK(r.rejected == std::vector<std::string>{"quiet"});
  CHECK(r.failed.empty());
  CHECK(transport->calls() == 6);
  for (int i = 0; i < 5; ++i) {
    const auto& s = r.samples[i];
    CHECK(s.video_ref == "static/img" + std::to_string(i));
    CHECK(s.source == SampleSource::DistilledStaticVideo);
    CHECK_NOTHROW(verify_static_video(dir / s.video_ref));
  }
  CHECK_FALSE(std::filesystem::exists(dir / "static/quiet"));
}

TEST_CASE("a non-finite loss aborts SRFT with the step index") {
  FeatureMap fm;
  const auto batch = make_synthetic_reasoning_batch(3, fm, 32, 1);
  auto w = make_base_weights(fm, 32, 1);
  w(0, 0) = std::numeric_limits<double>::infinity();
  SrftConfig cfg;
  cfg.steps = 3;
  try {
    train_srft(batch, w, fm, cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.step() == 0);
  }
}
