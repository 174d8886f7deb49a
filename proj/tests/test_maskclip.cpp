#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "atelier/clip/maskclip.hpp"
#include "atelier/clip/predictor.hpp"
#include "atelier/core/fdcheck.hpp"
#include "atelier/data/bridge.hpp"

using namespace atelier;
using namespace atelier::clip;

namespace {

MaskClipConfig micro_config() {
  MaskClipConfig cfg;
  cfg.embed_dim = 8;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.patch = 4;
  cfg.image_h = 8;
  cfg.image_w = 8;
  cfg.max_caption = 8;
  return cfg;
}

synth::MaskImage random_mask(int h, int w, Rng& rng) {
  synth::MaskImage m(h, w);
  for (auto& v : m.labels) v = static_cast<uint8_t>(rng.uniform_int(0, 8));
  return m;
}

}  // namespace

TEST_CASE("tokenize round-trips and rejects unknown words") {
  TextVocab vocab = TextVocab::standard();
  const std::vector<std::string> caption = {"a", "red", "shirt"};
  const auto ids = vocab.tokenize(caption);
  REQUIRE(ids.size() == 4);
  CHECK(ids[0] == TextVocab::kBos);
  CHECK(vocab.detokenize(ids) == caption);
  CHECK_THROWS_AS(vocab.tokenize({"a", "red", "spaceship"}), VocabError);
}

TEST_CASE("encoder rows are unit norm under normalize") {
  MaskClipModel model(micro_config(), TextVocab::standard(), 3);
  Rng rng(5);
  NoGradGuard ng;
  Tensor mt = model.encode_mask(random_mask(8, 8, rng));
  for (int64_t i = 0; i < mt.dim(0); ++i) {
    double n2 = 0;
    for (int64_t j = 0; j < mt.dim(1); ++j) n2 += mt.at(i, j) * mt.at(i, j);
    CHECK(std::abs(std::sqrt(n2) - 1.0) <= 1e-9);
  }
  Tensor tt = model.encode_text({"a", "red", "shirt"});
  CHECK(tt.dim(0) == 4);  // BOS + words
  for (int64_t i = 0; i < tt.dim(0); ++i) {
    double n2 = 0;
    for (int64_t j = 0; j < tt.dim(1); ++j) n2 += tt.at(i, j) * tt.at(i, j);
    CHECK(std::abs(std::sqrt(n2) - 1.0) <= 1e-9);
  }
}

TEST_CASE("patch permutation equivariance with zeroed positions") {
  MaskClipConfig cfg = micro_config();
  MaskClipModel model(cfg, TextVocab::standard(), 7);
  for (int64_t i = 0; i < model.mask_pos.size(); ++i) model.mask_pos.set(i, 0.0);
  Rng rng(6);
  NoGradGuard ng;
  const synth::MaskImage mask = random_mask(8, 8, rng);
  // swap the two top patches of the 2x2 grid in pixel space
  synth::MaskImage swapped = mask;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) std::swap(swapped.at(y, x), swapped.at(y, x + 4));
  Tensor a = model.encode_mask(mask);
  Tensor b = model.encode_mask(swapped);
  for (int64_t j = 0; j < a.dim(1); ++j) {
    CHECK(a.at(0, j) == doctest::Approx(b.at(1, j)).epsilon(1e-12));
    CHECK(a.at(1, j) == doctest::Approx(b.at(0, j)).epsilon(1e-12));
    CHECK(a.at(2, j) == doctest::Approx(b.at(2, j)).epsilon(1e-12));
  }
}

TEST_CASE("token_max_similarity picks the best row, lowest index on ties") {
  Tensor z = Tensor::from({2}, {1, 0});
  Tensor X = Tensor::from({2, 2}, {0, 1, 1, 0});
  auto [val, idx] = token_max_similarity(z, X);
  CHECK(val == doctest::Approx(1.0));
  CHECK(idx == 1);

  Tensor dup = Tensor::from({3, 2}, {0.5, 0, 0.9, 0, 0.9, 0});
  auto [v2, i2] = token_max_similarity(z, dup);
  CHECK(v2 == doctest::Approx(0.9));
  CHECK(i2 == 1);  // tie between rows 1 and 2

  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> zv(6), xv(16 * 6);
    for (auto& v : zv) v = rng.uniform(-1, 1);
    for (auto& v : xv) v = rng.uniform(-1, 1);
    Tensor zz = Tensor::from({6}, zv);
    Tensor xx = Tensor::from({16, 6}, xv);
    auto [val3, idx3] = token_max_similarity(zz, xx);
    double best = -1e30;
    int64_t bi = -1;
    for (int64_t i = 0; i < 16; ++i) {
      double dot = 0;
      for (int64_t j = 0; j < 6; ++j) dot += zv[static_cast<size_t>(j)] * xv[static_cast<size_t>(i * 6 + j)];
      if (dot > best) {
        best = dot;
        bi = i;
      }
    }
    CHECK(val3 == doctest::Approx(best).epsilon(1e-12));
    CHECK(idx3 == bi);
  }
}

TEST_CASE("mask-to-text and text-to-mask similarities") {
  Tensor M = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor X = Tensor::from({1, 2}, {1, 0});
  CHECK(sim_mask_to_text(M, X).item() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sim_text_to_mask(M, X).item() == doctest::Approx(1.0).epsilon(1e-12));  // asymmetry witness

  // identical unit-norm token sets score 1 in both directions
  Tensor same = Tensor::from({3, 2}, {1, 0, 0, 1, 1, 0});
  CHECK(sim_mask_to_text(same, same).item() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sim_text_to_mask(same, same).item() == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> mv(5 * 4), xv(7 * 4);
    for (auto& v : mv) v = rng.uniform(-1, 1);
    for (auto& v : xv) v = rng.uniform(-1, 1);
    Tensor mm = Tensor::from({5, 4}, mv);
    Tensor xx = Tensor::from({7, 4}, xv);
    double acc = 0;
    for (int i = 0; i < 5; ++i) {
      double best = -1e30;
      for (int j = 0; j < 7; ++j) {
        double dot = 0;
        for (int k = 0; k < 4; ++k) dot += mv[static_cast<size_t>(i * 4 + k)] * xv[static_cast<size_t>(j * 4 + k)];
        best = std::max(best, dot);
      }
      acc += best;
    }
    CHECK(std::abs(sim_mask_to_text(mm, xx).item() - acc / 5.0) <= 1e-12);

    double acc_t = 0;
    for (int j = 0; j < 7; ++j) {
      double best = -1e30;
      for (int i = 0; i < 5; ++i) {
        double dot = 0;
        for (int k = 0; k < 4; ++k) dot += mv[static_cast<size_t>(i * 4 + k)] * xv[static_cast<size_t>(j * 4 + k)];
        best = std::max(best, dot);
      }
      acc_t += best;
    }
    CHECK(std::abs(sim_text_to_mask(mm, xx).item() - acc_t / 7.0) <= 1e-12);
  }
}

TEST_CASE("diagonal similarity agreement in the symmetric bijective case") {
  // orthonormal token rows, same count on both sides: best matches pair up
  Tensor M = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(sim_mask_to_text(M, M).item() == doctest::Approx(sim_text_to_mask(M, M).item()));
}

TEST_CASE("contrastive loss: single pair, hand matrix, uniform case") {
  const Tensor zero_tau = Tensor::scalar(0.0);  // exp(0): raw similarities

  Tensor unit = Tensor::from({1, 2}, {1, 0});
  CHECK(maskclip_loss({unit}, {unit}, zero_tau).item() == doctest::Approx(0.0).epsilon(1e-15));

  // two orthogonal pairs: diagonal similarity 1, cross similarity 0
  Tensor m1 = Tensor::from({1, 2}, {1, 0});
  Tensor m2 = Tensor::from({1, 2}, {0, 1});
  const double got = maskclip_loss({m1, m2}, {m1, m2}, zero_tau).item();
  const double e = std::exp(1.0);
  const double per_item = -0.5 * std::log(e / (e + 1.0));
  CHECK(per_item == doctest::Approx(0.1566).epsilon(1e-3));
  CHECK(got == doctest::Approx(2.0 * per_item).epsilon(1e-12));
  CHECK(got == doctest::Approx(0.3133).epsilon(1e-3));

  // all-equal similarities collapse to the uniform softmax
  Tensor same = Tensor::from({1, 2}, {1, 0});
  const double uniform = maskclip_loss({same, same}, {same, same}, zero_tau).item();
  CHECK(uniform == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("contrastive loss is nonnegative and permutation invariant") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Tensor> masks, texts;
    for (int i = 0; i < 3; ++i) {
      std::vector<double> mv(4 * 3), tv(5 * 3);
      for (auto& v : mv) v = rng.uniform(-1, 1);
      for (auto& v : tv) v = rng.uniform(-1, 1);
      masks.push_back(Tensor::from({4, 3}, mv));
      texts.push_back(Tensor::from({5, 3}, tv));
    }
    const Tensor zero_tau = Tensor::scalar(0.0);
    const double base = maskclip_loss(masks, texts, zero_tau).item();
    CHECK(base >= 0.0);
    std::vector<Tensor> pm = {masks[2], masks[0], masks[1]};
    std::vector<Tensor> pt = {texts[2], texts[0], texts[1]};
    CHECK(maskclip_loss(pm, pt, zero_tau).item() == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("similarities stay in [-1,1] under normalized encoders") {
  MaskClipModel model(micro_config(), TextVocab::standard(), 21);
  Rng rng(22);
  NoGradGuard ng;
  for (int trial = 0; trial < 10; ++trial) {
    Tensor mt = model.encode_mask(random_mask(8, 8, rng));
    Tensor tt = model.encode_text({"a", "blue", "pants", "with", "zip"});
    const double s1 = sim_mask_to_text(mt, tt).item();
    const double s2 = sim_text_to_mask(mt, tt).item();
    CHECK(s1 >= -1.0 - 1e-12);
    CHECK(s1 <= 1.0 + 1e-12);
    CHECK(s2 >= -1.0 - 1e-12);
    CHECK(s2 <= 1.0 + 1e-12);
  }
}

TEST_CASE("argmax selection is invariant to common positive scaling") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> zv(4), xv(6 * 4);
    for (auto& v : zv) v = rng.uniform(-1, 1);
    for (auto& v : xv) v = rng.uniform(-1, 1);
    Tensor z = Tensor::from({4}, zv);
    Tensor X = Tensor::from({6, 4}, xv);
    const auto base = token_max_similarity(z, X);
    std::vector<double> xs(xv);
    for (auto& v : xs) v *= 3.7;
    const auto scaled = token_max_similarity(z, Tensor::from({6, 4}, xs));
    CHECK(base.second == scaled.second);
  }
}

TEST_CASE("composite contrastive loss passes the finite-difference oracle") {
  MaskClipConfig cfg = micro_config();
  MaskClipModel model(cfg, TextVocab::standard(), 31);
  Rng rng(32);
  const synth::MaskImage mask_a = random_mask(8, 8, rng);
  const synth::MaskImage mask_b = random_mask(8, 8, rng);
  const std::vector<std::string> cap_a = {"a", "red", "shirt", "with", "buttons"};
  const std::vector<std::string> cap_b = {"a", "blue", "dress", "with", "zip"};

  auto build = [&] {
    std::vector<Tensor> masks = {model.encode_mask(mask_a), model.encode_mask(mask_b)};
    std::vector<Tensor> texts = {model.encode_text(cap_a), model.encode_text(cap_b)};
    return maskclip_loss(masks, texts, model.log_tau);
  };
  const double err = fd_check_params(build, model.params().tensors());
  CHECK(err <= 1e-4);
}

TEST_CASE("seeded training on a toy set is deterministic and reduces loss") {
  std::vector<synth::GarmentSample> samples;
  for (uint64_t s = 0; s < 12; ++s) samples.push_back(synth::make_sample(s));
  MaskClipConfig cfg;  // full-size towers, short run
  MaskClipTrainOptions opts;
  opts.steps = 12;
  opts.batch = 4;
  opts.seed = 5;
  TrainLog log_a, log_b;
  MaskClipModel a = train_maskclip(samples, cfg, opts, &log_a);
  MaskClipModel b = train_maskclip(samples, cfg, opts, &log_b);
  CHECK(log_a.loss == log_b.loss);  // bit-identical reruns
  CHECK(a.log_tau.at(0) == b.log_tau.at(0));
  CHECK(a.token_embed.values() == b.token_embed.values());
  CHECK(log_a.loss.back() < log_a.loss.front());
}

TEST_CASE("untrained retrieval sits at chance over 1000 trials") {
  // a single random model keeps small chance alignments between its towers,
  // so the +-0.03 band is asserted on the aggregate over fresh random models
  std::vector<synth::GarmentSample> pool;
  for (uint64_t s = 500; s < 596; ++s) pool.push_back(synth::make_sample(s));

  int hits = 0, trials = 0;
  for (uint64_t model_seed : {77, 178, 279, 380}) {
    MaskClipConfig cfg;  // desk-default towers
    cfg.max_caption = 12;
    MaskClipModel model(cfg, TextVocab::standard(), model_seed);
    NoGradGuard ng;
    std::vector<Tensor> mask_tokens, text_tokens;
    for (const auto& s : pool) {
      mask_tokens.push_back(model.encode_mask(s.mask));
      text_tokens.push_back(model.encode_text(s.caption));
    }
    Rng rng(mix_seed(model_seed, 0x4e5));
    for (int t = 0; t < 250; ++t, ++trials) {
      const int truth = rng.uniform_int(0, static_cast<int>(pool.size()) - 1);
      std::vector<int> cands = {truth};
      while (cands.size() < 16) {
        const int other = rng.uniform_int(0, static_cast<int>(pool.size()) - 1);
        if (other != truth) cands.push_back(other);
      }
      double best = -1e30;
      int best_i = -1;
      for (int i = 0; i < 16; ++i) {
        const double v =
            sim_text_to_mask(mask_tokens[static_cast<size_t>(cands[static_cast<size_t>(i)])],
                             text_tokens[static_cast<size_t>(truth)])
                .item();
        if (v > best) {
          best = v;
          best_i = i;
        }
      }
      hits += best_i == 0;
    }
  }
  const double acc = hits / static_cast<double>(trials);
  CHECK(acc >= 1.0 / 16 - 0.03);
  CHECK(acc <= 1.0 / 16 + 0.03);
}

TEST_CASE("retrieval tie order is stable by candidate index") {
  MaskClipConfig cfg = micro_config();
  cfg.image_h = 32;
  cfg.image_w = 32;
  cfg.max_caption = 12;
  MaskClipModel model(cfg, TextVocab::standard(), 79);
  const synth::GarmentSample s = synth::make_sample(3);
  std::vector<const synth::MaskImage*> cands = {&s.mask, &s.mask, &s.mask};
  const auto order = retrieve(model, s.caption, cands);
  CHECK(order == std::vector<int64_t>{0, 1, 2});
}

TEST_CASE("align_map emits a finite grid-shaped heatmap, deterministically") {
  MaskClipConfig cfg;
  MaskClipModel model(cfg, TextVocab::standard(), 80);
  const synth::GarmentSample s = synth::make_sample(9);
  const std::string word = s.caption.back();
  const AlignMap m1 = align_map(model, s.caption, word, s.mask);
  const AlignMap m2 = align_map(model, s.caption, word, s.mask);
  CHECK(m1.grid_h == 8);
  CHECK(m1.grid_w == 8);
  CHECK(m1.heat.size() == 64);
  CHECK(m1.heat == m2.heat);
  CHECK(m1.argmax_patch == m2.argmax_patch);
  CHECK_THROWS_AS(align_map(model, s.caption, "nonword", s.mask), VocabError);
}

TEST_CASE("mask predictor probabilities normalize and its input gradient checks out") {
  MaskPredictor net(6, 81);
  Rng rng(82);
  std::vector<double> img(8 * 8 * 3);
  for (auto& v : img) v = rng.uniform(0, 1);
  Tensor x = Tensor::param({64, 3}, img);
  {
    NoGradGuard ng;
    Tensor probs = net(x, 8, 8);
    for (int64_t i = 0; i < 64; ++i) {
      double s = 0;
      for (int64_t j = 0; j < net.classes; ++j) s += probs.at(i, j);
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
  }
  Tensor w = Tensor::from({64, static_cast<int64_t>(net.classes)}, [&] {
    std::vector<double> v(64 * static_cast<size_t>(net.classes));
    for (auto& e : v) e = rng.uniform(-1, 1);
    return v;
  }());
  const double err = fd_check_params([&] { return mean(mul(net(x, 8, 8), w)); }, {x});
  CHECK(err <= 1e-4);
}
