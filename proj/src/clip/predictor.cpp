#include "atelier/clip/predictor.hpp"

#include <cstdio>

#include "atelier/core/optim.hpp"
#include "atelier/data/bridge.hpp"

namespace atelier::clip {

MaskPredictor::MaskPredictor(int hidden_, uint64_t seed) : hidden(hidden_) {
  Rng rng(mix_seed(seed, 0x5E6));
  c1 = nn::Conv2d(3, hidden, 3, 1, 1, rng);
  c2 = nn::Conv2d(hidden, hidden, 3, 1, 1, rng);
  c3 = nn::Conv2d(hidden, hidden, 3, 1, 1, rng);
  c4 = nn::Conv2d(hidden, classes, 3, 1, 1, rng);
}

Tensor MaskPredictor::operator()(const Tensor& image, int h, int w) const {
  return forward_batch(image, h, w, 1);
}

Tensor MaskPredictor::forward_batch(const Tensor& images, int h, int w, int batch) const {
  Tensor x = gelu(c1.forward_batch(images, h, w, batch));
  x = gelu(c2.forward_batch(x, h, w, batch));
  x = gelu(c3.forward_batch(x, h, w, batch));
  return softmax_rows(c4.forward_batch(x, h, w, batch));
}

nn::ParamRegistry MaskPredictor::params() const {
  nn::ParamRegistry reg;
  c1.register_params(reg, "predictor.c1");
  c2.register_params(reg, "predictor.c2");
  c3.register_params(reg, "predictor.c3");
  c4.register_params(reg, "predictor.c4");
  return reg;
}

MaskPredictor train_mask_predictor(const std::vector<synth::GarmentSample>& samples,
                                   const PredictorTrainOptions& opts,
                                   std::vector<double>* loss_log) {
  if (samples.empty()) throw ContractError("train_mask_predictor: empty dataset");
  MaskPredictor net(32, opts.seed);
  nn::ParamRegistry reg = net.params();
  AdamW opt(reg.tensors(), {.lr = opts.lr});
  Rng rng(mix_seed(opts.seed, 0x93ED));
  Tape& tape = Tape::active();

  std::vector<Tensor> images;
  std::vector<std::vector<int64_t>> labels;
  for (const auto& s : samples) {
    images.push_back(synth::image_tensor(s.image));
    labels.emplace_back(s.mask.labels.begin(), s.mask.labels.end());
  }
  const int h = samples[0].image.h, w = samples[0].image.w;

  for (int64_t step = 0; step < opts.steps; ++step) {
    tape.clear();
    opt.zero_grad();
    std::vector<Tensor> losses;
    for (int64_t i = 0; i < opts.batch; ++i) {
      const int64_t idx = rng.uniform_int(0, static_cast<int>(samples.size()) - 1);
      // cross-entropy on logits: recompute the trunk without the final softmax
      Tensor x = gelu(net.c1(images[static_cast<size_t>(idx)], h, w));
      x = gelu(net.c2(x, h, w));
      x = gelu(net.c3(x, h, w));
      losses.push_back(
          cross_entropy_with_logits(net.c4(x, h, w), labels[static_cast<size_t>(idx)]));
    }
    Tensor loss = mean(stack_scalars(losses, opts.batch, 1));
    if (!loss.all_finite())
      throw ContractError("train_mask_predictor: loss diverged at step " + std::to_string(step));
    tape.backward(loss);
    tape.clear();
    opt.step(cosine_lr(step, opts.steps, opts.lr));
    if (loss_log) loss_log->push_back(loss.item());
    if (opts.verbose && step % 100 == 0)
      std::fprintf(stderr, "predictor step %lld loss %.4f\n", static_cast<long long>(step),
                   loss.item());
  }
  return net;
}

double predictor_accuracy(const MaskPredictor& net,
                          const std::vector<synth::GarmentSample>& samples) {
  NoGradGuard ng;
  int64_t hits = 0, total = 0;
  for (const auto& s : samples) {
    Tensor probs = net(synth::image_tensor(s.image), s.image.h, s.image.w);
    const int64_t n = probs.dim(0), c = probs.dim(1);
    for (int64_t i = 0; i < n; ++i) {
      int64_t best = 0;
      for (int64_t j = 1; j < c; ++j)
        if (probs.at(i, j) > probs.at(i, best)) best = j;
      hits += best == s.mask.labels[static_cast<size_t>(i)];
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace atelier::clip
