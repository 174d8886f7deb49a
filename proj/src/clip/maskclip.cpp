#include "atelier/clip/maskclip.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "atelier/core/optim.hpp"
#include "atelier/data/bridge.hpp"

namespace atelier::clip {

void MaskClipConfig::validate() const {
  if (embed_dim % heads != 0) throw ContractError("maskclip: embed_dim not divisible by heads");
  if (image_h % patch || image_w % patch)
    throw ContractError("maskclip: patch size must divide the image extents");
  if (depth < 1 || embed_dim < 2) throw ContractError("maskclip: degenerate config");
}

MaskClipModel::MaskClipModel(MaskClipConfig cfg_, TextVocab vocab_, uint64_t seed)
    : cfg(cfg_), vocab(std::move(vocab_)) {
  cfg.validate();
  Rng rng(mix_seed(seed, 0xC11FF));
  const int64_t d = cfg.embed_dim;

  patch_embed = nn::Conv2d(cfg.mask_classes, static_cast<int>(d), cfg.patch, cfg.patch, 0, rng);
  {
    std::vector<double> pos(static_cast<size_t>(cfg.mask_tokens() * d));
    for (double& v : pos) v = rng.normal(0.0, 0.01);
    mask_pos = Tensor::param({cfg.mask_tokens(), d}, std::move(pos));
  }
  for (int i = 0; i < cfg.depth; ++i) mask_blocks.emplace_back(d, cfg.heads, false, rng);
  mask_final = nn::LayerNorm(d);

  {
    std::vector<double> emb(static_cast<size_t>(vocab.size() * d));
    for (double& v : emb) v = rng.normal(0.0, 0.02);
    token_embed = Tensor::param({vocab.size(), d}, std::move(emb));
    std::vector<double> pos(static_cast<size_t>(cfg.max_caption * d));
    for (double& v : pos) v = rng.normal(0.0, 0.01);
    text_pos = Tensor::param({cfg.max_caption, d}, std::move(pos));
  }
  for (int i = 0; i < cfg.depth; ++i) text_blocks.emplace_back(d, cfg.heads, false, rng);
  text_final = nn::LayerNorm(d);

  log_tau = Tensor::param({1}, {std::log(cfg.tau_init)});
}

Tensor MaskClipModel::encode_mask_planes(const Tensor& planes) const {
  return encode_mask_planes_batch(planes, 1);
}

Tensor MaskClipModel::encode_mask_planes_batch(const Tensor& planes, int batch) const {
  if (planes.rank() != 2 ||
      planes.dim(0) != static_cast<int64_t>(batch) * cfg.image_h * cfg.image_w ||
      planes.dim(1) != cfg.mask_classes)
    throw ShapeError("encode_mask_planes: expected [batch*" +
                     std::to_string(cfg.image_h * cfg.image_w) + "," +
                     std::to_string(cfg.mask_classes) + "] planes");
  Tensor patches = patch_embed.forward_batch(planes, cfg.image_h, cfg.image_w, batch);
  Tensor pos = mask_pos;
  std::vector<std::pair<int64_t, int64_t>> segments;
  const int64_t n1 = cfg.mask_tokens();
  for (int b = 0; b < batch; ++b) segments.emplace_back(b * n1, (b + 1) * n1);
  if (batch > 1) {
    std::vector<Tensor> tiles(static_cast<size_t>(batch), mask_pos);
    pos = concat_rows(tiles);
  }
  Tensor tokens = add(patches, pos);
  const Tensor* bias = nullptr;
  Tensor window;
  if (cfg.local_window > 0) {
    window = mask_window_bias();
    bias = &window;
  }
  for (const auto& block : mask_blocks)
    tokens = block.forward_segments(tokens, segments, bias);
  tokens = mask_final(tokens);
  if (cfg.normalize) tokens = l2_normalize_rows(tokens);
  return tokens;
}

Tensor MaskClipModel::encode_mask(const synth::MaskImage& mask) const {
  return encode_mask_planes(synth::mask_onehot(mask, cfg.mask_classes));
}

Tensor MaskClipModel::encode_text_tokens(const std::vector<int64_t>& ids) const {
  std::vector<int64_t> offsets;
  return encode_text_tokens_packed({ids}, &offsets);
}

Tensor MaskClipModel::encode_text_tokens_packed(const std::vector<std::vector<int64_t>>& ids,
                                                std::vector<int64_t>* offsets) const {
  if (ids.empty()) throw ContractError("encode_text_tokens: empty batch");
  std::vector<int64_t> flat;
  std::vector<std::pair<int64_t, int64_t>> segments;
  std::vector<Tensor> pos_parts;
  for (const auto& cap : ids) {
    if (cap.empty()) throw ContractError("encode_text_tokens: empty token list");
    if (static_cast<int64_t>(cap.size()) > cfg.max_caption)
      throw ContractError("encode_text_tokens: caption longer than the configured maximum");
    const int64_t start = static_cast<int64_t>(flat.size());
    flat.insert(flat.end(), cap.begin(), cap.end());
    segments.emplace_back(start, static_cast<int64_t>(flat.size()));
    pos_parts.push_back(slice_rows(text_pos, 0, static_cast<int64_t>(cap.size())));
  }
  if (offsets) {
    offsets->clear();
    offsets->push_back(0);
    for (const auto& [s0, s1] : segments) offsets->push_back(s1);
  }
  Tensor pos = pos_parts.size() == 1 ? pos_parts[0] : concat_rows(pos_parts);
  Tensor tokens = add(embed_rows(token_embed, flat), pos);
  for (const auto& block : text_blocks) tokens = block.forward_segments(tokens, segments);
  tokens = text_final(tokens);
  if (cfg.normalize) tokens = l2_normalize_rows(tokens);
  return tokens;
}

Tensor MaskClipModel::encode_text(const std::vector<std::string>& caption) const {
  return encode_text_tokens(vocab.tokenize(caption));
}

Tensor MaskClipModel::mask_window_bias() const {
  thread_local Tensor cached;
  thread_local int64_t key = -1;
  const int64_t want = (cfg.grid_h() << 20) ^ (cfg.grid_w() << 4) ^ cfg.local_window;
  if (!cached.defined() || key != want) {
    const int64_t gh = cfg.grid_h(), gw = cfg.grid_w(), n = gh * gw;
    std::vector<double> bias(static_cast<size_t>(n * n), 0.0);
    for (int64_t a = 0; a < n; ++a)
      for (int64_t b = 0; b < n; ++b) {
        const int64_t dy = std::abs(a / gw - b / gw), dx = std::abs(a % gw - b % gw);
        if (dy > cfg.local_window || dx > cfg.local_window)
          bias[static_cast<size_t>(a * n + b)] = -1e30;
      }
    cached = Tensor::from({n, n}, std::move(bias));
    key = want;
  }
  return cached;
}

double MaskClipModel::tau_value() const { return std::exp(log_tau.at(0)); }

void MaskClipModel::clamp_tau() {
  const double cap = std::log(100.0);
  if (log_tau.at(0) > cap) log_tau.set(0, cap);
}

nn::ParamRegistry MaskClipModel::params() const {
  nn::ParamRegistry reg;
  patch_embed.register_params(reg, "mask.patch_embed");
  reg.add("mask.pos", mask_pos);
  for (size_t i = 0; i < mask_blocks.size(); ++i)
    mask_blocks[i].register_params(reg, "mask.block" + std::to_string(i));
  mask_final.register_params(reg, "mask.final");
  reg.add("text.embed", token_embed);
  reg.add("text.pos", text_pos);
  for (size_t i = 0; i < text_blocks.size(); ++i)
    text_blocks[i].register_params(reg, "text.block" + std::to_string(i));
  text_final.register_params(reg, "text.final");
  reg.add("tau.log", log_tau);
  return reg;
}

std::pair<double, int64_t> token_max_similarity(const Tensor& z, const Tensor& text_tokens) {
  if (text_tokens.rank() != 2 || text_tokens.dim(0) < 1)
    throw ContractError("token_max_similarity: empty text token set");
  if (z.size() != text_tokens.dim(1))
    throw ShapeError("token_max_similarity: width mismatch");
  NoGradGuard ng;
  Tensor zrow = reshape(z, {1, z.size()});
  std::vector<int64_t> arg;
  Tensor best = max_rows(matmul_nt(zrow, text_tokens), &arg);
  return {best.at(0), arg[0]};
}

Tensor sim_mask_to_text(const Tensor& mask_tokens, const Tensor& text_tokens) {
  if (mask_tokens.dim(0) < 1 || text_tokens.dim(0) < 1)
    throw ContractError("sim_mask_to_text: empty token set");
  return mean(max_rows(matmul_nt(mask_tokens, text_tokens)));
}

Tensor sim_text_to_mask(const Tensor& mask_tokens, const Tensor& text_tokens) {
  if (mask_tokens.dim(0) < 1 || text_tokens.dim(0) < 1)
    throw ContractError("sim_text_to_mask: empty token set");
  return mean(max_rows(matmul_nt(text_tokens, mask_tokens)));
}

Tensor maskclip_loss(const std::vector<Tensor>& mask_token_sets,
                     const std::vector<Tensor>& text_token_sets, const Tensor& log_tau) {
  const int64_t b = static_cast<int64_t>(mask_token_sets.size());
  if (b < 1 || text_token_sets.size() != mask_token_sets.size())
    throw ContractError("maskclip_loss: need matching, nonempty batches");

  std::vector<Tensor> sim_m(static_cast<size_t>(b * b));
  std::vector<Tensor> sim_t(static_cast<size_t>(b * b));
  for (int64_t p = 0; p < b; ++p)
    for (int64_t q = 0; q < b; ++q) {
      sim_m[static_cast<size_t>(p * b + q)] =
          sim_mask_to_text(mask_token_sets[static_cast<size_t>(p)], text_token_sets[static_cast<size_t>(q)]);
      // text-direction matrix laid out with text index as the row so the
      // per-text softmax normalizes over masks
      sim_t[static_cast<size_t>(q * b + p)] =
          sim_text_to_mask(mask_token_sets[static_cast<size_t>(p)], text_token_sets[static_cast<size_t>(q)]);
    }
  Tensor tau = exp_elem(log_tau);
  Tensor logits_m = scale_by(stack_scalars(sim_m, b, b), tau);
  Tensor logits_t = scale_by(stack_scalars(sim_t, b, b), tau);
  std::vector<int64_t> diag(static_cast<size_t>(b));
  std::iota(diag.begin(), diag.end(), 0);
  Tensor ce_m = cross_entropy_with_logits(logits_m, diag);
  Tensor ce_t = cross_entropy_with_logits(logits_t, diag);
  return scale(add(ce_m, ce_t), 0.5);
}

MaskClipModel train_maskclip(const std::vector<synth::GarmentSample>& samples,
                             const MaskClipConfig& cfg, const MaskClipTrainOptions& opts,
                             TrainLog* log) {
  if (samples.empty()) throw ContractError("train_maskclip: empty dataset");
  const auto t0 = std::chrono::steady_clock::now();
  MaskClipModel model(cfg, TextVocab::standard(), opts.seed);

  // one-hot planes and token ids are constant per sample; build them once
  std::vector<Tensor> planes;
  std::vector<std::vector<int64_t>> token_ids;
  planes.reserve(samples.size());
  token_ids.reserve(samples.size());
  for (const auto& s : samples) {
    planes.push_back(synth::mask_onehot(s.mask, cfg.mask_classes));
    token_ids.push_back(model.vocab.tokenize(s.caption));
  }

  nn::ParamRegistry reg = model.params();
  AdamW opt(reg.tensors(), {.lr = opts.lr, .weight_decay = opts.weight_decay});
  Rng rng(mix_seed(opts.seed, 0x7A17));
  Tape& tape = Tape::active();

  const int64_t n1 = cfg.mask_tokens();
  for (int64_t step = 0; step < opts.steps; ++step) {
    tape.clear();
    opt.zero_grad();
    std::vector<Tensor> batch_planes;
    std::vector<std::vector<int64_t>> batch_ids;
    for (int64_t i = 0; i < opts.batch; ++i) {
      const int64_t idx = rng.uniform_int(0, static_cast<int>(samples.size()) - 1);
      batch_planes.push_back(planes[static_cast<size_t>(idx)]);
      batch_ids.push_back(token_ids[static_cast<size_t>(idx)]);
    }
    Tensor mask_packed = model.encode_mask_planes_batch(concat_rows(batch_planes),
                                                        static_cast<int>(opts.batch));
    std::vector<int64_t> offsets;
    Tensor text_packed = model.encode_text_tokens_packed(batch_ids, &offsets);
    std::vector<Tensor> mask_tokens, text_tokens;
    for (int64_t i = 0; i < opts.batch; ++i) {
      mask_tokens.push_back(slice_rows(mask_packed, i * n1, (i + 1) * n1));
      text_tokens.push_back(slice_rows(text_packed, offsets[static_cast<size_t>(i)],
                                       offsets[static_cast<size_t>(i) + 1]));
    }
    Tensor loss = maskclip_loss(mask_tokens, text_tokens, model.log_tau);
    if (!loss.all_finite())
      throw ContractError("train_maskclip: loss diverged (non-finite) at step " +
                          std::to_string(step));
    tape.backward(loss);
    tape.clear();
    opt.step(cosine_lr(step, opts.steps, opts.lr));
    model.clamp_tau();
    if (log) log->loss.push_back(loss.item());
    if (opts.verbose && step % 100 == 0)
      std::fprintf(stderr, "maskclip step %lld loss %.4f tau %.2f\n",
                   static_cast<long long>(step), loss.item(), model.tau_value());
  }
  if (log)
    log->wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return model;
}

std::vector<int64_t> retrieve(const MaskClipModel& model, const std::vector<std::string>& caption,
                              const std::vector<const synth::MaskImage*>& candidates) {
  NoGradGuard ng;
  Tensor text = model.encode_text(caption);
  std::vector<std::pair<double, int64_t>> scored;
  scored.reserve(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) {
    Tensor mask_tokens = model.encode_mask(*candidates[i]);
    scored.emplace_back(sim_text_to_mask(mask_tokens, text).item(), static_cast<int64_t>(i));
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int64_t> order;
  order.reserve(scored.size());
  for (const auto& [score, idx] : scored) order.push_back(idx);
  return order;
}

AlignMap align_map(const MaskClipModel& model, const std::vector<std::string>& caption,
                   const std::string& word, const synth::MaskImage& mask) {
  int64_t word_pos = -1;
  for (size_t i = 0; i < caption.size(); ++i)
    if (caption[i] == word) word_pos = static_cast<int64_t>(i) + 1;  // +1 for BOS
  if (word_pos < 0) throw VocabError("align_map: word '" + word + "' is not in the caption");

  NoGradGuard ng;
  Tensor text = model.encode_text(caption);
  Tensor mask_tokens = model.encode_mask(mask);
  Tensor word_token = slice_rows(text, word_pos, word_pos + 1);
  Tensor sims = matmul_nt(mask_tokens, word_token);  // [n1, 1]

  AlignMap out;
  out.grid_h = model.cfg.grid_h();
  out.grid_w = model.cfg.grid_w();
  out.heat = sims.values();
  out.argmax_patch = 0;
  for (int64_t i = 1; i < sims.size(); ++i)
    if (out.heat[static_cast<size_t>(i)] > out.heat[static_cast<size_t>(out.argmax_patch)])
      out.argmax_patch = i;
  for (double v : out.heat)
    if (!std::isfinite(v)) throw ContractError("align_map: non-finite similarity");
  return out;
}

}  // namespace atelier::clip
