#include "atelier/vq/stage1.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "atelier/core/optim.hpp"
#include "atelier/data/bridge.hpp"

namespace atelier::vq {

Codebook::Codebook(int64_t k, int64_t code_dim, Rng& rng) {
  if (k < 2) throw ContractError("Codebook: need at least 2 entries");
  std::vector<double> init(static_cast<size_t>(k * code_dim));
  const double bound = 1.0 / static_cast<double>(k);
  for (double& v : init) v = rng.uniform(-bound, bound);
  entries = Tensor::param({k, code_dim}, std::move(init));
  usage.assign(static_cast<size_t>(k), 0);
}

int64_t Codebook::nearest(const double* vec) const {
  const int64_t k = size(), nz = code_dim();
  const double* e = entries.data();
  int64_t best = 0;
  double best_d = 1e300;
  for (int64_t i = 0; i < k; ++i) {
    double d = 0.0;
    const double* row = e + i * nz;
    for (int64_t j = 0; j < nz; ++j) {
      const double diff = vec[j] - row[j];
      d += diff * diff;
    }
    if (d < best_d) {  // strict: ties keep the lowest index
      best_d = d;
      best = i;
    }
  }
  return best;
}

void Codebook::reset_usage() { std::fill(usage.begin(), usage.end(), 0); }

int64_t Codebook::used_entries() const {
  int64_t n = 0;
  for (int64_t u : usage) n += u > 0;
  return n;
}

std::pair<int64_t, std::vector<double>> quantize(const std::vector<double>& vec, Codebook& cb) {
  if (static_cast<int64_t>(vec.size()) != cb.code_dim())
    throw ShapeError("quantize: vector width does not match the codebook");
  if (cb.size() < 1) throw ContractError("quantize: empty codebook");
  const int64_t idx = cb.nearest(vec.data());
  cb.usage[static_cast<size_t>(idx)]++;
  const double* row = cb.entries.data() + idx * cb.code_dim();
  return {idx, std::vector<double>(row, row + cb.code_dim())};
}

Tensor straight_through(const Tensor& features, const Tensor& rows) {
  if (features.shape() != rows.shape())
    throw ShapeError("straight_through: shape mismatch");
  Tensor out = Tensor::from(rows.shape(), rows.values());
  auto& tape = Tape::active();
  if (tape.recording() && features.requires_grad()) {
    out.enable_grad();
    auto fn = features.node();
    auto on = out.node();
    tape.record([fn, on] {
      for (size_t i = 0; i < on->grad.size(); ++i) fn->grad[i] += on->grad[i];
    });
  }
  return out;
}

QuantizeResult quantize_grid(const Tensor& features, Codebook& cb) {
  if (features.rank() != 2 || features.dim(1) != cb.code_dim())
    throw ShapeError("quantize_grid: features must be [n, code_dim]");
  const int64_t n = features.dim(0);
  QuantizeResult out;
  out.indices.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    out.indices[static_cast<size_t>(i)] = cb.nearest(features.data() + i * cb.code_dim());
  for (int64_t i = 0; i < n; ++i) cb.usage[static_cast<size_t>(out.indices[static_cast<size_t>(i)])]++;
  out.rows = embed_rows(cb.entries, out.indices);
  out.codes = straight_through(features, out.rows);
  return out;
}

Stage1Model::Stage1Model(Stage1Config cfg_, uint64_t seed) : cfg(cfg_) {
  if (cfg.image_h % 4 || cfg.image_w % 4)
    throw ContractError("Stage1Model: image extents must be divisible by 4");
  Rng rng(mix_seed(seed, 0x57A6E1));
  const int hid = cfg.hidden;
  const int nz = static_cast<int>(cfg.code_dim);
  enc_in = nn::Conv2d(cfg.in_channels, hid, 4, 2, 1, rng);
  enc_mid = nn::Conv2d(hid, hid, 3, 1, 1, rng);
  enc_down = nn::Conv2d(hid, nz, 4, 2, 1, rng);
  enc_out = nn::Conv2d(nz, nz, 3, 1, 1, rng);
  dec_in = nn::Conv2d(nz, hid, 3, 1, 1, rng);
  dec_mid = nn::Conv2d(hid, hid, 3, 1, 1, rng);
  dec_tiles = nn::Conv2d(hid, 16 * cfg.in_channels, 1, 1, 0, rng);
  codebook = Codebook(cfg.codebook_size, cfg.code_dim, rng);
  text_proj = nn::Linear(cfg.clip_dim, cfg.code_dim, rng);
}

Tensor Stage1Model::encode_batch(const Tensor& images, int batch) const {
  const int h = cfg.image_h, w = cfg.image_w;
  if (images.dim(0) != static_cast<int64_t>(batch) * h * w || images.dim(1) != cfg.in_channels)
    throw ShapeError("stage1 encode: expected [batch*h*w, in_channels] images");
  Tensor x = gelu(enc_in.forward_batch(images, h, w, batch));
  x = gelu(enc_mid.forward_batch(x, h / 2, w / 2, batch));
  x = gelu(enc_down.forward_batch(x, h / 2, w / 2, batch));
  return enc_out.forward_batch(x, h / 4, w / 4, batch);
}

Tensor Stage1Model::decode_batch(const Tensor& codes, int batch) const {
  const int gh = cfg.grid_h(), gw = cfg.grid_w();
  if (codes.dim(0) != static_cast<int64_t>(batch) * gh * gw || codes.dim(1) != cfg.code_dim)
    throw ShapeError("stage1 decode: expected [batch*grid, code_dim] codes");
  Tensor x = gelu(dec_in.forward_batch(codes, gh, gw, batch));
  x = gelu(dec_mid.forward_batch(x, gh, gw, batch));
  Tensor tiles = dec_tiles.forward_batch(x, gh, gw, batch);
  return nn::depth_to_space_batch(tiles, gh, gw, 4, cfg.in_channels, batch);
}

Tensor Stage1Model::fuse(const Tensor& features, const Tensor& text_rows) const {
  if (!cfg.fusion) return features;
  return scale(add(features, text_proj(text_rows)), 0.5);
}

nn::ParamRegistry Stage1Model::params() const {
  nn::ParamRegistry reg;
  enc_in.register_params(reg, "enc.in");
  enc_mid.register_params(reg, "enc.mid");
  enc_down.register_params(reg, "enc.down");
  enc_out.register_params(reg, "enc.out");
  dec_in.register_params(reg, "dec.in");
  dec_mid.register_params(reg, "dec.mid");
  dec_tiles.register_params(reg, "dec.tiles");
  reg.add("codebook.entries", codebook.entries);
  if (cfg.fusion) text_proj.register_params(reg, "fusion.proj");
  return reg;
}

Tensor select_text_tokens(const Tensor& clip_mask_tokens, const Tensor& clip_text_tokens,
                          std::vector<int64_t>* selection) {
  if (clip_text_tokens.dim(0) < 1)
    throw ContractError("select_text_tokens: empty text token set");
  NoGradGuard ng;
  std::vector<int64_t> picks;
  max_rows(matmul_nt(clip_mask_tokens, clip_text_tokens), &picks);
  if (selection) *selection = picks;
  return embed_rows(clip_text_tokens, picks);
}

VqLossParts vq_loss(const Tensor& target, const Tensor& decoded, const Tensor& fused,
                    const QuantizeResult& q, double beta) {
  VqLossParts parts;
  parts.rec = mse(decoded, target);
  parts.codebook = mse(detach(fused), q.rows);
  parts.commit = mse(fused, detach(q.rows));
  parts.total = add(add(parts.rec, parts.codebook), scale(parts.commit, beta));
  return parts;
}

Tensor semantic_loss(const Tensor& decoded, const clip::MaskPredictor& predictor,
                     const clip::MaskClipModel& clip_model, const Tensor& caption_tokens) {
  return semantic_loss_batch(decoded, 1, predictor, clip_model, {caption_tokens});
}

Tensor semantic_loss_batch(const Tensor& decoded, int batch,
                           const clip::MaskPredictor& predictor,
                           const clip::MaskClipModel& clip_model,
                           const std::vector<Tensor>& caption_tokens) {
  const int h = clip_model.cfg.image_h, w = clip_model.cfg.image_w;
  if (decoded.dim(0) != static_cast<int64_t>(batch) * h * w)
    throw ShapeError("semantic_loss: decoded image geometry mismatch");
  Tensor probs = predictor.forward_batch(decoded, h, w, batch);
  Tensor mask_tokens = clip_model.encode_mask_planes_batch(probs, batch);
  const int64_t n1 = clip_model.cfg.mask_tokens();
  std::vector<Tensor> losses;
  losses.reserve(static_cast<size_t>(batch));
  const Tensor one = Tensor::scalar(1.0);
  for (int b = 0; b < batch; ++b) {
    Tensor d = clip::sim_mask_to_text(slice_rows(mask_tokens, b * n1, (b + 1) * n1),
                                      caption_tokens[static_cast<size_t>(b)]);
    losses.push_back(add(one, scale(d, -1.0)));
  }
  if (batch == 1) return losses[0];
  return mean(stack_scalars(losses, batch, 1));
}

Stage1Model train_stage1(const std::vector<synth::GarmentSample>& samples, Stage1Config cfg,
                         const clip::MaskClipModel* clip_model,
                         const clip::MaskPredictor* predictor, const Stage1TrainOptions& opts,
                         Stage1TrainLog* log) {
  if (samples.empty()) throw ContractError("train_stage1: empty dataset");
  std::vector<Tensor> images, fused_rows, captions;
  images.reserve(samples.size());
  for (const auto& s : samples) {
    images.push_back(synth::image_tensor(s.image));
    if (cfg.fusion) {
      if (!clip_model)
        throw ContractError("train_stage1: MaskCLIP checkpoint required for fusion");
      fused_rows.push_back(fusion_rows(*clip_model, s));
    }
    if (cfg.lambda2 > 0.0) {
      if (!clip_model)
        throw ContractError("train_stage1: MaskCLIP checkpoint required for the semantic term");
      NoGradGuard ng;
      captions.push_back(clip_model->encode_text(s.caption));
    }
  }
  return train_stage1_core(images, cfg, clip_model, predictor, fused_rows, captions, opts, log);
}

Stage1Model train_stage1_core(const std::vector<Tensor>& inputs, Stage1Config cfg,
                              const clip::MaskClipModel* clip_model,
                              const clip::MaskPredictor* predictor,
                              const std::vector<Tensor>& fused_rows,
                              const std::vector<Tensor>& captions,
                              const Stage1TrainOptions& opts, Stage1TrainLog* log) {
  if (inputs.empty()) throw ContractError("train_stage1: empty dataset");
  const bool semantic = cfg.lambda2 > 0.0;
  if ((cfg.fusion || semantic) && !clip_model)
    throw ContractError("train_stage1: MaskCLIP checkpoint required for fusion/semantic terms");
  if (semantic && !predictor)
    throw ContractError("train_stage1: mask predictor required for the semantic term");
  if (cfg.fusion && clip_model &&
      (clip_model->cfg.grid_h() != cfg.grid_h() || clip_model->cfg.grid_w() != cfg.grid_w()))
    throw ContractError("train_stage1: MaskCLIP patch grid must match the code grid");
  if (cfg.fusion && fused_rows.size() != inputs.size())
    throw ContractError("train_stage1: fusion rows missing");
  if (semantic && captions.size() != inputs.size())
    throw ContractError("train_stage1: caption tokens missing");

  Stage1Model model(cfg, opts.seed);
  const std::vector<Tensor>& images = inputs;
  nn::ParamRegistry reg = model.params();
  AdamW opt(reg.tensors(), {.lr = opts.lr, .weight_decay = opts.weight_decay});
  Rng rng(mix_seed(opts.seed, 0x57E9));
  Tape& tape = Tape::active();
  model.codebook.reset_usage();

  for (int64_t step = 0; step < opts.steps; ++step) {
    tape.clear();
    opt.zero_grad();
    const int b = static_cast<int>(opts.batch);
    std::vector<Tensor> batch_images, batch_rows;
    std::vector<Tensor> batch_caps;
    for (int i = 0; i < b; ++i) {
      const int idx = rng.uniform_int(0, static_cast<int>(images.size()) - 1);
      batch_images.push_back(images[static_cast<size_t>(idx)]);
      if (cfg.fusion) batch_rows.push_back(fused_rows[static_cast<size_t>(idx)]);
      if (semantic) batch_caps.push_back(captions[static_cast<size_t>(idx)]);
    }
    Tensor target = concat_rows(batch_images);
    Tensor features = model.encode_batch(target, b);
    Tensor fused =
        cfg.fusion ? model.fuse(features, concat_rows(batch_rows)) : features;
    QuantizeResult q = quantize_grid(fused, model.codebook);
    Tensor decoded = model.decode_batch(q.codes, b);
    VqLossParts parts = vq_loss(target, decoded, fused, q, cfg.beta);
    Tensor loss = scale(parts.total, cfg.lambda1);
    Tensor sem;
    if (semantic) {
      sem = semantic_loss_batch(decoded, b, *predictor, *clip_model, batch_caps);
      loss = add(loss, scale(sem, cfg.lambda2));
    }
    if (!loss.all_finite())
      throw ContractError("train_stage1: loss diverged (non-finite) at step " +
                          std::to_string(step));
    tape.backward(loss);
    tape.clear();
    opt.step(cosine_lr(step, opts.steps, opts.lr));

    if (log) {
      log->total.push_back(loss.item());
      log->rec.push_back(parts.rec.item());
      log->semantic.push_back(semantic ? sem.item() : 0.0);
    }
    if (opts.verbose && step % 100 == 0)
      std::fprintf(stderr, "stage1 step %lld loss %.5f rec %.5f\n", static_cast<long long>(step),
                   loss.item(), parts.rec.item());

    // dead-entry maintenance at window boundaries
    if ((step + 1) % opts.reseed_every == 0 || step + 1 == opts.steps) {
      const double util =
          static_cast<double>(model.codebook.used_entries()) / static_cast<double>(cfg.codebook_size);
      if (log) {
        log->final_utilization = util;
        if (util < 0.02) log->dead_codebook_warning = true;
      }
      if (util < 0.02 && opts.verbose)
        std::fprintf(stderr, "stage1 warning: codebook utilization %.1f%% at step %lld\n",
                     util * 100.0, static_cast<long long>(step));
      if (step + 1 < opts.steps) {
        // reseed unused entries to random current-batch features plus noise
        const int64_t n_rows = fused.dim(0);
        for (int64_t k = 0; k < cfg.codebook_size; ++k) {
          if (model.codebook.usage[static_cast<size_t>(k)] > 0) continue;
          const int64_t pick = rng.uniform_int(0, static_cast<int>(n_rows) - 1);
          for (int64_t j = 0; j < cfg.code_dim; ++j)
            model.codebook.entries.set(k * cfg.code_dim + j,
                                       fused.at(pick, j) + rng.normal(0.0, 0.01));
        }
        model.codebook.reset_usage();
      }
    }
  }
  return model;
}

Tensor fusion_rows(const clip::MaskClipModel& clip_model, const synth::GarmentSample& sample) {
  NoGradGuard ng;
  Tensor mask_tokens = clip_model.encode_mask(sample.mask);
  Tensor text_tokens = clip_model.encode_text(sample.caption);
  return select_text_tokens(mask_tokens, text_tokens);
}

std::vector<int64_t> tokenize_image(const Stage1Model& model,
                                    const clip::MaskClipModel* clip_model,
                                    const synth::GarmentSample& sample) {
  NoGradGuard ng;
  Tensor features = model.encode(synth::image_tensor(sample.image));
  Tensor fused = model.cfg.fusion
                     ? model.fuse(features, fusion_rows(*clip_model, sample))
                     : features;
  std::vector<int64_t> indices(static_cast<size_t>(fused.dim(0)));
  for (int64_t i = 0; i < fused.dim(0); ++i)
    indices[static_cast<size_t>(i)] = model.codebook.nearest(fused.data() + i * model.cfg.code_dim);
  return indices;
}

Tensor detokenize(const Stage1Model& model, const std::vector<int64_t>& indices) {
  if (static_cast<int64_t>(indices.size()) != model.cfg.grid_positions())
    throw ShapeError("detokenize: expected one index per grid position");
  for (int64_t idx : indices)
    if (idx < 0 || idx >= model.cfg.codebook_size)
      throw ContractError("detokenize: code index " + std::to_string(idx) + " outside [0," +
                          std::to_string(model.cfg.codebook_size) + ")");
  NoGradGuard ng;
  return model.decode(embed_rows(model.codebook.entries, indices));
}

Tensor reconstruct(const Stage1Model& model, const clip::MaskClipModel* clip_model,
                   const synth::GarmentSample& sample) {
  return detokenize(model, tokenize_image(model, clip_model, sample));
}

}  // namespace atelier::vq
