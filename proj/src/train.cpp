#include "quantart/train.hpp"

#include <cmath>

namespace quantart {

namespace {

template <class T>
struct PairSlot {
  const char* name;
  AutoencoderPair<T>* pair;
  const ImageDataset* data;
};

template <class T>
std::vector<PairSlot<T>> pair_slots(ModelBundle<T>& b, const ImageDataset& photos, const ImageDataset& arts) {
  std::vector<PairSlot<T>> s{{"photo", &b.photo, &photos}, {"art", &b.art, &arts}};
  if (b.quantized()) {
    s.push_back({"photo_hat", &b.photo_hat, &photos});
    s.push_back({"art_hat", &b.art_hat, &arts});
  }
  return s;
}

template <class T>
double value(const Tensor<T>& t) {
  return static_cast<double>(t.item());
}

void check_finite(double v, int stage, std::size_t step, const std::string& what) {
  if (!std::isfinite(v))
    throw DivergenceError("stage " + std::to_string(stage) + " step " + std::to_string(step) + ": " + what +
                          " is not finite");
}

template <class T>
Tensor<T> accumulate(const Tensor<T>& acc, const Tensor<T>& t) {
  return acc.defined() ? add(acc, t) : t;
}

// Running means of named scalars, flushed once per epoch.
class EpochMeans {
 public:
  void add(const std::string& group, const std::string& key, double v) {
    auto& e = sums_[group][key];
    e.first += v;
    e.second += 1;
  }
  nlohmann::json flush() {
    nlohmann::json j = nlohmann::json::object();
    for (auto& [g, m] : sums_)
      for (auto& [k, e] : m) j[g][k] = e.first / e.second;
    sums_.clear();
    return j;
  }

 private:
  std::map<std::string, std::map<std::string, std::pair<double, double>>> sums_;
};

AdamHyper hyper_of(const TrainConfig& cfg) {
  return {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
}

}  // namespace

template <class T>
StageOneSummary train_stage1(ModelBundle<T>& bundle, const TrainConfig& cfg, const ImageDataset& photos,
                             const ImageDataset& arts, const LogSink& log) {
  cfg.validate();
  if (photos.size() == 0) throw ValueError("stage 1: photo dataset is empty");
  if (arts.size() == 0) throw ValueError("stage 1: art dataset is empty");
  if (bundle.stage != 0) throw ValueError("stage 1 expects a freshly initialized bundle, got stage " + std::to_string(bundle.stage));

  Rng seeds(cfg.seed);
  BatchSampler photo_sampler(photos.size(), cfg.batch_size, seeds(), cfg.flip);
  BatchSampler art_sampler(arts.size(), cfg.batch_size, seeds(), cfg.flip);
  Rng reseed_rng(seeds());

  const std::size_t total = cfg.total_steps(std::max(photos.size(), arts.size()));
  const std::size_t per_epoch = std::max<std::size_t>(1, cfg.steps_per_epoch(std::max(photos.size(), arts.size())));
  Adam<T> gen_opt(bundle.stage1_generator_params(), hyper_of(cfg));
  Adam<T> disc_opt(bundle.stage1_discriminator_params(), hyper_of(cfg));
  auto slots = pair_slots(bundle, photos, arts);

  StageOneSummary summary;
  EpochMeans means;
  std::map<std::string, std::vector<std::int32_t>> epoch_indices;
  std::map<std::string, Tensor<T>> last_latent;

  for (std::size_t step = 0; step < total; ++step) {
    const auto photo_batch = batch_tensor<T>(photos, photo_sampler.next());
    const auto art_batch = batch_tensor<T>(arts, art_sampler.next());
    const double adv_w = cfg.adv_weight(cfg.weights.adv, step, total);
    Tensor<T> gen_total, disc_total;
    for (auto& s : slots) {
      const auto& x = s.data == &photos ? photo_batch : art_batch;
      auto rec = reconstruct(*s.pair, x);
      auto rep = s.pair->quantized()
                     ? vq_ae_loss(x, rec.x_rec, rec.latent, *rec.q, s.pair->discriminator, cfg.weights, adv_w)
                     : ae_loss(x, rec.x_rec, s.pair->discriminator, cfg.weights, adv_w);
      const double tot = value(rep.total);
      check_finite(tot, 1, step, std::string(s.name) + " loss");
      gen_total = accumulate(gen_total, rep.total);
      disc_total = accumulate(disc_total, rep.disc_loss());
      summary.recon_history[s.name].push_back(value(rep.recon_l1));
      summary.total_history[s.name].push_back(tot);
      means.add(s.name, "recon_l1", value(rep.recon_l1));
      means.add(s.name, "adv_gen", value(rep.adv_gen));
      means.add(s.name, "adv_disc", value(rep.adv_disc));
      means.add(s.name, "codebook_term", value(rep.codebook_term));
      means.add(s.name, "commitment_term", value(rep.commitment_term));
      means.add(s.name, "total", tot);
      means.add(s.name, "adv_weight", adv_w);
      if (rec.q) {
        auto& idx = epoch_indices[s.name];
        idx.insert(idx.end(), rec.q->indices.begin(), rec.q->indices.end());
        last_latent[s.name] = rec.latent;
      }
    }
    check_finite(value(disc_total), 1, step, "discriminator loss");
    const auto gen_grads = backward(gen_total);
    const auto disc_grads = backward(disc_total);
    gen_opt.step(gen_grads);
    disc_opt.step(disc_grads);
    ++summary.steps;

    if ((step + 1) % per_epoch == 0 || step + 1 == total) {
      auto record = nlohmann::json{{"stage", 1}, {"epoch", step / per_epoch}, {"step", step + 1}};
      record["pairs"] = means.flush();
      for (auto& s : slots) {
        if (!s.pair->quantized()) continue;
        const auto usage = usage_stats(epoch_indices[s.name], s.pair->codebook.size());
        record["pairs"][s.name]["perplexity"] = usage.perplexity;
        record["pairs"][s.name]["codes_used"] = usage.used();
        if (cfg.reseed_dead)
          record["pairs"][s.name]["reseeded"] =
              reseed_dead_entries(s.pair->codebook, usage, last_latent[s.name], reseed_rng);
      }
      epoch_indices.clear();
      if (log) log(record);
    }
  }

  bundle.stage = 1;
  bundle.stage1_hash = parameter_hash(bundle.stage1_params());
  bundle.provenance["stage1"] = {{"train", to_json(cfg)}, {"steps", summary.steps},
                                 {"photos", photos.size()}, {"arts", arts.size()}};
  return summary;
}

template <class T>
StageTwoSummary train_stage2(ModelBundle<T>& bundle, const TrainConfig& cfg, const ImageDataset& photos,
                             const ImageDataset& arts, const LogSink& log) {
  cfg.validate();
  if (photos.size() == 0) throw ValueError("stage 2: photo dataset is empty");
  if (arts.size() == 0) throw ValueError("stage 2: art dataset is empty");
  if (bundle.stage < 1)
    throw ValueError("stage 2 needs a bundle that completed stage 1, got stage " + std::to_string(bundle.stage));

  auto frozen = bundle.stage1_params();
  const auto before = snapshot(frozen);
  const auto hash_before = parameter_hash(frozen);
  if (!bundle.stage1_hash.empty() && bundle.stage1_hash != hash_before)
    throw ValueError("stage-1 parameters do not match the recorded stage-1 hash");

  Rng seeds(cfg.seed ^ 0x5eed2ULL);
  const std::size_t batch = std::min({cfg.batch_size, photos.size(), arts.size()});
  BatchSampler photo_sampler(photos.size(), batch, seeds(), cfg.flip);
  BatchSampler art_sampler(arts.size(), batch, seeds(), cfg.flip);

  const std::size_t total = cfg.total_steps(std::max(photos.size(), arts.size()));
  const std::size_t per_epoch = std::max<std::size_t>(1, cfg.steps_per_epoch(std::max(photos.size(), arts.size())));
  Adam<T> gen_opt(bundle.stage2_generator_params(), hyper_of(cfg));
  Adam<T> disc_opt(bundle.stage2_discriminator_params(), hyper_of(cfg));
  const bool quantized = bundle.quantized();

  StageTwoSummary summary;
  EpochMeans means;
  auto record = [&](const char* group, const SGALossReport<T>& r) {
    means.add(group, "content", value(r.content));
    means.add(group, "style", value(r.style));
    means.add(group, "featadv_gen", value(r.featadv_gen));
    means.add(group, "featadv_disc", value(r.featadv_disc));
    means.add(group, "codebook", value(r.codebook));
    means.add(group, "total", value(r.total));
    means.add(group, "adv_weight", r.adv_weight);
  };

  for (std::size_t step = 0; step < total; ++step) {
    const auto c = batch_tensor<T>(photos, photo_sampler.next());
    const auto s = batch_tensor<T>(arts, art_sampler.next());
    const double adv_w = cfg.adv_weight(cfg.weights.featadv, step, total);

    Tensor<T> z_c, z_s, zhat_c, zhat_s;
    {
      NoGradGuard frozen_encoders;
      z_c = bundle.photo.encode(c);
      z_s = bundle.art.encode(s);
      if (quantized) {
        zhat_c = quantize(bundle.photo_hat.encode(c), bundle.photo_hat.codebook).quantized;
        zhat_s = quantize(bundle.art_hat.encode(s), bundle.art_hat.codebook).quantized;
      }
    }
    auto rep = sga_losses(bundle.sga.forward(z_c, z_s), z_c, z_s, bundle.feat_disc, cfg.weights, adv_w);
    check_finite(value(rep.total), 2, step, "SGA loss");
    Tensor<T> gen_total = rep.total, disc_total = rep.disc_loss();
    record("sga", rep);
    summary.style_history.push_back(value(rep.style));
    double total_v = value(rep.total);
    if (quantized) {
      auto q = sga_quantized_forward(bundle.sga_hat, zhat_c, zhat_s, bundle.art_hat.codebook,
                                     bundle.config.sga_quantization);
      if (bundle.config.sga_quantization) {
        const auto& e = bundle.art_hat.codebook.entries.values();
        const std::size_t d = bundle.config.latent_dim;
        const auto tokens = to_tokens(q.zhat_y);
        for (std::size_t i = 0; i < q.indices.size(); ++i)
          for (std::size_t k = 0; k < d; ++k)
            if (tokens[i * d + k] != e[static_cast<std::size_t>(q.indices[i]) * d + k])
              throw std::logic_error("re-quantized SGA output is not an exact codebook row");
      }
      auto rep_hat = sga_hat_loss(zhat_c, zhat_s, q.zhat_y, q.pre_quant, bundle.feat_disc_hat, cfg.weights, adv_w);
      check_finite(value(rep_hat.total), 2, step, "quantized SGA loss");
      gen_total = add(gen_total, rep_hat.total);
      disc_total = add(disc_total, rep_hat.disc_loss());
      record("sga_hat", rep_hat);
      summary.style_hat_history.push_back(value(rep_hat.style));
      total_v += value(rep_hat.total);
    }
    summary.total_history.push_back(total_v);
    check_finite(value(disc_total), 2, step, "feature discriminator loss");
    const auto gen_grads = backward(gen_total);
    const auto disc_grads = backward(disc_total);
    gen_opt.step(gen_grads);
    disc_opt.step(disc_grads);
    ++summary.steps;

    if ((step + 1) % per_epoch == 0 || step + 1 == total) {
      auto rec = nlohmann::json{{"stage", 2}, {"epoch", step / per_epoch}, {"step", step + 1}};
      rec["losses"] = means.flush();
      if (log) log(rec);
    }
  }

  if (!(snapshot(frozen) == before) || parameter_hash(frozen) != hash_before)
    throw std::logic_error("stage 2 modified stage-1 parameters");
  bundle.stage = 2;
  bundle.stage1_hash = hash_before;
  summary.stage1_hash = hash_before;
  bundle.provenance["stage2"] = {{"train", to_json(cfg)}, {"steps", summary.steps},
                                 {"photos", photos.size()}, {"arts", arts.size()}};
  return summary;
}

template <class T>
StageOneEval evaluate_stage1(const ModelBundle<T>& bundle, const ImageDataset& photos, const ImageDataset& arts) {
  NoGradGuard no_grad;
  auto& b = const_cast<ModelBundle<T>&>(bundle);
  StageOneEval ev;
  for (auto& s : pair_slots(b, photos, arts)) {
    double err = 0.0;
    std::size_t n = 0;
    std::vector<std::int32_t> indices;
    for (std::size_t i = 0; i < s.data->size(); i += 16) {
      std::vector<std::pair<std::size_t, bool>> picks;
      for (std::size_t j = i; j < std::min(i + 16, s.data->size()); ++j) picks.push_back({j, false});
      const auto x = batch_tensor<T>(*s.data, picks);
      auto rec = reconstruct(*s.pair, x);
      err += value(mean(abs(sub(rec.x_rec, x)))) * static_cast<double>(x.numel());
      n += x.numel();
      if (rec.q) indices.insert(indices.end(), rec.q->indices.begin(), rec.q->indices.end());
    }
    ev.recon_l1[s.name] = n ? err / static_cast<double>(n) : 0.0;
    if (!indices.empty()) {
      const auto u = usage_stats(indices, s.pair->codebook.size());
      ev.perplexity[s.name] = u.perplexity;
      ev.codes_used[s.name] = u.used();
    }
  }
  return ev;
}

template <class T>
StyleEval evaluate_style(const ModelBundle<T>& bundle, const ImageDataset& photos, const ImageDataset& arts) {
  NoGradGuard no_grad;
  StyleEval ev;
  ev.pairs = std::min(photos.size(), arts.size());
  if (ev.pairs == 0) throw ValueError("evaluate_style: empty dataset");
  std::vector<std::pair<std::size_t, bool>> picks;
  for (std::size_t i = 0; i < ev.pairs; ++i) picks.push_back({i, false});
  const auto c = batch_tensor<T>(photos, picks);
  const auto s = batch_tensor<T>(arts, picks);
  const auto z_c = bundle.photo.encode(c);
  const auto z_s = bundle.art.encode(s);
  const auto z_y = bundle.sga.forward(z_c, z_s);
  ev.style = value(style_loss(z_y, z_s));
  ev.content = value(content_loss(z_y, z_c));
  if (bundle.quantized()) {
    const auto zhat_c = quantize(bundle.photo_hat.encode(c), bundle.photo_hat.codebook).quantized;
    const auto zhat_s = quantize(bundle.art_hat.encode(s), bundle.art_hat.codebook).quantized;
    ev.style_hat = value(style_loss(bundle.sga_hat.forward(zhat_c, zhat_s), zhat_s));
  }
  return ev;
}

#define QUANTART_INSTANTIATE_TRAIN(T)                                                                          \
  template StageOneSummary train_stage1(ModelBundle<T>&, const TrainConfig&, const ImageDataset&,              \
                                        const ImageDataset&, const LogSink&);                                  \
  template StageTwoSummary train_stage2(ModelBundle<T>&, const TrainConfig&, const ImageDataset&,              \
                                        const ImageDataset&, const LogSink&);                                  \
  template StageOneEval evaluate_stage1(const ModelBundle<T>&, const ImageDataset&, const ImageDataset&);      \
  template StyleEval evaluate_style(const ModelBundle<T>&, const ImageDataset&, const ImageDataset&);

QUANTART_INSTANTIATE_TRAIN(float)
QUANTART_INSTANTIATE_TRAIN(double)

}  // namespace quantart
