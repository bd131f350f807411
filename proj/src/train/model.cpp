#include "tsam/train/model.hpp"

#include <numeric>
#include <unordered_set>

#include "tsam/ad/ops.hpp"
#include "tsam/error.hpp"
#include "tsam/train/losses.hpp"

namespace tsam::train {

namespace {

constexpr double kTokenInitStd = 0.1;

model::EncoderConfig encoder_config(const ModelConfig& c, bool positional, std::size_t max_tokens) {
  return {c.encoder_shape(), c.pooling, positional, max_tokens};
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return ids;
}

template <typename T>
model::EncoderParams<T> bind_encoder(const model::ParamStore<T>& store, const ModelConfig& c, const char* modality,
                                     bool positional, std::size_t max_tokens,
                                     const std::vector<model::TransformerLayer<T>>& layers) {
  model::EncoderParams<T> enc;
  enc.config = encoder_config(c, positional, max_tokens);
  enc.ent_token = store.get("encoder.ent_token");
  enc.placeholder = store.get(std::string("encoder.placeholder.") + modality);
  if (positional) enc.positions = store.get(std::string("encoder.pos.") + modality);
  enc.layers = layers;
  return enc;
}

}  // namespace

template <typename T>
Model<T> Model<T>::create(const ModelConfig& config, const ModelDims& dims, std::uint64_t seed) {
  model::validate_shape(config.encoder_shape(), "encoder");
  if (config.score_mode == ScoreMode::kDecoder) model::validate_shape(config.decoder_shape(), "decoder");
  if (dims.visual_dim == 0 || dims.textual_dim == 0) throw ConfigError("token banks must have a positive width");
  const std::size_t d = config.dim;
  std::mt19937_64 rng(seed);
  model::ParamStore<T> store;
  model::KgeParams<T>::create(store, dims.entity_count, dims.relation_count, d, config.score_fn, rng);
  model::ProjectionParams<T>::create(store, "proj.visual", dims.visual_dim, d, rng);
  model::ProjectionParams<T>::create(store, "proj.textual", dims.textual_dim, d, rng);
  store.add("encoder.ent_token", model::init::normal<T>({d}, kTokenInitStd, rng));
  store.add("encoder.placeholder.visual", model::init::normal<T>({dims.visual_dim}, kTokenInitStd, rng));
  store.add("encoder.placeholder.textual", model::init::normal<T>({dims.textual_dim}, kTokenInitStd, rng));
  if (config.pos_visual) store.add("encoder.pos.visual", model::init::normal<T>({dims.max_tokens, d}, kTokenInitStd, rng));
  if (config.pos_textual) {
    store.add("encoder.pos.textual", model::init::normal<T>({dims.max_tokens, d}, kTokenInitStd, rng));
  }
  model::create_layers(store, "encoder", config.encoder_shape(), rng);
  model::FusionParams<T>::create(store, d, config.fusion, rng);
  if (config.score_mode == ScoreMode::kDecoder) model::DecoderParams<T>::create(store, config.decoder_shape(), rng);
  return bind(config, dims.max_tokens, std::move(store));
}

template <typename T>
Model<T> Model<T>::bind(const ModelConfig& config, std::size_t max_tokens, model::ParamStore<T> store) {
  Model m;
  m.config = config;
  m.max_tokens = max_tokens;
  m.store = std::move(store);
  m.kge = model::KgeParams<T>::bind(m.store, config.score_fn);
  if (m.kge.dim() != config.dim) {
    throw ConfigError("kge.entity width " + std::to_string(m.kge.dim()) + " does not match model.dim " +
                      std::to_string(config.dim));
  }
  m.proj_visual = model::ProjectionParams<T>::bind(m.store, "proj.visual");
  m.proj_textual = model::ProjectionParams<T>::bind(m.store, "proj.textual");
  const auto layers = model::bind_layers(m.store, "encoder", config.encoder_layers);
  m.enc_visual = bind_encoder(m.store, config, "visual", config.pos_visual, max_tokens, layers);
  m.enc_textual = bind_encoder(m.store, config, "textual", config.pos_textual, max_tokens, layers);
  m.fusion = model::FusionParams<T>::bind(m.store, config.fusion);
  if (config.score_mode == ScoreMode::kDecoder) m.decoder = model::DecoderParams<T>::bind(m.store, config.decoder_shape());
  return m;
}

ModalityInputs ModalityInputs::from_banks(const data::TokenBank& visual, const data::TokenBank& textual,
                                          std::size_t entity_count, std::size_t max_tokens) {
  if (visual.modality() != data::Modality::kVisual || textual.modality() != data::Modality::kTextual) {
    throw FormatError(FormatError::Code::kModalityMismatch, "expected a visual and a textual token bank");
  }
  return {model::prepare_tokens(visual, entity_count, max_tokens),
          model::prepare_tokens(textual, entity_count, max_tokens)};
}

template <typename T>
EntityTable<T> entity_table(const Model<T>& m, const ModalityInputs& inputs) {
  if (!m.config.enable_fgmaf) return {m.kge.entity, {}};
  const auto all = iota(m.entity_count());
  auto vis = model::encode_entities(inputs.visual, all, m.proj_visual, m.enc_visual);
  auto txt = model::encode_entities(inputs.textual, all, m.proj_textual, m.enc_textual);
  auto fused = model::fuse_modalities(m.kge.entity, vis, txt, m.fusion);
  return {fused.e_f, fused.weights};
}

template <typename T>
ad::Tensor<T> candidate_logits(const Model<T>& m, const ad::Tensor<T>& e_f, std::span<const data::Triple> queries) {
  if (queries.empty()) throw ShapeError("candidate_logits: no queries");
  std::vector<std::size_t> heads, rels;
  for (const auto& q : queries) {
    heads.push_back(q.head);
    rels.push_back(q.relation);
  }
  auto h_f = ad::gather_rows(e_f, heads);
  switch (m.config.score_mode) {
    case ScoreMode::kDecoder: {
      auto t_pred = model::decode_tail(h_f, model::relation_vectors(m.kge, rels), m.decoder);
      return ad::matmul(t_pred, ad::transpose(e_f));
    }
    case ScoreMode::kKge:
      return model::plausibility(m.kge, h_f, ad::gather_rows(m.kge.relation, rels), e_f);
  }
  throw ConfigError("unknown score mode");
}

template <typename T>
ad::Tensor<T> score_candidates(const Model<T>& m, const ad::Tensor<T>& e_f, std::span<const data::Triple> queries) {
  return ad::sigmoid(candidate_logits(m, e_f, queries));
}

template <typename T>
BatchLosses<T> batch_losses(const Model<T>& m, const ModalityInputs& inputs, std::span<const data::Triple> batch,
                            const model::SaclConfig& sacl, double label_smoothing, std::mt19937_64& rng) {
  if (batch.empty()) throw ShapeError("batch_losses: empty batch");
  std::vector<std::size_t> unique_heads;
  std::unordered_set<std::size_t> seen;
  std::vector<std::uint32_t> gold;
  for (const auto& t : batch) {
    if (seen.insert(t.head).second) unique_heads.push_back(t.head);
    gold.push_back(t.tail);
  }
  const bool sacl_on = sacl.enable_sv || sacl.enable_st;

  ad::Tensor<T> e_f, s, v, t;
  if (m.config.enable_fgmaf) {
    const auto all = iota(m.entity_count());
    auto vis = model::encode_entities(inputs.visual, all, m.proj_visual, m.enc_visual);
    auto txt = model::encode_entities(inputs.textual, all, m.proj_textual, m.enc_textual);
    e_f = model::fuse_modalities(m.kge.entity, vis, txt, m.fusion).e_f;
    if (sacl_on) {
      s = ad::gather_rows(m.kge.entity, unique_heads);
      v = ad::gather_rows(vis, unique_heads);
      t = ad::gather_rows(txt, unique_heads);
    }
  } else {
    e_f = m.kge.entity;
    if (sacl_on) {
      s = ad::gather_rows(m.kge.entity, unique_heads);
      v = model::encode_entities(inputs.visual, unique_heads, m.proj_visual, m.enc_visual);
      t = model::encode_entities(inputs.textual, unique_heads, m.proj_textual, m.enc_textual);
    }
  }

  BatchLosses<T> out;
  out.prediction = prediction_loss_logits(candidate_logits(m, e_f, batch), gold, label_smoothing);
  if (sacl_on) {
    auto sl = model::sacl_loss(s, v, t, sacl, rng);
    out.sv = sl.sv;
    out.st = sl.st;
  } else {
    out.sv = ad::Tensor<T>::scalar(0);
    out.st = ad::Tensor<T>::scalar(0);
  }
  out.total = total_loss(out.prediction, out.st, out.sv, LossFlags{sacl.enable_sv, sacl.enable_st});
  return out;
}

eval::QueryScorer model_scorer(const Model<float>& m, const ModalityInputs& inputs) {
  ad::Tensor<float> e_f;
  {
    ad::NoGradGuard guard;
    e_f = entity_table(m, inputs).e_f;
  }
  return [&m, e_f](std::span<const data::Triple> queries, std::vector<float>& scores) {
    ad::NoGradGuard guard;
    auto logits = candidate_logits(m, e_f, queries);
    scores.assign(logits.data().begin(), logits.data().end());
  };
}

#define TSAM_INSTANTIATE(T)                                                                                       \
  template struct Model<T>;                                                                                       \
  template EntityTable<T> entity_table(const Model<T>&, const ModalityInputs&);                                   \
  template ad::Tensor<T> candidate_logits(const Model<T>&, const ad::Tensor<T>&, std::span<const data::Triple>);  \
  template ad::Tensor<T> score_candidates(const Model<T>&, const ad::Tensor<T>&, std::span<const data::Triple>);  \
  template BatchLosses<T> batch_losses(const Model<T>&, const ModalityInputs&, std::span<const data::Triple>,     \
                                       const model::SaclConfig&, double, std::mt19937_64&);
TSAM_INSTANTIATE(float)
TSAM_INSTANTIATE(double)
#undef TSAM_INSTANTIATE

}  // namespace tsam::train
