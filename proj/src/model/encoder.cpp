#include "tsam/model/encoder.hpp"

#include <algorithm>

#include "tsam/ad/ops.hpp"
#include "tsam/error.hpp"

namespace tsam::model {

namespace {

constexpr double kTokenInitStd = 0.1;

}  // namespace

template <typename T>
ProjectionParams<T> ProjectionParams<T>::create(ParamStore<T>& store, const std::string& prefix,
                                                std::size_t token_dim, std::size_t dim, std::mt19937_64& rng) {
  ProjectionParams p;
  p.weight = store.add(prefix + ".weight", init::xavier_uniform<T>({token_dim, dim}, rng));
  p.bias = store.add(prefix + ".bias", ad::Tensor<T>::zeros({dim}));
  return p;
}

template <typename T>
ProjectionParams<T> ProjectionParams<T>::bind(const ParamStore<T>& store, const std::string& prefix) {
  return {store.get(prefix + ".weight"), store.get(prefix + ".bias")};
}

template <typename T>
EncoderParams<T> EncoderParams<T>::create(ParamStore<T>& store, const std::string& prefix,
                                          const EncoderConfig& config, std::size_t token_dim,
                                          std::mt19937_64& rng) {
  validate_shape(config.transformer, "encoder");
  const std::size_t d = config.transformer.dim;
  EncoderParams p;
  p.config = config;
  p.ent_token = store.add(prefix + ".ent_token", init::normal<T>({d}, kTokenInitStd, rng));
  p.placeholder = store.add(prefix + ".placeholder", init::normal<T>({token_dim}, kTokenInitStd, rng));
  if (config.positional) {
    p.positions = store.add(prefix + ".positions", init::normal<T>({config.max_tokens, d}, kTokenInitStd, rng));
  }
  p.layers = create_layers(store, prefix, config.transformer, rng);
  return p;
}

template <typename T>
EncoderParams<T> EncoderParams<T>::bind(const ParamStore<T>& store, const std::string& prefix,
                                        const EncoderConfig& config) {
  EncoderParams p;
  p.config = config;
  p.ent_token = store.get(prefix + ".ent_token");
  p.placeholder = store.get(prefix + ".placeholder");
  if (config.positional) p.positions = store.get(prefix + ".positions");
  p.layers = bind_layers(store, prefix, config.transformer.layers);
  return p;
}

ModalityTokens prepare_tokens(const data::TokenBank& bank, std::size_t entity_count, std::size_t max_tokens) {
  if (max_tokens == 0) throw ConfigError("max_tokens must be positive");
  ModalityTokens out;
  out.token_dim = bank.dim();
  out.offsets.assign(1, 0);
  for (std::size_t e = 0; e < entity_count; ++e) {
    if (auto rows = bank.tokens(e)) {
      const std::size_t n = std::min<std::size_t>(rows->size() / bank.dim(), max_tokens);
      out.values.insert(out.values.end(), rows->begin(), rows->begin() + n * bank.dim());
      out.offsets.push_back(out.offsets.back() + n);
    } else {
      out.offsets.push_back(out.offsets.back());
    }
  }
  return out;
}

template <typename T>
ad::Tensor<T> project_tokens(const ad::Tensor<T>& tokens, const ProjectionParams<T>& proj) {
  if (tokens.cols() != proj.weight.rows()) {
    throw ShapeError("project_tokens: token width " + std::to_string(tokens.cols()) + " does not match " +
                     ad::shape_string(proj.weight.shape()));
  }
  return ad::add(ad::matmul(tokens, proj.weight), proj.bias);
}

template <typename T>
ad::Tensor<T> encode_sequence(const ad::Tensor<T>& projected, const EncoderParams<T>& enc) {
  const std::size_t d = enc.ent_token.size(), n = projected.rows();
  if (projected.cols() != d) {
    throw ShapeError("encode_sequence: expected width " + std::to_string(d) + ", got " +
                     ad::shape_string(projected.shape()));
  }
  ad::Tensor<T> body = projected;
  if (enc.positions.defined()) {
    if (n > enc.positions.rows()) {
      throw ShapeError("encode_sequence: " + std::to_string(n) + " tokens exceed " +
                       std::to_string(enc.positions.rows()) + " positions");
    }
    body = ad::add(body, ad::slice_rows(enc.positions, 0, n));
  }
  auto seq = ad::concat({ad::reshape(enc.ent_token, {1, d}), body}, 0);
  auto out = run_transformer(seq, {0, n + 1}, enc.layers, enc.config.transformer.heads);
  auto pooled = enc.config.pooling == Pooling::kEnt ? ad::slice_rows(out, 0, 1) : ad::mean_rows(out);
  return ad::reshape(pooled, {d});
}

template <typename T>
ad::Tensor<T> encode_entities(const ModalityTokens& tokens, const std::vector<std::size_t>& entities,
                              const ProjectionParams<T>& proj, const EncoderParams<T>& enc) {
  if (entities.empty()) throw ShapeError("encode_entities: no entities requested");
  const std::size_t td = tokens.token_dim, d = enc.ent_token.size();
  if (td != enc.placeholder.size()) {
    throw ShapeError("encode_entities: bank width " + std::to_string(td) + " does not match placeholder " +
                     ad::shape_string(enc.placeholder.shape()));
  }

  // Raw token rows for every requested entity, with placeholder rows masked in.
  std::vector<std::size_t> lengths, positions;
  std::size_t rows = 0;
  for (std::size_t e : entities) {
    if (e >= tokens.entity_count()) throw ShapeError("encode_entities: entity " + std::to_string(e) + " out of range");
    const std::size_t n = std::max<std::size_t>(tokens.token_count(e), 1);
    lengths.push_back(n);
    for (std::size_t j = 0; j < n; ++j) positions.push_back(j);
    rows += n;
  }
  std::vector<T> raw(rows * td, T(0)), mask(rows, T(0));
  bool any_missing = false;
  std::size_t r = 0;
  for (std::size_t e : entities) {
    const std::size_t n = tokens.token_count(e);
    if (n == 0) {
      mask[r++] = T(1);
      any_missing = true;
      continue;
    }
    const auto src = tokens.values.begin() + static_cast<std::ptrdiff_t>(tokens.offsets[e] * td);
    std::copy(src, src + static_cast<std::ptrdiff_t>(n * td), raw.begin() + static_cast<std::ptrdiff_t>(r * td));
    r += n;
  }
  ad::Tensor<T> x(ad::Shape{rows, td}, std::move(raw));
  if (any_missing) {
    ad::Tensor<T> m(ad::Shape{rows, 1}, std::move(mask));
    x = ad::add(x, ad::mul(m, ad::reshape(enc.placeholder, {1, td})));
  }
  auto projected = project_tokens(x, proj);
  if (enc.positions.defined()) {
    if (*std::max_element(lengths.begin(), lengths.end()) > enc.positions.rows()) {
      throw ShapeError("encode_entities: sequence longer than the positional table");
    }
    projected = ad::add(projected, ad::gather_rows(enc.positions, positions));
  }

  // Interleave one [ENT] row ahead of each sequence.
  std::vector<std::size_t> layout, offsets{0};
  std::size_t next = 1;
  for (std::size_t n : lengths) {
    layout.push_back(0);
    for (std::size_t j = 0; j < n; ++j) layout.push_back(next++);
    offsets.push_back(offsets.back() + n + 1);
  }
  auto seq = ad::gather_rows(ad::concat({ad::reshape(enc.ent_token, {1, d}), projected}, 0), layout);
  auto out = run_transformer(seq, offsets, enc.layers, enc.config.transformer.heads);
  if (enc.config.pooling == Pooling::kMean) return ad::segment_mean(out, offsets);
  offsets.pop_back();
  return ad::gather_rows(out, offsets);
}

#define TSAM_INSTANTIATE(T)                                                                                 \
  template struct ProjectionParams<T>;                                                                      \
  template struct EncoderParams<T>;                                                                         \
  template ad::Tensor<T> project_tokens(const ad::Tensor<T>&, const ProjectionParams<T>&);                 \
  template ad::Tensor<T> encode_sequence(const ad::Tensor<T>&, const EncoderParams<T>&);                   \
  template ad::Tensor<T> encode_entities(const ModalityTokens&, const std::vector<std::size_t>&,            \
                                         const ProjectionParams<T>&, const EncoderParams<T>&);
TSAM_INSTANTIATE(float)
TSAM_INSTANTIATE(double)
#undef TSAM_INSTANTIATE

}  // namespace tsam::model
