#include "tsam/model/decoder.hpp"

#include "tsam/ad/ops.hpp"
#include "tsam/error.hpp"

namespace tsam::model {

namespace {

constexpr double kTokenInitStd = 0.1;

}  // namespace

template <typename T>
DecoderParams<T> DecoderParams<T>::create(ParamStore<T>& store, const TransformerShape& shape,
                                          std::mt19937_64& rng) {
  validate_shape(shape, "decoder");
  DecoderParams p;
  p.shape = shape;
  p.cls_token = store.add("decoder.cls_token", init::normal<T>({shape.dim}, kTokenInitStd, rng));
  p.positions = store.add("decoder.pos", init::normal<T>({2, shape.dim}, kTokenInitStd, rng));
  p.layers = create_layers(store, "decoder", shape, rng);
  return p;
}

template <typename T>
DecoderParams<T> DecoderParams<T>::bind(const ParamStore<T>& store, const TransformerShape& shape) {
  DecoderParams p;
  p.shape = shape;
  p.cls_token = store.get("decoder.cls_token");
  p.positions = store.get("decoder.pos");
  p.layers = bind_layers(store, "decoder", shape.layers);
  return p;
}

template <typename T>
ad::Tensor<T> decode_tail(const ad::Tensor<T>& h_f, const ad::Tensor<T>& r, const DecoderParams<T>& dec) {
  const std::size_t d = dec.cls_token.size();
  if (h_f.rank() != 2 || h_f.shape() != r.shape() || h_f.cols() != d) {
    throw ShapeError("decode_tail: h_f " + ad::shape_string(h_f.shape()) + ", r " + ad::shape_string(r.shape()) +
                     ", model width " + std::to_string(d));
  }
  const std::size_t B = h_f.rows();
  auto h = ad::add(h_f, ad::slice_rows(dec.positions, 0, 1));
  auto rel = ad::add(r, ad::slice_rows(dec.positions, 1, 2));
  // Stack rows as [CLS | h_0..h_{B-1} | r_0..r_{B-1}] and interleave per query.
  auto stacked = ad::concat({ad::reshape(dec.cls_token, {1, d}), h, rel}, 0);
  std::vector<std::size_t> layout, offsets{0}, cls_rows;
  for (std::size_t b = 0; b < B; ++b) {
    cls_rows.push_back(layout.size());
    layout.insert(layout.end(), {0, 1 + b, 1 + B + b});
    offsets.push_back(layout.size());
  }
  auto out = run_transformer(ad::gather_rows(stacked, layout), offsets, dec.layers, dec.shape.heads);
  return ad::gather_rows(out, cls_rows);
}

#define TSAM_INSTANTIATE(T)       \
  template struct DecoderParams<T>; \
  template ad::Tensor<T> decode_tail(const ad::Tensor<T>&, const ad::Tensor<T>&, const DecoderParams<T>&);
TSAM_INSTANTIATE(float)
TSAM_INSTANTIATE(double)
#undef TSAM_INSTANTIATE

}  // namespace tsam::model
