#pragma once

#include "mopd/nn/ops.hpp"

namespace mopd::nn {

// A (C, H*W) feature map carried through the tape together with its shape.
template <class S>
struct FeatMap {
  Var<S> x;
  int c = 0, h = 0, w = 0;
};

template <class S>
struct Linear {
  std::shared_ptr<Param<S>> w, b;

  Linear() = default;
  Linear(ParamStore<S>& store, const std::string& name, int in, int out, std::mt19937_64& rng) {
    w = store.add(name + ".w", xavier_uniform<S>(rng, out, in, in, out));
    b = store.add(name + ".b", MatX<S>::Zero(out, 1));
  }
  Var<S> operator()(Tape<S>& t, const Var<S>& x) const {
    return linear(t.param(*w), x, t.param(*b));
  }
};

template <class S>
struct Conv2dLayer {
  std::shared_ptr<Param<S>> w, b;
  int cin = 0, cout = 0, k = 3, stride = 1, pad = 1;

  Conv2dLayer() = default;
  Conv2dLayer(ParamStore<S>& store, const std::string& name, int cin_, int cout_, int k_,
              int stride_, int pad_, std::mt19937_64& rng)
      : cin(cin_), cout(cout_), k(k_), stride(stride_), pad(pad_) {
    double fan_in = double(cin_) * k_ * k_;
    w = store.add(name + ".w", randn<S>(rng, cout_, cin_ * k_ * k_, std::sqrt(2.0 / fan_in)));
    b = store.add(name + ".b", MatX<S>::Zero(cout_, 1));
  }
  FeatMap<S> operator()(Tape<S>& t, const FeatMap<S>& in) const {
    const int ho = (in.h + 2 * pad - k) / stride + 1;
    const int wo = (in.w + 2 * pad - k) / stride + 1;
    Var<S> y = conv2d(in.x, in.c, in.h, in.w, t.param(*w), t.param(*b), k, stride, pad);
    return {y, cout, ho, wo};
  }
};

template <class S>
struct GroupNormLayer {
  std::shared_ptr<Param<S>> gamma, beta;
  int groups = 8;

  GroupNormLayer() = default;
  GroupNormLayer(ParamStore<S>& store, const std::string& name, int channels) {
    groups = channels % 8 == 0 ? 8 : 1;
    gamma = store.add(name + ".g", MatX<S>::Ones(channels, 1));
    beta = store.add(name + ".b", MatX<S>::Zero(channels, 1));
  }
  FeatMap<S> operator()(Tape<S>& t, const FeatMap<S>& in) const {
    return {groupnorm(in.x, groups, t.param(*gamma), t.param(*beta)), in.c, in.h, in.w};
  }
};

// conv -> group norm -> gelu
template <class S>
struct ConvBlock {
  Conv2dLayer<S> conv;
  GroupNormLayer<S> norm;

  ConvBlock() = default;
  ConvBlock(ParamStore<S>& store, const std::string& name, int cin, int cout, int k, int stride,
            int pad, std::mt19937_64& rng)
      : conv(store, name + ".conv", cin, cout, k, stride, pad, rng),
        norm(store, name + ".gn", cout) {}
  FeatMap<S> operator()(Tape<S>& t, const FeatMap<S>& in) const {
    FeatMap<S> y = norm(t, conv(t, in));
    return {gelu(y.x), y.c, y.h, y.w};
  }
};

template <class S>
struct LayerNormLayer {
  std::shared_ptr<Param<S>> gamma, beta;

  LayerNormLayer() = default;
  LayerNormLayer(ParamStore<S>& store, const std::string& name, int dim) {
    gamma = store.add(name + ".g", MatX<S>::Ones(dim, 1));
    beta = store.add(name + ".b", MatX<S>::Zero(dim, 1));
  }
  Var<S> operator()(Tape<S>& t, const Var<S>& x) const {
    return layernorm_cols(x, t.param(*gamma), t.param(*beta));
  }
};

// Multi-head attention over column-token matrices: queries (d, Nq),
// keys/values (d, Nk). Positional terms are added to the content before the
// q/k projections; values stay content-only.
template <class S>
struct MultiHeadAttention {
  Linear<S> wq, wk, wv, wo;
  int dim = 0, heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<S>& store, const std::string& name, int dim_, int heads_,
                     int kdim, std::mt19937_64& rng)
      : wq(store, name + ".q", dim_, dim_, rng),
        wk(store, name + ".k", kdim, dim_, rng),
        wv(store, name + ".v", kdim, dim_, rng),
        wo(store, name + ".o", dim_, dim_, rng),
        dim(dim_),
        heads(heads_) {}

  // attn_out holds post-softmax weights per head when non-null (debug).
  Var<S> operator()(Tape<S>& t, const Var<S>& query, const Var<S>& key, const Var<S>& value,
                    const Var<S>& qpos, const Var<S>& kpos, const BoolArr* allow = nullptr,
                    std::vector<MatX<S>>* attn_out = nullptr) const {
    const int dh = dim / heads;
    Var<S> q = wq(t, qpos ? add(query, qpos) : query);
    Var<S> k = wk(t, kpos ? add(key, kpos) : key);
    Var<S> v = wv(t, value);
    const S inv_sqrt = S(1) / std::sqrt(S(dh));
    std::vector<Var<S>> outs;
    outs.reserve(size_t(heads));
    for (int hI = 0; hI < heads; ++hI) {
      Var<S> qh = rows(q, hI * dh, dh);
      Var<S> kh = rows(k, hI * dh, dh);
      Var<S> vh = rows(v, hI * dh, dh);
      Var<S> scores = scale(matmul_tn(qh, kh), inv_sqrt);  // (Nq, Nk)
      Var<S> attn = softmax_rows(scores, allow);
      if (attn_out) attn_out->push_back(attn.value());
      outs.push_back(matmul_nt(vh, attn));  // (dh, Nq)
    }
    return wo(t, concat_rows(outs));
  }
};

template <class S>
struct FeedForward {
  Linear<S> fc1, fc2;

  FeedForward() = default;
  FeedForward(ParamStore<S>& store, const std::string& name, int dim, int hidden,
              std::mt19937_64& rng)
      : fc1(store, name + ".fc1", dim, hidden, rng), fc2(store, name + ".fc2", hidden, dim, rng) {}
  Var<S> operator()(Tape<S>& t, const Var<S>& x) const { return fc2(t, gelu(fc1(t, x))); }
};

// 3-layer MLP head (gelu between layers, linear output).
template <class S>
struct Mlp3 {
  Linear<S> l1, l2, l3;

  Mlp3() = default;
  Mlp3(ParamStore<S>& store, const std::string& name, int in, int hidden, int out,
       std::mt19937_64& rng)
      : l1(store, name + ".l1", in, hidden, rng),
        l2(store, name + ".l2", hidden, hidden, rng),
        l3(store, name + ".l3", hidden, out, rng) {}
  Var<S> operator()(Tape<S>& t, const Var<S>& x) const {
    return l3(t, gelu(l2(t, gelu(l1(t, x)))));
  }
};

// DETR-style fixed 2D sinusoidal position embedding for an (h, w) grid,
// returned as (dim, h*w).
template <class S>
MatX<S> sine_position_embedding(int dim, int h, int w) {
  if (dim % 4 != 0) throw Error(Err::invalid_input, "position embedding dim must be 4k");
  const int quarter = dim / 4;
  const double temperature = 10000.0;
  MatX<S> pe(dim, Eigen::Index(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Eigen::Index col = Eigen::Index(y) * w + x;
      double ny = (y + 0.5) / h * 2.0 * M_PI;
      double nx = (x + 0.5) / w * 2.0 * M_PI;
      for (int i = 0; i < quarter; ++i) {
        double div = std::pow(temperature, double(2 * (i / 2)) / double(dim / 2));
        pe(2 * i, col) = S(std::sin(ny / div));
        pe(2 * i + 1, col) = S(std::cos(ny / div));
        pe(dim / 2 + 2 * i, col) = S(std::sin(nx / div));
        pe(dim / 2 + 2 * i + 1, col) = S(std::cos(nx / div));
      }
    }
  }
  return pe;
}

}  // namespace mopd::nn
