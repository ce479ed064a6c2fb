#pragma once

#include <cmath>
#include <memory>

#include "mopd/nn/tape.hpp"

namespace mopd::nn {

namespace detail {

template <class S>
inline void acc(Node<S>* p, const MatX<S>& g) {
  if (!p->needs_grad) return;
  p->ensure_grad();
  p->grad += g;
}

template <class S>
inline bool any_grad(std::initializer_list<const Var<S>*> vars) {
  for (auto* v : vars)
    if ((*v) && v->needs_grad()) return true;
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise / linear algebra

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  Node<S>*pa = a.node(), *pb = b.node();
  return a.tape()->make(a.value() + b.value(), detail::any_grad<S>({&a, &b}), [pa, pb](Node<S>& n) {
    detail::acc(pa, n.grad);
    detail::acc(pb, n.grad);
  });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  Node<S>*pa = a.node(), *pb = b.node();
  return a.tape()->make(a.value() - b.value(), detail::any_grad<S>({&a, &b}), [pa, pb](Node<S>& n) {
    detail::acc(pa, n.grad);
    detail::acc(pb, MatX<S>(-n.grad));
  });
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  Node<S>*pa = a.node(), *pb = b.node();
  MatX<S> va = a.value(), vb = b.value();
  return a.tape()->make(MatX<S>(va.cwiseProduct(vb)), detail::any_grad<S>({&a, &b}),
                        [pa, pb, va, vb](Node<S>& n) {
                          detail::acc(pa, MatX<S>(n.grad.cwiseProduct(vb)));
                          detail::acc(pb, MatX<S>(n.grad.cwiseProduct(va)));
                        });
}

template <class S>
Var<S> scale(const Var<S>& a, S k) {
  Node<S>* pa = a.node();
  return a.tape()->make(MatX<S>(a.value() * k), a.needs_grad(),
                        [pa, k](Node<S>& n) { detail::acc(pa, MatX<S>(n.grad * k)); });
}

// a + column vector b broadcast over a's columns
template <class S>
Var<S> add_colvec(const Var<S>& a, const Var<S>& b) {
  Node<S>*pa = a.node(), *pb = b.node();
  MatX<S> v = a.value();
  v.colwise() += VecX<S>(b.value().col(0));
  return a.tape()->make(std::move(v), detail::any_grad<S>({&a, &b}), [pa, pb](Node<S>& n) {
    detail::acc(pa, n.grad);
    detail::acc(pb, MatX<S>(n.grad.rowwise().sum()));
  });
}

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  Node<S>*pa = a.node(), *pb = b.node();
  MatX<S> va = a.value(), vb = b.value();
  return a.tape()->make(MatX<S>(va * vb), detail::any_grad<S>({&a, &b}),
                        [pa, pb, va, vb](Node<S>& n) {
                          detail::acc(pa, MatX<S>(n.grad * vb.transpose()));
                          detail::acc(pb, MatX<S>(va.transpose() * n.grad));
                        });
}

// a^T * b
template <class S>
Var<S> matmul_tn(const Var<S>& a, const Var<S>& b) {
  Node<S>*pa = a.node(), *pb = b.node();
  MatX<S> va = a.value(), vb = b.value();
  return a.tape()->make(MatX<S>(va.transpose() * vb), detail::any_grad<S>({&a, &b}),
                        [pa, pb, va, vb](Node<S>& n) {
                          detail::acc(pa, MatX<S>(vb * n.grad.transpose()));
                          detail::acc(pb, MatX<S>(va * n.grad));
                        });
}

// a * b^T
template <class S>
Var<S> matmul_nt(const Var<S>& a, const Var<S>& b) {
  Node<S>*pa = a.node(), *pb = b.node();
  MatX<S> va = a.value(), vb = b.value();
  return a.tape()->make(MatX<S>(va * vb.transpose()), detail::any_grad<S>({&a, &b}),
                        [pa, pb, va, vb](Node<S>& n) {
                          detail::acc(pa, MatX<S>(n.grad * vb));
                          detail::acc(pb, MatX<S>(n.grad.transpose() * va));
                        });
}

template <class S>
Var<S> linear(const Var<S>& w, const Var<S>& x, const Var<S>& b) {
  return add_colvec(matmul(w, x), b);
}

// ---------------------------------------------------------------------------
// activations

template <class S>
Var<S> gelu(const Var<S>& x) {
  Node<S>* px = x.node();
  MatX<S> vx = x.value();
  const S inv_sqrt2 = S(0.7071067811865475244);
  MatX<S> y = vx.unaryExpr([&](S v) { return S(0.5) * v * (S(1) + std::erf(v * inv_sqrt2)); });
  return x.tape()->make(std::move(y), x.needs_grad(), [px, vx, inv_sqrt2](Node<S>& n) {
    const S inv_sqrt2pi = S(0.3989422804014326779);
    MatX<S> d = vx.unaryExpr([&](S v) {
      S cdf = S(0.5) * (S(1) + std::erf(v * inv_sqrt2));
      S pdf = inv_sqrt2pi * std::exp(S(-0.5) * v * v);
      return cdf + v * pdf;
    });
    detail::acc(px, MatX<S>(n.grad.cwiseProduct(d)));
  });
}

template <class S>
Var<S> sigmoid(const Var<S>& x) {
  Node<S>* px = x.node();
  MatX<S> y = x.value().unaryExpr([](S v) {
    return v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
  });
  MatX<S> ycopy = y;
  return x.tape()->make(std::move(y), x.needs_grad(), [px, ycopy](Node<S>& n) {
    detail::acc(px, MatX<S>(n.grad.cwiseProduct(
                        (ycopy.array() * (S(1) - ycopy.array())).matrix())));
  });
}

// ---------------------------------------------------------------------------
// softmax / normalization

// Row-wise softmax with an optional boolean gate. Disallowed entries have
// exactly zero weight. A fully gated-out row falls back to the full row so
// attention never produces NaNs.
template <class S>
Var<S> softmax_rows(const Var<S>& x, const BoolArr* allow = nullptr) {
  Node<S>* px = x.node();
  const MatX<S>& vx = x.value();
  MatX<S> y(vx.rows(), vx.cols());
  for (Eigen::Index i = 0; i < vx.rows(); ++i) {
    bool any_allowed = true;
    if (allow) {
      any_allowed = false;
      for (Eigen::Index j = 0; j < vx.cols(); ++j)
        if ((*allow)(i, j)) { any_allowed = true; break; }
    }
    S mx = -std::numeric_limits<S>::infinity();
    for (Eigen::Index j = 0; j < vx.cols(); ++j) {
      bool ok = !allow || !any_allowed || (*allow)(i, j);
      if (ok) mx = std::max(mx, vx(i, j));
    }
    S sum = S(0);
    for (Eigen::Index j = 0; j < vx.cols(); ++j) {
      bool ok = !allow || !any_allowed || (*allow)(i, j);
      S e = ok ? std::exp(vx(i, j) - mx) : S(0);
      y(i, j) = e;
      sum += e;
    }
    y.row(i) /= sum;
  }
  MatX<S> ycopy = y;
  return x.tape()->make(std::move(y), x.needs_grad(), [px, ycopy](Node<S>& n) {
    MatX<S> dx(ycopy.rows(), ycopy.cols());
    for (Eigen::Index i = 0; i < ycopy.rows(); ++i) {
      S dot = n.grad.row(i).dot(ycopy.row(i));
      dx.row(i) = ycopy.row(i).cwiseProduct(n.grad.row(i).array().matrix() -
                                            MatX<S>::Constant(1, ycopy.cols(), dot));
    }
    detail::acc(px, dx);
  });
}

// Per-column layer norm with per-row affine parameters (d x 1 each).
template <class S>
Var<S> layernorm_cols(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, S eps = S(1e-5)) {
  Node<S>*px = x.node(), *pg = gamma.node(), *pb = beta.node();
  const MatX<S>& vx = x.value();
  const Eigen::Index d = vx.rows(), nc = vx.cols();
  MatX<S> xhat(d, nc);
  VecX<S> inv_sigma(nc);
  for (Eigen::Index j = 0; j < nc; ++j) {
    S mu = vx.col(j).mean();
    S var = (vx.col(j).array() - mu).square().mean();
    S is = S(1) / std::sqrt(var + eps);
    inv_sigma[j] = is;
    xhat.col(j) = (vx.col(j).array() - mu) * is;
  }
  VecX<S> g = gamma.value().col(0), b = beta.value().col(0);
  MatX<S> y = (xhat.array().colwise() * g.array()).colwise() + b.array();
  bool ng = detail::any_grad<S>({&x, &gamma, &beta});
  return x.tape()->make(std::move(y), ng, [px, pg, pb, xhat, inv_sigma, g, d](Node<S>& n) {
    MatX<S> t = n.grad.array().colwise() * g.array();  // dL/dxhat
    if (px->needs_grad) {
      MatX<S> dx(xhat.rows(), xhat.cols());
      for (Eigen::Index j = 0; j < xhat.cols(); ++j) {
        S mean_t = t.col(j).mean();
        S mean_tx = t.col(j).dot(xhat.col(j)) / S(d);
        dx.col(j) = inv_sigma[j] * (t.col(j).array() - mean_t - xhat.col(j).array() * mean_tx);
      }
      detail::acc(px, dx);
    }
    detail::acc(pg, MatX<S>(n.grad.cwiseProduct(xhat).rowwise().sum()));
    detail::acc(pb, MatX<S>(n.grad.rowwise().sum()));
  });
}

// Group norm over a (C, P) feature map: statistics per channel group across
// all pixels, per-channel affine.
template <class S>
Var<S> groupnorm(const Var<S>& x, int groups, const Var<S>& gamma, const Var<S>& beta,
                 S eps = S(1e-5)) {
  Node<S>*px = x.node(), *pg = gamma.node(), *pb = beta.node();
  const MatX<S>& vx = x.value();
  const Eigen::Index C = vx.rows(), P = vx.cols();
  if (C % groups != 0) throw Error(Err::invalid_input, "groupnorm: C % groups != 0");
  const Eigen::Index gc = C / groups;
  MatX<S> xhat(C, P);
  VecX<S> inv_sigma(groups);
  for (int gi = 0; gi < groups; ++gi) {
    auto blk = vx.middleRows(gi * gc, gc);
    S mu = blk.mean();
    S var = (blk.array() - mu).square().mean();
    S is = S(1) / std::sqrt(var + eps);
    inv_sigma[gi] = is;
    xhat.middleRows(gi * gc, gc) = (blk.array() - mu) * is;
  }
  VecX<S> g = gamma.value().col(0), b = beta.value().col(0);
  MatX<S> y = (xhat.array().colwise() * g.array()).colwise() + b.array();
  bool ng = detail::any_grad<S>({&x, &gamma, &beta});
  return x.tape()->make(std::move(y), ng,
                        [px, pg, pb, xhat, inv_sigma, g, groups, gc, P](Node<S>& n) {
                          MatX<S> t = n.grad.array().colwise() * g.array();
                          if (px->needs_grad) {
                            MatX<S> dx(xhat.rows(), xhat.cols());
                            const S m = S(gc) * S(P);
                            for (int gi = 0; gi < groups; ++gi) {
                              auto tb = t.middleRows(gi * gc, gc);
                              auto xb = xhat.middleRows(gi * gc, gc);
                              S mean_t = tb.sum() / m;
                              S mean_tx = tb.cwiseProduct(xb).sum() / m;
                              dx.middleRows(gi * gc, gc) =
                                  inv_sigma[gi] * (tb.array() - mean_t - xb.array() * mean_tx);
                            }
                            detail::acc(px, dx);
                          }
                          detail::acc(pg, MatX<S>(n.grad.cwiseProduct(xhat).rowwise().sum()));
                          detail::acc(pb, MatX<S>(n.grad.rowwise().sum()));
                        });
}

// Columns scaled to unit Euclidean norm.
template <class S>
Var<S> normalize_cols(const Var<S>& x, S eps = S(1e-12)) {
  Node<S>* px = x.node();
  const MatX<S>& vx = x.value();
  MatX<S> y(vx.rows(), vx.cols());
  VecX<S> norms(vx.cols());
  for (Eigen::Index j = 0; j < vx.cols(); ++j) {
    S n2 = vx.col(j).norm();
    norms[j] = std::max(n2, eps);
    y.col(j) = vx.col(j) / norms[j];
  }
  MatX<S> ycopy = y;
  return x.tape()->make(std::move(y), x.needs_grad(), [px, ycopy, norms](Node<S>& n) {
    MatX<S> dx(ycopy.rows(), ycopy.cols());
    for (Eigen::Index j = 0; j < ycopy.cols(); ++j) {
      S dot = n.grad.col(j).dot(ycopy.col(j));
      dx.col(j) = (n.grad.col(j) - ycopy.col(j) * dot) / norms[j];
    }
    detail::acc(px, dx);
  });
}

// ---------------------------------------------------------------------------
// shape ops

template <class S>
Var<S> rows(const Var<S>& x, Eigen::Index r0, Eigen::Index n) {
  Node<S>* px = x.node();
  return x.tape()->make(MatX<S>(x.value().middleRows(r0, n)), x.needs_grad(),
                        [px, r0, n](Node<S>& nd) {
                          if (!px->needs_grad) return;
                          px->ensure_grad();
                          px->grad.middleRows(r0, n) += nd.grad;
                        });
}

template <class S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  Eigen::Index total = 0;
  const Eigen::Index cols = parts.front().cols();
  bool ng = false;
  for (auto& p : parts) {
    total += p.rows();
    ng = ng || p.needs_grad();
  }
  MatX<S> v(total, cols);
  Eigen::Index r = 0;
  std::vector<std::pair<Node<S>*, Eigen::Index>> spans;
  for (auto& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    spans.push_back({p.node(), r});
    r += p.rows();
  }
  return parts.front().tape()->make(std::move(v), ng, [spans](Node<S>& n) {
    for (auto& [node, r0] : spans)
      detail::acc(node, MatX<S>(n.grad.middleRows(r0, node->value.rows())));
  });
}

// Gather columns by index; duplicates accumulate on backward.
template <class S>
Var<S> cols_subset(const Var<S>& x, const std::vector<int>& idx) {
  Node<S>* px = x.node();
  MatX<S> v(x.rows(), Eigen::Index(idx.size()));
  for (size_t j = 0; j < idx.size(); ++j) v.col(Eigen::Index(j)) = x.value().col(idx[j]);
  return x.tape()->make(std::move(v), x.needs_grad(), [px, idx](Node<S>& n) {
    if (!px->needs_grad) return;
    px->ensure_grad();
    for (size_t j = 0; j < idx.size(); ++j) px->grad.col(idx[j]) += n.grad.col(Eigen::Index(j));
  });
}

template <class S>
Var<S> rows_subset(const Var<S>& x, const std::vector<int>& idx) {
  Node<S>* px = x.node();
  MatX<S> v(Eigen::Index(idx.size()), x.cols());
  for (size_t i = 0; i < idx.size(); ++i) v.row(Eigen::Index(i)) = x.value().row(idx[i]);
  return x.tape()->make(std::move(v), x.needs_grad(), [px, idx](Node<S>& n) {
    if (!px->needs_grad) return;
    px->ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i) px->grad.row(idx[i]) += n.grad.row(Eigen::Index(i));
  });
}

// ---------------------------------------------------------------------------
// convolution / resampling on (C, H*W) feature maps, row-major pixels

template <class S>
MatX<S> im2col(const MatX<S>& x, int c, int h, int w, int k, int stride, int pad, int ho, int wo) {
  MatX<S> col = MatX<S>::Zero(Eigen::Index(c) * k * k, Eigen::Index(ho) * wo);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      Eigen::Index l = Eigen::Index(oy) * wo + ox;
      for (int ky = 0; ky < k; ++ky) {
        int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= w) continue;
          col.block(Eigen::Index(ky * k + kx) * c, l, c, 1) = x.col(Eigen::Index(iy) * w + ix);
        }
      }
    }
  }
  return col;
}

template <class S>
void col2im_add(MatX<S>& dx, const MatX<S>& dcol, int c, int h, int w, int k, int stride, int pad,
                int ho, int wo) {
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      Eigen::Index l = Eigen::Index(oy) * wo + ox;
      for (int ky = 0; ky < k; ++ky) {
        int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= w) continue;
          dx.col(Eigen::Index(iy) * w + ix) += dcol.block(Eigen::Index(ky * k + kx) * c, l, c, 1);
        }
      }
    }
  }
}

// weight layout: (Cout, Cin*k*k) with the k*k patch outer, channel inner,
// matching im2col above.
template <class S>
Var<S> conv2d(const Var<S>& x, int c, int h, int w, const Var<S>& weight, const Var<S>& bias,
              int k, int stride, int pad) {
  if (x.rows() != c || x.cols() != Eigen::Index(h) * w)
    throw Error(Err::invalid_input, "conv2d: input shape mismatch");
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (w + 2 * pad - k) / stride + 1;
  auto col = std::make_shared<MatX<S>>(im2col(x.value(), c, h, w, k, stride, pad, ho, wo));
  MatX<S> y = weight.value() * (*col);
  y.colwise() += VecX<S>(bias.value().col(0));
  Node<S>*px = x.node(), *pw = weight.node(), *pb = bias.node();
  MatX<S> wv = weight.value();
  bool ng = detail::any_grad<S>({&x, &weight, &bias});
  return x.tape()->make(std::move(y), ng,
                        [px, pw, pb, col, wv, c, h, w, k, stride, pad, ho, wo](Node<S>& n) {
                          detail::acc(pw, MatX<S>(n.grad * col->transpose()));
                          detail::acc(pb, MatX<S>(n.grad.rowwise().sum()));
                          if (px->needs_grad) {
                            MatX<S> dcol = wv.transpose() * n.grad;
                            px->ensure_grad();
                            col2im_add(px->grad, dcol, c, h, w, k, stride, pad, ho, wo);
                          }
                        });
}

template <class S>
Var<S> upsample2x(const Var<S>& x, int c, int h, int w) {
  Node<S>* px = x.node();
  const MatX<S>& vx = x.value();
  MatX<S> y(c, Eigen::Index(2 * h) * (2 * w));
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < w; ++xx) {
      auto src = vx.col(Eigen::Index(yy) * w + xx);
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
          y.col(Eigen::Index(2 * yy + dy) * (2 * w) + 2 * xx + dx) = src;
    }
  return x.tape()->make(std::move(y), x.needs_grad(), [px, c, h, w](Node<S>& n) {
    if (!px->needs_grad) return;
    px->ensure_grad();
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx) {
        auto dst = px->grad.col(Eigen::Index(yy) * w + xx);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            dst += n.grad.col(Eigen::Index(2 * yy + dy) * (2 * w) + 2 * xx + dx);
      }
  });
}

// ---------------------------------------------------------------------------
// reductions and scalar combinators

template <class S>
Var<S> sum_all(const Var<S>& x) {
  Node<S>* px = x.node();
  MatX<S> v(1, 1);
  v(0, 0) = x.value().sum();
  Eigen::Index r = x.rows(), c = x.cols();
  return x.tape()->make(std::move(v), x.needs_grad(), [px, r, c](Node<S>& n) {
    detail::acc(px, MatX<S>(MatX<S>::Constant(r, c, n.grad(0, 0))));
  });
}

template <class S>
Var<S> mean_all(const Var<S>& x) {
  return scale(sum_all(x), S(1) / S(x.value().size()));
}

template <class S>
Var<S> lincomb(const std::vector<std::pair<S, Var<S>>>& terms) {
  MatX<S> v = MatX<S>::Zero(terms.front().second.rows(), terms.front().second.cols());
  bool ng = false;
  std::vector<std::pair<S, Node<S>*>> ps;
  for (auto& [k, t] : terms) {
    v += k * t.value();
    ng = ng || t.needs_grad();
    ps.push_back({k, t.node()});
  }
  return terms.front().second.tape()->make(std::move(v), ng, [ps](Node<S>& n) {
    for (auto& [k, p] : ps) detail::acc(p, MatX<S>(k * n.grad));
  });
}

// ---------------------------------------------------------------------------
// losses

// Mean binary cross-entropy with logits over all entries. Targets may be
// soft. Numerically stable split by sign.
template <class S>
Var<S> bce_with_logits_mean(const Var<S>& logits, const MatX<S>& targets) {
  Node<S>* px = logits.node();
  const MatX<S>& x = logits.value();
  S total = S(0);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      S v = x(i, j), t = targets(i, j);
      total += std::max(v, S(0)) - v * t + std::log1p(std::exp(-std::abs(v)));
    }
  const S inv_n = S(1) / S(x.size());
  MatX<S> out(1, 1);
  out(0, 0) = total * inv_n;
  MatX<S> xc = x;
  return logits.tape()->make(std::move(out), logits.needs_grad(),
                             [px, xc, targets, inv_n](Node<S>& n) {
                               MatX<S> sig = xc.unaryExpr([](S v) {
                                 return v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                                                  : std::exp(v) / (S(1) + std::exp(v));
                               });
                               detail::acc(px, MatX<S>((sig - targets) * (inv_n * n.grad(0, 0))));
                             });
}

// Soft dice loss per row, averaged: 1 - 2*sum(p*t)/(sum(p)+sum(t)).
template <class S>
Var<S> dice_rows_mean(const Var<S>& logits, const MatX<S>& targets) {
  Node<S>* px = logits.node();
  const MatX<S>& x = logits.value();
  const Eigen::Index R = x.rows();
  MatX<S> p = x.unaryExpr([](S v) {
    return v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
  });
  VecX<S> num(R), den(R);
  S total = S(0);
  for (Eigen::Index i = 0; i < R; ++i) {
    num[i] = S(2) * p.row(i).dot(targets.row(i));
    den[i] = std::max(p.row(i).sum() + targets.row(i).sum(), S(1e-12));
    total += S(1) - num[i] / den[i];
  }
  MatX<S> out(1, 1);
  out(0, 0) = total / S(R);
  return logits.tape()->make(std::move(out), logits.needs_grad(),
                             [px, p, targets, num, den, R](Node<S>& n) {
                               MatX<S> dx(p.rows(), p.cols());
                               for (Eigen::Index i = 0; i < R; ++i) {
                                 // d(1 - num/den)/dp = (num/den^2) - 2*t/den
                                 auto dp = (num[i] / (den[i] * den[i])) -
                                           (S(2) / den[i]) * targets.row(i).array();
                                 dx.row(i) = (dp * p.row(i).array() * (S(1) - p.row(i).array()))
                                                 .matrix();
                               }
                               detail::acc(px, MatX<S>(dx * (n.grad(0, 0) / S(R))));
                             });
}

// Weighted mean cross-entropy over columns of (K, N) logits.
template <class S>
Var<S> cross_entropy_cols(const Var<S>& logits, const std::vector<int>& targets,
                          const std::vector<S>& weights) {
  Node<S>* px = logits.node();
  const MatX<S>& x = logits.value();
  const Eigen::Index K = x.rows(), N = x.cols();
  MatX<S> soft(K, N);
  S wsum = S(0), total = S(0);
  for (Eigen::Index j = 0; j < N; ++j) {
    S mx = x.col(j).maxCoeff();
    VecX<S> e = (x.col(j).array() - mx).exp();
    S se = e.sum();
    soft.col(j) = e / se;
    S logp = x(targets[j], j) - mx - std::log(se);
    total += -weights[j] * logp;
    wsum += weights[j];
  }
  MatX<S> out(1, 1);
  out(0, 0) = total / wsum;
  return logits.tape()->make(std::move(out), logits.needs_grad(),
                             [px, soft, targets, weights, wsum, N](Node<S>& n) {
                               MatX<S> dx = soft;
                               for (Eigen::Index j = 0; j < N; ++j) {
                                 dx(targets[j], j) -= S(1);
                                 dx.col(j) *= weights[j] / wsum;
                               }
                               detail::acc(px, MatX<S>(dx * n.grad(0, 0)));
                             });
}

// Elementwise smooth L1 (transition at beta), mean over entries.
template <class S>
Var<S> smooth_l1_mean(const Var<S>& pred, const MatX<S>& target, S beta = S(1)) {
  Node<S>* px = pred.node();
  MatX<S> d = pred.value() - target;
  S total = S(0);
  for (Eigen::Index j = 0; j < d.cols(); ++j)
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      S a = std::abs(d(i, j));
      total += a < beta ? S(0.5) * a * a / beta : a - S(0.5) * beta;
    }
  const S inv_n = S(1) / S(d.size());
  MatX<S> out(1, 1);
  out(0, 0) = total * inv_n;
  return pred.tape()->make(std::move(out), pred.needs_grad(), [px, d, beta, inv_n](Node<S>& n) {
    MatX<S> g = d.unaryExpr([beta](S v) {
      return std::abs(v) < beta ? v / beta : (v > S(0) ? S(1) : S(-1));
    });
    detail::acc(px, MatX<S>(g * (inv_n * n.grad(0, 0))));
  });
}

// ---------------------------------------------------------------------------
// quaternion rotation

// Rotates camera-frame vectors v (3, N) by raw quaternions q (4, N) in
// (w, x, y, z) order. Quaternions are normalized internally.
template <class S>
Var<S> rotate_by_quat(const Var<S>& q_raw, const Var<S>& v) {
  Node<S>*pq = q_raw.node(), *pv = v.node();
  const MatX<S>& qm = q_raw.value();
  const MatX<S>& vm = v.value();
  const Eigen::Index N = qm.cols();
  MatX<S> qn(4, N);
  VecX<S> norms(N);
  MatX<S> y(3, N);
  for (Eigen::Index j = 0; j < N; ++j) {
    S nrm = std::max(qm.col(j).norm(), S(1e-12));
    norms[j] = nrm;
    qn.col(j) = qm.col(j) / nrm;
    const S w = qn(0, j);
    Eigen::Matrix<S, 3, 1> u = qn.col(j).template segment<3>(1);
    Eigen::Matrix<S, 3, 1> vv = vm.col(j);
    Eigen::Matrix<S, 3, 1> uv = u.cross(vv);
    y.col(j) = vv + S(2) * w * uv + S(2) * u.cross(uv);
  }
  bool ng = detail::any_grad<S>({&q_raw, &v});
  MatX<S> vmc = vm;
  return q_raw.tape()->make(std::move(y), ng, [pq, pv, qn, norms, vmc, N](Node<S>& n) {
    MatX<S> dq = MatX<S>::Zero(4, N);
    MatX<S> dv = MatX<S>::Zero(3, N);
    for (Eigen::Index j = 0; j < N; ++j) {
      const S w = qn(0, j);
      Eigen::Matrix<S, 3, 1> u = qn.col(j).template segment<3>(1);
      Eigen::Matrix<S, 3, 1> vv = vmc.col(j);
      Eigen::Matrix<S, 3, 1> g = n.grad.col(j);
      Eigen::Matrix<S, 3, 3> ux, vx;
      ux << S(0), -u.z(), u.y(), u.z(), S(0), -u.x(), -u.y(), u.x(), S(0);
      vx << S(0), -vv.z(), vv.y(), vv.z(), S(0), -vv.x(), -vv.y(), vv.x(), S(0);
      Eigen::Matrix<S, 3, 3> R =
          Eigen::Matrix<S, 3, 3>::Identity() + S(2) * w * ux + S(2) * ux * ux;
      if (pv->needs_grad) dv.col(j) = R.transpose() * g;
      if (pq->needs_grad) {
        Eigen::Matrix<S, 4, 1> dqn;
        dqn[0] = S(2) * (u.cross(vv)).dot(g);
        Eigen::Matrix<S, 3, 3> Ju = -S(2) * w * vx +
                                     S(2) * (u.dot(vv) * Eigen::Matrix<S, 3, 3>::Identity() +
                                             u * vv.transpose() - S(2) * vv * u.transpose());
        dqn.template segment<3>(1) = Ju.transpose() * g;
        // through normalization
        Eigen::Matrix<S, 4, 1> qj = qn.col(j);
        dq.col(j) = (dqn - qj * qj.dot(dqn)) / norms[j];
      }
    }
    detail::acc(pq, dq);
    detail::acc(pv, dv);
  });
}

}  // namespace mopd::nn
