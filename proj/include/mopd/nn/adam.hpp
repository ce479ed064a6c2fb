#pragma once

#include "mopd/nn/tape.hpp"

namespace mopd::nn {

// AdamW with global gradient-norm clipping.
template <class S>
class Adam {
 public:
  struct Config {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    double clip_norm = 1.0;  // <= 0 disables clipping
  };

  explicit Adam(ParamStore<S>& store, Config cfg = {}) : store_(&store), cfg_(cfg) {
    for (auto& p : store.params) {
      m_.push_back(MatX<S>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(MatX<S>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    ++t_;
    double norm2 = 0.0;
    for (auto& p : store_->params) norm2 += double(p->grad.squaredNorm());
    double clip = 1.0;
    if (cfg_.clip_norm > 0.0) {
      double norm = std::sqrt(norm2);
      if (norm > cfg_.clip_norm) clip = cfg_.clip_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (size_t i = 0; i < store_->params.size(); ++i) {
      auto& p = *store_->params[i];
      MatX<S> g = p.grad * S(clip);
      m_[i] = S(cfg_.beta1) * m_[i] + S(1.0 - cfg_.beta1) * g;
      v_[i] = (S(cfg_.beta2) * v_[i].array() + S(1.0 - cfg_.beta2) * g.array().square()).matrix();
      auto mhat = m_[i].array() / S(bc1);
      auto vhat = v_[i].array() / S(bc2);
      p.value.array() -= S(cfg_.lr) * (mhat / (vhat.sqrt() + S(cfg_.eps)) +
                                       S(cfg_.weight_decay) * p.value.array());
    }
  }

  uint64_t steps_taken() const { return t_; }
  std::vector<MatX<S>>& moment1() { return m_; }
  std::vector<MatX<S>>& moment2() { return v_; }
  void set_steps_taken(uint64_t t) { t_ = t; }
  const Config& config() const { return cfg_; }

 private:
  ParamStore<S>* store_;
  Config cfg_;
  uint64_t t_ = 0;
  std::vector<MatX<S>> m_, v_;
};

}  // namespace mopd::nn
