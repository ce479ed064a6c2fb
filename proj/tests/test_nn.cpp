#include <doctest.h>

#include <functional>
#include <random>

#include "mopd/nn/adam.hpp"
#include "mopd/nn/checkpoint.hpp"
#include "mopd/nn/modules.hpp"
#include "mopd/nn/ops.hpp"

using namespace mopd;
using namespace mopd::nn;

namespace {

using Mat = MatX<double>;

// Evaluates `build` as a scalar function of the store's params and compares
// analytic gradients against central finite differences.
void gradcheck(ParamStore<double>& store, const std::function<Var<double>(Tape<double>&)>& build,
               std::mt19937_64& rng, double tol = 1e-6, int probes_per_param = 5) {
  store.zero_grad();
  double f0;
  {
    Tape<double> tape;
    Var<double> loss = build(tape);
    REQUIRE(loss.rows() == 1);
    REQUIRE(loss.cols() == 1);
    f0 = loss.value()(0, 0);
    tape.backward(loss);
    tape.accumulate_param_grads();
  }
  CHECK(std::isfinite(f0));
  const double eps = 1e-6;
  for (auto& p : store.params) {
    std::uniform_int_distribution<Eigen::Index> pick(0, p->value.size() - 1);
    for (int t = 0; t < probes_per_param; ++t) {
      Eigen::Index idx = pick(rng);
      double orig = p->value.data()[idx];
      double h = eps * std::max(1.0, std::abs(orig));
      p->value.data()[idx] = orig + h;
      double fp;
      {
        Tape<double> tape;
        fp = build(tape).value()(0, 0);
      }
      p->value.data()[idx] = orig - h;
      double fm;
      {
        Tape<double> tape;
        fm = build(tape).value()(0, 0);
      }
      p->value.data()[idx] = orig;
      double fd = (fp - fm) / (2 * h);
      double an = p->grad.data()[idx];
      double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      INFO("param ", p->name, " idx ", idx, " analytic ", an, " fd ", fd);
      bool ok = std::abs(fd - an) / denom < tol || std::abs(fd - an) < 1e-7;
      CHECK(ok);
    }
  }
}

Mat random_mat(std::mt19937_64& rng, int r, int c, double scale = 1.0) {
  return randn<double>(rng, r, c, scale);
}

}  // namespace

TEST_CASE("gradcheck: elementwise and matmul family") {
  std::mt19937_64 rng(1);
  ParamStore<double> store;
  auto a = store.add("a", random_mat(rng, 4, 5));
  auto b = store.add("b", random_mat(rng, 4, 5));
  auto w = store.add("w", random_mat(rng, 3, 4));

  gradcheck(store, [&](Tape<double>& t) {
    Var<double> va = t.param(*a), vb = t.param(*b), vw = t.param(*w);
    Var<double> x = add(mul(va, vb), scale(sub(va, vb), 0.7));
    Var<double> y = matmul(vw, x);                       // (3,5)
    Var<double> z = matmul_tn(y, y);                     // (5,5)
    Var<double> u = matmul_nt(z, z);                     // (5,5)
    return mean_all(u);
  }, rng, 1e-5);
}

TEST_CASE("gradcheck: activations and softmax") {
  std::mt19937_64 rng(2);
  ParamStore<double> store;
  auto a = store.add("a", random_mat(rng, 5, 6));

  gradcheck(store, [&](Tape<double>& t) {
    Var<double> v = t.param(*a);
    Var<double> g = gelu(v);
    Var<double> s = sigmoid(scale(v, 0.5));
    Var<double> sm = softmax_rows(add(g, s));
    return mean_all(mul(sm, sm));
  }, rng, 1e-5);
}

TEST_CASE("gradcheck: masked softmax has zero weight outside the gate") {
  std::mt19937_64 rng(3);
  ParamStore<double> store;
  auto a = store.add("a", random_mat(rng, 4, 7));
  BoolArr allow(4, 7);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 7; ++j) allow(i, j) = coin(rng);
  allow.row(2).setConstant(false);  // fallback row attends everywhere

  {
    Tape<double> t;
    Var<double> sm = softmax_rows(t.param(*a), &allow);
    for (int i = 0; i < 4; ++i) {
      double rowsum = sm.value().row(i).sum();
      CHECK(rowsum == doctest::Approx(1.0).epsilon(1e-12));
      if (i == 2) continue;
      for (int j = 0; j < 7; ++j)
        if (!allow(i, j)) CHECK(sm.value()(i, j) == 0.0);
    }
  }
  Mat weights = random_mat(rng, 4, 7);
  gradcheck(store, [&](Tape<double>& t) {
    return mean_all(mul(softmax_rows(t.param(*a), &allow), t.constant(weights)));
  }, rng, 1e-5, 3);
}

TEST_CASE("gradcheck: layernorm and groupnorm") {
  std::mt19937_64 rng(4);
  ParamStore<double> store;
  auto x = store.add("x", random_mat(rng, 8, 5));
  auto g = store.add("g", Mat(Mat::Ones(8, 1) + 0.1 * random_mat(rng, 8, 1)));
  auto bt = store.add("bt", random_mat(rng, 8, 1, 0.2));

  gradcheck(store, [&](Tape<double>& t) {
    Var<double> ln = layernorm_cols(t.param(*x), t.param(*g), t.param(*bt));
    Var<double> gn = groupnorm(ln, 4, t.param(*g), t.param(*bt));
    return mean_all(mul(gn, gn));
  }, rng, 1e-5);
}

TEST_CASE("gradcheck: conv2d and upsample") {
  std::mt19937_64 rng(5);
  ParamStore<double> store;
  const int c = 3, h = 6, w = 6, cout = 4;
  auto x = store.add("x", random_mat(rng, c, h * w));
  auto wt = store.add("w", random_mat(rng, cout, c * 9, 0.4));
  auto bs = store.add("b", random_mat(rng, cout, 1, 0.1));

  gradcheck(store, [&](Tape<double>& t) {
    Var<double> y = conv2d(t.param(*x), c, h, w, t.param(*wt), t.param(*bs), 3, 2, 1);  // (4, 3*3)
    Var<double> up = upsample2x(y, cout, 3, 3);
    return mean_all(mul(up, up));
  }, rng, 1e-5);
}

TEST_CASE("conv2d matches a direct dense evaluation") {
  std::mt19937_64 rng(6);
  const int c = 2, h = 5, w = 4, cout = 3, k = 3, stride = 1, pad = 1;
  Mat x = random_mat(rng, c, h * w);
  Mat wt = random_mat(rng, cout, c * k * k);
  Mat b = random_mat(rng, cout, 1);
  Tape<double> t;
  Var<double> y = conv2d(t.constant(x), c, h, w, t.constant(wt), t.constant(b), k, stride, pad);
  for (int oy = 0; oy < h; ++oy)
    for (int ox = 0; ox < w; ++ox)
      for (int co = 0; co < cout; ++co) {
        double acc = b(co, 0);
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            int iy = oy - pad + ky, ix = ox - pad + kx;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            for (int ci = 0; ci < c; ++ci)
              acc += wt(co, (ky * k + kx) * c + ci) * x(ci, iy * w + ix);
          }
        CHECK(y.value()(co, oy * w + ox) == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("gradcheck: slicing, concat and subsets") {
  std::mt19937_64 rng(7);
  ParamStore<double> store;
  auto x = store.add("x", random_mat(rng, 6, 8));

  gradcheck(store, [&](Tape<double>& t) {
    Var<double> v = t.param(*x);
    Var<double> top = rows(v, 0, 3);
    Var<double> bottom = rows(v, 3, 3);
    Var<double> cat = concat_rows(std::vector<Var<double>>{bottom, top});
    Var<double> picked = cols_subset(cat, {1, 3, 3, 7});
    Var<double> rsub = rows_subset(picked, {0, 5, 2});
    return mean_all(mul(rsub, rsub));
  }, rng, 1e-5);
}

TEST_CASE("gradcheck: loss primitives") {
  std::mt19937_64 rng(8);
  ParamStore<double> store;
  auto logits = store.add("logits", random_mat(rng, 4, 10));
  Mat targets = (random_mat(rng, 4, 10).array() > 0.0).cast<double>();

  gradcheck(store, [&](Tape<double>& t) {
    return bce_with_logits_mean(t.param(*logits), targets);
  }, rng, 1e-5);

  gradcheck(store, [&](Tape<double>& t) {
    return dice_rows_mean(t.param(*logits), targets);
  }, rng, 1e-5);

  gradcheck(store, [&](Tape<double>& t) {
    return smooth_l1_mean(t.param(*logits), Mat(targets.array() * 2.2 - 0.3), 1.0);
  }, rng, 1e-4);

  std::vector<int> cls = {0, 2, 1, 3, 0, 1, 2, 3, 0, 1};
  std::vector<double> wts = {1, 1, 0.1, 1, 0.1, 1, 1, 0.1, 1, 1};
  gradcheck(store, [&](Tape<double>& t) {
    return cross_entropy_cols(t.param(*logits), cls, wts);
  }, rng, 1e-5);
}

TEST_CASE("gradcheck: normalize and quaternion rotation") {
  std::mt19937_64 rng(9);
  ParamStore<double> store;
  auto q = store.add("q", random_mat(rng, 4, 6));
  auto v = store.add("v", random_mat(rng, 3, 6));

  Mat target = random_mat(rng, 3, 6);
  gradcheck(store, [&](Tape<double>& t) {
    Var<double> rotated = rotate_by_quat(t.param(*q), normalize_cols(t.param(*v)));
    return smooth_l1_mean(rotated, target, 1.0);
  }, rng, 1e-5);
}

TEST_CASE("rotate_by_quat matches Eigen quaternion rotation") {
  std::mt19937_64 rng(10);
  Mat q = random_mat(rng, 4, 5), v = random_mat(rng, 3, 5);
  Tape<double> t;
  Var<double> out = rotate_by_quat(t.constant(q), t.constant(v));
  for (int j = 0; j < 5; ++j) {
    Quat eq(q(0, j), q(1, j), q(2, j), q(3, j));
    eq.normalize();
    Vec3 expect = eq * Vec3(v(0, j), v(1, j), v(2, j));
    CHECK((out.value().col(j) - expect).norm() < 1e-12);
  }
}

TEST_CASE("gradcheck: multi-head attention module") {
  std::mt19937_64 rng(11);
  ParamStore<double> store;
  MultiHeadAttention<double> mha(store, "mha", 8, 2, 6, rng);
  auto qx = store.add("qx", random_mat(rng, 8, 3));
  auto kx = store.add("kx", random_mat(rng, 6, 9));
  Mat qpos = random_mat(rng, 8, 3), kpos = random_mat(rng, 6, 9);
  BoolArr allow(3, 9);
  allow.setConstant(true);
  allow(0, 4) = allow(1, 2) = allow(1, 3) = false;

  gradcheck(store, [&](Tape<double>& t) {
    Var<double> out = mha(t, t.param(*qx), t.param(*kx), t.param(*kx), t.constant(qpos),
                          t.constant(kpos), &allow);
    return mean_all(mul(out, out));
  }, rng, 1e-5, 3);
}

TEST_CASE("single-key attention returns the value projection") {
  std::mt19937_64 rng(12);
  ParamStore<double> store;
  MultiHeadAttention<double> mha(store, "mha", 8, 2, 8, rng);
  Mat q = random_mat(rng, 8, 1), k = random_mat(rng, 8, 1);
  Tape<double> t;
  Var<double> out = mha(t, t.constant(q), t.constant(k), t.constant(k), Var<double>{},
                        Var<double>{});
  // softmax over one element is 1, so out = Wo * Wv * k + bias terms
  Mat expect = mha.wo.w->value * (mha.wv.w->value * k + mha.wv.b->value) + mha.wo.b->value;
  CHECK((out.value() - expect).norm() < 1e-12);
}

TEST_CASE("adam reduces a convex objective") {
  std::mt19937_64 rng(13);
  ParamStore<double> store;
  auto x = store.add("x", random_mat(rng, 4, 1));
  Mat target = random_mat(rng, 4, 1);
  Adam<double>::Config cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.0;
  Adam<double> opt(store, cfg);
  double first = -1, last = -1;
  for (int step = 0; step < 200; ++step) {
    store.zero_grad();
    Tape<double> t;
    Var<double> loss = smooth_l1_mean(t.param(*x), target, 1.0);
    if (step == 0) first = loss.value()(0, 0);
    last = loss.value()(0, 0);
    t.backward(loss);
    t.accumulate_param_grads();
    opt.step();
  }
  CHECK(last < 0.05 * first);
}

TEST_CASE("checkpoint round-trip preserves params and optimizer state") {
  std::mt19937_64 rng(14);
  ParamStore<double> store;
  store.add("w1", random_mat(rng, 3, 4));
  store.add("w2", random_mat(rng, 2, 2));
  Adam<double> opt(store);
  opt.moment1()[0].setConstant(0.25);
  opt.set_steps_taken(42);
  save_checkpoint("/tmp/mopd_test.ckpt", store, "{\"cfg\":1}", &opt, 1234);

  ParamStore<double> other;
  other.add("w1", Mat(Mat::Zero(3, 4)));
  other.add("w2", Mat(Mat::Zero(2, 2)));
  Adam<double> opt2(other);
  auto info = load_checkpoint("/tmp/mopd_test.ckpt", other, "{\"cfg\":1}", false, &opt2);
  CHECK(info.train_step == 1234);
  CHECK(opt2.steps_taken() == 42);
  // float32 storage: compare after the same cast
  for (size_t i = 0; i < store.params.size(); ++i) {
    Mat expect = store.params[i]->value.cast<float>().cast<double>();
    CHECK((other.params[i]->value - expect).norm() == 0.0);
  }
  CHECK((opt2.moment1()[0].array() == 0.25).all());

  CHECK_THROWS_AS(load_checkpoint("/tmp/mopd_test.ckpt", other, "{\"cfg\":2}", false),
                  Error);
  CHECK_NOTHROW(load_checkpoint("/tmp/mopd_test.ckpt", other, "{\"cfg\":2}", true));
}

TEST_CASE("tape param caching shares one node per param") {
  std::mt19937_64 rng(15);
  ParamStore<double> store;
  auto w = store.add("w", random_mat(rng, 2, 2));
  Tape<double> t;
  Var<double> a = t.param(*w), b = t.param(*w);
  CHECK(a.node() == b.node());
  Var<double> y = mean_all(mul(a, b));
  t.backward(y);
  t.accumulate_param_grads();
  // d/dw mean(w*w) = 2w / 4
  Mat expect = 2.0 * w->value / 4.0;
  CHECK((w->grad - expect).norm() < 1e-12);
}
