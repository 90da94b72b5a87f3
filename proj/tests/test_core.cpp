#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "ocf/core/adam.hpp"
#include "ocf/core/autodiff.hpp"
#include "ocf/core/checkpoint.hpp"
#include "ocf/core/image_io.hpp"
#include "ocf/core/nn.hpp"
#include "ocf/core/rng.hpp"

using namespace ocf;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(s));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Central finite difference of a scalar-graph builder w.r.t. one entry of a
// leaf tensor.
template <typename BuildFn>
double fd_grad(BuildFn&& build, Tensor& leaf, int64_t idx, double h = 1e-6) {
  double orig = leaf[idx];
  leaf[idx] = orig + h;
  double up = build();
  leaf[idx] = orig - h;
  double dn = build();
  leaf[idx] = orig;
  return (up - dn) / (2.0 * h);
}

}  // namespace

TEST_CASE("rng determinism and round trip") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.uniform() == b.uniform());
  std::string st = a.state();
  double next = a.normal();
  Rng c(0);
  c.set_state(st);
  REQUIRE(c.normal() == next);
}

TEST_CASE("rng normal moments") {
  Rng rng(7);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  REQUIRE(std::fabs(sum / n) < 0.01);
  REQUIRE(std::fabs(sq / n - 1.0) < 0.02);
}

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(1);
  Tensor ta = random_tensor({2, 3, 4}, rng);
  Tensor tb = random_tensor({2, 3, 4}, rng, 0.5, 1.5);
  auto a = parameter(ta);
  auto b = parameter(tb);

  auto build = [&]() {
    auto x = mul(add(a, b), sub(a, muls(b, 0.3)));
    auto y = div(x, adds(abs_(b), 1.0));
    return sum_all(mul(y, sigmoid(a)));
  };
  auto root = build();
  backward(root);

  auto eval = [&]() {
    a->value = ta;
    b->value = tb;
    auto x = mul(add(a, b), sub(a, muls(b, 0.3)));
    auto y = div(x, adds(abs_(b), 1.0));
    return sum_all(mul(y, sigmoid(a)))->value[0];
  };
  for (int64_t idx : {int64_t(0), int64_t(7), int64_t(23)}) {
    double fa = fd_grad([&]() { return eval(); }, ta, idx);
    double fb = fd_grad([&]() { return eval(); }, tb, idx);
    REQUIRE_THAT(a->grad[idx], Catch::Matchers::WithinRel(fa, 1e-6));
    REQUIRE_THAT(b->grad[idx], Catch::Matchers::WithinRel(fb, 1e-6));
  }
}

TEST_CASE("broadcast mul reduces gradient over broadcast dims") {
  Rng rng(2);
  Tensor tm = random_tensor({1, 2, 2}, rng, 0.1, 0.9);
  Tensor tx = random_tensor({3, 2, 2}, rng);
  auto m = parameter(tm);
  auto x = constant(tx);
  auto root = sum_all(mul(m, x));
  backward(root);
  for (int i = 0; i < 4; ++i) {
    double expect = tx[i] + tx[4 + i] + tx[8 + i];
    REQUIRE_THAT(m->grad[i], Catch::Matchers::WithinAbs(expect, 1e-12));
  }
}

TEST_CASE("softmax0 forms a per-pixel simplex with correct gradient") {
  Rng rng(3);
  Tensor tl = random_tensor({4, 3, 3}, rng, -3.0, 3.0);
  auto logits = parameter(tl);
  auto sm = softmax0(logits);
  for (int64_t p = 0; p < 9; ++p) {
    double s = 0.0;
    for (int k = 0; k < 4; ++k) s += sm->value[k * 9 + p];
    REQUIRE_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
  // weighted sum probe
  Tensor wt = random_tensor({4, 3, 3}, rng);
  auto probe = sum_all(mul(sm, constant(wt)));
  backward(probe);
  auto eval = [&]() {
    auto l2 = parameter(tl);
    return sum_all(mul(softmax0(l2), constant(wt)))->value[0];
  };
  for (int64_t idx : {int64_t(1), int64_t(17), int64_t(35)}) {
    double fd = fd_grad([&]() { return eval(); }, tl, idx);
    REQUIRE_THAT(logits->grad[idx], Catch::Matchers::WithinRel(fd, 1e-5));
  }
}

TEST_CASE("conv2d matches finite differences incl. stride and dilation") {
  Rng rng(4);
  for (auto [stride, dil] : std::vector<std::pair<int, int>>{{1, 1}, {2, 1}, {1, 2}}) {
    Tensor tx = random_tensor({2, 6, 6}, rng);
    Tensor tw = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
    Tensor tb = random_tensor({3}, rng, -0.1, 0.1);
    Tensor probe;
    auto build = [&]() {
      auto x = parameter(tx);
      auto w = parameter(tw);
      auto b = parameter(tb);
      auto y = conv2d(x, w, b, stride, dil * 1, dil);
      if (probe.empty()) probe = random_tensor(y->value.shape(), rng);
      return std::tuple{sum_all(mul(y, constant(probe))), x, w, b};
    };
    auto [root, x, w, b] = build();
    backward(root);
    auto eval = [&]() { return std::get<0>(build())->value[0]; };
    for (int64_t idx : {int64_t(0), int64_t(13), int64_t(41)}) {
      REQUIRE_THAT(x->grad[idx], Catch::Matchers::WithinRel(fd_grad(eval, tx, idx), 1e-5));
      REQUIRE_THAT(w->grad[idx], Catch::Matchers::WithinRel(fd_grad(eval, tw, idx), 1e-5));
    }
    REQUIRE_THAT(b->grad[1], Catch::Matchers::WithinRel(fd_grad(eval, tb, 1), 1e-5));
  }
}

TEST_CASE("dense, upsample2, concat0, slice0, reshape gradients") {
  Rng rng(5);
  Tensor tx = random_tensor({8}, rng);
  Tensor tw = random_tensor({4, 8}, rng, -0.5, 0.5);
  Tensor tb = random_tensor({4}, rng);
  Tensor tmap = random_tensor({2, 2, 2}, rng);
  Tensor probe = random_tensor({1, 4, 4}, rng);
  auto build = [&]() {
    auto x = parameter(tx);
    auto w = parameter(tw);
    auto b = parameter(tb);
    auto m = parameter(tmap);
    auto d = dense(x, w, b);
    auto up = upsample2(m);                      // (2,4,4)
    auto sl = slice0(up, 1, 1);                  // (1,4,4)
    auto re = reshape(concat0({d, slice0(reshape(sl, Shape{16}), 0, 12)}), Shape{1, 4, 4});
    return std::tuple{sum_all(mul(re, constant(probe))), x, w, m};
  };
  auto [root, x, w, m] = build();
  backward(root);
  auto eval = [&]() { return std::get<0>(build())->value[0]; };
  for (int64_t idx : {int64_t(0), int64_t(5)}) {
    REQUIRE_THAT(x->grad[idx], Catch::Matchers::WithinRel(fd_grad(eval, tx, idx), 1e-5));
    REQUIRE_THAT(m->grad[idx], Catch::Matchers::WithinRel(fd_grad(eval, tmap, idx), 1e-5));
  }
  REQUIRE_THAT(w->grad[9], Catch::Matchers::WithinRel(fd_grad(eval, tw, 9), 1e-5));
}

TEST_CASE("bce_with_logits matches manual cross entropy and gradients") {
  Rng rng(6);
  Tensor tz = random_tensor({2, 2, 2}, rng, -4.0, 4.0);
  Tensor tt = random_tensor({2, 2, 2}, rng, 0.05, 0.95);
  auto z = parameter(tz);
  auto t = parameter(tt);
  auto root = bce_with_logits_sum(z, t);
  double manual = 0.0;
  for (int64_t i = 0; i < tz.size(); ++i) {
    double p = 1.0 / (1.0 + std::exp(-tz[i]));
    manual += -(tt[i] * std::log(p) + (1.0 - tt[i]) * std::log(1.0 - p));
  }
  REQUIRE_THAT(root->value[0], Catch::Matchers::WithinRel(manual, 1e-9));
  backward(root);
  auto eval = [&]() {
    return bce_with_logits_sum(parameter(tz), parameter(tt))->value[0];
  };
  for (int64_t idx : {int64_t(0), int64_t(5)}) {
    REQUIRE_THAT(z->grad[idx], Catch::Matchers::WithinRel(fd_grad(eval, tz, idx), 1e-5));
    REQUIRE_THAT(t->grad[idx], Catch::Matchers::WithinRel(fd_grad(eval, tt, idx), 1e-5));
  }
}

TEST_CASE("shared subgraph accumulates gradient once per use") {
  Tensor tx = Tensor::from({2}, {1.5, -0.5});
  auto x = parameter(tx);
  auto y = mul(x, x);  // x^2, same parent twice
  auto root = sum_all(y);
  backward(root);
  REQUIRE_THAT(x->grad[0], Catch::Matchers::WithinAbs(3.0, 1e-12));
  REQUIRE_THAT(x->grad[1], Catch::Matchers::WithinAbs(-1.0, 1e-12));
}

TEST_CASE("adam descends a quadratic and flips sign for ascent") {
  auto p = parameter(Tensor::from({1}, {2.0}));
  ParamMap m{{"p", p}};
  Adam opt(AdamConfig{.lr = 0.05});
  for (int i = 0; i < 400; ++i) {
    zero_grads(m);
    auto loss = sum_all(mul(p, p));
    backward(loss);
    opt.step(m);
  }
  REQUIRE(std::fabs(p->value[0]) < 1e-2);

  // ascent on -x^2 moves away from 0 when flipped twice, i.e. grad_sign=-1
  auto q = parameter(Tensor::from({1}, {0.5}));
  ParamMap mq{{"q", q}};
  Adam opt2(AdamConfig{.lr = 0.05});
  zero_grads(mq);
  auto val = sum_all(mul(q, q));
  backward(val);
  double before = q->value[0];
  opt2.step(mq, -1.0);
  REQUIRE(q->value[0] > before);
}

TEST_CASE("adam leaves parameters unchanged when grads are zero") {
  auto p = parameter(Tensor::from({3}, {1.0, -2.0, 0.5}));
  ParamMap m{{"p", p}};
  Adam opt(AdamConfig{.lr = 0.1});
  zero_grads(m);
  p->ensure_grad();  // allocated but zero
  Tensor before = p->value;
  opt.step(m);
  REQUIRE(p->value == before);
}

TEST_CASE("archive round trip is bit exact") {
  Rng rng(9);
  Archive a;
  a.tensors["alpha"] = random_tensor({3, 4}, rng);
  a.tensors["beta/w"] = random_tensor({2, 2, 2}, rng);
  a.meta["step"] = 123;
  a.meta["rng"] = rng.state();
  auto path = std::filesystem::temp_directory_path() / "ocf_core_archive_test.bin";
  save_archive(a, path.string());
  Archive b = load_archive(path.string());
  REQUIRE(b.tensors.at("alpha") == a.tensors.at("alpha"));
  REQUIRE(b.tensors.at("beta/w") == a.tensors.at("beta/w"));
  REQUIRE(b.meta.at("step") == 123);
  std::filesystem::remove(path);
}

TEST_CASE("archive rejects corrupt files") {
  auto path = std::filesystem::temp_directory_path() / "ocf_core_corrupt.bin";
  {
    std::ofstream f(path, std::ios::binary);
    f << "definitely not an archive";
  }
  REQUIRE_THROWS(load_archive(path.string()));
  std::filesystem::remove(path);
}

TEST_CASE("png round trip preserves bytes") {
  Rng rng(11);
  Image8 img(5, 7, 3);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.uniform_int(0, 255));
  auto path = std::filesystem::temp_directory_path() / "ocf_core_png_test.png";
  write_png(path.string(), img);
  Image8 back = read_png(path.string());
  REQUIRE(back.height == 5);
  REQUIRE(back.width == 7);
  REQUIRE(back.channels == 3);
  REQUIRE(back.pixels == img.pixels);

  // writing the same pixels twice yields identical files
  auto path2 = std::filesystem::temp_directory_path() / "ocf_core_png_test2.png";
  write_png(path2.string(), img);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  REQUIRE(s1 == s2);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("gray png round trip") {
  Image8 img(4, 4, 1);
  for (int i = 0; i < 16; ++i) img.pixels[i] = static_cast<uint8_t>(i * 13);
  auto path = std::filesystem::temp_directory_path() / "ocf_core_gray.png";
  write_png(path.string(), img);
  Image8 back = read_png(path.string());
  REQUIRE(back.channels == 1);
  REQUIRE(back.pixels == img.pixels);
  std::filesystem::remove(path);
}
