#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "conformer/grad_check.hpp"
#include "conformer/ops.hpp"
#include "conformer/rng.hpp"
#include "doctest.h"

using namespace conformer::num;

TEST_CASE("grad of sum of squares is exact") {
  Tensor x = Tensor::from({3}, {1, 2, 3});
  Tape tape;
  Binder bind(tape);
  Var vx = bind(x);
  Var loss = sum(mul(vx, vx));
  tape.backward(loss);
  Tensor g = bind.grad_of(x);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(4.0));
  CHECK(g[2] == doctest::Approx(6.0));

  double e = grad_check(
      [&](Tape&, Binder& b) {
        Var v = b(x);
        return sum(mul(v, v));
      },
      {&x});
  CHECK(e <= 1e-7);
}

TEST_CASE("grad check of linear-map mse") {
  Rng rng(21);
  Tensor w = rng.normal_tensor({4, 3});
  Tensor xin = rng.normal_tensor({5, 4});
  Tensor target = rng.normal_tensor({5, 3});
  double e = grad_check(
      [&](Tape& t, Binder& b) {
        Var y = matmul(b.input(xin), b(w));
        return mse(y, t.constant(target));
      },
      {&w});
  CHECK(e <= 1e-6);
}

TEST_CASE("grad check covers every differentiable op") {
  Rng rng(31);
  Tensor a = rng.normal_tensor({3, 4});
  Tensor b = rng.normal_tensor({3, 4});
  Tensor m = rng.normal_tensor({3, 5});
  Tensor k3 = rng.uniform_tensor({2, 3, 3}, -0.5, 0.5);
  Tensor bias2 = rng.normal_tensor({2});
  Tensor vec = rng.normal_tensor({4});
  Tensor rows = rng.normal_tensor({3});
  Tensor table = rng.normal_tensor({6, 4});
  Tensor x3 = rng.normal_tensor({2, 5, 3});

  auto check = [&](const char* what, std::initializer_list<Tensor*> inputs,
                   std::function<Var(Tape&, Binder&)> f) {
    double e = grad_check(f, inputs);
    INFO(what);
    CHECK(e <= 1e-4);
  };

  check("add/mul/sub/scale", {&a, &b}, [&](Tape&, Binder& bd) {
    return sum(mul(sub(scale(bd(a), 1.7), bd(b)), add(bd(a), bd(b))));
  });
  check("matmul", {&a, &m}, [&](Tape&, Binder& bd) {
    return sum(matmul(transpose2d(bd(a)), bd(m)));
  });
  check("matmul_nt/tn", {&a, &b}, [&](Tape&, Binder& bd) {
    return sum(matmul_tn(matmul_nt(bd(a), bd(b)), bd(a)));
  });
  check("softmax axis1", {&a}, [&](Tape&, Binder& bd) {
    Var p = softmax(bd(a), 1);
    return sum(mul(p, p));
  });
  check("softmax axis0", {&a}, [&](Tape&, Binder& bd) {
    Var p = softmax(bd(a), 0);
    return sum(mul(p, p));
  });
  check("masked_softmax_band", {&m}, [&](Tape&, Binder& bd) {
    Var sq = matmul_nt(bd(m), bd(m));  // 3x3
    Var p = masked_softmax_band(sq, 1);
    return sum(mul(p, p));
  });
  for (Act act : {Act::Sigmoid, Act::Tanh, Act::Softplus, Act::Gelu})
    check("activation", {&a}, [&](Tape&, Binder& bd) {
      return sum(mul(activation(bd(a), act), bd(b)));
    });
  check("conv1d", {&a, &k3, &bias2}, [&](Tape&, Binder& bd) {
    Var y = conv1d(bd(a), bd(k3), bd(bias2));
    return sum(mul(y, y));
  });
  check("avgpool1d_replicate", {&a}, [&](Tape&, Binder& bd) {
    Var y = avgpool1d_replicate(bd(a), 3);
    return sum(mul(y, y));
  });
  check("mse", {&a, &b}, [&](Tape&, Binder& bd) { return mse(bd(a), bd(b)); });
  check("slice/concat cols", {&a}, [&](Tape&, Binder& bd) {
    Var v = bd(a);
    Var s1 = slice_cols(v, 0, 2);
    Var s2 = slice_cols(v, 2, 4);
    Var c = concat_cols(s2, s1);
    return sum(mul(c, c));
  });
  check("slice_rows/concat_rows", {&a}, [&](Tape&, Binder& bd) {
    Var v = bd(a);
    Var r0 = slice_rows(v, 0, 1);
    Var r12 = slice_rows(v, 1, 3);
    Var back = concat_rows({r12, r0});
    return sum(mul(back, back));
  });
  check("reshape/transpose", {&a}, [&](Tape&, Binder& bd) {
    Var v = reshape(bd(a), {4, 3});
    return sum(mul(transpose2d(v), bd(a)));
  });
  check("rowscale", {&a, &rows}, [&](Tape&, Binder& bd) {
    Var y = rowscale(bd(a), bd(rows));
    return sum(mul(y, y));
  });
  check("add_rowvec", {&a, &vec}, [&](Tape&, Binder& bd) {
    Var y = add_rowvec(bd(a), bd(vec));
    return sum(mul(y, y));
  });
  check("gather_rows", {&table}, [&](Tape&, Binder& bd) {
    Var y = gather_rows(bd(table), {0, 3, 3, 5});
    return sum(mul(y, y));
  });
  check("time ops", {&x3}, [&](Tape&, Binder& bd) {
    Var v = bd(x3);
    Var sh = shift_time(v, 1);
    Var ap = avgpool_time(add(v, sh), 3);
    Var mt = mean_time(ap);
    Var bc = broadcast_time(mt, 5);
    Var st = slice_time(add(bc, v), 1, 4);
    return sum(mul(st, st));
  });
}

TEST_CASE("per-tape gradient accumulation over reused vars") {
  Tensor x = Tensor::from({2}, {1.5, -0.5});
  Tape tape;
  Binder bind(tape);
  Var v = bind(x);
  Var y = add(mul(v, v), scale(v, 3.0));  // x^2 + 3x
  tape.backward(sum(y));
  Tensor g = bind.grad_of(x);
  CHECK(g[0] == doctest::Approx(2 * 1.5 + 3));
  CHECK(g[1] == doctest::Approx(2 * -0.5 + 3));
}
