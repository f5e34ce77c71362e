#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "brainstorm/autodiff.hpp"
#include "brainstorm/rng.hpp"

using namespace brainstorm;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

// Independent high-precision softmax for cross-checking.
std::vector<double> softmax_oracle(const std::vector<double>& x) {
  long double mx = x[0];
  for (double v : x) mx = std::max<long double>(mx, v);
  long double z = 0.0L;
  std::vector<long double> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = expl(static_cast<long double>(x[i]) - mx);
    z += e[i];
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(e[i] / z);
  return out;
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("softmax basic values") {
  Tape t;
  Var x = t.leaf(Tensor::vector({0.0, 0.0}));
  Var y = t.softmax(x, 0);
  CHECK(t.value(y).data[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(t.value(y).data[1] == doctest::Approx(0.5).epsilon(1e-12));

  Tape t2;
  Var x2 = t2.leaf(Tensor::vector({std::log(1.0), std::log(3.0)}));
  Var y2 = t2.softmax(x2, 0);
  CHECK(t2.value(y2).data[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(t2.value(y2).data[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax matches extended-precision oracle within 1e-12") {
  Rng rng(7);
  auto x = random_vec(rng, 5, -4.0, 4.0);
  auto expect = softmax_oracle(x);
  Tape t;
  Var y = t.softmax(t.leaf(Tensor::vector(x)), 0);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(std::abs(t.value(y).data[i] - expect[i]) < 1e-12);
}

TEST_CASE("softmax rows sum to one and rejects non-finite input") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    auto x = random_vec(rng, 12, -30.0, 30.0);
    Tape t;
    Var y = t.softmax(t.leaf(Tensor{{3, 4}, x}), 1);
    const auto& d = t.value(y).data;
    for (int r = 0; r < 3; ++r) {
      double s = 0;
      for (int c = 0; c < 4; ++c) {
        s += d[r * 4 + c];
        CHECK(d[r * 4 + c] >= 0.0);
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
  Tape t;
  Var bad = t.leaf(Tensor::vector({0.0, std::numeric_limits<double>::infinity()}));
  CHECK_THROWS_WITH_AS(t.softmax(bad, 0), doctest::Contains("index 1"), std::domain_error);
}

TEST_CASE("log_softmax values, shift invariance, composition") {
  Tape t;
  Var y = t.log_softmax(t.leaf(Tensor::vector({0.0, 0.0})), 0);
  CHECK(t.value(y).data[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-12));

  Rng rng(3);
  auto x = random_vec(rng, 7, -3.0, 3.0);
  auto shifted = x;
  for (auto& v : shifted) v += 17.25;
  Tape ta, tb;
  Var la = ta.log_softmax(ta.leaf(Tensor::vector(x)), 0);
  Var lb = tb.log_softmax(tb.leaf(Tensor::vector(shifted)), 0);
  double sum_exp = 0.0;
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(std::abs(ta.value(la).data[i] - tb.value(lb).data[i]) < 1e-12);
    sum_exp += std::exp(ta.value(la).data[i]);
  }
  CHECK(std::abs(sum_exp - 1.0) < 1e-9);

  // log(softmax(x)) agrees with log_softmax(x).
  Tape tc;
  Var sm = tc.softmax(tc.leaf(Tensor::vector(x)), 0);
  for (std::size_t i = 0; i < 7; ++i)
    CHECK(std::abs(std::log(tc.value(sm).data[i]) - ta.value(la).data[i]) < 1e-10);
}

TEST_CASE("cosine similarity") {
  Tape t;
  std::vector<double> v{0.3, -1.2, 2.0};
  Var c = t.cosine_similarity(t.leaf(Tensor::vector(v)), t.leaf(Tensor::vector(v)));
  CHECK(t.value(c).item() == doctest::Approx(1.0).epsilon(1e-12));

  Tape t2;
  Var c2 = t2.cosine_similarity(t2.leaf(Tensor::vector({1.0, 0.0})),
                                t2.leaf(Tensor::vector({0.0, 1.0})));
  CHECK(t2.value(c2).item() == doctest::Approx(0.0).epsilon(1e-12));

  // Random pair against extended-precision dot/(|a||b|).
  Rng rng(5);
  auto a = random_vec(rng, 9), b = random_vec(rng, 9);
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < 9; ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  const double expect = static_cast<double>(dot / (sqrtl(na) * sqrtl(nb)));
  Tape t3;
  Var c3 = t3.cosine_similarity(t3.leaf(Tensor::vector(a)), t3.leaf(Tensor::vector(b)));
  CHECK(std::abs(t3.value(c3).item() - expect) < 1e-12);
  CHECK(t3.value(c3).item() <= 1.0);
  CHECK(t3.value(c3).item() >= -1.0);

  Tape t4;
  CHECK_THROWS_AS(t4.cosine_similarity(t4.leaf(Tensor::vector({0.0, 0.0})),
                                       t4.leaf(Tensor::vector({1.0, 2.0}))),
                  std::domain_error);
}

TEST_CASE("cross_entropy values and errors") {
  // Near-one-hot log-probs at the target -> ~0 loss.
  Tape t;
  std::vector<double> lp = {0.0, -1e9, -1e9, 0.0};  // log 1 at targets
  Var l = t.cross_entropy(t.leaf(Tensor{{2, 2}, lp}), std::vector<int>{0, 1}, -1);
  CHECK(t.value(l).item() == doctest::Approx(0.0).epsilon(1e-12));

  // Uniform log-probs over V -> ln V.
  const std::size_t V = 6;
  Tape t2;
  std::vector<double> u(2 * V, std::log(1.0 / V));
  Var l2 = t2.cross_entropy(t2.leaf(Tensor{{2, V}, u}), std::vector<int>{3, 5}, -1);
  CHECK(t2.value(l2).item() == doctest::Approx(std::log(double(V))).epsilon(1e-12));

  // Random case matches per-position manual accumulation; pads skipped.
  Rng rng(17);
  std::vector<double> logits = random_vec(rng, 4 * 5);
  Tape t3;
  Var lsm = t3.log_softmax(t3.leaf(Tensor{{4, 5}, logits}), 1);
  std::vector<int> targets{2, 0 /*pad*/, 4, 1};
  const int pad = 0;
  double manual = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    if (targets[i] == pad) continue;
    manual -= t3.value(lsm).data[i * 5 + targets[i]];
    ++n;
  }
  Var l3 = t3.cross_entropy(lsm, targets, pad);
  CHECK(t3.value(l3).item() == doctest::Approx(manual / n).epsilon(1e-12));

  Tape t4;
  CHECK_THROWS_AS(
      t4.cross_entropy(t4.leaf(Tensor{{1, 3}, {0.0, 0.0, 0.0}}), std::vector<int>{7}, -1),
      std::domain_error);
}

TEST_CASE("backward: analytic identities") {
  // loss = sum(x) -> grad all ones
  Tape t;
  Tensor x = Tensor::vector({1.0, -2.0, 3.5});
  x.requires_grad = true;
  Var vx = t.leaf(x);
  t.backward(t.sum(vx));
  for (double g : t.grad(vx)) CHECK(g == 1.0);

  // loss = x . x -> grad 2x
  Tape t2;
  Var vy = t2.leaf(x);
  t2.backward(t2.sum(t2.mul(vy, vy)));
  CHECK(t2.grad(vy)[0] == doctest::Approx(2.0));
  CHECK(t2.grad(vy)[1] == doctest::Approx(-4.0));
  CHECK(t2.grad(vy)[2] == doctest::Approx(7.0));

  // non-scalar loss rejected
  Tape t3;
  Var vz = t3.leaf(Tensor::vector({1.0, 2.0}));
  CHECK_THROWS_AS(t3.backward(vz), std::invalid_argument);
}

TEST_CASE("backward: non-participating leaves get zero grads") {
  Tape t;
  Tensor a = Tensor::vector({1.0, 2.0});
  a.requires_grad = true;
  Var va = t.leaf(a);
  Var vb = t.leaf(a);  // not used in loss
  t.backward(t.sum(va));
  CHECK(t.grad(vb)[0] == 0.0);
  CHECK(t.grad(vb)[1] == 0.0);
}

TEST_CASE("tape replay yields bit-identical gradients") {
  Rng rng(23);
  Tensor w = Tensor::matrix(3, 3, random_vec(rng, 9));
  w.requires_grad = true;
  Tensor v = Tensor::vector(random_vec(rng, 3));
  v.requires_grad = true;
  Tape t;
  Var vw = t.leaf(w), vv = t.leaf(v);
  Var loss = t.sum(t.tanh(t.matmul(vw, vv)));
  t.backward(loss);
  auto g1 = t.grad(vw);
  t.backward(loss);
  auto g2 = t.grad(vw);
  CHECK(g1 == g2);
}

TEST_CASE("finite differences: composed ops within 1e-4 on random inputs") {
  Rng rng(41);
  // Chain exercising matmul, add (broadcast), tanh, softmax, log_softmax, mul,
  // concat, pick, stack_rows, cosine, embedding, mean, hinge.
  std::vector<Tensor> params;
  params.push_back(Tensor::matrix(4, 3, random_vec(rng, 12)));
  params.push_back(Tensor::vector(random_vec(rng, 3)));
  params.push_back(Tensor::matrix(5, 4, random_vec(rng, 20)));

  auto f = [](Tape& t, const std::vector<Var>& p) {
    Var emb = t.embedding(p[2], std::vector<int>{1, 3, 0});  // {3,4}
    Var h = t.tanh(t.add(t.matmul(emb, p[0]), p[1]));        // {3,3}
    Var r0 = t.row(h, 0), r1 = t.row(h, 1), r2 = t.row(h, 2);
    Var cs = t.cosine_similarity(r0, r1);
    std::vector<Var> rows{r1, r2};
    Var stacked = t.stack_rows(rows);                        // {2,3}
    Var lp = t.log_softmax(stacked, 1);
    Var ce = t.cross_entropy(lp, std::vector<int>{2, 0}, -1);
    Var sm = t.softmax(r2, 0);
    Var picked = t.pick(sm, 1);
    std::vector<Var> cat{cs, picked, ce};
    Var v = t.concat(cat);
    Var hinged = t.hinge(t.add_const(v, -0.1));
    return t.add(t.mean(hinged), t.scale(t.sum(t.mul(r0, r0)), 0.25));
  };
  CHECK(ad::finite_difference_check(f, params, 1e-5) <= 1e-4);
}

TEST_CASE("finite_difference_check analytic cases") {
  // Quadratic: exact for central differences up to roundoff.
  std::vector<Tensor> p{Tensor::vector({0.7, -1.3, 0.2})};
  auto quad = [](Tape& t, const std::vector<Var>& v) { return t.sum(t.mul(v[0], v[0])); };
  CHECK(ad::finite_difference_check(quad, p, 1e-5) <= 1e-6);

  // softmax-then-CE.
  Rng rng(9);
  std::vector<Tensor> p2{Tensor::matrix(2, 4, random_vec(rng, 8))};
  auto smce = [](Tape& t, const std::vector<Var>& v) {
    return t.cross_entropy(t.log_softmax(v[0], 1), std::vector<int>{1, 3}, -1);
  };
  CHECK(ad::finite_difference_check(smce, p2, 1e-5) <= 1e-4);

  // Constant function: zero analytic grads, zero error.
  std::vector<Tensor> p3{Tensor::vector({1.0, 2.0})};
  auto constant = [](Tape& t, const std::vector<Var>& v) {
    (void)v;
    return t.scalar(3.25);
  };
  CHECK(ad::finite_difference_check(constant, p3, 1e-5) == 0.0);
}
