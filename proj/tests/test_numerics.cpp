#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "bifleet/common.hpp"
#include "bifleet/rng.hpp"
#include "bifleet/tape.hpp"
#include "bifleet/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace bifleet;
using bifleet::testing::gradcheck;
using bifleet::testing::rel_err;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int64_t> shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.flat()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
  Tape tape;
  Var eye = tape.input(Tensor::identity(2));
  Var m = tape.input(Tensor({2, 2}, {1, 2, 3, 4}));
  const Tensor& prod = tape.val(tape.matmul(eye, m));
  CHECK(prod.at(0, 0) == 1.0);
  CHECK(prod.at(0, 1) == 2.0);
  CHECK(prod.at(1, 0) == 3.0);
  CHECK(prod.at(1, 1) == 4.0);

  Var a = tape.input(Tensor({1, 2}, {1, 2}));
  Var b = tape.input(Tensor({2, 1}, {3, 4}));
  CHECK(tape.val(tape.matmul(a, b)).item() == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  Var a = tape.input(Tensor::zeros({2, 3}));
  Var b = tape.input(Tensor::zeros({2, 3}));
  try {
    tape.matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum equals ones * b^T, and matches FD") {
  Rng rng(7);
  Tensor a = random_tensor(rng, {3, 4});
  Tensor b = random_tensor(rng, {4, 2});

  Tape tape;
  Var va = tape.input(a);
  Var vb = tape.input(b);
  Var loss = tape.sum(tape.matmul(va, vb));
  tape.backward(loss);

  // Closed form: dA = ones(3x2) * B^T.
  Tensor expected = matmul(Tensor::ones({3, 2}), b, false, true);
  for (int64_t i = 0; i < expected.numel(); ++i) {
    CHECK(tape.grad(va)[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }

  auto check = gradcheck({a, b}, [](Tape& t, const std::vector<Var>& v) {
    return t.sum(t.matmul(v[0], v[1]));
  });
  CHECK(check.max_rel_err < 1e-6);
}

TEST_CASE("elementwise basics") {
  Tape tape;
  CHECK(tape.val(tape.sigmoid(tape.input(Tensor::scalar(0.0)))).item() == 0.5);

  Var x = tape.input(Tensor::vector({1, 2, 3}));
  Var z = tape.input(Tensor::vector({0, 0, 0}));
  const Tensor& prod = tape.val(tape.mul(x, z));
  for (int64_t i = 0; i < 3; ++i) CHECK(prod[i] == 0.0);
}

TEST_CASE("tanh derivative matches finite difference at 0.3") {
  auto check = gradcheck({Tensor::scalar(0.3)}, [](Tape& t, const std::vector<Var>& v) {
    return t.sum(t.tanh_op(v[0]));
  });
  CHECK(check.max_rel_err < 1e-6);
}

TEST_CASE("scalar broadcast in add/mul") {
  Tape tape;
  Var s = tape.input(Tensor::scalar(2.0));
  Var v = tape.input(Tensor::vector({1, 2, 3}));
  const Tensor& sum = tape.val(tape.add(s, v));
  CHECK(sum[2] == 5.0);
  const Tensor& prod = tape.val(tape.mul(v, s));
  CHECK(prod[2] == 6.0);

  // Incompatible non-scalar shapes are rejected.
  Var w = tape.input(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(tape.add(v, w), ShapeError);
}

TEST_CASE("log rejects non-positive input") {
  Tape tape;
  CHECK_THROWS_AS(tape.log_op(tape.input(Tensor::scalar(-1.0))), NumericError);
  CHECK_THROWS_AS(tape.log_op(tape.input(Tensor::scalar(0.0))), NumericError);
}

TEST_CASE("softmax trivial cases") {
  Tape tape;
  const Tensor& y = tape.val(tape.softmax(tape.input(Tensor::vector({0, 0}))));
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(0.5));

  const Tensor& big = tape.val(tape.softmax(tape.input(Tensor::vector({1000, 1000, 1000}))));
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(std::isfinite(big[i]));
    CHECK(big[i] == doctest::Approx(1.0 / 3));
  }
}

TEST_CASE("softmax preserves argmax, sums to one, permutation-equivariant") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.uniform_int(2, 9);
    Tensor x = random_tensor(rng, {n}, -5.0, 5.0);
    Tape tape;
    const Tensor y = tape.val(tape.softmax(tape.input(x)));

    int64_t ax = 0, ay = 0;
    for (int64_t i = 1; i < n; ++i) {
      if (x[i] > x[ax]) ax = i;
      if (y[i] > y[ay]) ay = i;
    }
    CHECK(ax == ay);

    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      CHECK(y[i] > 0.0);
      total += y[i];
    }
    CHECK(std::fabs(total - 1.0) <= 1e-12);

    // Permutation equivariance: softmax(perm(x)) == perm(softmax(x)).
    std::vector<int64_t> perm(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    rng.shuffle(perm);
    Tensor xp({n});
    for (int64_t i = 0; i < n; ++i) xp[i] = x[perm[static_cast<size_t>(i)]];
    Tape tape2;
    const Tensor yp = tape2.val(tape2.softmax(tape2.input(xp)));
    for (int64_t i = 0; i < n; ++i) {
      CHECK(yp[i] == doctest::Approx(y[perm[static_cast<size_t>(i)]]).epsilon(1e-15));
    }
  }
}

TEST_CASE("logsumexp values") {
  Tape tape;
  CHECK(tape.val(tape.logsumexp(tape.input(Tensor::vector({0})))).item() == 0.0);
  CHECK(tape.val(tape.logsumexp(tape.input(Tensor::vector({std::log(1.0), std::log(3.0)}))))
            .item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  Rng rng(3);
  Tensor x = random_tensor(rng, {6}, -3.0, 3.0);
  double brute = 0.0;
  for (int64_t i = 0; i < 6; ++i) brute += std::exp(x[i]);
  Tape t2;
  CHECK(std::fabs(t2.val(t2.logsumexp(t2.input(x))).item() - std::log(brute)) < 1e-10);
}

TEST_CASE("backward trivial and hand-derivative cases") {
  {
    Tape tape;
    Var x = tape.input(Tensor::scalar(4.0));
    tape.backward(x);
    CHECK(tape.grad(x).item() == 1.0);
  }
  {
    Tape tape;
    Var x = tape.input(Tensor::vector({1, 2}));
    Var loss = tape.sum(tape.mul(x, x));
    tape.backward(loss);
    CHECK(tape.grad(x)[0] == 2.0);
    CHECK(tape.grad(x)[1] == 4.0);
  }
}

TEST_CASE("backward rejects non-scalar loss, zero-fills unreached leaves") {
  Tape tape;
  Var x = tape.input(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(tape.backward(x), ContractViolation);

  Var unused = tape.input(Tensor::vector({5, 6, 7}));
  Var loss = tape.sum(x);
  tape.backward(loss);
  for (int64_t i = 0; i < 3; ++i) CHECK(tape.grad(unused)[i] == 0.0);
}

TEST_CASE("structural ops match finite differences") {
  Rng rng(21);
  Tensor m = random_tensor(rng, {4, 3});
  Tensor v3 = random_tensor(rng, {3});
  Tensor v4 = random_tensor(rng, {4});

  auto structural = [](Tape& t, const std::vector<Var>& v) {
    Var g = t.gather_rows(v[0], {2, 0, 2});
    Var sc = t.scale_columns(g, v[1]);
    Var ar = t.add_rowvec(sc, v[1]);
    Var mx = t.max_over_rows(ar);
    Var cat2 = t.concat(mx, t.slice(v[2], 1, 2));
    Var stacked = t.stack_rows({cat2, cat2});
    Var normed = t.l2norm_rows(stacked);
    Var win = t.im2col_rows(normed, 3);
    return t.sum(t.tanh_op(win));
  };
  auto check = gradcheck({m, v3, v4}, structural);
  CHECK(check.max_rel_err < 1e-6);

  auto reductions = [](Tape& t, const std::vector<Var>& v) {
    Var a = t.matvec(v[0], v[1]);            // [4]
    Var b = t.vecmat(v[2], v[0]);            // [3]
    Var c = t.dot(b, v[1]);                  // [1]
    Var sm = t.softmax(a);
    return t.add(t.add(t.logsumexp(sm), t.mean(a)), c);
  };
  auto check2 = gradcheck({m, v3, v4}, reductions);
  CHECK(check2.max_rel_err < 1e-6);
}

TEST_CASE("l2norm_rows: zero rows pass through with zero gradient") {
  Tape tape;
  Tensor m({2, 3}, {0, 0, 0, 3, 4, 0});
  Var v = tape.input(m);
  Var n = tape.l2norm_rows(v);
  const Tensor& y = tape.val(n);
  CHECK(y.at(0, 0) == 0.0);
  CHECK(y.at(1, 0) == doctest::Approx(0.6));
  CHECK(y.at(1, 1) == doctest::Approx(0.8));
  tape.backward(tape.sum(n));
  CHECK(tape.grad(v).at(0, 0) == 0.0);
  CHECK(tape.grad(v).at(0, 1) == 0.0);
}

TEST_CASE("random composed graphs pass gradcheck (property)") {
  // Random DAGs over the op vocabulary, reduced to a scalar; the analytic
  // gradient must track central differences on every leaf element.
  Rng rng(1234);
  for (int trial = 0; trial < 25; ++trial) {
    const int64_t r = rng.uniform_int(2, 4);
    const int64_t c = rng.uniform_int(2, 4);
    std::vector<Tensor> leaves;
    leaves.push_back(random_tensor(rng, {r, c}, -1.2, 1.2));
    leaves.push_back(random_tensor(rng, {c, r}, -1.2, 1.2));
    leaves.push_back(random_tensor(rng, {c}, -1.2, 1.2));
    const uint64_t graph_seed = rng.next_u64();

    auto build = [graph_seed](Tape& t, const std::vector<Var>& v) {
      Rng g(graph_seed);
      std::vector<Var> mats = {v[0], t.matmul(v[0], v[1])};
      std::vector<Var> vecs = {v[2], t.matvec(v[0], v[2])};
      for (int step = 0; step < 6; ++step) {
        switch (g.uniform_int(0, 7)) {
          case 0: mats.push_back(t.sigmoid(mats[g.next_below(mats.size())])); break;
          case 1: mats.push_back(t.tanh_op(mats[g.next_below(mats.size())])); break;
          case 2: {
            Var m = mats[g.next_below(mats.size())];
            mats.push_back(t.add(m, m));
            break;
          }
          case 3: {
            Var m = mats[g.next_below(mats.size())];
            mats.push_back(t.mul(m, t.sigmoid(m)));
            break;
          }
          case 4: vecs.push_back(t.softmax(vecs[g.next_below(vecs.size())])); break;
          case 5: vecs.push_back(t.tanh_op(vecs[g.next_below(vecs.size())])); break;
          case 6: {
            Var m = mats[g.next_below(mats.size())];
            vecs.push_back(t.max_over_rows(m));
            break;
          }
          case 7: {
            Var m = mats[g.next_below(mats.size())];
            mats.push_back(t.l2norm_rows(m));
            break;
          }
        }
      }
      Var acc = t.sum(mats.back());
      acc = t.add(acc, t.sum(vecs.back()));
      acc = t.add(acc, t.logsumexp(vecs[g.next_below(vecs.size())]));
      return acc;
    };
    auto check = gradcheck(leaves, build);
    INFO("trial ", trial, " worst leaf ", check.worst_leaf, " idx ", check.worst_index,
         " analytic ", check.analytic, " numeric ", check.numeric);
    CHECK(check.max_rel_err < 1e-4);
  }
}

TEST_CASE("same graph, same seed: bitwise-identical gradients") {
  Rng rng(99);
  Tensor a = random_tensor(rng, {3, 3});
  Tensor v = random_tensor(rng, {3});

  auto run = [&](std::vector<double>& out) {
    Tape tape;
    Var va = tape.input(a);
    Var vv = tape.input(v);
    Var loss = tape.logsumexp(tape.matvec(tape.l2norm_rows(tape.tanh_op(va)),
                                          tape.softmax(vv)));
    tape.backward(loss);
    out = tape.grad(va).flat();
    auto gv = tape.grad(vv).flat();
    out.insert(out.end(), gv.begin(), gv.end());
  };
  std::vector<double> g1, g2;
  run(g1);
  run(g2);
  REQUIRE(g1.size() == g2.size());
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("crf_nll agrees with exhaustive enumeration and passes gradcheck") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t m = rng.uniform_int(1, 5);
    const int64_t L = rng.uniform_int(2, 4);
    Tensor emis = random_tensor(rng, {m, L}, -2.0, 2.0);
    Tensor trans = random_tensor(rng, {L, L}, -1.5, 1.5);
    Tensor start = random_tensor(rng, {L}, -1.0, 1.0);
    Tensor stop = random_tensor(rng, {L}, -1.0, 1.0);
    std::vector<int> labels;
    for (int64_t t = 0; t < m; ++t) labels.push_back(rng.uniform_int(0, static_cast<int>(L) - 1));

    // Enumeration oracle for -log p(labels).
    double gold = start[labels[0]] + emis.at(0, labels[0]);
    for (int64_t t = 1; t < m; ++t) gold += trans.at(labels[t - 1], labels[t]) + emis.at(t, labels[t]);
    gold += stop[labels[m - 1]];
    std::vector<int> seq(static_cast<size_t>(m), 0);
    double zmax = -1e300;
    std::vector<double> scores;
    while (true) {
      double s = start[seq[0]] + emis.at(0, seq[0]);
      for (int64_t t = 1; t < m; ++t) s += trans.at(seq[t - 1], seq[t]) + emis.at(t, seq[t]);
      s += stop[seq[m - 1]];
      scores.push_back(s);
      zmax = std::max(zmax, s);
      int64_t p = m - 1;
      while (p >= 0 && ++seq[p] == L) seq[p--] = 0;
      if (p < 0) break;
    }
    double z = 0.0;
    for (double s : scores) z += std::exp(s - zmax);
    const double log_z = zmax + std::log(z);

    Tape tape;
    Var nll = tape.crf_nll(tape.input(emis), tape.input(trans), tape.input(start),
                           tape.input(stop), labels);
    CHECK(std::fabs(tape.val(nll).item() - (log_z - gold)) < 1e-8);

    auto check = gradcheck({emis, trans, start, stop},
                           [&labels](Tape& t, const std::vector<Var>& v) {
                             return t.crf_nll(v[0], v[1], v[2], v[3], labels);
                           });
    INFO("trial ", trial, " m=", m, " L=", L, " err=", check.max_rel_err);
    CHECK(check.max_rel_err < 1e-5);
  }
}

TEST_CASE("crf_viterbi equals brute force on random instances") {
  Rng rng(555);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t m = rng.uniform_int(1, 5);
    const int64_t L = rng.uniform_int(2, 4);
    Tensor emis = random_tensor(rng, {m, L}, -2.0, 2.0);
    Tensor trans = random_tensor(rng, {L, L}, -1.5, 1.5);
    Tensor start = random_tensor(rng, {L}, -1.0, 1.0);
    Tensor stop = random_tensor(rng, {L}, -1.0, 1.0);

    std::vector<int> best_seq;
    double best = -1e300;
    std::vector<int> seq(static_cast<size_t>(m), 0);
    while (true) {
      double s = start[seq[0]] + emis.at(0, seq[0]);
      for (int64_t t = 1; t < m; ++t) s += trans.at(seq[t - 1], seq[t]) + emis.at(t, seq[t]);
      s += stop[seq[m - 1]];
      if (s > best) {
        best = s;
        best_seq = seq;
      }
      int64_t p = m - 1;
      while (p >= 0 && ++seq[p] == L) seq[p--] = 0;
      if (p < 0) break;
    }
    CHECK(crf_viterbi(emis, trans, start, stop) == best_seq);
  }
}

TEST_CASE("crf_viterbi breaks ties toward the lowest label id") {
  Tensor emis = Tensor::zeros({3, 3});
  Tensor trans = Tensor::zeros({3, 3});
  Tensor start = Tensor::zeros({3});
  Tensor stop = Tensor::zeros({3});
  auto path = crf_viterbi(emis, trans, start, stop);
  for (int y : path) CHECK(y == 0);
}
