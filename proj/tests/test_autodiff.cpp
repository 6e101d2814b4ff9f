// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "s2c/nn.hpp"

using namespace s2c;
using ad::Tape;
using ad::Var;

namespace {

Mat RandomMat(Eigen::Index r, Eigen::Index c, uint64_t seed, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(gen);
  return m;
}

using Fn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Reduces an arbitrary output to a scalar with fixed random weights.
Var Project(Tape& t, const Var& y, uint64_t seed = 99) {
  return ad::Sum(ad::Mul(y, t.Constant(RandomMat(y.rows(), y.cols(), seed))));
}

// Largest relative error between tape gradients and central differences.
double GradCheck(const Fn& f, const std::vector<Mat>& inputs, double h = 1e-6) {
  Tape t;
  std::vector<Var> leaves;
  for (const Mat& m : inputs) leaves.push_back(t.Leaf(m));
  Var out = f(t, leaves);
  t.Backward(out);
  double worst = 0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Mat> in = inputs;
        in[k].data()[i] += delta;
        Tape t2;
        std::vector<Var> l2;
        for (const Mat& m : in) l2.push_back(t2.Leaf(m));
        return f(t2, l2).scalar();
      };
      const double num = (eval(h) - eval(-h)) / (2 * h);
      const Mat& g = leaves[k].grad();
      const double ana = g.size() ? g.data()[i] : 0.0;
      worst = std::max(worst, std::abs(num - ana) / std::max(1e-4, std::abs(num) + std::abs(ana)));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("elementwise and matrix ops match finite differences") {
  const Mat a = RandomMat(3, 4, 1), b = RandomMat(3, 4, 2), c = RandomMat(4, 2, 3);
  const Mat row = RandomMat(1, 4, 4);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::MatMul(v[0], v[1])); }, {a, c}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::Add(v[0], v[1])); }, {a, b}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::Sub(v[0], v[1])); }, {a, b}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::Mul(v[0], v[1])); }, {a, b}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::Scale(v[0], -2.5)); }, {a}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::AddRow(v[0], v[1])); }, {a, row}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::Tanh(v[0])); }, {a}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::Sigmoid(v[0])); }, {a}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::Relu(v[0])); }, {a}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::LeakyRelu(v[0], 0.2)); }, {a}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::Square(v[0])); }, {a}) < 1e-6);
  CHECK(GradCheck([](Tape&, const auto& v) { return ad::Mean(v[0]); }, {a}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::RowNorms(v[0])); }, {a}) < 1e-6);
}

TEST_CASE("shape ops match finite differences") {
  const Mat a = RandomMat(6, 3, 5), b = RandomMat(2, 3, 6), c = RandomMat(6, 2, 7);
  CHECK(GradCheck([](Tape& t, const auto& v) {
          return Project(t, ad::ConcatRows(std::vector<Var>{v[0], v[1]}));
        }, {a, b}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) {
          return Project(t, ad::ConcatCols(std::vector<Var>{v[0], v[1]}));
        }, {a, c}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::SliceRows(v[0], 2, 3)); }, {a}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::SliceCols(v[0], 1, 2)); }, {a}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::Reshape(v[0], 3, 6)); }, {a}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::Transpose(v[0])); }, {a}) < 1e-6);
  CHECK(GradCheck([](Tape& t, const auto& v) { return Project(t, ad::RepeatRows(v[0], 3)); }, {b}) < 1e-6);
  const std::vector<int> idx{0, 5, 5, 2};
  CHECK(GradCheck([&](Tape& t, const auto& v) { return Project(t, ad::GatherRows(v[0], idx)); }, {a}) < 1e-6);
  for (auto [k, s, pl, pr] : {std::array{3, 1, 1, 1}, {2, 2, 0, 0}, {5, 1, 2, 2}, {3, 3, 0, 0}})
    CHECK(GradCheck([&](Tape& t, const auto& v) { return Project(t, ad::Im2Col(v[0], k, s, pl, pr)); }, {a}) < 1e-6);
}

TEST_CASE("im2col layout") {
  Tape t;
  Mat x(4, 2);
  x << 1, 2, 3, 4, 5, 6, 7, 8;
  const Mat p = ad::Im2Col(t.Constant(x), 3, 1, 1, 1).value();
  REQUIRE(p.rows() == 4);
  REQUIRE(p.cols() == 6);
  // row t holds frames t-1, t, t+1 side by side, zero outside
  Mat expect(4, 6);
  expect << 0, 0, 1, 2, 3, 4,
            1, 2, 3, 4, 5, 6,
            3, 4, 5, 6, 7, 8,
            5, 6, 7, 8, 0, 0;
  CHECK(p == expect);
}

TEST_CASE("softmax with mask") {
  const Mat a = RandomMat(3, 5, 8);
  const std::vector<bool> mask{true, false, true, true, false};
  CHECK(GradCheck([&](Tape& t, const auto& v) { return Project(t, ad::SoftmaxRows(v[0], mask)); }, {a}) < 1e-6);
  Tape t;
  const Mat p = ad::SoftmaxRows(t.Constant(a), mask).value();
  for (Eigen::Index r = 0; r < 3; ++r) {
    CHECK(p.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p(r, 1) == 0.0);
    CHECK(p(r, 4) == 0.0);
    double z = 0;
    for (int c : {0, 2, 3}) z += std::exp(a(r, c));
    for (int c : {0, 2, 3}) CHECK(p(r, c) == doctest::Approx(std::exp(a(r, c)) / z).epsilon(1e-12));
  }
}

TEST_CASE("cross entropy") {
  const Mat logits = RandomMat(4, 6, 9, 3.0);
  const std::vector<int> tgt{1, 0, 5, 3};
  CHECK(GradCheck([&](Tape&, const auto& v) { return ad::CrossEntropy(v[0], tgt); }, {logits}) < 1e-5);
  Tape t;
  double ref = 0;
  for (int r = 0; r < 4; ++r) {
    double m = logits.row(r).maxCoeff(), z = 0;
    for (int c = 0; c < 6; ++c) z += std::exp(logits(r, c) - m);
    ref += -(logits(r, tgt[size_t(r)]) - m - std::log(z));
  }
  CHECK(ad::CrossEntropy(t.Constant(logits), tgt).scalar() == doctest::Approx(ref / 4).epsilon(1e-12));
  const std::vector<int> bad{1, 0, 6, 3};
  CHECK_THROWS(ad::CrossEntropy(t.Constant(logits), bad));
}

TEST_CASE("fill columns blocks gradient and value") {
  const Mat a = RandomMat(2, 4, 10);
  const std::vector<int> cols{2};
  Tape t;
  Var x = t.Leaf(a);
  Var y = ad::FillColumns(x, cols, -1e30);
  CHECK(y.value()(0, 2) == -1e30);
  t.Backward(ad::Sum(ad::SliceCols(y, 0, 2)));
  CHECK(x.grad()(0, 2) == 0.0);
  CHECK(x.grad()(0, 0) == 1.0);
}

TEST_CASE("stop gradient and straight-through") {
  const Mat z = RandomMat(3, 2, 11), q = RandomMat(3, 2, 12);
  Tape t;
  Var vz = t.Leaf(z), vq = t.Leaf(q);
  Var st = ad::StraightThrough(vz, vq);
  CHECK(st.value() == q);
  Var sg = ad::StopGradient(vq);
  CHECK(sg.value() == q);
  Var loss = ad::Add(Project(t, st, 1), Project(t, sg, 2));
  t.Backward(loss);
  CHECK(vz.grad() == RandomMat(3, 2, 1));
  CHECK((vq.grad().size() == 0 || vq.grad().cwiseAbs().maxCoeff() == 0.0));
}

TEST_CASE("batch norm gradient and running statistics") {
  const Mat x = RandomMat(7, 3, 13, 2.0), g = RandomMat(1, 3, 14), b = RandomMat(1, 3, 15);
  ad::Parameter rm{"rm", Mat::Zero(1, 3)}, rv{"rv", Mat::Ones(1, 3)};
  CHECK(GradCheck([&](Tape& t, const auto& v) {
          return Project(t, ad::BatchNorm(v[0], v[1], v[2], rm, rv, 0.1, 1e-5));
        }, {x, g, b}) < 1e-5);
  ad::Parameter m{"m", Mat::Zero(1, 3)}, var{"v", Mat::Ones(1, 3)};
  Tape t(true);
  ad::BatchNorm(t.Constant(x), t.Constant(Mat::Ones(1, 3)), t.Constant(Mat::Zero(1, 3)), m, var, 1.0, 1e-5);
  // running statistics are kept at float precision
  Mat mean = x.colwise().mean();
  RoundToFloat(mean);
  CHECK(m.value == mean);
  Tape e(false);
  const Mat y = ad::BatchNorm(e.Constant(x), e.Constant(Mat::Ones(1, 3)), e.Constant(Mat::Zero(1, 3)),
                              m, var, 1.0, 1e-5).value();
  for (Eigen::Index c = 0; c < 3; ++c)
    CHECK(y(0, c) == doctest::Approx((x(0, c) - m.value(0, c)) / std::sqrt(var.value(0, c) + 1e-5)));
}

TEST_CASE("layers match finite differences through their parameters") {
  nn::Rng rng(3);
  nn::Linear lin;
  lin.Init("lin", 3, 2, rng);
  nn::Conv1d conv;
  conv.Init("conv", 3, 2, 3, 1, true, rng);
  nn::Lstm lstm;
  lstm.Init("lstm", 3, 2, rng);
  const Mat x = RandomMat(5, 3, 16);

  auto check_params = [&](nn::ParamList params, const std::function<Var(Tape&)>& f) {
    double worst = 0;
    for (ad::Parameter* p : params) p->ZeroGrad();
    {
      Tape t;
      t.Backward(f(t));
    }
    for (ad::Parameter* p : params) {
      for (Eigen::Index i = 0; i < p->value.size(); ++i) {
        const double keep = p->value.data()[i];
        p->value.data()[i] = keep + 1e-6;
        Tape a;
        const double up = f(a).scalar();
        p->value.data()[i] = keep - 1e-6;
        Tape b;
        const double dn = f(b).scalar();
        p->value.data()[i] = keep;
        const double num = (up - dn) / 2e-6, ana = p->grad.data()[i];
        worst = std::max(worst, std::abs(num - ana) / std::max(1e-4, std::abs(num) + std::abs(ana)));
      }
    }
    return worst;
  };
  nn::ParamList lp, cp, sp;
  lin.Collect(lp);
  conv.Collect(cp);
  lstm.Collect(sp);
  CHECK(check_params(lp, [&](Tape& t) { return Project(t, lin.Forward(t, t.Constant(x))); }) < 1e-6);
  CHECK(check_params(cp, [&](Tape& t) { return Project(t, conv.Forward(t, t.Constant(x))); }) < 1e-6);
  CHECK(check_params(sp, [&](Tape& t) { return Project(t, lstm.Forward(t, t.Constant(x), false)); }) < 1e-6);
  CHECK(check_params(sp, [&](Tape& t) { return Project(t, lstm.Forward(t, t.Constant(x), true)); }) < 1e-6);
}

TEST_CASE("adam clips, rounds to float and zeroes gradients") {
  ad::Parameter p{"p", Mat::Constant(1, 2, 1.0)};
  p.grad = Mat::Constant(1, 2, 100.0);
  nn::Adam opt(0.1, 0.9, 0.999, 1e-8, 1.0);
  opt.Step({&p});
  CHECK(p.value(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(double(float(p.value(0, 0))) == p.value(0, 0));
  CHECK(p.grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rng is deterministic and in range") {
  nn::Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.Next() == b.Next());
  nn::Rng c(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.Uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const int k = c.Index(7);
    CHECK(k >= 0);
    CHECK(k < 7);
  }
}
