#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "glymph/grad_check.hpp"
#include "glymph/ops.hpp"
#include "glymph/rng.hpp"
#include "oracles.hpp"

using glymph::Mode;
using glymph::Tensor;

namespace {

template <typename S>
void fill_normal(Tensor<S>& t, glymph::Rng& rng, double sigma = 1.0) {
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = static_cast<S>(rng.normal(0.0, sigma));
}

// keeps values away from the relu kink / pooling ties
template <typename S>
void fill_kink_free(Tensor<S>& t, glymph::Rng& rng) {
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    double v = rng.normal();
    if (std::abs(v) < 0.1) v = v < 0 ? v - 0.1 : v + 0.1;
    t[i] = static_cast<S>(v + 1e-4 * static_cast<double>(i % 97));
  }
}

} // namespace

// ---------------------------------------------------------------------------
// conv3x3
// ---------------------------------------------------------------------------

TEST_CASE("conv3x3 all-ones box kernel") {
  Tensor<double> x = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  Tensor<double> w = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  Tensor<double> b({1});
  Tensor<double> out = glymph::conv3x3(x, w, b);
  const double expect[9] = {4, 6, 4, 6, 9, 6, 4, 6, 4};
  for (int i = 0; i < 9; ++i) CHECK(out[i] == expect[i]);
  // the brute-force reference agrees
  Tensor<double> ref = oracle::conv3x3_reference(x, w, b);
  for (int i = 0; i < 9; ++i) CHECK(ref[i] == expect[i]);
}

TEST_CASE("conv3x3 delta kernel is the identity") {
  glymph::Rng rng(11);
  Tensor<double> x({2, 3, 5, 7});
  fill_normal(x, rng);
  Tensor<double> w({3, 3, 3, 3});
  for (int c = 0; c < 3; ++c) w.at(c, c, 1, 1) = 1.0;
  Tensor<double> b({3});
  Tensor<double> out = glymph::conv3x3(x, w, b);
  REQUIRE(out.same_shape(x));
  for (Eigen::Index i = 0; i < x.size(); ++i) CHECK(out[i] == x[i]);
}

TEST_CASE("conv3x3 zero input broadcasts the bias") {
  Tensor<float> x({2, 2, 4, 4});
  glymph::Rng rng(3);
  Tensor<float> w({3, 2, 3, 3});
  fill_normal(w, rng);
  Tensor<float> b({3}, {0.5f, -1.5f, 2.0f});
  Tensor<float> out = glymph::conv3x3(x, w, b);
  for (int bt = 0; bt < 2; ++bt)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(out.at(bt, c, i, j) == b[c]);
}

TEST_CASE("conv3x3 matches the nested-loop reference bit for bit") {
  glymph::Rng rng(1234);
  for (int trial = 0; trial < 25; ++trial) {
    const int n_batch = 1 + static_cast<int>(rng.below(3));
    const int c_in = 1 + static_cast<int>(rng.below(4));
    const int c_out = 1 + static_cast<int>(rng.below(5));
    const int h = 1 + static_cast<int>(rng.below(9));
    const int wd = 1 + static_cast<int>(rng.below(9));
    SUBCASE(("trial " + std::to_string(trial)).c_str()) {}

    Tensor<float> x({n_batch, c_in, h, wd}), w({c_out, c_in, 3, 3}), b({c_out});
    fill_normal(x, rng);
    fill_normal(w, rng);
    fill_normal(b, rng);
    Tensor<float> got = glymph::conv3x3(x, w, b);
    Tensor<float> ref = oracle::conv3x3_reference(x, w, b);
    REQUIRE(got.same_shape(ref));
    for (Eigen::Index i = 0; i < got.size(); ++i) REQUIRE(got[i] == ref[i]);

    Tensor<double> xd({n_batch, c_in, h, wd}), wd_({c_out, c_in, 3, 3}), bd({c_out});
    fill_normal(xd, rng);
    fill_normal(wd_, rng);
    fill_normal(bd, rng);
    Tensor<double> gotd = glymph::conv3x3(xd, wd_, bd);
    Tensor<double> refd = oracle::conv3x3_reference(xd, wd_, bd);
    for (Eigen::Index i = 0; i < gotd.size(); ++i) REQUIRE(gotd[i] == refd[i]);
  }
}

TEST_CASE("conv3x3 is linear in its input") {
  glymph::Rng rng(5);
  Tensor<double> x({1, 2, 6, 6}), z({1, 2, 6, 6}), w({3, 2, 3, 3}), b({3});
  fill_normal(x, rng);
  fill_normal(z, rng);
  fill_normal(w, rng);
  const double a = 1.75, c = -0.5;
  Tensor<double> mix({1, 2, 6, 6});
  mix.values() = a * x.values() + c * z.values();
  Tensor<double> lhs = glymph::conv3x3(mix, w, b);
  Tensor<double> rx = glymph::conv3x3(x, w, b);
  Tensor<double> rz = glymph::conv3x3(z, w, b);
  for (Eigen::Index i = 0; i < lhs.size(); ++i)
    CHECK(lhs[i] == doctest::Approx(a * rx[i] + c * rz[i]).epsilon(1e-12));
}

TEST_CASE("conv3x3 rejects channel mismatch") {
  Tensor<double> x({1, 2, 4, 4}), w({3, 5, 3, 3}), b({3});
  CHECK_THROWS_AS(glymph::conv3x3(x, w, b), glymph::Error);
}

TEST_CASE("conv3x3 gradients match finite differences") {
  glymph::Rng rng(77);
  Tensor<double> x({1, 2, 4, 4}), w({3, 2, 3, 3}), b({3});
  fill_normal(x, rng);
  fill_normal(w, rng, 0.5);
  fill_normal(b, rng, 0.2);
  Tensor<double> proj({1, 3, 4, 4});
  fill_normal(proj, rng);

  auto f = [&]() { return (glymph::conv3x3(x, w, b).values() * proj.values()).sum(); };
  glymph::conv3x3_backward(proj, x, w, b);
  CHECK(glymph::max_relative_grad_error(f, x, 1e-5) < 1e-4);
  CHECK(glymph::max_relative_grad_error(f, w, 1e-5) < 1e-4);
  CHECK(glymph::max_relative_grad_error(f, b, 1e-5) < 1e-4);
}

// ---------------------------------------------------------------------------
// conv1x1
// ---------------------------------------------------------------------------

TEST_CASE("conv1x1 forward and gradients") {
  glymph::Rng rng(21);
  Tensor<double> x({2, 3, 3, 3}), w({2, 3, 1, 1}), b({2});
  fill_normal(x, rng);
  fill_normal(w, rng);
  fill_normal(b, rng);

  Tensor<double> out = glymph::conv1x1(x, w, b);
  // hand-computed pixel: channels mix pointwise
  double want = b[0];
  for (int ci = 0; ci < 3; ++ci) want += x.at(1, ci, 2, 1) * w.at(0, ci, 0, 0);
  CHECK(out.at(1, 0, 2, 1) == doctest::Approx(want).epsilon(1e-14));

  Tensor<double> proj(out.shape());
  fill_normal(proj, rng);
  auto f = [&]() { return (glymph::conv1x1(x, w, b).values() * proj.values()).sum(); };
  glymph::conv1x1_backward(proj, x, w, b);
  CHECK(glymph::max_relative_grad_error(f, x, 1e-5) < 1e-4);
  CHECK(glymph::max_relative_grad_error(f, w, 1e-5) < 1e-4);
  CHECK(glymph::max_relative_grad_error(f, b, 1e-5) < 1e-4);
}

// ---------------------------------------------------------------------------
// upconv2x2
// ---------------------------------------------------------------------------

TEST_CASE("upconv2x2 single pixel spreads through the kernel") {
  Tensor<double> x = Tensor<double>::full({1, 1, 1, 1}, 3.25);
  Tensor<double> w = Tensor<double>::full({1, 1, 2, 2}, 1.0);
  Tensor<double> b({1});
  Tensor<double> out = glymph::upconv2x2(x, w, b);
  REQUIRE(out.shape() == std::vector<int>{1, 1, 2, 2});
  for (int i = 0; i < 4; ++i) CHECK(out[i] == 3.25);
}

TEST_CASE("upconv2x2 zero input broadcasts bias and doubles extent") {
  Tensor<double> x({2, 3, 4, 5});
  glymph::Rng rng(2);
  Tensor<double> w({3, 2, 2, 2});
  fill_normal(w, rng);
  Tensor<double> b({2}, {0.25, -1.0});
  Tensor<double> out = glymph::upconv2x2(x, w, b);
  REQUIRE(out.shape() == std::vector<int>{2, 2, 8, 10});
  for (int bt = 0; bt < 2; ++bt)
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 10; ++j) CHECK(out.at(bt, c, i, j) == b[c]);
}

TEST_CASE("upconv2x2 gradients match finite differences") {
  glymph::Rng rng(31);
  Tensor<double> x({1, 2, 3, 3}), w({2, 3, 2, 2}), b({3});
  fill_normal(x, rng);
  fill_normal(w, rng);
  fill_normal(b, rng);
  Tensor<double> proj({1, 3, 6, 6});
  fill_normal(proj, rng);

  auto f = [&]() { return (glymph::upconv2x2(x, w, b).values() * proj.values()).sum(); };
  glymph::upconv2x2_backward(proj, x, w, b);
  CHECK(glymph::max_relative_grad_error(f, x, 1e-5) < 1e-4);
  CHECK(glymph::max_relative_grad_error(f, w, 1e-5) < 1e-4);
  CHECK(glymph::max_relative_grad_error(f, b, 1e-5) < 1e-4);
}

TEST_CASE("upconv2x2 rejects channel mismatch") {
  Tensor<double> x({1, 4, 3, 3}), w({2, 3, 2, 2}), b({3});
  CHECK_THROWS_AS(glymph::upconv2x2(x, w, b), glymph::Error);
}

// ---------------------------------------------------------------------------
// maxpool2x2
// ---------------------------------------------------------------------------

TEST_CASE("maxpool2x2 picks the window maximum") {
  Tensor<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor<double> out = glymph::maxpool2x2(x);
  REQUIRE(out.size() == 1);
  CHECK(out[0] == 4);

  Tensor<double> gout = Tensor<double>::full({1, 1, 1, 1}, 1.0);
  glymph::maxpool2x2_backward(gout, x);
  CHECK(x.grad()[0] == 0);
  CHECK(x.grad()[1] == 0);
  CHECK(x.grad()[2] == 0);
  CHECK(x.grad()[3] == 1);
}

TEST_CASE("maxpool2x2 tie routes to the first row-major position") {
  Tensor<double> x = Tensor<double>::full({1, 1, 2, 2}, 5.0);
  Tensor<double> out = glymph::maxpool2x2(x);
  CHECK(out[0] == 5);
  Tensor<double> gout = Tensor<double>::full({1, 1, 1, 1}, 2.0);
  glymph::maxpool2x2_backward(gout, x);
  CHECK(x.grad()[0] == 2);
  CHECK(x.grad()[1] == 0);
  CHECK(x.grad()[2] == 0);
  CHECK(x.grad()[3] == 0);
}

TEST_CASE("maxpool2x2 rejects odd extents and bounds its output") {
  Tensor<double> odd({1, 1, 3, 4});
  CHECK_THROWS_AS(glymph::maxpool2x2(odd), glymph::Error);

  glymph::Rng rng(17);
  Tensor<double> x({2, 3, 6, 8});
  fill_normal(x, rng);
  Tensor<double> out = glymph::maxpool2x2(x);
  CHECK(out.values().maxCoeff() == x.values().maxCoeff());
  CHECK(out.values().minCoeff() >= x.values().minCoeff());
}

TEST_CASE("maxpool2x2 gradient matches finite differences away from ties") {
  glymph::Rng rng(19);
  Tensor<double> x({1, 2, 4, 4});
  fill_kink_free(x, rng);
  Tensor<double> proj({1, 2, 2, 2});
  fill_normal(proj, rng);
  auto f = [&]() { return (glymph::maxpool2x2(x).values() * proj.values()).sum(); };
  glymph::maxpool2x2_backward(proj, x);
  CHECK(glymph::max_relative_grad_error(f, x, 1e-6) < 1e-4);
}

// ---------------------------------------------------------------------------
// batchnorm2d
// ---------------------------------------------------------------------------

TEST_CASE("batchnorm2d constant channel maps to beta") {
  Tensor<double> x = Tensor<double>::full({2, 1, 3, 3}, 4.0);
  Tensor<double> gamma = Tensor<double>::full({1}, 1.0);
  Tensor<double> beta = Tensor<double>::full({1}, 0.7);
  Tensor<double> rm({1}), rv = Tensor<double>::full({1}, 1.0);
  Tensor<double> out = glymph::batchnorm2d(x, gamma, beta, rm, rv, Mode::Train);
  for (Eigen::Index i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(0.7).epsilon(1e-12));
  // running statistics moved toward the batch statistics
  CHECK(rm[0] == doctest::Approx(0.1 * 4.0));
}

TEST_CASE("batchnorm2d maps {0,2} to {-1,+1} as epsilon vanishes") {
  Tensor<double> x({2, 1, 1, 1}, {0.0, 2.0});
  Tensor<double> gamma = Tensor<double>::full({1}, 1.0);
  Tensor<double> beta({1});
  Tensor<double> rm({1}), rv = Tensor<double>::full({1}, 1.0);
  Tensor<double> out = glymph::batchnorm2d(x, gamma, beta, rm, rv, Mode::Train, /*eps=*/0.0);
  CHECK(out[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("batchnorm2d eval with unit running stats is the identity") {
  glymph::Rng rng(23);
  Tensor<double> x({1, 2, 3, 3});
  fill_normal(x, rng);
  Tensor<double> gamma = Tensor<double>::full({2}, 1.0);
  Tensor<double> beta({2});
  Tensor<double> rm({2}), rv = Tensor<double>::full({2}, 1.0);
  Tensor<double> out = glymph::batchnorm2d(x, gamma, beta, rm, rv, Mode::Eval, /*eps=*/0.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) CHECK(out[i] == doctest::Approx(x[i]).epsilon(1e-14));
}

TEST_CASE("batchnorm2d train output has vanishing channel means") {
  glymph::Rng rng(29);
  Tensor<double> x({4, 3, 5, 5});
  fill_normal(x, rng, 2.5);
  x.values() += 1.25;
  Tensor<double> gamma = Tensor<double>::full({3}, 1.0);
  Tensor<double> beta({3});
  Tensor<double> rm({3}), rv = Tensor<double>::full({3}, 1.0);
  Tensor<double> out = glymph::batchnorm2d(x, gamma, beta, rm, rv, Mode::Train);
  const Eigen::Index plane = 25;
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (int b = 0; b < 4; ++b)
      for (Eigen::Index t = 0; t < plane; ++t) mean += out[(b * 3 + c) * plane + t];
    mean /= 4 * plane;
    CHECK(std::abs(mean) < 1e-6);
  }
}

TEST_CASE("batchnorm2d train requires two values per channel") {
  Tensor<double> x({1, 2, 1, 1});
  Tensor<double> gamma = Tensor<double>::full({2}, 1.0), beta({2}), rm({2}),
                 rv = Tensor<double>::full({2}, 1.0);
  CHECK_THROWS_AS(glymph::batchnorm2d(x, gamma, beta, rm, rv, Mode::Train), glymph::Error);
  CHECK_NOTHROW(glymph::batchnorm2d(x, gamma, beta, rm, rv, Mode::Eval));
}

TEST_CASE("batchnorm2d gradients match finite differences (train and eval)") {
  glymph::Rng rng(37);
  Tensor<double> x({2, 2, 3, 3});
  fill_normal(x, rng);
  Tensor<double> gamma({2}, {1.2, 0.8}), beta({2}, {0.1, -0.3});
  Tensor<double> rm({2}, {0.2, -0.1}), rv({2}, {1.5, 0.7});
  Tensor<double> proj(x.shape());
  fill_normal(proj, rng);

  for (Mode mode : {Mode::Train, Mode::Eval}) {
    x.drop_grad();
    gamma.drop_grad();
    beta.drop_grad();
    auto f = [&]() {
      Tensor<double> rm_c = rm, rv_c = rv; // keep running stats fixed across evaluations
      return (glymph::batchnorm2d(x, gamma, beta, rm_c, rv_c, mode).values() * proj.values())
          .sum();
    };
    glymph::batchnorm2d_backward(proj, x, gamma, beta, rm, rv, mode);
    CHECK(glymph::max_relative_grad_error(f, x, 1e-6) < 1e-4);
    CHECK(glymph::max_relative_grad_error(f, gamma, 1e-6) < 1e-4);
    CHECK(glymph::max_relative_grad_error(f, beta, 1e-6) < 1e-4);
  }
}

// ---------------------------------------------------------------------------
// relu / concat
// ---------------------------------------------------------------------------

TEST_CASE("relu forward and subgradient") {
  Tensor<double> x({1, 1, 1, 3}, {-1.0, 2.0, -3.0});
  Tensor<double> out = glymph::relu(x);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 2.0);
  CHECK(out[2] == 0.0);

  Tensor<double> gout({1, 1, 1, 3}, {5.0, 5.0, 5.0});
  glymph::relu_backward(gout, x);
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 5.0);
  CHECK(x.grad()[2] == 0.0);
}

TEST_CASE("concat_channels layout and backward split") {
  glymph::Rng rng(41);
  Tensor<double> a({2, 2, 3, 3}), b({2, 3, 3, 3});
  fill_normal(a, rng);
  fill_normal(b, rng);
  Tensor<double> out = glymph::concat_channels(a, b);
  REQUIRE(out.shape() == std::vector<int>{2, 5, 3, 3});
  for (int bt = 0; bt < 2; ++bt)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        CHECK(out.at(bt, 0, i, j) == a.at(bt, 0, i, j));
        CHECK(out.at(bt, 4, i, j) == b.at(bt, 2, i, j));
      }

  Tensor<double> gout(out.shape());
  fill_normal(gout, rng);
  glymph::concat_channels_backward(gout, a, b);
  for (int bt = 0; bt < 2; ++bt)
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(a.grad()[((bt * 2 + c) * 3 + i) * 3 + j] == gout.at(bt, c, i, j));

  Tensor<double> spatial_mismatch({2, 3, 4, 3});
  CHECK_THROWS_AS(glymph::concat_channels(a, spatial_mismatch), glymph::Error);
}

TEST_CASE("linear map finite differences are exact to near machine precision") {
  // grad_check sanity: a pure linear functional has no truncation error
  glymph::Rng rng(43);
  Tensor<double> x({1, 1, 4, 4});
  fill_normal(x, rng);
  Tensor<double> proj(x.shape());
  fill_normal(proj, rng);
  auto f = [&]() { return (x.values() * proj.values()).sum(); };
  x.ensure_grad() = proj.values();
  CHECK(glymph::max_relative_grad_error(f, x, 1e-5) < 1e-8);
}
