#include <gtest/gtest.h>

#include "drfn/tensor.hpp"
#include "test_util.hpp"

using drfn::Dims;
using drfn::Tensor;

TEST(Tensor, StorageMatchesDimsAndRejectsZeroExtent) {
  const Tensor t(Dims{2, 3, 4, 5});
  EXPECT_EQ(t.size(), 120u);
  EXPECT_THROW(Tensor(Dims{1, 0, 2, 2}), drfn::ShapeError);
  EXPECT_THROW(Tensor(Dims{1, 1, 2, 2}, std::vector<float>(3)), drfn::ShapeError);
}

TEST(Tensor, OffsetIsRowMajorNchw) {
  const Tensor t(Dims{2, 3, 4, 5});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 5; ++x) EXPECT_EQ(t.offset(i, j, y, x), ((i * 3 + j) * 4 + y) * 5 + x);
}

TEST(Tensor, WriteThenReadRoundTrips) {
  Tensor t(Dims{2, 2, 3, 3});
  float v = 0.5f;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) t.at(i, j, y, x) = (v += 1.25f);
  v = 0.5f;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) EXPECT_EQ(t.at(i, j, y, x), v += 1.25f);
  EXPECT_THROW(t.at(0, 2, 0, 0), drfn::ShapeError);
}

TEST(Concat, ThreeSixtyFourChannelPathsGiveOneNinetyTwo) {
  const Tensor a(Dims{1, 64, 5, 6}, 1.0f), b(Dims{1, 64, 5, 6}, 2.0f), c(Dims{1, 64, 5, 6}, 3.0f);
  EXPECT_EQ(drfn::concat_channels(a, b, c).dims(), (Dims{1, 192, 5, 6}));
}

TEST(Concat, PreservesValuesAndOrder) {
  const Tensor v(Dims{1, 1, 2, 2}, 0.75f);
  const Tensor same = drfn::concat_channels(v, v, v);
  EXPECT_EQ(same.dims(), (Dims{1, 3, 2, 2}));
  for (float x : same.data()) EXPECT_EQ(x, 0.75f);

  const Tensor ordered = drfn::concat_channels(Tensor(Dims{}, 1.0f), Tensor(Dims{}, 2.0f), Tensor(Dims{}, 3.0f));
  EXPECT_EQ(ordered.values(), (std::vector<float>{1, 2, 3}));
}

TEST(Concat, SliceRecoversEveryInput) {
  const auto a = testutil::random_tensor<float>({2, 2, 3, 4}, 1);
  const auto b = testutil::random_tensor<float>({2, 3, 3, 4}, 2);
  const auto c = testutil::random_tensor<float>({2, 1, 3, 4}, 3);
  const Tensor cat = drfn::concat_channels(a, b, c);
  EXPECT_EQ(drfn::slice_channels(cat, 0, 2), a);
  EXPECT_EQ(drfn::slice_channels(cat, 2, 3), b);
  EXPECT_EQ(drfn::slice_channels(cat, 5, 1), c);
  EXPECT_THROW(drfn::concat_channels(a, Tensor(Dims{2, 1, 3, 5}), c), drfn::ShapeError);
  EXPECT_THROW(drfn::slice_channels(cat, 5, 2), drfn::ShapeError);
}

TEST(Add, IdentityInverseAndValues) {
  const auto x = testutil::random_tensor<float>({1, 2, 3, 3}, 4);
  EXPECT_EQ(drfn::add(x, Tensor(x.dims())), x);
  const Tensor neg = drfn::map_unary<float>(x, [](float v) { return -v; });
  const Tensor zero = drfn::add(x, neg);
  for (float v : zero.data()) EXPECT_EQ(v, 0.0f);
  const Tensor s = drfn::add(Tensor(Dims{1, 1, 1, 2}, {1, 2}), Tensor(Dims{1, 1, 1, 2}, {3, 4}));
  EXPECT_EQ(s.values(), (std::vector<float>{4, 6}));
  EXPECT_THROW(drfn::add(x, Tensor(Dims{1, 2, 3, 4})), drfn::ShapeError);
}

TEST(Add, CommutativeAndAssociativeOnExactValues) {
  const Tensor a(Dims{1, 1, 1, 3}, {0.5f, 2.0f, -8.0f});
  const Tensor b(Dims{1, 1, 1, 3}, {1.25f, -4.0f, 16.0f});
  const Tensor c(Dims{1, 1, 1, 3}, {-0.75f, 1.0f, 0.25f});
  EXPECT_EQ(drfn::add(a, b), drfn::add(b, a));
  EXPECT_EQ(drfn::add(drfn::add(a, b), c), drfn::add(a, drfn::add(b, c)));
}

TEST(MapUnary, Examples) {
  const Tensor x(Dims{1, 1, 1, 2}, {1, -3});
  EXPECT_EQ(drfn::map_unary<float>(x, [](float v) { return v; }), x);
  EXPECT_EQ(drfn::map_unary<float>(x, [](float v) { return 2 * v; }).values(), (std::vector<float>{2, -6}));
  const Tensor y(Dims{1, 1, 1, 3}, {5, -5, 0.5f});
  EXPECT_EQ(drfn::map_unary<float>(y, [](float v) { return std::clamp(v, -1.0f, 1.0f); }).values(),
            (std::vector<float>{1, -1, 0.5f}));
}
