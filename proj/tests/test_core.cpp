#include <random>

#include "doctest.h"
#include "hairshift/types.hpp"
#include "support.hpp"

using namespace hairshift;

TEST_SUITE_BEGIN("core");

namespace {

BinaryMask random_mask(std::size_t h, std::size_t w, std::uint64_t seed, double p = 0.5) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution bit(p);
    BinaryMask m(h, w);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = bit(rng) ? 1 : 0;
    return m;
}

}  // namespace

TEST_CASE("partition_masks: no hair anywhere") {
    BinaryMask zero(4, 4);
    MaskTriplet t = partition_masks(zero, zero);
    CHECK(t.hair.count() == 0);
    CHECK(t.blend.count() == 0);
    CHECK(t.keep.count() == 16);
}

TEST_CASE("partition_masks: identical hair footprints") {
    BinaryMask m = random_mask(8, 8, 11);
    MaskTriplet t = partition_masks(m, m);
    CHECK(mask_equal(t.hair, m));
    CHECK(mask_equal(t.keep, mask_not(m)));
    CHECK(t.blend.count() == 0);
}

TEST_CASE("partition_masks: 2x2 enumeration") {
    auto src = BinaryMask::from_values(2, 2, {1, 0, 0, 0});
    auto aligned = BinaryMask::from_values(2, 2, {0, 1, 0, 0});
    MaskTriplet t = partition_masks(src, aligned);
    CHECK(t.hair.values() == std::vector<std::uint8_t>{0, 1, 0, 0});
    CHECK(t.blend.values() == std::vector<std::uint8_t>{1, 0, 0, 0});
    CHECK(t.keep.values() == std::vector<std::uint8_t>{0, 0, 1, 1});
}

TEST_CASE("partition_masks: partition of unity over random masks") {
    for (std::uint64_t s = 0; s < 50; ++s) {
        BinaryMask a = random_mask(16, 16, 100 + s);
        BinaryMask b = random_mask(16, 16, 200 + s);
        MaskTriplet t = partition_masks(a, b);
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(t.hair[i] + t.blend[i] + t.keep[i] == 1);
    }
}

TEST_CASE("partition_masks: size mismatch") {
    CHECK_THROWS_AS(partition_masks(BinaryMask(4, 4), BinaryMask(4, 5)), DimensionError);
}

TEST_CASE("downsample_mask: all-one stays all-one") {
    BinaryMask ones(256, 256, 1);
    Tensor d = downsample_mask(ones, 32, 32);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("downsample_mask: checkerboard blocks average to 0.5") {
    // Pixel checkerboard downsampled 2x: every output cell covers a 2x2
    // block holding exactly two ones.
    const std::size_t n = 8;
    BinaryMask cb(n, n);
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) cb.at(y, x) = ((y + x) % 2 == 0) ? 1 : 0;
    Tensor d = downsample_mask(cb, n / 2, n / 2);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("downsample_mask: triplet cells sum to one") {
    BinaryMask a = random_mask(48, 48, 5);
    BinaryMask b = random_mask(48, 48, 6);
    MaskTriplet t = partition_masks(a, b);
    SoftMaskTriplet s = downsample_triplet(t, 7, 5);  // non-divisible on purpose
    for (std::size_t i = 0; i < s.hair.size(); ++i)
        CHECK(s.hair[i] + s.blend[i] + s.keep[i] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("area_downsample is linear") {
    auto a = testing::random_tensor({24, 36}, 42, 0.0, 1.0);
    auto b = testing::random_tensor({24, 36}, 43, 0.0, 1.0);
    Tensor ab(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) ab[i] = a[i] + b[i];
    Tensor da = area_downsample(a, 5, 9);
    Tensor db = area_downsample(b, 5, 9);
    Tensor dab = area_downsample(ab, 5, 9);
    for (std::size_t i = 0; i < da.size(); ++i)
        CHECK(dab[i] == doctest::Approx(da[i] + db[i]).epsilon(1e-12));
}

TEST_CASE("downsample_mask rejects non-positive target") {
    CHECK_THROWS_AS(downsample_mask(BinaryMask(8, 8), 0, 4), ArgumentError);
}

TEST_CASE("BinaryMask rejects non-binary data") {
    CHECK_THROWS_AS(BinaryMask::from_values(1, 2, {0, 2}), ArgumentError);
}

TEST_CASE("Image validates range and shape") {
    Tensor bad({2, 2, 3});
    bad[0] = 1.5;
    CHECK_THROWS_AS(Image{bad}, ArgumentError);
    CHECK_THROWS_AS(Image{Tensor({2, 2, 4})}, DimensionError);
    Image ok(Tensor({2, 2, 3}, 0.25));
    CHECK(ok.height() == 2);
}

TEST_CASE("LatentCode split bounds") {
    CHECK_THROWS_AS(LatentCode(Tensor({4, 8}), 0), ArgumentError);
    CHECK_THROWS_AS(LatentCode(Tensor({4, 8}), 4), ArgumentError);
    LatentCode w(Tensor({4, 8}, 1.0), 2);
    CHECK(w.head().shape() == std::vector<std::size_t>{2, 8});
    CHECK(w.tail().shape() == std::vector<std::size_t>{2, 8});
    LatentCode back = LatentCode::from_parts(w.head(), w.tail());
    CHECK(back.tensor().vec() == w.tensor().vec());
}

TEST_CASE("SegHeatmap validates normalization") {
    Tensor p({2, 1, 1});
    p[0] = 0.6;
    p[1] = 0.4;
    SegHeatmap ok(p);
    CHECK(ok.argmax_labels().at(0, 0) == 0);
    p[1] = 0.6;
    CHECK_THROWS_AS(SegHeatmap{p}, ArgumentError);
}

TEST_CASE("MaskTriplet validate catches overlap") {
    MaskTriplet t;
    t.hair = BinaryMask(2, 2, 1);
    t.blend = BinaryMask(2, 2, 1);
    t.keep = BinaryMask(2, 2);
    CHECK_THROWS_AS(t.validate(), ArgumentError);
}

TEST_SUITE_END();
