#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "hairshift/superpixels.hpp"
#include "support.hpp"

using namespace hairshift;
namespace tt = hairshift::testing;

TEST_SUITE_BEGIN("superpixels");

namespace {

Image random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    return Image(tt::random_tensor({h, w, 3}, seed, 0.0, 1.0));
}

BinaryMask blob_mask(std::size_t h, std::size_t w, std::uint64_t seed, int blobs = 3) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> uy(0, h - 1), ux(0, w - 1);
    std::uniform_int_distribution<std::size_t> rad(3, 8);
    BinaryMask m(h, w);
    for (int b = 0; b < blobs; ++b) {
        const std::size_t cy = uy(rng), cx = ux(rng), r = rad(rng);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double dy = static_cast<double>(y) - static_cast<double>(cy);
                const double dx = static_cast<double>(x) - static_cast<double>(cx);
                if (dy * dy + dx * dx <= static_cast<double>(r * r)) m.at(y, x) = 1;
            }
    }
    return m;
}

// Brute-force minimum-cost assignment over every permutation.
std::vector<int> brute_force_assignment(const Tensor& cost) {
    const std::size_t n = cost.dim(0);
    std::vector<int> perm(n), best(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best_cost = std::numeric_limits<double>::infinity();
    std::vector<int> p = perm;
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) c += cost.at2(i, static_cast<std::size_t>(p[i]));
        if (c < best_cost) {
            best_cost = c;
            best = p;
        }
    } while (std::next_permutation(p.begin(), p.end()));
    return best;
}

StyleRegionSet random_region_set(std::uint64_t seed, std::size_t n = 5) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-10.0, 10.0);
    StyleRegionSet s;
    s.centroids = Tensor({n, 5});
    for (std::size_t i = 0; i < n * 5; ++i) s.centroids[i] = uni(rng);
    s.labels.resize(n);
    std::iota(s.labels.begin(), s.labels.end(), 0);
    // one marker pixel per region so masks are distinct
    s.masks.assign(n, BinaryMask(1, n));
    for (std::size_t i = 0; i < n; ++i) s.masks[i].at(0, i) = 1;
    return s;
}

StyleRegionSet permuted(const StyleRegionSet& s, const std::vector<std::size_t>& perm) {
    StyleRegionSet out;
    const std::size_t n = s.region_count();
    out.centroids = Tensor({n, 5});
    out.masks.resize(n);
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = perm[i];
        out.masks[i] = s.masks[j];
        out.labels[i] = static_cast<int>(i);  // fresh labels, as from slic
        for (int f = 0; f < 5; ++f) out.centroids.at2(i, f) = s.centroids.at2(j, f);
    }
    return out;
}

}  // namespace

TEST_CASE("uniform image, square mask, four equal regions on a grid") {
    Image img(Tensor({32, 32, 3}, 0.5));
    BinaryMask mask(32, 32);
    for (std::size_t y = 6; y < 26; ++y)
        for (std::size_t x = 6; x < 26; ++x) mask.at(y, x) = 1;
    StyleRegionSet s = slic_hair(img, mask, 4);
    s.validate_partition(mask);
    const double expected = 400.0 / 4.0;
    for (const auto& m : s.masks)
        CHECK(std::fabs(static_cast<double>(m.count()) - expected) <= 0.1 * expected);

    // centroids form a 2x2 spatial grid: two distinct x positions, two y
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < 4; ++i) {
        xs.push_back(s.centroids.at2(i, 0));
        ys.push_back(s.centroids.at2(i, 1));
    }
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    CHECK(xs[0] == doctest::Approx(xs[1]).epsilon(1e-9));
    CHECK(xs[2] == doctest::Approx(xs[3]).epsilon(1e-9));
    CHECK(xs[2] - xs[1] > 1.0);
    CHECK(ys[0] == doctest::Approx(ys[1]).epsilon(1e-9));
    CHECK(ys[2] == doctest::Approx(ys[3]).epsilon(1e-9));
    CHECK(ys[2] - ys[1] > 1.0);

    // returned assignment is at least as good as the ideal quadrant split
    // (color terms vanish on a uniform image, so energy is purely spatial)
    std::vector<double> trace;
    StyleRegionSet s2 = slic_hair(img, mask, 4, kDefaultSlicCompactness, kDefaultSlicIters, 0, &trace);
    REQUIRE(!trace.empty());
    double quadrant_energy = 0.0;
    {
        const double scale = kDefaultSlicCompactness / std::sqrt(400.0 / 4.0);
        // quadrant centroid offsets: mean of 0..9 = 4.5 within each half
        for (std::size_t y = 6; y < 26; ++y)
            for (std::size_t x = 6; x < 26; ++x) {
                const double cy = (y < 16) ? 10.5 : 20.5;
                const double cx = (x < 16) ? 10.5 : 20.5;
                const double dy = (static_cast<double>(y) - cy) * scale;
                const double dx = (static_cast<double>(x) - cx) * scale;
                quadrant_energy += dx * dx + dy * dy;
            }
    }
    CHECK(trace.back() <= quadrant_energy + 1e-6);
}

TEST_CASE("single region equals the hair mask") {
    Image img = random_image(24, 24, 7);
    BinaryMask mask = blob_mask(24, 24, 8);
    StyleRegionSet s = slic_hair(img, mask, 1);
    REQUIRE(s.region_count() == 1);
    CHECK(mask_equal(s.masks[0], mask));
}

TEST_CASE("determinism under identical inputs") {
    Image img = random_image(32, 32, 9);
    BinaryMask mask = blob_mask(32, 32, 10);
    StyleRegionSet a = slic_hair(img, mask, 5);
    StyleRegionSet b = slic_hair(img, mask, 5);
    REQUIRE(a.region_count() == b.region_count());
    for (std::size_t i = 0; i < a.region_count(); ++i)
        CHECK(mask_equal(a.masks[i], b.masks[i]));
    CHECK(a.centroids.vec() == b.centroids.vec());
}

TEST_CASE("partition and monotone energy over random fixtures") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        Image img = random_image(32, 32, 300 + s);
        BinaryMask mask = blob_mask(32, 32, 400 + s);
        if (mask.count() < 5) continue;
        std::vector<double> trace;
        StyleRegionSet regions = slic_hair(img, mask, 5, 10.0, 10, 0, &trace);
        regions.validate_partition(mask);
        for (std::size_t i = 1; i < trace.size(); ++i)
            CHECK(trace[i] <= trace[i - 1] + 1e-9 * (1.0 + trace[i - 1]));
    }
}

TEST_CASE("slic error paths") {
    Image img = random_image(16, 16, 11);
    CHECK_THROWS_AS(slic_hair(img, BinaryMask(16, 16), 3), EmptyRegionError);
    BinaryMask tiny(16, 16);
    tiny.at(0, 0) = 1;
    tiny.at(0, 1) = 1;
    CHECK_THROWS_AS(slic_hair(img, tiny, 3), ArgumentError);
    CHECK_THROWS_AS(slic_hair(img, tiny, 0), ArgumentError);
    CHECK_THROWS_AS(slic_hair(img, BinaryMask(8, 8, 1), 3), DimensionError);
}

TEST_CASE("tracking identity") {
    StyleRegionSet s = random_region_set(21);
    StyleRegionSet tracked = track_style_regions(s, s);
    CHECK(tracked.labels == s.labels);
    for (std::size_t i = 0; i < s.region_count(); ++i)
        CHECK(mask_equal(tracked.masks[i], s.masks[i]));
}

TEST_CASE("tracking recovers random permutations exactly") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 25; ++trial) {
        StyleRegionSet prev = random_region_set(500 + static_cast<std::uint64_t>(trial));
        std::vector<std::size_t> perm(5);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        StyleRegionSet curr = permuted(prev, perm);
        StyleRegionSet tracked = track_style_regions(prev, curr);
        CHECK(tracked.labels == prev.labels);
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(mask_equal(tracked.masks[i], prev.masks[i]));
            for (int f = 0; f < 5; ++f)
                CHECK(tracked.centroids.at2(i, static_cast<std::size_t>(f)) ==
                      prev.centroids.at2(i, static_cast<std::size_t>(f)));
        }
    }
}

TEST_CASE("uniform centroid shifts preserve the matching") {
    StyleRegionSet prev = random_region_set(23);
    StyleRegionSet curr = prev;
    for (std::size_t i = 0; i < 5; ++i) {
        curr.centroids.at2(i, 0) += 1.0;
        curr.centroids.at2(i, 1) += 1.0;
    }
    StyleRegionSet tracked = track_style_regions(prev, curr);
    for (std::size_t i = 0; i < 5; ++i) CHECK(mask_equal(tracked.masks[i], prev.masks[i]));

    // cross-check against brute force over all 5! assignments
    Tensor cost({5, 5});
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double s = 0.0;
            for (int f = 0; f < 5; ++f) {
                const double d = prev.centroids.at2(i, static_cast<std::size_t>(f)) -
                                 curr.centroids.at2(j, static_cast<std::size_t>(f));
                s += d * d;
            }
            cost.at2(i, j) = std::sqrt(s);
        }
    CHECK(brute_force_assignment(cost) == min_cost_assignment(cost));
}

TEST_CASE("hungarian equals brute force on random matrices") {
    for (std::uint64_t s = 0; s < 30; ++s) {
        Tensor cost = tt::random_tensor({5, 5}, 700 + s, 0.0, 10.0);
        CHECK(min_cost_assignment(cost) == brute_force_assignment(cost));
    }
}

TEST_CASE("tracking rejects mismatched region counts") {
    StyleRegionSet a = random_region_set(31, 5);
    StyleRegionSet b = random_region_set(32, 4);
    CHECK_THROWS_AS(track_style_regions(a, b), ArgumentError);
}

TEST_SUITE_END();
