#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hairshift/logging.hpp"
#include "hairshift/losses.hpp"
#include "hairshift/toy_backend.hpp"
#include "support.hpp"

using namespace hairshift;
namespace tt = hairshift::testing;

TEST_SUITE_BEGIN("losses");

namespace {

// Test-only extractor: one layer, the image itself.
struct IdentityExtractor final : FeatureExtractorPort {
    int layer_count() const override { return 1; }
    std::vector<ad::Var> extract(ad::Graph&, ad::Var img) const override { return {img}; }
};

ToyConfig loss_cfg() {
    ToyConfig cfg;
    cfg.seed = 99;
    cfg.resolution = 16;
    cfg.latent_layers = 4;
    cfg.latent_dim = 12;
    cfg.split_index = 2;
    cfg.channels = 4;
    cfg.feature_channels = 4;
    return cfg;
}

KeypointHeatmap constant_offset(const KeypointHeatmap& h, double c) {
    KeypointHeatmap out = h;
    for (std::size_t i = 0; i < out.heatmaps.size(); ++i) out.heatmaps[i] += c;
    return out;
}

// FD check of a scalar loss-of-latent function against its analytic gradient.
void check_latent_grad(const std::function<ad::Var(ad::Graph&, ad::Var)>& build, const Tensor& w0,
                       int probes = 5, std::uint64_t seed = 7) {
    ad::Graph g;
    ad::Var w = g.param(w0);
    ad::Var y = build(g, w);
    g.backward(y);
    Tensor grad = g.grad(w);
    auto f = [&](const Tensor& v) {
        ad::Graph gf;
        return gf.scalar(build(gf, gf.constant(v)));
    };
    auto rep = tt::fd_directional_check(f, w0, grad, probes, seed);
    CHECK(rep.max_rel_err < 1e-4);
}

}  // namespace

TEST_CASE("pose loss oracle values") {
    Ports p = make_toy_ports(loss_cfg());
    ToyBackend b(loss_cfg());
    Image img = synthesize_image(*p.generator, b.sample_latent(1));
    KeypointHeatmap h = p.keypoints->extract_value(img);
    CHECK(pose_loss(h, h) == 0.0);
    const double c = 0.37;
    CHECK(pose_loss(h, constant_offset(h, c)) == doctest::Approx(c * c).epsilon(1e-9));
    CHECK(h.heatmaps.dim(0) == 68);
    KeypointHeatmap bad = h;
    bad.heatmaps = Tensor({68, 8, 8});
    CHECK_THROWS_AS(pose_loss(h, bad), DimensionError);
    // symmetry
    KeypointHeatmap h2 = p.keypoints->extract_value(synthesize_image(*p.generator, b.sample_latent(2)));
    CHECK(pose_loss(h, h2) == doctest::Approx(pose_loss(h2, h)).epsilon(1e-12));
}

TEST_CASE("gram matrix oracle values") {
    CHECK(gram_matrix(Tensor({3, 3, 2})).vec() == std::vector<double>{0, 0, 0, 0});
    Tensor ones({2, 2, 1}, 1.0);
    Tensor g = gram_matrix(ones);
    REQUIRE(g.shape() == std::vector<std::size_t>{1, 1});
    CHECK(g[0] == 4.0);
    Tensor f = tt::random_tensor({4, 5, 3}, 3);
    Tensor gm = gram_matrix(f);
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t bb = 0; bb < 3; ++bb) CHECK(gm.at2(a, bb) == gm.at2(bb, a));
}

TEST_CASE("style loss oracle values") {
    Ports p = make_toy_ports(loss_cfg());
    ToyBackend b(loss_cfg());
    Image a = synthesize_image(*p.generator, b.sample_latent(4));
    Image c = synthesize_image(*p.generator, b.sample_latent(5));
    CHECK(style_loss(a, a, *p.features) == 0.0);
    CHECK(style_loss(a, c, *p.features) == doctest::Approx(style_loss(c, a, *p.features)).epsilon(1e-12));

    // single-channel 1x2 features (1,0) vs (0,1): both Grams are [1]
    ad::Graph g;
    ad::Var fa = g.constant(Tensor::from_data({1, 1, 2}, {1.0, 0.0}));
    ad::Var fb = g.constant(Tensor::from_data({1, 1, 2}, {0.0, 1.0}));
    CHECK(g.scalar(style_loss_var({fa}, {fb})) == 0.0);

    Image small(Tensor({8, 8, 3}, 0.2));
    CHECK_THROWS_AS(style_loss(a, small, *p.features), DimensionError);
}

TEST_CASE("regularization loss oracle values") {
    CHECK(regularization_loss(Tensor({18, 512})) == 0.0);
    CHECK(regularization_loss(Tensor({18, 512}, 1.0)) == doctest::Approx(1.0).epsilon(1e-12));
    Tensor d = tt::random_tensor({6, 9}, 6);
    const double base = regularization_loss(d);
    Tensor d3 = d;
    d3 *= 3.0;
    CHECK(regularization_loss(d3) == doctest::Approx(9.0 * base).epsilon(1e-12));
}

TEST_CASE("masked perceptual loss oracle values") {
    // formula-level single-channel oracle: |3-1| * 1 / 2 = 1
    ad::Graph g;
    ad::Var fa = g.constant(Tensor::from_data({1, 1, 2}, {3.0, 5.0}));
    ad::Var fb = g.constant(Tensor::from_data({1, 1, 2}, {1.0, 5.0}));
    Tensor mask = Tensor::from_data({1, 2}, {1.0, 0.0});
    CHECK(g.scalar(masked_perceptual_var(g, {fa}, {fb}, mask)) == doctest::Approx(1.0).epsilon(1e-12));

    // image-level with the identity extractor: three channels carry the diff
    IdentityExtractor ident;
    Tensor ta({1, 2, 3});
    Tensor tb({1, 2, 3});
    for (std::size_t c = 0; c < 3; ++c) {
        ta.at3(0, 0, c) = 0.3;
        ta.at3(0, 1, c) = 0.5;
        tb.at3(0, 0, c) = 0.1;
        tb.at3(0, 1, c) = 0.5;
    }
    auto m = BinaryMask::from_values(1, 2, {1, 0});
    CHECK(masked_perceptual_loss(Image(ta), Image(tb), m, ident) == doctest::Approx(0.1).epsilon(1e-12));

    // identical images and annihilating masks
    Ports p = make_toy_ports(loss_cfg());
    ToyBackend b(loss_cfg());
    Image a = synthesize_image(*p.generator, b.sample_latent(8));
    Image c = synthesize_image(*p.generator, b.sample_latent(9));
    BinaryMask full(16, 16, 1), none(16, 16, 0);
    CHECK(masked_perceptual_loss(a, a, full, *p.features) == 0.0);
    CHECK(masked_perceptual_loss(a, c, none, *p.features) == 0.0);
}

TEST_CASE("hair style loss oracle values") {
    Ports p = make_toy_ports(loss_cfg());
    ToyBackend b(loss_cfg());
    Image a = synthesize_image(*p.generator, b.sample_latent(10));
    Image c = synthesize_image(*p.generator, b.sample_latent(11));
    BinaryMask m1(16, 16), m2(16, 16);
    for (std::size_t y = 2; y < 9; ++y)
        for (std::size_t x = 3; x < 12; ++x) m1.at(y, x) = 1;
    for (std::size_t y = 5; y < 14; ++y)
        for (std::size_t x = 1; x < 8; ++x) m2.at(y, x) = 1;

    CHECK(hair_style_loss(a, a, m1, m1, *p.features) == 0.0);
    BinaryMask zero(16, 16);
    CHECK(hair_style_loss(a, a, zero, zero, *p.features) == 0.0);

    // definitional equivalence with style_loss on the masked images
    Tensor ma = a.tensor(), mc = c.tensor();
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch) {
                ma.at3(y, x, ch) *= m1.at(y, x);
                mc.at3(y, x, ch) *= m2.at(y, x);
            }
    CHECK(hair_style_loss(a, c, m1, m2, *p.features) ==
          doctest::Approx(style_loss(Image(ma), Image(mc), *p.features)).epsilon(1e-9));
}

TEST_CASE("segmentation cross entropy oracle values") {
    const int k = 16;
    // exact one-hot match
    Tensor probs({static_cast<std::size_t>(k), 2, 2});
    SemanticLabel lab(2, 2, k);
    lab.at(0, 0) = 2;
    lab.at(0, 1) = 7;
    lab.at(1, 0) = 0;
    lab.at(1, 1) = 15;
    for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 2; ++x)
            probs.at3(static_cast<std::size_t>(lab.at(y, x)), y, x) = 1.0;
    CHECK(segmentation_ce_loss(lab, SegHeatmap(probs)) <= 1e-9);

    // uniform -> ln 16
    Tensor uni({static_cast<std::size_t>(k), 2, 2}, 1.0 / k);
    CHECK(segmentation_ce_loss(lab, SegHeatmap(uni)) == doctest::Approx(std::log(16.0)).epsilon(1e-12));

    // permutation of pixel order leaves the value unchanged
    SemanticLabel lab2(2, 2, k);
    lab2.at(0, 0) = 15;
    lab2.at(0, 1) = 0;
    lab2.at(1, 0) = 7;
    lab2.at(1, 1) = 2;
    CHECK(segmentation_ce_loss(lab2, SegHeatmap(uni)) ==
          doctest::Approx(segmentation_ce_loss(lab, SegHeatmap(uni))).epsilon(1e-12));

    SemanticLabel out_of_range(2, 2, 32);
    out_of_range.at(0, 0) = 20;
    CHECK_THROWS_AS(segmentation_ce_loss(out_of_range, SegHeatmap(uni)), ArgumentError);
}

TEST_CASE("local style matching oracle values") {
    Ports p = make_toy_ports(loss_cfg());
    ToyBackend b(loss_cfg());
    Image a = synthesize_image(*p.generator, b.sample_latent(12));
    Image c = synthesize_image(*p.generator, b.sample_latent(13));

    // identical images with identical regions -> 0
    BinaryMask hair(16, 16);
    for (std::size_t y = 2; y < 12; ++y)
        for (std::size_t x = 2; x < 12; ++x) hair.at(y, x) = 1;
    StyleRegionSet r = slic_hair(a, hair, 3);
    CHECK(local_style_matching_loss(a, a, r, r, *p.features) == 0.0);

    // two-region additivity: region 1 identical on both sides, region 2
    // differs -> loss equals the region-2 style loss alone
    StyleRegionSet two;
    two.labels = {0, 1};
    two.masks.assign(2, BinaryMask(16, 16));
    for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 0; x < 6; ++x) two.masks[0].at(y, x) = 1;
    for (std::size_t y = 9; y < 15; ++y)
        for (std::size_t x = 9; x < 15; ++x) two.masks[1].at(y, x) = 1;
    two.centroids = Tensor({2, 5});

    // compose image pair equal on region 0's box, different on region 1's
    Tensor tc = a.tensor();
    for (std::size_t y = 9; y < 15; ++y)
        for (std::size_t x = 9; x < 15; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch) tc.at3(y, x, ch) = c.tensor().at3(y, x, ch);
    Image mixed(tc);

    const double lsm = local_style_matching_loss(a, mixed, two, two, *p.features);

    // region-2 term alone, computed independently on the masked crops
    Tensor pa({6, 6, 3}), pb({6, 6, 3});
    for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 0; x < 6; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch) {
                pa.at3(y, x, ch) = a.tensor().at3(y + 9, x + 9, ch);
                pb.at3(y, x, ch) = mixed.tensor().at3(y + 9, x + 9, ch);
            }
    const double region2 = style_loss(Image(pa), Image(pb), *p.features);
    CHECK(lsm == doctest::Approx(region2).epsilon(1e-9));

    // empty region warns and contributes zero
    StyleRegionSet with_empty = two;
    with_empty.masks[1] = BinaryMask(16, 16);
    const std::size_t warns = logging::warn_count();
    const double v = local_style_matching_loss(a, mixed, with_empty, with_empty, *p.features);
    CHECK(logging::warn_count() > warns);
    CHECK(v == 0.0);  // region 0 is identical, region 1 skipped
}

TEST_CASE("loss breakdown recomposition and csv") {
    LossBreakdown lb;
    lb.add("pose", 0.5, 1.0);
    lb.add("style_local", 0.25, 2.0);
    lb.add("reg", 0.1, 1.0);
    CHECK(lb.total() == doctest::Approx(1.1).epsilon(1e-12));
    CHECK(lb.term("reg") == 0.1);
    CHECK(lb.has("pose"));
    CHECK_FALSE(lb.has("missing"));
    CHECK_THROWS_AS(lb.add("neg", -1.0), ArgumentError);
    CHECK_THROWS_AS(lb.add("pose", 0.2), ArgumentError);

    auto tmp = std::filesystem::temp_directory_path() / "hairshift_losses_test.csv";
    std::filesystem::remove(tmp);
    append_losses_csv(tmp, 0, lb);
    append_losses_csv(tmp, 1, lb);
    std::ifstream f(tmp);
    std::string header;
    std::getline(f, header);
    CHECK(header == "step,pose,style_local,reg,total");
    std::string row;
    int rows = 0;
    while (std::getline(f, row)) ++rows;
    CHECK(rows == 2);
    std::filesystem::remove(tmp);
}

TEST_CASE("every loss is zero at identical inputs and fd-checks through the generator") {
    ToyConfig cfg = loss_cfg();
    Ports p = make_toy_ports(cfg);
    ToyBackend b(cfg);
    LatentCode w_base = b.sample_latent(20);
    const Tensor w0 = w_base.tensor();
    Image base_img = synthesize_image(*p.generator, w_base);
    Image other = synthesize_image(*p.generator, b.sample_latent(21));
    KeypointHeatmap h_ref = p.keypoints->extract_value(other);

    // frozen masks/regions computed at the probe point
    BinaryMask hair(16, 16);
    for (std::size_t y = 1; y < 13; ++y)
        for (std::size_t x = 2; x < 14; ++x) hair.at(y, x) = 1;
    StyleRegionSet regions_trg = slic_hair(other, hair, 3);
    StyleRegionSet regions_gen = slic_hair(base_img, hair, 3);
    regions_gen = track_style_regions(regions_trg, regions_gen);
    SemanticLabel s_obj = p.segmenter->segment_labels(other);
    Tensor mask_t = mask_to_tensor(hair);

    Tensor other_chw = image_to_chw(other);

    SUBCASE("pose") {
        check_latent_grad([&](ad::Graph& g, ad::Var w) {
            return pose_loss_var(g.constant(h_ref.heatmaps), p.keypoints->extract(g, p.generator->synthesize(g, w)));
        }, w0);
    }
    SUBCASE("style") {
        check_latent_grad([&](ad::Graph& g, ad::Var w) {
            return style_loss_var(p.features->extract(g, g.constant(other_chw)),
                                  p.features->extract(g, p.generator->synthesize(g, w)));
        }, w0);
    }
    SUBCASE("local style matching") {
        check_latent_grad([&](ad::Graph& g, ad::Var w) {
            return local_style_matching_var(g, g.constant(other_chw), p.generator->synthesize(g, w),
                                            regions_trg, regions_gen, *p.features);
        }, w0);
    }
    SUBCASE("regularization") {
        check_latent_grad([&](ad::Graph& g, ad::Var w) {
            return regularization_loss_var(ad::sub(w, g.constant(Tensor(w0.shape(), 0.05))));
        }, w0);
    }
    SUBCASE("masked perceptual") {
        check_latent_grad([&](ad::Graph& g, ad::Var w) {
            return masked_perceptual_var(g, p.features->extract(g, g.constant(other_chw)),
                                         p.features->extract(g, p.generator->synthesize(g, w)), mask_t);
        }, w0);
    }
    SUBCASE("hair style") {
        check_latent_grad([&](ad::Graph& g, ad::Var w) {
            return hair_style_var(g, g.constant(other_chw), p.generator->synthesize(g, w), mask_t, mask_t,
                                  *p.features);
        }, w0);
    }
    SUBCASE("segmentation cross entropy") {
        check_latent_grad([&](ad::Graph& g, ad::Var w) {
            return ad::cross_entropy_with_labels(
                p.segmenter->segment_probs(g, p.generator->synthesize(g, w)), s_obj);
        }, w0);
    }
}

TEST_SUITE_END();
