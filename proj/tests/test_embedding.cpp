#include <cmath>

#include "doctest.h"
#include "hairshift/embedding.hpp"
#include "hairshift/toy_backend.hpp"
#include "support.hpp"

using namespace hairshift;

TEST_SUITE_BEGIN("embedding");

namespace {

ToyConfig embed_cfg() {
    ToyConfig cfg;
    cfg.seed = 404;
    cfg.resolution = 16;
    cfg.latent_layers = 4;
    cfg.latent_dim = 12;
    cfg.split_index = 2;
    cfg.channels = 4;
    cfg.feature_channels = 4;
    return cfg;
}

double image_mse(const Image& a, const Image& b) { return mse(a.tensor(), b.tensor()); }

}  // namespace

TEST_CASE("invert_wplus rejects zero steps") {
    Ports p = make_toy_ports(embed_cfg());
    ToyBackend b(embed_cfg());
    Image img = synthesize_image(*p.generator, b.sample_latent(1));
    CHECK_THROWS_AS(invert_wplus(img, *p.generator, *p.features, p.mean_latent, 0), ArgumentError);
}

TEST_CASE("invert_wplus is deterministic") {
    Ports p = make_toy_ports(embed_cfg());
    ToyBackend b(embed_cfg());
    Image img = synthesize_image(*p.generator, b.sample_latent(2));
    EmbeddingResult r1 = invert_wplus(img, *p.generator, *p.features, p.mean_latent, 40);
    EmbeddingResult r2 = invert_wplus(img, *p.generator, *p.features, p.mean_latent, 40);
    CHECK(r1.w.tensor().vec() == r2.w.tensor().vec());
    CHECK(r1.final_loss == r2.final_loss);
}

TEST_CASE("invert_wplus descends on a generated image") {
    Ports p = make_toy_ports(embed_cfg());
    ToyBackend b(embed_cfg());
    Image img = synthesize_image(*p.generator, b.sample_latent(3));

    double initial = -1.0;
    EmbeddingResult r = invert_wplus(img, *p.generator, *p.features, p.mean_latent, 150, 0.01,
                                     [&](long step, const LossBreakdown& lb) {
                                         if (step == 1) initial = lb.total();
                                     });
    REQUIRE(initial > 0.0);
    CHECK(r.final_loss <= initial);
    CHECK(r.final_loss < 0.5 * initial);  // meaningful progress on the toy
    Image recon = synthesize_image(*p.generator, r.w);
    CHECK(image_mse(recon, img) < image_mse(synthesize_image(*p.generator, p.mean_latent), img));
}

TEST_CASE("embed_fs with zero steps is the initialization identity") {
    Ports p = make_toy_ports(embed_cfg());
    ToyBackend b(embed_cfg());
    LatentCode w = b.sample_latent(4);
    Image img = synthesize_image(*p.generator, w);
    FeatureTensor f0 = embed_fs(img, w, *p.generator, *p.features, 0);
    FeatureTensor expected = generator_features(*p.generator, w);
    CHECK(f0.tensor().vec() == expected.tensor().vec());
}

TEST_CASE("embed_fs output shape matches configured feature dims") {
    ToyConfig cfg = embed_cfg();
    Ports p = make_toy_ports(cfg);
    ToyBackend b(cfg);
    LatentCode w = b.sample_latent(5);
    Image img = synthesize_image(*p.generator, w);
    FeatureTensor f = embed_fs(img, w, *p.generator, *p.features, 5);
    const GeneratorDims d = p.generator->dims();
    CHECK(f.height() == static_cast<std::size_t>(d.feature_res));
    CHECK(f.width() == static_cast<std::size_t>(d.feature_res));
    CHECK(f.channels() == static_cast<std::size_t>(d.feature_channels));
}

TEST_CASE("fs refinement dominates the wplus reconstruction") {
    Ports p = make_toy_ports(embed_cfg());
    ToyBackend b(embed_cfg());
    Image img = synthesize_image(*p.generator, b.sample_latent(6));

    EmbeddingResult inv = invert_wplus(img, *p.generator, *p.features, p.mean_latent, 120);
    Image recon_w = synthesize_image(*p.generator, inv.w);

    FeatureTensor f = embed_fs(img, inv.w, *p.generator, *p.features, 60);
    Image recon_fs = synthesize_from_features(*p.generator, f, inv.w.tail());

    CHECK(image_mse(recon_fs, img) <= image_mse(recon_w, img));
}

TEST_SUITE_END();
