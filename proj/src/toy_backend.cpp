#include "hairshift/toy_backend.hpp"

#include <cmath>
#include <random>

#include "hairshift/errors.hpp"

namespace hairshift {

namespace {

// Weight init scales; chosen so activations stay in the responsive range of
// tanh, the latent modulation moves the image without saturating it, and the
// loss terms built on these heads land on comparable magnitudes.
constexpr double kConvGain = 1.7;
constexpr double kModulationGain = 0.3;
constexpr double kSegColorGain = 10.0;
constexpr double kSegFieldAmp = 0.5;
constexpr double kCentroidEps = 1e-8;
constexpr double kHeatmapMass = 150.0;       // total mass per keypoint channel
constexpr double kFeatureOutputScale = 0.02;  // keeps Gram magnitudes near unity
// The segmenter reads mean colors over a fixed 4x4 cell grid, so the coarse
// style layers can steer whole label cells.
inline int seg_pool_levels(int resolution) {
    int levels = 0;
    while ((resolution >> levels) > 4) ++levels;
    return levels;
}

Tensor normal_tensor(std::mt19937_64& rng, std::vector<std::size_t> shape, double stddev) {
    std::normal_distribution<double> gauss(0.0, stddev);
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = gauss(rng);
    return t;
}

}  // namespace

struct ToyBackend::Model {
    ToyConfig cfg;

    // generator
    Tensor seed_input;                 // (C,4,4)
    std::vector<Tensor> up_weights;    // (C,C,4,4) per block
    std::vector<Tensor> conv_weights;  // (C,C,3,3) per block
    std::vector<Tensor> style_maps;    // (C,D) per layer
    std::vector<Tensor> style_bias;    // (C) per layer
    Tensor rgb_weights;                // (3,C,1,1)
    Tensor rgb_bias;                   // (3)

    // feature extractor
    std::vector<Tensor> feat_weights;  // layer 0: (F,3,3,3); rest: (F,F,3,3)

    // keypoint head
    Tensor kp_color;  // (68,3,1,1)
    Tensor coord_x;   // (H,W)
    Tensor coord_y;   // (H,W)

    // segmenter head
    Tensor seg_color;  // (K,3,1,1)
    Tensor seg_field;  // (K,H,W)

    LatentCode mean_latent;

    int layers() const { return cfg.latent_layers; }
    int split() const { return cfg.split_index; }

    // Resolution of the activation entering style layer `i`.
    int feature_res_after(int layer) const {
        return 4 << (layer / 2 + 1);
    }

    ad::Var styled_layer(ad::Graph& g, ad::Var x, ad::Var style_row, int layer) const {
        ad::Var weights = g.constant(layer % 2 == 0 ? up_weights[static_cast<std::size_t>(layer / 2)]
                                                    : conv_weights[static_cast<std::size_t>(layer / 2)]);
        ad::Var y = layer % 2 == 0 ? ad::tconv2d(x, weights) : ad::conv2d(x, weights);
        ad::Var scale = ad::add_scalar(
            ad::mul_scalar(ad::matvec(g.constant(style_maps[static_cast<std::size_t>(layer)]), style_row),
                           kModulationGain),
            1.0);
        y = ad::mul_channelwise(y, scale);
        y = ad::add_channelwise(y, g.constant(style_bias[static_cast<std::size_t>(layer)]));
        return ad::tanh(y);
    }

    ad::Var run_layers(ad::Graph& g, ad::Var x, ad::Var styles, int from, int to) const {
        for (int i = from; i < to; ++i)
            x = styled_layer(g, x, ad::row_of(styles, static_cast<std::size_t>(i - from)), i);
        return x;
    }

    ad::Var to_rgb(ad::Graph& g, ad::Var x) const {
        ad::Var y = ad::conv2d(x, g.constant(rgb_weights));
        y = ad::add_channelwise(y, g.constant(rgb_bias));
        return ad::sigmoid(y);
    }

    ad::Var synthesize(ad::Graph& g, ad::Var w) const {
        const Tensor& tw = g.value(w);
        if (tw.rank() != 2 || tw.dim(0) != static_cast<std::size_t>(layers()) ||
            tw.dim(1) != static_cast<std::size_t>(cfg.latent_dim))
            throw ArgumentError("latent shape does not match backend configuration");
        ad::Var x = run_layers(g, g.constant(seed_input), w, 0, layers());
        return to_rgb(g, x);
    }

    ad::Var features(ad::Graph& g, ad::Var w_head) const {
        const Tensor& tw = g.value(w_head);
        if (tw.rank() != 2 || tw.dim(0) != static_cast<std::size_t>(split()) ||
            tw.dim(1) != static_cast<std::size_t>(cfg.latent_dim))
            throw ArgumentError("latent head shape does not match backend configuration");
        return run_layers(g, g.constant(seed_input), w_head, 0, split());
    }

    ad::Var synthesize_from(ad::Graph& g, ad::Var f, ad::Var w_tail) const {
        const Tensor& tf = g.value(f);
        const Tensor& tw = g.value(w_tail);
        const std::size_t fres = static_cast<std::size_t>(feature_res_after(split() - 1));
        if (tf.rank() != 3 || tf.dim(0) != static_cast<std::size_t>(cfg.channels) ||
            tf.dim(1) != fres || tf.dim(2) != fres)
            throw ArgumentError("feature tensor shape does not match backend configuration");
        if (tw.rank() != 2 || tw.dim(0) != static_cast<std::size_t>(layers() - split()) ||
            tw.dim(1) != static_cast<std::size_t>(cfg.latent_dim))
            throw ArgumentError("latent tail shape does not match backend configuration");
        ad::Var x = f;
        for (int i = split(); i < layers(); ++i)
            x = styled_layer(g, x, ad::row_of(w_tail, static_cast<std::size_t>(i - split())), i);
        return to_rgb(g, x);
    }

    void check_image(ad::Graph& g, ad::Var img) const {
        const Tensor& t = g.value(img);
        const std::size_t r = static_cast<std::size_t>(cfg.resolution);
        if (t.rank() != 3 || t.dim(0) != 3 || t.dim(1) != r || t.dim(2) != r)
            throw ArgumentError("image shape does not match backend resolution");
    }

    std::vector<ad::Var> extract_features(ad::Graph& g, ad::Var img) const {
        // Accepts any spatial size >= 1 so masked crops can run through the
        // same pyramid.
        const Tensor& t = g.value(img);
        if (t.rank() != 3 || t.dim(0) != 3) throw ArgumentError("feature extractor expects a 3xHxW image");
        std::vector<ad::Var> out;
        ad::Var x = img;
        for (std::size_t i = 0; i < feat_weights.size(); ++i) {
            if (i) x = ad::avgpool2(x);
            x = ad::tanh(ad::conv2d(x, g.constant(feat_weights[i])));
            out.push_back(ad::mul_scalar(x, kFeatureOutputScale));
        }
        return out;
    }

    // Per-keypoint positive mass map: squared color projection of the image.
    // Its intensity centroid gives the bump center, so translating image
    // content (on black background) translates the keypoints.
    ad::Var keypoint_heatmaps(ad::Graph& g, ad::Var img) const {
        check_image(g, img);
        ad::Var q = ad::square(ad::conv2d(img, g.constant(kp_color)));
        ad::Var mass = ad::add_scalar(ad::channel_sums(q), kCentroidEps);
        ad::Var sx = ad::channel_sums(ad::mul_mask(q, g.constant(coord_x)));
        ad::Var sy = ad::channel_sums(ad::mul_mask(q, g.constant(coord_y)));
        ad::Var cx = ad::div(sx, mass);
        ad::Var cy = ad::div(sy, mass);
        const std::size_t r = static_cast<std::size_t>(cfg.resolution);
        ad::Var bumps = ad::gaussian_bumps(cx, cy, cfg.keypoint_sigma, r, r);
        // Every channel carries the same fixed total mass.
        return ad::mul_scalar(ad::div_channelwise(bumps, ad::channel_sums(bumps)), kHeatmapMass);
    }

    // Class logits read pooled mean colors, so the coarse style layers move
    // whole label regions rather than isolated pixels.
    ad::Var segment_probs(ad::Graph& g, ad::Var img) const {
        check_image(g, img);
        const int levels = seg_pool_levels(cfg.resolution);
        ad::Var pooled = img;
        for (int i = 0; i < levels; ++i) pooled = ad::avgpool2(pooled);
        ad::Var logits = ad::conv2d(ad::add_scalar(pooled, -0.5), g.constant(seg_color));
        logits = ad::add(logits, g.constant(seg_field));
        for (int i = 0; i < levels; ++i) logits = ad::upsample2x(logits);
        return ad::softmax_channels(logits);
    }
};

ToyBackend::ToyBackend(ToyConfig cfg) {
    if (cfg.latent_layers < 2 || cfg.latent_layers % 2 != 0)
        throw ArgumentError("toy backend needs an even number of style layers");
    if (cfg.resolution != (4 << (cfg.latent_layers / 2)))
        throw ArgumentError("toy backend requires resolution == 4 * 2^(L/2)");
    if (cfg.split_index < 1 || cfg.split_index >= cfg.latent_layers)
        throw ArgumentError("split index must satisfy 1 <= m < L");
    if (cfg.channels < 1 || cfg.latent_dim < 1 || cfg.seg_classes < 2)
        throw ArgumentError("bad toy backend dimensions");

    auto model = std::make_shared<Model>();
    model->cfg = cfg;
    const auto c = static_cast<std::size_t>(cfg.channels);
    const auto d = static_cast<std::size_t>(cfg.latent_dim);
    const auto r = static_cast<std::size_t>(cfg.resolution);
    const auto k = static_cast<std::size_t>(cfg.seg_classes);
    const int blocks = cfg.latent_layers / 2;

    std::mt19937_64 rng(cfg.seed);
    model->seed_input = normal_tensor(rng, {c, 4, 4}, 1.0);
    for (int b = 0; b < blocks; ++b) {
        model->up_weights.push_back(normal_tensor(rng, {c, c, 4, 4}, kConvGain / std::sqrt(4.0 * c)));
        model->conv_weights.push_back(normal_tensor(rng, {c, c, 3, 3}, kConvGain / std::sqrt(9.0 * c)));
    }
    for (int i = 0; i < cfg.latent_layers; ++i) {
        model->style_maps.push_back(normal_tensor(rng, {c, d}, 1.0 / std::sqrt(static_cast<double>(d))));
        model->style_bias.push_back(normal_tensor(rng, {c}, 0.1));
    }
    model->rgb_weights = normal_tensor(rng, {3, c, 1, 1}, 1.0 / std::sqrt(static_cast<double>(c)));
    model->rgb_bias = normal_tensor(rng, {3}, 0.3);

    const auto fc = static_cast<std::size_t>(cfg.feature_channels);
    model->feat_weights.push_back(normal_tensor(rng, {fc, 3, 3, 3}, kConvGain / std::sqrt(27.0)));
    for (int i = 1; i < 4; ++i)
        model->feat_weights.push_back(normal_tensor(rng, {fc, fc, 3, 3}, kConvGain / std::sqrt(9.0 * fc)));

    model->kp_color = normal_tensor(rng, {static_cast<std::size_t>(kKeypointCount), 3, 1, 1}, 1.0);
    model->coord_x = Tensor({r, r});
    model->coord_y = Tensor({r, r});
    for (std::size_t y = 0; y < r; ++y)
        for (std::size_t x = 0; x < r; ++x) {
            model->coord_x.at2(y, x) = static_cast<double>(x);
            model->coord_y.at2(y, x) = static_cast<double>(y);
        }

    model->seg_color = normal_tensor(rng, {k, 3, 1, 1}, kSegColorGain);
    const int pool_levels = seg_pool_levels(cfg.resolution);
    if (cfg.resolution % (1 << pool_levels) != 0)
        throw ArgumentError("resolution must be divisible by the segmenter pooling factor");
    const std::size_t rp = r >> pool_levels;
    model->seg_field = Tensor({k, rp, rp});
    {
        std::uniform_int_distribution<int> freq(1, 3);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * 3.14159265358979323846);
        std::normal_distribution<double> amp(0.0, kSegFieldAmp);
        for (std::size_t cls = 0; cls < k; ++cls) {
            for (int comp = 0; comp < 3; ++comp) {
                const double a = amp(rng);
                const double fx = freq(rng), fy = freq(rng);
                const double ph = phase(rng);
                for (std::size_t y = 0; y < rp; ++y)
                    for (std::size_t x = 0; x < rp; ++x)
                        model->seg_field.at3(cls, y, x) +=
                            a * std::sin(2.0 * 3.14159265358979323846 *
                                             (fx * static_cast<double>(x) / static_cast<double>(rp) +
                                              fy * static_cast<double>(y) / static_cast<double>(rp)) +
                                         ph);
            }
        }
    }

    // Mean of 10,000 prior samples, fixed per backend seed.
    {
        std::mt19937_64 mean_rng(cfg.seed ^ 0x6d65616e6c617400ull);
        std::normal_distribution<double> gauss(0.0, 1.0);
        Tensor acc({static_cast<std::size_t>(cfg.latent_layers), d});
        const int samples = 10000;
        for (int s = 0; s < samples; ++s)
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += gauss(mean_rng);
        acc *= 1.0 / static_cast<double>(samples);
        model->mean_latent = LatentCode(std::move(acc), cfg.split_index);
    }

    model_ = std::move(model);
}

ToyBackend::~ToyBackend() = default;

const ToyConfig& ToyBackend::config() const { return model_->cfg; }

GeneratorDims ToyBackend::dims() const {
    const ToyConfig& cfg = model_->cfg;
    GeneratorDims d;
    d.resolution = cfg.resolution;
    d.latent_layers = cfg.latent_layers;
    d.latent_dim = cfg.latent_dim;
    d.split_index = cfg.split_index;
    d.feature_res = model_->feature_res_after(cfg.split_index - 1);
    d.feature_channels = cfg.channels;
    return d;
}

LatentCode ToyBackend::sample_latent(std::uint64_t seed) const {
    std::mt19937_64 rng(model_->cfg.seed * 0x9e3779b97f4a7c15ull + seed);
    Tensor t = normal_tensor(rng, {static_cast<std::size_t>(model_->cfg.latent_layers),
                                   static_cast<std::size_t>(model_->cfg.latent_dim)},
                             1.0);
    return LatentCode(std::move(t), model_->cfg.split_index);
}

LatentCode ToyBackend::mean_latent(int) const { return model_->mean_latent; }

namespace {

class ToyGenerator final : public GeneratorPort {
public:
    ToyGenerator(std::shared_ptr<const ToyBackend::Model> m, GeneratorDims dims)
        : m_(std::move(m)), dims_(dims) {}
    GeneratorDims dims() const override { return dims_; }
    ad::Var synthesize(ad::Graph& g, ad::Var w) const override { return m_->synthesize(g, w); }
    ad::Var features(ad::Graph& g, ad::Var w_head) const override { return m_->features(g, w_head); }
    ad::Var synthesize_from(ad::Graph& g, ad::Var f, ad::Var w_tail) const override {
        return m_->synthesize_from(g, f, w_tail);
    }

private:
    std::shared_ptr<const ToyBackend::Model> m_;
    GeneratorDims dims_;
};

class ToyFeatures final : public FeatureExtractorPort {
public:
    explicit ToyFeatures(std::shared_ptr<const ToyBackend::Model> m) : m_(std::move(m)) {}
    int layer_count() const override { return 4; }
    std::vector<ad::Var> extract(ad::Graph& g, ad::Var img) const override {
        return m_->extract_features(g, img);
    }

private:
    std::shared_ptr<const ToyBackend::Model> m_;
};

class ToyKeypoints final : public KeypointExtractorPort {
public:
    explicit ToyKeypoints(std::shared_ptr<const ToyBackend::Model> m) : m_(std::move(m)) {}
    int keypoint_count() const override { return kKeypointCount; }
    ad::Var extract(ad::Graph& g, ad::Var img) const override { return m_->keypoint_heatmaps(g, img); }

    KeypointHeatmap extract_value(const Image& img) const override {
        ad::Graph g;
        ad::Var chw = g.constant(image_to_chw(img));
        ad::Var h = m_->keypoint_heatmaps(g, chw);
        ad::Var q = ad::square(ad::conv2d(chw, g.constant(m_->kp_color)));
        const Tensor& tq = g.value(q);
        KeypointHeatmap out;
        out.heatmaps = g.value(h);
        const std::size_t r = out.heatmaps.dim(1);
        out.keypoints3d = Tensor({static_cast<std::size_t>(kKeypointCount), 3});
        for (std::size_t c = 0; c < static_cast<std::size_t>(kKeypointCount); ++c) {
            const double* plane = out.heatmaps.data() + c * r * r;
            std::size_t best = 0;
            for (std::size_t i = 1; i < r * r; ++i)
                if (plane[i] > plane[best]) best = i;
            out.keypoints3d.at2(c, 0) = static_cast<double>(best % r);
            out.keypoints3d.at2(c, 1) = static_cast<double>(best / r);
            // Depth: mean mass of the underlying color projection map.
            const double* qp = tq.data() + c * r * r;
            double depth = 0.0;
            for (std::size_t i = 0; i < r * r; ++i) depth += qp[i];
            out.keypoints3d.at2(c, 2) = depth / static_cast<double>(r * r);
        }
        return out;
    }

private:
    std::shared_ptr<const ToyBackend::Model> m_;
};

class ToySegmenter final : public SegmenterPort {
public:
    explicit ToySegmenter(std::shared_ptr<const ToyBackend::Model> m) : m_(std::move(m)) {}
    int num_classes() const override { return m_->cfg.seg_classes; }
    ad::Var segment_probs(ad::Graph& g, ad::Var img) const override {
        return m_->segment_probs(g, img);
    }

private:
    std::shared_ptr<const ToyBackend::Model> m_;
};

}  // namespace

Ports make_toy_ports(const ToyConfig& cfg) {
    ToyBackend backend(cfg);
    auto model = backend.model();
    Ports p;
    p.generator = std::make_shared<ToyGenerator>(model, backend.dims());
    p.features = std::make_shared<ToyFeatures>(model);
    p.keypoints = std::make_shared<ToyKeypoints>(model);
    p.segmenter = std::make_shared<ToySegmenter>(model);
    p.mean_latent = backend.mean_latent();
    return p;
}

}  // namespace hairshift
