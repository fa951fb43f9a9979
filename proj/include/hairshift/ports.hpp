#pragma once

#include <memory>
#include <vector>

#include "hairshift/autodiff.hpp"
#include "hairshift/types.hpp"

namespace hairshift {

struct GeneratorDims {
    int resolution = kDefaultResolution;
    int latent_layers = kDefaultLatentLayers;
    int latent_dim = kDefaultLatentDim;
    int split_index = kDefaultSplitIndex;
    int feature_res = kDefaultFeatureRes;
    int feature_channels = kDefaultFeatureChannels;
};

// Image generator behind the latent optimization. The three maps factor the
// same network: synthesize(w) == synthesize_from(features(w[:m]), w[m:])
// exactly, and all of them are differentiable in their latent inputs.
class GeneratorPort {
public:
    virtual ~GeneratorPort() = default;
    virtual GeneratorDims dims() const = 0;
    virtual ad::Var synthesize(ad::Graph& g, ad::Var w) const = 0;             // (L,D) -> (3,H,W)
    virtual ad::Var features(ad::Graph& g, ad::Var w_head) const = 0;          // (m,D) -> (C,h,w)
    virtual ad::Var synthesize_from(ad::Graph& g, ad::Var f, ad::Var w_tail) const = 0;
};

// Multi-layer feature pyramid used by perceptual and style losses; fixed
// parameters, differentiable in the image.
class FeatureExtractorPort {
public:
    virtual ~FeatureExtractorPort() = default;
    virtual int layer_count() const = 0;
    virtual std::vector<ad::Var> extract(ad::Graph& g, ad::Var img_chw) const = 0;
};

// 68-channel keypoint heatmaps, differentiable in the image. The 3D
// coordinates (argmax position + depth) feed metrics only.
class KeypointExtractorPort {
public:
    virtual ~KeypointExtractorPort() = default;
    virtual int keypoint_count() const = 0;
    virtual ad::Var extract(ad::Graph& g, ad::Var img_chw) const = 0;  // (68,H,W)
    virtual KeypointHeatmap extract_value(const Image& img) const = 0;
};

class SegmenterPort {
public:
    virtual ~SegmenterPort() = default;
    virtual int num_classes() const = 0;
    virtual ad::Var segment_probs(ad::Graph& g, ad::Var img_chw) const = 0;  // (K,H,W)

    SegHeatmap segment_probs_value(const Image& img) const;
    SemanticLabel segment_labels(const Image& img) const;
};

// The four model ports a pipeline run needs, plus the cached mean latent used
// to initialize inversions. Ports are read-only after construction and safe
// to share across concurrent runs.
struct Ports {
    std::shared_ptr<const GeneratorPort> generator;
    std::shared_ptr<const FeatureExtractorPort> features;
    std::shared_ptr<const KeypointExtractorPort> keypoints;
    std::shared_ptr<const SegmenterPort> segmenter;
    LatentCode mean_latent;
};

// Value-level conveniences over the differentiable port surface.
Image synthesize_image(const GeneratorPort& gen, const LatentCode& w);
FeatureTensor generator_features(const GeneratorPort& gen, const LatentCode& w);
Image synthesize_from_features(const GeneratorPort& gen, const FeatureTensor& f, const Tensor& w_tail);

}  // namespace hairshift
