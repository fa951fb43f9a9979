#pragma once

#include <cstdint>
#include <memory>

#include "hairshift/ports.hpp"

namespace hairshift {

// Configuration of the smooth, seeded stand-in for the pretrained networks.
// Every map it exposes is C1-smooth, so finite-difference gradient checks are
// valid against the analytic gradients.
struct ToyConfig {
    std::uint64_t seed = 1234;
    int resolution = 64;
    int latent_layers = 8;   // must be even; resolution == 4 * 2^(L/2)
    int latent_dim = 64;
    int split_index = 3;
    int channels = 8;        // generator width
    int feature_channels = 8;
    int seg_classes = kDefaultSegClasses;
    double keypoint_sigma = 2.0;
};

// Deterministic differentiable backend: a 4-stage transposed-convolution
// generator with per-layer style modulation, a small fixed conv feature
// pyramid, and procedural keypoint/segmentation heads that are smooth
// functions of the generated image.
class ToyBackend {
public:
    explicit ToyBackend(ToyConfig cfg);
    ~ToyBackend();

    const ToyConfig& config() const;
    GeneratorDims dims() const;

    // Latent sampled from the standard normal prior of this backend.
    LatentCode sample_latent(std::uint64_t seed) const;
    // Mean of `samples` prior draws; computed once and cached.
    LatentCode mean_latent(int samples = 10000) const;

    struct Model;
    const std::shared_ptr<const Model>& model() const { return model_; }

private:
    std::shared_ptr<const Model> model_;
};

// Build the four ports (plus cached mean latent) backed by one shared toy
// model instance.
Ports make_toy_ports(const ToyConfig& cfg);

}  // namespace hairshift
