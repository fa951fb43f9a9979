#pragma once

#include <functional>
#include <optional>

#include "hairshift/losses.hpp"
#include "hairshift/ports.hpp"

namespace hairshift {

inline constexpr int kDefaultWplusSteps = 1100;
inline constexpr int kDefaultFsSteps = 250;
inline constexpr double kDefaultLearningRate = 0.01;

// Per-step observer; stages report the step index (1-based) and the loss
// terms evaluated at that step.
using StepCallback = std::function<void(long step, const LossBreakdown&)>;

struct EmbeddingResult {
    LatentCode w;
    std::optional<FeatureTensor> f;
    double final_loss = 0.0;
};

// Reconstruction objective shared by the embedding stage: pixel MSE plus the
// mean per-layer L1 feature distance, equal weights.
ad::Var reconstruction_loss_var(ad::Graph& g, ad::Var img_hat_chw,
                                const std::vector<Tensor>& target_feats, const Tensor& target_chw,
                                const FeatureExtractorPort& feat);

// Cached feature values of a fixed image.
std::vector<Tensor> extract_feature_values(const FeatureExtractorPort& feat, const Image& img);

// First-order inversion to the extended latent space, started from `init`
// (the cached backend mean latent).
EmbeddingResult invert_wplus(const Image& img, const GeneratorPort& gen,
                             const FeatureExtractorPort& feat, const LatentCode& init, int steps,
                             double learning_rate = kDefaultLearningRate,
                             const StepCallback& on_step = nullptr);

// Refine the coarse feature tensor against the image with the style tail
// held fixed; 0 steps returns the initialization g.features(w[:m]) exactly.
FeatureTensor embed_fs(const Image& img, const LatentCode& w, const GeneratorPort& gen,
                       const FeatureExtractorPort& feat, int steps,
                       double learning_rate = kDefaultLearningRate,
                       const StepCallback& on_step = nullptr);

}  // namespace hairshift
