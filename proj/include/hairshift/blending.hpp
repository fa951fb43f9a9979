#pragma once

#include "hairshift/alignment.hpp"

namespace hairshift {

inline constexpr int kDefaultBlendSteps = 400;

// Elementwise w_inpaint + w_weight . w_align (the additive blending rule).
Tensor blend_latents(const Tensor& w_inpaint, const Tensor& w_align, const Tensor& w_weight);

// M_hair . f_align + M_blend . f_blend + M_keep . f_src with the soft masks
// broadcast over channels.
FeatureTensor compose_final_f(const FeatureTensor& f_align, const FeatureTensor& f_blend,
                              const FeatureTensor& f_src, const SoftMaskTriplet& masks);

// Graph-level counterparts used inside the optimization loop (CxHxW layout).
ad::Var blend_latents_var(ad::Graph& g, ad::Var w_inpaint, ad::Var w_align, ad::Var w_weight,
                          bool convex, bool per_layer);
ad::Var compose_final_f_var(ad::Graph& g, ad::Var f_align, ad::Var f_blend, ad::Var f_src,
                            const SoftMaskTriplet& masks);

struct BlendInputs {
    LatentCode w_inpaint;
    LatentCode w_align;
    FeatureTensor f_src;
    Image i_src;
    Image i_align;
    Image i_trg;            // target texture reference for the hair style term
    BinaryMask m_trg_hair;  // hair mask of the original target image
    MaskTriplet masks;      // image-resolution {hair, blend, keep} partition
};

struct BlendPlanConfig {
    int steps = kDefaultBlendSteps;
    double learning_rate = kDefaultLearningRate;
    double lambda_hair_percept = 1.0;
    double lambda_hair_style = 1.0;
    int hair_class = kDefaultHairClass;
    bool convex = false;           // (1 - w) . w_inpaint + w . w_align
    bool per_layer_weight = false; // one scalar per layer instead of LxD
};

struct BlendResult {
    Tensor w_weight;  // LxD, or L when per-layer
    LatentCode w_blend;
    FeatureTensor f_final;
    Image i_final;
    double initial_total = 0.0;
    double final_total = 0.0;
};

// Optimize the blending weight only; all other inputs stay untouched.
BlendResult optimize_blend(const BlendInputs& in, const Ports& ports, const BlendPlanConfig& cfg,
                           const StepCallback& on_step = nullptr);

}  // namespace hairshift
