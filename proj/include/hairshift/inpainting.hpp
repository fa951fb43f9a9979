#pragma once

#include "hairshift/alignment.hpp"

namespace hairshift {

inline constexpr int kDefaultInpaintSteps = 140;

// Target semantics for the inpainting stage: labels to keep, the hair label
// under the aligned target hair, and propagated labels where the original
// hair exposed the scene.
struct ObjectiveLabel {
    SemanticLabel label;
    BinaryMask inpaint_region;
    BinaryMask keep_region;
};

// keep = NOT src_hair AND NOT aligned_hair (labels copied from s_src);
// aligned_hair pixels take the hair class; src_hair AND NOT aligned_hair is
// filled from the nearest non-hair keep pixel (exact Euclidean distance,
// distance ties resolved toward the smaller class index; background class
// when no non-hair keep pixel exists).
ObjectiveLabel build_objective_label(const SemanticLabel& s_src, const BinaryMask& src_hair,
                                     const BinaryMask& aligned_hair,
                                     int hair_class = kDefaultHairClass,
                                     int background_class = kDefaultBackgroundClass);

struct InpaintConfig {
    int steps = kDefaultInpaintSteps;
    double learning_rate = kDefaultLearningRate;
    bool ce_full_image = true;  // false restricts the loss to the inpaint region
};

struct InpaintResult {
    LatentCode w_inpaint;
    Image i_inpaint;
    double initial_ce = 0.0;
    double final_ce = 0.0;
};

// Optimize the first m style vectors of w_src so the generated segmentation
// follows the objective label. Layers >= m are returned bit-identical.
InpaintResult inpaint_source(const LatentCode& w_src, const ObjectiveLabel& s_obj, const Ports& ports,
                             const InpaintConfig& cfg, const StepCallback& on_step = nullptr);

}  // namespace hairshift
