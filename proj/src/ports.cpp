#include "hairshift/ports.hpp"

namespace hairshift {

SegHeatmap SegmenterPort::segment_probs_value(const Image& img) const {
    ad::Graph g;
    ad::Var probs = segment_probs(g, g.constant(image_to_chw(img)));
    return SegHeatmap(g.value(probs));
}

SemanticLabel SegmenterPort::segment_labels(const Image& img) const {
    return segment_probs_value(img).argmax_labels();
}

Image synthesize_image(const GeneratorPort& gen, const LatentCode& w) {
    ad::Graph g;
    ad::Var img = gen.synthesize(g, g.constant(w.tensor()));
    return chw_to_image(g.value(img));
}

FeatureTensor generator_features(const GeneratorPort& gen, const LatentCode& w) {
    ad::Graph g;
    ad::Var f = gen.features(g, g.constant(w.head()));
    return FeatureTensor(chw_to_hwc(g.value(f)));
}

Image synthesize_from_features(const GeneratorPort& gen, const FeatureTensor& f, const Tensor& w_tail) {
    ad::Graph g;
    ad::Var img = gen.synthesize_from(g, g.constant(hwc_to_chw(f.tensor())), g.constant(w_tail));
    return chw_to_image(g.value(img));
}

}  // namespace hairshift
