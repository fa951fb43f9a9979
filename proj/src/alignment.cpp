#include "hairshift/alignment.hpp"

#include <cmath>
#include <optional>

#include "hairshift/image_io.hpp"
#include "hairshift/logging.hpp"
#include "hairshift/optimizer.hpp"

namespace hairshift {

BinaryMask extract_hair_mask(const Image& img, const SegmenterPort& seg, int hair_class) {
    if (hair_class < 0 || hair_class >= seg.num_classes())
        throw ArgumentError("hair class index out of range");
    SemanticLabel labels = seg.segment_labels(img);
    BinaryMask mask(labels.height(), labels.width());
    for (std::size_t i = 0; i < labels.size(); ++i) mask[i] = labels[i] == hair_class ? 1 : 0;
    return mask;
}

namespace {

struct AlignEval {
    double total = 0.0;
    LossBreakdown breakdown;
};

}  // namespace

AlignmentResult align_target_hair(const LatentCode& w_trg, const Image& i_trg,
                                  const KeypointHeatmap& h_src, const Ports& ports,
                                  const AlignmentConfig& cfg, const StepCallback& on_step) {
    if (cfg.steps < 1) throw ArgumentError("alignment needs at least 1 step");
    const std::size_t layers = w_trg.layers();
    h_src.validate();

    // Anchor style regions on the target image; tracking chains from here.
    BinaryMask trg_hair = extract_hair_mask(i_trg, *ports.segmenter, cfg.hair_class);
    std::optional<StyleRegionSet> regions_trg;
    int n_regions = cfg.slic_regions;
    if (!cfg.no_lsm) {
        if (trg_hair.count() == 0) {
            logging::warn("alignment: target hair mask is empty; local style matching disabled");
        } else {
            if (static_cast<std::size_t>(n_regions) > trg_hair.count()) {
                n_regions = static_cast<int>(trg_hair.count());
                logging::warn("alignment: hair mask smaller than requested regions; using " +
                              std::to_string(n_regions));
            }
            regions_trg = slic_hair(i_trg, trg_hair, n_regions, cfg.slic_compactness, cfg.slic_iters,
                                    cfg.seed);
        }
    }

    const Tensor i_trg_chw = image_to_chw(i_trg);
    const Tensor tail = w_trg.tail();
    Tensor head = w_trg.head();
    Tensor prev_w = w_trg.tensor();  // lags one step behind the variable
    StyleRegionSet prev_regions;     // last tracked regions, for chained matching
    if (regions_trg) prev_regions = *regions_trg;

    AdamOptimizer opt(cfg.learning_rate);
    AlignmentResult res;

    auto evaluate = [&](const Tensor& head_now, long step, bool with_grad, Tensor* grad_out) {
        ad::Graph g;
        ad::Var head_v = with_grad ? g.param(head_now) : g.constant(head_now);
        ad::Var w_v = ad::concat_rows(head_v, g.constant(tail));
        ad::Var img_v = ports.generator->synthesize(g, w_v);

        ad::Var pose = pose_loss_var(g.constant(h_src.heatmaps), ports.keypoints->extract(g, img_v));
        AlignEval ev;
        ev.breakdown.add("pose", g.scalar(pose), 1.0);
        ad::Var total = pose;

        if (regions_trg) {
            Image img_val = chw_to_image(g.value(img_v));
            BinaryMask gen_hair = extract_hair_mask(img_val, *ports.segmenter, cfg.hair_class);
            if (gen_hair.count() < static_cast<std::size_t>(n_regions)) {
                logging::warn("alignment step " + std::to_string(step) +
                              ": generated hair mask too small; local style term skipped");
            } else {
                StyleRegionSet raw = slic_hair(img_val, gen_hair, n_regions, cfg.slic_compactness,
                                               cfg.slic_iters, cfg.seed);
                raw.source_step = static_cast<int>(step);
                const StyleRegionSet& anchor = cfg.rematch_target ? *regions_trg : prev_regions;
                StyleRegionSet tracked = track_style_regions(anchor, raw);
                if (with_grad) prev_regions = tracked;
                ad::Var lsm = local_style_matching_var(g, g.constant(i_trg_chw), img_v, *regions_trg,
                                                       tracked, *ports.features, cfg.lsm_crop);
                ev.breakdown.add("style_local", g.scalar(lsm), cfg.lambda_lsm);
                total = ad::add(total, ad::mul_scalar(lsm, cfg.lambda_lsm));

                if (cfg.save_every > 0 && !cfg.save_dir.empty() && step % cfg.save_every == 0) {
                    std::filesystem::create_directories(cfg.save_dir);
                    char name[32];
                    std::snprintf(name, sizeof(name), "step_%04ld.png", step);
                    write_png(cfg.save_dir / name, render_region_overlay(img_val, tracked));
                }
            }
        }

        const bool reg_active = !cfg.no_reg && !(cfg.strict_reg_start && step == 1);
        if (reg_active) {
            ad::Var reg = regularization_loss_var(ad::sub(w_v, g.constant(prev_w)));
            ev.breakdown.add("reg", g.scalar(reg), cfg.lambda_reg);
            total = ad::add(total, ad::mul_scalar(reg, cfg.lambda_reg));
        }

        ev.total = g.scalar(total);
        if (!std::isfinite(ev.total))
            throw DivergenceError("align", step, "non-finite alignment loss");
        if (with_grad) {
            g.backward(total);
            *grad_out = g.grad(head_v);
        }
        return ev;
    };

    Tensor grad;
    for (long t = 1; t <= cfg.steps; ++t) {
        const Tensor w_before = head;  // value entering this step
        AlignEval ev = evaluate(head, t, true, &grad);
        if (t == 1) res.initial_total = ev.total;
        if (on_step) on_step(t, ev.breakdown);
        // the regularizer references the previous iterate
        Tensor full({layers, w_trg.dim()});
        std::copy(w_before.data(), w_before.data() + w_before.size(), full.data());
        std::copy(tail.data(), tail.data() + tail.size(), full.data() + w_before.size());
        prev_w = std::move(full);
        opt.step(head, grad);
    }

    AlignEval fin = evaluate(head, cfg.steps, false, nullptr);
    res.final_total = fin.total;
    if (res.final_total > res.initial_total)
        throw DivergenceError("align", cfg.steps, "final loss above initial loss");

    res.w_align = LatentCode::from_parts(head, tail);
    res.i_align = synthesize_image(*ports.generator, res.w_align);
    res.hair_mask = extract_hair_mask(res.i_align, *ports.segmenter, cfg.hair_class);
    return res;
}

}  // namespace hairshift
