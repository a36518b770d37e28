#include "s2s/sdpe.hpp"

#include <cmath>

namespace s2s {

Tensor cfg_combine(const Tensor& eps_self, const Tensor& eps_stroke, const Tensor& eps_text,
                   double beta_sg, double beta_text) {
    if (!eps_self.same_shape(eps_stroke) || !eps_self.same_shape(eps_text))
        throw ShapeError("cfg_combine: prediction shapes disagree");
    if (!std::isfinite(beta_sg) || !std::isfinite(beta_text))
        throw DomainError("cfg_combine: guidance scales must be finite");

    Tensor out(eps_self.c, eps_self.h, eps_self.w);
    for (size_t i = 0; i < out.data.size(); ++i) {
        double s = eps_self.data[i];
        out.data[i] = s + beta_sg * (eps_stroke.data[i] - s) + beta_text * (eps_text.data[i] - s);
    }
    return out;
}

DualPassResult dual_pass_step(const Tensor& z_t, const DualPassContext& ctx,
                              const DiffusionBackend& backend) {
    if (!ctx.schedule) throw DomainError("dual_pass_step: missing schedule");
    if (!ctx.step_noise) throw DomainError("dual_pass_step: missing per-step noise");
    if (!z_t.all_finite())
        throw NumericError("dual_pass_step: latent is not finite", ctx.step_index);

    const int t = ctx.timestep;
    DualPassResult r;
    r.preds.eps_self = backend.predict_noise(z_t, t, ctx.caption, nullptr);

    bool guided = ctx.guidance_window.contains(ctx.step_index) &&
                  (ctx.beta_sg != 0.0 || ctx.beta_text != 0.0);
    if (guided) {
        r.preds.eps_stroke = backend.predict_noise(z_t, t, "", ctx.stroke_hooks);
        r.preds.eps_text = backend.predict_noise(z_t, t, ctx.caption, ctx.stroke_hooks);
        r.preds.eps_combined = cfg_combine(r.preds.eps_self, r.preds.eps_stroke,
                                           r.preds.eps_text, ctx.beta_sg, ctx.beta_text);
        r.combined = true;
    } else {
        r.preds.eps_stroke = r.preds.eps_self;
        r.preds.eps_text = r.preds.eps_self;
        r.preds.eps_combined = r.preds.eps_self;
    }

    r.z_prev = sampler_update(z_t, r.preds.eps_combined, *ctx.step_noise, t, *ctx.schedule);
    return r;
}

} // namespace s2s
