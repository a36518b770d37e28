#ifndef S2S_SDPE_HPP
#define S2S_SDPE_HPP

#include "s2s/backends.hpp"
#include "s2s/config.hpp"
#include "s2s/inversion.hpp"

namespace s2s {

struct NoisePrediction {
    Tensor eps_self;
    Tensor eps_stroke;
    Tensor eps_text;
    Tensor eps_combined;
};

/// eps_self + beta_sg (eps_stroke - eps_self) + beta_text (eps_text - eps_self).
Tensor cfg_combine(const Tensor& eps_self, const Tensor& eps_stroke, const Tensor& eps_text,
                   double beta_sg, double beta_text);

/// One guided denoising step shared by the pipeline loop.
struct DualPassContext {
    int step_index = 0;               // 1 at t = T
    int timestep = 0;                 // t = total_steps - step_index + 1
    const SamplerSchedule* schedule = nullptr;
    std::string caption;              // conditions eps_self and eps_text
    const HookSet* stroke_hooks = nullptr;  // cross-image taps; may be null
    const Tensor* step_noise = nullptr;     // replayed per-step noise v_t
    StepWindow guidance_window{20, 100};
    double beta_sg = 0.0;
    double beta_text = 0.0;
};

struct DualPassResult {
    Tensor z_prev;
    NoisePrediction preds;
    bool combined = false;  // whether the guidance combine path ran
};

/// Pass 1 (stroke_hooks mounted) yields eps_stroke unconditionally and
/// eps_text under the caption; pass 2 (no hooks) yields eps_self. Inside the
/// guidance window with a nonzero scale the three are cfg-combined, otherwise
/// the step advances on eps_self alone and the extra passes are skipped
/// (preds then carry eps_self in all slots).
DualPassResult dual_pass_step(const Tensor& z_t, const DualPassContext& ctx,
                              const DiffusionBackend& backend);

} // namespace s2s

#endif
