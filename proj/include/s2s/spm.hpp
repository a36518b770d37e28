#ifndef S2S_SPM_HPP
#define S2S_SPM_HPP

#include "s2s/backends.hpp"
#include "s2s/config.hpp"
#include "s2s/inversion.hpp"

namespace s2s {

struct SemanticGuidanceConfig {
    double lambda_sem = 0.1;
    double gamma = 0.25;
    StepWindow window{20, 100};  // steps where the latent nudge applies
};

/// lambda_sem times the scorer's image-text similarity.
double semantic_loss(const Image& decoded, const std::string& prompt, const ScoreBackend& scorer,
                     double lambda_sem);

/// z + lambda * grad inside the window, z unchanged outside. grad carries the
/// raw (unweighted) similarity gradient; lambda is applied here, once.
Tensor apply_semantic_guidance(const Tensor& z_t, const Tensor& grad,
                               const SemanticGuidanceConfig& cfg, int step);

/// Window-gated contour anchoring: inside the window, blends the contour
/// trace's cached Q at (layer, timestep) into current_q via blend_query;
/// outside it, or at gamma = 0, current_q passes through.
Matrix inject_contour_query(int step_index, const StepWindow& window,
                            const InversionTrace& trace_cont, const std::string& layer_id,
                            int timestep, const Matrix& current_q, double gamma);

/// Zeroth-order two-point estimate of d similarity / d z through the decoder.
/// Probe directions are drawn from probe_seed only, so the estimate is a pure
/// function of (z, prompt, probe_seed).
Tensor estimate_similarity_gradient(const Tensor& z, const std::string& prompt,
                                    const DiffusionBackend& backend, const ScoreBackend& scorer,
                                    uint64_t probe_seed, int probes = 4, double h = 1e-3);

} // namespace s2s

#endif
