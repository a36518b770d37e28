#ifndef S2S_INVERSION_HPP
#define S2S_INVERSION_HPP

#include "s2s/backends.hpp"
#include "s2s/core.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace s2s {

/// Denoising schedule. noise_levels[i] = sqrt(1 - abar_t) for t = i+1, i.e.
/// the marginal noise scale at each timestep; strictly increasing with t and
/// inside (0, 1]. abar is recovered as 1 - noise_level^2.
struct SamplerSchedule {
    int total_steps = 0;
    int skip_steps = 0;
    std::vector<double> noise_levels;  // size total_steps, index t-1

    double noise_level(int t) const;  // 0 at t = 0
    double alpha_bar(int t) const { return 1.0 - noise_level(t) * noise_level(t); }
    /// Posterior noise scale of the t -> t-1 update; positive for every t,
    /// which is what makes the per-step noise solvable.
    double sigma(int t) const;
    /// Coefficient of the predicted noise in the t -> t-1 update.
    double dir_coeff(int t) const;
};

/// Closed-form schedule used everywhere: abar(s) = exp(-0.05 s - 3 s^2) at
/// s = t / total_steps, so the terminal noise level is ~0.975 for any T.
SamplerSchedule make_schedule(int total_steps, int skip_steps);

/// Validates lengths, ranges, and monotonicity; throws DomainError.
void validate_schedule(const SamplerSchedule& s);

enum class FeatureRole { content, reference, contour };

std::string role_name(FeatureRole role);

/// Which (layer, timestep) cells cache_attention_features fills, plus the
/// attention-map recording used by segmentation.
struct CacheSpec {
    std::set<std::string> layers;
    int feature_t_lo = 1;              // timestep range for feature caching
    int feature_t_hi = 1 << 30;        // clamped to the schedule length
    bool record_self_maps = false;     // self-attention maps (low band)
    bool record_cross_maps = false;    // cross-attention maps + token list
    std::string map_layer;             // layer whose maps are recorded
    std::string cross_layer;
    int map_t_lo = 1;                  // timestep range for map recording
    int map_t_hi = 0;                  // empty when hi < lo
};

struct LayerStep {
    std::string layer;
    int t = 0;
    bool operator<(const LayerStep& o) const {
        return layer != o.layer ? layer < o.layer : t < o.t;
    }
};

struct InversionTrace {
    std::vector<Tensor> latents;         // index t = 0..T
    std::vector<Tensor> per_step_noise;  // index t-1 for t = 1..T
    std::map<LayerStep, AttentionFeatures> cached_features;
    FeatureRole source_role = FeatureRole::content;
    SamplerSchedule schedule;
    std::string prompt;
    uint64_t seed = 0;

    // Attention maps recorded for segmentation (content role only).
    std::map<int, Matrix> self_maps;   // t -> map at the low self layer
    std::map<int, Matrix> cross_maps;  // t -> pixel x token map
    std::vector<std::string> cross_tokens;

    const Tensor& z_T() const { return latents.back(); }
    const Tensor& z_0() const { return latents.front(); }
};

/// One sampler update z_t -> z_{t-1} given the predicted and per-step noise.
Tensor sampler_update(const Tensor& z_t, const Tensor& eps_hat, const Tensor& step_noise, int t,
                      const SamplerSchedule& schedule);

/// Edit-friendly inversion: each z_t is drawn independently from the forward
/// marginal of z_0, then the per-step noise is solved from the sampler update
/// so that replaying from z_T reproduces every z_t, and hence z_0, exactly.
InversionTrace ddpm_invert(const Tensor& z_0, const SamplerSchedule& schedule,
                           const DiffusionBackend& backend, const std::string& prompt,
                           uint64_t seed, FeatureRole role);

/// Re-runs the denoiser over the trace latents, recording role-appropriate
/// features at the spec'd layers: content and contour keep Q only, reference
/// keeps K and V only. A trace whose role is not in `roles` passes through
/// untouched.
InversionTrace cache_attention_features(InversionTrace trace, const std::set<FeatureRole>& roles,
                                        const DiffusionBackend& backend, const CacheSpec& spec);

/// Replays the sampler from z_T with the stored per-step noise.
Tensor replay_reconstruct(const InversionTrace& trace, const DiffusionBackend& backend);

/// Disk cache: meta.json + one little-endian f32 file per tensor per step,
/// named {kind}_{layer}_{t}.f32.
void save_trace(const InversionTrace& trace, const std::string& dir);
InversionTrace load_trace(const std::string& dir);

} // namespace s2s

#endif
