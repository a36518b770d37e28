#ifndef S2S_PIPELINE_HPP
#define S2S_PIPELINE_HPP

#include "s2s/backends.hpp"
#include "s2s/config.hpp"
#include "s2s/dam.hpp"
#include "s2s/inversion.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace s2s {

/// Everything derived from the two input images before denoising starts.
struct ImageBundle {
    Image content;
    Image reference;
    Image contour;        // rendered dark strokes on light ground
    std::string caption;
    Tensor z_ske_T;       // copy of the content trace's z_T
};

/// Per-step, per-band counts of each mounted intervention. Bands follow the
/// injection-window keys (32/64); vectors are indexed by step (entry 0 unused).
struct InterventionCounters {
    std::map<int, std::vector<int>> kv_by_band;
    std::map<int, std::vector<int>> qblend_by_band;
    std::map<int, std::vector<int>> enhance_by_band;
    std::vector<int> cfg_steps;
    std::vector<int> semantic_steps;

    int total_outside(const std::map<int, std::vector<int>>& per_band,
                      const PipelineConfig& config) const;
};

struct SketchResult {
    Image image;
    ForegroundMask foreground_mask;  // at the segmentation working resolution
    PipelineConfig config;
    std::string config_hash;
    uint64_t seed = 0;
    std::string caption;
    std::vector<double> step_ms;     // per executed denoising step
    InterventionCounters counters;
    Tensor final_latent;
    std::vector<Tensor> latent_trajectory;  // z after each executed step
};

/// Full run: contour extraction, triple inversion with role caching,
/// segmentation, guided denoising, decode.
SketchResult generate_sketch(const Image& content, const Image& reference,
                             const PipelineConfig& config, const BackendSet& backends);

/// Neutralizes the named modules: DAM -> all-foreground mask; SPM -> gamma=0,
/// lambda=0; SDPE -> zeta=1, betas=0; CSA -> alpha=0 (KV mixing bypassed,
/// pure content keys/values). Unknown names are rejected.
PipelineConfig ablate(const PipelineConfig& config, const std::set<std::string>& disable);

/// Segmentation entry point shared by generate_sketch and tests: builds the
/// state from a content trace's recorded maps and the caption nouns.
SegmentationState build_segmentation(const InversionTrace& content_trace,
                                     const std::vector<std::string>& nouns,
                                     const PipelineConfig& config, int resolution);

/// Mask for the configured mask_mode; "auto" selects clusters by relevance
/// with two fallbacks: no nouns -> all foreground, no qualifying cluster ->
/// the single highest-relevance cluster.
ForegroundMask resolve_mask(const SegmentationState& state, const PipelineConfig& config,
                            bool have_nouns);

} // namespace s2s

#endif
