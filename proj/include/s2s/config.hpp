#ifndef S2S_CONFIG_HPP
#define S2S_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace s2s {

/// Inclusive range of denoising step indices (step 1 = first step at t = T).
struct StepWindow {
    int lo = 0;
    int hi = 0;
    bool contains(int step) const { return step >= lo && step <= hi; }
};

inline bool operator==(const StepWindow& a, const StepWindow& b) {
    return a.lo == b.lo && a.hi == b.hi;
}

struct PipelineConfig {
    double alpha = 0.5;        // KV mix; 0 bypasses the stroke bank entirely
    double gamma = 0.25;       // contour query blend
    double zeta = 1.67;        // attention contrast
    double beta_sg = 5.0;      // stroke guidance scale
    double beta_text = 0.1;    // text guidance scale
    double lambda_sem = 0.1;   // semantic nudge weight
    double delta = 1e-5;       // relevance stabilizer
    double tau = 0.35;         // foreground threshold
    int k_clusters = 5;
    int total_steps = 100;
    int skip_steps = 30;
    StepWindow injection_window_32{10, 70};
    StepWindow injection_window_64{10, 90};
    StepWindow guidance_window{20, 100};
    StepWindow semantic_window{20, 100};
    uint64_t seed = 42;
    std::string backend = "toy";
    std::string mask_mode = "auto";  // auto | all | none | tophalf
};

bool operator==(const PipelineConfig& a, const PipelineConfig& b);

/// Throws DomainError naming the first violated invariant.
void validate_config(const PipelineConfig& c);

/// Canonical flat-key TOML; also the preimage of config_hash.
std::string config_to_toml(const PipelineConfig& c);

/// Parses the flat-key TOML subset (scalars, strings, two-element arrays,
/// # comments) on top of `base`. Unknown keys are rejected.
PipelineConfig config_from_toml(const std::string& text, const PipelineConfig& base);

PipelineConfig load_config_file(const std::string& path, const PipelineConfig& base);

/// FNV-1a over the canonical serialization, hex-encoded.
std::string config_hash(const PipelineConfig& c);

/// Injection window for a declared band (32 or 64).
StepWindow window_for_band(const PipelineConfig& c, int band);

/// Names accepted by sweeps; all settable through set_field.
const std::vector<std::string>& sweepable_fields();
void set_field(PipelineConfig& c, const std::string& name, double value);

/// Presets: "table" = 100 steps / 30 skip (the defaults), "text50" = the
/// 50-step variant with proportionally scaled windows.
void apply_preset(PipelineConfig& c, const std::string& name);

} // namespace s2s

#endif
