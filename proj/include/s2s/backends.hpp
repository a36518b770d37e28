#ifndef S2S_BACKENDS_HPP
#define S2S_BACKENDS_HPP

#include "s2s/attention.hpp"
#include "s2s/core.hpp"
#include "s2s/image.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace s2s {

enum class AttentionKind { self_attn, cross_attn };

/// One hookable attention block. `resolution` is the actual token grid side;
/// `window_band` names the injection-window key this layer listens to (32 or
/// 64), since small test models run at reduced grids that stand in for the
/// full-size bands.
struct AttentionLayerInfo {
    std::string id;
    AttentionKind kind = AttentionKind::self_attn;
    int resolution = 0;
    int window_band = 0;
};

struct BackendCapabilities {
    std::string model_name;
    int latent_channels = 0;
    int latent_height = 0;
    int latent_width = 0;
    int image_height = 0;
    int image_width = 0;
    std::vector<AttentionLayerInfo> attention_layers;
    bool supports_differentiable_decode = false;
    bool thread_safe = false;

    const AttentionLayerInfo* find_layer(const std::string& id) const {
        for (const auto& l : attention_layers)
            if (l.id == id) return &l;
        return nullptr;
    }
};

/// Identifies where in the network a tap is firing.
struct AttentionSite {
    const AttentionLayerInfo* layer = nullptr;
    int timestep = 0;
};

/// Per-layer attention tap. `on_features` may read or replace Q/K/V before
/// the attention product; `on_map` may read or transform the row-stochastic
/// map before it is applied to V. Default implementations do nothing, so a
/// mounted-but-passive tap leaves the output bit-identical.
class AttentionTap {
public:
    virtual ~AttentionTap() = default;
    virtual void on_features(const AttentionSite& /*site*/, AttentionFeatures& /*f*/) {}
    virtual void on_map(const AttentionSite& /*site*/, AttentionMap& /*a*/) {}
};

/// layer id -> tap. Keys must name declared layers; anything else is a
/// CapabilityError at predict_noise time.
using HookSet = std::map<std::string, AttentionTap*>;

class DiffusionBackend {
public:
    virtual ~DiffusionBackend() = default;
    virtual const BackendCapabilities& capabilities() const = 0;

    /// One denoiser evaluation. Every declared layer that has a tap mounted
    /// sees exactly one on_features and one on_map call.
    virtual Tensor predict_noise(const Tensor& z_t, int t, const std::string& text,
                                 const HookSet* hooks = nullptr) const = 0;

    virtual Tensor encode(const Image& img) const = 0;
    virtual Image decode(const Tensor& z) const = 0;

    /// Conditioning token strings for a prompt (leading null token included).
    virtual std::vector<std::string> tokenize(const std::string& text) const = 0;
};

class EdgeBackend {
public:
    virtual ~EdgeBackend() = default;
    /// Contour response map, single channel, 0 = no edge. The sketch-style
    /// rendering (dark strokes on light ground) is 1 - response.
    virtual Image detect(const Image& img) const = 0;
};

class CaptionBackend {
public:
    virtual ~CaptionBackend() = default;
    virtual std::string caption(const Image& img) const = 0;
};

class ScoreBackend {
public:
    virtual ~ScoreBackend() = default;
    /// Image-text similarity, finite, higher = more aligned.
    virtual double similarity(const Image& img, const std::string& text) const = 0;
};

class MaskBackend {
public:
    virtual ~MaskBackend() = default;
    /// Binary {0,1} saliency map at image resolution.
    virtual Image salient_mask(const Image& img) const = 0;
};

struct BackendSet {
    std::unique_ptr<DiffusionBackend> diffusion;
    std::unique_ptr<EdgeBackend> edge;
    std::unique_ptr<CaptionBackend> caption;
    std::unique_ptr<ScoreBackend> score;
    std::unique_ptr<MaskBackend> mask;
};

/// Registry lookup. "toy" is self-contained; "sd-adapter" validates
/// S2S_MODEL_DIR and refuses to construct without exported weights.
BackendSet make_backend_set(const std::string& name);

std::vector<std::string> known_backend_names();

// Toy scorer internals, exposed so tests can recompute the similarity
// (cosine of pooled stats against a hash embedding) outside the backend.
std::vector<double> toy_pooled_stats(const Image& img);
std::vector<double> toy_text_embedding(const std::string& text);
double toy_cosine(const std::vector<double>& a, const std::vector<double>& b);

} // namespace s2s

#endif
