#include "s2s/pipeline.hpp"

#include "s2s/attention.hpp"
#include "s2s/sdpe.hpp"
#include "s2s/spm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace s2s {

int InterventionCounters::total_outside(const std::map<int, std::vector<int>>& per_band,
                                        const PipelineConfig& config) const {
    int total = 0;
    for (const auto& [band, counts] : per_band) {
        StepWindow w = window_for_band(config, band);
        for (int i = 1; i < static_cast<int>(counts.size()); ++i)
            if (!w.contains(i)) total += counts[static_cast<size_t>(i)];
    }
    return total;
}

PipelineConfig ablate(const PipelineConfig& config, const std::set<std::string>& disable) {
    PipelineConfig c = config;
    for (const std::string& name : disable) {
        if (name == "DAM") {
            c.mask_mode = "all";
        } else if (name == "SPM") {
            c.gamma = 0.0;
            c.lambda_sem = 0.0;
        } else if (name == "SDPE") {
            c.zeta = 1.0;
            c.beta_sg = 0.0;
            c.beta_text = 0.0;
        } else if (name == "CSA") {
            c.alpha = 0.0;
        } else {
            throw DomainError("ablate: unknown module '" + name +
                              "' (known: DAM, SPM, SDPE, CSA)");
        }
    }
    return c;
}

namespace {

template <typename F>
auto stage(const std::string& label, F&& fn) -> decltype(fn()) {
    auto tag = [&](const std::string& msg) { return "[" + label + "] " + msg; };
    try {
        return fn();
    } catch (const ShapeError& e) {
        throw ShapeError(tag(e.what()));
    } catch (const DomainError& e) {
        throw DomainError(tag(e.what()));
    } catch (const NumericError& e) {
        throw NumericError(tag(e.what()), e.step());
    } catch (const CapabilityError& e) {
        throw CapabilityError(tag(e.what()));
    } catch (const BackendError& e) {
        throw BackendError(tag(e.what()));
    }
}

/// Cross-image attention tap mounted on the self-attention layers of the
/// stroke/text passes. Per mounted layer and step, in window order: mix the
/// reference bank into the in-flight keys/values, gate rows by the foreground
/// mask, blend the contour queries, and sharpen the resulting map.
class StrokeTap final : public AttentionTap {
public:
    StrokeTap(const PipelineConfig& config, const InversionTrace& ref_trace,
              const InversionTrace& cont_trace, InterventionCounters& counters)
        : config_(config), ref_(ref_trace), cont_(cont_trace), counters_(counters) {}

    void set_step(int step_index, int timestep) {
        step_ = step_index;
        t_ = timestep;
    }

    void set_mask(int resolution, ForegroundMask mask) {
        masks_[resolution] = std::move(mask);
    }

    void on_features(const AttentionSite& site, AttentionFeatures& f) override {
        StepWindow w = window_for_band(config_, site.layer->window_band);
        if (!w.contains(step_)) return;

        if (config_.alpha != 0.0) {
            auto it = ref_.cached_features.find({site.layer->id, t_});
            if (it == ref_.cached_features.end() || it->second.k.data.empty())
                throw CapabilityError("no cached reference K/V for layer '" + site.layer->id +
                                      "' at t=" + std::to_string(t_));
            AttentionFeatures mixed = mix_kv(it->second.k, it->second.v, f.k, f.v, config_.alpha);
            AttentionFeatures gated = gate_kv_by_mask(mixed.k, mixed.v, f.k, f.v,
                                                      masks_.at(site.layer->resolution));
            f.k = std::move(gated.k);
            f.v = std::move(gated.v);
            bump(counters_.kv_by_band, site.layer->window_band);
        }
        if (config_.gamma != 0.0) {
            f.q = inject_contour_query(step_, w, cont_, site.layer->id, t_, f.q, config_.gamma);
            bump(counters_.qblend_by_band, site.layer->window_band);
        }
    }

    void on_map(const AttentionSite& site, AttentionMap& a) override {
        StepWindow w = window_for_band(config_, site.layer->window_band);
        if (!w.contains(step_)) return;
        if (config_.zeta == 1.0) return;
        a = enhance_contrast(a, config_.zeta);
        bump(counters_.enhance_by_band, site.layer->window_band);
    }

private:
    void bump(std::map<int, std::vector<int>>& per_band, int band) {
        std::vector<int>& counts = per_band[band];
        if (counts.size() <= static_cast<size_t>(step_))
            counts.resize(static_cast<size_t>(config_.total_steps) + 1, 0);
        ++counts[static_cast<size_t>(step_)];
    }

    const PipelineConfig& config_;
    const InversionTrace& ref_;
    const InversionTrace& cont_;
    InterventionCounters& counters_;
    std::map<int, ForegroundMask> masks_;  // keyed by layer resolution
    int step_ = 0;
    int t_ = 0;
};

std::vector<const AttentionLayerInfo*> self_layers(const BackendCapabilities& caps) {
    std::vector<const AttentionLayerInfo*> out;
    for (const auto& l : caps.attention_layers)
        if (l.kind == AttentionKind::self_attn) out.push_back(&l);
    return out;
}

const AttentionLayerInfo* low_band_layer(const BackendCapabilities& caps, AttentionKind kind) {
    const AttentionLayerInfo* best = nullptr;
    for (const auto& l : caps.attention_layers)
        if (l.kind == kind && l.window_band == 32) best = &l;
    return best;
}

Image render_contour(const Image& response) {
    Image out(1, response.h, response.w);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = 1.0 - response.data[i];
    return out;
}

} // namespace

SegmentationState build_segmentation(const InversionTrace& content_trace,
                                     const std::vector<std::string>& nouns,
                                     const PipelineConfig& config, int resolution) {
    SegmentationState state;
    state.resolution = resolution;

    std::vector<Matrix> maps;
    maps.reserve(content_trace.self_maps.size());
    for (const auto& [t, m] : content_trace.self_maps) maps.push_back(m);
    state.f_sa = aggregate_self_attention(maps);
    state.cluster_masks =
        cluster_attention(state.f_sa, resolution, config.k_clusters, config.seed);

    // Per-noun cross maps: column of the pixel x token map matching the noun,
    // averaged over the recorded window, then quantile-normalized (value ->
    // 0.6*rank/P, map mean ~0.3). Raw softmax columns over a short token list
    // sit at a token-dependent level; ranks make the tau threshold read as a
    // percentile (0.35 ~ the 58th), so cluster selection depends on where the
    // response concentrates rather than on that level.
    for (const std::string& noun : nouns) {
        int col = -1;
        for (size_t j = 0; j < content_trace.cross_tokens.size(); ++j)
            if (content_trace.cross_tokens[j] == noun) {
                col = static_cast<int>(j);
                break;
            }
        if (col < 0) continue;
        Matrix a(resolution, resolution);
        int count = 0;
        for (const auto& [t, m] : content_trace.cross_maps) {
            if (m.rows != resolution * resolution || col >= m.cols)
                throw ShapeError("segmentation: cross map shape mismatch");
            for (int p = 0; p < m.rows; ++p) a.data[static_cast<size_t>(p)] += m(p, col);
            ++count;
        }
        if (count == 0) continue;
        for (double& v : a.data) v /= count;
        const std::size_t P = a.data.size();
        std::vector<std::size_t> order(P);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t lhs, std::size_t rhs) {
            if (a.data[lhs] != a.data[rhs]) return a.data[lhs] < a.data[rhs];
            return lhs < rhs;  // deterministic tie-break
        });
        Matrix ranked = a;
        for (std::size_t r = 0; r < P; ++r)
            ranked.data[order[r]] = 0.6 * static_cast<double>(r + 1) / static_cast<double>(P);
        state.noun_maps[noun] = std::move(ranked);
    }

    for (size_t j = 0; j < state.cluster_masks.size(); ++j)
        for (const auto& [noun, a] : state.noun_maps)
            state.relevance[{static_cast<int>(j), noun}] =
                relevance_score(state.cluster_masks[j], a, config.delta);
    return state;
}

ForegroundMask resolve_mask(const SegmentationState& state, const PipelineConfig& config,
                            bool have_nouns) {
    const int res = state.resolution;
    if (config.mask_mode == "all") return ForegroundMask(res, 1);
    if (config.mask_mode == "none") return ForegroundMask(res, 0);
    if (config.mask_mode == "tophalf") {
        ForegroundMask m(res, 0);
        for (int y = 0; y < res / 2; ++y)
            for (int x = 0; x < res; ++x) m.at(y, x) = 1;
        return m;
    }
    // auto
    if (!have_nouns || state.noun_maps.empty()) return ForegroundMask(res, 1);
    ForegroundMask selected = select_foreground(state, config.tau);
    if (!selected.none_set()) return selected;
    // No cluster clears the threshold: fall back to the single most relevant
    // cluster so stroke transfer still lands somewhere meaningful.
    int best = 0;
    double best_r = -1.0;
    for (const auto& [key, r] : state.relevance)
        if (r > best_r) {
            best_r = r;
            best = key.first;
        }
    return state.cluster_masks[static_cast<size_t>(best)];
}

SketchResult generate_sketch(const Image& content, const Image& reference,
                             const PipelineConfig& config, const BackendSet& backends) {
    using clock = std::chrono::steady_clock;
    validate_config(config);
    if (content.empty() || reference.empty())
        throw DomainError("generate_sketch: empty input image");
    if (!backends.diffusion) throw CapabilityError("generate_sketch: no diffusion backend");

    const DiffusionBackend& dm = *backends.diffusion;
    const BackendCapabilities& caps = dm.capabilities();
    std::vector<const AttentionLayerInfo*> selfs = self_layers(caps);
    if (selfs.empty())
        throw CapabilityError("generate_sketch: backend declares no self-attention layers");
    for (const AttentionLayerInfo* l : selfs)
        if (l->window_band != 32 && l->window_band != 64)
            throw CapabilityError("generate_sketch: layer '" + l->id +
                                  "' declares unsupported window band " +
                                  std::to_string(l->window_band));

    // Stage 1: contour extraction with saliency pre-mask.
    ImageBundle bundle;
    bundle.content = content;
    bundle.reference = reference;
    bundle.caption = stage("caption", [&] { return backends.caption->caption(content); });
    bundle.contour = stage("contour", [&] {
        Image response = backends.edge->detect(content);
        Image salient = backends.mask->salient_mask(content);
        for (size_t i = 0; i < response.data.size(); ++i) response.data[i] *= salient.data[i];
        return render_contour(response);
    });

    // Stage 2: triple inversion with role-appropriate caching.
    SamplerSchedule schedule = make_schedule(config.total_steps, config.skip_steps);
    const AttentionLayerInfo* lo_self = low_band_layer(caps, AttentionKind::self_attn);
    const AttentionLayerInfo* lo_cross = low_band_layer(caps, AttentionKind::cross_attn);
    if (!lo_self)
        throw CapabilityError("generate_sketch: backend declares no low-band self layer");

    std::set<std::string> all_self_ids;
    for (const AttentionLayerInfo* l : selfs) all_self_ids.insert(l->id);

    InversionTrace content_trace = stage("invert-content", [&] {
        Tensor z0 = dm.encode(content);
        return ddpm_invert(z0, schedule, dm, bundle.caption, config.seed, FeatureRole::content);
    });
    InversionTrace reference_trace = stage("invert-reference", [&] {
        Tensor z0 = dm.encode(reference);
        return ddpm_invert(z0, schedule, dm, "", config.seed, FeatureRole::reference);
    });
    InversionTrace contour_trace = stage("invert-contour", [&] {
        Tensor z0 = dm.encode(bundle.contour);
        return ddpm_invert(z0, schedule, dm, "", config.seed, FeatureRole::contour);
    });
    bundle.z_ske_T = content_trace.z_T();

    const int T = config.total_steps;
    StepWindow w32 = config.injection_window_32;
    CacheSpec content_spec;
    content_spec.record_self_maps = true;
    content_spec.map_layer = lo_self->id;
    if (lo_cross) {
        content_spec.record_cross_maps = true;
        content_spec.cross_layer = lo_cross->id;
    }
    content_spec.map_t_lo = T - w32.hi + 1;
    content_spec.map_t_hi = T - w32.lo + 1;

    // Reference/contour caches are only read inside the injection windows.
    CacheSpec bank_spec;
    bank_spec.layers = all_self_ids;
    {
        int lo = T + 1, hi = 0;
        for (const AttentionLayerInfo* l : selfs) {
            StepWindow w = window_for_band(config, l->window_band);
            lo = std::min(lo, T - w.hi + 1);
            hi = std::max(hi, T - w.lo + 1);
        }
        bank_spec.feature_t_lo = lo;
        bank_spec.feature_t_hi = hi;
    }

    std::set<FeatureRole> all_roles = {FeatureRole::content, FeatureRole::reference,
                                       FeatureRole::contour};
    content_trace = stage("cache-content", [&] {
        return cache_attention_features(std::move(content_trace), all_roles, dm, content_spec);
    });
    reference_trace = stage("cache-reference", [&] {
        return cache_attention_features(std::move(reference_trace), all_roles, dm, bank_spec);
    });
    contour_trace = stage("cache-contour", [&] {
        return cache_attention_features(std::move(contour_trace), all_roles, dm, bank_spec);
    });

    // Stage 3: segmentation.
    std::vector<std::string> nouns = extract_nouns(bundle.caption);
    SegmentationState seg = stage("segmentation", [&] {
        return build_segmentation(content_trace, nouns, config, lo_self->resolution);
    });
    ForegroundMask mask = resolve_mask(seg, config, !nouns.empty());

    // Stage 4: guided denoising from the content trace's truncation point.
    SketchResult result;
    result.config = config;
    result.config_hash = config_hash(config);
    result.seed = config.seed;
    result.caption = bundle.caption;
    result.foreground_mask = mask;
    result.counters.cfg_steps.assign(static_cast<size_t>(T) + 1, 0);
    result.counters.semantic_steps.assign(static_cast<size_t>(T) + 1, 0);

    InterventionCounters& counters = result.counters;
    StrokeTap tap(config, reference_trace, contour_trace, counters);
    for (const AttentionLayerInfo* l : selfs)
        tap.set_mask(l->resolution, mask.resampled(l->resolution));
    HookSet hooks;
    bool any_attention_intervention =
        config.alpha != 0.0 || config.gamma != 0.0 || config.zeta != 1.0;
    if (any_attention_intervention)
        for (const AttentionLayerInfo* l : selfs) hooks[l->id] = &tap;

    SemanticGuidanceConfig sem;
    sem.lambda_sem = config.lambda_sem;
    sem.gamma = config.gamma;
    sem.window = config.semantic_window;

    int t_start = T - config.skip_steps;
    Tensor z = content_trace.latents[static_cast<size_t>(t_start)];
    stage("denoise", [&] {
        for (int t = t_start; t >= 1; --t) {
            auto t0 = clock::now();
            int i = T - t + 1;
            tap.set_step(i, t);

            DualPassContext ctx;
            ctx.step_index = i;
            ctx.timestep = t;
            ctx.schedule = &schedule;
            ctx.caption = bundle.caption;
            ctx.stroke_hooks = hooks.empty() ? nullptr : &hooks;
            ctx.step_noise = &content_trace.per_step_noise[static_cast<size_t>(t - 1)];
            ctx.guidance_window = config.guidance_window;
            ctx.beta_sg = config.beta_sg;
            ctx.beta_text = config.beta_text;

            DualPassResult step = dual_pass_step(z, ctx, dm);
            z = std::move(step.z_prev);
            if (step.combined) ++counters.cfg_steps[static_cast<size_t>(i)];

            if (config.lambda_sem > 0.0 && sem.window.contains(i)) {
                Tensor grad = estimate_similarity_gradient(
                    z, bundle.caption, dm, *backends.score,
                    config.seed ^ fnv1a(&i, sizeof(i), 0x9e3779b97f4a7c15ULL));
                z = apply_semantic_guidance(z, grad, sem, i);
                ++counters.semantic_steps[static_cast<size_t>(i)];
            }
            if (!z.all_finite()) throw NumericError("latent diverged", i);

            result.latent_trajectory.push_back(z);
            result.step_ms.push_back(
                std::chrono::duration<double, std::milli>(clock::now() - t0).count());
        }
        return 0;
    });

    result.final_latent = z;

    // Stage 5: decode. Output resolution follows the content image; color
    // collapses to gray only when both inputs are gray.
    result.image = stage("decode", [&] {
        Image img = dm.decode(z);
        if (content.c == 1 && reference.c == 1) img = img.to_gray();
        if (img.h != content.h || img.w != content.w) img = resize(img, content.h, content.w);
        return img;
    });
    return result;
}

} // namespace s2s
