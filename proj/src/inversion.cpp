#include "s2s/inversion.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace s2s {

double SamplerSchedule::noise_level(int t) const {
    if (t == 0) return 0.0;
    return noise_levels.at(static_cast<size_t>(t - 1));
}

double SamplerSchedule::sigma(int t) const {
    double abar_t = alpha_bar(t);
    double abar_prev = alpha_bar(t - 1);
    if (t == 1) {
        // The standard posterior scale vanishes at the final step; a positive
        // stand-in keeps every step invertible (the noise term stays solvable).
        return 0.5 * noise_level(1);
    }
    return std::sqrt((1.0 - abar_prev) / (1.0 - abar_t) * (1.0 - abar_t / abar_prev));
}

double SamplerSchedule::dir_coeff(int t) const {
    double abar_prev = alpha_bar(t - 1);
    double s = sigma(t);
    return std::sqrt(std::max(0.0, 1.0 - abar_prev - s * s));
}

SamplerSchedule make_schedule(int total_steps, int skip_steps) {
    SamplerSchedule s;
    s.total_steps = total_steps;
    s.skip_steps = skip_steps;
    if (total_steps >= 1) {
        s.noise_levels.resize(static_cast<size_t>(total_steps));
        for (int t = 1; t <= total_steps; ++t) {
            double frac = static_cast<double>(t) / total_steps;
            double abar = std::exp(-0.05 * frac - 3.0 * frac * frac);
            s.noise_levels[static_cast<size_t>(t - 1)] = std::sqrt(1.0 - abar);
        }
    }
    validate_schedule(s);
    return s;
}

void validate_schedule(const SamplerSchedule& s) {
    if (s.total_steps < 1)
        throw DomainError("schedule: total_steps must be >= 1, got " +
                          std::to_string(s.total_steps));
    if (s.skip_steps < 0 || s.skip_steps >= s.total_steps)
        throw DomainError("schedule: skip_steps must lie in [0, total_steps), got " +
                          std::to_string(s.skip_steps));
    if (static_cast<int>(s.noise_levels.size()) != s.total_steps)
        throw DomainError("schedule: expected " + std::to_string(s.total_steps) +
                          " noise levels, got " + std::to_string(s.noise_levels.size()));
    double prev = 0.0;
    for (int t = 1; t <= s.total_steps; ++t) {
        double nl = s.noise_level(t);
        if (!(nl > 0.0 && nl <= 1.0))
            throw DomainError("schedule: noise level at t=" + std::to_string(t) +
                              " outside (0, 1]");
        if (nl <= prev)
            throw DomainError("schedule: noise levels must strictly decrease toward t=0");
        prev = nl;
    }
}

std::string role_name(FeatureRole role) {
    switch (role) {
        case FeatureRole::content: return "content";
        case FeatureRole::reference: return "reference";
        case FeatureRole::contour: return "contour";
    }
    return "?";
}

namespace {

FeatureRole role_from_name(const std::string& name) {
    if (name == "content") return FeatureRole::content;
    if (name == "reference") return FeatureRole::reference;
    if (name == "contour") return FeatureRole::contour;
    throw DomainError("unknown feature role '" + name + "'");
}

void check_finite(const Tensor& z, int t, const char* what) {
    if (!z.all_finite())
        throw NumericError(std::string(what) + " is not finite", t);
}

} // namespace

Tensor sampler_update(const Tensor& z_t, const Tensor& eps_hat, const Tensor& step_noise, int t,
                      const SamplerSchedule& schedule) {
    if (!z_t.same_shape(eps_hat) || !z_t.same_shape(step_noise))
        throw ShapeError("sampler_update: tensor shapes disagree");
    double abar_t = schedule.alpha_bar(t);
    double nl_t = schedule.noise_level(t);
    double c1 = std::sqrt(schedule.alpha_bar(t - 1));
    double c2 = schedule.dir_coeff(t);
    double sg = schedule.sigma(t);
    double inv_sqrt_abar = 1.0 / std::sqrt(abar_t);

    Tensor out(z_t.c, z_t.h, z_t.w);
    for (size_t i = 0; i < z_t.data.size(); ++i) {
        double z0_pred = (z_t.data[i] - nl_t * eps_hat.data[i]) * inv_sqrt_abar;
        out.data[i] = c1 * z0_pred + c2 * eps_hat.data[i] + sg * step_noise.data[i];
    }
    return out;
}

InversionTrace ddpm_invert(const Tensor& z_0, const SamplerSchedule& schedule,
                           const DiffusionBackend& backend, const std::string& prompt,
                           uint64_t seed, FeatureRole role) {
    validate_schedule(schedule);
    check_finite(z_0, 0, "input latent");

    const int T = schedule.total_steps;
    InversionTrace trace;
    trace.schedule = schedule;
    trace.prompt = prompt;
    trace.seed = seed;
    trace.source_role = role;
    trace.latents.resize(static_cast<size_t>(T) + 1);
    trace.per_step_noise.resize(static_cast<size_t>(T));
    trace.latents[0] = z_0;

    // Independent forward-marginal samples: z_t = sqrt(abar_t) z_0 + nl_t eps.
    Rng rng(seed ^ (fnv1a(role_name(role)) | 1));
    for (int t = 1; t <= T; ++t) {
        double sqrt_abar = std::sqrt(schedule.alpha_bar(t));
        double nl = schedule.noise_level(t);
        Tensor eps = rng.normal_tensor(z_0.c, z_0.h, z_0.w);
        Tensor z(z_0.c, z_0.h, z_0.w);
        for (size_t i = 0; i < z.data.size(); ++i)
            z.data[i] = sqrt_abar * z_0.data[i] + nl * eps.data[i];
        trace.latents[static_cast<size_t>(t)] = std::move(z);
    }

    // Solve each step's noise term so the replayed update lands exactly on
    // the sampled z_{t-1}.
    for (int t = T; t >= 1; --t) {
        const Tensor& z_t = trace.latents[static_cast<size_t>(t)];
        check_finite(z_t, t, "latent");
        Tensor eps_hat = backend.predict_noise(z_t, t, prompt, nullptr);
        check_finite(eps_hat, t, "noise prediction");

        double abar_t = schedule.alpha_bar(t);
        double nl_t = schedule.noise_level(t);
        double c1 = std::sqrt(schedule.alpha_bar(t - 1));
        double c2 = schedule.dir_coeff(t);
        double sg = schedule.sigma(t);
        double inv_sqrt_abar = 1.0 / std::sqrt(abar_t);

        const Tensor& z_prev = trace.latents[static_cast<size_t>(t - 1)];
        Tensor v(z_t.c, z_t.h, z_t.w);
        for (size_t i = 0; i < v.data.size(); ++i) {
            double z0_pred = (z_t.data[i] - nl_t * eps_hat.data[i]) * inv_sqrt_abar;
            double mean = c1 * z0_pred + c2 * eps_hat.data[i];
            v.data[i] = (z_prev.data[i] - mean) / sg;
        }
        check_finite(v, t, "per-step noise");
        trace.per_step_noise[static_cast<size_t>(t - 1)] = std::move(v);
    }
    return trace;
}

namespace {

/// Recording tap: copies the role-relevant components out of each site.
class RecordingTap final : public AttentionTap {
public:
    RecordingTap(InversionTrace& trace, const CacheSpec& spec) : trace_(trace), spec_(spec) {}

    void on_features(const AttentionSite& site, AttentionFeatures& f) override {
        if (!spec_.layers.count(site.layer->id)) return;
        if (site.timestep < spec_.feature_t_lo || site.timestep > spec_.feature_t_hi) return;
        AttentionFeatures& slot = trace_.cached_features[{site.layer->id, site.timestep}];
        if (trace_.source_role == FeatureRole::reference) {
            slot.k = f.k;
            slot.v = f.v;
        } else {
            slot.q = f.q;
        }
    }

    void on_map(const AttentionSite& site, AttentionMap& a) override {
        int t = site.timestep;
        bool in_window = t >= spec_.map_t_lo && t <= spec_.map_t_hi;
        if (!in_window) return;
        if (spec_.record_self_maps && site.layer->id == spec_.map_layer)
            trace_.self_maps[t] = a;
        if (spec_.record_cross_maps && site.layer->id == spec_.cross_layer)
            trace_.cross_maps[t] = a;
    }

private:
    InversionTrace& trace_;
    const CacheSpec& spec_;
};

} // namespace

InversionTrace cache_attention_features(InversionTrace trace, const std::set<FeatureRole>& roles,
                                        const DiffusionBackend& backend, const CacheSpec& spec) {
    if (!roles.count(trace.source_role)) return trace;

    const BackendCapabilities& caps = backend.capabilities();
    for (const std::string& layer : spec.layers)
        if (!caps.find_layer(layer))
            throw CapabilityError("cache_attention_features: backend has no layer '" + layer +
                                  "'");
    for (const std::string& layer : {spec.map_layer, spec.cross_layer})
        if (!layer.empty() && !caps.find_layer(layer))
            throw CapabilityError("cache_attention_features: backend has no layer '" + layer +
                                  "'");

    RecordingTap tap(trace, spec);
    HookSet hooks;
    for (const std::string& layer : spec.layers) hooks[layer] = &tap;
    if (spec.record_self_maps && !spec.map_layer.empty()) hooks[spec.map_layer] = &tap;
    if (spec.record_cross_maps && !spec.cross_layer.empty()) hooks[spec.cross_layer] = &tap;
    if (hooks.empty()) return trace;

    if (spec.record_cross_maps) trace.cross_tokens = backend.tokenize(trace.prompt);

    // Run only the timesteps that can fill a cache cell.
    const int T = trace.schedule.total_steps;
    int t_lo = 1, t_hi = T;
    if (spec.layers.empty()) {
        t_lo = T + 1;
        t_hi = 0;
    } else {
        t_lo = std::max(1, spec.feature_t_lo);
        t_hi = std::min(T, spec.feature_t_hi);
    }
    if (spec.record_self_maps || spec.record_cross_maps) {
        if (spec.map_t_lo <= spec.map_t_hi) {
            t_lo = std::min(t_lo, std::max(1, spec.map_t_lo));
            t_hi = std::max(t_hi, std::min(T, spec.map_t_hi));
        }
    }
    for (int t = t_lo; t <= t_hi; ++t)
        backend.predict_noise(trace.latents[static_cast<size_t>(t)], t, trace.prompt, &hooks);
    return trace;
}

Tensor replay_reconstruct(const InversionTrace& trace, const DiffusionBackend& backend) {
    validate_schedule(trace.schedule);
    const BackendCapabilities& caps = backend.capabilities();
    const Tensor& zT = trace.z_T();
    if (zT.c != caps.latent_channels || zT.h != caps.latent_height || zT.w != caps.latent_width)
        throw ShapeError("replay_reconstruct: trace latent " + zT.shape_str() +
                         " does not match backend latent shape");

    Tensor z = zT;
    for (int t = trace.schedule.total_steps; t >= 1; --t) {
        Tensor eps_hat = backend.predict_noise(z, t, trace.prompt, nullptr);
        z = sampler_update(z, eps_hat, trace.per_step_noise[static_cast<size_t>(t - 1)], t,
                           trace.schedule);
        check_finite(z, t, "replayed latent");
    }
    return z;
}

// ---------------------------------------------------------------------------
// Disk cache. Tensors are serialized as little-endian float32, row-major.
// ---------------------------------------------------------------------------

namespace {

void write_f32(const std::string& path, const std::vector<double>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw BackendError("cannot write " + path);
    for (double d : data) {
        float f = static_cast<float>(d);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                              static_cast<unsigned char>((bits >> 8) & 0xff),
                              static_cast<unsigned char>((bits >> 16) & 0xff),
                              static_cast<unsigned char>((bits >> 24) & 0xff)};
        out.write(reinterpret_cast<const char*>(b), 4);
    }
}

std::vector<double> read_f32(const std::string& path, size_t count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw BackendError("cannot read " + path);
    std::vector<double> data(count);
    for (size_t i = 0; i < count; ++i) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (!in) throw BackendError("truncated tensor file " + path);
        uint32_t bits = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                        (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
        float f;
        std::memcpy(&f, &bits, 4);
        data[i] = f;
    }
    return data;
}

std::string tensor_file(const std::string& dir, const std::string& kind,
                        const std::string& layer, int t) {
    return dir + "/" + kind + "_" + layer + "_" + std::to_string(t) + ".f32";
}

} // namespace

void save_trace(const InversionTrace& trace, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const Tensor& z0 = trace.z_0();

    nlohmann::json meta;
    meta["total_steps"] = trace.schedule.total_steps;
    meta["skip_steps"] = trace.schedule.skip_steps;
    meta["noise_levels"] = trace.schedule.noise_levels;
    meta["latent_shape"] = {z0.c, z0.h, z0.w};
    meta["role"] = role_name(trace.source_role);
    meta["seed"] = trace.seed;
    meta["prompt"] = trace.prompt;
    nlohmann::json cached = nlohmann::json::array();
    for (const auto& [key, f] : trace.cached_features) {
        nlohmann::json entry;
        entry["layer"] = key.layer;
        entry["t"] = key.t;
        entry["q"] = {f.q.rows, f.q.cols};
        entry["k"] = {f.k.rows, f.k.cols};
        entry["v"] = {f.v.rows, f.v.cols};
        cached.push_back(entry);
    }
    meta["cached_features"] = cached;
    std::ofstream mf(dir + "/meta.json");
    if (!mf) throw BackendError("cannot write " + dir + "/meta.json");
    mf << meta.dump(2) << "\n";

    for (int t = 0; t <= trace.schedule.total_steps; ++t)
        write_f32(tensor_file(dir, "latent", "z", t), trace.latents[static_cast<size_t>(t)].data);
    for (int t = 1; t <= trace.schedule.total_steps; ++t)
        write_f32(tensor_file(dir, "noise", "z", t),
                  trace.per_step_noise[static_cast<size_t>(t - 1)].data);
    for (const auto& [key, f] : trace.cached_features) {
        if (!f.q.data.empty()) write_f32(tensor_file(dir, "q", key.layer, key.t), f.q.data);
        if (!f.k.data.empty()) write_f32(tensor_file(dir, "k", key.layer, key.t), f.k.data);
        if (!f.v.data.empty()) write_f32(tensor_file(dir, "v", key.layer, key.t), f.v.data);
    }
}

InversionTrace load_trace(const std::string& dir) {
    std::ifstream mf(dir + "/meta.json");
    if (!mf) throw BackendError("cannot read " + dir + "/meta.json");
    nlohmann::json meta;
    try {
        mf >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw BackendError("malformed meta.json in " + dir + ": " + e.what());
    }

    InversionTrace trace;
    trace.schedule.total_steps = meta.at("total_steps").get<int>();
    trace.schedule.skip_steps = meta.at("skip_steps").get<int>();
    trace.schedule.noise_levels = meta.at("noise_levels").get<std::vector<double>>();
    validate_schedule(trace.schedule);
    trace.source_role = role_from_name(meta.at("role").get<std::string>());
    trace.seed = meta.at("seed").get<uint64_t>();
    trace.prompt = meta.at("prompt").get<std::string>();

    auto shape = meta.at("latent_shape");
    int c = shape.at(0).get<int>(), h = shape.at(1).get<int>(), w = shape.at(2).get<int>();
    size_t n = static_cast<size_t>(c) * h * w;

    const int T = trace.schedule.total_steps;
    trace.latents.resize(static_cast<size_t>(T) + 1, Tensor(c, h, w));
    trace.per_step_noise.resize(static_cast<size_t>(T), Tensor(c, h, w));
    for (int t = 0; t <= T; ++t)
        trace.latents[static_cast<size_t>(t)].data = read_f32(tensor_file(dir, "latent", "z", t), n);
    for (int t = 1; t <= T; ++t)
        trace.per_step_noise[static_cast<size_t>(t - 1)].data =
            read_f32(tensor_file(dir, "noise", "z", t), n);

    for (const auto& entry : meta.at("cached_features")) {
        LayerStep key{entry.at("layer").get<std::string>(), entry.at("t").get<int>()};
        AttentionFeatures f;
        auto read_mat = [&](const char* kind, const nlohmann::json& dims) {
            int r = dims.at(0).get<int>(), cc = dims.at(1).get<int>();
            Matrix m(r, cc);
            if (r * cc > 0)
                m.data = read_f32(tensor_file(dir, kind, key.layer, key.t),
                                  static_cast<size_t>(r) * cc);
            return m;
        };
        f.q = read_mat("q", entry.at("q"));
        f.k = read_mat("k", entry.at("k"));
        f.v = read_mat("v", entry.at("v"));
        trace.cached_features[key] = std::move(f);
    }
    return trace;
}

} // namespace s2s
