#include "s2s/spm.hpp"

#include <cmath>

namespace s2s {

double semantic_loss(const Image& decoded, const std::string& prompt, const ScoreBackend& scorer,
                     double lambda_sem) {
    if (lambda_sem == 0.0) return 0.0;
    double sim;
    try {
        sim = scorer.similarity(decoded, prompt);
    } catch (const BackendError& e) {
        throw BackendError(std::string("semantic_loss: scorer failed: ") + e.what());
    }
    if (!std::isfinite(sim)) throw BackendError("semantic_loss: scorer returned non-finite value");
    return lambda_sem * sim;
}

Tensor apply_semantic_guidance(const Tensor& z_t, const Tensor& grad,
                               const SemanticGuidanceConfig& cfg, int step) {
    if (!z_t.same_shape(grad))
        throw ShapeError("apply_semantic_guidance: gradient shape " + grad.shape_str() +
                         " does not match latent " + z_t.shape_str());
    if (!grad.all_finite())
        throw NumericError("apply_semantic_guidance: gradient is not finite", step);
    if (!cfg.window.contains(step) || cfg.lambda_sem == 0.0) return z_t;

    Tensor out = z_t;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += cfg.lambda_sem * grad.data[i];
    return out;
}

Matrix inject_contour_query(int step_index, const StepWindow& window,
                            const InversionTrace& trace_cont, const std::string& layer_id,
                            int timestep, const Matrix& current_q, double gamma) {
    if (gamma == 0.0 || !window.contains(step_index)) return current_q;
    auto it = trace_cont.cached_features.find({layer_id, timestep});
    if (it == trace_cont.cached_features.end() || it->second.q.data.empty())
        throw CapabilityError("inject_contour_query: no cached contour Q for layer '" + layer_id +
                              "' at t=" + std::to_string(timestep));
    return blend_query(it->second.q, current_q, gamma);
}

Tensor estimate_similarity_gradient(const Tensor& z, const std::string& prompt,
                                    const DiffusionBackend& backend, const ScoreBackend& scorer,
                                    uint64_t probe_seed, int probes, double h) {
    if (probes < 1) throw DomainError("estimate_similarity_gradient: probes must be >= 1");
    if (!(h > 0.0)) throw DomainError("estimate_similarity_gradient: step size must be positive");

    Rng rng(probe_seed);
    Tensor grad(z.c, z.h, z.w);
    Tensor zp(z.c, z.h, z.w), zm(z.c, z.h, z.w);
    for (int p = 0; p < probes; ++p) {
        Tensor dir = rng.normal_tensor(z.c, z.h, z.w);
        double norm = 0.0;
        for (double v : dir.data) norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        for (double& v : dir.data) v /= norm;

        for (size_t i = 0; i < z.data.size(); ++i) {
            zp.data[i] = z.data[i] + h * dir.data[i];
            zm.data[i] = z.data[i] - h * dir.data[i];
        }
        double fp = scorer.similarity(backend.decode(zp), prompt);
        double fm = scorer.similarity(backend.decode(zm), prompt);
        double slope = (fp - fm) / (2.0 * h);
        for (size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += slope * dir.data[i];
    }
    double inv = 1.0 / static_cast<double>(probes);
    for (double& v : grad.data) v *= inv;
    return grad;
}

} // namespace s2s
