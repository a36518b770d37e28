// Release gate: eight self-contained checks, one [PASS]/[FAIL] line each.
// argv[1] names the CLI binary (used by the determinism check); everything
// else runs in-process against the toy backends. Exits nonzero on any miss.

#include "s2s/attention.hpp"
#include "s2s/config.hpp"
#include "s2s/core.hpp"
#include "s2s/dam.hpp"
#include "s2s/fixtures.hpp"
#include "s2s/inversion.hpp"
#include "s2s/pipeline.hpp"
#include "s2s/sdpe.hpp"
#include "s2s/spm.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace s2s;

namespace {

std::string g_cli;

// Heavy runs shared across checks; lazily built so each check also works on
// its own.
std::optional<SketchResult> g_full, g_neutral;

const SketchResult& full_run() {
    if (!g_full) {
        BackendSet b = make_backend_set("toy");
        g_full = generate_sketch(fixture_image("cat"), fixture_image("hatch"), PipelineConfig{},
                                 b);
    }
    return *g_full;
}

const SketchResult& neutral_run() {
    if (!g_neutral) {
        BackendSet b = make_backend_set("toy");
        PipelineConfig cfg = ablate(PipelineConfig{}, {"DAM", "SPM", "SDPE", "CSA"});
        g_neutral = generate_sketch(fixture_image("cat"), fixture_image("hatch"), cfg, b);
    }
    return *g_neutral;
}

struct Checker {
    std::string why;
    bool ok = true;

    void expect(bool cond, const std::string& msg) {
        if (!cond && ok) {
            ok = false;
            why = msg;
        }
    }
};

Matrix random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.normal() * scale;
    return m;
}

Tensor random_tensor(Rng& rng, int c, int h, int w) {
    Tensor t(c, h, w);
    for (double& v : t.data) v = rng.normal();
    return t;
}

double tensor_max_abs(const Tensor& a, const Tensor& b) { return max_abs_diff(a, b); }

double gray_mean_abs(const Image& a, const Image& b) {
    Image ga = a.to_gray();
    Image gb = b.to_gray();
    if (ga.h != gb.h || ga.w != gb.w || ga.data.empty()) return 1e9;
    double acc = 0.0;
    for (size_t i = 0; i < ga.data.size(); ++i) acc += std::fabs(ga.data[i] - gb.data[i]);
    return acc / static_cast<double>(ga.data.size());
}

int run_cli(const std::string& args) {
    const std::string cmd = "\"" + g_cli + "\" " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc == -1 || !WIFEXITED(rc)) return -1;
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "<missing:" + path.string() + ">";
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// --- 1. equation oracles -------------------------------------------------

bool check_equation_oracles(std::string& why) {
    Checker c;
    Rng rng(20260814);
    int instances = 0;
    const double tol = 1e-6;

    for (int n = 0; n < 30; ++n) {
        const int nq = 1 + static_cast<int>(rng.below(6));
        const int nk = 1 + static_cast<int>(rng.below(8));
        const int d = 1 + static_cast<int>(rng.below(6));
        AttentionFeatures f{random_matrix(rng, nq, d), random_matrix(rng, nk, d),
                            random_matrix(rng, nk, d)};
        AttentionResult got = scaled_attention(f);

        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
        Matrix a(nq, nk);
        for (int i = 0; i < nq; ++i) {
            double hi = -1e300;
            for (int j = 0; j < nk; ++j) {
                double l = 0.0;
                for (int e = 0; e < d; ++e) l += f.q(i, e) * f.k(j, e);
                a(i, j) = l * inv_sqrt_d;
                hi = std::max(hi, a(i, j));
            }
            double z = 0.0;
            for (int j = 0; j < nk; ++j) {
                a(i, j) = std::exp(a(i, j) - hi);
                z += a(i, j);
            }
            for (int j = 0; j < nk; ++j) a(i, j) /= z;
        }
        Matrix phi(nq, f.v.cols);
        for (int i = 0; i < nq; ++i)
            for (int e = 0; e < f.v.cols; ++e) {
                double s = 0.0;
                for (int j = 0; j < nk; ++j) s += a(i, j) * f.v(j, e);
                phi(i, e) = s;
            }
        c.expect(max_abs_diff(got.map, a) < tol, "scaled_attention map off oracle");
        c.expect(max_abs_diff(got.output, phi) < tol, "scaled_attention output off oracle");
        ++instances;
    }

    for (int n = 0; n < 30; ++n) {
        const int rows = 1 + static_cast<int>(rng.below(5));
        const int cols = 1 + static_cast<int>(rng.below(5));
        Matrix kr = random_matrix(rng, rows, cols), vr = random_matrix(rng, rows, cols);
        Matrix kc = random_matrix(rng, rows, cols), vc = random_matrix(rng, rows, cols);
        const double alpha = rng.uniform();
        AttentionFeatures mixed = mix_kv(kr, vr, kc, vc, alpha);
        double err = 0.0;
        for (size_t i = 0; i < kr.data.size(); ++i) {
            err = std::max(err, std::fabs(mixed.k.data[i] - (kr.data[i] + alpha * kc.data[i])));
            err = std::max(err, std::fabs(mixed.v.data[i] - (vr.data[i] + alpha * vc.data[i])));
        }
        c.expect(err < tol, "mix_kv off entrywise oracle");
        ++instances;
    }

    for (int n = 0; n < 30; ++n) {
        const int rows = 1 + static_cast<int>(rng.below(5));
        const int cols = 1 + static_cast<int>(rng.below(5));
        Matrix qc = random_matrix(rng, rows, cols), qs = random_matrix(rng, rows, cols);
        const double gamma = rng.uniform();
        Matrix blended = blend_query(qc, qs, gamma);
        double err = 0.0;
        for (size_t i = 0; i < qc.data.size(); ++i)
            err = std::max(err, std::fabs(blended.data[i] -
                                          (gamma * qc.data[i] + (1.0 - gamma) * qs.data[i])));
        c.expect(err < tol, "blend_query off entrywise oracle");
        ++instances;
    }

    for (int n = 0; n < 30; ++n) {
        const int rows = 1 + static_cast<int>(rng.below(4));
        const int cols = 2 + static_cast<int>(rng.below(6));
        Matrix a = softmax_rows(random_matrix(rng, rows, cols, 2.0));
        const double zeta = 0.2 + 2.3 * rng.uniform();
        Matrix got = enhance_contrast(a, zeta);
        for (int i = 0; i < rows; ++i) {
            double mu = 0.0;
            for (int j = 0; j < cols; ++j) mu += a(i, j);
            mu /= cols;
            std::vector<double> row(static_cast<size_t>(cols));
            double sum = 0.0;
            for (int j = 0; j < cols; ++j) {
                row[static_cast<size_t>(j)] = std::max(0.0, (a(i, j) - mu) * zeta + mu);
                sum += row[static_cast<size_t>(j)];
            }
            for (int j = 0; j < cols; ++j)
                c.expect(std::fabs(got(i, j) - row[static_cast<size_t>(j)] / sum) < tol,
                         "enhance_contrast off stretch/clip/renorm oracle");
        }
        ++instances;
    }

    for (int n = 0; n < 30; ++n) {
        const int res = 4 + static_cast<int>(rng.below(5));
        ForegroundMask m(res, 0);
        for (uint8_t& g : m.grid) g = rng.below(2) ? 1 : 0;
        Matrix a(res, res);
        for (double& v : a.data) v = rng.uniform();
        const double delta = 1e-5;
        double num = 0.0, den = delta;
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                num += m.at(y, x) * a(y, x);
                den += m.at(y, x);
            }
        c.expect(std::fabs(relevance_score(m, a, delta) - num / den) < tol,
                 "relevance_score off hand oracle");
        ++instances;
    }

    for (int n = 0; n < 30; ++n) {
        Tensor self = random_tensor(rng, 2, 3, 4);
        Tensor stroke = random_tensor(rng, 2, 3, 4);
        Tensor text = random_tensor(rng, 2, 3, 4);
        const double bs = 6.0 * rng.uniform(), bt = 2.0 * rng.uniform();
        Tensor got = cfg_combine(self, stroke, text, bs, bt);
        double err = 0.0;
        for (size_t i = 0; i < self.data.size(); ++i) {
            const double want = self.data[i] + bs * (stroke.data[i] - self.data[i]) +
                                bt * (text.data[i] - self.data[i]);
            err = std::max(err, std::fabs(got.data[i] - want));
        }
        c.expect(err < tol, "cfg_combine off entrywise oracle");
        ++instances;
    }

    c.expect(instances >= 100, "fewer than 100 oracle instances");
    why = c.why;
    return c.ok;
}

// --- 2. identity collapses -------------------------------------------------

bool check_identity_collapses(std::string& why) {
    Checker c;
    Rng rng(31337);
    const double tol = 1e-9;

    Matrix a = softmax_rows(random_matrix(rng, 4, 6, 2.0));
    c.expect(max_abs_diff(enhance_contrast(a, 1.0), a) < tol, "zeta=1 not the identity");

    Matrix kr = random_matrix(rng, 4, 4), vr = random_matrix(rng, 4, 4);
    Matrix kc = random_matrix(rng, 4, 4), vc = random_matrix(rng, 4, 4);
    AttentionFeatures mixed = mix_kv(kr, vr, kc, vc, 0.0);
    c.expect(max_abs_diff(mixed.k, kr) < tol && max_abs_diff(mixed.v, vr) < tol,
             "alpha=0 does not return the reference bank");

    Matrix qc = random_matrix(rng, 3, 5), qs = random_matrix(rng, 3, 5);
    c.expect(max_abs_diff(blend_query(qc, qs, 0.0), qs) < tol, "gamma=0 not the identity");

    Tensor self = random_tensor(rng, 2, 3, 3);
    Tensor stroke = random_tensor(rng, 2, 3, 3);
    Tensor text = random_tensor(rng, 2, 3, 3);
    c.expect(tensor_max_abs(cfg_combine(self, stroke, text, 0.0, 0.0), self) < tol,
             "beta_sg=beta_text=0 not the identity");

    Tensor z = random_tensor(rng, 4, 4, 4);
    Tensor grad = random_tensor(rng, 4, 4, 4);
    SemanticGuidanceConfig sg;
    sg.lambda_sem = 0.0;
    sg.window = {1, 100};
    c.expect(tensor_max_abs(apply_semantic_guidance(z, grad, sg, 10), z) < tol,
             "lambda=0 not the identity");

    why = c.why;
    return c.ok;
}

// --- 3. inversion round trip -----------------------------------------------

bool check_inversion_roundtrip(std::string& why) {
    Checker c;
    BackendSet b = make_backend_set("toy");
    for (int T : {1, 10, 50}) {
        SamplerSchedule schedule = make_schedule(T, 0);
        for (uint64_t seed = 1; seed <= 20; ++seed) {
            Rng rng(seed * 7919 + static_cast<uint64_t>(T));
            Tensor z0 = random_tensor(rng, 4, 16, 16);
            InversionTrace trace =
                ddpm_invert(z0, schedule, *b.diffusion, "", seed, FeatureRole::content);
            Tensor recon = replay_reconstruct(trace, *b.diffusion);
            if (max_abs_diff(z0, recon) >= 1e-4) {
                c.expect(false, "replay misses z_0 at T=" + std::to_string(T) + " seed " +
                                    std::to_string(seed));
            }
        }
    }
    why = c.why;
    return c.ok;
}

// --- 4. neutralized pipeline collapse ---------------------------------------

bool check_pipeline_collapse(std::string& why) {
    Checker c;
    BackendSet b = make_backend_set("toy");
    Tensor z0 = b.diffusion->encode(fixture_image("cat"));
    const double err = max_abs_diff(neutral_run().final_latent, z0);
    c.expect(err < 1e-4, "neutralized run departs from the content latent by " +
                             std::to_string(err));
    why = c.why;
    return c.ok;
}

// --- 5. window and mask respect ----------------------------------------------

bool check_windows_and_mask(std::string& why) {
    Checker c;
    const SketchResult& full = full_run();
    const PipelineConfig cfg = full.config;

    c.expect(full.counters.total_outside(full.counters.kv_by_band, cfg) == 0,
             "KV mixing fired outside an injection window");
    c.expect(full.counters.total_outside(full.counters.qblend_by_band, cfg) == 0,
             "query blending fired outside an injection window");
    c.expect(full.counters.total_outside(full.counters.enhance_by_band, cfg) == 0,
             "contrast enhancement fired outside an injection window");

    auto band_total = [](const std::map<int, std::vector<int>>& per_band) {
        int t = 0;
        for (const auto& [band, counts] : per_band)
            for (int v : counts) t += v;
        return t;
    };
    c.expect(band_total(full.counters.kv_by_band) > 0, "KV counters never fired");
    c.expect(band_total(full.counters.qblend_by_band) > 0, "query counters never fired");
    c.expect(band_total(full.counters.enhance_by_band) > 0, "contrast counters never fired");

    for (int i = 1; i < static_cast<int>(full.counters.cfg_steps.size()); ++i) {
        if (!cfg.guidance_window.contains(i))
            c.expect(full.counters.cfg_steps[static_cast<size_t>(i)] == 0,
                     "guidance combine fired outside its window");
        if (!cfg.semantic_window.contains(i))
            c.expect(full.counters.semantic_steps[static_cast<size_t>(i)] == 0,
                     "semantic nudge fired outside its window");
    }

    // Foreground/background split: with a top-half mask, the bottom half of
    // the latent must stay closer to the unguided reconstruction.
    BackendSet b = make_backend_set("toy");
    PipelineConfig top_cfg;
    top_cfg.mask_mode = "tophalf";
    SketchResult top =
        generate_sketch(fixture_image("cat"), fixture_image("hatch"), top_cfg, b);
    const Tensor& base = neutral_run().final_latent;
    double fg = 0.0, bg = 0.0;
    const int half = top.final_latent.h / 2;
    for (int ch = 0; ch < top.final_latent.c; ++ch)
        for (int y = 0; y < top.final_latent.h; ++y)
            for (int x = 0; x < top.final_latent.w; ++x) {
                const double d = std::fabs(top.final_latent.at(ch, y, x) - base.at(ch, y, x));
                (y < half ? fg : bg) += d;
            }
    c.expect(bg < fg, "background moved at least as much as the masked foreground");

    why = c.why;
    return c.ok;
}

// --- 6. segmentation recovery ------------------------------------------------

bool check_segmentation_recovery(std::string& why) {
    Checker c;

    // Two planted groups of identical feature rows must be recovered exactly.
    const int res = 4, p = 16;
    Matrix f_sa(p, 3);
    for (int r = 0; r < p; ++r)
        for (int e = 0; e < 3; ++e) f_sa(r, e) = (r < 8) ? 0.1 + 0.05 * e : 0.9 - 0.1 * e;
    for (uint64_t seed : {1ULL, 42ULL, 777ULL}) {
        auto masks = cluster_attention(f_sa, res, 2, seed);
        if (masks.size() != 2) {
            c.expect(false, "expected exactly two clusters");
            break;
        }
        const bool a_is_low = masks[0].grid[0] == 1;
        const ForegroundMask& low = a_is_low ? masks[0] : masks[1];
        const ForegroundMask& high = a_is_low ? masks[1] : masks[0];
        for (int r = 0; r < p; ++r) {
            c.expect(low.grid[static_cast<size_t>(r)] == (r < 8 ? 1 : 0),
                     "low-feature group not recovered verbatim");
            c.expect(high.grid[static_cast<size_t>(r)] == (r < 8 ? 0 : 1),
                     "high-feature group not recovered verbatim");
        }
    }

    // Selection is strict: relevance exactly at tau stays background.
    SegmentationState state;
    state.resolution = 2;
    state.cluster_masks = {ForegroundMask(2, 1)};
    state.relevance[{0, "cat"}] = 0.35;
    c.expect(select_foreground(state, 0.35).none_set(), "r = tau was selected");
    state.relevance[{0, "cat"}] = std::nextafter(0.35, 1.0);
    c.expect(select_foreground(state, 0.35).all_set(), "r just above tau was not selected");

    why = c.why;
    return c.ok;
}

// --- 7. CLI determinism ------------------------------------------------------

bool check_cli_determinism(std::string& why) {
    Checker c;
    fs::path base = fs::temp_directory_path() / "s2s_acceptance";
    fs::remove_all(base);
    fs::create_directories(base);
    const std::string pair = " --content fixture:cat --reference fixture:hatch";

    auto rerun_identical = [&](const std::string& sub, const std::string& extra,
                               const std::vector<std::string>& files, const char* what) {
        fs::path a = base / (sub + "_a"), bdir = base / (sub + "_b");
        if (run_cli(sub + pair + extra + " --out " + a.string()) != 0 ||
            run_cli(sub + pair + extra + " --out " + bdir.string()) != 0) {
            c.expect(false, std::string(what) + " run failed");
            return;
        }
        for (const std::string& f : files) {
            const std::string first = slurp(a / f);
            c.expect(first.rfind("<missing", 0) != 0, std::string(what) + " missing " + f);
            c.expect(first == slurp(bdir / f),
                     std::string(what) + " bytes differ across reruns: " + f);
        }
    };

    rerun_identical("generate", " --seed 42", {"sketch.png"}, "generate");
    rerun_identical("sweep", " --seed 42 --param gamma --values 0.15,0.25,0.6",
                    {"gamma_0.15.png", "gamma_0.25.png", "gamma_0.6.png", "contact_sheet.png"},
                    "sweep");
    rerun_identical("ablate", " --seed 42",
                    {"full.png", "no_dam.png", "no_spm.png", "no_sdpe.png"}, "ablate");

    why = c.why;
    return c.ok;
}

// --- 8. sensitivity ----------------------------------------------------------

bool check_sensitivity(std::string& why) {
    Checker c;
    BackendSet b = make_backend_set("toy");
    const SketchResult& full = full_run();

    SketchResult other =
        generate_sketch(fixture_image("cat"), fixture_image("ink"), full.config, b);
    const double ref_shift = gray_mean_abs(full.image, other.image);
    c.expect(ref_shift > 1e-3,
             "reference swap moved the output by only " + std::to_string(ref_shift));

    for (const std::string& module : {"DAM", "SPM", "SDPE", "CSA"}) {
        PipelineConfig cfg = ablate(full.config, {module});
        SketchResult res = generate_sketch(fixture_image("cat"), fixture_image("hatch"), cfg, b);
        c.expect(gray_mean_abs(full.image, res.image) > 1e-6,
                 "disabling " + module + " left the output unchanged");
    }

    why = c.why;
    return c.ok;
}

struct Gate {
    const char* label;
    double budget_s;
    bool (*fn)(std::string&);
};

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: %s <cli-binary>\n", argv[0]);
        return 2;
    }
    g_cli = argv[1];

    const Gate gates[] = {
        {"equation oracles", 5.0, check_equation_oracles},
        {"identity collapses", 1.0, check_identity_collapses},
        {"inversion round trip", 30.0, check_inversion_roundtrip},
        {"neutralized pipeline collapse", 10.0, check_pipeline_collapse},
        {"window and mask respect", 20.0, check_windows_and_mask},
        {"segmentation recovery", 5.0, check_segmentation_recovery},
        {"cli determinism", 60.0, check_cli_determinism},
        {"sensitivity", 30.0, check_sensitivity},
    };

    int failures = 0;
    int id = 0;
    for (const Gate& gate : gates) {
        ++id;
        std::string why;
        bool ok = false;
        const auto start = std::chrono::steady_clock::now();
        try {
            ok = gate.fn(why);
        } catch (const std::exception& e) {
            ok = false;
            why = std::string("exception: ") + e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (ok && elapsed >= gate.budget_s) {
            ok = false;
            why = "over budget";
        }
        if (ok) {
            std::printf("[PASS] %d. %s (%.2fs, budget %.0fs)\n", id, gate.label, elapsed,
                        gate.budget_s);
        } else {
            std::printf("[FAIL] %d. %s (%.2fs, budget %.0fs): %s\n", id, gate.label, elapsed,
                        gate.budget_s, why.c_str());
            ++failures;
        }
    }
    return failures == 0 ? 0 : 1;
}
