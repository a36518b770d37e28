// Command-line front end: single runs, parameter sweeps, ablation grids,
// inversion round-trip checks, and metric evaluation.
//
// Exit codes: 0 success, 2 usage/config/missing input, 3 backend or pipeline
// failure, 4 verification failure.

#include "s2s/config.hpp"
#include "s2s/core.hpp"
#include "s2s/eval.hpp"
#include "s2s/fixtures.hpp"
#include "s2s/image.hpp"
#include "s2s/inversion.hpp"
#include "s2s/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace s2s;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string preset;
    std::optional<double> alpha, gamma, zeta, beta_sg, beta_text, lambda_sem, tau;
    std::optional<int> steps, skip;
    std::optional<uint64_t> seed;
    std::optional<std::string> backend, mask_mode;
    std::string out = "out";
};

void add_config_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "TOML config file (flat keys)");
    cmd->add_option("--preset", o.preset, "named preset: table | text50");
    cmd->add_option("--alpha", o.alpha, "KV mix weight");
    cmd->add_option("--gamma", o.gamma, "contour query blend");
    cmd->add_option("--zeta", o.zeta, "attention contrast");
    cmd->add_option("--beta-sg", o.beta_sg, "stroke guidance scale");
    cmd->add_option("--beta-text", o.beta_text, "text guidance scale");
    cmd->add_option("--lambda-sem", o.lambda_sem, "semantic nudge weight");
    cmd->add_option("--tau", o.tau, "foreground relevance threshold");
    cmd->add_option("--steps", o.steps, "total denoising steps");
    cmd->add_option("--skip", o.skip, "skipped leading steps");
    cmd->add_option("--seed", o.seed, "run seed");
    cmd->add_option("--backend", o.backend, "backend name");
    cmd->add_option("--mask-mode", o.mask_mode, "auto | all | none | tophalf");
    cmd->add_option("--out", o.out, "output directory");
}

// Precedence: built-in defaults < preset < config file < flags.
PipelineConfig build_config_unchecked(const CommonOpts& o) {
    PipelineConfig cfg;
    if (!o.preset.empty()) apply_preset(cfg, o.preset);
    if (!o.config_path.empty()) cfg = load_config_file(o.config_path, cfg);
    if (o.alpha) cfg.alpha = *o.alpha;
    if (o.gamma) cfg.gamma = *o.gamma;
    if (o.zeta) cfg.zeta = *o.zeta;
    if (o.beta_sg) cfg.beta_sg = *o.beta_sg;
    if (o.beta_text) cfg.beta_text = *o.beta_text;
    if (o.lambda_sem) cfg.lambda_sem = *o.lambda_sem;
    if (o.tau) cfg.tau = *o.tau;
    if (o.steps) cfg.total_steps = *o.steps;
    if (o.skip) cfg.skip_steps = *o.skip;
    if (o.seed) cfg.seed = *o.seed;
    if (o.backend) cfg.backend = *o.backend;
    if (o.mask_mode) cfg.mask_mode = *o.mask_mode;
    return cfg;
}

PipelineConfig build_config(const CommonOpts& o) {
    PipelineConfig cfg = build_config_unchecked(o);
    validate_config(cfg);
    return cfg;
}

void require_source(const std::string& source, const char* what) {
    if (source.empty())
        throw DomainError(std::string("missing required ") + what + " image");
    if (!image_source_exists(source))
        throw DomainError(std::string(what) + " image '" + source + "' does not exist");
}

json window_json(const StepWindow& w) { return json::array({w.lo, w.hi}); }

json config_json(const PipelineConfig& c) {
    json j;
    j["alpha"] = c.alpha;
    j["gamma"] = c.gamma;
    j["zeta"] = c.zeta;
    j["beta_sg"] = c.beta_sg;
    j["beta_text"] = c.beta_text;
    j["lambda_sem"] = c.lambda_sem;
    j["delta"] = c.delta;
    j["tau"] = c.tau;
    j["k_clusters"] = c.k_clusters;
    j["total_steps"] = c.total_steps;
    j["skip_steps"] = c.skip_steps;
    j["injection_window_32"] = window_json(c.injection_window_32);
    j["injection_window_64"] = window_json(c.injection_window_64);
    j["guidance_window"] = window_json(c.guidance_window);
    j["semantic_window"] = window_json(c.semantic_window);
    j["seed"] = c.seed;
    j["backend"] = c.backend;
    j["mask_mode"] = c.mask_mode;
    return j;
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw BackendError("cannot write '" + path.string() + "'");
    out << j.dump(2) << "\n";
}

json result_json(const SketchResult& res, const std::string& content_src,
                 const std::string& ref_src, const json& outputs) {
    json j;
    j["content"] = content_src;
    j["reference"] = ref_src;
    j["caption"] = res.caption;
    j["config"] = config_json(res.config);
    j["config_hash"] = res.config_hash;
    j["seed"] = res.seed;
    j["outputs"] = outputs;
    j["step_ms"] = res.step_ms;
    return j;
}

double image_mean_abs_diff(const Image& a, const Image& b) {
    Image ga = a.to_gray();
    Image gb = b.to_gray();
    if (ga.h != gb.h || ga.w != gb.w)
        gb = resize(gb, ga.h, ga.w);
    double acc = 0.0;
    for (std::size_t i = 0; i < ga.data.size(); ++i)
        acc += std::abs(ga.data[i] - gb.data[i]);
    return ga.data.empty() ? 0.0 : acc / static_cast<double>(ga.data.size());
}

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> values;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw DomainError("bad sweep value '" + item + "'");
        }
        if (used != item.size()) throw DomainError("bad sweep value '" + item + "'");
        values.push_back(v);
    }
    if (values.empty()) throw DomainError("sweep needs at least one value");
    return values;
}

struct GenerateOpts {
    CommonOpts common;
    std::string content_src, ref_src;
    bool export_mask = false;
};

int run_generate(const GenerateOpts& o) {
    PipelineConfig cfg = build_config(o.common);
    require_source(o.content_src, "content");
    require_source(o.ref_src, "reference");
    Image content = resolve_image_source(o.content_src);
    Image reference = resolve_image_source(o.ref_src);
    BackendSet backends = make_backend_set(cfg.backend);
    SketchResult res = generate_sketch(content, reference, cfg, backends);

    fs::create_directories(o.common.out);
    fs::path dir(o.common.out);
    save_png(res.image, (dir / "sketch.png").string());
    json outputs;
    outputs["image"] = "sketch.png";
    if (o.export_mask) {
        save_pgm_mask(res.foreground_mask, (dir / "mask.pgm").string());
        outputs["mask"] = "mask.pgm";
    }
    write_json_file(dir / "result.json", result_json(res, o.content_src, o.ref_src, outputs));
    std::printf("wrote %s (config %s, seed %llu)\n", (dir / "sketch.png").c_str(),
                res.config_hash.c_str(), static_cast<unsigned long long>(res.seed));
    return 0;
}

struct SweepOpts {
    CommonOpts common;
    std::string content_src, ref_src;
    std::string param;
    std::string values_csv;
    int jobs = 1;
};

int run_sweep(const SweepOpts& o) {
    PipelineConfig base = build_config(o.common);
    require_source(o.content_src, "content");
    require_source(o.ref_src, "reference");
    if (o.jobs < 1) throw DomainError("--jobs must be >= 1");

    std::vector<double> values = parse_values(o.values_csv);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());

    // Reject every bad cell before any generation runs.
    std::vector<PipelineConfig> cells;
    for (double v : values) {
        PipelineConfig c = base;
        set_field(c, o.param, v);
        validate_config(c);
        cells.push_back(c);
    }

    Image content = resolve_image_source(o.content_src);
    Image reference = resolve_image_source(o.ref_src);

    std::vector<SketchResult> results(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex fail_mutex;
    std::exception_ptr failure;
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            try {
                // Each cell owns its own backend set; nothing is shared.
                BackendSet backends = make_backend_set(cells[i].backend);
                results[i] = generate_sketch(content, reference, cells[i], backends);
            } catch (...) {
                std::lock_guard<std::mutex> lock(fail_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    const int n_threads = std::min<std::size_t>(o.jobs, cells.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    fs::create_directories(o.common.out);
    fs::path dir(o.common.out);
    json report;
    report["param"] = o.param;
    report["base_config"] = config_json(base);
    report["cells"] = json::array();
    std::vector<Image> tiles;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const std::string name = o.param + "_" + format_value(values[i]) + ".png";
        save_png(results[i].image, (dir / name).string());
        tiles.push_back(results[i].image);
        json cell;
        cell["value"] = values[i];
        cell["image"] = name;
        cell["config_hash"] = results[i].config_hash;
        cell["seed"] = results[i].seed;
        report["cells"].push_back(cell);
    }
    Image sheet = tile_grid(tiles, static_cast<int>(tiles.size()));
    save_png(sheet, (dir / "contact_sheet.png").string());
    write_json_file(dir / "sweep.json", report);
    std::printf("wrote %zu cells + contact sheet to %s\n", cells.size(), o.common.out.c_str());
    return 0;
}

struct AblateOpts {
    CommonOpts common;
    std::string content_src, ref_src;
};

int run_ablate(const AblateOpts& o) {
    PipelineConfig base = build_config(o.common);
    require_source(o.content_src, "content");
    require_source(o.ref_src, "reference");
    Image content = resolve_image_source(o.content_src);
    Image reference = resolve_image_source(o.ref_src);
    BackendSet backends = make_backend_set(base.backend);

    const std::vector<std::pair<std::string, std::set<std::string>>> variants = {
        {"full", {}},
        {"no_dam", {"DAM"}},
        {"no_spm", {"SPM"}},
        {"no_sdpe", {"SDPE"}},
    };
    fs::create_directories(o.common.out);
    fs::path dir(o.common.out);
    std::vector<SketchResult> results;
    json report;
    report["base_config"] = config_json(base);
    report["variants"] = json::array();
    for (const auto& [name, disabled] : variants) {
        PipelineConfig cfg = ablate(base, disabled);
        SketchResult res = generate_sketch(content, reference, cfg, backends);
        save_png(res.image, (dir / (name + ".png")).string());
        json v;
        v["name"] = name;
        v["image"] = name + ".png";
        v["config_hash"] = res.config_hash;
        report["variants"].push_back(v);
        results.push_back(std::move(res));
    }
    json diffs;
    for (std::size_t i = 0; i < results.size(); ++i)
        for (std::size_t j = i + 1; j < results.size(); ++j) {
            const std::string key = variants[i].first + "_vs_" + variants[j].first;
            diffs[key] = image_mean_abs_diff(results[i].image, results[j].image);
        }
    report["pairwise_mean_abs_diff"] = diffs;
    write_json_file(dir / "ablation_report.json", report);
    std::printf("wrote 4 variants + ablation_report.json to %s\n", o.common.out.c_str());
    return 0;
}

struct VerifyOpts {
    CommonOpts common;
    std::string image_src;
    int corrupt_step = 0;  // 0 = leave the trace intact
};

int run_verify_inversion(const VerifyOpts& o) {
    // Round-trip checks only need the schedule fields; the injection windows
    // and skip count are irrelevant here, so the full-config invariants are
    // not enforced.
    PipelineConfig cfg = build_config_unchecked(o.common);
    require_source(o.image_src, "input");
    Image img = resolve_image_source(o.image_src);
    BackendSet backends = make_backend_set(cfg.backend);
    SamplerSchedule schedule = make_schedule(cfg.total_steps, 0);
    Tensor z0 = backends.diffusion->encode(img);
    InversionTrace trace =
        ddpm_invert(z0, schedule, *backends.diffusion, "", cfg.seed, FeatureRole::content);
    if (o.corrupt_step != 0) {
        if (o.corrupt_step < 1 || o.corrupt_step > cfg.total_steps)
            throw DomainError("--corrupt-step out of range");
        Tensor& noise = trace.per_step_noise[static_cast<std::size_t>(o.corrupt_step) - 1];
        std::fill(noise.data.begin(), noise.data.end(), 0.0);
    }
    Tensor recon = replay_reconstruct(trace, *backends.diffusion);
    const double err = max_abs_diff(z0, recon);
    std::printf("max abs reconstruction error: %.6g (T=%d)\n", err, cfg.total_steps);
    if (err > 1e-4) {
        std::fprintf(stderr, "verification failed: error above 1e-4\n");
        return 4;
    }
    return 0;
}

struct EvalOpts {
    CommonOpts common;
    std::string pairs_path;
    std::string metrics_csv = "pixel_l1,edge_overlap";
};

std::vector<std::pair<std::string, std::string>> load_pairs(const std::string& path) {
    if (path.empty())
        return {{"fixture:cat", "fixture:hatch"},
                {"fixture:dog", "fixture:ink"},
                {"fixture:house", "fixture:line"}};
    std::ifstream in(path);
    if (!in) throw DomainError("pairs file '" + path + "' does not exist");
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::stringstream ss(line);
        std::string a, b, extra;
        if (!(ss >> a)) continue;
        if (!(ss >> b) || (ss >> extra))
            throw DomainError("pairs file line needs exactly two sources: '" + line + "'");
        pairs.emplace_back(a, b);
    }
    if (pairs.empty()) throw DomainError("pairs file '" + path + "' lists no pairs");
    return pairs;
}

int run_eval(const EvalOpts& o) {
    PipelineConfig cfg = build_config(o.common);
    auto pairs = load_pairs(o.pairs_path);
    for (const auto& [c, r] : pairs) {
        require_source(c, "content");
        require_source(r, "reference");
    }
    std::vector<std::unique_ptr<PairScorer>> scorers;
    {
        std::stringstream ss(o.metrics_csv);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) scorers.push_back(make_scorer(item));
    }
    if (scorers.empty()) throw DomainError("no metrics requested");

    BackendSet backends = make_backend_set(cfg.backend);
    std::vector<PairScores> scored;
    for (const auto& [content_src, ref_src] : pairs) {
        Image content = resolve_image_source(content_src);
        Image reference = resolve_image_source(ref_src);
        SketchResult res = generate_sketch(content, reference, cfg, backends);
        PairScores ps;
        ps.content_source = content_src;
        ps.reference_source = ref_src;
        for (const auto& s : scorers)
            ps.metrics[s->name()] = s->score(res.image, content, reference);
        scored.push_back(std::move(ps));
    }
    MetricReport report = build_report(scored);

    fs::create_directories(o.common.out);
    json j;
    j["config"] = config_json(cfg);
    j["config_hash"] = config_hash(cfg);
    j["pairs"] = json::array();
    for (const auto& p : report.pairs) {
        json pj;
        pj["content"] = p.content_source;
        pj["reference"] = p.reference_source;
        pj["metrics"] = p.metrics;
        j["pairs"].push_back(pj);
        std::printf("pair %s | %s:", p.content_source.c_str(), p.reference_source.c_str());
        for (const auto& [name, value] : p.metrics) std::printf(" %s=%.6g", name.c_str(), value);
        std::printf("\n");
    }
    j["aggregates"] = report.aggregates;
    for (const auto& [name, value] : report.aggregates)
        std::printf("mean %s=%.6g\n", name.c_str(), value);
    if (report.has_combined) {
        j["combined"] = report.combined;
        std::printf("combined=%.6g\n", report.combined);
    }
    write_json_file(fs::path(o.common.out) / "eval_report.json", j);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"stylized sketch generation from a content image and a stroke reference"};
    app.require_subcommand(1);

    GenerateOpts gen;
    CLI::App* gen_cmd = app.add_subcommand("generate", "run one content/reference pair");
    gen_cmd->add_option("--content", gen.content_src, "content image path or fixture: URI")
        ->required();
    gen_cmd->add_option("--reference", gen.ref_src, "reference image path or fixture: URI")
        ->required();
    gen_cmd->add_flag("--export-mask", gen.export_mask, "also write the foreground mask");
    add_config_flags(gen_cmd, gen.common);

    SweepOpts sweep;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "grid over one config field");
    sweep_cmd->add_option("--content", sweep.content_src)->required();
    sweep_cmd->add_option("--reference", sweep.ref_src)->required();
    sweep_cmd->add_option("--param", sweep.param, "field to sweep")->required();
    sweep_cmd->add_option("--values", sweep.values_csv, "comma-separated values")->required();
    sweep_cmd->add_option("--jobs", sweep.jobs, "parallel cells");
    add_config_flags(sweep_cmd, sweep.common);

    AblateOpts abl;
    CLI::App* abl_cmd = app.add_subcommand("ablate", "full run plus one-module-off variants");
    abl_cmd->add_option("--content", abl.content_src)->required();
    abl_cmd->add_option("--reference", abl.ref_src)->required();
    add_config_flags(abl_cmd, abl.common);

    VerifyOpts ver;
    CLI::App* ver_cmd = app.add_subcommand("verify-inversion", "invert + replay round trip");
    ver_cmd->add_option("--image", ver.image_src, "image path or fixture: URI")->required();
    ver_cmd->add_option("--corrupt-step", ver.corrupt_step,
                        "zero the stored noise at this step (expected to fail)");
    add_config_flags(ver_cmd, ver.common);

    EvalOpts ev;
    CLI::App* ev_cmd = app.add_subcommand("eval", "score generated sketches");
    ev_cmd->add_option("--pairs", ev.pairs_path, "file of 'content reference' lines");
    ev_cmd->add_option("--metrics", ev.metrics_csv, "comma-separated metric names");
    add_config_flags(ev_cmd, ev.common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen_cmd->parsed()) return run_generate(gen);
        if (sweep_cmd->parsed()) return run_sweep(sweep);
        if (abl_cmd->parsed()) return run_ablate(abl);
        if (ver_cmd->parsed()) return run_verify_inversion(ver);
        if (ev_cmd->parsed()) return run_eval(ev);
    } catch (const DomainError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 2;
}
