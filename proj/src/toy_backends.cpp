#include "s2s/backends.hpp"
#include "s2s/fixtures.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace s2s {

namespace {

constexpr uint64_t kWeightsSeed = 0x5eedf00dULL;
constexpr uint64_t kTextSeed = 0x7e57e4b9ULL;
constexpr uint64_t kScoreSeed = 0x5c04e12fULL;
constexpr int kD = 8;  // feature width shared by all toy blocks

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        if (std::isalpha(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

Matrix locality_bias(int side, double sigma) {
    int n = side * side;
    Matrix b(n, n);
    double inv = 1.0 / (2.0 * sigma * sigma);
    for (int i = 0; i < n; ++i) {
        int yi = i / side, xi = i % side;
        for (int j = 0; j < n; ++j) {
            int yj = j / side, xj = j % side;
            double dy = yi - yj, dx = xi - xj;
            b(i, j) = -(dy * dy + dx * dx) * inv;
        }
    }
    return b;
}

} // namespace

// ---------------------------------------------------------------------------
// Toy diffusion backend: 4x16x16 latent, two self-attention blocks (16x16 and
// 8x8 grids standing in for the 64- and 32-token bands of a full model), one
// cross-attention block at 8x8, fixed seeded weights, linear 2x pixel<->latent
// codec. Immutable after construction; all methods are const and thread-safe.
// ---------------------------------------------------------------------------

class ToyDiffusionBackend final : public DiffusionBackend {
public:
    explicit ToyDiffusionBackend(uint64_t weights_seed = kWeightsSeed) {
        caps_.model_name = "toy";
        caps_.latent_channels = 4;
        caps_.latent_height = 16;
        caps_.latent_width = 16;
        caps_.image_height = 32;
        caps_.image_width = 32;
        caps_.attention_layers = {
            {"self_hi", AttentionKind::self_attn, 16, 64},
            {"self_lo", AttentionKind::self_attn, 8, 32},
            {"cross_lo", AttentionKind::cross_attn, 8, 32},
        };
        caps_.supports_differentiable_decode = false;
        caps_.thread_safe = true;

        Rng rng(weights_seed);
        const double g = 0.35;  // weight gain; keeps the step map contractive
        wz_ = rng.normal_matrix(4, kD, g);
        wt_ = rng.normal_matrix(4, kD, g);
        pos_hi_ = rng.normal_matrix(16 * 16, kD, 0.25);
        pos_lo_ = rng.normal_matrix(8 * 8, kD, 0.25);
        auto block = [&](double qk_gain) {
            Block b;
            b.wq = rng.normal_matrix(kD, kD, qk_gain);
            b.wk = rng.normal_matrix(kD, kD, qk_gain);
            b.wv = rng.normal_matrix(kD, kD, g);
            b.wo = rng.normal_matrix(kD, kD, g);
            return b;
        };
        self_hi_ = block(g);
        self_lo_ = block(g);
        cross_lo_ = block(3.0);  // sharper text attention, gives nouns contrast
        w_out_ = rng.normal_matrix(kD, 4, g);
        null_token_ = rng.normal_matrix(1, kD, 0.5);
        enc_w_ = rng.normal_matrix(3 * 4 + 1, 4, 0.4);
        dec_w_ = rng.normal_matrix(4 + 1, 3 * 4, 0.35);
        bias_hi_ = locality_bias(16, 2.0);
        bias_lo_ = locality_bias(8, 1.5);
    }

    const BackendCapabilities& capabilities() const override { return caps_; }

    Tensor predict_noise(const Tensor& z_t, int t, const std::string& text,
                         const HookSet* hooks) const override {
        if (z_t.c != caps_.latent_channels || z_t.h != caps_.latent_height ||
            z_t.w != caps_.latent_width)
            throw ShapeError("predict_noise: latent is " + z_t.shape_str() + ", backend expects " +
                             std::to_string(caps_.latent_channels) + "x" +
                             std::to_string(caps_.latent_height) + "x" +
                             std::to_string(caps_.latent_width));
        if (hooks) {
            for (const auto& [layer_id, tap] : *hooks) {
                (void)tap;
                if (!caps_.find_layer(layer_id))
                    throw CapabilityError("hook references undeclared layer '" + layer_id + "'");
            }
        }

        // Token features at 16x16: projected latent + time features + position.
        double tf[4] = {std::sin(t * 0.13), std::cos(t * 0.13), std::sin(t * 0.031),
                        std::cos(t * 0.031)};
        int n_hi = 16 * 16;
        Matrix u(n_hi, kD);
        for (int i = 0; i < n_hi; ++i) {
            int y = i / 16, x = i % 16;
            for (int d = 0; d < kD; ++d) {
                double s = pos_hi_(i, d);
                for (int ch = 0; ch < 4; ++ch) s += z_t.at(ch, y, x) * wz_(ch, d);
                for (int k = 0; k < 4; ++k) s += tf[k] * wt_(k, d);
                u(i, d) = s;
            }
        }

        run_self_block(u, self_hi_, bias_hi_, "self_hi", t, hooks);

        // 2x2 mean-pool to the 8x8 grid.
        int n_lo = 8 * 8;
        Matrix ul(n_lo, kD);
        for (int i = 0; i < n_lo; ++i) {
            int y = i / 8, x = i % 8;
            for (int d = 0; d < kD; ++d) {
                double s = 0.0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        s += u((2 * y + dy) * 16 + (2 * x + dx), d);
                ul(i, d) = 0.25 * s + pos_lo_(i, d);
            }
        }

        run_self_block(ul, self_lo_, bias_lo_, "self_lo", t, hooks);
        run_cross_block(ul, text, t, hooks);

        // Nearest upsample back to 16x16, combine, project to a clean-latent
        // estimate g, and report eps = z - squash(g). The squash bounds g, so
        // the sampler's z coefficient stays below 1 at every step and
        // classifier-free extrapolation amplifies only g differences, never
        // the raw z term; guided trajectories stay bounded at any scale.
        Tensor eps(4, 16, 16);
        const double squash = 2.0;
        for (int i = 0; i < n_hi; ++i) {
            int y = i / 16, x = i % 16;
            int li = (y / 2) * 8 + (x / 2);
            for (int ch = 0; ch < 4; ++ch) {
                double g = 0.0;
                for (int d = 0; d < kD; ++d) g += (u(i, d) + ul(li, d)) * w_out_(d, ch);
                eps.at(ch, y, x) = z_t.at(ch, y, x) - squash * std::tanh(g / squash);
            }
        }
        return eps;
    }

    Tensor encode(const Image& img) const override {
        if (img.empty()) throw ShapeError("encode: empty image");
        Image rgb = img;
        if (rgb.c == 1) {
            Image expanded(3, rgb.h, rgb.w);
            for (int ch = 0; ch < 3; ++ch)
                for (int y = 0; y < rgb.h; ++y)
                    for (int x = 0; x < rgb.w; ++x) expanded.at(ch, y, x) = rgb.at(0, y, x);
            rgb = expanded;
        }
        if (rgb.h != caps_.image_height || rgb.w != caps_.image_width)
            rgb = resize(rgb, caps_.image_height, caps_.image_width);

        Tensor z(4, 16, 16);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                for (int lch = 0; lch < 4; ++lch) {
                    double s = enc_w_(12, lch);  // bias row
                    int r = 0;
                    for (int ch = 0; ch < 3; ++ch)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx, ++r)
                                s += (rgb.at(ch, 2 * y + dy, 2 * x + dx) - 0.5) * enc_w_(r, lch);
                    z.at(lch, y, x) = s;
                }
        return z;
    }

    Image decode(const Tensor& z) const override {
        if (z.c != 4 || z.h != 16 || z.w != 16)
            throw ShapeError("decode: latent is " + z.shape_str() + ", expected 4x16x16");
        Image img(3, 32, 32);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                int r = 0;
                for (int ch = 0; ch < 3; ++ch)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx, ++r) {
                            double s = dec_w_(4, r);
                            for (int lch = 0; lch < 4; ++lch) s += z.at(lch, y, x) * dec_w_(lch, r);
                            img.at(ch, 2 * y + dy, 2 * x + dx) = std::clamp(s + 0.5, 0.0, 1.0);
                        }
            }
        return img;
    }

    std::vector<std::string> tokenize(const std::string& text) const override {
        std::vector<std::string> tokens = {"<null>"};
        for (const std::string& w : split_words(text)) tokens.push_back(w);
        return tokens;
    }

private:
    struct Block {
        Matrix wq, wk, wv, wo;
    };

    void run_self_block(Matrix& u, const Block& b, const Matrix& bias,
                        const std::string& layer_id, int t, const HookSet* hooks) const {
        AttentionFeatures f{matmul(u, b.wq), matmul(u, b.wk), matmul(u, b.wv)};
        AttentionTap* tap = find_tap(hooks, layer_id);
        AttentionSite site{caps_.find_layer(layer_id), t};
        if (tap) tap->on_features(site, f);
        AttentionResult r = scaled_attention(f, &bias);
        if (tap) tap->on_map(site, r.map);
        Matrix phi = matmul(r.map, f.v);
        Matrix delta = matmul(phi, b.wo);
        for (size_t i = 0; i < u.data.size(); ++i) u.data[i] += delta.data[i];
    }

    void run_cross_block(Matrix& u, const std::string& text, int t, const HookSet* hooks) const {
        std::vector<std::string> tokens = tokenize(text);
        Matrix e(static_cast<int>(tokens.size()), kD);
        for (int i = 0; i < e.rows; ++i) {
            if (tokens[static_cast<size_t>(i)] == "<null>") {
                for (int d = 0; d < kD; ++d) e(i, d) = null_token_(0, d);
            } else {
                Rng trng(fnv1a(tokens[static_cast<size_t>(i)]) ^ kTextSeed);
                for (int d = 0; d < kD; ++d) e(i, d) = trng.normal() * 0.5;
            }
        }
        AttentionFeatures f{matmul(u, cross_lo_.wq), matmul(e, cross_lo_.wk),
                            matmul(e, cross_lo_.wv)};
        AttentionTap* tap = find_tap(hooks, "cross_lo");
        AttentionSite site{caps_.find_layer("cross_lo"), t};
        if (tap) tap->on_features(site, f);
        AttentionResult r = scaled_attention(f);
        if (tap) tap->on_map(site, r.map);
        Matrix phi = matmul(r.map, f.v);
        Matrix delta = matmul(phi, cross_lo_.wo);
        for (size_t i = 0; i < u.data.size(); ++i) u.data[i] += delta.data[i];
    }

    static AttentionTap* find_tap(const HookSet* hooks, const std::string& layer_id) {
        if (!hooks) return nullptr;
        auto it = hooks->find(layer_id);
        return it == hooks->end() ? nullptr : it->second;
    }

    BackendCapabilities caps_;
    Matrix wz_, wt_, pos_hi_, pos_lo_, w_out_, null_token_;
    Block self_hi_, self_lo_, cross_lo_;
    Matrix enc_w_, dec_w_;
    Matrix bias_hi_, bias_lo_;
};

// ---------------------------------------------------------------------------
// Toy edge detector: forward-difference gradient magnitude, responses below
// 0.2 suppressed. Returns the response map; callers render strokes as
// 1 - response.
// ---------------------------------------------------------------------------

class ToyEdgeBackend final : public EdgeBackend {
public:
    Image detect(const Image& img) const override {
        if (img.empty()) throw DomainError("edge detect: empty image");
        Image g = img.to_gray();
        Image out(1, g.h, g.w);
        for (int y = 0; y < g.h; ++y)
            for (int x = 0; x < g.w; ++x) {
                double gx = (x + 1 < g.w) ? g.at(0, y, x + 1) - g.at(0, y, x) : 0.0;
                double gy = (y + 1 < g.h) ? g.at(0, y + 1, x) - g.at(0, y, x) : 0.0;
                double mag = std::fabs(gx) + std::fabs(gy);
                out.at(0, y, x) = (mag > 0.2) ? std::min(mag, 1.0) : 0.0;
            }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Toy captioner: exact-pixel-hash lookup over the built-in fixtures.
// ---------------------------------------------------------------------------

class ToyCaptionBackend final : public CaptionBackend {
public:
    ToyCaptionBackend() {
        for (const Fixture& f : fixture_registry()) {
            if (f.caption.empty()) continue;
            table_.emplace_back(image_hash(fixture_image(f.name)), f.caption);
        }
    }

    std::string caption(const Image& img) const override {
        if (img.empty()) throw BackendError("caption: empty image");
        uint64_t h = image_hash(img);
        for (const auto& [hash, text] : table_)
            if (hash == h) return text;
        return "an object";
    }

private:
    static uint64_t image_hash(const Image& img) {
        std::vector<uint8_t> bytes;
        bytes.reserve(img.data.size() + 3);
        bytes.push_back(static_cast<uint8_t>(img.c));
        bytes.push_back(static_cast<uint8_t>(img.h));
        bytes.push_back(static_cast<uint8_t>(img.w));
        for (double v : img.data) {
            double q = std::clamp(v, 0.0, 1.0) * 255.0 + 0.5;
            bytes.push_back(static_cast<uint8_t>(q));
        }
        return fnv1a(bytes.data(), bytes.size());
    }

    std::vector<std::pair<uint64_t, std::string>> table_;
};

// ---------------------------------------------------------------------------
// Toy scorer: cosine between pooled pixel statistics and a seeded hash
// embedding of the text. Pure and finite for all inputs.
// ---------------------------------------------------------------------------

std::vector<double> toy_pooled_stats(const Image& img) {
    if (img.empty()) throw BackendError("score: empty image");
    Image g = img.to_gray();
    int n = g.h * g.w;
    double mean = 0.0;
    for (double v : g.data) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : g.data) var += (v - mean) * (v - mean);
    var /= n;

    auto region_mean = [&](int y0, int y1, int x0, int x1) {
        double s = 0.0;
        int cnt = 0;
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x, ++cnt) s += g.at(0, y, x);
        return cnt ? s / cnt : 0.0;
    };
    double dx = 0.0, dy = 0.0;
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
            if (x + 1 < g.w) dx += std::fabs(g.at(0, y, x + 1) - g.at(0, y, x));
            if (y + 1 < g.h) dy += std::fabs(g.at(0, y + 1, x) - g.at(0, y, x));
        }
    dx /= n;
    dy /= n;

    return {mean,
            std::sqrt(var),
            region_mean(0, g.h / 2, 0, g.w),
            region_mean(g.h / 2, g.h, 0, g.w),
            region_mean(0, g.h, 0, g.w / 2),
            region_mean(0, g.h, g.w / 2, g.w),
            dx,
            dy};
}

std::vector<double> toy_text_embedding(const std::string& text) {
    std::vector<double> e(8, 0.0);
    std::vector<std::string> words = split_words(text);
    if (words.empty()) words.push_back("<empty>");
    for (const std::string& w : words) {
        Rng rng(fnv1a(w) ^ kScoreSeed);
        for (double& v : e) v += rng.normal();
    }
    for (double& v : e) v /= static_cast<double>(words.size());
    return e;
}

double toy_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("cosine: vector sizes disagree");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

class ToyScoreBackend final : public ScoreBackend {
public:
    double similarity(const Image& img, const std::string& text) const override {
        return toy_cosine(toy_pooled_stats(img), toy_text_embedding(text));
    }
};

// ---------------------------------------------------------------------------
// Toy saliency masker: 3x3 local variance threshold.
// ---------------------------------------------------------------------------

class ToyMaskBackend final : public MaskBackend {
public:
    Image salient_mask(const Image& img) const override {
        if (img.empty()) throw DomainError("salient_mask: empty image");
        Image g = img.to_gray();
        Image out(1, g.h, g.w);
        for (int y = 0; y < g.h; ++y)
            for (int x = 0; x < g.w; ++x) {
                double s = 0.0, s2 = 0.0;
                int cnt = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        int yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= g.h || xx < 0 || xx >= g.w) continue;
                        double v = g.at(0, yy, xx);
                        s += v;
                        s2 += v * v;
                        ++cnt;
                    }
                double mean = s / cnt;
                double var = s2 / cnt - mean * mean;
                out.at(0, y, x) = var > 0.002 ? 1.0 : 0.0;
            }
        return out;
    }
};

// ---------------------------------------------------------------------------
// sd-adapter: validates an exported-weights directory; inference itself is
// not bundled, so model calls raise BackendError.
// ---------------------------------------------------------------------------

class SdAdapterBackend final : public DiffusionBackend {
public:
    SdAdapterBackend() {
        const char* dir = std::getenv("S2S_MODEL_DIR");
        if (!dir || !*dir)
            throw BackendError(
                "sd-adapter backend requires S2S_MODEL_DIR to point at exported model weights");
        std::string manifest_path = std::string(dir) + "/manifest.json";
        std::ifstream in(manifest_path);
        if (!in)
            throw BackendError("sd-adapter: cannot read manifest at " + manifest_path);
        nlohmann::json manifest;
        try {
            in >> manifest;
            caps_.model_name = manifest.at("model_name").get<std::string>();
            auto shape = manifest.at("latent_shape");
            caps_.latent_channels = shape.at(0).get<int>();
            caps_.latent_height = shape.at(1).get<int>();
            caps_.latent_width = shape.at(2).get<int>();
        } catch (const nlohmann::json::exception& e) {
            throw BackendError(std::string("sd-adapter: malformed manifest: ") + e.what());
        }
        caps_.attention_layers = {
            {"down_32", AttentionKind::self_attn, 32, 32},
            {"down_64", AttentionKind::self_attn, 64, 64},
            {"cross_32", AttentionKind::cross_attn, 32, 32},
        };
    }

    const BackendCapabilities& capabilities() const override { return caps_; }

    Tensor predict_noise(const Tensor&, int, const std::string&, const HookSet*) const override {
        throw BackendError("sd-adapter: inference runtime is not bundled with this build");
    }
    Tensor encode(const Image&) const override {
        throw BackendError("sd-adapter: inference runtime is not bundled with this build");
    }
    Image decode(const Tensor&) const override {
        throw BackendError("sd-adapter: inference runtime is not bundled with this build");
    }
    std::vector<std::string> tokenize(const std::string& text) const override {
        std::vector<std::string> tokens = {"<null>"};
        for (const std::string& w : split_words(text)) tokens.push_back(w);
        return tokens;
    }

private:
    BackendCapabilities caps_;
};

std::vector<std::string> known_backend_names() { return {"toy", "sd-adapter"}; }

BackendSet make_backend_set(const std::string& name) {
    BackendSet set;
    if (name == "toy") {
        set.diffusion = std::make_unique<ToyDiffusionBackend>();
    } else if (name == "sd-adapter") {
        set.diffusion = std::make_unique<SdAdapterBackend>();
    } else {
        std::ostringstream msg;
        msg << "unknown backend '" << name << "'; known backends:";
        for (const std::string& n : known_backend_names()) msg << " " << n;
        throw BackendError(msg.str());
    }
    set.edge = std::make_unique<ToyEdgeBackend>();
    set.caption = std::make_unique<ToyCaptionBackend>();
    set.score = std::make_unique<ToyScoreBackend>();
    set.mask = std::make_unique<ToyMaskBackend>();
    return set;
}

} // namespace s2s
