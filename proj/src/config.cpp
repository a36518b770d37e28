#include "s2s/config.hpp"

#include "s2s/core.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace s2s {

bool operator==(const PipelineConfig& a, const PipelineConfig& b) {
    return config_to_toml(a) == config_to_toml(b);
}

void validate_config(const PipelineConfig& c) {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) throw DomainError("config: " + what);
    };
    need(std::isfinite(c.alpha), "alpha must be finite");
    need(c.gamma >= 0.0 && c.gamma <= 1.0, "gamma must lie in [0, 1]");
    need(std::isfinite(c.zeta) && c.zeta > 0.0, "zeta must be positive");
    need(std::isfinite(c.beta_sg), "beta_sg must be finite");
    need(std::isfinite(c.beta_text), "beta_text must be finite");
    need(std::isfinite(c.lambda_sem) && c.lambda_sem >= 0.0, "lambda_sem must be >= 0");
    need(c.delta > 0.0, "delta must be positive");
    need(c.tau > 0.0 && c.tau < 1.0, "tau must lie in (0, 1)");
    need(c.k_clusters >= 2, "k_clusters must be >= 2");
    need(c.total_steps >= 1, "total_steps must be >= 1");
    need(c.skip_steps >= 0 && c.skip_steps < c.total_steps,
         "skip_steps must lie in [0, total_steps)");
    auto check_window = [&](const StepWindow& w, const std::string& name) {
        need(w.lo >= 1 && w.lo <= w.hi && w.hi <= c.total_steps,
             name + " must lie within [1, total_steps]");
    };
    check_window(c.injection_window_32, "injection_window_32");
    check_window(c.injection_window_64, "injection_window_64");
    check_window(c.guidance_window, "guidance_window");
    check_window(c.semantic_window, "semantic_window");
    need(!c.backend.empty(), "backend must be named");
    need(c.mask_mode == "auto" || c.mask_mode == "all" || c.mask_mode == "none" ||
             c.mask_mode == "tophalf",
         "mask_mode must be one of auto|all|none|tophalf");
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

std::string config_to_toml(const PipelineConfig& c) {
    std::ostringstream out;
    out << "alpha = " << fmt_double(c.alpha) << "\n";
    out << "gamma = " << fmt_double(c.gamma) << "\n";
    out << "zeta = " << fmt_double(c.zeta) << "\n";
    out << "beta_sg = " << fmt_double(c.beta_sg) << "\n";
    out << "beta_text = " << fmt_double(c.beta_text) << "\n";
    out << "lambda_sem = " << fmt_double(c.lambda_sem) << "\n";
    out << "delta = " << fmt_double(c.delta) << "\n";
    out << "tau = " << fmt_double(c.tau) << "\n";
    out << "k_clusters = " << c.k_clusters << "\n";
    out << "total_steps = " << c.total_steps << "\n";
    out << "skip_steps = " << c.skip_steps << "\n";
    out << "injection_window_32 = [" << c.injection_window_32.lo << ", "
        << c.injection_window_32.hi << "]\n";
    out << "injection_window_64 = [" << c.injection_window_64.lo << ", "
        << c.injection_window_64.hi << "]\n";
    out << "guidance_window = [" << c.guidance_window.lo << ", " << c.guidance_window.hi << "]\n";
    out << "semantic_window = [" << c.semantic_window.lo << ", " << c.semantic_window.hi << "]\n";
    out << "seed = " << c.seed << "\n";
    out << "backend = \"" << c.backend << "\"\n";
    out << "mask_mode = \"" << c.mask_mode << "\"\n";
    return out.str();
}

namespace {

std::string strip(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_number(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        double d = std::stod(v, &used);
        if (strip(v.substr(used)).empty()) return d;
    } catch (const std::exception&) {
    }
    throw DomainError("config: bad numeric value for '" + key + "': " + v);
}

StepWindow parse_window(const std::string& v, const std::string& key) {
    std::string s = strip(v);
    if (s.size() < 2 || s.front() != '[' || s.back() != ']')
        throw DomainError("config: '" + key + "' expects [lo, hi]");
    s = s.substr(1, s.size() - 2);
    size_t comma = s.find(',');
    if (comma == std::string::npos)
        throw DomainError("config: '" + key + "' expects two values");
    StepWindow w;
    w.lo = static_cast<int>(parse_number(strip(s.substr(0, comma)), key));
    w.hi = static_cast<int>(parse_number(strip(s.substr(comma + 1)), key));
    return w;
}

std::string parse_string(const std::string& v, const std::string& key) {
    std::string s = strip(v);
    if (s.size() < 2 || s.front() != '"' || s.back() != '"')
        throw DomainError("config: '" + key + "' expects a quoted string");
    return s.substr(1, s.size() - 2);
}

} // namespace

PipelineConfig config_from_toml(const std::string& text, const PipelineConfig& base) {
    PipelineConfig c = base;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) {
            // keep # inside quoted strings
            size_t q1 = line.find('"');
            if (q1 == std::string::npos || hash < q1) line = line.substr(0, hash);
        }
        std::string s = strip(line);
        if (s.empty()) continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw DomainError("config: line " + std::to_string(lineno) + " is not 'key = value'");
        std::string key = strip(s.substr(0, eq));
        std::string val = strip(s.substr(eq + 1));

        if (key == "alpha") c.alpha = parse_number(val, key);
        else if (key == "gamma") c.gamma = parse_number(val, key);
        else if (key == "zeta") c.zeta = parse_number(val, key);
        else if (key == "beta_sg") c.beta_sg = parse_number(val, key);
        else if (key == "beta_text") c.beta_text = parse_number(val, key);
        else if (key == "lambda_sem") c.lambda_sem = parse_number(val, key);
        else if (key == "delta") c.delta = parse_number(val, key);
        else if (key == "tau") c.tau = parse_number(val, key);
        else if (key == "k_clusters") c.k_clusters = static_cast<int>(parse_number(val, key));
        else if (key == "total_steps") c.total_steps = static_cast<int>(parse_number(val, key));
        else if (key == "skip_steps") c.skip_steps = static_cast<int>(parse_number(val, key));
        else if (key == "injection_window_32") c.injection_window_32 = parse_window(val, key);
        else if (key == "injection_window_64") c.injection_window_64 = parse_window(val, key);
        else if (key == "guidance_window") c.guidance_window = parse_window(val, key);
        else if (key == "semantic_window") c.semantic_window = parse_window(val, key);
        else if (key == "seed") c.seed = static_cast<uint64_t>(parse_number(val, key));
        else if (key == "backend") c.backend = parse_string(val, key);
        else if (key == "mask_mode") c.mask_mode = parse_string(val, key);
        else throw DomainError("config: unknown key '" + key + "'");
    }
    return c;
}

PipelineConfig load_config_file(const std::string& path, const PipelineConfig& base) {
    std::ifstream in(path);
    if (!in) throw DomainError("config: cannot read " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return config_from_toml(text.str(), base);
}

std::string config_hash(const PipelineConfig& c) {
    return to_hex(fnv1a(config_to_toml(c)));
}

StepWindow window_for_band(const PipelineConfig& c, int band) {
    if (band == 32) return c.injection_window_32;
    if (band == 64) return c.injection_window_64;
    throw DomainError("no injection window for band " + std::to_string(band));
}

const std::vector<std::string>& sweepable_fields() {
    static const std::vector<std::string> fields = {
        "alpha", "gamma", "zeta", "beta_sg", "beta_text", "lambda_sem", "tau", "seed",
    };
    return fields;
}

void set_field(PipelineConfig& c, const std::string& name, double value) {
    if (name == "alpha") c.alpha = value;
    else if (name == "gamma") c.gamma = value;
    else if (name == "zeta") c.zeta = value;
    else if (name == "beta_sg") c.beta_sg = value;
    else if (name == "beta_text") c.beta_text = value;
    else if (name == "lambda_sem") c.lambda_sem = value;
    else if (name == "tau") c.tau = value;
    else if (name == "seed") c.seed = static_cast<uint64_t>(value);
    else throw DomainError("'" + name + "' is not a sweepable config field");
}

void apply_preset(PipelineConfig& c, const std::string& name) {
    if (name == "table") {
        c.total_steps = 100;
        c.skip_steps = 30;
        c.injection_window_32 = {10, 70};
        c.injection_window_64 = {10, 90};
        c.guidance_window = {20, 100};
        c.semantic_window = {20, 100};
    } else if (name == "text50") {
        c.total_steps = 50;
        c.skip_steps = 15;
        c.injection_window_32 = {5, 35};
        c.injection_window_64 = {5, 45};
        c.guidance_window = {10, 50};
        c.semantic_window = {10, 50};
    } else {
        throw DomainError("unknown preset '" + name + "' (known: table, text50)");
    }
}

} // namespace s2s
