#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "s2s/config.hpp"
#include "s2s/core.hpp"

#include <cstdio>
#include <fstream>
#include <string>

using namespace s2s;

TEST_CASE("defaults validate and carry the documented values") {
    PipelineConfig c;
    validate_config(c);
    CHECK(c.alpha == 0.5);
    CHECK(c.gamma == 0.25);
    CHECK(c.zeta == 1.67);
    CHECK(c.beta_sg == 5.0);
    CHECK(c.beta_text == 0.1);
    CHECK(c.lambda_sem == 0.1);
    CHECK(c.delta == 1e-5);
    CHECK(c.tau == 0.35);
    CHECK(c.k_clusters == 5);
    CHECK(c.total_steps == 100);
    CHECK(c.skip_steps == 30);
    CHECK(c.injection_window_32 == StepWindow{10, 70});
    CHECK(c.injection_window_64 == StepWindow{10, 90});
    CHECK(c.guidance_window == StepWindow{20, 100});
    CHECK(c.seed == 42);
    CHECK(c.backend == "toy");
    CHECK(c.mask_mode == "auto");
}

TEST_CASE("validation rejects each out-of-range field") {
    auto broken = [](auto&& mutate) {
        PipelineConfig c;
        mutate(c);
        return c;
    };
    CHECK_THROWS_AS(validate_config(broken([](auto& c) { c.gamma = 1.5; })), DomainError);
    CHECK_THROWS_AS(validate_config(broken([](auto& c) { c.gamma = -0.1; })), DomainError);
    CHECK_THROWS_AS(validate_config(broken([](auto& c) { c.zeta = 0.0; })), DomainError);
    CHECK_THROWS_AS(validate_config(broken([](auto& c) { c.tau = 1.0; })), DomainError);
    CHECK_THROWS_AS(validate_config(broken([](auto& c) { c.tau = 0.0; })), DomainError);
    CHECK_THROWS_AS(validate_config(broken([](auto& c) { c.delta = 0.0; })), DomainError);
    CHECK_THROWS_AS(validate_config(broken([](auto& c) { c.k_clusters = 1; })), DomainError);
    CHECK_THROWS_AS(validate_config(broken([](auto& c) { c.total_steps = 0; })), DomainError);
    CHECK_THROWS_AS(validate_config(broken([](auto& c) { c.skip_steps = 100; })), DomainError);
    CHECK_THROWS_AS(validate_config(broken([](auto& c) { c.skip_steps = -1; })), DomainError);
    CHECK_THROWS_AS(validate_config(broken([](auto& c) { c.injection_window_32 = {0, 70}; })),
                    DomainError);
    CHECK_THROWS_AS(validate_config(broken([](auto& c) { c.injection_window_32 = {50, 10}; })),
                    DomainError);
    CHECK_THROWS_AS(validate_config(broken([](auto& c) { c.guidance_window = {20, 101}; })),
                    DomainError);
    CHECK_THROWS_AS(validate_config(broken([](auto& c) { c.backend = ""; })), DomainError);
    CHECK_THROWS_AS(validate_config(broken([](auto& c) { c.mask_mode = "sideways"; })),
                    DomainError);

    // Violation messages name the offending field.
    try {
        validate_config(broken([](auto& c) { c.tau = 2.0; }));
        FAIL("expected a throw");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("tau") != std::string::npos);
    }
}

TEST_CASE("toml round trip is lossless") {
    PipelineConfig c;
    c.alpha = 0.125;
    c.gamma = 0.75;
    c.zeta = 2.5;
    c.beta_sg = 7.25;
    c.seed = 987654321;
    c.backend = "toy";
    c.mask_mode = "tophalf";
    c.injection_window_32 = {5, 60};

    std::string toml = config_to_toml(c);
    PipelineConfig back = config_from_toml(toml, PipelineConfig{});
    CHECK(back == c);
    CHECK(config_to_toml(back) == toml);
}

TEST_CASE("toml parser handles comments, layering, and rejects unknown keys") {
    PipelineConfig base;
    PipelineConfig c = config_from_toml(
        "# tuning\n"
        "alpha = 0.9  # inline comment\n"
        "\n"
        "injection_window_32 = [12, 40]\n"
        "mask_mode = \"none\"\n",
        base);
    CHECK(c.alpha == 0.9);
    CHECK(c.injection_window_32 == StepWindow{12, 40});
    CHECK(c.mask_mode == "none");
    // Untouched keys keep the base values.
    CHECK(c.gamma == base.gamma);
    CHECK(c.total_steps == base.total_steps);

    CHECK_THROWS_AS(config_from_toml("omega = 3\n", base), DomainError);
    CHECK_THROWS_AS(config_from_toml("alpha 0.5\n", base), DomainError);
    CHECK_THROWS_AS(config_from_toml("alpha = abc\n", base), DomainError);
    CHECK_THROWS_AS(config_from_toml("alpha = 0.5 extra\n", base), DomainError);
    CHECK_THROWS_AS(config_from_toml("injection_window_32 = [1]\n", base), DomainError);
    CHECK_THROWS_AS(config_from_toml("injection_window_32 = 7\n", base), DomainError);
    CHECK_THROWS_AS(config_from_toml("backend = toy\n", base), DomainError);
}

TEST_CASE("config file loading") {
    std::string path = "/tmp/s2s_config_test.toml";
    {
        std::ofstream out(path);
        out << "gamma = 0.1\nseed = 7\n";
    }
    PipelineConfig c = load_config_file(path, PipelineConfig{});
    CHECK(c.gamma == 0.1);
    CHECK(c.seed == 7);
    std::remove(path.c_str());

    CHECK_THROWS_AS(load_config_file("/tmp/s2s_no_such_config.toml", PipelineConfig{}),
                    DomainError);
}

TEST_CASE("config hash is stable and field-sensitive") {
    PipelineConfig a, b;
    CHECK(config_hash(a) == config_hash(b));
    b.gamma = 0.26;
    CHECK(config_hash(a) != config_hash(b));
    // The hash is the FNV-1a of the canonical serialization.
    CHECK(config_hash(a) == to_hex(fnv1a(config_to_toml(a))));
}

TEST_CASE("window_for_band maps bands to windows") {
    PipelineConfig c;
    CHECK(window_for_band(c, 32) == c.injection_window_32);
    CHECK(window_for_band(c, 64) == c.injection_window_64);
    CHECK_THROWS_AS(window_for_band(c, 16), DomainError);

    CHECK(c.injection_window_32.contains(10));
    CHECK(c.injection_window_32.contains(70));
    CHECK_FALSE(c.injection_window_32.contains(9));
    CHECK_FALSE(c.injection_window_32.contains(71));
}

TEST_CASE("sweepable fields are settable and unknown names rejected") {
    PipelineConfig c;
    for (const std::string& name : sweepable_fields()) {
        set_field(c, name, 0.5);  // must not throw
    }
    CHECK(c.alpha == 0.5);
    CHECK(c.tau == 0.5);

    set_field(c, "seed", 99.0);
    CHECK(c.seed == 99);
    CHECK_THROWS_AS(set_field(c, "total_steps", 10.0), DomainError);
    CHECK_THROWS_AS(set_field(c, "nonsense", 1.0), DomainError);
}

TEST_CASE("presets configure the step plan") {
    PipelineConfig c;
    c.alpha = 0.9;  // presets only touch the step plan
    apply_preset(c, "text50");
    CHECK(c.total_steps == 50);
    CHECK(c.skip_steps == 15);
    CHECK(c.injection_window_32 == StepWindow{5, 35});
    CHECK(c.injection_window_64 == StepWindow{5, 45});
    CHECK(c.guidance_window == StepWindow{10, 50});
    CHECK(c.alpha == 0.9);
    validate_config(c);

    apply_preset(c, "table");
    CHECK(c.total_steps == 100);
    CHECK(c.skip_steps == 30);
    CHECK(c.injection_window_32 == StepWindow{10, 70});
    validate_config(c);

    CHECK_THROWS_AS(apply_preset(c, "imaginary"), DomainError);
}
