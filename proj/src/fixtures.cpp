#include "s2s/fixtures.hpp"

#include "s2s/core.hpp"

#include <array>
#include <cmath>
#include <sys/stat.h>

namespace s2s {

namespace {

constexpr int kSide = 32;

double checker(int y, int x, int period, double lo, double hi) {
    return ((x / period + y / period) % 2 == 0) ? lo : hi;
}

bool in_ellipse(int y, int x, double cy, double cx, double ry, double rx) {
    double dy = (y - cy) / ry;
    double dx = (x - cx) / rx;
    return dy * dy + dx * dx <= 1.0;
}

Image render(const std::string& name) {
    Image img(name == "ink" ? 3 : 1, kSide, kSide);
    auto set_all = [&](int y, int x, double v) {
        for (int ch = 0; ch < img.c; ++ch) img.at(ch, y, x) = v;
    };

    if (name == "dog") {
        // Textured body + head on a smooth vertical gradient.
        for (int y = 0; y < kSide; ++y)
            for (int x = 0; x < kSide; ++x) {
                double v = 0.82 + 0.12 * y / (kSide - 1);
                if (in_ellipse(y, x, 19, 13, 8, 7)) v = checker(y, x, 2, 0.18, 0.52);
                if (in_ellipse(y, x, 9, 22, 5, 4)) v = checker(y, x, 2, 0.25, 0.6);
                if (in_ellipse(y, x, 4, 20, 2, 1.2)) v = 0.3;  // ear
                if (in_ellipse(y, x, 4, 25, 2, 1.2)) v = 0.3;
                set_all(y, x, v);
            }
    } else if (name == "cat") {
        for (int y = 0; y < kSide; ++y)
            for (int x = 0; x < kSide; ++x) {
                double v = 0.9 - 0.1 * x / (kSide - 1);
                if (in_ellipse(y, x, 18, 20, 9, 6)) v = checker(y, x, 3, 0.2, 0.65);
                if (in_ellipse(y, x, 24, 7, 4, 4)) v = 0.35;  // bowl
                set_all(y, x, v);
            }
    } else if (name == "house") {
        for (int y = 0; y < kSide; ++y)
            for (int x = 0; x < kSide; ++x) {
                double v = 0.88;
                bool wall = y >= 14 && y <= 27 && x >= 8 && x <= 24;
                bool roof = y >= 6 && y < 14 && std::abs(x - 16) <= (y - 5);
                bool door = y >= 20 && y <= 27 && x >= 14 && x <= 18;
                if (roof) v = checker(y, x, 2, 0.3, 0.5);
                if (wall) v = 0.62;
                if (door) v = 0.2;
                set_all(y, x, v);
            }
    } else if (name == "hatch") {
        // Diagonal hatching, denser every third stroke.
        for (int y = 0; y < kSide; ++y)
            for (int x = 0; x < kSide; ++x) {
                int p = (x + y) % 6;
                double v = 0.95;
                if (p == 0) v = 0.1;
                if (p == 3) v = 0.55;
                set_all(y, x, v);
            }
    } else if (name == "ink") {
        // Thick ink blobs with a warm tint, light ground.
        Rng rng(fnv1a(std::string("ink")));
        std::vector<std::array<double, 3>> blobs;
        for (int i = 0; i < 7; ++i)
            blobs.push_back({4.0 + rng.uniform() * 24.0, 4.0 + rng.uniform() * 24.0,
                             1.5 + rng.uniform() * 2.5});
        for (int y = 0; y < kSide; ++y)
            for (int x = 0; x < kSide; ++x) {
                double v = 0.97;
                for (const auto& b : blobs)
                    if (in_ellipse(y, x, b[0], b[1], b[2], b[2])) v = 0.08;
                img.at(0, y, x) = v;
                img.at(1, y, x) = v * 0.85;
                img.at(2, y, x) = v * 0.75;
            }
    } else if (name == "line") {
        // Thin rectilinear line work.
        for (int y = 0; y < kSide; ++y)
            for (int x = 0; x < kSide; ++x) {
                double v = 0.96;
                if (y % 9 == 4 || x % 11 == 5) v = 0.12;
                set_all(y, x, v);
            }
    } else {
        throw DomainError("unknown fixture '" + name + "'");
    }
    return img;
}

} // namespace

const std::vector<Fixture>& fixture_registry() {
    static const std::vector<Fixture> reg = {
        {"dog", "a sketch of a dog", false},
        {"cat", "a cat beside a bowl", false},
        {"house", "a house with a door", false},
        {"hatch", "", true},
        {"ink", "", true},
        {"line", "", true},
    };
    return reg;
}

bool is_known_fixture(const std::string& name) {
    for (const auto& f : fixture_registry())
        if (f.name == name) return true;
    return false;
}

Image fixture_image(const std::string& name) { return render(name); }

Image resolve_image_source(const std::string& source) {
    if (source.rfind("fixture:", 0) == 0) return fixture_image(source.substr(8));
    return load_image(source);
}

bool image_source_exists(const std::string& source) {
    if (source.rfind("fixture:", 0) == 0) return is_known_fixture(source.substr(8));
    struct stat st;
    return ::stat(source.c_str(), &st) == 0;
}

} // namespace s2s
