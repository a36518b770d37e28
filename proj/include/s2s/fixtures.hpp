#ifndef S2S_FIXTURES_HPP
#define S2S_FIXTURES_HPP

#include "s2s/image.hpp"

#include <string>
#include <vector>

namespace s2s {

/// Built-in procedural test images. Content fixtures pair a textured subject
/// with a smooth ground and carry a caption; reference fixtures are stroke
/// patterns (hatching, ink blobs, thin lines) with no caption.
struct Fixture {
    std::string name;
    std::string caption;   // empty for reference fixtures
    bool is_reference = false;
};

const std::vector<Fixture>& fixture_registry();

/// Renders the named fixture; throws DomainError for unknown names.
Image fixture_image(const std::string& name);

bool is_known_fixture(const std::string& name);

/// Resolves "fixture:NAME" to a rendered fixture, anything else via
/// load_image.
Image resolve_image_source(const std::string& source);

/// True when the source names a real file or a known fixture.
bool image_source_exists(const std::string& source);

} // namespace s2s

#endif
