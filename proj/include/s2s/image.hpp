#ifndef S2S_IMAGE_HPP
#define S2S_IMAGE_HPP

#include "s2s/core.hpp"

#include <string>

namespace s2s {

/// Planar image, values in [0, 1]. c is 1 (gray) or 3 (rgb).
struct Image {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<double> data;

    Image() = default;
    Image(int c_, int h_, int w_, double fill = 0.0)
        : c(c_), h(h_), w(w_), data(static_cast<size_t>(c_) * h_ * w_, fill) {}

    double& at(int ch, int y, int x) { return data[(static_cast<size_t>(ch) * h + y) * w + x]; }
    double at(int ch, int y, int x) const {
        return data[(static_cast<size_t>(ch) * h + y) * w + x];
    }

    bool empty() const { return data.empty(); }

    /// Luma-weighted channel average; identity for single-channel images.
    Image to_gray() const;
};

/// Decode a .png or .jpg/.jpeg file (extension decides the decoder).
/// Gray stays 1-channel, anything with color becomes 3-channel.
Image load_image(const std::string& path);

/// 8-bit PNG, gray or rgb depending on img.c.
void save_png(const Image& img, const std::string& path);

/// Binary PGM (P5), 0 = background, 255 = foreground.
void save_pgm_mask(const ForegroundMask& mask, const std::string& path);

/// Bilinear resize to new_h x new_w.
Image resize(const Image& img, int new_h, int new_w);

/// Horizontal/vertical concatenation of equally sized cells into a grid.
/// Cells are padded to the max cell size; missing trailing cells stay black.
Image tile_grid(const std::vector<Image>& cells, int cols);

} // namespace s2s

#endif
