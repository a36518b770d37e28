#include "s2s/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>

#include <jpeglib.h>
#include <png.h>

namespace s2s {

namespace {

uint8_t to_byte(double v) {
    double x = std::clamp(v, 0.0, 1.0) * 255.0 + 0.5;
    return static_cast<uint8_t>(x);
}

std::string lower_ext(const std::string& path) {
    size_t dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return ext;
}

Image load_png_file(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw BackendError("cannot open image file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw BackendError("libpng initialization failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw BackendError("failed to decode png: " + path);
    }

    png_init_io(png, fp);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int channels = png_get_channels(png, info);
    std::vector<uint8_t> row(static_cast<size_t>(w) * channels);
    Image img(channels >= 3 ? 3 : 1, static_cast<int>(h), static_cast<int>(w));
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            for (int ch = 0; ch < img.c; ++ch)
                img.at(ch, static_cast<int>(y), static_cast<int>(x)) =
                    row[x * channels + ch] / 255.0;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    JpegErrorMgr* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(err->jump, 1);
}

Image load_jpeg_file(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw BackendError("cannot open image file: " + path);

    jpeg_decompress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        std::fclose(fp);
        throw BackendError("failed to decode jpeg: " + path);
    }

    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp);
    jpeg_read_header(&cinfo, TRUE);
    jpeg_start_decompress(&cinfo);

    int channels = cinfo.output_components;
    Image img(channels >= 3 ? 3 : 1, static_cast<int>(cinfo.output_height),
              static_cast<int>(cinfo.output_width));
    std::vector<uint8_t> row(static_cast<size_t>(cinfo.output_width) * channels);
    uint8_t* rowp = row.data();
    while (cinfo.output_scanline < cinfo.output_height) {
        int y = static_cast<int>(cinfo.output_scanline);
        jpeg_read_scanlines(&cinfo, &rowp, 1);
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch)
                img.at(ch, y, x) = row[static_cast<size_t>(x) * channels + ch] / 255.0;
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    std::fclose(fp);
    return img;
}

} // namespace

Image Image::to_gray() const {
    if (c == 1) return *this;
    Image out(1, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.at(0, y, x) = 0.299 * at(0, y, x) + 0.587 * at(1, y, x) + 0.114 * at(2, y, x);
    return out;
}

Image load_image(const std::string& path) {
    std::string ext = lower_ext(path);
    if (ext == "png") return load_png_file(path);
    if (ext == "jpg" || ext == "jpeg") return load_jpeg_file(path);
    throw BackendError("unsupported image extension '." + ext + "' for " + path);
}

void save_png(const Image& img, const std::string& path) {
    if (img.empty()) throw ShapeError("save_png: empty image");
    if (img.c != 1 && img.c != 3)
        throw ShapeError("save_png: expected 1 or 3 channels, got " + std::to_string(img.c));

    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw BackendError("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw BackendError("libpng initialization failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw BackendError("failed to encode png: " + path);
    }

    png_init_io(png, fp);
    png_set_IHDR(png, info, img.w, img.h, 8,
                 img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<uint8_t> row(static_cast<size_t>(img.w) * img.c);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch)
                row[static_cast<size_t>(x) * img.c + ch] = to_byte(img.at(ch, y, x));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

void save_pgm_mask(const ForegroundMask& mask, const std::string& path) {
    if (mask.resolution <= 0) throw ShapeError("save_pgm_mask: empty mask");
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw BackendError("cannot open for writing: " + path);
    std::fprintf(fp, "P5\n%d %d\n255\n", mask.resolution, mask.resolution);
    for (uint8_t v : mask.grid) {
        uint8_t b = v ? 255 : 0;
        std::fwrite(&b, 1, 1, fp);
    }
    std::fclose(fp);
}

Image resize(const Image& img, int new_h, int new_w) {
    if (img.empty()) throw ShapeError("resize: empty image");
    if (new_h <= 0 || new_w <= 0) throw DomainError("resize: target size must be positive");
    if (new_h == img.h && new_w == img.w) return img;

    Image out(img.c, new_h, new_w);
    for (int y = 0; y < new_h; ++y) {
        double sy = (new_h == 1) ? 0.0 : static_cast<double>(y) * (img.h - 1) / (new_h - 1);
        int y0 = static_cast<int>(sy);
        int y1 = std::min(y0 + 1, img.h - 1);
        double fy = sy - y0;
        for (int x = 0; x < new_w; ++x) {
            double sx = (new_w == 1) ? 0.0 : static_cast<double>(x) * (img.w - 1) / (new_w - 1);
            int x0 = static_cast<int>(sx);
            int x1 = std::min(x0 + 1, img.w - 1);
            double fx = sx - x0;
            for (int ch = 0; ch < img.c; ++ch) {
                double top = img.at(ch, y0, x0) * (1 - fx) + img.at(ch, y0, x1) * fx;
                double bot = img.at(ch, y1, x0) * (1 - fx) + img.at(ch, y1, x1) * fx;
                out.at(ch, y, x) = top * (1 - fy) + bot * fy;
            }
        }
    }
    return out;
}

Image tile_grid(const std::vector<Image>& cells, int cols) {
    if (cells.empty()) throw ShapeError("tile_grid: no cells");
    if (cols <= 0) throw DomainError("tile_grid: cols must be positive");

    int cell_h = 0, cell_w = 0, channels = 1;
    for (const Image& c : cells) {
        cell_h = std::max(cell_h, c.h);
        cell_w = std::max(cell_w, c.w);
        channels = std::max(channels, c.c);
    }
    int rows = (static_cast<int>(cells.size()) + cols - 1) / cols;
    const int pad = 2;
    Image out(channels, rows * (cell_h + pad) - pad, cols * (cell_w + pad) - pad);
    for (size_t i = 0; i < cells.size(); ++i) {
        int r = static_cast<int>(i) / cols;
        int col = static_cast<int>(i) % cols;
        const Image& cell = cells[i];
        for (int y = 0; y < cell.h; ++y)
            for (int x = 0; x < cell.w; ++x)
                for (int ch = 0; ch < channels; ++ch) {
                    double v = cell.at(std::min(ch, cell.c - 1), y, x);
                    out.at(ch, r * (cell_h + pad) + y, col * (cell_w + pad) + x) = v;
                }
    }
    return out;
}

} // namespace s2s
