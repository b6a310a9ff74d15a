#pragma once

// PNG and JPEG codecs. Users of this header link libpng and libjpeg.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <csetjmp>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "polysearch/dataset.hpp"
#include "polysearch/image.hpp"

namespace polysearch {

class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode)
{
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) {
        throw std::runtime_error("cannot open '" + path.string() + "'");
    }
    return f;
}

inline Image read_png(const std::filesystem::path& path)
{
    auto f = open_file(path, "rb");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw DecodeError("'" + path.string() + "' is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("libpng initialisation failed");
    }
    Image img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeError("corrupt PNG '" + path.string() + "'");
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) {
        png_set_strip_16(png);
    }
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_tRNS_to_alpha(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const auto w = png_get_image_width(png, info);
    const auto h = png_get_image_height(png, info);
    if (png_get_rowbytes(png, info) != w * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeError("unsupported PNG layout in '" + path.string() + "'");
    }
    img = Image(w, h);
    rows.resize(h);
    for (std::size_t y = 0; y < h; ++y) {
        rows[y] = img.pixels().data() + y * w * 3;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
};

inline void jpeg_error_exit(j_common_ptr cinfo)
{
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    std::longjmp(err->jump, 1);
}

inline Image read_jpeg(const std::filesystem::path& path)
{
    auto f = open_file(path, "rb");
    jpeg_decompress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    Image img;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw DecodeError("corrupt JPEG '" + path.string() + "'");
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB; // grayscale sources are expanded to RGB
    jpeg_start_decompress(&cinfo);
    img = Image(cinfo.output_width, cinfo.output_height);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.pixels().data() + static_cast<std::size_t>(cinfo.output_scanline) * cinfo.output_width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

} // namespace detail

/// Decodes a PNG or JPEG (by extension) to 8-bit RGB.
inline Image read_image(const std::filesystem::path& path)
{
    auto ext = path.extension().string();
    for (auto& ch : ext) {
        ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    if (ext == ".png") {
        return detail::read_png(path);
    }
    if (ext == ".jpg" || ext == ".jpeg") {
        return detail::read_jpeg(path);
    }
    throw DecodeError("unsupported image extension '" + ext + "'");
}

inline void write_png(const std::filesystem::path& path, const Image& img)
{
    if (img.empty()) {
        throw std::invalid_argument("write_png: zero-area image");
    }
    auto f = detail::open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed writing '" + path.string() + "'");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < img.height(); ++y) {
        png_write_row(png, const_cast<png_bytep>(img.pixels().data() + y * img.width() * 3));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Grayscale (channel 0 only) 8-bit PNG, used for test fixtures.
inline void write_gray_png(const std::filesystem::path& path, const Image& img)
{
    auto f = detail::open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed writing '" + path.string() + "'");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(img.width());
    for (std::size_t y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < img.width(); ++x) {
            row[x] = img.at(x, y, 0);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct LoadSummary {
    std::size_t loaded = 0;
    std::size_t skipped = 0;
    std::vector<std::string> skipped_files;
};

/// Loads root/<class>/*.{png,jpg,jpeg}. Classes are the sorted subdirectory
/// names; files are visited in sorted order. Every image is resized to
/// `side` x `side` (nearest neighbour). Undecodable files are skipped and
/// reported in `summary`.
inline LabeledImageDataset load_class_folders(const std::filesystem::path& root, std::size_t side = 64,
                                              LoadSummary* summary = nullptr)
{
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) {
        throw std::runtime_error("'" + root.string() + "' is not a directory");
    }
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) {
            class_dirs.push_back(e.path());
        }
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.size() < 2) {
        throw std::runtime_error("'" + root.string() + "' needs at least two class subdirectories");
    }
    LabeledImageDataset ds;
    LoadSummary local;
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        ds.class_names.push_back(class_dirs[c].filename().string());
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(class_dirs[c])) {
            if (e.is_regular_file()) {
                files.push_back(e.path());
            }
        }
        std::sort(files.begin(), files.end());
        std::size_t loaded_here = 0;
        for (const auto& file : files) {
            try {
                ds.images.push_back(resize_nearest(read_image(file), side, side));
                ds.labels.push_back(c);
                ++loaded_here;
            } catch (const DecodeError&) {
                ++local.skipped;
                local.skipped_files.push_back(file.string());
            }
        }
        if (loaded_here == 0) {
            throw std::runtime_error("class directory '" + class_dirs[c].string() + "' has no decodable images");
        }
        local.loaded += loaded_here;
    }
    if (summary) {
        *summary = std::move(local);
    }
    return ds;
}

/// Writes root/<class>/<class>_<nnnnn>.png; the inverse of load_class_folders.
inline void save_class_folders(const std::filesystem::path& root, const LabeledImageDataset& ds)
{
    namespace fs = std::filesystem;
    std::vector<std::size_t> next(ds.num_classes(), 0);
    for (const auto& name : ds.class_names) {
        fs::create_directories(root / name);
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& name = ds.class_names[ds.labels[i]];
        char file[32];
        std::snprintf(file, sizeof file, "_%05zu.png", next[ds.labels[i]]++);
        write_png(root / name / (name + file), ds.images[i]);
    }
}

} // namespace polysearch
