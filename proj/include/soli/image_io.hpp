#pragma once

#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "soli/error.hpp"
#include "soli/image.hpp"

namespace soli {

namespace detail {

struct PngByteSink {
    std::vector<std::uint8_t>* out;
};

inline void png_vector_write(png_structp png, png_bytep data, png_size_t len) {
    auto* sink = static_cast<PngByteSink*>(png_get_io_ptr(png));
    sink->out->insert(sink->out->end(), data, data + len);
}

inline void png_vector_flush(png_structp) {}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

} // namespace detail

// Deterministic PNG encode (8-bit RGB, default filtering/compression).
inline std::vector<std::uint8_t> encode_png(const Image& img) {
    std::vector<std::uint8_t> bytes;
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(&img.data[static_cast<std::size_t>(y) *
                                                  img.width * Image::kChannels]);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png encoder allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png encoder allocation failed");
    }
    detail::PngByteSink sink{&bytes};
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png encode failed");
    }
    png_set_write_fn(png, &sink, detail::png_vector_write, detail::png_vector_flush);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return bytes;
}

inline void write_png(const Image& img, const std::filesystem::path& path) {
    auto bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write: " + path.string());
}

inline Image read_png_file(const std::filesystem::path& path) {
    std::FILE* fp = std::fopen(path.string().c_str(), "rb");
    if (!fp) throw IoError("cannot open image: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        std::fclose(fp);
        throw IoError("png decoder allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("png decode failed: " + path.string());
    }
    png_init_io(png, fp);
    png_read_png(png, info,
                 PNG_TRANSFORM_STRIP_16 | PNG_TRANSFORM_STRIP_ALPHA |
                     PNG_TRANSFORM_PACKING | PNG_TRANSFORM_EXPAND |
                     PNG_TRANSFORM_GRAY_TO_RGB,
                 nullptr);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    png_bytepp rows = png_get_rows(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);

    Image img;
    if (rowbytes == static_cast<std::size_t>(w) * Image::kChannels) {
        img = Image(w, h);
        for (int y = 0; y < h; ++y)
            std::copy(rows[y], rows[y] + rowbytes,
                      img.data.begin() + static_cast<std::size_t>(y) * rowbytes);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    if (img.width == 0)
        throw IoError("unsupported png layout (expected 8-bit RGB-convertible): " +
                      path.string());
    return img;
}

inline Image read_jpeg_file(const std::filesystem::path& path) {
    std::FILE* fp = std::fopen(path.string().c_str(), "rb");
    if (!fp) throw IoError("cannot open image: " + path.string());

    jpeg_decompress_struct cinfo;
    detail::JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = detail::jpeg_error_exit;

    Image img;
    std::vector<JSAMPLE> rowbuf;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        std::fclose(fp);
        throw IoError("jpeg decode failed: " + path.string() + ": " + jerr.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);

    img = Image(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
    rowbuf.resize(static_cast<std::size_t>(cinfo.output_width) * 3);
    JSAMPROW rowptr = rowbuf.data();
    while (cinfo.output_scanline < cinfo.output_height) {
        const int y = static_cast<int>(cinfo.output_scanline);
        jpeg_read_scanlines(&cinfo, &rowptr, 1);
        std::copy(rowbuf.begin(), rowbuf.end(),
                  img.data.begin() + static_cast<std::size_t>(y) * cinfo.output_width * 3);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    std::fclose(fp);
    return img;
}

// Dispatch on extension: .png, .jpg, .jpeg (case-insensitive).
inline Image read_image(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (ext == ".png") return read_png_file(path);
    if (ext == ".jpg" || ext == ".jpeg") return read_jpeg_file(path);
    throw IoError("unsupported image format '" + ext + "': " + path.string());
}

} // namespace soli
