#include "fgir/pgm.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "fgir/errors.hpp"

namespace fgir {

namespace {

// Reads one whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

} // namespace

Tensor read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path.string());

    const std::string magic = next_token(in);
    if (magic != "P5")
        throw FormatError(path.string() + ": unsupported magic \"" + magic +
                          "\" (binary grayscale P5 required)");
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(next_token(in));
        h = std::stoul(next_token(in));
        maxval = std::stoul(next_token(in));
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": malformed header");
    }
    if (w == 0 || h == 0 || maxval != 255)
        throw FormatError(path.string() + ": unsupported dimensions or maxval");

    std::vector<std::uint8_t> bytes(w * h);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size())
        throw FormatError(path.string() + ": truncated pixel payload");

    Tensor img({h, w});
    for (std::size_t i = 0; i < bytes.size(); ++i) img[i] = static_cast<double>(bytes[i]) / 255.0;
    return img;
}

void write_pgm(const Tensor& image2d, const std::filesystem::path& path) {
    require_rank(image2d, 2, "write_pgm image");
    const std::size_t h = image2d.extent(0), w = image2d.extent(1);
    std::vector<std::uint8_t> bytes(w * h);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        double v = image2d[i];
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    write_pgm_bytes(bytes, w, h, path);
}

void write_pgm_bytes(const std::vector<std::uint8_t>& bytes, std::size_t width,
                     std::size_t height, const std::filesystem::path& path) {
    if (bytes.size() != width * height) throw ContractError("write_pgm_bytes: bad extents");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open image for writing: " + path.string());
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace fgir
