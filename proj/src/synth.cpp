#include "fgir/synth.hpp"

#include <cmath>
#include <cstdio>

#include "fgir/errors.hpp"
#include "fgir/pgm.hpp"
#include "fgir/rng.hpp"

namespace fgir {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

struct Nuisance {
    double cx, cy;     // object center in pixels
    double radius;     // object radius in pixels
    double angle;      // pattern orientation
    double bg;         // background level
    double amp;        // pattern contrast
    double noise_sd;   // additive gaussian noise
};

Nuisance draw_nuisance(Rng& rng, std::size_t size) {
    const double s = static_cast<double>(size);
    Nuisance n;
    n.cx = s * (0.5 + rng.uniform(-0.08, 0.08));
    n.cy = s * (0.5 + rng.uniform(-0.08, 0.08));
    n.radius = s * 0.34 * rng.uniform(0.75, 1.05);
    n.angle = rng.uniform(0.0, kTau);
    n.bg = rng.uniform(0.06, 0.14);
    n.amp = rng.uniform(0.65, 0.85);
    n.noise_sd = rng.uniform(0.03, 0.07);
    return n;
}

// Pattern value in [0,1] at rotated object coordinates (u,v), radius r,
// normalized by the object radius R.
double pattern_value(const std::string& family, double param, double u, double v, double r,
                     double R) {
    if (family == "rings") {
        return 0.5 + 0.5 * std::cos(kTau * param * r / R);
    }
    if (family == "stripes") {
        return 0.5 + 0.5 * std::cos(kTau * param * u / R);
    }
    // blobs: square dot lattice of pitch 2R/k in the rotated frame
    const double pitch = 2.0 * R / param;
    const double sigma = 0.28 * pitch;
    const double du = u - pitch * std::round(u / pitch);
    const double dv = v - pitch * std::round(v / pitch);
    return std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
}

std::vector<std::uint8_t> render_species_image(const std::string& family, double param,
                                               std::size_t size, Rng& rng) {
    const Nuisance n = draw_nuisance(rng, size);
    const double ca = std::cos(n.angle), sa = std::sin(n.angle);
    std::vector<std::uint8_t> bytes(size * size);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double dx = static_cast<double>(x) + 0.5 - n.cx;
            const double dy = static_cast<double>(y) + 0.5 - n.cy;
            const double r = std::hypot(dx, dy);
            double val = n.bg;
            if (r <= n.radius) {
                const double u = ca * dx + sa * dy;
                const double v = -sa * dx + ca * dy;
                val += n.amp * pattern_value(family, param, u, v, r, n.radius);
            }
            val += n.noise_sd * rng.normal();
            val = val < 0.0 ? 0.0 : (val > 1.0 ? 1.0 : val);
            bytes[y * size + x] = static_cast<std::uint8_t>(std::lround(val * 255.0));
        }
    }
    return bytes;
}

std::vector<std::uint8_t> render_distractor(std::size_t size, Rng& rng) {
    std::vector<std::uint8_t> bytes(size * size);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.uniform_index(256));
    return bytes;
}

std::string zero_pad(std::size_t v, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%0*zu", width, v);
    return buf;
}

} // namespace

const std::vector<std::string>& synth_families() {
    static const std::vector<std::string> families = {"rings", "stripes", "blobs"};
    return families;
}

double species_param(const std::string& family, bool auxiliary, std::size_t index) {
    const double offset = auxiliary ? 0.5 : 0.0;
    if (family == "rings") return 3.0 + 0.7 * (static_cast<double>(index) + offset);
    if (family == "stripes") return 3.0 + 0.8 * (static_cast<double>(index) + offset);
    if (family == "blobs") return 4.0 + 2.0 * static_cast<double>(index) + (auxiliary ? 1.0 : 0.0);
    throw DataError("unknown family \"" + family + "\"");
}

DatasetManifest generate_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir) {
    if (spec.db_species_per_family < 1 || spec.aux_species_per_family < 1 ||
        spec.images_per_species < 1)
        throw ConfigError("generate_dataset: species and image counts must be >= 1");
    if (!(spec.query_fraction >= 0.0 && spec.query_fraction < 1.0))
        throw ConfigError("generate_dataset: query_fraction must lie in [0,1)");
    if (spec.image_size < 16) throw ConfigError("generate_dataset: image_size must be >= 16");

    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    if (ec) throw IoError("cannot create output directory: " + (out_dir / "images").string());

    Rng rng(spec.seed);
    DatasetManifest manifest;

    std::size_t n_query = static_cast<std::size_t>(
        std::floor(spec.query_fraction * static_cast<double>(spec.images_per_species) + 0.5));
    if (n_query >= spec.images_per_species) n_query = spec.images_per_species - 1;

    auto emit = [&](const std::string& id, const std::string& family, const std::string& species,
                    Role role, const std::vector<std::uint8_t>& bytes) {
        const std::string rel = "images/" + id + ".pgm";
        write_pgm_bytes(bytes, spec.image_size, spec.image_size, out_dir / rel);
        manifest.records.push_back({id, rel, family, species, role});
    };

    for (const std::string& family : synth_families()) {
        for (std::size_t sp = 0; sp < spec.aux_species_per_family; ++sp) {
            const double param = species_param(family, true, sp);
            const std::string species = family + "_ad_" + zero_pad(sp, 2);
            for (std::size_t i = 0; i < spec.images_per_species; ++i) {
                const std::string id = "ad_" + family + "_s" + zero_pad(sp, 2) + "_" + zero_pad(i, 4);
                emit(id, family, species, Role::auxiliary,
                     render_species_image(family, param, spec.image_size, rng));
            }
        }
        for (std::size_t sp = 0; sp < spec.db_species_per_family; ++sp) {
            const double param = species_param(family, false, sp);
            const std::string species = family + "_db_" + zero_pad(sp, 2);
            for (std::size_t i = 0; i < spec.images_per_species; ++i) {
                const Role role = i < n_query ? Role::query : Role::database;
                const std::string prefix = role == Role::query ? "qy_" : "db_";
                const std::string id = prefix + family + "_s" + zero_pad(sp, 2) + "_" + zero_pad(i, 4);
                emit(id, family, species, role,
                     render_species_image(family, param, spec.image_size, rng));
            }
        }
    }
    for (std::size_t i = 0; i < spec.distractor_count; ++i) {
        const std::string id = "dx_" + zero_pad(i, 5);
        emit(id, "distractor", "distractor", Role::distractor,
             render_distractor(spec.image_size, rng));
    }

    manifest_write(manifest, out_dir / "manifest.tsv");
    return manifest;
}

} // namespace fgir
