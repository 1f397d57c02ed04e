#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fgir/manifest.hpp"

namespace fgir {

// Procedural benchmark generator. Three pattern families (rings, stripes,
// dot-grid blobs) play the role of coarse categories; species within a family
// differ by a small shift of the generating parameter, while pose, scale,
// offset, contrast, and noise vary freely per image. Database and auxiliary
// species use disjoint parameter grids, so retrieval always faces unseen
// species. Distractors are pure noise fields.

// Seed of the benchmark used by regression tests and reported results.
inline constexpr std::uint64_t kDefaultBenchSeed = 20250811;

struct SynthSpec {
    std::size_t db_species_per_family = 6;
    std::size_t aux_species_per_family = 4;
    std::size_t images_per_species = 40;
    double query_fraction = 0.10;  // of each database species, held out of the index
    std::size_t distractor_count = 200;
    std::size_t image_size = 64;
    std::uint64_t seed = kDefaultBenchSeed;
};

const std::vector<std::string>& synth_families();  // {"rings", "stripes", "blobs"}

// The generating parameter of one species. Database species sit on an integer
// grid, auxiliary species on the half-offset grid, so the two sets never
// share a tuple.
double species_param(const std::string& family, bool auxiliary, std::size_t index);

// Renders every image and writes PGM files plus manifest.tsv under out_dir.
// The result is a pure function of (spec, seed): identical inputs reproduce
// bit-identical files.
DatasetManifest generate_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir);

} // namespace fgir
