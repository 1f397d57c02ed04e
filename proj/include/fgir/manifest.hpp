#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fgir {

// Dataset manifest: one record per image with coarse family, fine species,
// and its role in the benchmark. Distractor records carry "distractor" in
// both label columns.

enum class Role { auxiliary, database, query, distractor };

std::string role_name(Role role);
Role parse_role(const std::string& name);  // throws DataError on unknown names

struct ManifestRecord {
    std::string id;
    std::string path;    // relative to the manifest's directory
    std::string coarse;  // family name
    std::string fine;    // species name, or "distractor"
    Role role = Role::database;
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;

    std::vector<ManifestRecord> with_role(Role role) const;
    std::vector<std::string> coarse_families() const;  // sorted unique non-distractor families

    // Sorted unique fine labels among records matching `role` (and family,
    // when non-empty). The index of a label in this list is its class id.
    std::vector<std::string> species_of(Role role, const std::string& family = "") const;
};

// TSV with the fixed header line "id\tpath\tcoarse\tfine\trole". Round trips
// are lossless; parse errors name the offending line.
void manifest_write(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest manifest_read(const std::filesystem::path& path);

} // namespace fgir
