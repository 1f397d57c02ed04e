#include "fgir/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "fgir/errors.hpp"

namespace fgir {

std::string role_name(Role role) {
    switch (role) {
        case Role::auxiliary: return "auxiliary";
        case Role::database: return "database";
        case Role::query: return "query";
        case Role::distractor: return "distractor";
    }
    return "unknown";
}

Role parse_role(const std::string& name) {
    if (name == "auxiliary") return Role::auxiliary;
    if (name == "database") return Role::database;
    if (name == "query") return Role::query;
    if (name == "distractor") return Role::distractor;
    throw DataError("unknown role \"" + name + "\"");
}

std::vector<ManifestRecord> DatasetManifest::with_role(Role role) const {
    std::vector<ManifestRecord> out;
    for (const auto& r : records)
        if (r.role == role) out.push_back(r);
    return out;
}

std::vector<std::string> DatasetManifest::coarse_families() const {
    std::set<std::string> names;
    for (const auto& r : records)
        if (r.role != Role::distractor) names.insert(r.coarse);
    return {names.begin(), names.end()};
}

std::vector<std::string> DatasetManifest::species_of(Role role, const std::string& family) const {
    std::set<std::string> names;
    for (const auto& r : records)
        if (r.role == role && (family.empty() || r.coarse == family)) names.insert(r.fine);
    return {names.begin(), names.end()};
}

namespace {
constexpr const char* kHeader = "id\tpath\tcoarse\tfine\trole";
}

void manifest_write(const DatasetManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);  // binary keeps line endings fixed
    if (!out) throw IoError("cannot open manifest for writing: " + path.string());
    out << kHeader << "\n";
    for (const auto& r : manifest.records)
        out << r.id << "\t" << r.path << "\t" << r.coarse << "\t" << r.fine << "\t"
            << role_name(r.role) << "\n";
    if (!out) throw IoError("manifest write failed: " + path.string());
}

DatasetManifest manifest_read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest: " + path.string());

    DatasetManifest manifest;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != kHeader)
                throw FormatError(path.string() + ":1: bad header, expected \"" +
                                  std::string(kHeader) + "\"");
            continue;
        }
        if (line.empty()) continue;

        std::vector<std::string> fields;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == '\t') {
                fields.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (fields.size() != 5)
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 5 columns, got " +
                              std::to_string(fields.size()));
        ManifestRecord rec;
        rec.id = fields[0];
        rec.path = fields[1];
        rec.coarse = fields[2];
        rec.fine = fields[3];
        try {
            rec.role = parse_role(fields[4]);
        } catch (const DataError& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (rec.id.empty() || rec.path.empty())
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": empty id or path");
        manifest.records.push_back(std::move(rec));
    }
    return manifest;
}

} // namespace fgir
