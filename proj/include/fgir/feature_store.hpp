#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "fgir/tensor.hpp"

namespace fgir {

// Immutable-after-build matrix of fixed-dimension descriptors keyed by image
// id, with bit-exact binary persistence.
class FeatureStore {
public:
    FeatureStore() = default;
    explicit FeatureStore(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t count() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }

    void add(const std::string& id, const std::vector<double>& row);

    bool contains(const std::string& id) const { return index_.count(id) != 0; }
    const double* row(std::size_t i) const { return rows_.data() + i * dim_; }
    const double* row(const std::string& id) const;
    const std::string& id_at(std::size_t i) const { return ids_[i]; }

    bool operator==(const FeatureStore& other) const {
        return dim_ == other.dim_ && ids_ == other.ids_ && rows_ == other.rows_;
    }

    void save(const std::filesystem::path& path) const;
    static FeatureStore load(const std::filesystem::path& path);

private:
    std::size_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<double> rows_;  // count * dim, row i belongs to ids_[i]
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace fgir
