#include "fgir/feature_store.hpp"

#include "fgir/binio.hpp"
#include "fgir/errors.hpp"

namespace fgir {

namespace {
constexpr char kStoreMagic[4] = {'F', 'S', 'T', 'R'};
constexpr std::uint32_t kStoreVersion = 1;
} // namespace

void FeatureStore::add(const std::string& id, const std::vector<double>& row) {
    if (row.size() != dim_)
        throw ContractError("feature store: row length " + std::to_string(row.size()) +
                            " does not match dim " + std::to_string(dim_));
    if (index_.count(id)) throw DataError("feature store: duplicate id " + id);
    index_.emplace(id, ids_.size());
    ids_.push_back(id);
    rows_.insert(rows_.end(), row.begin(), row.end());
}

const double* FeatureStore::row(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ContractError("feature store: unknown id " + id);
    return row(it->second);
}

void FeatureStore::save(const std::filesystem::path& path) const {
    BinWriter w(path);
    w.magic(kStoreMagic);
    w.u32(kStoreVersion);
    w.u32(static_cast<std::uint32_t>(dim_));
    w.u64(static_cast<std::uint64_t>(count()));
    for (std::size_t i = 0; i < count(); ++i) {
        w.str(ids_[i]);
        w.f64_array(row(i), dim_);
    }
    w.close();
}

FeatureStore FeatureStore::load(const std::filesystem::path& path) {
    BinReader r(path);
    r.expect_magic(kStoreMagic);
    const std::uint32_t version = r.u32();
    if (version != kStoreVersion)
        throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
    FeatureStore store(r.u32());
    const std::uint64_t count = r.u64();
    std::vector<double> row(store.dim_);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string id = r.str();
        r.f64_array(row.data(), row.size());
        store.add(id, row);
    }
    r.expect_eof();
    return store;
}

} // namespace fgir
