#include "fgir/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fgir/errors.hpp"
#include "fgir/pgm.hpp"
#include "fgir/region.hpp"

namespace fgir {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

Tensor resize_square(const Tensor& image2d, std::size_t size) {
    if (image2d.extent(0) == size && image2d.extent(1) == size) return image2d;
    return resize_bilinear(image2d, size, size);
}

struct RegionExtraction {
    ConfidenceMap map;   // image-sized, normalized; zeros when degenerate
    BinaryMask mask;
    BoundingBox box;     // in image coordinates
    Tensor crop;         // [rh, rw]
    bool fallback = false;
};

// Resizes the selected confidence map to the image, normalizes, thresholds,
// and crops the dominant component's bounding box. Degenerate maps and empty
// masks fall back to the full image so the pipeline never aborts.
RegionExtraction extract_region(const Tensor& image2d, const Tensor& selected_map,
                                double threshold, double min_frac) {
    const std::size_t h = image2d.extent(0), w = image2d.extent(1);
    RegionExtraction out;
    const std::vector<double> resized = resize_bilinear(
        selected_map.values(), selected_map.extent(1), selected_map.extent(0), w, h);

    out.box = {0, 0, h - 1, w - 1};
    out.mask.width = w;
    out.mask.height = h;
    out.mask.bits.assign(w * h, 0);
    try {
        out.map = normalize_map(resized, w, h);
        out.mask = binarize(out.map, threshold);
        const auto regions = label_components(out.mask);
        const PixelRegion dominant = dominant_region(regions, w, h, min_frac);
        out.box = min_enclosing_rect(dominant, w);
    } catch (const DataError&) {
        // DegenerateMapError or NoDominantRegionError: keep the full image.
        out.fallback = true;
        if (out.map.values.empty()) {
            out.map.width = w;
            out.map.height = h;
            out.map.values.assign(w * h, 0.0);
        }
    }

    const Tensor framed({1, h, w}, image2d.values());
    Tensor crop3 = crop_region(framed, out.box, w, h);
    out.crop = Tensor({crop3.extent(1), crop3.extent(2)}, crop3.values());
    return out;
}

} // namespace

QueryFeatures extract_features(const EngineIndex& index, const Tensor& image, bool fine_parts) {
    require_rank(image, 2, "extract_features image");
    QueryFeatures out;

    const Tensor coarse_input = resize_square(image, index.coarse_model.config.input_size);
    ConvFeature cf = extract_conv_feature(index.coarse_model, coarse_input);
    out.coarse = l2_normalize(pca_transform(index.pca_coarse, cf.feature));
    out.conv_maps = std::move(cf.maps);
    out.category = static_cast<int>(svm_predict(index.classifier, out.coarse).first);

    if (!fine_parts) return out;

    const CnNetsModel& fine_model = index.category_models.at(static_cast<std::size_t>(out.category));
    const std::size_t fine_in = fine_model.config.input_size;

    const auto [map_idx, selected] = select_confidence_map(out.conv_maps);
    (void)map_idx;
    RegionExtraction region =
        extract_region(image, selected, index.cfg.threshold, index.cfg.min_region_frac);
    out.region_fallback = region.fallback;

    const Tensor whole = resize_square(image, fine_in);
    const Tensor crop = resize_square(region.crop, fine_in);

    const std::vector<double> f_img = l2_normalize(pca_transform(
        index.pca_img.at(static_cast<std::size_t>(out.category)), extract_cn_feature(fine_model, whole)));
    const std::vector<double> f_reg = l2_normalize(pca_transform(
        index.pca_reg.at(static_cast<std::size_t>(out.category)), extract_cn_feature(fine_model, crop)));
    out.fine = concat(f_img, f_reg);
    return out;
}

EngineIndex build_index(const DatasetManifest& manifest, const std::filesystem::path& data_dir,
                        CnNetsModel coarse_model, std::vector<CnNetsModel> category_models,
                        std::vector<std::string> categories, LinearClassifier classifier,
                        PcaModel pca_coarse, std::vector<PcaModel> pca_img,
                        std::vector<PcaModel> pca_reg, const RetrievalConfig& cfg) {
    if (categories.empty() || category_models.size() != categories.size() ||
        pca_img.size() != categories.size() || pca_reg.size() != categories.size())
        throw ConfigError("build_index: one model and PCA pair per category required");
    const std::size_t part_dim = pca_img[0].out_dim;
    for (std::size_t c = 0; c < categories.size(); ++c)
        if (pca_img[c].out_dim != part_dim || pca_reg[c].out_dim != part_dim)
            throw ConfigError("build_index: all category PCA models must share one output dim");

    EngineIndex index;
    index.cfg = cfg;
    index.categories = std::move(categories);
    index.classifier = std::move(classifier);
    index.pca_coarse = std::move(pca_coarse);
    index.pca_img = std::move(pca_img);
    index.pca_reg = std::move(pca_reg);
    index.coarse_model = std::move(coarse_model);
    index.category_models = std::move(category_models);
    index.coarse = FeatureStore(index.pca_coarse.out_dim);
    index.fine = FeatureStore(2 * part_dim);

    std::vector<const ManifestRecord*> records;
    for (const auto& rec : manifest.records)
        if (rec.role == Role::database || rec.role == Role::distractor) records.push_back(&rec);
    std::sort(records.begin(), records.end(),
              [](const ManifestRecord* a, const ManifestRecord* b) { return a->id < b->id; });

    for (const ManifestRecord* rec : records) {
        const Tensor image = read_pgm(data_dir / rec->path);
        QueryFeatures feats = extract_features(index, image, true);
        index.coarse.add(rec->id, feats.coarse);
        index.fine.add(rec->id, feats.fine);
        index.routing.emplace(rec->id, feats.category);
        if (feats.region_fallback) ++index.fallback_regions;
    }
    return index;
}

CoarseResult coarse_query(const EngineIndex& index, const std::vector<double>& q_coarse,
                          std::size_t k) {
    if (q_coarse.size() != index.coarse.dim())
        throw ContractError("coarse_query: query dim " + std::to_string(q_coarse.size()) +
                            " does not match store dim " + std::to_string(index.coarse.dim()));
    CoarseResult out;
    out.category = static_cast<int>(svm_predict(index.classifier, q_coarse).first);

    const std::size_t n = index.coarse.count();
    out.ranked.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = index.coarse.row(i);
        double sq = 0.0;
        for (std::size_t j = 0; j < q_coarse.size(); ++j) {
            const double d = q_coarse[j] - row[j];
            sq += d * d;
        }
        out.ranked.push_back({index.coarse.id_at(i), std::sqrt(sq)});
    }
    std::sort(out.ranked.begin(), out.ranked.end(), [](const RankedEntry& a, const RankedEntry& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
    });
    if (out.ranked.size() > k) out.ranked.resize(k);
    return out;
}

namespace {

RankedList rerank_block(const EngineIndex& index, const RankedList& list, std::size_t k,
                        const std::vector<double>& descriptor) {
    if (descriptor.size() != index.fine.dim())
        throw ContractError("fine rerank: query dim " + std::to_string(descriptor.size()) +
                            " does not match fine store dim " + std::to_string(index.fine.dim()));
    const std::size_t block = std::min(k, list.size());
    RankedList out;
    out.reserve(list.size());
    for (std::size_t i = 0; i < block; ++i) {
        const double* row = index.fine.row(list[i].id);  // throws on unknown id
        double sq = 0.0;
        for (std::size_t j = 0; j < descriptor.size(); ++j) {
            const double d = descriptor[j] - row[j];
            sq += d * d;
        }
        out.push_back({list[i].id, std::sqrt(sq)});
    }
    std::sort(out.begin(), out.end(), [](const RankedEntry& a, const RankedEntry& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
    });
    for (std::size_t i = block; i < list.size(); ++i) out.push_back(list[i]);
    return out;
}

} // namespace

RankedList fine_rerank(const EngineIndex& index, const RankedList& coarse_ranked, std::size_t k,
                       const std::vector<double>& q_fine) {
    return rerank_block(index, coarse_ranked, k, q_fine);
}

RankedList query_expand(const EngineIndex& index, const RankedList& reranked, std::size_t k,
                        std::size_t qe_k) {
    if (reranked.empty()) return reranked;
    const std::size_t block = std::min(k, reranked.size());
    const std::size_t pool = std::min(qe_k, block);
    std::vector<double> mean(index.fine.dim(), 0.0);
    for (std::size_t i = 0; i < pool; ++i) {
        const double* row = index.fine.row(reranked[i].id);
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += row[j];
    }
    for (double& v : mean) v /= static_cast<double>(pool);
    return rerank_block(index, reranked, k, l2_normalize(mean));
}

Stage parse_stage(const std::string& name) {
    if (name == "coarse") return Stage::coarse;
    if (name == "fine") return Stage::fine;
    if (name == "fine+qe") return Stage::fine_qe;
    throw ConfigError("unknown stage \"" + name + "\" (coarse | fine | fine+qe)");
}

std::string stage_name(Stage stage) {
    switch (stage) {
        case Stage::coarse: return "coarse";
        case Stage::fine: return "fine";
        case Stage::fine_qe: return "fine+qe";
    }
    return "unknown";
}

QueryOutcome full_query(const EngineIndex& index, const Tensor& image, Stage stage) {
    QueryOutcome out;

    auto t0 = Clock::now();
    const Tensor coarse_input = resize_square(image, index.coarse_model.config.input_size);
    ConvFeature cf = extract_conv_feature(index.coarse_model, coarse_input);
    const std::vector<double> q_coarse = l2_normalize(pca_transform(index.pca_coarse, cf.feature));
    out.timings.coarse_feature_ms = ms_since(t0);

    auto t1 = Clock::now();
    out.category = static_cast<int>(svm_predict(index.classifier, q_coarse).first);
    out.timings.classifier_ms = ms_since(t1);

    auto t2 = Clock::now();
    const std::size_t k = std::min(index.cfg.top_k, index.coarse.count());
    CoarseResult coarse = coarse_query(index, q_coarse, std::max<std::size_t>(k, 1));
    out.coarse_ranked = std::move(coarse.ranked);
    out.timings.coarse_retrieval_ms = ms_since(t2);

    // The selected coarse map always accompanies the result.
    const auto [map_idx, selected] = select_confidence_map(cf.maps);
    (void)map_idx;
    RegionExtraction region =
        extract_region(image, selected, index.cfg.threshold, index.cfg.min_region_frac);
    out.region_fallback = region.fallback;
    out.confidence_map = Tensor({region.map.height, region.map.width}, region.map.values);

    if (stage == Stage::coarse) {
        out.final_ranked = out.coarse_ranked;
        return out;
    }

    auto t3 = Clock::now();
    const CnNetsModel& fine_model = index.category_models.at(static_cast<std::size_t>(out.category));
    const std::size_t fine_in = fine_model.config.input_size;
    const Tensor whole = resize_square(image, fine_in);
    const Tensor crop = resize_square(region.crop, fine_in);
    const std::vector<double> f_img = l2_normalize(pca_transform(
        index.pca_img.at(static_cast<std::size_t>(out.category)), extract_cn_feature(fine_model, whole)));
    const std::vector<double> f_reg = l2_normalize(pca_transform(
        index.pca_reg.at(static_cast<std::size_t>(out.category)), extract_cn_feature(fine_model, crop)));
    const std::vector<double> q_fine = concat(f_img, f_reg);
    out.timings.fine_feature_ms = ms_since(t3);

    auto t4 = Clock::now();
    out.fine_ranked = fine_rerank(index, out.coarse_ranked, k, q_fine);
    if (stage == Stage::fine_qe) {
        out.final_ranked = query_expand(index, out.fine_ranked, k, index.cfg.qe_k);
    } else {
        out.final_ranked = out.fine_ranked;
    }
    out.timings.fine_retrieval_ms = ms_since(t4);
    return out;
}

namespace {

std::string model_file_name(const std::string& category) { return "model_" + category + ".cnnt"; }

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

void save_index(const EngineIndex& index, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create index directory: " + dir.string());

    index.coarse.save(dir / "coarse.fstr");
    index.fine.save(dir / "fine.fstr");
    save_classifier(index.classifier, dir / "classifier.lsvm");
    save_pca(index.pca_coarse, dir / "pca_coarse.pcam");
    save_model(index.coarse_model, dir / "model_coarse.cnnt");
    for (std::size_t c = 0; c < index.categories.size(); ++c) {
        save_pca(index.pca_img[c], dir / ("pca_img_" + index.categories[c] + ".pcam"));
        save_pca(index.pca_reg[c], dir / ("pca_reg_" + index.categories[c] + ".pcam"));
        save_model(index.category_models[c], dir / model_file_name(index.categories[c]));
    }

    {
        std::ofstream routing(dir / "routing.tsv", std::ios::binary);
        if (!routing) throw IoError("cannot write routing table");
        std::vector<std::string> ids = index.coarse.ids();
        std::sort(ids.begin(), ids.end());
        for (const auto& id : ids) routing << id << "\t" << index.routing.at(id) << "\n";
    }

    std::ofstream meta(dir / "metadata.txt", std::ios::binary);
    if (!meta) throw IoError("cannot write index metadata");
    meta << "fgir_index_version\t1\n";
    meta << "coarse_dim\t" << index.cfg.coarse_dim << "\n";
    meta << "fine_dim_per_part\t" << index.cfg.fine_dim_per_part << "\n";
    meta << "top_k\t" << index.cfg.top_k << "\n";
    meta << "qe_k\t" << index.cfg.qe_k << "\n";
    meta << "threshold\t" << fmt_double(index.cfg.threshold) << "\n";
    meta << "min_region_frac\t" << fmt_double(index.cfg.min_region_frac) << "\n";
    meta << "fallback_regions\t" << index.fallback_regions << "\n";
    meta << "coarse_model\tmodel_coarse.cnnt\n";
    for (const auto& cat : index.categories)
        meta << "category_model\t" << cat << "\t" << model_file_name(cat) << "\n";
    if (!meta) throw IoError("index metadata write failed");
}

EngineIndex load_index(const std::filesystem::path& dir) {
    std::ifstream meta(dir / "metadata.txt", std::ios::binary);
    if (!meta) throw IoError("cannot open index metadata: " + (dir / "metadata.txt").string());

    EngineIndex index;
    std::string line;
    std::size_t line_no = 0;
    bool version_seen = false;
    while (std::getline(meta, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == '\t') {
                fields.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        const std::string& key = fields[0];
        auto need = [&](std::size_t n) {
            if (fields.size() != n)
                throw FormatError("metadata.txt:" + std::to_string(line_no) + ": malformed " + key);
        };
        try {
            if (key == "fgir_index_version") {
                need(2);
                if (fields[1] != "1")
                    throw FormatError("metadata.txt: unsupported index version " + fields[1]);
                version_seen = true;
            } else if (key == "coarse_dim") {
                need(2);
                index.cfg.coarse_dim = std::stoul(fields[1]);
            } else if (key == "fine_dim_per_part") {
                need(2);
                index.cfg.fine_dim_per_part = std::stoul(fields[1]);
            } else if (key == "top_k") {
                need(2);
                index.cfg.top_k = std::stoul(fields[1]);
            } else if (key == "qe_k") {
                need(2);
                index.cfg.qe_k = std::stoul(fields[1]);
            } else if (key == "threshold") {
                need(2);
                index.cfg.threshold = std::stod(fields[1]);
            } else if (key == "min_region_frac") {
                need(2);
                index.cfg.min_region_frac = std::stod(fields[1]);
            } else if (key == "fallback_regions") {
                need(2);
                index.fallback_regions = std::stoul(fields[1]);
            } else if (key == "category_model") {
                need(3);
                index.categories.push_back(fields[1]);
            }
        } catch (const std::invalid_argument&) {
            throw FormatError("metadata.txt:" + std::to_string(line_no) + ": bad number in " + key);
        }
    }
    if (!version_seen) throw FormatError("metadata.txt: missing fgir_index_version");
    if (index.categories.empty()) throw FormatError("metadata.txt: no category_model entries");

    index.coarse = FeatureStore::load(dir / "coarse.fstr");
    index.fine = FeatureStore::load(dir / "fine.fstr");
    index.classifier = load_classifier(dir / "classifier.lsvm");
    index.pca_coarse = load_pca(dir / "pca_coarse.pcam");
    index.coarse_model = load_model(dir / "model_coarse.cnnt");
    for (const auto& cat : index.categories) {
        index.pca_img.push_back(load_pca(dir / ("pca_img_" + cat + ".pcam")));
        index.pca_reg.push_back(load_pca(dir / ("pca_reg_" + cat + ".pcam")));
        index.category_models.push_back(load_model(dir / model_file_name(cat)));
    }

    std::ifstream routing(dir / "routing.tsv", std::ios::binary);
    if (!routing) throw IoError("cannot open routing table: " + (dir / "routing.tsv").string());
    std::size_t routing_line = 0;
    while (std::getline(routing, line)) {
        ++routing_line;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw FormatError("routing.tsv:" + std::to_string(routing_line) + ": expected 2 columns");
        try {
            index.routing.emplace(line.substr(0, tab), std::stoi(line.substr(tab + 1)));
        } catch (const std::invalid_argument&) {
            throw FormatError("routing.tsv:" + std::to_string(routing_line) + ": bad category index");
        }
    }
    return index;
}

} // namespace fgir
