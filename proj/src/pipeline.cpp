#include "fgir/pipeline.hpp"

#include <algorithm>

#include "fgir/errors.hpp"
#include "fgir/pgm.hpp"
#include "fgir/region.hpp"

namespace fgir {

NetworkConfig default_coarse_net(std::size_t num_species, std::uint64_t seed) {
    NetworkConfig c;
    c.input_size = 32;
    c.trunk = {16, 48};
    c.shared_depth = 1;
    c.feature_channels = 48;
    c.num_species = num_species;
    c.seed = seed;
    return c;
}

NetworkConfig default_fine_net(std::size_t num_species, std::uint64_t seed) {
    NetworkConfig c;
    c.input_size = 64;
    c.trunk = {12, 24, 48};
    c.shared_depth = 2;
    c.feature_channels = 48;
    c.num_species = num_species;
    c.seed = seed;
    return c;
}

namespace {

struct AuxRecord {
    const ManifestRecord* rec;
    Tensor image;  // native resolution
};

std::vector<AuxRecord> load_auxiliary(const DatasetManifest& manifest,
                                      const std::filesystem::path& data_dir) {
    std::vector<const ManifestRecord*> recs;
    for (const auto& r : manifest.records)
        if (r.role == Role::auxiliary) recs.push_back(&r);
    if (recs.empty()) throw DataError("pipeline: manifest has no auxiliary records");
    std::sort(recs.begin(), recs.end(),
              [](const ManifestRecord* a, const ManifestRecord* b) { return a->id < b->id; });
    std::vector<AuxRecord> out;
    out.reserve(recs.size());
    for (const auto* r : recs) out.push_back({r, read_pgm(data_dir / r->path)});
    return out;
}

Tensor resize_square(const Tensor& image, std::size_t size) {
    if (image.extent(0) == size && image.extent(1) == size) return image;
    return resize_bilinear(image, size, size);
}

int label_index(const std::vector<std::string>& names, const std::string& name,
                const std::string& record_id) {
    const auto it = std::lower_bound(names.begin(), names.end(), name);
    if (it == names.end() || *it != name)
        throw DataError("pipeline: record " + record_id + " has unknown label \"" + name + "\"");
    return static_cast<int>(it - names.begin());
}

} // namespace

TrainedModels train_pipeline_models(const DatasetManifest& manifest,
                                    const std::filesystem::path& data_dir, const TrainConfig& tc) {
    const std::vector<AuxRecord> aux = load_auxiliary(manifest, data_dir);
    TrainedModels out;
    out.categories = manifest.coarse_families();
    if (out.categories.empty()) throw DataError("pipeline: no coarse families in manifest");

    // Coarse model: every auxiliary species, trained at the coarse scale.
    const std::vector<std::string> all_species = manifest.species_of(Role::auxiliary);
    NetworkConfig coarse_net = default_coarse_net(all_species.size(), tc.seed + 1);
    out.coarse = build_model(coarse_net);
    {
        std::vector<Tensor> images;
        std::vector<int> labels;
        images.reserve(aux.size());
        for (const auto& a : aux) {
            images.push_back(resize_square(a.image, coarse_net.input_size));
            labels.push_back(label_index(all_species, a.rec->fine, a.rec->id));
        }
        TrainConfig coarse_tc = tc;
        coarse_tc.seed = tc.seed + 1;
        out.coarse_loss_trace = train(out.coarse, images, labels, coarse_tc);
    }

    // One category-specific model per family, trained at the fine scale.
    for (std::size_t c = 0; c < out.categories.size(); ++c) {
        const std::string& family = out.categories[c];
        const std::vector<std::string> species = manifest.species_of(Role::auxiliary, family);
        if (species.empty())
            throw DataError("pipeline: family \"" + family + "\" has no auxiliary species");
        NetworkConfig fine_net = default_fine_net(species.size(), tc.seed + 100 + c);
        CnNetsModel model = build_model(fine_net);
        std::vector<Tensor> images;
        std::vector<int> labels;
        for (const auto& a : aux) {
            if (a.rec->coarse != family) continue;
            images.push_back(resize_square(a.image, fine_net.input_size));
            labels.push_back(label_index(species, a.rec->fine, a.rec->id));
        }
        TrainConfig fine_tc = tc;
        fine_tc.seed = tc.seed + 100 + c;
        out.category_loss_traces.push_back(train(model, images, labels, fine_tc));
        out.per_category.push_back(std::move(model));
    }
    return out;
}

FitResult fit_pipeline(const DatasetManifest& manifest, const std::filesystem::path& data_dir,
                       const TrainedModels& models, const RetrievalConfig& cfg,
                       std::uint64_t seed) {
    const std::vector<AuxRecord> aux = load_auxiliary(manifest, data_dir);
    const std::vector<std::string>& families = models.categories;

    FitResult out;

    // Pass 1: coarse features and confidence maps for every auxiliary image.
    std::vector<std::vector<double>> conv_feats;   // raw f_conv, one per image
    std::vector<Tensor> selected_maps;
    std::vector<int> family_labels;
    conv_feats.reserve(aux.size());
    selected_maps.reserve(aux.size());
    for (const auto& a : aux) {
        const Tensor coarse_img = resize_square(a.image, models.coarse.config.input_size);
        ConvFeature cf = extract_conv_feature(models.coarse, coarse_img);
        conv_feats.push_back(std::move(cf.feature));
        selected_maps.push_back(select_confidence_map(cf.maps).second);
        family_labels.push_back(label_index(families, a.rec->coarse, a.rec->id));
    }

    const std::size_t n = aux.size();
    const std::size_t coarse_out =
        std::min({cfg.coarse_dim, conv_feats[0].size(), n - 1});
    out.pca_coarse = pca_fit(conv_feats, coarse_out);

    std::vector<std::vector<double>> coarse_desc(n);
    for (std::size_t i = 0; i < n; ++i)
        coarse_desc[i] = l2_normalize(pca_transform(out.pca_coarse, conv_feats[i]));

    // Classifier: hold out every fifth sample for the accuracy report, then
    // train the shipped classifier on everything.
    {
        std::vector<std::vector<double>> train_x, hold_x;
        std::vector<int> train_y, hold_y;
        for (std::size_t i = 0; i < n; ++i) {
            if (i % 5 == 0) {
                hold_x.push_back(coarse_desc[i]);
                hold_y.push_back(family_labels[i]);
            } else {
                train_x.push_back(coarse_desc[i]);
                train_y.push_back(family_labels[i]);
            }
        }
        const SvmTrainResult holdout_run =
            svm_train(train_x, train_y, families, 1e-4, 20, 0.1, seed + 7);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < hold_x.size(); ++i)
            if (static_cast<int>(svm_predict(holdout_run.classifier, hold_x[i]).first) == hold_y[i])
                ++correct;
        out.holdout_accuracy =
            hold_x.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(hold_x.size());
        out.classifier = svm_train(coarse_desc, family_labels, families, 1e-4, 20, 0.1, seed + 7)
                             .classifier;
    }

    // Pass 2: fine-scale descriptors per family for the image and region PCAs.
    std::vector<std::vector<std::vector<double>>> img_feats(families.size());
    std::vector<std::vector<std::vector<double>>> reg_feats(families.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = aux[i];
        const std::size_t fam = static_cast<std::size_t>(family_labels[i]);
        const CnNetsModel& fine_model = models.per_category[fam];
        const std::size_t fine_in = fine_model.config.input_size;

        const Tensor whole = resize_square(a.image, fine_in);
        img_feats[fam].push_back(extract_cn_feature(fine_model, whole));

        // Region crop guided by the coarse-model confidence map.
        const std::size_t h = a.image.extent(0), w = a.image.extent(1);
        BoundingBox box{0, 0, h - 1, w - 1};
        bool fallback = false;
        try {
            const std::vector<double> resized = resize_bilinear(
                selected_maps[i].values(), selected_maps[i].extent(1), selected_maps[i].extent(0),
                w, h);
            const ConfidenceMap norm = normalize_map(resized, w, h);
            const BinaryMask mask = binarize(norm, cfg.threshold);
            const PixelRegion dom =
                dominant_region(label_components(mask), w, h, cfg.min_region_frac);
            box = min_enclosing_rect(dom, w);
        } catch (const DataError&) {
            fallback = true;
        }
        if (fallback) ++out.region_fallbacks;
        const Tensor framed({1, h, w}, a.image.values());
        const Tensor crop3 = crop_region(framed, box, w, h);
        const Tensor crop =
            resize_square(Tensor({crop3.extent(1), crop3.extent(2)}, crop3.values()), fine_in);
        reg_feats[fam].push_back(extract_cn_feature(fine_model, crop));
    }

    std::size_t part_dim = cfg.fine_dim_per_part;
    for (std::size_t fam = 0; fam < families.size(); ++fam) {
        if (img_feats[fam].size() < 2)
            throw DataError("pipeline: family \"" + families[fam] +
                            "\" needs at least 2 auxiliary images for PCA");
        part_dim = std::min({part_dim, img_feats[fam][0].size(), img_feats[fam].size() - 1});
    }
    for (std::size_t fam = 0; fam < families.size(); ++fam) {
        out.pca_img.push_back(pca_fit(img_feats[fam], part_dim));
        out.pca_reg.push_back(pca_fit(reg_feats[fam], part_dim));
    }
    return out;
}

void save_trained_models(const TrainedModels& models, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create model directory: " + dir.string());
    save_model(models.coarse, dir / "model_coarse.cnnt");
    for (std::size_t c = 0; c < models.categories.size(); ++c)
        save_model(models.per_category[c], dir / ("model_" + models.categories[c] + ".cnnt"));
}

TrainedModels load_trained_models(const std::filesystem::path& dir,
                                  const std::vector<std::string>& categories) {
    TrainedModels models;
    models.categories = categories;
    models.coarse = load_model(dir / "model_coarse.cnnt");
    for (const auto& cat : categories)
        models.per_category.push_back(load_model(dir / ("model_" + cat + ".cnnt")));
    return models;
}

void save_fit_result(const FitResult& fit, const std::vector<std::string>& categories,
                     const std::filesystem::path& dir) {
    save_pca(fit.pca_coarse, dir / "pca_coarse.pcam");
    save_classifier(fit.classifier, dir / "classifier.lsvm");
    for (std::size_t c = 0; c < categories.size(); ++c) {
        save_pca(fit.pca_img[c], dir / ("pca_img_" + categories[c] + ".pcam"));
        save_pca(fit.pca_reg[c], dir / ("pca_reg_" + categories[c] + ".pcam"));
    }
}

FitResult load_fit_result(const std::filesystem::path& dir,
                          const std::vector<std::string>& categories) {
    FitResult fit;
    fit.pca_coarse = load_pca(dir / "pca_coarse.pcam");
    fit.classifier = load_classifier(dir / "classifier.lsvm");
    for (const auto& cat : categories) {
        fit.pca_img.push_back(load_pca(dir / ("pca_img_" + cat + ".pcam")));
        fit.pca_reg.push_back(load_pca(dir / ("pca_reg_" + cat + ".pcam")));
    }
    return fit;
}

} // namespace fgir
