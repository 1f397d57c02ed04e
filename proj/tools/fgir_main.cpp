// fgir: coarse-to-fine fine-grained instance retrieval over a synthetic
// benchmark. Lifecycle: synth -> train -> fit -> index -> query / eval /
// inspect. Every subcommand is deterministic for a fixed seed.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fgir/engine.hpp"
#include "fgir/errors.hpp"
#include "fgir/eval.hpp"
#include "fgir/manifest.hpp"
#include "fgir/pgm.hpp"
#include "fgir/pipeline.hpp"
#include "fgir/region.hpp"
#include "fgir/synth.hpp"

namespace {

namespace fs = std::filesystem;
using namespace fgir;

constexpr const char* kExitCodeNote =
    "Exit codes: 0 success, 2 usage/config, 3 data or file format, "
    "4 numeric contract violation, 5 I/O failure.";

struct SynthArgs {
    std::string out;
    SynthSpec spec;
};

struct TrainArgs {
    std::string data, models;
    TrainConfig tc;
};

struct FitArgs {
    std::string data, models;
    RetrievalConfig cfg;
    std::uint64_t seed = kDefaultBenchSeed;
};

struct IndexArgs {
    std::string data, models, index;
    RetrievalConfig cfg;
};

struct QueryArgs {
    std::string index, image, stages = "fine+qe";
    std::size_t top = 10;  // 0 prints the whole list
};

struct EvalArgs {
    std::string index, data, report, stages = "fine+qe";
    std::size_t bins = 16;
};

struct InspectArgs {
    std::string index, image, out;
};

int run_synth(const SynthArgs& args) {
    const DatasetManifest manifest = generate_dataset(args.spec, args.out);
    std::size_t queries = 0;
    for (const auto& r : manifest.records)
        if (r.role == Role::query) ++queries;
    std::printf("wrote %zu images (%zu queries) under %s\n", manifest.records.size(), queries,
                args.out.c_str());
    return 0;
}

int run_train(const TrainArgs& args) {
    const DatasetManifest manifest = manifest_read(fs::path(args.data) / "manifest.tsv");
    const TrainedModels models = train_pipeline_models(manifest, args.data, args.tc);
    save_trained_models(models, args.models);
    std::printf("coarse model: %zu params, loss %.4f -> %.4f\n", models.coarse.param_count(),
                models.coarse_loss_trace.front(), models.coarse_loss_trace.back());
    for (std::size_t c = 0; c < models.categories.size(); ++c)
        std::printf("category %s: %zu params, loss %.4f -> %.4f\n", models.categories[c].c_str(),
                    models.per_category[c].param_count(), models.category_loss_traces[c].front(),
                    models.category_loss_traces[c].back());
    return 0;
}

int run_fit(const FitArgs& args) {
    const DatasetManifest manifest = manifest_read(fs::path(args.data) / "manifest.tsv");
    const TrainedModels models = load_trained_models(args.models, manifest.coarse_families());
    const FitResult fit = fit_pipeline(manifest, args.data, models, args.cfg, args.seed);
    save_fit_result(fit, models.categories, args.models);
    std::printf("coarse PCA %zu -> %zu, fine PCA -> %zu per part\n", fit.pca_coarse.in_dim,
                fit.pca_coarse.out_dim, fit.pca_img.front().out_dim);
    std::printf("classifier holdout accuracy: %.4f\n", fit.holdout_accuracy);
    if (fit.region_fallbacks > 0)
        std::printf("region fallbacks during fit: %zu\n", fit.region_fallbacks);
    return 0;
}

int run_index(const IndexArgs& args) {
    const DatasetManifest manifest = manifest_read(fs::path(args.data) / "manifest.tsv");
    const std::vector<std::string> categories = manifest.coarse_families();
    const TrainedModels models = load_trained_models(args.models, categories);
    const FitResult fit = load_fit_result(args.models, categories);
    EngineIndex index =
        build_index(manifest, args.data, models.coarse, models.per_category, categories,
                    fit.classifier, fit.pca_coarse, fit.pca_img, fit.pca_reg, args.cfg);
    save_index(index, args.index);
    std::printf("indexed %zu images (%zu coarse dims, %zu fine dims)\n", index.coarse.count(),
                index.coarse.dim(), index.fine.dim());
    if (index.fallback_regions > 0)
        std::printf("region fallbacks during indexing: %zu\n", index.fallback_regions);
    return 0;
}

int run_query(const QueryArgs& args) {
    const EngineIndex index = load_index(args.index);
    const Tensor image = read_pgm(args.image);
    const QueryOutcome outcome = full_query(index, image, parse_stage(args.stages));
    const std::size_t limit =
        args.top == 0 ? outcome.final_ranked.size() : std::min(args.top, outcome.final_ranked.size());
    for (std::size_t i = 0; i < limit; ++i)
        std::printf("%s\t%.9g\n", outcome.final_ranked[i].id.c_str(),
                    outcome.final_ranked[i].distance);
    return 0;
}

int run_eval(const EvalArgs& args) {
    const EngineIndex index = load_index(args.index);
    const DatasetManifest manifest = manifest_read(fs::path(args.data) / "manifest.tsv");
    const Stage stage = parse_stage(args.stages);

    // Relevant set per query: indexed database images of the same species.
    std::vector<std::string> query_ids;
    std::vector<std::vector<std::string>> ranked_lists;
    std::vector<std::set<std::string>> relevant_sets;
    std::vector<StageTimings> timings;
    for (const auto& rec : manifest.records) {
        if (rec.role != Role::query) continue;
        const Tensor image = read_pgm(fs::path(args.data) / rec.path);
        const QueryOutcome outcome = full_query(index, image, stage);
        std::vector<std::string> ids;
        ids.reserve(outcome.final_ranked.size());
        for (const auto& e : outcome.final_ranked) ids.push_back(e.id);
        std::set<std::string> relevant;
        for (const auto& db : manifest.records)
            if (db.role == Role::database && db.fine == rec.fine) relevant.insert(db.id);
        query_ids.push_back(rec.id);
        ranked_lists.push_back(std::move(ids));
        relevant_sets.push_back(std::move(relevant));
        timings.push_back(outcome.timings);
    }
    if (query_ids.empty()) throw DataError("eval: manifest has no query records");

    const MapResult result = mean_average_precision(query_ids, ranked_lists, relevant_sets);

    fs::create_directories(args.report);
    write_ap_csv(result, fs::path(args.report) / "ap.csv");
    write_map_txt(result, stage, fs::path(args.report) / "map.txt");
    write_timing_csv(timing_report(timings), fs::path(args.report) / "timing.csv");

    // Confidence-map spread of the coarse model over the auxiliary images.
    std::vector<Tensor> aux_images;
    for (const auto& rec : manifest.records)
        if (rec.role == Role::auxiliary)
            aux_images.push_back(resize_bilinear(read_pgm(fs::path(args.data) / rec.path),
                                                 index.coarse_model.config.input_size,
                                                 index.coarse_model.config.input_size));
    if (!aux_images.empty()) {
        const StdHistogram hist = std_histogram(index.coarse_model, aux_images, args.bins);
        write_std_hist_csv(hist, fs::path(args.report) / "std_hist.csv");
        std::printf("map std: conv %.5f, norm %.5f\n", hist.conv_mean_std, hist.norm_mean_std);
    }

    std::printf("MAP(%s) = %.6f over %zu queries (%zu excluded)\n", stage_name(stage).c_str(),
                result.map, result.per_query.size(), result.excluded_queries);
    return 0;
}

int run_inspect(const InspectArgs& args) {
    const EngineIndex index = load_index(args.index);
    const Tensor image = read_pgm(args.image);
    const QueryOutcome outcome = full_query(index, image, Stage::coarse);

    fs::create_directories(args.out);
    write_pgm(outcome.confidence_map, fs::path(args.out) / "confidence.pgm");

    const ConfidenceMap map{outcome.confidence_map.extent(1), outcome.confidence_map.extent(0),
                            outcome.confidence_map.values()};
    const BinaryMask mask = binarize(map, index.cfg.threshold);
    Tensor mask_img({mask.height, mask.width});
    for (std::size_t i = 0; i < mask.bits.size(); ++i) mask_img[i] = mask.bits[i] ? 1.0 : 0.0;
    write_pgm(mask_img, fs::path(args.out) / "mask.pgm");

    BoundingBox box{0, 0, image.extent(0) - 1, image.extent(1) - 1};
    try {
        const PixelRegion dom = dominant_region(label_components(mask), mask.width, mask.height,
                                                index.cfg.min_region_frac);
        box = min_enclosing_rect(dom, mask.width);
    } catch (const DataError&) {
        std::fprintf(stderr, "note: falling back to the full-image region\n");
    }
    const Tensor framed({1, image.extent(0), image.extent(1)}, image.values());
    const Tensor crop3 = crop_region(framed, box, image.extent(1), image.extent(0));
    write_pgm(Tensor({crop3.extent(1), crop3.extent(2)}, crop3.values()),
              fs::path(args.out) / "region.pgm");
    std::printf("category: %s\n", index.categories.at(outcome.category).c_str());
    std::printf("region rows %zu..%zu cols %zu..%zu\n", box.row0, box.row1, box.col0, box.col1);
    return 0;
}

void add_retrieval_flags(CLI::App* cmd, RetrievalConfig& cfg) {
    cmd->add_option("--coarse-dim", cfg.coarse_dim, "Coarse descriptor dimensionality");
    cmd->add_option("--fine-dim", cfg.fine_dim_per_part,
                    "Fine descriptor dimensionality per part (clamped to the data)");
    cmd->add_option("-K,--top-k", cfg.top_k, "Coarse cut size");
    cmd->add_option("--qe-k", cfg.qe_k, "Descriptors averaged by query expansion");
    cmd->add_option("--threshold", cfg.threshold, "Confidence-map binarization threshold");
    cmd->add_option("--min-region-frac", cfg.min_region_frac, "Small-region cutoff fraction");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coarse-to-fine fine-grained instance retrieval"};
    app.require_subcommand(1);
    app.footer(kExitCodeNote);

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate the synthetic benchmark");
    synth->add_option("--out", synth_args.out, "Output dataset directory")->required();
    synth->add_option("--seed", synth_args.spec.seed, "Generator seed");
    synth->add_option("--image-size", synth_args.spec.image_size, "Image extent in pixels");
    synth->add_option("--images-per-species", synth_args.spec.images_per_species, "Images per species");
    synth->add_option("--db-species", synth_args.spec.db_species_per_family,
                      "Database species per family");
    synth->add_option("--aux-species", synth_args.spec.aux_species_per_family,
                      "Auxiliary species per family");
    synth->add_option("--query-frac", synth_args.spec.query_fraction,
                      "Fraction of database species images held out as queries");
    synth->add_option("--distractors", synth_args.spec.distractor_count, "Distractor image count");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train the coarse and category networks");
    train->add_option("--data", train_args.data, "Dataset directory")->required();
    train->add_option("--models", train_args.models, "Model output directory")->required();
    train->add_option("--seed", train_args.tc.seed, "Training seed");
    train->add_option("--epochs", train_args.tc.epochs, "Training epochs");
    train->add_option("--batch", train_args.tc.batch_size, "Batch size");
    train->add_option("--lr", train_args.tc.learning_rate, "Learning rate");

    FitArgs fit_args;
    auto* fit = app.add_subcommand("fit", "Fit PCA models and the category classifier");
    fit->add_option("--data", fit_args.data, "Dataset directory")->required();
    fit->add_option("--models", fit_args.models, "Model directory (input and output)")->required();
    fit->add_option("--seed", fit_args.seed, "Classifier training seed");
    add_retrieval_flags(fit, fit_args.cfg);

    IndexArgs index_args;
    auto* index = app.add_subcommand("index", "Build and persist the retrieval index");
    index->add_option("--data", index_args.data, "Dataset directory")->required();
    index->add_option("--models", index_args.models, "Model directory")->required();
    index->add_option("--index", index_args.index, "Index output directory")->required();
    add_retrieval_flags(index, index_args.cfg);

    QueryArgs query_args;
    auto* query = app.add_subcommand("query", "Rank database images for one query image");
    query->add_option("--index", query_args.index, "Index directory")->required();
    query->add_option("--image", query_args.image, "Query image (PGM)")->required();
    query->add_option("--stages", query_args.stages, "coarse | fine | fine+qe");
    query->add_option("--top", query_args.top, "Lines to print (0 = all)");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Run every manifest query and write reports");
    eval->add_option("--index", eval_args.index, "Index directory")->required();
    eval->add_option("--data", eval_args.data, "Dataset directory")->required();
    eval->add_option("--report", eval_args.report, "Report output directory")->required();
    eval->add_option("--stages", eval_args.stages, "coarse | fine | fine+qe");
    eval->add_option("--bins", eval_args.bins, "Histogram bins for the map-spread report");

    InspectArgs inspect_args;
    auto* inspect = app.add_subcommand("inspect", "Export confidence map, mask, and region crop");
    inspect->add_option("--index", inspect_args.index, "Index directory")->required();
    inspect->add_option("--image", inspect_args.image, "Image to inspect (PGM)")->required();
    inspect->add_option("--out", inspect_args.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return run_synth(synth_args);
        if (train->parsed()) return run_train(train_args);
        if (fit->parsed()) return run_fit(fit_args);
        if (index->parsed()) return run_index(index_args);
        if (query->parsed()) return run_query(query_args);
        if (eval->parsed()) return run_eval(eval_args);
        if (inspect->parsed()) return run_inspect(inspect_args);
        std::fprintf(stderr, "no subcommand selected\n");
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // parse failures are usage errors
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 3;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const ContractError& e) {
        std::fprintf(stderr, "contract violation: %s\n", e.what());
        return 4;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 5;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
