#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fgir/engine.hpp"
#include "fgir/model.hpp"

namespace fgir {

// Retrieval evaluation: average precision, MAP, confidence-map spread
// histograms, and stage-timing aggregation.

// AP = (1/R) * sum over ranks k holding a relevant hit of (hits up to k)/k,
// with R counting relevant ids present in the list. Returns nothing when the
// relevant set is empty (the query is then excluded from MAP).
std::optional<double> average_precision(const std::vector<std::string>& ranked_ids,
                                        const std::set<std::string>& relevant);

struct PerQueryAp {
    std::string query_id;
    double ap = 0.0;
    std::size_t relevant_count = 0;
};

struct MapResult {
    double map = 0.0;
    std::vector<PerQueryAp> per_query;   // queries included in the mean
    std::size_t excluded_queries = 0;    // empty relevant sets
};

MapResult mean_average_precision(const std::vector<std::string>& query_ids,
                                 const std::vector<std::vector<std::string>>& ranked_lists,
                                 const std::vector<std::set<std::string>>& relevant_sets);

// Per-image standard deviation of the selected confidence map, separately for
// the Conv and Norm branches, binned over [0, observed max].
struct StdHistogram {
    std::vector<double> bin_edges;        // lower edges, bins + 1 entries ending at the max
    std::vector<std::size_t> conv_counts;
    std::vector<std::size_t> norm_counts;
    double conv_mean_std = 0.0;
    double norm_mean_std = 0.0;
};

StdHistogram std_histogram(const CnNetsModel& model, const std::vector<Tensor>& images,
                           std::size_t bins);

struct TimingRow {
    std::string stage;
    double mean_ms = 0.0;
    double median_ms = 0.0;
    double max_ms = 0.0;
};

// One row per pipeline stage (coarse feature extraction, coarse retrieval,
// classifier, fine feature extraction, fine retrieval) plus a total row.
std::vector<TimingRow> timing_report(const std::vector<StageTimings>& timings);

// CSV / text report writers.
void write_ap_csv(const MapResult& result, const std::filesystem::path& path);
void write_map_txt(const MapResult& result, Stage stage, const std::filesystem::path& path);
void write_timing_csv(const std::vector<TimingRow>& rows, const std::filesystem::path& path);
void write_std_hist_csv(const StdHistogram& hist, const std::filesystem::path& path);

} // namespace fgir
