#include "fgir/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fgir/errors.hpp"

namespace fgir {

std::optional<double> average_precision(const std::vector<std::string>& ranked_ids,
                                        const std::set<std::string>& relevant) {
    if (relevant.empty()) return std::nullopt;
    std::size_t hits = 0;
    double acc = 0.0;
    for (std::size_t k = 0; k < ranked_ids.size(); ++k) {
        if (relevant.count(ranked_ids[k])) {
            ++hits;
            acc += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    if (hits == 0) return 0.0;  // relevant set exists but the list excludes it entirely
    return acc / static_cast<double>(hits);
}

MapResult mean_average_precision(const std::vector<std::string>& query_ids,
                                 const std::vector<std::vector<std::string>>& ranked_lists,
                                 const std::vector<std::set<std::string>>& relevant_sets) {
    if (query_ids.size() != ranked_lists.size() || query_ids.size() != relevant_sets.size())
        throw ContractError("mean_average_precision: input length mismatch");
    MapResult result;
    double sum = 0.0;
    for (std::size_t i = 0; i < query_ids.size(); ++i) {
        const auto ap = average_precision(ranked_lists[i], relevant_sets[i]);
        if (!ap.has_value()) {
            ++result.excluded_queries;
            continue;
        }
        std::size_t present = 0;
        for (const auto& id : ranked_lists[i])
            if (relevant_sets[i].count(id)) ++present;
        result.per_query.push_back({query_ids[i], *ap, present});
        sum += *ap;
    }
    if (result.per_query.empty())
        throw DataError("mean_average_precision: no query has a non-empty relevant set");
    result.map = sum / static_cast<double>(result.per_query.size());
    return result;
}

namespace {

double map_std(const Tensor& map) {
    const std::size_t n = map.size();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += map[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = map[i] - mean;
        var += d * d;
    }
    return std::sqrt(var / static_cast<double>(n));
}

} // namespace

StdHistogram std_histogram(const CnNetsModel& model, const std::vector<Tensor>& images,
                           std::size_t bins) {
    if (bins < 1) throw ConfigError("std_histogram: bins must be >= 1");
    if (images.empty()) throw DataError("std_histogram: empty image set");

    std::vector<double> conv_stds, norm_stds;
    conv_stds.reserve(images.size());
    norm_stds.reserve(images.size());
    const std::size_t in = model.config.input_size;
    for (const Tensor& image : images) {
        Tensor batch({1, 1, in, in}, image.values());
        const ClassifyOutput out = forward_classify(model, batch, Phase::infer);
        const std::size_t c = out.conv_maps.extent(1), m = out.conv_maps.extent(2);
        const Tensor conv_maps({c, m, m}, out.conv_maps.values());
        const Tensor norm_maps({c, m, m}, out.norm_maps.values());
        conv_stds.push_back(map_std(select_confidence_map(conv_maps).second));
        norm_stds.push_back(map_std(select_confidence_map(norm_maps).second));
    }

    double max_std = 0.0;
    for (double v : conv_stds) max_std = std::max(max_std, v);
    for (double v : norm_stds) max_std = std::max(max_std, v);
    const double width = max_std > 0.0 ? max_std / static_cast<double>(bins) : 1.0;

    StdHistogram hist;
    hist.bin_edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) hist.bin_edges[b] = width * static_cast<double>(b);
    hist.conv_counts.assign(bins, 0);
    hist.norm_counts.assign(bins, 0);
    auto bin_of = [&](double v) {
        std::size_t b = static_cast<std::size_t>(v / width);
        return std::min(b, bins - 1);  // the max value lands in the top bin
    };
    double conv_sum = 0.0, norm_sum = 0.0;
    for (double v : conv_stds) {
        ++hist.conv_counts[bin_of(v)];
        conv_sum += v;
    }
    for (double v : norm_stds) {
        ++hist.norm_counts[bin_of(v)];
        norm_sum += v;
    }
    hist.conv_mean_std = conv_sum / static_cast<double>(conv_stds.size());
    hist.norm_mean_std = norm_sum / static_cast<double>(norm_stds.size());
    return hist;
}

namespace {

TimingRow aggregate(const std::string& stage, std::vector<double> values) {
    TimingRow row;
    row.stage = stage;
    if (values.empty()) return row;
    double sum = 0.0;
    for (double v : values) {
        sum += v;
        row.max_ms = std::max(row.max_ms, v);
    }
    row.mean_ms = sum / static_cast<double>(values.size());
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    row.median_ms = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    return row;
}

} // namespace

std::vector<TimingRow> timing_report(const std::vector<StageTimings>& timings) {
    if (timings.empty()) throw DataError("timing_report: no queries timed");
    std::vector<double> cf, cr, cl, ff, fr, tot;
    for (const auto& t : timings) {
        cf.push_back(t.coarse_feature_ms);
        cr.push_back(t.coarse_retrieval_ms);
        cl.push_back(t.classifier_ms);
        ff.push_back(t.fine_feature_ms);
        fr.push_back(t.fine_retrieval_ms);
        tot.push_back(t.total());
    }
    return {aggregate("coarse_feature_extraction", cf), aggregate("coarse_retrieval", cr),
            aggregate("classifier", cl),                aggregate("fine_feature_extraction", ff),
            aggregate("fine_retrieval", fr),            aggregate("total", tot)};
}

namespace {

std::ofstream open_report(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write report: " + path.string());
    return out;
}

} // namespace

void write_ap_csv(const MapResult& result, const std::filesystem::path& path) {
    auto out = open_report(path);
    out << "query_id,ap,relevant_count\n";
    out.precision(10);
    for (const auto& q : result.per_query)
        out << q.query_id << "," << q.ap << "," << q.relevant_count << "\n";
}

void write_map_txt(const MapResult& result, Stage stage, const std::filesystem::path& path) {
    auto out = open_report(path);
    out.precision(10);
    out << result.map << "\n";
    out << "stage\t" << stage_name(stage) << "\n";
    out << "queries\t" << result.per_query.size() << "\n";
    out << "excluded_queries\t" << result.excluded_queries << "\n";
}

void write_timing_csv(const std::vector<TimingRow>& rows, const std::filesystem::path& path) {
    auto out = open_report(path);
    out << "stage,mean_ms,median_ms,max_ms\n";
    out.precision(6);
    out << std::fixed;
    for (const auto& r : rows)
        out << r.stage << "," << r.mean_ms << "," << r.median_ms << "," << r.max_ms << "\n";
}

void write_std_hist_csv(const StdHistogram& hist, const std::filesystem::path& path) {
    auto out = open_report(path);
    out << "bin_lower_edge,conv_count,norm_count\n";
    out.precision(10);
    for (std::size_t b = 0; b < hist.conv_counts.size(); ++b)
        out << hist.bin_edges[b] << "," << hist.conv_counts[b] << "," << hist.norm_counts[b] << "\n";
    out << "# mean_std_conv," << hist.conv_mean_std << "\n";
    out << "# mean_std_norm," << hist.norm_mean_std << "\n";
}

} // namespace fgir
