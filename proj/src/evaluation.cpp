#include "caps/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

using nlohmann::json;

namespace caps {

namespace {

// Cubic in u = log10(bitrate) - center. Centering keeps the normal
// equations well conditioned over typical 1-2 decade spans.
struct FittedCubic {
    double center = 0.0;
    std::array<double, 4> c{};

    double integral(double lo, double hi) const {
        auto antiderivative = [&](double x) {
            const double u = x - center;
            double acc = 0.0;
            double power = u;
            for (int k = 0; k < 4; ++k) {
                acc += c[static_cast<size_t>(k)] * power / (k + 1);
                power *= u;
            }
            return acc;
        };
        return antiderivative(hi) - antiderivative(lo);
    }
};

FittedCubic fit_cubic(const std::vector<RdPoint>& points) {
    const size_t n = points.size();
    std::vector<double> x(n);
    std::vector<double> y(n);
    double center = 0.0;
    for (size_t i = 0; i < n; ++i) {
        x[i] = std::log10(points[i].bitrate_kbps);
        y[i] = points[i].quality;
        center += x[i];
    }
    center /= static_cast<double>(n);

    // Normal equations for the least-squares cubic (an interpolation when
    // n == 4).
    double a[4][5] = {};
    for (size_t i = 0; i < n; ++i) {
        const double u = x[i] - center;
        std::array<double, 7> powers{};
        powers[0] = 1.0;
        for (int k = 1; k < 7; ++k)
            powers[static_cast<size_t>(k)] = powers[static_cast<size_t>(k - 1)] * u;
        for (int j = 0; j < 4; ++j) {
            for (int k = 0; k < 4; ++k)
                a[j][k] += powers[static_cast<size_t>(j + k)];
            a[j][4] += powers[static_cast<size_t>(j)] * y[i];
        }
    }

    // Gaussian elimination with partial pivoting.
    for (int col = 0; col < 4; ++col) {
        int pivot = col;
        for (int row = col + 1; row < 4; ++row)
            if (std::abs(a[row][col]) > std::abs(a[pivot][col]))
                pivot = row;
        if (std::abs(a[pivot][col]) < 1e-14)
            throw std::runtime_error("bd_quality: degenerate rate-quality curve");
        if (pivot != col)
            for (int k = col; k < 5; ++k)
                std::swap(a[pivot][k], a[col][k]);
        for (int row = col + 1; row < 4; ++row) {
            const double factor = a[row][col] / a[col][col];
            for (int k = col; k < 5; ++k)
                a[row][k] -= factor * a[col][k];
        }
    }
    FittedCubic fit;
    fit.center = center;
    for (int row = 3; row >= 0; --row) {
        double acc = a[row][4];
        for (int k = row + 1; k < 4; ++k)
            acc -= a[row][k] * fit.c[static_cast<size_t>(k)];
        fit.c[static_cast<size_t>(row)] = acc / a[row][row];
    }
    return fit;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ','))
        fields.push_back(field);
    if (!line.empty() && line.back() == ',')
        fields.push_back("");
    return fields;
}

std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

void check_vmaf_range(const std::string& key, double score) {
    if (!(score >= 0.0 && score <= 100.0))
        throw std::runtime_error("vmaf: score " + std::to_string(score) + " for '" + key +
                                 "' outside [0, 100]");
}

} // namespace

RdCurve::RdCurve(std::vector<RdPoint> points) : points_(std::move(points)) {
    if (points_.size() < 4)
        throw std::invalid_argument("rd curve: need at least 4 points for a cubic fit, got " +
                                    std::to_string(points_.size()));
    for (size_t i = 0; i < points_.size(); ++i) {
        if (!(points_[i].bitrate_kbps > 0.0) || !std::isfinite(points_[i].bitrate_kbps) ||
            !std::isfinite(points_[i].quality))
            throw std::invalid_argument("rd curve: invalid point at index " + std::to_string(i));
        if (i > 0 && !(points_[i].bitrate_kbps > points_[i - 1].bitrate_kbps))
            throw std::invalid_argument("rd curve: bitrates must be strictly increasing");
    }
}

double RdCurve::log_min() const { return std::log10(points_.front().bitrate_kbps); }
double RdCurve::log_max() const { return std::log10(points_.back().bitrate_kbps); }

double bd_quality(const RdCurve& reference, const RdCurve& test) {
    const double lo = std::max(reference.log_min(), test.log_min());
    const double hi = std::min(reference.log_max(), test.log_max());
    if (!(hi > lo))
        throw std::runtime_error("bd_quality: curves have no overlapping bitrate range");

    const FittedCubic ref_fit = fit_cubic(reference.points());
    const FittedCubic test_fit = fit_cubic(test.points());
    return (test_fit.integral(lo, hi) - ref_fit.integral(lo, hi)) / (hi - lo);
}

PsnrResult psnr(const std::vector<LumaFrame>& reference, const std::vector<LumaFrame>& distorted,
                const PsnrOptions& options) {
    if (reference.empty() || reference.size() != distorted.size())
        throw std::invalid_argument("psnr: frame counts differ or are empty");
    const double peak = static_cast<double>((1 << options.bit_depth) - 1);

    PsnrResult result;
    result.frames = static_cast<int>(reference.size());
    double sum_db = 0.0;
    for (size_t i = 0; i < reference.size(); ++i) {
        const LumaFrame& ref = reference[i];
        const LumaFrame& dist = distorted[i];
        if (ref.width != dist.width || ref.height != dist.height)
            throw std::invalid_argument("psnr: frame " + std::to_string(i) +
                                        " dimensions differ");
        const size_t count = ref.samples.size();
        double se = 0.0;
        for (size_t p = 0; p < count; ++p) {
            const double d = static_cast<double>(ref.samples[p]) - distorted[i].samples[p];
            se += d * d;
        }
        const double mse = se / static_cast<double>(count);
        double db;
        if (mse == 0.0) {
            db = options.ceiling_db;
            ++result.lossless_frames;
            result.capped = true;
        } else {
            db = std::min(10.0 * std::log10(peak * peak / mse), options.ceiling_db);
        }
        sum_db += db;
    }
    result.db = sum_db / static_cast<double>(result.frames);
    return result;
}

std::map<std::string, double> ingest_vmaf(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("vmaf: cannot open " + path.string());

    std::map<std::string, double> scores;
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });

    if (ext == ".json") {
        json doc;
        try {
            in >> doc;
        } catch (const json::exception& e) {
            throw std::runtime_error("vmaf: " + path.string() + " is not valid JSON: " + e.what());
        }
        if (doc.contains("pooled_metrics")) {
            // libvmaf report for a single comparison; key it by file stem.
            const json& pooled = doc.at("pooled_metrics");
            if (!pooled.contains("vmaf") || !pooled.at("vmaf").contains("mean"))
                throw std::runtime_error("vmaf: " + path.string() +
                                         " has no pooled_metrics.vmaf.mean");
            const double score = pooled.at("vmaf").at("mean").get<double>();
            check_vmaf_range(path.stem().string(), score);
            scores[path.stem().string()] = score;
            return scores;
        }
        const json& table = doc.contains("segments") ? doc.at("segments") : doc;
        if (!table.is_object())
            throw std::runtime_error("vmaf: " + path.string() + " is not a score table");
        for (auto it = table.begin(); it != table.end(); ++it) {
            if (!it.value().is_number())
                throw std::runtime_error("vmaf: score for '" + it.key() + "' is not a number");
            const double score = it.value().get<double>();
            check_vmaf_range(it.key(), score);
            scores[it.key()] = score;
        }
        return scores;
    }

    // CSV of `id,score`; a header row is tolerated.
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 2)
            throw std::runtime_error("vmaf: " + path.string() + " line " +
                                     std::to_string(line_no) + ": expected `id,score`");
        try {
            const double score = std::stod(fields[1]);
            check_vmaf_range(fields[0], score);
            scores[fields[0]] = score;
        } catch (const std::invalid_argument&) {
            if (line_no == 1)
                continue; // header
            throw std::runtime_error("vmaf: " + path.string() + " line " +
                                     std::to_string(line_no) + ": not a number");
        }
    }
    return scores;
}

void svg_line_chart(const std::filesystem::path& path, const std::string& title,
                    const std::string& x_label, const std::vector<double>& x,
                    const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    if (x.empty() || series.empty())
        throw std::invalid_argument("svg_line_chart: nothing to plot");
    for (const auto& [name, values] : series)
        if (values.size() != x.size())
            throw std::invalid_argument("svg_line_chart: series '" + name + "' length mismatch");

    const double width = 720.0, height = 420.0;
    const double ml = 60.0, mr = 160.0, mt = 40.0, mb = 50.0;
    const double plot_w = width - ml - mr;
    const double plot_h = height - mt - mb;

    double x_min = x.front(), x_max = x.front();
    for (double v : x) {
        x_min = std::min(x_min, v);
        x_max = std::max(x_max, v);
    }
    double y_min = series.front().second.front(), y_max = y_min;
    for (const auto& [name, values] : series)
        for (double v : values) {
            y_min = std::min(y_min, v);
            y_max = std::max(y_max, v);
        }
    if (x_max == x_min)
        x_max = x_min + 1.0;
    if (y_max == y_min)
        y_max = y_min + 1.0;
    const double y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    const auto sx = [&](double v) { return ml + (v - x_min) / (x_max - x_min) * plot_w; };
    const auto sy = [&](double v) { return mt + (1.0 - (v - y_min) / (y_max - y_min)) * plot_h; };

    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};

    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("svg_line_chart: cannot write " + path.string());
    out << std::fixed << std::setprecision(2);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
        << title << "</text>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt + plot_h << "\" x2=\"" << ml + plot_w
        << "\" y2=\"" << mt + plot_h << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << mt + plot_h << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << ml + plot_w / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << mt + plot_h << "\" text-anchor=\"end\" "
        << "font-size=\"11\">" << y_min + y_pad << "</text>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << mt + 10 << "\" text-anchor=\"end\" "
        << "font-size=\"11\">" << y_max - y_pad << "</text>\n";

    size_t color_index = 0;
    for (const auto& [name, values] : series) {
        const char* color = kColors[color_index % 5];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (size_t i = 0; i < x.size(); ++i)
            out << sx(x[i]) << "," << sy(values[i]) << " ";
        out << "\"/>\n";
        for (size_t i = 0; i < x.size(); ++i)
            out << "<circle cx=\"" << sx(x[i]) << "\" cy=\"" << sy(values[i])
                << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
        out << "<text x=\"" << ml + plot_w + 12 << "\" y=\"" << mt + 16 + 18 * color_index
            << "\" font-size=\"12\" fill=\"" << color << "\">" << name << "</text>\n";
        ++color_index;
    }
    out << "</svg>\n";
}

std::vector<DecisionRow> load_decisions_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("decisions: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("decisions: empty file " + path.string());

    std::vector<DecisionRow> rows;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        const auto f = split_csv_line(line);
        if (f.size() != 14)
            throw std::runtime_error("decisions: " + path.string() + " line " +
                                     std::to_string(line_no) + ": expected 14 fields, got " +
                                     std::to_string(f.size()));
        DecisionRow row;
        row.segment_id = f[0];
        row.rung = std::stoi(f[1]);
        row.width = std::stoi(f[2]);
        row.bitrate_kbps = std::stod(f[3]);
        row.preset = std::stoi(f[4]);
        if (!f[5].empty())
            row.predicted_seconds = std::stod(f[5]);
        if (!f[6].empty())
            row.deadline_met = f[6] == "1";
        row.measured_seconds = std::stod(f[7]);
        row.idle_seconds = std::stod(f[8]);
        row.violation = f[9] == "1";
        row.achieved_kbps = std::stod(f[10]);
        if (!f[11].empty())
            row.psnr_db = std::stod(f[11]);
        if (!f[12].empty())
            row.vmaf = std::stod(f[12]);
        row.encode_ok = f[13] == "1";
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

struct SegmentRows {
    std::vector<const DecisionRow*> rows; // sorted by rung
};

std::map<std::string, SegmentRows> group_by_segment(const std::vector<DecisionRow>& rows) {
    std::map<std::string, SegmentRows> out;
    for (const DecisionRow& row : rows)
        out[row.segment_id].rows.push_back(&row);
    for (auto& [id, group] : out)
        std::sort(group.rows.begin(), group.rows.end(),
                  [](const DecisionRow* a, const DecisionRow* b) { return a->rung < b->rung; });
    return out;
}

std::optional<RdCurve> curve_from_rows(const std::vector<const DecisionRow*>& rows,
                                       bool use_vmaf,
                                       const std::map<std::string, double>* overrides,
                                       std::string* why) {
    std::vector<RdPoint> points;
    for (const DecisionRow* row : rows) {
        std::optional<double> quality = use_vmaf ? row->vmaf : row->psnr_db;
        if (overrides && use_vmaf) {
            const std::string key = row->segment_id + "/" + std::to_string(row->rung);
            auto it = overrides->find(key);
            if (it != overrides->end())
                quality = it->second;
        }
        if (!quality) {
            *why = "missing " + std::string(use_vmaf ? "vmaf" : "psnr") + " for rung " +
                   std::to_string(row->rung);
            return std::nullopt;
        }
        points.push_back(RdPoint{row->achieved_kbps, *quality});
    }
    std::sort(points.begin(), points.end(),
              [](const RdPoint& a, const RdPoint& b) { return a.bitrate_kbps < b.bitrate_kbps; });
    for (size_t i = 1; i < points.size(); ++i) {
        if (points[i].bitrate_kbps == points[i - 1].bitrate_kbps) {
            *why = "duplicate achieved bitrate " + std::to_string(points[i].bitrate_kbps);
            return std::nullopt;
        }
    }
    if (points.size() < 4) {
        *why = "fewer than 4 rate-quality points";
        return std::nullopt;
    }
    return RdCurve(std::move(points));
}

} // namespace

EvaluateResult evaluate_runs(const std::filesystem::path& reference_dir,
                             const std::filesystem::path& test_dir,
                             const std::filesystem::path& output_dir,
                             const EvaluateOptions& options) {
    const auto reference_rows = load_decisions_csv(reference_dir / "decisions.csv");
    const auto test_rows = load_decisions_csv(test_dir / "decisions.csv");
    auto reference_groups = group_by_segment(reference_rows);
    auto test_groups = group_by_segment(test_rows);

    std::map<std::string, double> vmaf_ref_overrides;
    std::map<std::string, double> vmaf_test_overrides;
    if (!options.vmaf_baseline.empty())
        vmaf_ref_overrides = ingest_vmaf(options.vmaf_baseline);
    if (!options.vmaf_test.empty())
        vmaf_test_overrides = ingest_vmaf(options.vmaf_test);

    EvaluateResult result;
    double sum_psnr = 0.0;
    int n_psnr = 0;
    double sum_vmaf = 0.0;
    int n_vmaf = 0;

    for (const auto& [segment_id, test_group] : test_groups) {
        auto ref_it = reference_groups.find(segment_id);
        if (ref_it == reference_groups.end()) {
            result.notes.push_back(segment_id + ": missing from reference run");
            continue;
        }
        SegmentBd bd;
        bd.segment_id = segment_id;

        std::string why;
        auto ref_psnr = curve_from_rows(ref_it->second.rows, false, nullptr, &why);
        auto test_psnr = curve_from_rows(test_group.rows, false, nullptr, &why);
        if (ref_psnr && test_psnr) {
            bd.bd_psnr_db = bd_quality(*ref_psnr, *test_psnr);
            sum_psnr += *bd.bd_psnr_db;
            ++n_psnr;
        } else {
            result.notes.push_back(segment_id + ": bd-psnr skipped (" + why + ")");
        }

        auto ref_vmaf = curve_from_rows(ref_it->second.rows, true, &vmaf_ref_overrides, &why);
        auto test_vmaf = curve_from_rows(test_group.rows, true, &vmaf_test_overrides, &why);
        if (ref_vmaf && test_vmaf) {
            bd.bd_vmaf = bd_quality(*ref_vmaf, *test_vmaf);
            sum_vmaf += *bd.bd_vmaf;
            ++n_vmaf;
        } else {
            result.notes.push_back(segment_id + ": bd-vmaf skipped (" + why + ")");
        }
        result.segments.push_back(std::move(bd));
    }

    if (n_psnr > 0)
        result.mean_bd_psnr_db = sum_psnr / n_psnr;
    if (n_vmaf > 0)
        result.mean_bd_vmaf = sum_vmaf / n_vmaf;

    std::filesystem::create_directories(output_dir);
    {
        std::ofstream out(output_dir / "bd_report.csv");
        out << "segment_id,bd_psnr_db,bd_vmaf\n";
        for (const SegmentBd& bd : result.segments) {
            out << bd.segment_id << ',';
            if (bd.bd_psnr_db)
                out << format_double(*bd.bd_psnr_db);
            out << ',';
            if (bd.bd_vmaf)
                out << format_double(*bd.bd_vmaf);
            out << "\n";
        }
        out << "mean,";
        if (result.mean_bd_psnr_db)
            out << format_double(*result.mean_bd_psnr_db);
        out << ',';
        if (result.mean_bd_vmaf)
            out << format_double(*result.mean_bd_vmaf);
        out << "\n";
    }

    // Per-rung means across segments for both runs, Figs. 6a-6c style.
    struct RungAgg {
        double bitrate = 0.0;
        double ref_time = 0.0, test_time = 0.0;
        double ref_psnr = 0.0, test_psnr = 0.0;
        double ref_vmaf = 0.0, test_vmaf = 0.0;
        double test_preset = 0.0;
        int ref_n = 0, test_n = 0;
        int ref_q = 0, test_q = 0;
    };
    std::map<int, RungAgg> per_rung;
    for (const DecisionRow& row : reference_rows) {
        RungAgg& agg = per_rung[row.rung];
        agg.bitrate = row.bitrate_kbps;
        agg.ref_time += row.measured_seconds;
        ++agg.ref_n;
        if (row.psnr_db) {
            agg.ref_psnr += *row.psnr_db;
            agg.ref_vmaf += row.vmaf.value_or(0.0);
            ++agg.ref_q;
        }
    }
    for (const DecisionRow& row : test_rows) {
        RungAgg& agg = per_rung[row.rung];
        agg.bitrate = row.bitrate_kbps;
        agg.test_time += row.measured_seconds;
        agg.test_preset += row.preset;
        ++agg.test_n;
        if (row.psnr_db) {
            agg.test_psnr += *row.psnr_db;
            agg.test_vmaf += row.vmaf.value_or(0.0);
            ++agg.test_q;
        }
    }

    std::vector<double> rung_index;
    std::vector<double> ref_time, test_time, ref_psnr_v, test_psnr_v, ref_vmaf_v, test_vmaf_v,
        test_preset;
    {
        std::ofstream out(output_dir / "rung_metrics.csv");
        out << "rung,bitrate_kbps,reference_mean_seconds,test_mean_seconds,reference_mean_psnr,"
               "test_mean_psnr,reference_mean_vmaf,test_mean_vmaf,test_mean_preset\n";
        for (auto& [rung, agg] : per_rung) {
            const double rt = agg.ref_n ? agg.ref_time / agg.ref_n : 0.0;
            const double tt = agg.test_n ? agg.test_time / agg.test_n : 0.0;
            const double rp = agg.ref_q ? agg.ref_psnr / agg.ref_q : 0.0;
            const double tp = agg.test_q ? agg.test_psnr / agg.test_q : 0.0;
            const double rv = agg.ref_q ? agg.ref_vmaf / agg.ref_q : 0.0;
            const double tv = agg.test_q ? agg.test_vmaf / agg.test_q : 0.0;
            const double pr = agg.test_n ? agg.test_preset / agg.test_n : 0.0;
            out << rung << ',' << format_double(agg.bitrate) << ',' << format_double(rt) << ','
                << format_double(tt) << ',' << format_double(rp) << ',' << format_double(tp)
                << ',' << format_double(rv) << ',' << format_double(tv) << ','
                << format_double(pr) << "\n";
            rung_index.push_back(rung);
            ref_time.push_back(rt);
            test_time.push_back(tt);
            ref_psnr_v.push_back(rp);
            test_psnr_v.push_back(tp);
            ref_vmaf_v.push_back(rv);
            test_vmaf_v.push_back(tv);
            test_preset.push_back(pr);
        }
    }

    if (!rung_index.empty()) {
        svg_line_chart(output_dir / "time_per_rung.svg", "Mean encoding time per representation",
                       "representation", rung_index,
                       {{"reference", ref_time}, {"test", test_time}});
        svg_line_chart(output_dir / "psnr_per_rung.svg", "Mean PSNR per representation",
                       "representation", rung_index,
                       {{"reference", ref_psnr_v}, {"test", test_psnr_v}});
        svg_line_chart(output_dir / "vmaf_per_rung.svg", "Mean VMAF per representation",
                       "representation", rung_index,
                       {{"reference", ref_vmaf_v}, {"test", test_vmaf_v}});
        svg_line_chart(output_dir / "preset_per_rung.svg", "Mean selected preset per representation",
                       "representation", rung_index, {{"test", test_preset}});
    }
    return result;
}

} // namespace caps
