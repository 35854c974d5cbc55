#include "promptface/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "promptface/errors.hpp"

namespace promptface {

namespace {

Point2 centroid(const LandmarkSet& s, const std::vector<int>& indices) {
    Point2 c{0.0, 0.0};
    for (int i : indices) {
        if (i < 0 || i >= static_cast<int>(s.size()) || !s.valid[i]) {
            throw DataError("pupil landmark " + std::to_string(i) + " is missing");
        }
        c.x += s.coords[i].x;
        c.y += s.coords[i].y;
    }
    const double n = static_cast<double>(indices.size());
    return {c.x / n, c.y / n};
}

void check_alpha(double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw UsageError("threshold alpha must be positive");
}

}  // namespace

double normalization_distance(const LandmarkSet& target, const NormalizationSpec& spec, NormMode mode,
                              const Box& box) {
    double d = 0.0;
    switch (mode) {
        case NormMode::InterOcular: {
            if (!spec.ocular) throw DataError("descriptor has no inter-ocular pair");
            const auto [a, b] = *spec.ocular;
            if (a >= static_cast<int>(target.size()) || b >= static_cast<int>(target.size()) || !target.valid[a] ||
                !target.valid[b]) {
                throw DataError("inter-ocular landmark missing");
            }
            d = distance(target.coords[a], target.coords[b]);
            break;
        }
        case NormMode::InterPupil: {
            if (!spec.pupils || (*spec.pupils)[0].empty() || (*spec.pupils)[1].empty()) {
                throw DataError("descriptor has no pupil index sets");
            }
            d = distance(centroid(target, (*spec.pupils)[0]), centroid(target, (*spec.pupils)[1]));
            break;
        }
        case NormMode::Box:
            d = std::sqrt(box.width() * box.height());
            break;
    }
    if (!(d > 0.0) || !std::isfinite(d)) throw DataError("normalization distance is zero or not finite");
    return d;
}

double sample_nme(std::span<const Point2> predicted, const LandmarkSet& target, double d_norm) {
    if (predicted.size() != target.size()) {
        throw DataError("prediction has " + std::to_string(predicted.size()) + " points, target " +
                        std::to_string(target.size()));
    }
    if (!(d_norm > 0.0) || !std::isfinite(d_norm)) throw DataError("normalization distance is zero or not finite");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (!target.valid[i]) continue;
        sum += distance(predicted[i], target.coords[i]);
        ++n;
    }
    if (n == 0) throw DataError("target has no valid landmarks");
    return sum / static_cast<double>(n) / d_norm;
}

double failure_rate(std::span<const double> nmes, double alpha) {
    check_alpha(alpha);
    if (nmes.empty()) throw UsageError("failure rate of an empty list");
    const auto failures = std::count_if(nmes.begin(), nmes.end(), [&](double e) { return e > alpha; });
    return 100.0 * static_cast<double>(failures) / static_cast<double>(nmes.size());
}

CEDCurve::CEDCurve(std::span<const double> nmes) : sorted_(nmes.begin(), nmes.end()) {
    if (sorted_.empty()) throw UsageError("CED of an empty list");
    for (double e : sorted_) {
        if (!std::isfinite(e) || e < 0.0) throw DataError("NME values must be finite and non-negative");
    }
    std::sort(sorted_.begin(), sorted_.end());
}

double CEDCurve::operator()(double eps) const {
    const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), eps);
    return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

std::vector<std::pair<double, double>> CEDCurve::breakpoints() const {
    std::vector<std::pair<double, double>> out;
    const double n = static_cast<double>(sorted_.size());
    for (std::size_t i = 0; i < sorted_.size(); ++i) {
        if (i + 1 < sorted_.size() && sorted_[i + 1] == sorted_[i]) continue;
        out.emplace_back(sorted_[i], static_cast<double>(i + 1) / n);
    }
    return out;
}

double auc(const CEDCurve& curve, double alpha) {
    check_alpha(alpha);
    double area = 0.0;
    for (double e : curve.sorted()) {
        if (e >= alpha) break;
        area += 1.0 - e / alpha;
    }
    return area / static_cast<double>(curve.size());
}

MetricReport make_report(std::string dataset_id, NormMode norm, std::vector<std::string> sample_ids,
                         std::vector<double> per_sample, std::span<const double> alphas) {
    if (per_sample.empty()) throw DataError("no samples to report");
    if (sample_ids.size() != per_sample.size()) throw UsageError("sample ids and NME list differ in length");
    MetricReport r;
    r.norm = norm;
    r.dataset_id = std::move(dataset_id);
    r.sample_ids = std::move(sample_ids);
    r.per_sample = std::move(per_sample);
    double sum = 0.0;
    for (double e : r.per_sample) sum += e;
    r.nme_percent = 100.0 * sum / static_cast<double>(r.per_sample.size());
    const CEDCurve curve(r.per_sample);
    for (double a : alphas) {
        r.alphas.push_back(a);
        r.fr_percent.push_back(failure_rate(r.per_sample, a));
        r.auc.push_back(auc(curve, a));
    }
    return r;
}

nlohmann::json to_json(const MetricReport& r) {
    nlohmann::json thresholds = nlohmann::json::array();
    for (std::size_t i = 0; i < r.alphas.size(); ++i) {
        thresholds.push_back({{"alpha", r.alphas[i]}, {"fr_percent", r.fr_percent[i]}, {"auc", r.auc[i]}});
    }
    return {{"dataset_id", r.dataset_id},
            {"normalization", to_string(r.norm)},
            {"sample_count", r.count()},
            {"nme_percent", r.nme_percent},
            {"thresholds", thresholds},
            {"samples", r.sample_ids},
            {"per_sample_nme", r.per_sample}};
}

MetricReport report_from_json(const nlohmann::json& j) {
    try {
        MetricReport r;
        r.dataset_id = j.at("dataset_id").get<std::string>();
        r.norm = parse_norm_mode(j.at("normalization").get<std::string>());
        r.nme_percent = j.at("nme_percent").get<double>();
        r.sample_ids = j.at("samples").get<std::vector<std::string>>();
        r.per_sample = j.at("per_sample_nme").get<std::vector<double>>();
        for (const auto& t : j.at("thresholds")) {
            r.alphas.push_back(t.at("alpha").get<double>());
            r.fr_percent.push_back(t.at("fr_percent").get<double>());
            r.auc.push_back(t.at("auc").get<double>());
        }
        if (r.sample_ids.size() != r.per_sample.size()) throw DataError("report sample lists differ in length");
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed metric report: ") + e.what());
    }
}

void write_report(const std::filesystem::path& path, const MetricReport& r) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_json(r).dump(2) << "\n";
}

MetricReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return report_from_json(j);
}

void write_ced_csv(const std::filesystem::path& path, const CEDCurve& curve) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out.precision(17);
    out << "nme,fraction\n";
    for (const auto& [e, f] : curve.breakpoints()) out << e << "," << f << "\n";
}

std::vector<std::pair<double, double>> read_ced_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    std::vector<std::pair<double, double>> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || (lineno == 1 && line.rfind("nme", 0) == 0)) continue;
        std::istringstream ss(line);
        double e = 0.0, f = 0.0;
        char comma = 0;
        if (!(ss >> e >> comma >> f) || comma != ',') {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 'nme,fraction'");
        }
        out.emplace_back(e, f);
    }
    return out;
}

}  // namespace promptface
