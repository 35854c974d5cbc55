#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "promptface/dataset.hpp"
#include "promptface/geometry.hpp"

namespace promptface {

/// Normalization distance of one labeled face, in the units of `target`.
/// Box mode uses sqrt(W * H) of `box`. Throws DataError when the descriptor
/// lacks the indices for `mode`, a needed landmark is invalid, or the distance
/// is zero or not finite.
double normalization_distance(const LandmarkSet& target, const NormalizationSpec& spec, NormMode mode,
                              const Box& box);

/// Mean L2 error over valid landmarks divided by d_norm, as a fraction
/// (0.03 means 3%).
double sample_nme(std::span<const Point2> predicted, const LandmarkSet& target, double d_norm);

/// Percentage of samples whose NME is strictly above alpha.
double failure_rate(std::span<const double> nmes, double alpha);

/// Cumulative error distribution: f(e) = fraction of samples with NME <= e.
class CEDCurve {
public:
    explicit CEDCurve(std::span<const double> nmes);

    double operator()(double eps) const;
    const std::vector<double>& sorted() const { return sorted_; }
    std::size_t size() const { return sorted_.size(); }

    /// (e, f(e)) at every distinct sample value.
    std::vector<std::pair<double, double>> breakpoints() const;

private:
    std::vector<double> sorted_;
};

/// Integral of f over [0, alpha] divided by alpha.
double auc(const CEDCurve& curve, double alpha);

struct MetricReport {
    NormMode norm = NormMode::InterOcular;
    std::string dataset_id;
    std::vector<std::string> sample_ids;
    std::vector<double> per_sample;  // fractions
    double nme_percent = 0.0;
    std::vector<double> alphas;
    std::vector<double> fr_percent;
    std::vector<double> auc;

    std::size_t count() const { return per_sample.size(); }
};

MetricReport make_report(std::string dataset_id, NormMode norm, std::vector<std::string> sample_ids,
                         std::vector<double> per_sample, std::span<const double> alphas);

nlohmann::json to_json(const MetricReport& r);
MetricReport report_from_json(const nlohmann::json& j);

void write_report(const std::filesystem::path& path, const MetricReport& r);
MetricReport read_report(const std::filesystem::path& path);

/// Two-column CSV "nme,fraction" at the curve's breakpoints.
void write_ced_csv(const std::filesystem::path& path, const CEDCurve& curve);
std::vector<std::pair<double, double>> read_ced_csv(const std::filesystem::path& path);

}  // namespace promptface
