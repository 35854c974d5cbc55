#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptface/geometry.hpp"
#include "promptface/image.hpp"

namespace promptface {

enum class NormMode { InterOcular, InterPupil, Box };

NormMode parse_norm_mode(const std::string& s);  // "ocular" | "pupil" | "box"
std::string to_string(NormMode mode);

/// Index data for NME normalization distances.
struct NormalizationSpec {
    /// Outer eye corners.
    std::optional<std::array<int, 2>> ocular;
    /// Two index sets whose centroids stand in for the pupil centers.
    std::optional<std::array<std::vector<int>, 2>> pupils;
};

struct DatasetDescriptor {
    std::string id;
    int landmark_count = 0;
    NormalizationSpec norm;
    /// Index permutation applied on horizontal flip; empty when the scheme has none.
    std::vector<int> flip_permutation;

    /// Throws DataError when indices are out of range or the flip permutation
    /// is not an involution.
    void validate() const;
};

/// Built-in descriptors: "synth-a", "synth-b", "wflw" (98), "300w" (68).
DatasetDescriptor descriptor_preset(const std::string& preset, std::string id = {});

/// One annotated face in source-image pixel coordinates.
struct AnnotationRecord {
    std::filesystem::path image_path;
    std::string dataset_id;
    Box bbox;            // x0, y0, x1, y1 in source pixels
    LandmarkSet points;  // source pixels
    int line = 0;        // 1-based line in the annotation file
};

/// A face crop ready for the model. Landmarks are crop-relative: (0, 0) is the
/// top-left crop corner and (1, 1) the bottom-right. Valid landmarks outside
/// the crop keep out-of-range values.
struct Sample {
    Image image;
    LandmarkSet landmarks;
    std::string dataset_id;
    std::string source;
    Box source_box;  // crop extent in source pixels, used to express errors in pixels

    double box_width() const { return source_box.width(); }
    double box_height() const { return source_box.height(); }
};

/// Loads the image, crops the record's box and resizes to h x w.
Sample load_sample(const AnnotationRecord& record, int h, int w);

/// Formats: "canonical-json", "wflw-txt", "300w-pts". Counts are checked
/// against the descriptor; failures name the offending line.
std::vector<AnnotationRecord> import_annotations(const std::filesystem::path& path,
                                                 const std::string& format,
                                                 const DatasetDescriptor& descriptor);

/// Line-delimited JSON: {image, dataset_id, bbox, points[[x, y, valid], ...]}.
void export_canonical(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records);

nlohmann::json to_json(const DatasetDescriptor& d);
DatasetDescriptor descriptor_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MeanShape& m);
MeanShape mean_shape_from_json(const nlohmann::json& j);

}  // namespace promptface
