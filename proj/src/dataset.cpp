#include "promptface/dataset.hpp"

#include <utility>

#include "promptface/errors.hpp"

namespace promptface {

namespace {

std::vector<int> permutation_from_pairs(int n, std::initializer_list<std::pair<int, int>> pairs) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (auto [a, b] : pairs) {
        perm[a] = b;
        perm[b] = a;
    }
    return perm;
}

std::vector<int> range(int from, int to) {
    std::vector<int> v;
    for (int i = from; i < to; ++i) v.push_back(i);
    return v;
}

DatasetDescriptor synth_a() {
    DatasetDescriptor d;
    d.id = "synth-a";
    d.landmark_count = 20;
    d.norm.ocular = std::array<int, 2>{8, 10};
    d.norm.pupils = std::array<std::vector<int>, 2>{range(6, 10), range(10, 14)};
    d.flip_permutation = permutation_from_pairs(
        20, {{0, 3}, {1, 2}, {4, 5}, {6, 12}, {7, 11}, {8, 10}, {9, 13}, {14, 18}, {15, 17}});
    return d;
}

DatasetDescriptor synth_b() {
    DatasetDescriptor d;
    d.id = "synth-b";
    d.landmark_count = 12;
    d.norm.ocular = std::array<int, 2>{5, 6};
    d.norm.pupils = std::array<std::vector<int>, 2>{range(4, 6), range(6, 8)};
    return d;  // the shifted sampling is not mirror symmetric
}

DatasetDescriptor wflw() {
    DatasetDescriptor d;
    d.id = "wflw";
    d.landmark_count = 98;
    d.norm.ocular = std::array<int, 2>{60, 72};
    d.norm.pupils = std::array<std::vector<int>, 2>{std::vector<int>{96}, std::vector<int>{97}};
    d.flip_permutation = permutation_from_pairs(
        98, {{0, 32},  {1, 31},  {2, 30},  {3, 29},  {4, 28},  {5, 27},  {6, 26},  {7, 25},
             {8, 24},  {9, 23},  {10, 22}, {11, 21}, {12, 20}, {13, 19}, {14, 18}, {15, 17},
             {33, 46}, {34, 45}, {35, 44}, {36, 43}, {37, 42}, {38, 50}, {39, 49}, {40, 48},
             {41, 47}, {60, 72}, {61, 71}, {62, 70}, {63, 69}, {64, 68}, {65, 75}, {66, 74},
             {67, 73}, {55, 59}, {56, 58}, {76, 82}, {77, 81}, {78, 80}, {87, 83}, {86, 84},
             {88, 92}, {89, 91}, {95, 93}, {96, 97}});
    return d;
}

DatasetDescriptor w300() {
    DatasetDescriptor d;
    d.id = "300w";
    d.landmark_count = 68;
    d.norm.ocular = std::array<int, 2>{36, 45};
    d.norm.pupils = std::array<std::vector<int>, 2>{range(36, 42), range(42, 48)};
    d.flip_permutation = permutation_from_pairs(
        68, {{0, 16},  {1, 15},  {2, 14},  {3, 13},  {4, 12},  {5, 11},  {6, 10},  {7, 9},
             {17, 26}, {18, 25}, {19, 24}, {20, 23}, {21, 22}, {31, 35}, {32, 34}, {36, 45},
             {37, 44}, {38, 43}, {39, 42}, {40, 47}, {41, 46}, {48, 54}, {49, 53}, {50, 52},
             {55, 59}, {56, 58}, {60, 64}, {61, 63}, {65, 67}});
    return d;
}

}  // namespace

NormMode parse_norm_mode(const std::string& s) {
    if (s == "ocular" || s == "inter-ocular") return NormMode::InterOcular;
    if (s == "pupil" || s == "inter-pupil") return NormMode::InterPupil;
    if (s == "box") return NormMode::Box;
    throw UsageError("unknown normalization mode '" + s + "' (expected ocular, pupil or box)");
}

std::string to_string(NormMode mode) {
    switch (mode) {
        case NormMode::InterOcular: return "inter-ocular";
        case NormMode::InterPupil: return "inter-pupil";
        case NormMode::Box: return "box";
    }
    return "unknown";
}

void DatasetDescriptor::validate() const {
    if (id.empty()) throw DataError("dataset descriptor has no id");
    if (landmark_count < 1) throw DataError("dataset '" + id + "' has no landmarks");
    auto check = [&](int i) {
        if (i < 0 || i >= landmark_count) {
            throw DataError("dataset '" + id + "' normalization index " + std::to_string(i) +
                            " out of range");
        }
    };
    if (norm.ocular) {
        check((*norm.ocular)[0]);
        check((*norm.ocular)[1]);
    }
    if (norm.pupils) {
        for (const auto& set : *norm.pupils) {
            if (set.empty()) throw DataError("dataset '" + id + "' has an empty pupil index set");
            for (int i : set) check(i);
        }
    }
    if (!flip_permutation.empty()) {
        if (static_cast<int>(flip_permutation.size()) != landmark_count) {
            throw DataError("dataset '" + id + "' flip permutation has the wrong length");
        }
        for (int i = 0; i < landmark_count; ++i) {
            const int j = flip_permutation[i];
            if (j < 0 || j >= landmark_count || flip_permutation[j] != i) {
                throw DataError("dataset '" + id + "' flip permutation is not an involution");
            }
        }
    }
}

DatasetDescriptor descriptor_preset(const std::string& preset, std::string id) {
    DatasetDescriptor d;
    if (preset == "synth-a") d = synth_a();
    else if (preset == "synth-b") d = synth_b();
    else if (preset == "wflw") d = wflw();
    else if (preset == "300w") d = w300();
    else throw UsageError("unknown dataset preset '" + preset + "'");
    if (!id.empty()) d.id = std::move(id);
    return d;
}

Sample load_sample(const AnnotationRecord& record, int h, int w) {
    const Image full = read_image(record.image_path);
    Sample s;
    s.image = crop_resize(full, record.bbox, h, w);
    s.dataset_id = record.dataset_id;
    s.source = record.image_path.string();
    s.source_box = record.bbox;
    s.landmarks = record.points;
    for (std::size_t i = 0; i < s.landmarks.size(); ++i) {
        if (!s.landmarks.valid[i]) continue;
        auto& p = s.landmarks.coords[i];
        p = {(p.x - record.bbox.x0) / record.bbox.width(), (p.y - record.bbox.y0) / record.bbox.height()};
    }
    return s;
}

nlohmann::json to_json(const DatasetDescriptor& d) {
    nlohmann::json j;
    j["id"] = d.id;
    j["landmark_count"] = d.landmark_count;
    if (d.norm.ocular) j["ocular"] = *d.norm.ocular;
    if (d.norm.pupils) j["pupils"] = *d.norm.pupils;
    j["flip_permutation"] = d.flip_permutation;
    return j;
}

DatasetDescriptor descriptor_from_json(const nlohmann::json& j) {
    DatasetDescriptor d;
    try {
        if (j.contains("preset")) {
            d = descriptor_preset(j.at("preset").get<std::string>(), j.value("id", std::string{}));
        } else {
            d.id = j.at("id").get<std::string>();
            d.landmark_count = j.at("landmark_count").get<int>();
            if (j.contains("ocular")) d.norm.ocular = j.at("ocular").get<std::array<int, 2>>();
            if (j.contains("pupils")) {
                d.norm.pupils = j.at("pupils").get<std::array<std::vector<int>, 2>>();
            }
            d.flip_permutation = j.value("flip_permutation", std::vector<int>{});
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed dataset descriptor: ") + e.what());
    }
    d.validate();
    return d;
}

nlohmann::json to_json(const MeanShape& m) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : m.points) pts.push_back({p.x, p.y});
    return {{"dataset_id", m.dataset_id}, {"points", pts}};
}

MeanShape mean_shape_from_json(const nlohmann::json& j) {
    MeanShape m;
    try {
        m.dataset_id = j.at("dataset_id").get<std::string>();
        for (const auto& p : j.at("points")) m.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed mean shape: ") + e.what());
    }
    return m;
}

}  // namespace promptface
