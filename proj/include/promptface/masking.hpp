#pragma once

#include <string>
#include <vector>

#include "promptface/dataset.hpp"
#include "promptface/rng.hpp"

namespace promptface {

/// Anchor indices kept for one sample in one iteration.
struct MaskPlan {
    std::string dataset_id;
    std::vector<int> indices;  // sorted, unique, < N_D
};

/// round((1 - ratio) * landmark_count), ties to even; throws UsageError for a ratio outside
/// [0, 1) or a count that rounds to 0.
int anchor_count_for_ratio(int landmark_count, double ratio);

/// Uniform draw of `anchors` indices without replacement.
MaskPlan mask_anchors(const DatasetDescriptor& descriptor, int anchors, Rng& rng);

/// Ratio form: N_a = round((1 - ratio) * N_D).
MaskPlan mask_anchors_ratio(const DatasetDescriptor& descriptor, double ratio, Rng& rng);

}  // namespace promptface
