#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "promptface/dataset.hpp"
#include "promptface/masking.hpp"

namespace promptface {

struct BatchEntry {
    int dataset = 0;  // index into the registry passed to make_batches
    int sample = 0;
    MaskPlan plan;
};

using Batch = std::vector<BatchEntry>;

/// One epoch of mixed-dataset batches: every (dataset, sample) pair appears
/// exactly once, in a seeded global shuffle, chunked by `batch_size` (the last
/// batch may be short). Each entry carries its own anchor set of size `anchors`.
std::vector<Batch> make_batches(std::span<const DatasetDescriptor> registry, std::span<const int> sizes,
                                int batch_size, int anchors, std::uint64_t seed);

}  // namespace promptface
