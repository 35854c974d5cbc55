#include "promptface/batching.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "promptface/errors.hpp"

namespace promptface {

int anchor_count_for_ratio(int landmark_count, double ratio) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw UsageError("masking ratio must lie in [0, 1)");
    const int n = static_cast<int>(std::nearbyint((1.0 - ratio) * landmark_count));
    if (n < 1) throw UsageError("masking ratio leaves no anchors");
    return n;
}

MaskPlan mask_anchors(const DatasetDescriptor& descriptor, int anchors, Rng& rng) {
    const int n = descriptor.landmark_count;
    if (anchors < 1) throw UsageError("at least one anchor is required");
    if (anchors > n) {
        throw UsageError("cannot keep " + std::to_string(anchors) + " anchors of dataset '" + descriptor.id +
                         "' with " + std::to_string(n) + " landmarks");
    }
    std::vector<int> pool(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool[i] = i;
    if (anchors < n) {
        for (int i = 0; i < anchors; ++i) {
            const auto j = i + static_cast<int>(rng.index(static_cast<std::size_t>(n - i)));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(static_cast<std::size_t>(anchors));
        std::sort(pool.begin(), pool.end());
    }
    return {descriptor.id, std::move(pool)};
}

MaskPlan mask_anchors_ratio(const DatasetDescriptor& descriptor, double ratio, Rng& rng) {
    return mask_anchors(descriptor, anchor_count_for_ratio(descriptor.landmark_count, ratio), rng);
}

std::vector<Batch> make_batches(std::span<const DatasetDescriptor> registry, std::span<const int> sizes,
                                int batch_size, int anchors, std::uint64_t seed) {
    if (registry.size() != sizes.size()) throw UsageError("one size per registered dataset is required");
    if (batch_size < 1) throw UsageError("batch size must be positive");
    for (const auto& d : registry) {
        if (anchors > d.landmark_count) {
            throw UsageError("anchor count " + std::to_string(anchors) + " exceeds the " +
                             std::to_string(d.landmark_count) + " landmarks of '" + d.id + "'");
        }
    }
    std::vector<std::pair<int, int>> order;
    for (std::size_t d = 0; d < sizes.size(); ++d) {
        for (int s = 0; s < sizes[d]; ++s) order.emplace_back(static_cast<int>(d), s);
    }
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<Batch> batches;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(batch_size)) {
        Batch b;
        const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(batch_size));
        for (std::size_t i = at; i < end; ++i) {
            const auto [d, s] = order[i];
            b.push_back({d, s, mask_anchors(registry[static_cast<std::size_t>(d)], anchors, rng)});
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace promptface
