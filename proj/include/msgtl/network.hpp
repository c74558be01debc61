#pragma once

#include "msgtl/matrix.hpp"
#include "msgtl/topology.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace msgtl {

enum class Activation : std::uint8_t { relu = 0, sigmoid = 1 };

/// Extent of the block inherited from the previous stage; (0, 0) if none.
struct Region {
    std::size_t rows = 0;
    std::size_t cols = 0;

    bool contains(std::size_t r, std::size_t c) const noexcept { return r < rows && c < cols; }
    bool operator==(const Region&) const = default;
};

/// One weight matrix plus bias with transfer bookkeeping.
///
/// `pf` selects what the forward pass sees: 1 -> the live value, 0 -> the
/// frozen snapshot copied from the previous stage. `pb` selects whether the
/// optimizer may move the live value. Outside `transferred` both masks are 1.
struct LayerParams {
    Matrix live_weights;
    std::vector<double> live_bias;
    Matrix snapshot_weights;
    std::vector<double> snapshot_bias;
    Mask pf_weights;
    Mask pf_bias;
    Mask pb_weights;
    Mask pb_bias;
    Region transferred;

    /// Zero weights, zero snapshot, all-ones masks.
    static LayerParams zeros(std::size_t fan_in, std::size_t fan_out);

    std::size_t fan_in() const noexcept { return live_weights.rows(); }
    std::size_t fan_out() const noexcept { return live_weights.cols(); }
    std::size_t parameter_count() const noexcept { return live_weights.size() + live_bias.size(); }

    /// Throws std::logic_error if shapes disagree, a mask entry is not 0/1,
    /// or a mask is 0 outside the transferred region.
    void validate() const;

    bool operator==(const LayerParams&) const = default;
};

struct StageNetwork {
    Topology topology;
    std::vector<LayerParams> layers;
    Activation hidden = Activation::relu;
    Activation output = Activation::sigmoid;
    /// Bumped by every parameter update; lets backward() reject stale caches.
    std::uint64_t revision = 0;

    std::size_t parameter_count() const noexcept;
    void validate() const;

    /// Parameter equality, ignoring the revision counter.
    bool same_parameters(const StageNetwork& other) const;
};

/// Network of the given shape with every parameter zero and all masks 1.
StageNetwork zero_network(const Topology& topology);

/// Resolved forward view of a layer: pf ? live : snapshot, elementwise.
struct EffectiveLayer {
    Matrix weights;
    std::vector<double> bias;
};

EffectiveLayer effective_weights(const LayerParams& layer);

}  // namespace msgtl
