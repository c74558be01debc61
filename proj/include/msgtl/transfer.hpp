#pragma once

#include "msgtl/network.hpp"
#include "msgtl/rng.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace msgtl {

/// Audit record of one weight transfer.
struct TransferReport {
    std::size_t stage_index = 0;
    std::size_t transferred_parameters = 0;
    std::size_t fresh_parameters = 0;
    std::vector<Region> regions;
    double pf_ones_fraction = 1.0;
    double pb_ones_fraction = 1.0;
    std::uint64_t mask_seed = 0;

    bool operator==(const TransferReport&) const = default;
};

/// Fresh network: weights ~ N(0, 2/fan_in), zero biases, zero snapshots,
/// all-ones masks, no transferred region.
StageNetwork init_network(const Topology& topology, Rng& rng);

/// Embed `prev` (its effective values, pf ? live : snapshot) into the
/// top-left block of every aligned matrix of `next`.
/// Inherited values go to both the live and snapshot arrays; pf and pb over
/// the block are drawn elementwise from Bernoulli(rho) (pb = pf when
/// `shared_mask`). Everything outside the block keeps its fresh value and
/// all-ones masks. Throws TopologyError for incompatible shapes.
std::pair<StageNetwork, TransferReport> transfer_weights(const StageNetwork& prev, StageNetwork next, double rho,
                                                         bool shared_mask, std::uint64_t mask_seed,
                                                         std::size_t stage_index = 0);

/// True iff every snapshot entry of the transferred blocks equals the
/// corresponding effective value of `prev`.
bool snapshot_equals_transfer(const StageNetwork& net, const StageNetwork& prev);

}  // namespace msgtl
