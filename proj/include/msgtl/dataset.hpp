#pragma once

#include "msgtl/matrix.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace msgtl {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One stage of a dual funnel: the applicants still in the process and
/// every feature collected about them so far.
struct StageData {
    std::string name;
    /// "conversion", "evaluation" or empty.
    std::string phase;
    /// Rows follow `ids`; columns are the cumulative features in prefix order.
    Matrix features;
    /// 1 = advances past this stage.
    std::vector<std::uint8_t> labels;
    /// Ascending applicant ids.
    std::vector<std::uint64_t> ids;

    std::size_t rows() const noexcept { return ids.size(); }
    std::size_t feature_count() const noexcept { return features.cols(); }
    std::size_t positives() const noexcept;
    /// Row of `id`, or npos.
    std::size_t row_of(std::uint64_t id) const noexcept;

    bool operator==(const StageData&) const = default;
};

struct FunnelDataset {
    std::vector<StageData> stages;
    /// Names of the widest stage's columns; earlier stages use a prefix.
    std::vector<std::string> feature_names;
    /// Per column: 1 if the column is a 0/1 indicator (never standardized).
    std::vector<std::uint8_t> indicator;
    int cohort = 0;

    std::size_t stage_count() const noexcept { return stages.size(); }

    /// Check the funnel invariants: each stage's ids are a subset of the
    /// previous stage's, feature columns extend the previous stage's columns
    /// and shared values agree. Throws DatasetError with coordinates.
    void validate() const;

    /// Same funnel restricted to applicants in `ids` (sorted ascending).
    FunnelDataset restrict_to(std::span<const std::uint64_t> ids) const;

    /// Stage count, names and column names must agree.
    bool same_schema(const FunnelDataset& other) const;

    bool operator==(const FunnelDataset&) const = default;
};

}  // namespace msgtl
