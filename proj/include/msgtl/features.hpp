#pragma once

#include "msgtl/dataset.hpp"
#include "msgtl/matrix.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace msgtl {

/// Cells as read from a CSV file, before any encoding.
struct RawTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::size_t column_index(const std::string& name) const;  ///< throws DatasetError if absent
};

enum class ColumnKind : std::uint8_t { numeric, indicator, categorical };

/// Column kinds by name; columns not listed are not features.
struct Schema {
    std::vector<std::pair<std::string, ColumnKind>> columns;

    static Schema parse(const std::string& text);
    std::string to_text() const;
};

struct PreparedFeatures {
    Matrix values;
    std::vector<std::string> names;
    std::vector<std::uint8_t> indicator;
    std::vector<std::string> warnings;
};

/// Encoding fitted on training rows: categorical levels (one-hot, sorted,
/// unseen values encode as all zeros) and numeric mean/sd (z-scored when
/// `standardize`; zero-variance columns map to 0 with a warning).
class FeatureEncoder {
public:
    static FeatureEncoder fit(const RawTable& table, const Schema& schema, std::span<const std::size_t> train_rows,
                              bool standardize = true);
    PreparedFeatures apply(const RawTable& table) const;

    const std::vector<std::string>& output_names() const noexcept { return names_; }

private:
    struct Column {
        std::string name;
        ColumnKind kind = ColumnKind::numeric;
        std::vector<std::string> levels;
        double mean = 0.0;
        double sd = 1.0;
        bool zero_variance = false;
    };
    std::vector<Column> columns_;
    std::vector<std::string> names_;
    bool standardize_ = true;
};

/// fit + apply in one call.
PreparedFeatures prepare_features(const RawTable& table, const Schema& schema, std::span<const std::size_t> train_rows,
                                  bool standardize = true);

/// Z-scoring for a funnel. Each non-indicator column is fitted on the rows
/// of the stage where it first appears, restricted to training ids, and the
/// same transform is applied wherever the column recurs so stage prefixes
/// stay identical.
class Standardizer {
public:
    static Standardizer fit(const FunnelDataset& dataset, std::span<const std::uint64_t> train_ids);
    FunnelDataset apply(const FunnelDataset& dataset) const;

    const std::vector<double>& means() const noexcept { return mean_; }
    const std::vector<double>& sds() const noexcept { return sd_; }

    /// One `index,mean,sd,active` line per column, exact round-trip values.
    std::string to_text() const;
    static Standardizer parse(const std::string& text);

    bool operator==(const Standardizer&) const = default;

private:
    std::vector<double> mean_;
    std::vector<double> sd_;
    std::vector<std::uint8_t> active_;
};

/// Ids of a stage sorted ascending, convenience for "all rows are training".
std::vector<std::uint64_t> all_ids(const FunnelDataset& dataset);

}  // namespace msgtl
