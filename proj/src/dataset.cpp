#include "msgtl/dataset.hpp"

#include <algorithm>
#include <cmath>

namespace msgtl {

std::size_t StageData::positives() const noexcept {
    std::size_t n = 0;
    for (auto y : labels) n += y != 0;
    return n;
}

std::size_t StageData::row_of(std::uint64_t id) const noexcept {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) return static_cast<std::size_t>(-1);
    return static_cast<std::size_t>(it - ids.begin());
}

void FunnelDataset::validate() const {
    if (stages.empty()) throw DatasetError("dataset has no stages");
    const std::size_t widest = stages.back().feature_count();
    if (feature_names.size() != widest || indicator.size() != widest) {
        throw DatasetError("dataset column metadata does not match the widest stage (" + std::to_string(widest) +
                           " columns)");
    }
    for (std::size_t q = 0; q < stages.size(); ++q) {
        const auto& s = stages[q];
        const std::string where = "stage " + std::to_string(q) + " '" + s.name + "'";
        if (s.features.rows() != s.ids.size() || s.labels.size() != s.ids.size()) {
            throw DatasetError(where + ": row counts of features, labels and ids differ");
        }
        for (std::size_t r = 0; r < s.labels.size(); ++r) {
            if (s.labels[r] > 1) throw DatasetError(where + ": label at row " + std::to_string(r) + " is not 0/1");
        }
        for (std::size_t r = 1; r < s.ids.size(); ++r) {
            if (s.ids[r] <= s.ids[r - 1]) {
                throw DatasetError(where + ": ids not strictly ascending at row " + std::to_string(r) + " (id " +
                                   std::to_string(s.ids[r]) + ")");
            }
        }
        for (std::size_t i = 0; i < s.features.size(); ++i) {
            if (!std::isfinite(s.features.values()[i])) {
                throw DatasetError(where + ": non-finite feature at row " + std::to_string(i / s.feature_count()) +
                                   ", column " + std::to_string(i % s.feature_count()));
            }
        }
        if (q == 0) continue;
        const auto& p = stages[q - 1];
        if (s.feature_count() < p.feature_count()) {
            throw DatasetError(where + ": fewer feature columns than the previous stage");
        }
        for (std::size_t r = 0; r < s.ids.size(); ++r) {
            const std::size_t pr = p.row_of(s.ids[r]);
            if (pr == static_cast<std::size_t>(-1)) {
                throw DatasetError(where + ": id " + std::to_string(s.ids[r]) + " (row " + std::to_string(r) +
                                   ") is absent from stage " + std::to_string(q - 1));
            }
            for (std::size_t c = 0; c < p.feature_count(); ++c) {
                if (s.features(r, c) != p.features(pr, c)) {
                    throw DatasetError(where + ": shared column " + std::to_string(c) + " ('" + feature_names[c] +
                                       "') differs from stage " + std::to_string(q - 1) + " for id " +
                                       std::to_string(s.ids[r]) + " (row " + std::to_string(r) + ")");
                }
            }
        }
    }
}

FunnelDataset FunnelDataset::restrict_to(std::span<const std::uint64_t> keep) const {
    FunnelDataset out;
    out.feature_names = feature_names;
    out.indicator = indicator;
    out.cohort = cohort;
    for (const auto& s : stages) {
        StageData t;
        t.name = s.name;
        t.phase = s.phase;
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < s.ids.size(); ++r) {
            if (std::binary_search(keep.begin(), keep.end(), s.ids[r])) rows.push_back(r);
        }
        t.features = s.features.select_rows(rows);
        for (auto r : rows) {
            t.labels.push_back(s.labels[r]);
            t.ids.push_back(s.ids[r]);
        }
        out.stages.push_back(std::move(t));
    }
    return out;
}

bool FunnelDataset::same_schema(const FunnelDataset& other) const {
    if (stages.size() != other.stages.size() || feature_names != other.feature_names) return false;
    for (std::size_t q = 0; q < stages.size(); ++q) {
        if (stages[q].name != other.stages[q].name ||
            stages[q].feature_count() != other.stages[q].feature_count()) {
            return false;
        }
    }
    return true;
}

}  // namespace msgtl
