#include "msgtl/features.hpp"

#include "msgtl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace msgtl {

namespace {

bool parse_number(const std::string& cell, double& out) {
    const char* b = cell.data();
    const char* e = cell.data() + cell.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\t' || e[-1] == '\r')) --e;
    if (b == e) return false;
    if (*b == '+') ++b;
    auto res = std::from_chars(b, e, out);
    return res.ec == std::errc{} && res.ptr == e && std::isfinite(out);
}

const char* kind_name(ColumnKind k) {
    switch (k) {
        case ColumnKind::numeric: return "numeric";
        case ColumnKind::indicator: return "indicator";
        case ColumnKind::categorical: return "categorical";
    }
    return "numeric";
}

}  // namespace

std::size_t RawTable::column_index(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw DatasetError("column '" + name + "' not found");
    return static_cast<std::size_t>(it - columns.begin());
}

Schema Schema::parse(const std::string& text) {
    Schema schema;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        const auto eq = line.rfind('=');
        if (eq == std::string::npos) throw DatasetError("schema line " + std::to_string(lineno) + ": expected name = kind");
        auto trim = [](std::string s) {
            const auto x = s.find_first_not_of(" \t\r");
            const auto y = s.find_last_not_of(" \t\r");
            return x == std::string::npos ? std::string{} : s.substr(x, y - x + 1);
        };
        const std::string name = trim(line.substr(0, eq));
        const std::string kind = trim(line.substr(eq + 1));
        ColumnKind k;
        if (kind == "numeric") k = ColumnKind::numeric;
        else if (kind == "indicator") k = ColumnKind::indicator;
        else if (kind == "categorical") k = ColumnKind::categorical;
        else throw DatasetError("schema line " + std::to_string(lineno) + ": unknown column kind '" + kind + "'");
        schema.columns.emplace_back(name, k);
    }
    return schema;
}

std::string Schema::to_text() const {
    std::string out;
    for (const auto& [name, kind] : columns) out += name + " = " + kind_name(kind) + "\n";
    return out;
}

FeatureEncoder FeatureEncoder::fit(const RawTable& table, const Schema& schema,
                                   std::span<const std::size_t> train_rows, bool standardize) {
    FeatureEncoder enc;
    enc.standardize_ = standardize;
    for (const auto& [name, kind] : schema.columns) {
        Column col;
        col.name = name;
        col.kind = kind;
        const std::size_t idx = table.column_index(name);
        if (kind == ColumnKind::categorical) {
            std::set<std::string> levels;
            for (auto r : train_rows) levels.insert(table.rows[r][idx]);
            col.levels.assign(levels.begin(), levels.end());
            for (const auto& lv : col.levels) enc.names_.push_back(name + "=" + lv);
        } else {
            double sum = 0.0, sumsq = 0.0;
            for (auto r : train_rows) {
                double v;
                if (!parse_number(table.rows[r][idx], v)) {
                    throw DatasetError("non-numeric cell at row " + std::to_string(r) + ", column '" + name + "': '" +
                                       table.rows[r][idx] + "'");
                }
                sum += v;
                sumsq += v * v;
            }
            const double n = static_cast<double>(train_rows.size());
            if (n > 0) {
                col.mean = sum / n;
                const double var = std::max(0.0, sumsq / n - col.mean * col.mean);
                col.sd = std::sqrt(var);
            }
            col.zero_variance = !(col.sd > 1e-12 * std::max(1.0, std::abs(col.mean)));
            enc.names_.push_back(name);
        }
        enc.columns_.push_back(std::move(col));
    }
    return enc;
}

PreparedFeatures FeatureEncoder::apply(const RawTable& table) const {
    PreparedFeatures out;
    out.names = names_;
    out.values = Matrix(table.rows.size(), names_.size());
    std::size_t offset = 0;
    for (const auto& col : columns_) {
        const std::size_t idx = table.column_index(col.name);
        if (col.kind == ColumnKind::categorical) {
            for (std::size_t r = 0; r < table.rows.size(); ++r) {
                auto it = std::lower_bound(col.levels.begin(), col.levels.end(), table.rows[r][idx]);
                if (it != col.levels.end() && *it == table.rows[r][idx]) {
                    out.values(r, offset + static_cast<std::size_t>(it - col.levels.begin())) = 1.0;
                }
            }
            out.indicator.insert(out.indicator.end(), col.levels.size(), 1);
            offset += col.levels.size();
            continue;
        }
        const bool scale = standardize_ && col.kind == ColumnKind::numeric;
        if (scale && col.zero_variance) {
            out.warnings.push_back("column '" + col.name + "' has zero variance on training rows; scaled to 0");
        }
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            double v;
            if (!parse_number(table.rows[r][idx], v)) {
                throw DatasetError("non-numeric cell at row " + std::to_string(r) + ", column '" + col.name + "': '" +
                                   table.rows[r][idx] + "'");
            }
            if (scale) v = col.zero_variance ? 0.0 : (v - col.mean) / col.sd;
            out.values(r, offset) = v;
        }
        out.indicator.push_back(col.kind == ColumnKind::indicator ? 1 : 0);
        ++offset;
    }
    return out;
}

PreparedFeatures prepare_features(const RawTable& table, const Schema& schema, std::span<const std::size_t> train_rows,
                                  bool standardize) {
    return FeatureEncoder::fit(table, schema, train_rows, standardize).apply(table);
}

Standardizer Standardizer::fit(const FunnelDataset& dataset, std::span<const std::uint64_t> train_ids) {
    Standardizer st;
    const std::size_t width = dataset.feature_names.size();
    st.mean_.assign(width, 0.0);
    st.sd_.assign(width, 1.0);
    st.active_.assign(width, 0);
    std::size_t first = 0;
    for (const auto& stage : dataset.stages) {
        const std::size_t end = stage.feature_count();
        if (end <= first) continue;
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < stage.ids.size(); ++r) {
            if (std::binary_search(train_ids.begin(), train_ids.end(), stage.ids[r])) rows.push_back(r);
        }
        for (std::size_t c = first; c < end; ++c) {
            if (dataset.indicator[c]) continue;
            double sum = 0.0;
            for (auto r : rows) sum += stage.features(r, c);
            const double n = static_cast<double>(rows.size());
            const double mean = n > 0 ? sum / n : 0.0;
            double ss = 0.0;
            for (auto r : rows) ss += (stage.features(r, c) - mean) * (stage.features(r, c) - mean);
            const double sd = n > 0 ? std::sqrt(ss / n) : 0.0;
            st.mean_[c] = mean;
            st.sd_[c] = sd;
            st.active_[c] = 1;
        }
        first = end;
    }
    return st;
}

FunnelDataset Standardizer::apply(const FunnelDataset& dataset) const {
    FunnelDataset out = dataset;
    for (auto& stage : out.stages) {
        const std::size_t width = stage.feature_count();
        for (std::size_t r = 0; r < stage.rows(); ++r) {
            for (std::size_t c = 0; c < width && c < active_.size(); ++c) {
                if (!active_[c]) continue;
                double& v = stage.features(r, c);
                v = sd_[c] > 1e-12 ? (v - mean_[c]) / sd_[c] : 0.0;
            }
        }
    }
    return out;
}

std::string Standardizer::to_text() const {
    std::string out = "column,mean,sd,active\n";
    for (std::size_t c = 0; c < mean_.size(); ++c) {
        out += std::to_string(c) + "," + format_double(mean_[c]) + "," + format_double(sd_[c]) + "," +
               (active_[c] ? "1" : "0") + "\n";
    }
    return out;
}

Standardizer Standardizer::parse(const std::string& text) {
    Standardizer st;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (line.rfind("column,mean,sd,active", 0) != 0) throw DatasetError("scaling file: unexpected header");
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
        double mean = 0.0, sd = 0.0;
        if (cells.size() != 4 || cells[0] != std::to_string(st.mean_.size()) || !parse_number(cells[1], mean) ||
            !parse_number(cells[2], sd) || (cells[3] != "0" && cells[3] != "1")) {
            throw DatasetError("scaling file: malformed line '" + line + "'");
        }
        st.mean_.push_back(mean);
        st.sd_.push_back(sd);
        st.active_.push_back(cells[3] == "1" ? 1 : 0);
    }
    return st;
}

std::vector<std::uint64_t> all_ids(const FunnelDataset& dataset) {
    if (dataset.stages.empty()) return {};
    return dataset.stages.front().ids;
}

}  // namespace msgtl
