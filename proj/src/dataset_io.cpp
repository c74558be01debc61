#include "msgtl/dataset_io.hpp"

#include "msgtl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace msgtl {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw DatasetError("write failed for '" + path.string() + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_cell_number(const std::string& cell, double& out) {
    const std::string t = trim(cell);
    if (t.empty()) return false;
    const char* b = t.data();
    if (*b == '+') ++b;
    auto res = std::from_chars(b, t.data() + t.size(), out);
    return res.ec == std::errc{} && res.ptr == t.data() + t.size() && std::isfinite(out);
}

struct LoadedStage {
    ManifestStage entry;
    RawTable table;
    Schema schema;
    std::vector<std::uint64_t> ids;
    std::vector<std::uint8_t> labels;
    std::vector<std::size_t> order;  // table rows sorted by id
};

}  // namespace

RawTable parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (ch == '\n') ++line;
                field += ch;
            }
            continue;
        }
        switch (ch) {
            case '"':
                if (field_started && !field.empty()) {
                    throw DatasetError("csv line " + std::to_string(line) + ": quote inside unquoted field");
                }
                in_quotes = true;
                field_started = true;
                break;
            case ',': end_field(); break;
            case '\r':
                if (i + 1 < text.size() && text[i + 1] == '\n') break;
                end_record();
                ++line;
                break;
            case '\n':
                end_record();
                ++line;
                break;
            default:
                field += ch;
                field_started = true;
        }
    }
    if (in_quotes) throw DatasetError("csv: unterminated quoted field");
    if (!field.empty() || !record.empty()) end_record();
    if (records.empty()) throw DatasetError("csv: missing header row");

    RawTable table;
    table.columns = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != table.columns.size()) {
            throw DatasetError("csv record " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                               " fields, header has " + std::to_string(table.columns.size()));
        }
        table.rows.push_back(std::move(records[r]));
    }
    return table;
}

RawTable read_csv(const fs::path& path) {
    try {
        return parse_csv(read_file(path));
    } catch (const DatasetError& e) {
        throw DatasetError(path.string() + ": " + e.what());
    }
}

std::string csv_field(const std::string& value) {
    if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
    std::string out = "\"";
    for (char c : value) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

Manifest Manifest::parse(const std::string& text, const fs::path& base_dir) {
    Manifest m;
    std::istringstream in(text);
    std::string line;
    ManifestStage* current = nullptr;
    std::size_t lineno = 0;
    auto resolve = [&](const std::string& p) {
        fs::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line == "[stage]") {
            m.stages.emplace_back();
            current = &m.stages.back();
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DatasetError("manifest line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (current == nullptr) {
            if (key == "cohort") m.cohort = std::stoi(value);
            else if (key == "format" || key == "stage_count") continue;
            else throw DatasetError("manifest line " + std::to_string(lineno) + ": unknown key '" + key + "'");
            continue;
        }
        if (key == "name") current->name = value;
        else if (key == "phase") current->phase = value;
        else if (key == "csv") current->csv = resolve(value);
        else if (key == "id_column") current->id_column = value;
        else if (key == "label_column") current->label_column = value;
        else if (key == "schema") current->schema = resolve(value);
        else throw DatasetError("manifest line " + std::to_string(lineno) + ": unknown stage key '" + key + "'");
    }
    if (m.stages.empty()) throw DatasetError("manifest lists no stages");
    for (std::size_t q = 0; q < m.stages.size(); ++q) {
        if (m.stages[q].csv.empty() || m.stages[q].schema.empty()) {
            throw DatasetError("manifest stage " + std::to_string(q) + " needs csv and schema paths");
        }
    }
    return m;
}

std::string Manifest::to_text() const {
    std::string out = "# msgtl funnel manifest\nformat = 1\ncohort = " + std::to_string(cohort) +
                      "\nstage_count = " + std::to_string(stages.size()) + "\n";
    for (const auto& s : stages) {
        out += "\n[stage]\nname = " + s.name + "\n";
        if (!s.phase.empty()) out += "phase = " + s.phase + "\n";
        out += "csv = " + s.csv.generic_string() + "\nid_column = " + s.id_column +
               "\nlabel_column = " + s.label_column + "\nschema = " + s.schema.generic_string() + "\n";
    }
    return out;
}

FunnelDataset load_stage_csv(const fs::path& manifest_path) {
    const Manifest manifest = Manifest::parse(read_file(manifest_path), manifest_path.parent_path());
    std::vector<LoadedStage> stages;

    for (std::size_t q = 0; q < manifest.stages.size(); ++q) {
        LoadedStage st;
        st.entry = manifest.stages[q];
        st.table = read_csv(st.entry.csv);
        st.schema = Schema::parse(read_file(st.entry.schema));
        const std::string where = "stage " + std::to_string(q) + " '" + st.entry.name + "' (" + st.entry.csv.string() + ")";
        std::size_t id_col, label_col;
        try {
            id_col = st.table.column_index(st.entry.id_column);
            label_col = st.table.column_index(st.entry.label_column);
            for (const auto& [name, kind] : st.schema.columns) (void)st.table.column_index(name);
        } catch (const DatasetError& e) {
            throw DatasetError(where + ": " + e.what());
        }
        for (std::size_t r = 0; r < st.table.rows.size(); ++r) {
            const std::string id_text = trim(st.table.rows[r][id_col]);
            std::uint64_t id = 0;
            auto res = std::from_chars(id_text.data(), id_text.data() + id_text.size(), id);
            if (id_text.empty() || res.ec != std::errc{} || res.ptr != id_text.data() + id_text.size()) {
                throw DatasetError(where + ": missing or invalid id at row " + std::to_string(r + 1) + ": '" +
                                   id_text + "'");
            }
            const std::string y = trim(st.table.rows[r][label_col]);
            if (y != "0" && y != "1") {
                throw DatasetError(where + ": label at row " + std::to_string(r + 1) + " (id " + id_text +
                                   ") is not 0/1: '" + y + "'");
            }
            st.ids.push_back(id);
            st.labels.push_back(y == "1" ? 1 : 0);
        }
        st.order.resize(st.ids.size());
        std::iota(st.order.begin(), st.order.end(), std::size_t{0});
        std::sort(st.order.begin(), st.order.end(), [&](auto a, auto b) { return st.ids[a] < st.ids[b]; });
        for (std::size_t k = 1; k < st.order.size(); ++k) {
            if (st.ids[st.order[k]] == st.ids[st.order[k - 1]]) {
                throw DatasetError(where + ": duplicate id " + std::to_string(st.ids[st.order[k]]));
            }
        }

        if (q > 0) {
            const auto& prev = stages.back();
            const auto& pcols = prev.schema.columns;
            if (st.schema.columns.size() < pcols.size()) {
                throw DatasetError(where + ": prefix violation, fewer feature columns than stage " + std::to_string(q - 1));
            }
            for (std::size_t c = 0; c < pcols.size(); ++c) {
                if (st.schema.columns[c] != pcols[c]) {
                    throw DatasetError(where + ": prefix violation at feature column " + std::to_string(c) +
                                       ", expected '" + pcols[c].first + "' found '" + st.schema.columns[c].first +
                                       "'");
                }
            }
            std::vector<std::size_t> prev_by_id(prev.order);
            std::vector<std::size_t> cur_idx, prev_idx;
            for (const auto& col : pcols) {
                cur_idx.push_back(st.table.column_index(col.first));
                prev_idx.push_back(prev.table.column_index(col.first));
            }
            for (std::size_t r = 0; r < st.ids.size(); ++r) {
                const std::uint64_t id = st.ids[r];
                auto it = std::lower_bound(prev_by_id.begin(), prev_by_id.end(), id,
                                           [&](std::size_t row, std::uint64_t v) { return prev.ids[row] < v; });
                if (it == prev_by_id.end() || prev.ids[*it] != id) {
                    throw DatasetError(where + ": subset violation, id " + std::to_string(id) + " (row " +
                                       std::to_string(r + 1) + ") is absent from stage " + std::to_string(q - 1));
                }
                const std::size_t pr = *it;
                for (std::size_t c = 0; c < pcols.size(); ++c) {
                    const auto& name = pcols[c].first;
                    const std::string& a = st.table.rows[r][cur_idx[c]];
                    const std::string& b = prev.table.rows[pr][prev_idx[c]];
                    bool same;
                    double x, y;
                    if (pcols[c].second != ColumnKind::categorical && parse_cell_number(a, x) &&
                        parse_cell_number(b, y)) {
                        same = x == y;
                    } else {
                        same = trim(a) == trim(b);
                    }
                    if (!same) {
                        throw DatasetError(where + ": prefix violation for id " + std::to_string(id) + " at row " +
                                           std::to_string(r + 1) + ", column '" + name + "': '" + a +
                                           "' differs from stage " + std::to_string(q - 1) + " value '" + b + "'");
                    }
                }
            }
        }
        stages.push_back(std::move(st));
    }

    // Encoders per stage cover only the columns first seen at that stage.
    std::vector<FeatureEncoder> encoders;
    FunnelDataset ds;
    ds.cohort = manifest.cohort;
    std::size_t seen = 0;
    for (std::size_t q = 0; q < stages.size(); ++q) {
        auto& st = stages[q];
        Schema fresh;
        fresh.columns.assign(st.schema.columns.begin() + static_cast<std::ptrdiff_t>(seen), st.schema.columns.end());
        seen = st.schema.columns.size();
        std::vector<std::size_t> rows(st.table.rows.size());
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        try {
            encoders.push_back(FeatureEncoder::fit(st.table, fresh, rows, false));
        } catch (const DatasetError& e) {
            throw DatasetError("stage " + std::to_string(q) + " '" + st.entry.name + "': " + e.what());
        }

        std::vector<PreparedFeatures> blocks;
        std::size_t width = 0;
        for (const auto& enc : encoders) {
            try {
                blocks.push_back(enc.apply(st.table));
            } catch (const DatasetError& e) {
                throw DatasetError("stage " + std::to_string(q) + " '" + st.entry.name + "': " + e.what());
            }
            width += blocks.back().names.size();
        }
        if (q + 1 == stages.size()) {
            for (const auto& b : blocks) {
                ds.feature_names.insert(ds.feature_names.end(), b.names.begin(), b.names.end());
                ds.indicator.insert(ds.indicator.end(), b.indicator.begin(), b.indicator.end());
            }
        }

        StageData stage;
        stage.name = st.entry.name;
        stage.phase = st.entry.phase;
        stage.features = Matrix(st.order.size(), width);
        for (std::size_t r = 0; r < st.order.size(); ++r) {
            const std::size_t src = st.order[r];
            std::size_t c0 = 0;
            for (const auto& b : blocks) {
                for (std::size_t c = 0; c < b.values.cols(); ++c) stage.features(r, c0 + c) = b.values(src, c);
                c0 += b.values.cols();
            }
            stage.ids.push_back(st.ids[src]);
            stage.labels.push_back(st.labels[src]);
        }
        ds.stages.push_back(std::move(stage));
    }
    ds.validate();
    return ds;
}

fs::path export_dataset(const FunnelDataset& dataset, const fs::path& dir) {
    fs::create_directories(dir);
    Manifest manifest;
    manifest.cohort = dataset.cohort;
    for (std::size_t q = 0; q < dataset.stages.size(); ++q) {
        const auto& stage = dataset.stages[q];
        char prefix[16];
        std::snprintf(prefix, sizeof(prefix), "%02zu_", q);
        const std::string base = prefix + stage.name;

        std::string csv = "id,label";
        for (std::size_t c = 0; c < stage.feature_count(); ++c) csv += "," + csv_field(dataset.feature_names[c]);
        csv += "\n";
        for (std::size_t r = 0; r < stage.rows(); ++r) {
            csv += std::to_string(stage.ids[r]) + "," + (stage.labels[r] ? "1" : "0");
            for (std::size_t c = 0; c < stage.feature_count(); ++c) csv += "," + format_double(stage.features(r, c));
            csv += "\n";
        }
        write_file(dir / (base + ".csv"), csv);

        Schema schema;
        for (std::size_t c = 0; c < stage.feature_count(); ++c) {
            schema.columns.emplace_back(dataset.feature_names[c],
                                        dataset.indicator[c] ? ColumnKind::indicator : ColumnKind::numeric);
        }
        write_file(dir / (base + ".schema"), schema.to_text());
        manifest.stages.push_back({stage.name, stage.phase, base + ".csv", "id", "label", base + ".schema"});
    }
    const fs::path path = dir / "manifest.txt";
    write_file(path, manifest.to_text());
    return path;
}

}  // namespace msgtl
