#include "msgtl/dataset_io.hpp"
#include "msgtl/evalharness.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace msgtl {

namespace {

constexpr const char* kHeader =
    "protocol,variant,stage_name,stage_index,rho,omega,gamma,seed,fold,precision,recall,f1,n_train,n_test,runtime_ms,phase";

std::string fold_text(int fold) { return fold == kPooledFold ? "pooled" : std::to_string(fold); }

template <typename T>
T parse_unsigned(const std::string& s, const char* what, std::size_t line) {
    T v{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw std::invalid_argument("results line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
    }
    return v;
}

double parse_real(const std::string& s, const char* what, std::size_t line) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw std::invalid_argument("results line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
    }
    return v;
}

std::string fixed(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

// Protocol, variant and hyperparameters: one summary column.
using ColumnKey = std::tuple<std::string, std::string, double, std::size_t, std::size_t>;

ColumnKey column_of(const SummaryCell& c) { return {c.protocol, c.variant, c.rho, c.omega, c.gamma}; }

}  // namespace

std::string results_csv_text(const std::vector<ResultRow>& rows) {
    std::string out = std::string(kHeader) + "\n";
    for (const auto& r : rows) {
        out += csv_field(r.protocol) + ',' + csv_field(r.variant) + ',' + csv_field(r.stage_name) + ',' +
               std::to_string(r.stage_index) + ',' + format_double(r.rho) + ',' + std::to_string(r.omega) + ',' +
               std::to_string(r.gamma) + ',' + std::to_string(r.seed) + ',' + fold_text(r.fold) + ',';
        if (r.metrics) {
            out += format_double(r.metrics->precision) + ',' + format_double(r.metrics->recall) + ',' +
                   format_double(r.metrics->f1) + ',';
        } else {
            out += "NA,NA,NA,";
        }
        out += std::to_string(r.n_train) + ',' + std::to_string(r.n_test) + ',' +
               (r.runtime_ms ? format_double(*r.runtime_ms) : std::string("NA")) + ',' + csv_field(r.phase) + '\n';
    }
    return out;
}

void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
    write_text(path, results_csv_text(rows));
}

std::vector<ResultRow> parse_results_csv(const std::string& text) {
    const RawTable table = parse_csv(text);
    std::string header;
    for (std::size_t i = 0; i < table.columns.size(); ++i) header += (i ? "," : "") + table.columns[i];
    if (header != kHeader) throw std::invalid_argument("results file has an unexpected header: " + header);
    std::vector<ResultRow> rows;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& c = table.rows[i];
        const std::size_t line = i + 2;
        ResultRow r;
        r.protocol = c[0];
        r.variant = c[1];
        r.stage_name = c[2];
        r.stage_index = parse_unsigned<std::size_t>(c[3], "stage_index", line);
        r.rho = parse_real(c[4], "rho", line);
        r.omega = parse_unsigned<std::size_t>(c[5], "omega", line);
        r.gamma = parse_unsigned<std::size_t>(c[6], "gamma", line);
        r.seed = parse_unsigned<std::uint64_t>(c[7], "seed", line);
        r.fold = c[8] == "pooled" ? kPooledFold : parse_unsigned<int>(c[8], "fold", line);
        if (c[11] != "NA") {
            MetricSet m;
            m.precision = parse_real(c[9], "precision", line);
            m.recall = parse_real(c[10], "recall", line);
            m.f1 = parse_real(c[11], "f1", line);
            r.metrics = m;
        }
        r.n_train = parse_unsigned<std::size_t>(c[12], "n_train", line);
        r.n_test = parse_unsigned<std::size_t>(c[13], "n_test", line);
        if (c[14] != "NA") r.runtime_ms = parse_real(c[14], "runtime_ms", line);
        r.phase = c[15];
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_results_csv(buf.str());
}

std::vector<SummaryCell> summarize(const std::vector<ResultRow>& rows) {
    // Protocols that produced pooled rows are summarized from those alone.
    std::set<std::string> pooled;
    for (const auto& r : rows) {
        if (r.fold == kPooledFold) pooled.insert(r.protocol);
    }
    using CellKey = std::tuple<std::string, std::string, double, std::size_t, std::size_t, std::size_t>;
    std::map<CellKey, SummaryCell> cells;
    std::map<CellKey, std::vector<double>> values;
    for (const auto& r : rows) {
        if (pooled.count(r.protocol) && r.fold != kPooledFold) continue;
        const CellKey key{r.protocol, r.variant, r.rho, r.omega, r.gamma, r.stage_index};
        auto& cell = cells[key];
        cell.stage_index = r.stage_index;
        cell.stage_name = r.stage_name;
        cell.phase = r.phase;
        cell.protocol = r.protocol;
        cell.variant = r.variant;
        cell.rho = r.rho;
        cell.omega = r.omega;
        cell.gamma = r.gamma;
        if (r.metrics) values[key].push_back(r.metrics->f1);
        else ++cell.missing;
    }
    std::vector<SummaryCell> out;
    for (auto& [key, cell] : cells) {
        const auto& v = values[key];
        cell.runs = v.size();
        if (!v.empty()) {
            double sum = 0.0;
            for (double x : v) sum += x;
            cell.mean_f1 = sum / static_cast<double>(v.size());
            double ss = 0.0;
            for (double x : v) ss += (x - cell.mean_f1) * (x - cell.mean_f1);
            cell.sd_f1 = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        }
        out.push_back(cell);
    }
    return out;
}

std::vector<std::filesystem::path> report(const std::vector<ResultRow>& rows, const std::filesystem::path& out_dir) {
    if (rows.empty()) throw std::invalid_argument("report: no results");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create '" + out_dir.string() + "': " + ec.message());

    std::vector<std::filesystem::path> written;
    const auto results_path = out_dir / "results.csv";
    write_results_csv(rows, results_path);
    written.push_back(results_path);

    const auto cells = summarize(rows);
    std::map<std::string, std::vector<const SummaryCell*>> by_protocol;
    for (const auto& c : cells) by_protocol[c.protocol].push_back(&c);

    std::ostringstream md;
    md << "# Results summary\n\nPositive-class F1 per stage, mean ± sd over runs";
    md << " (cross-validation runs pool the test predictions of all folds).\n";
    for (const auto& [protocol, list] : by_protocol) {
        // Column labels: the variant name, plus hyperparameters when a variant
        // appears with more than one setting.
        std::map<std::string, std::set<ColumnKey>> settings;
        std::set<ColumnKey> columns;
        std::map<std::size_t, std::pair<std::string, std::string>> stages;
        for (const auto* c : list) {
            settings[c->variant].insert(column_of(*c));
            columns.insert(column_of(*c));
            stages[c->stage_index] = {c->stage_name, c->phase};
        }
        auto label = [&](const ColumnKey& k) {
            const auto& [p, v, rho, omega, gamma] = k;
            if (settings[v].size() == 1) return v;
            return v + " (rho=" + format_double(rho) + ", omega=" + std::to_string(omega) + ", gamma=" +
                   std::to_string(gamma) + ")";
        };
        std::map<std::pair<ColumnKey, std::size_t>, const SummaryCell*> lookup;
        for (const auto* c : list) lookup[{column_of(*c), c->stage_index}] = c;

        md << "\n## " << protocol << "\n";
        std::vector<std::string> phases;
        for (const auto& [q, info] : stages) {
            if (std::find(phases.begin(), phases.end(), info.second) == phases.end()) phases.push_back(info.second);
        }
        for (const auto& phase : phases) {
            md << "\n### " << (phase.empty() ? "stages" : phase + " phase") << "\n\n| stage |";
            for (const auto& col : columns) md << ' ' << label(col) << " |";
            md << "\n|---|";
            for (std::size_t i = 0; i < columns.size(); ++i) md << "---|";
            md << '\n';
            std::map<ColumnKey, std::vector<double>> block;
            for (const auto& [q, info] : stages) {
                if (info.second != phase) continue;
                md << "| " << q << ' ' << info.first << " |";
                for (const auto& col : columns) {
                    auto it = lookup.find({col, q});
                    if (it == lookup.end() || it->second->runs == 0) {
                        md << " NA |";
                        continue;
                    }
                    const SummaryCell& c = *it->second;
                    md << ' ' << fixed(c.mean_f1) << " ± " << fixed(c.sd_f1);
                    if (c.missing > 0) md << " (" << c.missing << " NA)";
                    md << " |";
                    block[col].push_back(c.mean_f1);
                }
                md << '\n';
            }
            md << "| **mean** |";
            for (const auto& col : columns) {
                const auto& v = block[col];
                if (v.empty()) {
                    md << " NA |";
                    continue;
                }
                double s = 0.0;
                for (double x : v) s += x;
                md << " **" << fixed(s / static_cast<double>(v.size())) << "** |";
            }
            md << '\n';
        }

        // Stage vs mean F1, one column per setting.
        std::ostringstream stage_csv;
        stage_csv << "stage_index,stage_name,phase";
        for (const auto& col : columns) stage_csv << ',' << csv_field(label(col));
        stage_csv << '\n';
        for (const auto& [q, info] : stages) {
            stage_csv << q << ',' << csv_field(info.first) << ',' << csv_field(info.second);
            for (const auto& col : columns) {
                auto it = lookup.find({col, q});
                stage_csv << ',';
                if (it == lookup.end() || it->second->runs == 0) stage_csv << "NA";
                else stage_csv << format_double(it->second->mean_f1);
            }
            stage_csv << '\n';
        }
        const auto stage_path = out_dir / ("plot_stage_f1_" + protocol + ".csv");
        write_text(stage_path, stage_csv.str());
        written.push_back(stage_path);

        // Long form over every hyperparameter setting.
        std::ostringstream hyper_csv;
        hyper_csv << "variant,rho,omega,gamma,stage_index,stage_name,runs,missing,mean_f1,sd_f1\n";
        for (const auto* c : list) {
            hyper_csv << csv_field(c->variant) << ',' << format_double(c->rho) << ',' << c->omega << ',' << c->gamma
                      << ',' << c->stage_index << ',' << csv_field(c->stage_name) << ',' << c->runs << ','
                      << c->missing << ',';
            if (c->runs == 0) hyper_csv << "NA,NA\n";
            else hyper_csv << format_double(c->mean_f1) << ',' << format_double(c->sd_f1) << '\n';
        }
        const auto hyper_path = out_dir / ("plot_hyperparams_" + protocol + ".csv");
        write_text(hyper_path, hyper_csv.str());
        written.push_back(hyper_path);
    }
    const auto summary_path = out_dir / "summary.md";
    write_text(summary_path, md.str());
    written.push_back(summary_path);
    return written;
}

}  // namespace msgtl
