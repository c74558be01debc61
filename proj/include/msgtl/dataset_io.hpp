#pragma once

#include "msgtl/dataset.hpp"
#include "msgtl/features.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace msgtl {

/// RFC 4180 parsing: quoted fields, doubled quotes, CRLF or LF line ends.
/// The first record is the header. Throws DatasetError on ragged rows or an
/// unterminated quote.
RawTable parse_csv(const std::string& text);
RawTable read_csv(const std::filesystem::path& path);

/// Quote a field when it contains a comma, quote or line break.
std::string csv_field(const std::string& value);

/// One stage entry of a manifest; relative paths resolve against the
/// manifest's directory.
struct ManifestStage {
    std::string name;
    std::string phase;
    std::filesystem::path csv;
    std::string id_column = "id";
    std::string label_column = "label";
    std::filesystem::path schema;
};

struct Manifest {
    int cohort = 0;
    std::vector<ManifestStage> stages;

    static Manifest parse(const std::string& text, const std::filesystem::path& base_dir);
    std::string to_text() const;
};

/// Load a stage-aligned funnel from a manifest. Categorical columns are
/// one-hot encoded with levels taken from the stage where the column first
/// appears. Violations of the funnel invariants name the stage, id, row and
/// column involved.
FunnelDataset load_stage_csv(const std::filesystem::path& manifest_path);

/// Write `manifest.txt`, one CSV and one schema file per stage into `dir`.
/// Values are written in shortest round-trip form. Returns the manifest path.
std::filesystem::path export_dataset(const FunnelDataset& dataset, const std::filesystem::path& dir);

}  // namespace msgtl
