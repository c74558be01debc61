#include "doctest.h"

#include "msgtl/dataset_io.hpp"
#include "msgtl/features.hpp"
#include "msgtl/funnelgen.hpp"

#include <filesystem>
#include <fstream>

using namespace msgtl;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    fs::path dir;

    explicit Fixture(const std::string& name) : dir(fs::temp_directory_path() / ("msgtl_io_" + name)) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Fixture() { fs::remove_all(dir); }

    void write(const std::string& file, const std::string& text) const { std::ofstream(dir / file) << text; }

    fs::path two_stage(const std::string& stage2_csv) const {
        write("a.csv", "id,label,age,city\n1,1,30,x\n2,0,41,y\n3,1,25,\"x\"\n");
        write("a.schema", "age = numeric\ncity = categorical\n");
        write("b.csv", stage2_csv);
        write("b.schema", "age = numeric\ncity = categorical\nscore = numeric\n");
        write("m.txt",
              "cohort = 0\n[stage]\nname = a\ncsv = a.csv\nschema = a.schema\n"
              "[stage]\nname = b\ncsv = b.csv\nschema = b.schema\n");
        return dir / "m.txt";
    }
};

std::string error_of(const fs::path& manifest) {
    try {
        load_stage_csv(manifest);
    } catch (const DatasetError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("csv parsing handles quoting") {
    const RawTable t = parse_csv("a,b\n\"x,1\",\"say \"\"hi\"\"\"\n2,\n");
    REQUIRE(t.rows.size() == 2);
    CHECK(t.columns == std::vector<std::string>{"a", "b"});
    CHECK(t.rows[0][0] == "x,1");
    CHECK(t.rows[0][1] == "say \"hi\"");
    CHECK(t.rows[1][1] == "");
    CHECK_THROWS_AS(parse_csv("a,b\n1\n"), DatasetError);
    CHECK_THROWS_AS(parse_csv("a\n\"open\n"), DatasetError);
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("plain") == "plain");
}

TEST_CASE("well-formed two-stage fixture loads") {
    Fixture f("ok");
    const auto manifest = f.two_stage("id,label,age,city,score\n3,0,25,x,0.5\n1,1,30,x,2\n");
    const FunnelDataset ds = load_stage_csv(manifest);
    REQUIRE_NOTHROW(ds.validate());
    REQUIRE(ds.stage_count() == 2);
    CHECK(ds.stages[0].ids == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(ds.stages[1].ids == std::vector<std::uint64_t>{1, 3});
    CHECK(ds.stages[0].feature_count() == 3);
    CHECK(ds.stages[1].feature_count() == 4);
    CHECK(ds.feature_names == std::vector<std::string>{"age", "city=x", "city=y", "score"});
    CHECK(ds.indicator == std::vector<std::uint8_t>{0, 1, 1, 0});
    CHECK(ds.stages[1].features(1, 3) == 0.5);
    CHECK(ds.stages[1].labels == std::vector<std::uint8_t>{1, 0});
}

TEST_CASE("subset violation names the id") {
    Fixture f("subset");
    const auto manifest = f.two_stage("id,label,age,city,score\n1,1,30,x,2\n7,0,22,y,1\n");
    const std::string msg = error_of(manifest);
    CHECK(msg.find("subset violation") != std::string::npos);
    CHECK(msg.find("id 7") != std::string::npos);
}

TEST_CASE("prefix violation reports coordinates") {
    Fixture f("prefix");
    const auto manifest = f.two_stage("id,label,age,city,score\n1,1,30,x,2\n3,0,26,x,1\n");
    const std::string msg = error_of(manifest);
    CHECK(msg.find("prefix violation") != std::string::npos);
    CHECK(msg.find("id 3") != std::string::npos);
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("'age'") != std::string::npos);
}

TEST_CASE("bad labels, ids and manifests are errors") {
    Fixture f("bad");
    CHECK(error_of(f.two_stage("id,label,age,city,score\n1,2,30,x,2\n")).find("not 0/1") != std::string::npos);
    CHECK(error_of(f.two_stage("id,label,age,city,score\n1,1,30,x,2\n1,0,30,x,2\n")).find("duplicate id") !=
          std::string::npos);
    CHECK(error_of(f.two_stage("id,label,age,city\n1,1,30,x\n")).find("not found") != std::string::npos);
    f.write("m2.txt", "[stage]\nname = a\ncsv = a.csv\n");
    CHECK_THROWS_AS(load_stage_csv(f.dir / "m2.txt"), DatasetError);
    f.write("m3.txt", "bogus = 1\n");
    CHECK_THROWS_AS(load_stage_csv(f.dir / "m3.txt"), DatasetError);
    CHECK_THROWS_AS(load_stage_csv(f.dir / "missing.txt"), DatasetError);
}

TEST_CASE("exported generated dataset loads back identically") {
    Fixture f("export");
    FunnelConfig c = minimal_preset(3, 2);
    c.initial_population = 200;
    c.stages[1].categorical_levels = 3;
    const FunnelDataset ds = generate(c);
    const fs::path manifest = export_dataset(ds, f.dir);
    const FunnelDataset back = load_stage_csv(manifest);
    REQUIRE(back.stage_count() == ds.stage_count());
    CHECK(back.feature_names.size() == ds.feature_names.size());
    for (std::size_t q = 0; q < ds.stage_count(); ++q) {
        CHECK(back.stages[q].ids == ds.stages[q].ids);
        CHECK(back.stages[q].labels == ds.stages[q].labels);
        CHECK(back.stages[q].features == ds.stages[q].features);
        CHECK(back.stages[q].name == ds.stages[q].name);
    }
}

TEST_CASE("feature preparation examples") {
    RawTable t;
    t.columns = {"city", "income"};
    t.rows = {{"A", "8"}, {"B", "12"}, {"C", "10"}, {"D", "12"}};
    Schema s;
    s.columns = {{"city", ColumnKind::categorical}, {"income", ColumnKind::numeric}};
    const std::vector<std::size_t> train{0, 1};
    const PreparedFeatures p = prepare_features(t, s, std::vector<std::size_t>{0, 1, 2});
    REQUIRE(p.names == std::vector<std::string>{"city=A", "city=B", "city=C", "income"});
    CHECK(p.values(1, 0) == 0.0);
    CHECK(p.values(1, 1) == 1.0);
    CHECK(p.values(1, 2) == 0.0);
    // Unseen category: all indicator columns zero.
    CHECK(p.values(3, 0) == 0.0);
    CHECK(p.values(3, 1) == 0.0);
    CHECK(p.values(3, 2) == 0.0);
    // Training rows 8 and 12: mean 10, sd 2, so 12 maps to 1.
    const PreparedFeatures q = prepare_features(t, s, train);
    CHECK(q.values(3, 2) == 1.0);
    CHECK(q.indicator == std::vector<std::uint8_t>{1, 1, 0});
}

TEST_CASE("zero-variance column warns and maps to zero") {
    RawTable t;
    t.columns = {"x"};
    t.rows = {{"5"}, {"5"}, {"7"}};
    Schema s;
    s.columns = {{"x", ColumnKind::numeric}};
    const PreparedFeatures p = prepare_features(t, s, std::vector<std::size_t>{0, 1});
    CHECK(p.values(2, 0) == 0.0);
    CHECK(p.warnings.size() == 1);
    t.rows[2][0] = "seven";
    CHECK_THROWS_AS(prepare_features(t, s, std::vector<std::size_t>{0, 1}), DatasetError);
}

TEST_CASE("schema text round trip") {
    const Schema s = Schema::parse("# comment\na = numeric\nb = indicator\nc = categorical\n");
    REQUIRE(s.columns.size() == 3);
    CHECK(Schema::parse(s.to_text()).columns == s.columns);
    CHECK_THROWS_AS(Schema::parse("a = text\n"), DatasetError);
}

TEST_CASE("standardizer uses training ids only and round-trips") {
    FunnelConfig c = minimal_preset(2, 3);
    c.initial_population = 300;
    const FunnelDataset ds = generate(c);
    std::vector<std::uint64_t> train;
    for (std::size_t r = 0; r < ds.stages[0].rows(); r += 2) train.push_back(ds.stages[0].ids[r]);
    const Standardizer st = Standardizer::fit(ds, train);
    const FunnelDataset scaled = st.apply(ds);
    double mean = 0;
    for (auto id : train) mean += scaled.stages[0].features(ds.stages[0].row_of(id), 0);
    CHECK(std::abs(mean / static_cast<double>(train.size())) < 1e-12);
    CHECK(Standardizer::parse(st.to_text()) == st);
    CHECK(all_ids(ds) == ds.stages[0].ids);
}
