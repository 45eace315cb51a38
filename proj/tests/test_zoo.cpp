#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "holmes/errors.hpp"
#include "holmes/zoo.hpp"

using namespace holmes;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "holmes_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("full grid gives 60 profiles") {
    auto zoo = generate_zoo(3, {8, 16, 32, 64, 128}, {2, 4, 8, 16}, 1);
    CHECK(zoo.size() == 60);
    // lead-major, then filters, then blocks
    CHECK(zoo[0].modality == "ECG-I");
    CHECK(zoo[20].modality == "ECG-II");
    CHECK(zoo[40].modality == "ECG-III");
    CHECK(zoo[0].width == 8);
    CHECK(zoo[0].depth == 2);
    CHECK(zoo[1].depth == 4);
    CHECK(zoo[4].width == 16);
    for (const auto& p : zoo.profiles()) {
        CHECK(p.macs == doctest::Approx(1.0 * p.width * p.depth * 7500));
        CHECK(p.target_auc > 0.5);
        CHECK(p.target_auc < 1.0);
        CHECK(p.input_len == 7500);
    }
}

TEST_CASE("single-cell grid") {
    auto zoo = generate_zoo(1, {8}, {2}, 7);
    CHECK(zoo.size() == 1);
}

TEST_CASE("generation is deterministic") {
    auto a = generate_zoo(2, {8, 16}, {2}, 3);
    auto b = generate_zoo(2, {8, 16}, {2}, 3);
    CHECK(a == b);
    CHECK(zoo_to_json(a) == zoo_to_json(b));
    auto c = generate_zoo(2, {8, 16}, {2}, 4);
    CHECK(zoo_to_json(a) != zoo_to_json(c));
}

TEST_CASE("bigger models are more accurate on average") {
    auto zoo = generate_zoo(3, {8, 16, 32, 64, 128}, {2, 4, 8, 16}, 11);
    double small = 0, big = 0;
    for (const auto& p : zoo.profiles()) {
        if (p.width == 8 && p.depth == 2) small += p.target_auc;
        if (p.width == 128 && p.depth == 16) big += p.target_auc;
    }
    CHECK(big > small);
}

TEST_CASE("save and load round trip") {
    auto zoo = generate_zoo(3, {8, 16, 32, 64, 128}, {2, 4, 8, 16}, 1);
    auto path = temp_file("zoo_roundtrip.json");
    save_zoo(zoo, path);
    CHECK(load_zoo(path) == zoo);
    CHECK(zoo_from_json(zoo_to_json(zoo)) == zoo);
}

TEST_CASE("loading rejects bad files") {
    auto zoo = generate_zoo(1, {8, 16}, {2}, 1);
    auto j = nlohmann::json::parse(zoo_to_json(zoo));

    SUBCASE("duplicate id") {
        j[1]["id"] = j[0]["id"];
        CHECK_THROWS_AS(zoo_from_json(j.dump()), ParseError);
    }
    SUBCASE("auc out of range") {
        j[0]["target_auc"] = 1.2;
        CHECK_THROWS_AS(zoo_from_json(j.dump()), ParseError);
    }
    SUBCASE("missing field") {
        j[0].erase("macs");
        CHECK_THROWS_AS(zoo_from_json(j.dump()), ParseError);
    }
    SUBCASE("unknown field") {
        j[0]["color"] = "red";
        CHECK_THROWS_AS(zoo_from_json(j.dump()), ParseError);
    }
    SUBCASE("not json") { CHECK_THROWS_AS(zoo_from_json("[{"), ParseError); }
    SUBCASE("file on disk") {
        j[0]["target_auc"] = 1.2;
        auto path = temp_file("zoo_bad.json");
        std::ofstream(path) << j.dump();
        CHECK_THROWS_AS(load_zoo(path), ParseError);
    }
}

TEST_CASE("constructor checks invariants") {
    ModelProfile p{"a", 2, 8, 1000.0, 1.0, "ECG-I", 7500, 0.8};
    CHECK_THROWS_AS(ModelZoo({p, p}), InvalidArgument);
    auto bad = p;
    bad.target_auc = 1.2;
    CHECK_THROWS_AS(ModelZoo({bad}), InvalidArgument);
    CHECK_THROWS_AS(generate_zoo(0, {8}, {2}, 1), InvalidArgument);
    CHECK_THROWS_AS(generate_zoo(1, {}, {2}, 1), InvalidArgument);
}

TEST_CASE("selected macs and lookup") {
    auto zoo = generate_zoo(1, {8, 16}, {2}, 1);
    auto b = Selector::all(2);
    CHECK(zoo.selected_macs(b) == doctest::Approx(zoo[0].macs + zoo[1].macs));
    CHECK(zoo.index_of(zoo[1].id) == 1);
    CHECK_THROWS_AS(zoo.index_of("nope"), InvalidArgument);
}

TEST_CASE("selector basics") {
    auto b = Selector::from_string("0101");
    CHECK(b.popcount() == 2);
    CHECK(b.to_string() == "0101");
    CHECK(b.indices() == std::vector<std::size_t>{1, 3});
    CHECK(manhattan(b, Selector::from_string("1100")) == 2);
    CHECK_THROWS(Selector::from_string("01x"));
    CHECK_THROWS_AS(require_length(b, 5, "test"), InvalidArgument);
}
