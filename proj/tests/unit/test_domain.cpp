#include "doctest.h"

#include <fstream>
#include <set>

#include "detoxr/errors.hpp"
#include "detoxr/record.hpp"
#include "fixtures.hpp"

using namespace detoxr;

TEST_CASE("toxin classes are fixed and ordered") {
  CHECK(kToxinClasses.size() == 14);
  CHECK(kToxinClasses.front().key == "opiates");
  CHECK(kToxinClasses.back().key == "lsd");
  std::set<std::string_view> keys;
  for (const auto& t : kToxinClasses) keys.insert(t.key);
  CHECK(keys.size() == 14);
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    CHECK(toxin_from_key(kToxinClasses[k].key) == toxin_at(k));
  }
  CHECK_FALSE(toxin_from_key("alcohol").has_value());
}

TEST_CASE("published prevalences") {
  const auto& p = class_prevalences();
  CHECK(p[index_of(Toxin::opiates)] == 251);
  CHECK(p[index_of(Toxin::benzodiazepines_z_substances)] == 465);
  CHECK(p[index_of(Toxin::ketamine)] == 4);
  CHECK(p[index_of(Toxin::lsd)] == 9);
  CHECK(kPublishedCaseCount == 870);
}

TEST_CASE("label vector set round trip") {
  auto v = LabelVector::from_set({Toxin::opiates, Toxin::pregabalin});
  CHECK(v.count() == 2);
  CHECK(v[Toxin::opiates]);
  CHECK(v[Toxin::pregabalin]);
  CHECK_FALSE(v[Toxin::lsd]);
  CHECK(v.to_set() == std::vector<Toxin>{Toxin::opiates, Toxin::pregabalin});
  CHECK(LabelVector::from_set(v.to_set()) == v);
  CHECK(LabelVector{}.none());
}

TEST_CASE("case record round trip") {
  Case c = fixtures::sample_case();
  std::string line = serialize_case_record(c);
  CHECK(line.find('\n') == std::string::npos);
  Case back = parse_case_record(line);
  CHECK(back == c);
  CHECK(serialize_case_record(back) == line);
}

TEST_CASE("labels are a 14-element 0/1 array") {
  Case c = fixtures::sample_case();
  json doc = case_to_json(c);
  REQUIRE(doc["labels"].is_array());
  CHECK(doc["labels"].size() == 14);
  CHECK(doc["labels"][0] == 1);
  CHECK(doc["labels"][1] == 0);
}

TEST_CASE("record validation names the offending field") {
  json doc = case_to_json(fixtures::sample_case());

  SUBCASE("out of range vital") {
    doc["structured"]["vitals"]["spo2"] = 140;
    try {
      parse_case_json(doc);
      FAIL("expected RangeError");
    } catch (const RangeError& e) {
      CHECK(e.field() == "structured.vitals.spo2");
    }
  }
  SUBCASE("unknown field") {
    doc["structured"]["vitals"]["pulse"] = 80;
    try {
      parse_case_json(doc);
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.field() == "structured.vitals.pulse");
    }
  }
  SUBCASE("wrong label length") {
    doc["labels"] = json::array({1, 0, 1});
    CHECK_THROWS_AS(parse_case_json(doc), LabelError);
  }
  SUBCASE("non-binary label") {
    doc["labels"][3] = 2;
    CHECK_THROWS_AS(parse_case_json(doc), LabelError);
  }
  SUBCASE("boolean flags must be booleans") {
    doc["structured"]["symptoms"]["miosis"] = "yes";
    CHECK_THROWS_AS(parse_case_json(doc), SchemaError);
  }
  SUBCASE("null means absent") {
    doc["structured"]["vitals"]["spo2"] = nullptr;
    Case c = parse_case_json(doc);
    CHECK_FALSE(c.structured.vital(Vital::spo2).has_value());
  }
  SUBCASE("labels may be omitted") {
    doc.erase("labels");
    CHECK_FALSE(parse_case_json(doc).labels.has_value());
  }
}

TEST_CASE("dataset file round trip and manifest validation") {
  auto dir = fixtures::scratch_dir("domain");
  DatasetManifest m;
  for (int i = 0; i < 3; ++i) {
    Case c = fixtures::sample_case();
    c.case_id = "c" + std::to_string(i);
    m.cases.push_back(c);
  }
  write_dataset(dir / "d.jsonl", m);
  DatasetManifest back = read_dataset(dir / "d.jsonl");
  CHECK(back.cases == m.cases);

  m.cases[2].case_id = "c0";
  CHECK_THROWS_AS(validate_manifest(m), SchemaError);

  m.cases[2].case_id = "c2";
  m.split_assignment = SplitAssignment{{"c0", Split::train}, {"c1", Split::val}};
  CHECK_THROWS(validate_manifest(m));
  (*m.split_assignment)["c2"] = Split::test;
  CHECK_NOTHROW(validate_manifest(m));
  CHECK(m.cases_in(Split::test).size() == 1);
}

TEST_CASE("dataset read errors carry the line number") {
  auto dir = fixtures::scratch_dir("domain-bad");
  std::string good = serialize_case_record(fixtures::sample_case());
  {
    std::ofstream out(dir / "bad.jsonl");
    out << good << "\n{\"case_id\": 5}\n";
  }
  try {
    read_dataset(dir / "bad.jsonl");
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}
