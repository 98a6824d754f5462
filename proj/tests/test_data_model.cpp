#include <set>

#include "doctest.h"
#include "hybrec/csv.hpp"
#include "hybrec/data_model.hpp"
#include "hybrec/errors.hpp"
#include "test_util.hpp"

using namespace hybrec;
using testutil::session;

namespace {

const char* kCatalogHeader = "item_id,locale,title,price,brand,color,size,model,material,author,desc\n";

}  // namespace

TEST_CASE("catalog loading") {
  testutil::TempDir dir("catalog");
  SUBCASE("three rows") {
    testutil::write_file(dir / "c.csv", std::string(kCatalogHeader) +
                                            "a,UK,red shoe,10.5,Acme,red,,,,,\n"
                                            "b,UK,\"blue, tall hat\",,,,,,,,\n"
                                            "c,UK,book,3,,,,,,Jane,\"long\ndescription\"\n");
    const auto cat = load_catalog(dir / "c.csv");
    REQUIRE(cat.size() == 3);
    CHECK(cat.find("a")->price == 10.5);
    CHECK(cat.find("a")->brand == "Acme");
    CHECK_FALSE(cat.find("a")->size.has_value());
    CHECK(cat.find("b")->title == "blue, tall hat");
    CHECK_FALSE(cat.find("b")->price.has_value());
    CHECK(cat.find("c")->description == "long\ndescription");
    CHECK(cat.find("c")->author == "Jane");
  }
  SUBCASE("duplicate key") {
    testutil::write_file(dir / "c.csv", std::string(kCatalogHeader) +
                                            "a,UK,x,,,,,,,,\n"
                                            "a,DE,x,,,,,,,,\n"
                                            "a,UK,y,,,,,,,,\n");
    CHECK_THROWS_AS(load_catalog(dir / "c.csv"), DuplicateKeyError);
  }
  SUBCASE("negative price names the line") {
    testutil::write_file(dir / "c.csv", std::string(kCatalogHeader) + "a,UK,x,1,,,,,,,\nb,UK,y,-2,,,,,,,\n");
    try {
      load_catalog(dir / "c.csv");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }
  SUBCASE("wrong field count") {
    testutil::write_file(dir / "c.csv", std::string(kCatalogHeader) + "a,UK,x\n");
    CHECK_THROWS_AS(load_catalog(dir / "c.csv"), ParseError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_catalog(dir / "nope.csv"), MissingArtifactError);
  }
}

TEST_CASE("catalog locale handling") {
  Catalog cat({ItemMeta{"a", "UK", "x"}, ItemMeta{"a", "DE", "y"}, ItemMeta{"b", "DE", "z"}});
  CHECK(cat.find("a", "DE")->title == "y");
  CHECK(cat.find("a")->title == "x");
  const auto de = cat.filter_locale("DE");
  CHECK(de.size() == 2);
  CHECK(de.find("a")->title == "y");
  CHECK_FALSE(de.contains("c"));
}

TEST_CASE("session loading") {
  testutil::TempDir dir("sessions");
  SUBCASE("items and label") {
    testutil::write_file(dir / "s.csv", "session_id,locale,items,label\ns1,UK,a b c,d\ns3,UK,e,\n");
    const auto s = load_sessions(dir / "s.csv");
    REQUIRE(s.size() == 2);
    CHECK(s[0].items == std::vector<std::string>{"a", "b", "c"});
    CHECK(s[0].label == "d");
    CHECK_FALSE(s[1].label.has_value());
  }
  SUBCASE("label column absent") {
    testutil::write_file(dir / "s.csv", "session_id,locale,items\ns1,UK,a b\n");
    const auto s = load_sessions(dir / "s.csv");
    REQUIRE(s.size() == 1);
    CHECK_FALSE(s[0].label.has_value());
  }
  SUBCASE("empty items") {
    testutil::write_file(dir / "s.csv", "session_id,locale,items,label\ns2,UK,,\n");
    CHECK_THROWS_AS(load_sessions(dir / "s.csv"), ParseError);
  }
  SUBCASE("round trip") {
    SessionList in = {session("s1", {"a", "b"}, "c"), session("s,2", {"x"}),
                      session("s\"3", {"q", "r", "s"}, "t")};
    save_sessions(dir / "s.csv", in);
    CHECK(load_sessions(dir / "s.csv") == in);
  }
  SUBCASE("crlf input") {
    testutil::write_file(dir / "s.csv", "session_id,locale,items,label\r\ns1,UK,a b,c\r\n");
    const auto s = load_sessions(dir / "s.csv");
    REQUIRE(s.size() == 1);
    CHECK(s[0].label == "c");
  }
}

TEST_CASE("catalog round trip") {
  testutil::TempDir dir("catalog_rt");
  ItemMeta a{"a", "UK", "red, shoe"};
  a.price = 0.1;
  a.brand = "Acme \"Co\"";
  a.description = "multi\nline";
  Catalog cat({a, ItemMeta{"b", "UK", "plain"}});
  save_catalog(dir / "c.csv", cat);
  const auto back = load_catalog(dir / "c.csv");
  CHECK(back.items() == cat.items());
}

TEST_CASE("augment_prefixes") {
  SUBCASE("labeled session of three") {
    const auto out = augment_prefixes({session("s", {"a", "b", "c"}, "d")}, 1);
    REQUIRE(out.size() == 3);
    CHECK(out[0].items == std::vector<std::string>{"a"});
    CHECK(out[0].label == "b");
    CHECK(out[1].items == std::vector<std::string>{"a", "b"});
    CHECK(out[1].label == "c");
    CHECK(out[2].items == std::vector<std::string>{"a", "b", "c"});
    CHECK(out[2].label == "d");
    std::set<std::string> ids;
    for (const auto& s : out) {
      ids.insert(s.session_id);
      CHECK(parent_session_id(s.session_id) == "s");
      CHECK(is_augmented_id(s.session_id));
    }
    CHECK(ids.size() == 3);
  }
  SUBCASE("single item") {
    const auto out = augment_prefixes({session("s", {"a"}, "b")}, 1);
    REQUIRE(out.size() == 1);
    CHECK(out[0].label == "b");
  }
  SUBCASE("min_prefix two") {
    const auto out = augment_prefixes({session("s", {"a", "b"}, "c")}, 2);
    REQUIRE(out.size() == 1);
    CHECK(out[0].items == std::vector<std::string>{"a", "b"});
    CHECK(out[0].label == "c");
  }
  SUBCASE("count equals length") {
    for (std::size_t n = 1; n < 8; ++n) {
      std::vector<std::string> items;
      for (std::size_t i = 0; i < n; ++i) items.push_back("i" + std::to_string(i));
      CHECK(augment_prefixes({session("s", items, "z")}, 1).size() == n);
    }
  }
  SUBCASE("invalid min_prefix") {
    CHECK_THROWS_AS(augment_prefixes({session("s", {"a"}, "b")}, 0), ArgumentError);
  }
}

TEST_CASE("kfold_split") {
  SessionList ten;
  for (int i = 0; i < 10; ++i) ten.push_back(session("s" + std::to_string(i), {"a"}, "b"));
  SUBCASE("equal folds") {
    const auto f = kfold_split(ten, 5, 3);
    CHECK(f.fold_count == 5);
    for (auto n : f.fold_sizes()) CHECK(n == 2);
  }
  SUBCASE("deterministic") {
    CHECK(kfold_split(ten, 5, 3).assignment == kfold_split(ten, 5, 3).assignment);
  }
  SUBCASE("partition with uneven sizes") {
    const auto f = kfold_split(ten, 3, 9);
    const auto sizes = f.fold_sizes();
    CHECK(*std::max_element(sizes.begin(), sizes.end()) -
              *std::min_element(sizes.begin(), sizes.end()) <=
          1);
    std::size_t total = 0;
    for (int k = 0; k < 3; ++k) total += select_fold(ten, f, k, true).size();
    CHECK(total == ten.size());
  }
  SUBCASE("too many folds") {
    SessionList three(ten.begin(), ten.begin() + 3);
    CHECK_THROWS_AS(kfold_split(three, 5, 1), ArgumentError);
  }
  SUBCASE("augmented children follow the parent") {
    const auto aug = augment_prefixes(ten, 1);
    SessionList mixed = ten;
    mixed.insert(mixed.end(), aug.begin(), aug.end());
    const auto f = kfold_split(mixed, 5, 3);
    CHECK(f.assignment.size() == 10);
    for (const auto& s : aug) {
      CHECK(f.fold_of(s.session_id) == f.fold_of(parent_session_id(s.session_id)));
    }
  }
  SUBCASE("json round trip") {
    const auto f = kfold_split(ten, 5, 3);
    const auto back = FoldAssignment::from_json(f.to_json());
    CHECK(back.assignment == f.assignment);
    CHECK(back.fold_count == 5);
  }
}

TEST_CASE("drop_unknown_items") {
  Catalog cat({ItemMeta{"a", "UK", "x"}, ItemMeta{"b", "UK", "y"}});
  SessionList s = {session("1", {"a", "zz", "b"}, "qq"), session("2", {"zz"}, "a")};
  const auto dropped = drop_unknown_items(s, cat);
  CHECK(dropped == 3);
  REQUIRE(s.size() == 1);
  CHECK(s[0].items == std::vector<std::string>{"a", "b"});
  CHECK_FALSE(s[0].label.has_value());
}
