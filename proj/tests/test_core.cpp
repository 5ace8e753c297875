#include <doctest.h>

#include <algorithm>
#include <random>

#include "nbtree/core.hpp"

using namespace nbtree;

namespace {

Config small_cfg() {
  Config c;
  c.key_bytes = 8;
  c.value_bytes = 16;
  c.sigma = 8;
  c.stree_fanout = 3;
  c.dtree_fanout = 4;
  c.page_bytes = 512;
  return c;
}

Value val(const char* s, uint32_t n) {
  Value v(s);
  v.resize(n, '\0');
  return v;
}

}  // namespace

TEST_CASE("oracle apply semantics") {
  Config cfg = small_cfg();
  OracleMap m;
  Key k5 = key_from_u64(5);
  m.apply({k5, Op::Put, val("A", cfg.value_bytes), 1});
  CHECK(m.get(k5) == val("A", cfg.value_bytes));

  m.apply({k5, Op::Delete, {}, 2});
  CHECK(!m.get(k5).has_value());
  CHECK(m.size() == 0);

  m.apply({k5, Op::Put, val("A", cfg.value_bytes), 3});
  m.apply({k5, Op::Update, val("B", cfg.value_bytes), 4});
  CHECK(m.get(k5) == val("B", cfg.value_bytes));

  // update of an absent key inserts
  Key k7 = key_from_u64(7);
  m.apply({k7, Op::Update, val("C", cfg.value_bytes), 5});
  CHECK(m.get(k7) == val("C", cfg.value_bytes));
}

TEST_CASE("record codec round trips") {
  Config cfg = small_cfg();
  DeltaRecord put{key_from_u64(42), Op::Put, val("hello", cfg.value_bytes), 7};
  CHECK(decode_record(encode_record(put, cfg), cfg) == put);

  DeltaRecord del{key_from_u64(9), Op::Delete, {}, 8};
  CHECK(decode_record(encode_record(del, cfg), cfg) == del);

  DeltaRecord upd{key_from_u64(1), Op::Update, val("x", cfg.value_bytes), 9};
  CHECK(decode_record(encode_record(upd, cfg), cfg) == upd);

  CHECK(encode_record(put, cfg).size() == cfg.record_size());
}

TEST_CASE("record codec rejects malformed input") {
  Config cfg = small_cfg();
  DeltaRecord put{key_from_u64(42), Op::Put, val("v", cfg.value_bytes), 7};
  std::string enc = encode_record(put, cfg);

  CHECK_THROWS_AS(decode_record(std::string_view(enc).substr(0, enc.size() - 1), cfg),
                  CodecError);
  std::string bad = enc;
  bad[0] = 3;
  CHECK_THROWS_AS(decode_record(bad, cfg), CodecError);
  DeltaRecord wrong{Key("short"), Op::Put, val("v", cfg.value_bytes), 7};
  CHECK_THROWS_AS(encode_record(wrong, cfg), CodecError);
}

TEST_CASE("codec round trip holds for random records") {
  Config cfg = small_cfg();
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    DeltaRecord r;
    r.op = static_cast<Op>(rng() % 3);
    Key k(cfg.key_bytes, '\0');
    for (auto& ch : k) ch = static_cast<char>(rng() & 0xff);
    r.key = k;
    r.seq = rng();
    if (r.op != Op::Delete) {
      Value v(cfg.value_bytes, '\0');
      for (auto& ch : v) ch = static_cast<char>(rng() & 0xff);
      r.value = v;
    }
    CHECK(decode_record(encode_record(r, cfg), cfg) == r);
  }
}

TEST_CASE("key order is lexicographic byte order") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    Key a(8, '\0'), b(8, '\0');
    for (auto& ch : a) ch = static_cast<char>(rng() & 0xff);
    for (auto& ch : b) ch = static_cast<char>(rng() & 0xff);
    bool expect_less = std::lexicographical_compare(
        a.begin(), a.end(), b.begin(), b.end(),
        [](char x, char y) { return static_cast<uint8_t>(x) < static_cast<uint8_t>(y); });
    CHECK((a < b) == expect_less);
  }
  // numeric keys embed order-preservingly
  for (int i = 0; i < 500; ++i) {
    uint64_t x = rng(), y = rng();
    CHECK((key_from_u64(x) < key_from_u64(y)) == (x < y));
  }
}

TEST_CASE("config validation") {
  Config c = small_cfg();
  CHECK_NOTHROW(c.validate());

  Config bad = c;
  bad.stree_fanout = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = c;
  bad.sigma = 2 * c.stree_fanout - 1;  // sigma must be at least 2f
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = c;
  bad.page_bytes = 8;  // cannot hold a single record
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = c;
  bad.dtree_fanout = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  Config derive = c;
  derive.dtree_fanout = 0;
  CHECK(derive.internal_fanout() >= 4);
}
