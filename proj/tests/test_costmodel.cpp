#include <doctest.h>

#include <cmath>

#include "nbtree/costmodel.hpp"

using namespace nbtree;

TEST_CASE("nbtree costs: degenerate single-s-node tree") {
  auto c = nbtree_costs(1024, 256, 4, 1024);  // n == sigma
  CHECK(c.amortized_insert.alpha_seq == doctest::Approx(0.0));
  CHECK(c.amortized_insert.beta_seek == doctest::Approx(0.0));
  CHECK(c.worst_insert.alpha_seq == doctest::Approx(0.0));
  // the root d-tree is still searched
  CHECK(c.worst_query_alpha == doctest::Approx(std::log(1024.0) / std::log(256.0)));
}

TEST_CASE("nbtree costs: hand-checked point") {
  // (f/B) log_f(n/sigma) = (4/256) * log_4(2^10) = 5/64
  auto c = nbtree_costs(1ull << 20, 256, 4, 1ull << 10);
  CHECK(c.amortized_insert.alpha_seq == doctest::Approx(0.078125));
  CHECK(c.worst_insert.alpha_seq == doctest::Approx(0.078125));
  CHECK(c.amortized_insert.beta_seek == doctest::Approx(4.0 / 1024.0 * 5.0));
  CHECK(c.worst_query_alpha ==
        doctest::Approx((std::log(1024.0) / std::log(256.0)) * 5.0));
}

TEST_CASE("nbtree costs: raising f raises the insert page multiplier") {
  auto a = nbtree_costs(1ull << 20, 256, 4, 1ull << 10);
  auto b = nbtree_costs(1ull << 20, 256, 8, 1ull << 10);
  CHECK(b.amortized_insert.alpha_seq > a.amortized_insert.alpha_seq);
}

TEST_CASE("nbtree costs: domain errors") {
  CHECK_THROWS_AS(nbtree_costs(10, 256, 4, 100), std::domain_error);   // n < sigma
  CHECK_THROWS_AS(nbtree_costs(1000, 256, 4, 6), std::domain_error);   // sigma < 2f
  CHECK_THROWS_AS(nbtree_costs(1000, 256, 1, 100), std::domain_error); // f < 2
}

TEST_CASE("lsm costs: hand-checked points") {
  // n == C1: no merges; query alpha = log_f B * (log_B C1)^2
  auto z = lsm_costs(4, 4, 2, 4);
  CHECK(z.amortized_insert.alpha_seq == doctest::Approx(0.0));
  CHECK(z.worst_query_alpha ==
        doctest::Approx((std::log(4.0) / std::log(2.0)) * 1.0 * 1.0));

  // (f/B) log_f(n/C1) = (2/4) log_2(256) = 4
  auto c = lsm_costs(1024, 4, 2, 4);
  CHECK(c.amortized_insert.alpha_seq == doctest::Approx(4.0));
  CHECK(c.amortized_insert.beta_seek == doctest::Approx(1.0));
  CHECK(c.worst_insert.alpha_seq == doctest::Approx(1024.0 / 4.0));
}

TEST_CASE("btree costs") {
  auto unit = btree_costs(256, 256);  // n == B: height one
  CHECK(unit.amortized_insert.alpha_seq == doctest::Approx(1.0));
  CHECK(unit.worst_query_alpha == doctest::Approx(1.0));

  auto c = btree_costs(1ull << 20, 256);  // log_256(2^20) = 2.5
  CHECK(c.amortized_insert.alpha_seq == doctest::Approx(2.5));
  CHECK(c.worst_insert.beta_seek == doctest::Approx(2.5));
  CHECK(c.worst_query_alpha == doctest::Approx(2.5));
}

TEST_CASE("beps costs degenerate to btree costs at f = B") {
  auto bt = btree_costs(1ull << 20, 256);
  auto be = beps_costs(1ull << 20, 256, 256);
  CHECK(be.amortized_insert.alpha_seq == doctest::Approx(bt.amortized_insert.alpha_seq));
  CHECK(be.worst_query_alpha == doctest::Approx(bt.worst_query_alpha));
}

TEST_CASE("cost predictions are monotone nondecreasing in n") {
  for (uint64_t n = 1ull << 12; n < 1ull << 20; n <<= 2) {
    auto a = nbtree_costs(n, 64, 4, 1 << 10);
    auto b = nbtree_costs(n << 2, 64, 4, 1 << 10);
    CHECK(b.amortized_insert.alpha_seq >= a.amortized_insert.alpha_seq);
    CHECK(b.worst_query_alpha >= a.worst_query_alpha);

    auto la = lsm_costs(n, 64, 4, 64);
    auto lb = lsm_costs(n << 2, 64, 4, 64);
    CHECK(lb.amortized_insert.alpha_seq >= la.amortized_insert.alpha_seq);
    CHECK(lb.worst_query_alpha >= la.worst_query_alpha);
  }
}

TEST_CASE("cost terms compose into seconds per the alpha/beta shape") {
  CostParams p{8.5e-3, 3.0e-5, 3.2e-5};
  auto c = lsm_costs(1024, 4, 2, 4);
  CHECK(c.amortized_insert_s(p) ==
        doctest::Approx(4.0 * 3.2e-5 + 1.0 * 8.5e-3));
  CHECK(c.worst_query_s(p) ==
        doctest::Approx(c.worst_query_alpha * (3.0e-5 + 8.5e-3)));
}

TEST_CASE("lsm simulator: no merges until the first component fills") {
  auto r = lsm_simulate(4, 2, 4, 4);
  CHECK(r.merges == 0);
  CHECK(r.total_pages == 0);
  CHECK(r.total_seeks == 0);
}

TEST_CASE("lsm simulator: single merge at n = 2*C1") {
  // overflow on insert C1+1 merges C0 into C1 at capacity-based cost
  uint64_t c1 = 16;
  uint32_t B = 4;
  auto r = lsm_simulate(2 * c1, 2, c1, B);
  CHECK(r.merges == 1);
  CHECK(r.total_pages == (c1 + 2 * c1 + B - 1) / B);
  CHECK(r.total_seeks == 3);
}

TEST_CASE("lsm simulator tracks the closed form within [0.25x, 4x]") {
  for (uint32_t f : {2u, 4u}) {
    for (uint64_t c1 : {4ull, 64ull}) {
      for (uint64_t n : {1ull << 10, 1ull << 14}) {
        auto sim = lsm_simulate(n, f, c1, 4);
        auto pred = lsm_costs(n, 4, f, c1);
        double predicted_total = pred.amortized_insert.alpha_seq * static_cast<double>(n);
        CAPTURE(f);
        CAPTURE(c1);
        CAPTURE(n);
        REQUIRE(predicted_total > 0);
        double ratio = static_cast<double>(sim.total_pages) / predicted_total;
        CHECK(ratio >= 0.25);
        CHECK(ratio <= 4.0);
      }
    }
  }
}
