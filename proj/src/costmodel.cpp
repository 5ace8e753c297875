#include "nbtree/costmodel.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace nbtree {

namespace {

double log_base(double base, double x) { return std::log(x) / std::log(base); }

}  // namespace

CostPrediction nbtree_costs(uint64_t n, uint32_t B, uint32_t f, uint64_t sigma) {
  if (f < 2 || sigma < 2ull * f || sigma < 2 || B < 2 || n < sigma)
    throw std::domain_error("nbtree_costs: need n >= sigma >= 2f >= 4 and B >= 2");
  double levels = log_base(f, static_cast<double>(n) / static_cast<double>(sigma));
  CostPrediction c;
  c.amortized_insert = {static_cast<double>(f) / B * levels,
                        static_cast<double>(f) / static_cast<double>(sigma) * levels};
  c.worst_insert = c.amortized_insert;
  c.worst_query_alpha = log_base(B, static_cast<double>(sigma)) * std::max(1.0, levels);
  return c;
}

CostPrediction lsm_costs(uint64_t n, uint32_t B, uint32_t f, uint64_t c1) {
  if (f < 2 || c1 < 1 || n < c1 || B < 2)
    throw std::domain_error("lsm_costs: need n >= C1 >= 1, f >= 2, B >= 2");
  double logb_n = log_base(B, static_cast<double>(n));
  CostPrediction c;
  c.amortized_insert = {static_cast<double>(f) / B *
                            log_base(f, static_cast<double>(n) / static_cast<double>(c1)),
                        1.0};
  c.worst_insert = {static_cast<double>(n) / B, log_base(f, B) * logb_n};
  c.worst_query_alpha = log_base(f, B) * logb_n * logb_n;
  return c;
}

CostPrediction btree_costs(uint64_t n, uint32_t B) {
  if (n < 1 || B < 2) throw std::domain_error("btree_costs: need n >= 1, B >= 2");
  double l = log_base(B, static_cast<double>(n));
  CostPrediction c;
  c.amortized_insert = {l, l};
  c.worst_insert = {l, l};
  c.worst_query_alpha = l;
  return c;
}

CostPrediction beps_costs(uint64_t n, uint32_t B, uint32_t f) {
  if (n < 1 || B < 2 || f < 2) throw std::domain_error("beps_costs: need n >= 1, B >= 2, f >= 2");
  double logb_n = log_base(B, static_cast<double>(n));
  double a = static_cast<double>(f) * log_base(f, B) / B * logb_n;
  CostPrediction c;
  c.amortized_insert = {a, a};
  c.worst_insert = {a, a};
  c.worst_query_alpha = log_base(f, B) * logb_n;
  return c;
}

LsmSimResult lsm_simulate(uint64_t n, uint32_t f, uint64_t c1, uint32_t B,
                          uint32_t seeks_per_merge) {
  if (n < 1 || f < 2 || c1 < 1 || B < 1)
    throw std::domain_error("lsm_simulate: parameters must be positive, f >= 2");
  LsmSimResult res;
  std::vector<uint64_t> counts{0};
  std::vector<uint64_t> caps{c1};
  for (uint64_t i = 0; i < n; ++i) {
    counts[0]++;
    size_t level = 0;
    while (counts[level] > caps[level]) {
      if (level + 1 == counts.size()) {
        counts.push_back(0);
        caps.push_back(caps[level] * f);
      }
      // capacity-based merge charge: both components read and rewritten
      res.total_pages += (caps[level] + caps[level + 1] + B - 1) / B;
      res.total_seeks += seeks_per_merge;
      res.merges++;
      counts[level + 1] += counts[level];
      counts[level] = 0;
      ++level;
    }
  }
  return res;
}

}  // namespace nbtree
