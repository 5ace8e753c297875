#pragma once

#include <cstdint>

#include "nbtree/core.hpp"

namespace nbtree {

// Dimensionless page/seek multipliers: a metric costs
// alpha_seq * T_seq + beta_seek * T_seek; query reads pay the seek on every
// page, so the query metric carries a single alpha.
struct CostTerm {
  double alpha_seq = 0;
  double beta_seek = 0;
};

struct CostPrediction {
  CostTerm amortized_insert;
  CostTerm worst_insert;
  double worst_query_alpha = 0;

  double amortized_insert_s(const CostParams& p) const {
    return amortized_insert.alpha_seq * p.t_seq_w + amortized_insert.beta_seek * p.t_seek;
  }
  double worst_insert_s(const CostParams& p) const {
    return worst_insert.alpha_seq * p.t_seq_w + worst_insert.beta_seek * p.t_seek;
  }
  double worst_query_s(const CostParams& p) const {
    return worst_query_alpha * (p.t_seq_r + p.t_seek);
  }
};

// Closed-form costs with all constants fixed to one.
//   insert alpha = (f/B) log_f(n/sigma), beta = (f/sigma) log_f(n/sigma),
//   identical amortized and worst-case; query alpha =
//   log_B(sigma) * max(1, log_f(n/sigma)) — the degenerate single-s-node tree
//   still searches one d-tree.
CostPrediction nbtree_costs(uint64_t n, uint32_t B, uint32_t f, uint64_t sigma);

// Leveled merges with component sizes C_i = C1 * f^i:
//   amortized alpha = (f/B) log_f(n/C1), beta = 1;
//   worst insert alpha = n/B, beta = log_f(B) log_B(n);
//   worst query alpha = log_f(B) (log_B n)^2.
CostPrediction lsm_costs(uint64_t n, uint32_t B, uint32_t f, uint64_t c1);

CostPrediction btree_costs(uint64_t n, uint32_t B);

// alpha = beta = (f log_f B / B) log_B n; query alpha = log_f B log_B n.
CostPrediction beps_costs(uint64_t n, uint32_t B, uint32_t f);

struct LsmSimResult {
  uint64_t total_pages = 0;
  uint64_t total_seeks = 0;
  uint64_t merges = 0;
};

// Brute-force oracle for lsm_costs: inserts n items one at a time into
// component 0 (capacity c1); an overfull component i merges wholesale into
// i+1, charging ceil((C_i + C_{i+1}) / B) pages and `seeks_per_merge` seeks.
LsmSimResult lsm_simulate(uint64_t n, uint32_t f, uint64_t c1, uint32_t B,
                          uint32_t seeks_per_merge = 3);

}  // namespace nbtree
