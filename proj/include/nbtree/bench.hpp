#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nbtree/core.hpp"
#include "nbtree/engine.hpp"

namespace nbtree {

enum class WorkloadKind : uint8_t { Insert, Query, Mixed };

// One generated operation; queries carry only a key.
struct WorkOp {
  Op op = Op::Put;
  bool is_query = false;
  Key key;
  Value value;
};

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::Insert;
  uint64_t n_ops = 0;
  uint64_t seed = 1;
  uint32_t key_bytes = 8;
  uint32_t value_bytes = 128;
  bool query_absent = false;   // query keys drawn from absent instead of existing keys
  uint64_t preload_n = 0;      // query workloads: population inserted (unmeasured) first
  // mixed-op weights out of their total
  uint32_t w_put = 70, w_update = 10, w_delete = 10, w_query = 10;
};

// Deterministic workload: uniform unique keys by rejection sampling, query
// keys drawn uniformly from the already-existing key population.
std::vector<WorkOp> generate_workload(const WorkloadSpec& spec);

struct OpRow {
  uint64_t op_index = 0;
  char op = 'I';  // I/U/D insert-like ops, Q point query
  uint64_t wall_ns = 0;
  uint64_t pages_read = 0;
  uint64_t pages_written = 0;
  uint64_t seeks = 0;
  uint64_t modeled_ns = 0;
};

struct Aggregate {
  uint64_t count = 0;
  double avg_wall_ns = 0;
  uint64_t max_wall_ns = 0;
  double avg_modeled_ns = 0;
  uint64_t max_modeled_ns = 0;
};

struct RunReport {
  std::vector<OpRow> rows;
  Aggregate insert;  // insert/update/delete ops
  Aggregate query;
  uint64_t oracle_mismatches = 0;
  uint64_t validations = 0;

  void recompute_aggregates();
};

struct RunOptions {
  std::string dir;             // empty = in-memory pager
  std::string csv_path;        // empty = no CSV
  bool oracle = false;         // shadow OracleMap and compare every query
  uint64_t validate_every = 0; // 0 = never
  bool keep_rows = true;
  uint64_t range_queries = 0;  // interleaved range queries checked vs the oracle
};

// Executes a workload against a fresh (or existing) index, recording per-op
// wall time and I/O deltas. CSV rows are flushed as they are produced.
// Header: op_index,op,wall_ns,pages_read,pages_written,seeks,modeled_ns
RunReport run_workload(const WorkloadSpec& spec, const Config& cfg, const RunOptions& opt);

extern const char* kCsvHeader;

struct SweepRow {
  uint64_t param_value = 0;
  Aggregate insert;
  Aggregate query;
};

// One run per parameter value (param is "f" or "sigma"); n_queries existing-key
// point queries follow the insert phase of each run.
std::vector<SweepRow> sweep(const std::string& param, const std::vector<uint64_t>& values,
                            const WorkloadSpec& base_spec, const Config& base_cfg,
                            uint64_t n_queries, const std::string& out_csv);

// Golden insertion trace at sigma=6, f=3, B=4 with four records per leaf.
// Writes a structural dump per panel and asserts the documented shapes;
// throws std::runtime_error on mismatch.
void trace_figure2(std::ostream& out);

std::string render_dump(const SNodeDump& d, uint32_t indent = 0);

}  // namespace nbtree
