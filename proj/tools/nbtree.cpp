#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nbtree/bench.hpp"
#include "nbtree/costmodel.hpp"
#include "nbtree/engine.hpp"

using namespace nbtree;

namespace {

struct CommonOpts {
  Config cfg;
  uint64_t sigma_bytes = 0;
  std::string mode = "advanced";
  std::string dir;
  uint64_t seed = 1;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--sigma", o.cfg.sigma, "max records per d-tree");
  cmd->add_option("--sigma-bytes", o.sigma_bytes,
                  "d-tree budget in bytes, converted via key+value size");
  cmd->add_option("--fanout", o.cfg.stree_fanout, "s-tree fanout f");
  cmd->add_option("--dtree-fanout", o.cfg.dtree_fanout,
                  "d-tree fanout B (0 = largest fitting a page)");
  cmd->add_option("--page-bytes", o.cfg.page_bytes, "disk page size");
  cmd->add_option("--key-bytes", o.cfg.key_bytes, "key size");
  cmd->add_option("--value-bytes", o.cfg.value_bytes, "value size");
  cmd->add_option("--bloom-bits", o.cfg.bloom_bits_per_key, "bloom bits per key");
  cmd->add_option("--bloom-hashes", o.cfg.bloom_hashes, "bloom hash probes");
  cmd->add_option("--mode", o.mode, "basic|advanced")->check(CLI::IsMember({"basic", "advanced"}));
  cmd->add_flag("--deamortize", o.cfg.deamortize, "spread cascade work over insertions");
  cmd->add_option("--t-seek", o.cfg.cost.t_seek, "modeled seconds per seek");
  cmd->add_option("--t-seq-r", o.cfg.cost.t_seq_r, "modeled seconds per page read");
  cmd->add_option("--t-seq-w", o.cfg.cost.t_seq_w, "modeled seconds per page write");
  cmd->add_option("--memory-budget", o.cfg.memory_budget, "bytes available for the buffer");
  cmd->add_option("--seed", o.seed, "workload seed");
  cmd->add_option("--dir", o.dir, "index directory (default $NBTREE_DIR, else in-memory)")
      ->envname("NBTREE_DIR");
}

Config resolve(CommonOpts& o) {
  if (o.sigma_bytes > 0) o.cfg.sigma = o.sigma_bytes / (o.cfg.key_bytes + o.cfg.value_bytes);
  o.cfg.mode = o.mode == "basic" ? Mode::Basic : Mode::Advanced;
  o.cfg.validate();
  return o.cfg;
}

void print_aggregates(const RunReport& rep) {
  auto show = [](const char* what, const Aggregate& a) {
    if (a.count == 0) return;
    std::printf("%s: n=%llu avg_wall=%.0f ns max_wall=%llu ns avg_modeled=%.0f ns "
                "max_modeled=%llu ns\n",
                what, static_cast<unsigned long long>(a.count), a.avg_wall_ns,
                static_cast<unsigned long long>(a.max_wall_ns), a.avg_modeled_ns,
                static_cast<unsigned long long>(a.max_modeled_ns));
  };
  show("insert", rep.insert);
  show("query", rep.query);
  if (rep.oracle_mismatches)
    std::printf("oracle mismatches: %llu\n",
                static_cast<unsigned long long>(rep.oracle_mismatches));
}

std::vector<uint64_t> parse_u64_list(const std::string& csv) {
  std::vector<uint64_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nbtree: a write-optimized nested B-tree index and its benchmark driver"};
  app.require_subcommand(1);

  // ---- bench ----
  auto* bench = app.add_subcommand("bench", "run a measured workload");
  bench->require_subcommand(1);

  CommonOpts bi;
  uint64_t bi_n = 100000;
  std::string bi_out;
  bool bi_oracle = false;
  uint64_t bi_validate_every = 0;
  auto* bench_insert = bench->add_subcommand("insert", "insert workload");
  bench_insert->add_option("--n", bi_n, "number of insertions");
  bench_insert->add_option("--out", bi_out, "per-op CSV path");
  bench_insert->add_flag("--oracle", bi_oracle, "shadow in-memory oracle and compare");
  bench_insert->add_option("--validate-every", bi_validate_every, "audit every N ops");
  add_common(bench_insert, bi);

  CommonOpts bq;
  uint64_t bq_n = 10000, bq_preload = 100000;
  std::string bq_out;
  bool bq_absent = false, bq_oracle = false;
  auto* bench_query = bench->add_subcommand("query", "point-query workload");
  bench_query->add_option("--n-queries", bq_n, "number of point queries");
  bench_query->add_option("--preload", bq_preload, "records inserted (unmeasured) first");
  bench_query->add_flag("--absent", bq_absent, "draw query keys from absent keys");
  bench_query->add_option("--out", bq_out, "per-op CSV path");
  bench_query->add_flag("--oracle", bq_oracle, "shadow in-memory oracle and compare");
  add_common(bench_query, bq);

  // ---- sweep ----
  CommonOpts sw;
  std::string sw_param = "f", sw_values, sw_out;
  uint64_t sw_n = 1 << 14, sw_queries = 2000;
  auto* sweep_cmd = app.add_subcommand("sweep", "one run per parameter value");
  sweep_cmd->add_option("--param", sw_param, "f or sigma")
      ->check(CLI::IsMember({"f", "sigma"}));
  sweep_cmd->add_option("--values", sw_values, "comma-separated values")->required();
  sweep_cmd->add_option("--n", sw_n, "insertions per run");
  sweep_cmd->add_option("--n-queries", sw_queries, "queries per run");
  sweep_cmd->add_option("--out", sw_out, "CSV path");
  add_common(sweep_cmd, sw);

  // ---- validate ----
  std::string v_dir;
  auto* validate_cmd = app.add_subcommand("validate", "audit an index directory");
  validate_cmd->add_option("--dir", v_dir, "index directory")->envname("NBTREE_DIR")->required();

  // ---- trace ----
  auto* trace = app.add_subcommand("trace", "golden structural traces");
  trace->require_subcommand(1);
  std::string tr_out;
  auto* trace_fig2 = trace->add_subcommand("figure2", "buffered-insert / flush / split trace");
  trace_fig2->add_option("--out", tr_out, "dump path (default stdout)");

  // ---- costmodel ----
  std::string cm_n = "1048576", cm_structures = "nbtree,lsm,btree,beps", cm_out;
  CommonOpts cm;
  uint64_t cm_c1 = 64;
  uint32_t cm_B = 256;
  uint32_t cm_seeks_per_merge = 3;
  auto* costmodel_cmd = app.add_subcommand("costmodel", "closed-form cost predictions");
  costmodel_cmd->add_option("--n", cm_n, "comma-separated data sizes");
  costmodel_cmd->add_option("--structures", cm_structures, "nbtree,lsm,btree,beps");
  costmodel_cmd->add_option("--dtree-b", cm_B, "page fanout B used in the formulas");
  costmodel_cmd->add_option("--c1", cm_c1, "first LSM component size");
  costmodel_cmd->add_option("--seeks-per-merge", cm_seeks_per_merge, "LSM simulator seek charge");
  costmodel_cmd->add_option("--out", cm_out, "CSV path (default stdout)");
  add_common(costmodel_cmd, cm);

  CLI11_PARSE(app, argc, argv);

  try {
    if (bench_insert->parsed()) {
      Config cfg = resolve(bi);
      WorkloadSpec spec;
      spec.kind = WorkloadKind::Insert;
      spec.n_ops = bi_n;
      spec.seed = bi.seed;
      spec.key_bytes = cfg.key_bytes;
      spec.value_bytes = cfg.value_bytes;
      RunOptions opt;
      opt.dir = bi.dir;
      opt.csv_path = bi_out;
      opt.oracle = bi_oracle;
      opt.validate_every = bi_validate_every;
      auto rep = run_workload(spec, cfg, opt);
      print_aggregates(rep);
      return rep.oracle_mismatches == 0 ? 0 : 2;
    }
    if (bench_query->parsed()) {
      Config cfg = resolve(bq);
      WorkloadSpec spec;
      spec.kind = WorkloadKind::Query;
      spec.n_ops = bq_n;
      spec.preload_n = bq_preload;
      spec.seed = bq.seed;
      spec.key_bytes = cfg.key_bytes;
      spec.value_bytes = cfg.value_bytes;
      spec.query_absent = bq_absent;
      RunOptions opt;
      opt.dir = bq.dir;
      opt.csv_path = bq_out;
      opt.oracle = bq_oracle;
      auto rep = run_workload(spec, cfg, opt);
      print_aggregates(rep);
      return rep.oracle_mismatches == 0 ? 0 : 2;
    }
    if (sweep_cmd->parsed()) {
      Config cfg = resolve(sw);
      WorkloadSpec spec;
      spec.kind = WorkloadKind::Insert;
      spec.n_ops = sw_n;
      spec.seed = sw.seed;
      spec.key_bytes = cfg.key_bytes;
      spec.value_bytes = cfg.value_bytes;
      auto rows = sweep(sw_param, parse_u64_list(sw_values), spec, cfg, sw_queries, sw_out);
      for (const auto& r : rows)
        std::printf("%s=%llu avg_insert_modeled=%.0f ns avg_query_modeled=%.0f ns\n",
                    sw_param.c_str(), static_cast<unsigned long long>(r.param_value),
                    r.insert.avg_modeled_ns, r.query.avg_modeled_ns);
      return 0;
    }
    if (validate_cmd->parsed()) {
      auto tree = NBTree::open_existing(v_dir);
      auto rep = tree->validate();
      if (rep.ok) {
        std::printf("ok: %llu s-nodes, %llu d-trees, %llu live records, s-height %u, "
                    "max d-height %u\n",
                    static_cast<unsigned long long>(rep.snodes),
                    static_cast<unsigned long long>(rep.dtrees),
                    static_cast<unsigned long long>(rep.live_records), rep.s_height,
                    rep.max_d_height);
        return 0;
      }
      std::printf("invariant violated: %s\n", rep.detail.c_str());
      return 2;
    }
    if (trace_fig2->parsed()) {
      if (tr_out.empty()) {
        trace_figure2(std::cout);
      } else {
        std::ofstream f(tr_out, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tr_out);
        trace_figure2(f);
      }
      std::printf("trace figure2: all asserted panels matched\n");
      return 0;
    }
    if (costmodel_cmd->parsed()) {
      Config cfg = resolve(cm);
      std::ostream* os = &std::cout;
      std::ofstream f;
      if (!cm_out.empty()) {
        f.open(cm_out, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + cm_out);
        os = &f;
      }
      *os << "structure,n,B,f,sigma_or_c1,amort_alpha,amort_beta,amort_s,"
             "worst_alpha,worst_beta,worst_s,query_alpha,query_s,sim_pages,sim_seeks\n";
      for (uint64_t n : parse_u64_list(cm_n)) {
        std::stringstream ss(cm_structures);
        std::string s;
        while (std::getline(ss, s, ',')) {
          CostPrediction p;
          uint64_t knob = 0;
          uint64_t sim_pages = 0, sim_seeks = 0;
          if (s == "nbtree") {
            p = nbtree_costs(n, cm_B, cfg.stree_fanout, cfg.sigma);
            knob = cfg.sigma;
          } else if (s == "lsm") {
            p = lsm_costs(n, cm_B, cfg.stree_fanout, cm_c1);
            knob = cm_c1;
            auto sim = lsm_simulate(n, cfg.stree_fanout, cm_c1, cm_B, cm_seeks_per_merge);
            sim_pages = sim.total_pages;
            sim_seeks = sim.total_seeks;
          } else if (s == "btree") {
            p = btree_costs(n, cm_B);
          } else if (s == "beps") {
            p = beps_costs(n, cm_B, cfg.stree_fanout);
          } else {
            throw std::invalid_argument("unknown structure " + s);
          }
          *os << s << ',' << n << ',' << cm_B << ',' << cfg.stree_fanout << ',' << knob << ','
              << p.amortized_insert.alpha_seq << ',' << p.amortized_insert.beta_seek << ','
              << p.amortized_insert_s(cfg.cost) << ',' << p.worst_insert.alpha_seq << ','
              << p.worst_insert.beta_seek << ',' << p.worst_insert_s(cfg.cost) << ','
              << p.worst_query_alpha << ',' << p.worst_query_s(cfg.cost) << ',' << sim_pages
              << ',' << sim_seeks << '\n';
        }
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
