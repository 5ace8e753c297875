// Acceptance suite: exercises every shipped guarantee end to end and prints
// one PASS/FAIL line per criterion. Exit code is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "nbtree/bench.hpp"
#include "nbtree/bloom.hpp"
#include "nbtree/costmodel.hpp"
#include "nbtree/engine.hpp"

using namespace nbtree;

namespace {

int failures = 0;

void report(const char* id, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

Config acceptance_cfg() {
  Config c;
  c.page_bytes = 4096;
  c.key_bytes = 8;
  c.value_bytes = 128;
  c.sigma = 1ull << 10;
  c.stree_fanout = 4;
  c.dtree_fanout = 0;  // derive from the page
  c.mode = Mode::Advanced;
  // flash-like device model so positioning costs do not dwarf a single page
  c.cost = CostParams{1e-4, 3.0e-5, 3.2e-5};
  return c;
}

// ---------------------------------------------------------------------------
// AC1: golden insertion trace

void ac1() {
  try {
    double t0 = now_s();
    std::ostringstream out;
    trace_figure2(out);
    double dt = now_s() - t0;
    bool ok = dt < 1.0;
    std::ostringstream d;
    d << "panels (a),(b),(d),(e),(f.3) matched structurally in " << dt << " s";
    report("AC1", ok, d.str());
  } catch (const std::exception& e) {
    report("AC1", false, e.what());
  }
}

// ---------------------------------------------------------------------------
// AC2 + AC6: oracle fuzz with validation checkpoints and the query I/O bound

struct FuzzOutcome {
  uint64_t point_mismatches = 0;
  uint64_t range_mismatches = 0;
  uint64_t validates = 0;
  uint64_t queries = 0;
  uint64_t bound_violations = 0;
  double seconds = 0;
  std::string error;
};

FuzzOutcome fuzz_seed(uint64_t seed, bool deamortize) {
  FuzzOutcome out;
  double t0 = now_s();
  try {
    Config cfg;
    cfg.page_bytes = 4096;
    cfg.sigma = 512;
    cfg.stree_fanout = 3;
    cfg.key_bytes = 8;
    cfg.value_bytes = 128;
    cfg.mode = Mode::Advanced;
    cfg.deamortize = deamortize;
    cfg.validate();

    auto tree = NBTree::open_in_memory(cfg);
    OracleMap oracle;
    std::mt19937_64 rng(seed * 7919 + 17);
    std::vector<uint64_t> population;

    const uint64_t n_ops = 100000;
    const uint64_t validate_every = 1000;
    const uint64_t range_every = n_ops / 100;

    uint64_t max_query_pages_window = 0;
    auto value_for = [&](uint64_t k, uint64_t tag) {
      Value v(cfg.value_bytes, '\0');
      for (uint32_t i = 0; i < cfg.value_bytes; ++i)
        v[i] = static_cast<char>((k * 31 + tag * 7 + i) & 0xff);
      return v;
    };

    for (uint64_t i = 0; i < n_ops; ++i) {
      uint64_t dice = rng() % 100;
      if (dice < 70 || population.empty()) {
        uint64_t k = rng() % 4000000;
        Value v = value_for(k, i);
        tree->insert(key_from_u64(k), v);
        oracle.apply({key_from_u64(k), Op::Put, v, 0});
        population.push_back(k);
      } else if (dice < 80) {
        uint64_t k = population[rng() % population.size()];
        Value v = value_for(k, i);
        tree->update(key_from_u64(k), v);
        oracle.apply({key_from_u64(k), Op::Update, v, 0});
      } else if (dice < 90) {
        uint64_t k = population[rng() % population.size()];
        tree->erase(key_from_u64(k));
        oracle.apply({key_from_u64(k), Op::Delete, {}, 0});
      } else {
        uint64_t k = rng() % 2 ? population[rng() % population.size()] : rng() % 4000000;
        auto got = tree->point_query(key_from_u64(k));
        if (got != oracle.get(key_from_u64(k))) out.point_mismatches++;
        out.queries++;
        max_query_pages_window =
            std::max(max_query_pages_window, tree->last_query().pages_read);
      }
      if ((i + 1) % validate_every == 0) {
        auto rep = tree->validate();
        if (!rep.ok) {
          out.error = "validate: " + rep.detail;
          return out;
        }
        out.validates++;
        uint64_t bound = static_cast<uint64_t>(rep.s_height) * (rep.max_d_height + 1);
        if (max_query_pages_window > bound) out.bound_violations++;
        max_query_pages_window = 0;
      }
      if ((i + 1) % range_every == 0) {
        uint64_t a = rng() % 4000000, b = rng() % 4000000;
        KeyRange r{key_from_u64(std::min(a, b)), key_from_u64(std::max(a, b))};
        auto got = tree->range_query(r);
        auto want = oracle.range(r);
        if (got.size() != want.size() || !std::equal(got.begin(), got.end(), want.begin()))
          out.range_mismatches++;
      }
    }
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.seconds = now_s() - t0;
  return out;
}

uint64_t g_ac6_violations = 0;
uint64_t g_ac6_queries = 0;

void ac2() {
  uint64_t point_bad = 0, range_bad = 0, validates = 0;
  double worst_seed_s = 0;
  std::string error;
  for (uint64_t seed = 1; seed <= 10 && error.empty(); ++seed) {
    for (bool deam : {false, true}) {
      auto out = fuzz_seed(seed, deam);
      point_bad += out.point_mismatches;
      range_bad += out.range_mismatches;
      validates += out.validates;
      worst_seed_s = std::max(worst_seed_s, out.seconds);
      g_ac6_violations += out.bound_violations;
      g_ac6_queries += out.queries;
      if (!error.empty()) break;
      if (!out.error.empty()) error = out.error;
    }
  }
  bool ok = error.empty() && point_bad == 0 && range_bad == 0 && validates == 10 * 2 * 100 &&
            worst_seed_s < 120.0;
  std::ostringstream d;
  if (!error.empty()) d << error << "; ";
  d << "10 seeds x 1e5 mixed ops x {deamortize off,on}: " << point_bad
    << " point mismatches, " << range_bad << " range mismatches, " << validates
    << " clean validations, worst seed " << worst_seed_s << " s";
  report("AC2", ok, d.str());
}

void ac6() {
  bool ok = g_ac6_queries > 0 && g_ac6_violations == 0;
  std::ostringstream d;
  d << g_ac6_queries << " point queries, " << g_ac6_violations
    << " exceeded H_s*(H_d+1) pages";
  report("AC6", ok, d.str());
}

// ---------------------------------------------------------------------------
// AC3: bloom false-positive band

void ac3() {
  try {
    std::mt19937_64 rng(2024);
    std::set<uint64_t> present;
    while (present.size() < 100000) present.insert(rng());
    std::vector<DeltaRecord> recs;
    uint64_t seq = 1;
    for (uint64_t k : present) recs.push_back({key_from_u64(k), Op::Put, Value(8, 'v'), seq++});
    VectorStream s(std::move(recs));
    BloomFilter bf = build_filter(s, 8, 3);

    uint64_t probes = 0, hits = 0;
    while (probes < 100000) {
      uint64_t k = rng();
      if (present.count(k)) continue;
      ++probes;
      if (bf.may_contain(key_from_u64(k))) ++hits;
    }
    double fp = double(hits) / double(probes);
    bool ok = fp >= 0.005 && fp < 0.05;
    std::ostringstream d;
    d << "k=8 h=3, 1e5 keys, 1e5 absent probes: fp = " << fp * 100 << "% (band 0.5%..5%)";
    report("AC3", ok, d.str());
  } catch (const std::exception& e) {
    report("AC3", false, e.what());
  }
}

// ---------------------------------------------------------------------------
// AC4 / AC5 / AC7 share insert runs at sigma=2^10, f=4

struct InsertRun {
  std::unique_ptr<NBTree> tree;
  std::vector<uint64_t> modeled_ns;
  uint64_t pages_written = 0;
  std::vector<Key> keys;
};

InsertRun run_inserts(uint64_t n, bool deamortize, uint64_t seed) {
  Config cfg = acceptance_cfg();
  cfg.deamortize = deamortize;
  cfg.validate();

  WorkloadSpec spec;
  spec.kind = WorkloadKind::Insert;
  spec.n_ops = n;
  spec.seed = seed;
  spec.key_bytes = cfg.key_bytes;
  spec.value_bytes = cfg.value_bytes;

  InsertRun run;
  run.tree = NBTree::open_in_memory(cfg);
  run.modeled_ns.reserve(n);
  IoStats& io = run.tree->io();
  uint64_t w0 = io.seq_write_pages;
  for (const WorkOp& op : generate_workload(spec)) {
    uint64_t seeks0 = io.seeks, reads0 = io.seq_read_pages, writes0 = io.seq_write_pages;
    run.tree->insert(op.key, op.value);
    double s = double(io.seeks - seeks0) * cfg.cost.t_seek +
               double(io.seq_read_pages - reads0) * cfg.cost.t_seq_r +
               double(io.seq_write_pages - writes0) * cfg.cost.t_seq_w;
    run.modeled_ns.push_back(static_cast<uint64_t>(std::llround(s * 1e9)));
    run.keys.push_back(op.key);
  }
  run.pages_written = io.seq_write_pages - w0;
  return run;
}

double mean_ns(const std::vector<uint64_t>& v) {
  double total = 0;
  for (uint64_t x : v) total += double(x);
  return v.empty() ? 0 : total / double(v.size());
}

uint64_t max_ns(const std::vector<uint64_t>& v) {
  uint64_t m = 0;
  for (uint64_t x : v) m = std::max(m, x);
  return m;
}

InsertRun g_run18_off;  // kept alive for AC7

void ac4() {
  try {
    Config cfg = acceptance_cfg();
    uint32_t B = cfg.internal_fanout();
    double f = cfg.stree_fanout;
    double sigma = double(cfg.sigma);
    auto predicted_shape = [&](uint64_t n) {
      return f / double(B) * std::log(double(n) / sigma) / std::log(f);
    };

    auto r14 = run_inserts(1ull << 14, false, 101);
    auto r16 = run_inserts(1ull << 16, false, 102);
    g_run18_off = run_inserts(1ull << 18, false, 103);

    double m14 = double(r14.pages_written) / double(1ull << 14);
    double m16 = double(r16.pages_written) / double(1ull << 16);
    double m18 = double(g_run18_off.pages_written) / double(1ull << 18);

    double c = m14 / predicted_shape(1ull << 14);
    double p16 = c * predicted_shape(1ull << 16);
    double p18 = c * predicted_shape(1ull << 18);
    double err16 = std::fabs(m16 - p16) / p16;
    double err18 = std::fabs(m18 - p18) / p18;
    bool ok = err16 <= 0.5 && err18 <= 0.5;
    std::ostringstream d;
    d << "pages/insert measured (predicted): 2^14 " << m14 << " (fit), 2^16 " << m16 << " ("
      << p16 << ", err " << err16 * 100 << "%), 2^18 " << m18 << " (" << p18 << ", err "
      << err18 * 100 << "%)";
    report("AC4", ok, d.str());
  } catch (const std::exception& e) {
    report("AC4", false, e.what());
  }
}

void ac5() {
  try {
    auto run_on = run_inserts(1ull << 18, true, 103);

    double mean_off = mean_ns(g_run18_off.modeled_ns);
    uint64_t max_off = max_ns(g_run18_off.modeled_ns);
    double mean_on = mean_ns(run_on.modeled_ns);
    uint64_t max_on = max_ns(run_on.modeled_ns);

    bool c1 = double(max_on) <= double(max_off) / 10.0;
    bool c2 = double(max_on) <= 20.0 * mean_on;
    bool c3 = double(max_off) >= 100.0 * mean_off;
    bool ok = c1 && c2 && c3;
    std::ostringstream d;
    d << "modeled per-insert ns: off mean " << mean_off << " max " << max_off << " (ratio "
      << double(max_off) / mean_off << "); on mean " << mean_on << " max " << max_on
      << "; max_on/max_off = " << double(max_on) / double(max_off) << ", max_on/mean_on = "
      << double(max_on) / mean_on;
    report("AC5", ok, d.str());
  } catch (const std::exception& e) {
    report("AC5", false, e.what());
  }
}

void ac7() {
  try {
    NBTree& tree = *g_run18_off.tree;
    auto rep = tree.validate();
    if (!rep.ok) {
      report("AC7", false, "tree failed validation: " + rep.detail);
      return;
    }
    std::mt19937_64 rng(555);
    const auto& keys = g_run18_off.keys;
    uint64_t searched = 0;
    const uint64_t n_q = 10000;
    for (uint64_t i = 0; i < n_q; ++i) {
      const Key& k = keys[rng() % keys.size()];
      auto got = tree.point_query(k);
      if (!got) {
        report("AC7", false, "existing key not found");
        return;
      }
      searched += tree.last_query().dtrees_searched;
    }
    double mean_searched = double(searched) / double(n_q);
    double bound = 1.0 + 0.05 * double(rep.s_height);
    bool ok = mean_searched <= bound;
    std::ostringstream d;
    d << "1e4 existing-key queries on the 2^18 tree: mean d-trees searched = " << mean_searched
      << " (bound " << bound << ", H_s = " << rep.s_height << ")";
    report("AC7", ok, d.str());
  } catch (const std::exception& e) {
    report("AC7", false, e.what());
  }
}

// ---------------------------------------------------------------------------
// AC8: cost-model oracle checks

void ac8() {
  try {
    double worst_ratio_lo = 1e9, worst_ratio_hi = 0;
    for (uint32_t f : {2u, 4u}) {
      for (uint64_t c1 : {4ull, 64ull}) {
        for (uint64_t n : {1ull << 10, 1ull << 14}) {
          auto sim = lsm_simulate(n, f, c1, 4);
          auto pred = lsm_costs(n, 4, f, c1);
          double ratio = double(sim.total_pages) / (pred.amortized_insert.alpha_seq * double(n));
          worst_ratio_lo = std::min(worst_ratio_lo, ratio);
          worst_ratio_hi = std::max(worst_ratio_hi, ratio);
        }
      }
    }
    bool lsm_ok = worst_ratio_lo >= 0.25 && worst_ratio_hi <= 4.0;

    // structural comparison on a really built tree
    Config cfg = acceptance_cfg();
    cfg.sigma = 1ull << 9;
    cfg.dtree_fanout = 6;
    cfg.mode = Mode::Basic;
    cfg.validate();
    auto tree = NBTree::open_in_memory(cfg);
    WorkloadSpec spec;
    spec.kind = WorkloadKind::Insert;
    spec.n_ops = 1ull << 14;
    spec.seed = 321;
    spec.key_bytes = cfg.key_bytes;
    spec.value_bytes = cfg.value_bytes;
    for (const WorkOp& op : generate_workload(spec)) tree->insert(op.key, op.value);
    auto rep = tree->validate();
    auto pred = nbtree_costs(spec.n_ops, cfg.internal_fanout(), cfg.stree_fanout, cfg.sigma);
    double measured = double(rep.s_height) * double(rep.max_d_height);
    double ratio = pred.worst_query_alpha / measured;
    bool struct_ok = rep.ok && ratio >= 0.5 && ratio <= 2.0;

    bool ok = lsm_ok && struct_ok;
    std::ostringstream d;
    d << "lsm sim/pred ratios in [" << worst_ratio_lo << ", " << worst_ratio_hi
      << "] (band 0.25..4); nbtree query alpha " << pred.worst_query_alpha << " vs H_s*H_d "
      << measured << " (ratio " << ratio << ", band 0.5..2)";
    report("AC8", ok, d.str());
  } catch (const std::exception& e) {
    report("AC8", false, e.what());
  }
}

// ---------------------------------------------------------------------------
// AC9: persistence round trip and atomic manifest replacement

void ac9() {
  std::string dir = "/tmp/nbtree_acceptance_persist";
  try {
    std::filesystem::remove_all(dir);
    Config cfg = acceptance_cfg();
    cfg.sigma = 512;
    cfg.stree_fanout = 3;
    cfg.validate();

    OracleMap oracle;
    std::mt19937_64 rng(777);
    std::vector<uint64_t> population;
    {
      auto tree = NBTree::open(dir, cfg);
      for (int i = 0; i < 10000; ++i) {
        uint64_t dice = rng() % 10;
        if (dice < 7 || population.empty()) {
          uint64_t k = rng() % 1000000;
          Value v(cfg.value_bytes, static_cast<char>(k & 0x7f));
          tree->insert(key_from_u64(k), v);
          oracle.apply({key_from_u64(k), Op::Put, v, 0});
          population.push_back(k);
        } else if (dice < 8) {
          uint64_t k = population[rng() % population.size()];
          tree->erase(key_from_u64(k));
          oracle.apply({key_from_u64(k), Op::Delete, {}, 0});
        } else {
          uint64_t k = population[rng() % population.size()];
          Value v(cfg.value_bytes, static_cast<char>((k + i) & 0x7f));
          tree->update(key_from_u64(k), v);
          oracle.apply({key_from_u64(k), Op::Update, v, 0});
        }
      }
      tree->close();
    }
    bool atomic_ok = std::filesystem::exists(dir + "/manifest") &&
                     !std::filesystem::exists(dir + "/manifest.tmp");
    // a stray temp file must not affect a reopen
    std::ofstream(dir + "/manifest.tmp") << "interrupted";
    uint64_t mismatches = 0;
    bool valid_ok = false;
    {
      auto tree = NBTree::open(dir, cfg);
      valid_ok = tree->validate().ok;
      for (uint64_t k : population) {
        if (tree->point_query(key_from_u64(k)) != oracle.get(key_from_u64(k))) ++mismatches;
      }
      KeyRange all{key_from_u64(0), key_from_u64(~0ull)};
      auto got = tree->range_query(all);
      auto want = oracle.range(all);
      if (got.size() != want.size() || !std::equal(got.begin(), got.end(), want.begin()))
        ++mismatches;
      tree->close();
    }
    bool ok = atomic_ok && valid_ok && mismatches == 0;
    std::ostringstream d;
    d << "1e4 mixed ops, close/open: " << mismatches
      << " answer mismatches, validate " << (valid_ok ? "ok" : "failed")
      << ", manifest replaced atomically " << (atomic_ok ? "(tmp renamed away)" : "(tmp left!)");
    report("AC9", ok, d.str());
    std::filesystem::remove_all(dir);
  } catch (const std::exception& e) {
    std::filesystem::remove_all(dir);
    report("AC9", false, e.what());
  }
}

// ---------------------------------------------------------------------------
// AC10: parameter-sweep directions

void ac10() {
  try {
    Config cfg = acceptance_cfg();
    cfg.stree_fanout = 3;
    WorkloadSpec spec;
    spec.kind = WorkloadKind::Insert;
    spec.n_ops = 1ull << 14;
    spec.seed = 888;
    spec.key_bytes = cfg.key_bytes;
    spec.value_bytes = cfg.value_bytes;

    auto nondecreasing = [](const std::vector<SweepRow>& rows) {
      for (size_t i = 1; i < rows.size(); ++i)
        if (rows[i].insert.avg_modeled_ns < rows[i - 1].insert.avg_modeled_ns) return false;
      return true;
    };

    Config small_sigma = cfg;
    small_sigma.sigma = 1ull << 7;
    auto rows_f_small = sweep("f", {3, 6, 9, 12}, spec, small_sigma, 500, "");
    Config large_sigma = cfg;
    large_sigma.sigma = 1ull << 10;
    WorkloadSpec spec_large = spec;  // keep n/sigma deep enough for the trend to express
    spec_large.n_ops = 1ull << 16;
    auto rows_f_large = sweep("f", {3, 6, 9, 12}, spec_large, large_sigma, 500, "");
    bool f_ok = nondecreasing(rows_f_small) && nondecreasing(rows_f_large);

    auto rows_sigma = sweep("sigma", {1ull << 7, 1ull << 8, 1ull << 9, 1ull << 10}, spec, cfg,
                            500, "");
    bool sigma_ok = true;
    for (size_t i = 1; i < rows_sigma.size(); ++i)
      if (rows_sigma[i].insert.avg_modeled_ns > rows_sigma[i - 1].insert.avg_modeled_ns)
        sigma_ok = false;

    bool ok = f_ok && sigma_ok;
    std::ostringstream d;
    d << "avg modeled insert ns over f={3,6,9,12}: sigma=2^7 [";
    for (auto& r : rows_f_small) d << " " << r.insert.avg_modeled_ns;
    d << " ], sigma=2^10 [";
    for (auto& r : rows_f_large) d << " " << r.insert.avg_modeled_ns;
    d << " ] nondecreasing=" << (f_ok ? "yes" : "no") << "; over sigma={2^7..2^10} [";
    for (auto& r : rows_sigma) d << " " << r.insert.avg_modeled_ns;
    d << " ] nonincreasing=" << (sigma_ok ? "yes" : "no");
    report("AC10", ok, d.str());
  } catch (const std::exception& e) {
    report("AC10", false, e.what());
  }
}

}  // namespace

int main() {
  double t0 = now_s();
  ac1();
  ac2();
  ac3();
  ac4();
  ac5();
  ac6();
  ac7();
  ac8();
  ac9();
  ac10();
  std::printf("acceptance finished in %.1f s: %d failure(s)\n", now_s() - t0, failures);
  return failures;
}
