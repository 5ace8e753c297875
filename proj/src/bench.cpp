#include "nbtree/bench.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace nbtree {

const char* kCsvHeader = "op_index,op,wall_ns,pages_read,pages_written,seeks,modeled_ns";

namespace {

Key random_key(std::mt19937_64& rng, uint32_t key_bytes) {
  Key k(key_bytes, '\0');
  for (uint32_t i = 0; i < key_bytes; ++i) k[i] = static_cast<char>(rng() & 0xff);
  return k;
}

Value random_value(std::mt19937_64& rng, uint32_t value_bytes) {
  Value v(value_bytes, '\0');
  for (uint32_t i = 0; i < value_bytes; ++i) v[i] = static_cast<char>(rng() & 0xff);
  return v;
}

Key fresh_key(std::mt19937_64& rng, uint32_t key_bytes, std::set<Key>& used) {
  if (key_bytes <= 8) {
    double space = std::pow(256.0, key_bytes);
    if (static_cast<double>(used.size()) >= space)
      throw std::invalid_argument("key space exhausted for the requested op count");
  }
  for (;;) {
    Key k = random_key(rng, key_bytes);
    if (used.insert(k).second) return k;
  }
}

}  // namespace

std::vector<WorkOp> generate_workload(const WorkloadSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::set<Key> used;
  std::vector<Key> population;  // every key ever inserted
  std::vector<WorkOp> ops;
  ops.reserve(spec.n_ops);

  auto gen_put = [&]() {
    WorkOp op;
    op.op = Op::Put;
    op.key = fresh_key(rng, spec.key_bytes, used);
    op.value = random_value(rng, spec.value_bytes);
    population.push_back(op.key);
    return op;
  };
  auto pick_existing = [&]() { return population[rng() % population.size()]; };

  switch (spec.kind) {
    case WorkloadKind::Insert:
      for (uint64_t i = 0; i < spec.n_ops; ++i) ops.push_back(gen_put());
      break;
    case WorkloadKind::Query: {
      // regenerate the preloaded population in insert order, then query it
      for (uint64_t i = 0; i < spec.preload_n; ++i) gen_put();
      ops.clear();
      for (uint64_t i = 0; i < spec.n_ops; ++i) {
        WorkOp op;
        op.is_query = true;
        if (spec.query_absent || population.empty())
          op.key = fresh_key(rng, spec.key_bytes, used);
        else
          op.key = pick_existing();
        ops.push_back(op);
      }
      break;
    }
    case WorkloadKind::Mixed: {
      uint64_t total = spec.w_put + spec.w_update + spec.w_delete + spec.w_query;
      if (total == 0) throw std::invalid_argument("mixed workload weights sum to zero");
      for (uint64_t i = 0; i < spec.n_ops; ++i) {
        uint64_t pick = rng() % total;
        if (pick < spec.w_put || population.empty()) {
          ops.push_back(gen_put());
          continue;
        }
        WorkOp op;
        if (pick < spec.w_put + spec.w_update) {
          op.op = Op::Update;
          op.key = pick_existing();
          op.value = random_value(rng, spec.value_bytes);
        } else if (pick < spec.w_put + spec.w_update + spec.w_delete) {
          op.op = Op::Delete;
          op.key = pick_existing();
        } else {
          op.is_query = true;
          op.key = pick_existing();
        }
        ops.push_back(op);
      }
      break;
    }
  }
  return ops;
}

void RunReport::recompute_aggregates() {
  insert = Aggregate{};
  query = Aggregate{};
  uint64_t wall_i = 0, wall_q = 0, mod_i = 0, mod_q = 0;
  for (const OpRow& r : rows) {
    Aggregate& a = r.op == 'Q' ? query : insert;
    uint64_t& wall = r.op == 'Q' ? wall_q : wall_i;
    uint64_t& mod = r.op == 'Q' ? mod_q : mod_i;
    a.count++;
    wall += r.wall_ns;
    mod += r.modeled_ns;
    a.max_wall_ns = std::max(a.max_wall_ns, r.wall_ns);
    a.max_modeled_ns = std::max(a.max_modeled_ns, r.modeled_ns);
  }
  if (insert.count) {
    insert.avg_wall_ns = static_cast<double>(wall_i) / insert.count;
    insert.avg_modeled_ns = static_cast<double>(mod_i) / insert.count;
  }
  if (query.count) {
    query.avg_wall_ns = static_cast<double>(wall_q) / query.count;
    query.avg_modeled_ns = static_cast<double>(mod_q) / query.count;
  }
}

namespace {

struct Runner {
  NBTree& tree;
  const Config& cfg;
  std::ofstream* csv = nullptr;
  RunReport report;
  OracleMap oracle;
  bool with_oracle = false;
  uint64_t next_index = 0;

  uint64_t modeled_ns(uint64_t d_seeks, uint64_t d_reads, uint64_t d_writes) const {
    double s = static_cast<double>(d_seeks) * cfg.cost.t_seek +
               static_cast<double>(d_reads) * cfg.cost.t_seq_r +
               static_cast<double>(d_writes) * cfg.cost.t_seq_w;
    return static_cast<uint64_t>(std::llround(s * 1e9));
  }

  void exec(const WorkOp& op, bool keep_rows) {
    IoStats& io = tree.io();
    uint64_t seeks0 = io.seeks, reads0 = io.seq_read_pages, writes0 = io.seq_write_pages;
    auto t0 = std::chrono::steady_clock::now();
    std::optional<Value> qres;
    if (op.is_query) {
      qres = tree.point_query(op.key);
    } else if (op.op == Op::Put) {
      tree.insert(op.key, op.value);
    } else if (op.op == Op::Update) {
      tree.update(op.key, op.value);
    } else {
      tree.erase(op.key);
    }
    auto t1 = std::chrono::steady_clock::now();

    OpRow row;
    row.op_index = next_index++;
    row.op = op.is_query ? 'Q' : (op.op == Op::Put ? 'I' : (op.op == Op::Update ? 'U' : 'D'));
    row.wall_ns = static_cast<uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
    row.pages_read = io.seq_read_pages - reads0;
    row.pages_written = io.seq_write_pages - writes0;
    row.seeks = io.seeks - seeks0;
    row.modeled_ns = modeled_ns(row.seeks, row.pages_read, row.pages_written);

    if (with_oracle) {
      if (op.is_query) {
        if (qres != oracle.get(op.key)) report.oracle_mismatches++;
      } else {
        DeltaRecord rec{op.key, op.op, op.op == Op::Delete ? Value{} : op.value, 0};
        oracle.apply(rec);
      }
    }
    if (csv && csv->is_open()) {
      *csv << row.op_index << ',' << row.op << ',' << row.wall_ns << ',' << row.pages_read
           << ',' << row.pages_written << ',' << row.seeks << ',' << row.modeled_ns << '\n';
    }
    if (keep_rows) report.rows.push_back(row);
  }
};

}  // namespace

RunReport run_workload(const WorkloadSpec& spec, const Config& cfg, const RunOptions& opt) {
  if (cfg.memory_budget > 0 &&
      cfg.sigma * (cfg.key_bytes + cfg.value_bytes) > cfg.memory_budget)
    throw std::invalid_argument("sigma exceeds the memory budget");
  if (spec.key_bytes != cfg.key_bytes || spec.value_bytes != cfg.value_bytes)
    throw std::invalid_argument("workload key/value sizes do not match the config");

  auto tree = opt.dir.empty() ? NBTree::open_in_memory(cfg) : NBTree::open(opt.dir, cfg);
  if (opt.oracle && tree->next_seq() != 1)
    throw std::invalid_argument(
        "--oracle needs a fresh index: the shadow model cannot see prior contents");

  std::ofstream csv;
  if (!opt.csv_path.empty()) {
    csv.open(opt.csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot open CSV output " + opt.csv_path);
    csv << kCsvHeader << '\n';
  }

  Runner runner{*tree, cfg};
  runner.csv = &csv;
  runner.with_oracle = opt.oracle;

  if (spec.kind == WorkloadKind::Query && spec.preload_n > 0 && tree->next_seq() == 1) {
    WorkloadSpec pre = spec;
    pre.kind = WorkloadKind::Insert;
    pre.n_ops = spec.preload_n;
    for (const WorkOp& op : generate_workload(pre)) {
      tree->insert(op.key, op.value);
      if (opt.oracle) runner.oracle.apply({op.key, Op::Put, op.value, 0});
    }
  }

  auto ops = generate_workload(spec);

  // deterministic interleaving for range checks: spread evenly over the run
  uint64_t range_stride =
      opt.range_queries > 0 ? std::max<uint64_t>(1, ops.size() / opt.range_queries) : 0;
  std::mt19937_64 range_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);

  for (size_t i = 0; i < ops.size(); ++i) {
    runner.exec(ops[i], opt.keep_rows);

    if (opt.validate_every > 0 && (i + 1) % opt.validate_every == 0) {
      auto rep = tree->validate();
      if (!rep.ok) throw std::runtime_error("validate failed at op " + std::to_string(i) +
                                            ": " + rep.detail);
      runner.report.validations++;
    }
    if (range_stride > 0 && (i + 1) % range_stride == 0 && opt.oracle) {
      Key a = random_key(range_rng, cfg.key_bytes);
      Key b = random_key(range_rng, cfg.key_bytes);
      KeyRange r{std::min(a, b), std::max(a, b)};
      auto got = tree->range_query(r);
      auto want = runner.oracle.range(r);
      if (got.size() != want.size() ||
          !std::equal(got.begin(), got.end(), want.begin()))
        runner.report.oracle_mismatches++;
    }
  }

  tree->close();
  runner.report.recompute_aggregates();
  return runner.report;
}

std::vector<SweepRow> sweep(const std::string& param, const std::vector<uint64_t>& values,
                            const WorkloadSpec& base_spec, const Config& base_cfg,
                            uint64_t n_queries, const std::string& out_csv) {
  if (values.size() < 2) throw std::invalid_argument("sweep needs at least two values");
  if (param != "f" && param != "sigma") throw std::invalid_argument("sweep param must be f or sigma");

  std::vector<SweepRow> rows;
  for (uint64_t v : values) {
    Config cfg = base_cfg;
    if (param == "f")
      cfg.stree_fanout = static_cast<uint32_t>(v);
    else
      cfg.sigma = v;
    cfg.validate();
    if (cfg.memory_budget > 0 &&
        cfg.sigma * (cfg.key_bytes + cfg.value_bytes) > cfg.memory_budget)
      throw std::invalid_argument("sigma exceeds the memory budget");

    auto tree = NBTree::open_in_memory(cfg);
    Runner runner{*tree, cfg};

    WorkloadSpec ins = base_spec;
    ins.kind = WorkloadKind::Insert;
    for (const WorkOp& op : generate_workload(ins)) runner.exec(op, true);

    WorkloadSpec q = base_spec;
    q.kind = WorkloadKind::Query;
    q.preload_n = ins.n_ops;
    q.n_ops = n_queries;
    for (const WorkOp& op : generate_workload(q)) runner.exec(op, true);

    runner.report.recompute_aggregates();
    rows.push_back({v, runner.report.insert, runner.report.query});
  }

  if (!out_csv.empty()) {
    std::ofstream f(out_csv, std::ios::trunc);
    f << "param,value,avg_insert_wall_ns,max_insert_wall_ns,avg_insert_modeled_ns,"
         "max_insert_modeled_ns,avg_query_wall_ns,max_query_wall_ns,avg_query_modeled_ns,"
         "max_query_modeled_ns\n";
    for (const SweepRow& r : rows)
      f << param << ',' << r.param_value << ',' << r.insert.avg_wall_ns << ','
        << r.insert.max_wall_ns << ',' << r.insert.avg_modeled_ns << ','
        << r.insert.max_modeled_ns << ',' << r.query.avg_wall_ns << ',' << r.query.max_wall_ns
        << ',' << r.query.avg_modeled_ns << ',' << r.query.max_modeled_ns << '\n';
  }
  return rows;
}

std::string render_dump(const SNodeDump& d, uint32_t indent) {
  std::ostringstream os;
  std::string pad(indent * 2, ' ');
  os << pad << "s-node " << d.id << " level=" << d.level;
  os << " s_keys=[";
  for (size_t i = 0; i < d.s_keys.size(); ++i)
    os << (i ? "," : "") << key_to_u64(d.s_keys[i]);
  os << "]";
  os << (d.is_root_buffer ? " buffer=[" : " dtree=[");
  for (size_t i = 0; i < d.dtree_keys.size(); ++i)
    os << (i ? "," : "") << key_to_u64(d.dtree_keys[i]);
  os << "]";
  if (d.live_start_key) os << " live_from=" << key_to_u64(*d.live_start_key);
  os << '\n';
  for (const SNodeDump& c : d.children) os << render_dump(c, indent + 1);
  return os.str();
}

namespace {

std::vector<uint64_t> dump_keys(const SNodeDump& d) {
  std::vector<uint64_t> out;
  for (const Key& k : d.dtree_keys) out.push_back(key_to_u64(k));
  return out;
}

std::vector<uint64_t> dump_skeys(const SNodeDump& d) {
  std::vector<uint64_t> out;
  for (const Key& k : d.s_keys) out.push_back(key_to_u64(k));
  return out;
}

void expect(bool cond, const std::string& what) {
  if (!cond) throw std::runtime_error("trace figure2: " + what);
}

}  // namespace

void trace_figure2(std::ostream& out) {
  Config cfg;
  cfg.sigma = 6;
  cfg.stree_fanout = 3;
  cfg.dtree_fanout = 4;
  cfg.key_bytes = 8;
  cfg.value_bytes = 8;
  cfg.page_bytes = 3 + 4ull * cfg.record_size();  // four records per leaf d-node
  cfg.mode = Mode::Basic;
  cfg.deamortize = false;
  cfg.validate();
  if (cfg.leaf_capacity() != 4)
    throw std::logic_error("trace figure2: leaf capacity is not four records");

  auto tree = NBTree::open_in_memory(cfg);
  auto put = [&](uint64_t k) { tree->insert(key_from_u64(k), key_from_u64(k)); };
  auto panel = [&](const char* name) {
    SNodeDump d = tree->dump();
    out << "panel (" << name << ")\n" << render_dump(d, 1);
    return d;
  };

  for (uint64_t k : {1, 2, 8, 15, 21, 32}) put(k);
  {
    auto d = panel("a");
    expect(d.children.empty(), "panel a: expected a single s-node");
    expect(dump_keys(d) == std::vector<uint64_t>({1, 2, 8, 15, 21, 32}),
           "panel a: buffer must hold 1,2,8,15,21,32");
  }

  put(33);
  {
    auto d = panel("b");
    expect(dump_skeys(d) == std::vector<uint64_t>({15}), "panel b: root s-key must be 15");
    expect(d.children.size() == 2, "panel b: root must have two children");
    expect(dump_keys(d).empty(), "panel b: fresh root buffer must be empty");
    expect(dump_keys(d.children[0]) == std::vector<uint64_t>({1, 2, 8}),
           "panel b: left leaf must hold 1,2,8");
    expect(dump_keys(d.children[1]) == std::vector<uint64_t>({15, 21, 32, 33}),
           "panel b: right leaf must hold 15,21,32,33");
  }

  for (uint64_t k : {3, 4, 5, 16, 18, 20}) put(k);
  panel("c");

  put(60);
  {
    auto d = panel("d");
    expect(dump_skeys(d) == std::vector<uint64_t>({15, 20}),
           "panel d: root s-keys must be 15,20");
    expect(d.children.size() == 3, "panel d: root must have three children");
  }

  for (uint64_t k : {10, 11, 12, 13, 14}) put(k);
  {
    auto d = panel("e");
    expect(dump_skeys(d) == std::vector<uint64_t>({15, 20}),
           "panel e: root s-keys must be 15,20");
    expect(d.dtree_keys.size() == 6, "panel e: root buffer must be full");
  }

  put(70);
  {
    auto d = panel("f.3");
    expect(dump_skeys(d) == std::vector<uint64_t>({15}),
           "panel f.3: the split must promote median 15 into the new root");
    expect(d.children.size() == 2, "panel f.3: new root must have two children");
    expect(!d.children[0].children.empty() && !d.children[1].children.empty(),
           "panel f.3: both subtrees must be non-leaf");
  }

  auto rep = tree->validate();
  expect(rep.ok, "final validate failed: " + rep.detail);
}

}  // namespace nbtree
