// visinf: planning, preprocessing-plan inspection, JPEG decode debugging,
// pipeline benchmarks and cost-model validation.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "visinf/catalog.hpp"
#include "visinf/costmodel.hpp"
#include "visinf/csv.hpp"
#include "visinf/dagopt.hpp"
#include "visinf/engine.hpp"
#include "visinf/image.hpp"
#include "visinf/jpegdec.hpp"
#include "visinf/planner.hpp"

namespace {

using nlohmann::json;
using namespace visinf;

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kInfeasible = 2;

// Thrown for bad flags or files; maps to exit code 1.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw InputError("cannot write " + out_path);
  out << text;
}

std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---- plan -----------------------------------------------------------------

struct PlanArgs {
  std::string catalog;
  std::optional<double> min_accuracy;
  std::optional<double> min_throughput;
  std::string out;
};

int cmd_plan(const PlanArgs& a) {
  const auto cat = load_catalog(a.catalog);
  const auto plans = generate_plans(cat);
  std::optional<PlanConfig> selected;
  if (a.min_accuracy) {
    selected = planner::select_plan(plans, planner::Constraint::min_accuracy(*a.min_accuracy));
  } else if (a.min_throughput) {
    selected = planner::select_plan(plans, planner::Constraint::min_throughput(*a.min_throughput));
  }
  emit(planner::plan_report(plans, selected).dump(2) + "\n", a.out);
  return kOk;
}

// ---- optimize-dag -----------------------------------------------------------

struct DagArgs {
  int height{1080};
  int width{1920};
  int resize_short{256};
  int crop{224};
  std::string out;
};

int cmd_optimize_dag(const DagArgs& a) {
  dag::PreprocGraph g;
  try {
    g = dag::canonical_pipeline(a.height, a.width, a.resize_short, a.crop);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  const auto candidates = dag::enumerate_orderings(g);
  const auto pruned = dag::prune_plans(candidates);
  const auto best = dag::optimize(g);
  json j{{"canonical", dag::to_json(g)},
         {"canonical_signature", dag::plan_signature(g)},
         {"canonical_cost", dag::plan_cost(g).arithmetic_ops},
         {"candidates", candidates.size()},
         {"after_pruning", pruned.size()},
         {"optimized", dag::to_json(best)},
         {"optimized_signature", dag::plan_signature(best)},
         {"optimized_cost", dag::plan_cost(best).arithmetic_ops}};
  emit(j.dump(2) + "\n", a.out);
  return kOk;
}

// ---- decode -----------------------------------------------------------------

struct DecodeArgs {
  std::string input;
  std::string roi;
  std::optional<int> rows;
  std::string out;
  bool stats{false};
};

jpeg::RoiSpec parse_roi(const std::string& s) {
  std::vector<int> v;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw InputError("--roi expects l,t,r,b integers, got '" + s + "'");
    }
  }
  if (v.size() != 4) throw InputError("--roi expects 4 values l,t,r,b");
  return {v[0], v[1], v[2], v[3]};
}

int cmd_decode(const DecodeArgs& a) {
  if (!a.roi.empty() && a.rows) throw InputError("--roi and --rows are mutually exclusive");
  const auto bytes = read_file(a.input);
  jpeg::DecodeStats stats;
  Image img;
  const auto t0 = std::chrono::steady_clock::now();
  if (!a.roi.empty()) {
    img = jpeg::decode_roi(bytes, parse_roi(a.roi), &stats);
  } else if (a.rows) {
    img = jpeg::decode_rows(bytes, *a.rows, &stats);
  } else {
    img = jpeg::decode_full(bytes, &stats);
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (!a.out.empty()) write_ppm(a.out, img);
  if (a.stats) {
    json j{{"width", img.width},
           {"height", img.height},
           {"mcus_entropy_decoded", stats.mcus_entropy_decoded},
           {"blocks_entropy_decoded", stats.blocks_entropy_decoded},
           {"idct_blocks", stats.idct_blocks},
           {"restart_intervals_skipped", stats.restart_intervals_skipped},
           {"mcu_rows_touched", stats.mcu_rows_touched},
           {"decode_ms", ms}};
    std::cout << j.dump(2) << "\n";
  } else if (a.out.empty()) {
    std::cout << img.width << "x" << img.height << "\n";
  }
  return kOk;
}

// ---- bench ------------------------------------------------------------------

struct BenchArgs {
  std::string images;
  std::string manifest;
  std::size_t synthetic{0};
  double preproc{std::numeric_limits<double>::infinity()};
  double exec{4513};
  int lanes{1};
  int producers{engine::default_producers()};
  int consumers{2};
  int batch{64};
  int queue{4};
  int resize_short{256};
  int crop{224};
  std::uint64_t seed{0};
  std::string out;
  std::string stats_json;
};

struct Breakdown {
  double decode_ms{0}, resize_ms{0}, normalize_ms{0};
};

// Single-threaded per-op timing over the first few items.
Breakdown time_ops(const engine::DataSource& src, int resize_short, int crop) {
  using Ms = std::chrono::duration<double, std::milli>;
  Breakdown b;
  const std::size_t n = std::min<std::size_t>(src.size(), 16);
  std::size_t timed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    try {
      const auto bytes = src.bytes(i);
      const auto h = jpeg::parse_headers(bytes);
      const auto g = dag::optimize(dag::canonical_pipeline(h.height, h.width, resize_short, crop));
      auto t = std::chrono::steady_clock::now();
      dag::Tensor x;
      std::size_t next = 1;
      if (g.ops.size() > 1 && g.ops[1].kind == dag::OpKind::Crop) {
        const auto& w = g.ops[1].crop;
        x = dag::to_tensor(jpeg::decode_roi(bytes, {w.left, w.top, w.left + w.width, w.top + w.height}));
        next = 2;
      } else {
        x = dag::to_tensor(jpeg::decode_full(bytes));
      }
      b.decode_ms += Ms(std::chrono::steady_clock::now() - t).count();
      for (std::size_t k = next; k < g.ops.size(); ++k) {
        dag::PreprocGraph one = g;
        one.ops.resize(k + 1);
        t = std::chrono::steady_clock::now();
        x = dag::execute_from(one, std::move(x), k);
        const double ms = Ms(std::chrono::steady_clock::now() - t).count();
        const auto kind = g.ops[k].kind;
        (kind == dag::OpKind::Resize || kind == dag::OpKind::Crop ? b.resize_ms : b.normalize_ms) += ms;
      }
      ++timed;
    } catch (const std::exception&) {
    }
  }
  if (timed) {
    b.decode_ms /= double(timed);
    b.resize_ms /= double(timed);
    b.normalize_ms /= double(timed);
  }
  return b;
}

int cmd_bench(const BenchArgs& a) {
  const int sources = !a.images.empty() + !a.manifest.empty() + (a.synthetic > 0);
  if (sources != 1) throw InputError("bench needs exactly one of --images, --manifest, --synthetic");
  engine::EngineConfig cfg;
  cfg.producer_count = a.producers;
  cfg.consumer_count = a.consumers;
  cfg.batch_size = a.batch;
  cfg.queue_capacity = a.queue;
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  engine::SyntheticExecutor exec(a.exec, a.lanes);
  engine::StageThroughputs r;
  std::optional<Breakdown> breakdown;
  if (a.synthetic > 0) {
    engine::SyntheticPreprocessor pre(a.preproc, 3 * 8 * 8, a.seed);
    r = engine::measure_stage_throughputs(pre, a.synthetic, exec, cfg);
  } else {
    const auto src = !a.images.empty() ? engine::DataSource::directory(a.images) : engine::DataSource::manifest(a.manifest);
    if (src.size() == 0) throw InputError("no JPEG items found");
    breakdown = time_ops(src, a.resize_short, a.crop);
    const auto bytes = src.bytes(0);
    const auto h = jpeg::parse_headers(bytes);
    engine::GraphPreprocessor pre(dag::optimize(dag::canonical_pipeline(h.height, h.width, a.resize_short, a.crop)), src);
    r = engine::measure_stage_throughputs(pre, src.size(), exec, cfg);
  }
  std::string out = csv::format_row({"decode_ms", "resize_ms", "normalize_ms", "execute_ms", "preproc_im_s", "exec_im_s",
                                     "e2e_im_s", "images", "decode_failures"});
  const auto opt = [&](double Breakdown::*f) { return breakdown ? fmt((*breakdown).*f, 4) : std::string(); };
  out += csv::format_row({opt(&Breakdown::decode_ms), opt(&Breakdown::resize_ms), opt(&Breakdown::normalize_ms),
                          fmt(1000.0 / r.exec, 4), fmt(r.preproc, 1), fmt(r.exec, 1), fmt(r.e2e, 1),
                          std::to_string(r.pipeline.images_processed), std::to_string(r.pipeline.decode_failures)});
  emit(out, a.out);
  if (!a.stats_json.empty()) emit(engine::to_json(r.pipeline).dump(2) + "\n", a.stats_json);
  return kOk;
}

// ---- validate-costmodel -----------------------------------------------------

struct ValidateArgs {
  std::string scenarios;
  bool live{false};
  std::size_t items{4000};
  double scale{1.0};
  std::string format{"csv"};
  std::string out;
};

struct Scenario {
  std::string name;
  double preproc{0}, exec{0};
  std::optional<double> measured;
};

std::vector<Scenario> load_scenarios(const std::string& path, bool need_measured) {
  std::vector<csv::Row> rows;
  try {
    rows = csv::read_file(path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  if (rows.empty() || rows[0] != csv::Row{"name", "preproc", "exec", "measured"}) {
    throw InputError("scenario file: header must be name,preproc,exec,measured");
  }
  std::vector<Scenario> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 4) throw InputError("scenario file: row " + std::to_string(r + 1) + " needs 4 fields");
    Scenario s;
    s.name = row[0];
    try {
      s.preproc = csv::to_double(row[1], "preproc");
      s.exec = csv::to_double(row[2], "exec");
      if (!row[3].empty()) s.measured = csv::to_double(row[3], "measured");
    } catch (const std::exception& e) {
      throw InputError(e.what());
    }
    if (!(s.preproc > 0) || !(s.exec > 0)) throw InputError("scenario '" + s.name + "': throughputs must be positive");
    if (s.measured && !(*s.measured > 0)) throw InputError("scenario '" + s.name + "': measured must be positive");
    if (need_measured && !s.measured) throw InputError("scenario '" + s.name + "': measured is empty (use --live)");
    out.push_back(s);
  }
  if (out.empty()) throw InputError("scenario file has no rows");
  return out;
}

int cmd_validate(const ValidateArgs& a) {
  if (a.format != "csv" && a.format != "pretty") throw InputError("--format must be csv or pretty");
  if (!(a.scale > 0)) throw InputError("--scale must be positive");
  auto scenarios = load_scenarios(a.scenarios, !a.live);
  const csv::Row header{"name", "preproc", "exec", "measured", "est_exec_only", "est_sum", "est_min",
                        "err_exec_only_pct", "err_sum_pct", "err_min_pct", "best"};
  std::vector<csv::Row> rows;
  for (auto& s : scenarios) {
    if (a.live) {
      // Run at 1/scale of the nominal rates and report at nominal scale.
      engine::SyntheticPreprocessor pre(s.preproc / a.scale);
      engine::SyntheticExecutor exec(s.exec / a.scale);
      engine::EngineConfig cfg;
      s.measured = engine::run_pipeline(pre, a.items, exec, cfg).e2e_throughput * a.scale;
    }
    const auto cascade = costmodel::CascadeSpec::single(s.exec);
    const double eo = costmodel::throughput_exec_only(cascade).value;
    const double su = costmodel::throughput_sum(s.preproc, cascade).value;
    const double mi = costmodel::throughput_min(s.preproc, cascade).value;
    const double m = *s.measured;
    const double e_eo = costmodel::estimation_error(eo, m), e_su = costmodel::estimation_error(su, m),
                 e_mi = costmodel::estimation_error(mi, m);
    std::string best = "min";
    double best_err = e_mi;
    if (e_eo < best_err) best = "exec-only", best_err = e_eo;
    if (e_su < best_err) best = "sum", best_err = e_su;
    rows.push_back({s.name, fmt(s.preproc, 0), fmt(s.exec, 0), fmt(m, 1), fmt(eo, 1), fmt(su, 1), fmt(mi, 1), fmt(e_eo, 1),
                    fmt(e_su, 1), fmt(e_mi, 1), best});
  }
  std::string out;
  if (a.format == "csv") {
    out = csv::format_row(header);
    for (const auto& r : rows) out += csv::format_row(r);
  } else {
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
      width[c] = header[c].size();
      for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
    }
    const auto line = [&](const csv::Row& r) {
      std::string l;
      for (std::size_t c = 0; c < r.size(); ++c) l += (c ? "  " : "") + r[c] + std::string(width[c] - r[c].size(), ' ');
      return l + "\n";
    };
    out = line(header);
    for (const auto& r : rows) out += line(r);
  }
  emit(out, a.out);
  return kOk;
}

// ---- cost -------------------------------------------------------------------

struct CostArgs {
  double throughput{0};
  std::optional<double> hourly;
  std::string pricing;
  std::string out;
};

int cmd_cost(const CostArgs& a) {
  if (!a.hourly && a.pricing.empty()) throw InputError("cost needs --hourly and/or --pricing");
  if (!(a.throughput > 0)) throw InputError("--throughput must be positive");
  json j{{"throughput_im_s", a.throughput}};
  if (a.hourly) {
    j["hourly_usd"] = *a.hourly;
    j["cents_per_million"] = planner::dollar_cost(a.throughput, *a.hourly);
  }
  if (!a.pricing.empty()) {
    planner::CorePriceFit fit;
    try {
      fit = planner::fit_core_price(planner::load_pricing(a.pricing));
    } catch (const std::exception& e) {
      throw InputError(e.what());
    }
    j["fit"] = {{"per_core_usd_hr", fit.per_core}, {"accelerator_usd_hr", fit.accelerator}, {"r_squared", fit.r_squared}};
  }
  emit(j.dump(2) + "\n", a.out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"visinf: end-to-end visual inference planning and runtime tools"};
  app.require_subcommand(1);

  PlanArgs plan;
  auto* p = app.add_subcommand("plan", "Generate plans from a catalog; print the Pareto set or a constrained selection");
  p->add_option("--catalog", plan.catalog, "Catalog JSON")->required();
  auto* acc = p->add_option("--min-accuracy", plan.min_accuracy, "Maximize throughput subject to accuracy >= bound");
  auto* thr = p->add_option("--min-throughput", plan.min_throughput, "Maximize accuracy subject to throughput >= bound");
  acc->excludes(thr);
  p->add_option("--out", plan.out, "Write JSON here instead of stdout");

  DagArgs dagargs;
  auto* d = app.add_subcommand("optimize-dag", "Optimize the canonical preprocessing DAG for one source size");
  d->add_option("--height", dagargs.height)->check(CLI::PositiveNumber);
  d->add_option("--width", dagargs.width)->check(CLI::PositiveNumber);
  d->add_option("--resize-short", dagargs.resize_short)->check(CLI::PositiveNumber);
  d->add_option("--crop", dagargs.crop)->check(CLI::PositiveNumber);
  d->add_option("--out", dagargs.out);

  DecodeArgs dec;
  auto* de = app.add_subcommand("decode", "Decode a baseline JPEG (full, ROI or top rows)");
  de->add_option("input", dec.input, "JPEG file")->required();
  de->add_option("--roi", dec.roi, "l,t,r,b");
  de->add_option("--rows", dec.rows, "Decode only the top N rows")->check(CLI::NonNegativeNumber);
  de->add_option("--out", dec.out, "Write binary PPM");
  de->add_flag("--stats", dec.stats, "Print decode counters as JSON");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Measure preprocessing-only, execution-only and pipelined throughput");
  b->add_option("--images", bench.images, "Directory of JPEG files");
  b->add_option("--manifest", bench.manifest, "Newline-delimited list of JPEG paths");
  b->add_option("--synthetic", bench.synthetic, "Synthetic item count");
  b->add_option("--preproc", bench.preproc, "Synthetic preprocessing throughput (im/s)")->check(CLI::PositiveNumber);
  b->add_option("--exec", bench.exec, "Synthetic executor throughput (im/s)")->check(CLI::PositiveNumber);
  b->add_option("--lanes", bench.lanes, "Concurrent executor streams")->check(CLI::PositiveNumber);
  b->add_option("--producers", bench.producers);
  b->add_option("--consumers", bench.consumers);
  b->add_option("--batch", bench.batch);
  b->add_option("--queue", bench.queue);
  b->add_option("--resize-short", bench.resize_short)->check(CLI::PositiveNumber);
  b->add_option("--crop", bench.crop)->check(CLI::PositiveNumber);
  b->add_option("--seed", bench.seed);
  b->add_option("--out", bench.out, "Write CSV here instead of stdout");
  b->add_option("--stats-json", bench.stats_json, "Write pipeline RunStats JSON");

  ValidateArgs val;
  auto* v = app.add_subcommand("validate-costmodel", "Compare exec-only, sum and min estimates against measurements");
  v->add_option("scenarios", val.scenarios, "CSV name,preproc,exec,measured")->required();
  v->add_flag("--live", val.live, "Measure with the engine and synthetic stages instead of reading `measured`");
  v->add_option("--items", val.items, "Items per live run")->check(CLI::PositiveNumber);
  v->add_option("--scale", val.scale, "Run live stages at 1/scale of nominal rates");
  v->add_option("--format", val.format, "csv or pretty");
  v->add_option("--out", val.out);

  CostArgs cost;
  auto* c = app.add_subcommand("cost", "Dollar cost per million images and per-core price fit");
  c->add_option("--throughput", cost.throughput, "Images/second")->required();
  c->add_option("--hourly", cost.hourly, "Instance price, USD/hour");
  c->add_option("--pricing", cost.pricing, "CSV vcpus,hourly_usd");
  c->add_option("--out", cost.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*p) return cmd_plan(plan);
    if (*d) return cmd_optimize_dag(dagargs);
    if (*de) return cmd_decode(dec);
    if (*b) return cmd_bench(bench);
    if (*v) return cmd_validate(val);
    if (*c) return cmd_cost(cost);
  } catch (const planner::InfeasibleConstraint& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}
