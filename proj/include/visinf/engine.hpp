#pragma once

// Pipelined execution: producer workers preprocess items into pooled batch
// buffers, a bounded MPMC queue hands whole batches to consumer workers,
// consumers run an Executor and recycle the buffers.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "visinf/catalog.hpp"
#include "visinf/csv.hpp"
#include "visinf/dagopt.hpp"
#include "visinf/image.hpp"
#include "visinf/jpegdec.hpp"

namespace visinf::engine {

using Clock = std::chrono::steady_clock;

class EngineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline int default_producers() { return std::max(1, static_cast<int>(std::thread::hardware_concurrency())); }

struct EngineConfig {
  int producer_count{default_producers()};
  int consumer_count{2};
  int queue_capacity{4};
  int batch_size{64};
  int buffer_pool_size{0};  // 0: queue_capacity + producers + consumers

  int pool_size() const {
    return buffer_pool_size > 0 ? buffer_pool_size : queue_capacity + producer_count + consumer_count;
  }

  void validate() const {
    if (producer_count <= 0 || consumer_count <= 0 || queue_capacity <= 0 || batch_size <= 0 || buffer_pool_size < 0) {
      throw std::invalid_argument("engine config: counts must be positive");
    }
    if (pool_size() < queue_capacity + consumer_count) {
      throw std::invalid_argument("engine config: buffer_pool_size must be >= queue_capacity + consumer_count");
    }
  }
};

struct BatchBuffer {
  int capacity{0};
  int filled{0};
  std::size_t item_elements{0};
  std::vector<float> data;
  std::vector<std::size_t> item_ids;

  BatchBuffer(int cap, std::size_t elems)
      : capacity(cap), item_elements(elems), data(std::size_t(cap) * elems), item_ids(std::size_t(cap)) {}

  std::span<float> slot(int i) { return {data.data() + std::size_t(i) * item_elements, item_elements}; }
  std::span<const float> slot(int i) const { return {data.data() + std::size_t(i) * item_elements, item_elements}; }
};

// Fixed set of buffers allocated up front. acquire() blocks while all are
// checked out.
class BufferPool {
 public:
  BufferPool(int size, int batch, std::size_t item_elements) {
    for (int i = 0; i < size; ++i) {
      storage_.push_back(std::make_unique<BatchBuffer>(batch, item_elements));
      origin_.push_back(storage_.back()->data.data());
      free_.push_back(storage_.back().get());
    }
  }

  BatchBuffer* acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return closed_ || !free_.empty(); });
    if (closed_) return nullptr;
    BatchBuffer* b = free_.back();
    free_.pop_back();
    high_water_ = std::max(high_water_, storage_.size() - free_.size());
    b->filled = 0;
    return b;
  }

  void release(BatchBuffer* b) {
    {
      std::lock_guard lock(mu_);
      const auto idx = index_of(b);
      if (b->data.data() != origin_[idx]) ++reallocations_;
      free_.push_back(b);
    }
    cv_.notify_one();
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  std::size_t size() const { return storage_.size(); }
  std::size_t high_water() const {
    std::lock_guard lock(mu_);
    return high_water_;
  }
  // Batch tensors whose storage moved after the pool was built.
  std::size_t reallocations() const {
    std::lock_guard lock(mu_);
    return reallocations_;
  }
  BatchBuffer& buffer(std::size_t i) { return *storage_[i]; }

 private:
  std::size_t index_of(const BatchBuffer* b) const {
    for (std::size_t i = 0; i < storage_.size(); ++i) {
      if (storage_[i].get() == b) return i;
    }
    throw std::logic_error("buffer does not belong to this pool");
  }

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::unique_ptr<BatchBuffer>> storage_;
  std::vector<const float*> origin_;
  std::vector<BatchBuffer*> free_;
  std::size_t high_water_{0};
  std::size_t reallocations_{0};
  bool closed_{false};
};

// Bounded blocking queue over a fixed ring. Occupancy is sampled each time a
// producer arrives to push, before it waits for space.
template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : ring_(capacity), histogram_(capacity + 1, 0) {
    if (capacity == 0) throw std::invalid_argument("queue capacity must be positive");
  }

  bool push(T v) {
    std::unique_lock lock(mu_);
    ++histogram_[count_];
    not_full_.wait(lock, [&] { return closed_ || count_ < ring_.size(); });
    if (closed_) return false;
    ring_[(head_ + count_) % ring_.size()] = std::move(v);
    ++count_;
    lock.unlock();
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || count_ > 0; });
    if (closed_) return std::nullopt;
    T v = std::move(ring_[head_]);
    head_ = (head_ + 1) % ring_.size();
    --count_;
    lock.unlock();
    not_full_.notify_one();
    return v;
  }

  // Wakes every waiter; later push/pop calls fail.
  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    not_full_.notify_all();
    not_empty_.notify_all();
  }

  std::vector<std::uint64_t> histogram() const {
    std::lock_guard lock(mu_);
    return histogram_;
  }
  std::size_t capacity() const { return ring_.size(); }

 private:
  mutable std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::vector<T> ring_;
  std::vector<std::uint64_t> histogram_;
  std::size_t head_{0}, count_{0};
  bool closed_{false};
};

struct ItemOutput {
  std::size_t index{0};
  int label{0};
  float score{0};
  bool operator==(const ItemOutput&) const = default;
};

class Executor {
 public:
  virtual ~Executor() = default;
  // Called concurrently from consumer workers. Appends one output per item.
  virtual void run(const BatchBuffer& batch, std::vector<ItemOutput>& out) = 0;
  virtual double declared_throughput() const = 0;
};

// Deterministic stand-in model output: a checksum of the item's tensor.
inline ItemOutput synthetic_output(std::size_t index, std::span<const float> item) {
  double acc = 0;
  for (std::size_t k = 0; k < item.size(); ++k) acc += item[k] * double((k % 7) + 1);
  const double frac = acc - std::floor(acc);
  const auto bucket = static_cast<std::int64_t>(std::floor(std::abs(acc) * 16.0));
  return {index, static_cast<int>(bucket % 1000), static_cast<float>(frac)};
}

// Occupies a virtual device for filled / throughput seconds per batch (plus
// the host-to-device copy when a transfer rate is set). `lanes` independent
// streams share the device; consumers beyond that queue up for a lane.
class SyntheticExecutor : public Executor {
 public:
  explicit SyntheticExecutor(double throughput, int lanes = 1, double transfer_bytes_per_s = 0)
      : throughput_(throughput), transfer_(transfer_bytes_per_s), lane_free_(std::size_t(std::max(lanes, 1)), Clock::now()) {
    if (!(throughput > 0)) throw std::invalid_argument("synthetic executor: throughput must be positive");
    if (lanes <= 0) throw std::invalid_argument("synthetic executor: lanes must be positive");
  }

  void run(const BatchBuffer& batch, std::vector<ItemOutput>& out) override {
    double seconds = batch.filled / throughput_;
    if (transfer_ > 0) seconds += double(batch.filled) * double(batch.item_elements) * sizeof(float) / transfer_;
    Clock::time_point done;
    {
      std::lock_guard lock(mu_);
      auto lane = std::min_element(lane_free_.begin(), lane_free_.end());
      const auto start = std::max(*lane, Clock::now());
      done = start + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(seconds));
      *lane = done;
    }
    for (int i = 0; i < batch.filled; ++i) out.push_back(synthetic_output(batch.item_ids[std::size_t(i)], batch.slot(i)));
    std::this_thread::sleep_until(done);
  }

  double declared_throughput() const override { return throughput_ * double(lane_free_.size()); }

 private:
  double throughput_;
  double transfer_;
  std::mutex mu_;
  std::vector<Clock::time_point> lane_free_;
};

inline std::unique_ptr<Executor> synthetic_executor(double profile_throughput, int lanes = 1) {
  return std::make_unique<SyntheticExecutor>(profile_throughput, lanes);
}

// ---------------------------------------------------------------------------
// Sources and preprocessing

// Ordered item list. Items are addressed by index; bytes are loaded lazily
// from disk or held in memory. Synthetic sources have no bytes.
class DataSource {
 public:
  static DataSource directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw EngineError("not a directory: " + dir.string());
    DataSource s;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      auto ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (e.is_regular_file() && (ext == ".jpg" || ext == ".jpeg")) s.paths_.push_back(e.path());
    }
    std::sort(s.paths_.begin(), s.paths_.end());
    return s;
  }

  // Newline-delimited paths; relative entries resolve against the manifest.
  static DataSource manifest(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw EngineError("cannot open manifest " + file.string());
    DataSource s;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::filesystem::path p = line;
      if (p.is_relative()) p = file.parent_path() / p;
      s.paths_.push_back(p);
    }
    return s;
  }

  static DataSource in_memory(std::vector<std::vector<std::uint8_t>> items) {
    DataSource s;
    s.memory_ = std::make_shared<const std::vector<std::vector<std::uint8_t>>>(std::move(items));
    return s;
  }

  static DataSource synthetic(std::size_t count) {
    DataSource s;
    s.synthetic_count_ = count;
    return s;
  }

  std::size_t size() const {
    if (memory_) return memory_->size();
    if (!paths_.empty()) return paths_.size();
    return synthetic_count_;
  }

  std::string name(std::size_t i) const {
    if (!paths_.empty()) return paths_.at(i).string();
    return "item-" + std::to_string(i);
  }

  std::vector<std::uint8_t> bytes(std::size_t i) const {
    if (memory_) return memory_->at(i);
    if (!paths_.empty()) return read_file(paths_.at(i));
    return {};
  }

 private:
  std::vector<std::filesystem::path> paths_;
  std::shared_ptr<const std::vector<std::vector<std::uint8_t>>> memory_;
  std::size_t synthetic_count_{0};
};

class Preprocessor {
 public:
  virtual ~Preprocessor() = default;
  virtual std::size_t item_elements() const = 0;
  virtual void begin(int /*producers*/) {}
  // Writes item `index` into `out`; throws to report a per-item failure.
  virtual void process(std::size_t index, int worker, std::span<float> out) = 0;
};

// Writes a deterministic tensor per item and paces each worker so that
// `producers` workers together sustain `throughput` items/second. An
// infinite throughput disables pacing.
class SyntheticPreprocessor : public Preprocessor {
 public:
  explicit SyntheticPreprocessor(double throughput, std::size_t item_elements = 3 * 8 * 8, std::uint64_t seed = 0)
      : throughput_(throughput), elements_(item_elements), seed_(seed) {
    if (!(throughput > 0)) throw std::invalid_argument("synthetic preprocessor: throughput must be positive");
  }

  std::size_t item_elements() const override { return elements_; }

  void begin(int producers) override {
    per_item_ = std::isinf(throughput_) ? Clock::duration::zero()
                                        : std::chrono::duration_cast<Clock::duration>(
                                              std::chrono::duration<double>(double(producers) / throughput_));
    deadline_.assign(std::size_t(producers), Clock::now());
  }

  void process(std::size_t index, int worker, std::span<float> out) override {
    fill(index, out);
    if (per_item_ == Clock::duration::zero()) return;
    auto& d = deadline_[std::size_t(worker)];
    // Credit for time spent blocked downstream is capped, so a stalled
    // worker cannot later burst above its rate.
    d = std::max(d, Clock::now() - std::chrono::milliseconds(5)) + per_item_;
    std::this_thread::sleep_until(d);
  }

  void fill(std::size_t index, std::span<float> out) const {
    std::uint64_t x = (index + 1) * 0x9E3779B97F4A7C15ull ^ seed_;
    for (auto& v : out) {
      x ^= x >> 29;
      x *= 0xBF58476D1CE4E5B9ull;
      x ^= x >> 32;
      v = float(x % 256) / 255.0f;
    }
  }

 private:
  double throughput_;
  std::size_t elements_;
  std::uint64_t seed_;
  Clock::duration per_item_{};
  std::vector<Clock::time_point> deadline_;
};

// Decodes JPEG items and runs the optimized preprocessing plan. Sources of
// other shapes get the same canonical pipeline re-optimized for their size.
class GraphPreprocessor : public Preprocessor {
 public:
  GraphPreprocessor(dag::PreprocGraph plan, DataSource source) : plan_(std::move(plan)), source_(std::move(source)) {
    if (plan_.ops.empty() || !plan_.geometry.resize) throw EngineError("preprocessing plan needs a Resize");
    const auto [rh, rw] = *plan_.geometry.resize;
    resize_short_ = std::min(rh, rw);
  }

  static GraphPreprocessor for_plan(const PlanConfig& plan, DataSource source) {
    return GraphPreprocessor(plan.preproc_plan, std::move(source));
  }

  std::size_t item_elements() const override { return static_cast<std::size_t>(plan_.target_shape.elements()); }

  void process(std::size_t index, int, std::span<float> out) override {
    const auto bytes = source_.bytes(index);
    const auto header = jpeg::parse_headers(bytes);
    const auto& g = graph_for(header.height, header.width);
    const auto t = dag::execute_jpeg(g, bytes);
    if (t.data.size() != out.size()) throw EngineError("preprocessed tensor size mismatch");
    std::copy(t.data.begin(), t.data.end(), out.begin());
  }

  const dag::PreprocGraph& graph_for(int h, int w) {
    if (h == plan_.source_shape.h && w == plan_.source_shape.w) return plan_;
    std::lock_guard lock(mu_);
    auto it = cache_.find({h, w});
    if (it == cache_.end()) {
      auto g = dag::optimize(dag::canonical_pipeline(h, w, resize_short_, plan_.target_shape.h, plan_.target_shape.w, plan_.norm));
      it = cache_.emplace(std::pair{h, w}, std::move(g)).first;
    }
    return it->second;
  }

 private:
  dag::PreprocGraph plan_;
  DataSource source_;
  int resize_short_{0};
  std::mutex mu_;
  std::map<std::pair<int, int>, dag::PreprocGraph> cache_;
};

// ---------------------------------------------------------------------------
// Runs

struct RunStats {
  double preproc_throughput{0};
  double exec_throughput{0};
  double e2e_throughput{0};
  std::vector<std::uint64_t> queue_occupancy_histogram;
  double wall_seconds{0};
  double producer_busy_seconds{0};  // summed over producers
  double consumer_busy_seconds{0};  // summed over consumers
  std::size_t images_processed{0};
  std::size_t decode_failures{0};
  std::vector<std::size_t> failed_items;
  std::size_t batches{0};
  std::size_t pool_size{0};
  std::size_t pool_high_water{0};
  std::size_t batch_allocations_after_warmup{0};
  std::vector<ItemOutput> outputs;  // sorted by item index
};

namespace detail {

inline double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

inline double rate(std::size_t n, double seconds) { return seconds > 0 ? double(n) / seconds : 0.0; }

struct ProducerResult {
  double busy{0};
  std::vector<std::size_t> failed;
};

// Fills buffers from the shared item counter and hands them to `sink` until
// items run out or the sink refuses.
inline ProducerResult produce(Preprocessor& pre, std::size_t n, int worker, std::atomic<std::size_t>& next, BufferPool& pool,
                              const std::function<bool(BatchBuffer*)>& sink) {
  ProducerResult r;
  bool exhausted = false;
  while (!exhausted) {
    BatchBuffer* buf = pool.acquire();
    if (!buf) return r;
    const auto t0 = Clock::now();
    while (buf->filled < buf->capacity) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= n) {
        exhausted = true;
        break;
      }
      try {
        pre.process(idx, worker, buf->slot(buf->filled));
        buf->item_ids[std::size_t(buf->filled)] = idx;
        ++buf->filled;
      } catch (const std::exception&) {
        r.failed.push_back(idx);
      }
    }
    r.busy += seconds_since(t0);
    if (buf->filled == 0) {
      pool.release(buf);
    } else if (!sink(buf)) {
      pool.release(buf);
      return r;
    }
  }
  return r;
}

}  // namespace detail

inline RunStats run_pipeline(Preprocessor& pre, std::size_t n_items, Executor& executor, const EngineConfig& config) {
  config.validate();
  if (n_items == 0) throw EngineError("data source yields no items");
  BufferPool pool(config.pool_size(), config.batch_size, pre.item_elements());
  BoundedQueue<BatchBuffer*> queue(std::size_t(config.queue_capacity));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> aborted{false};
  std::mutex err_mu;
  std::string error;

  const auto abort_run = [&](const std::string& what) {
    {
      std::lock_guard lock(err_mu);
      if (error.empty()) error = what;
    }
    aborted = true;
    queue.close();
    pool.close();
  };

  pre.begin(config.producer_count);
  std::vector<detail::ProducerResult> produced(std::size_t(config.producer_count));
  std::vector<std::vector<ItemOutput>> consumed(std::size_t(config.consumer_count));
  std::vector<double> consumer_busy(std::size_t(config.consumer_count), 0);
  std::vector<std::size_t> consumer_batches(std::size_t(config.consumer_count), 0);

  const auto t0 = Clock::now();
  std::vector<std::thread> consumers;
  for (int c = 0; c < config.consumer_count; ++c) {
    consumed[std::size_t(c)].reserve(n_items / std::size_t(config.consumer_count) + std::size_t(config.batch_size));
    consumers.emplace_back([&, c] {
      auto& out = consumed[std::size_t(c)];
      while (auto item = queue.pop()) {
        BatchBuffer* buf = *item;
        if (!buf) return;  // poison pill
        const auto s = Clock::now();
        try {
          executor.run(*buf, out);
        } catch (const std::exception& e) {
          abort_run(std::string("executor failed: ") + e.what());
          return;
        }
        consumer_busy[std::size_t(c)] += detail::seconds_since(s);
        ++consumer_batches[std::size_t(c)];
        pool.release(buf);
      }
    });
  }
  std::vector<std::thread> producers;
  for (int p = 0; p < config.producer_count; ++p) {
    producers.emplace_back([&, p] {
      try {
        produced[std::size_t(p)] =
            detail::produce(pre, n_items, p, next, pool, [&](BatchBuffer* b) { return queue.push(b); });
      } catch (const std::exception& e) {
        abort_run(std::string("producer failed: ") + e.what());
      }
    });
  }
  for (auto& t : producers) t.join();
  for (int c = 0; c < config.consumer_count; ++c) queue.push(nullptr);
  for (auto& t : consumers) t.join();
  const double wall = detail::seconds_since(t0);
  if (aborted) throw EngineError(error);

  RunStats st;
  st.wall_seconds = wall;
  for (auto& p : produced) {
    st.producer_busy_seconds += p.busy;
    st.failed_items.insert(st.failed_items.end(), p.failed.begin(), p.failed.end());
  }
  std::sort(st.failed_items.begin(), st.failed_items.end());
  st.decode_failures = st.failed_items.size();
  for (std::size_t c = 0; c < consumed.size(); ++c) {
    st.consumer_busy_seconds += consumer_busy[c];
    st.batches += consumer_batches[c];
    st.outputs.insert(st.outputs.end(), consumed[c].begin(), consumed[c].end());
  }
  std::sort(st.outputs.begin(), st.outputs.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  st.images_processed = st.outputs.size();
  st.e2e_throughput = detail::rate(st.images_processed, wall);
  // Per-stage rates from busy time; measure_stage_throughputs replaces these
  // with isolated runs.
  st.preproc_throughput = detail::rate(n_items, st.producer_busy_seconds / config.producer_count);
  st.exec_throughput = detail::rate(st.images_processed, st.consumer_busy_seconds / config.consumer_count);
  st.queue_occupancy_histogram = queue.histogram();
  st.pool_size = pool.size();
  st.pool_high_water = pool.high_water();
  st.batch_allocations_after_warmup = pool.reallocations();
  return st;
}

inline RunStats run_pipeline(const PlanConfig& plan, const DataSource& source, Executor& executor, const EngineConfig& config) {
  GraphPreprocessor pre(plan.preproc_plan, source);
  return run_pipeline(pre, source.size(), executor, config);
}

// Producers only; filled batches are released straight back to the pool.
inline double measure_preproc_only(Preprocessor& pre, std::size_t n_items, const EngineConfig& config) {
  config.validate();
  BufferPool pool(config.pool_size(), config.batch_size, pre.item_elements());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  pre.begin(config.producer_count);
  const auto t0 = Clock::now();
  std::vector<std::thread> producers;
  for (int p = 0; p < config.producer_count; ++p) {
    producers.emplace_back([&, p] {
      detail::produce(pre, n_items, p, next, pool, [&](BatchBuffer* b) {
        done += std::size_t(b->filled);
        pool.release(b);
        return true;
      });
    });
  }
  for (auto& t : producers) t.join();
  return detail::rate(done.load(), detail::seconds_since(t0));
}

// Consumers replay a few pre-filled batches until n_items have executed.
inline double measure_exec_only(Preprocessor& pre, std::size_t n_items, Executor& executor, const EngineConfig& config) {
  config.validate();
  const std::size_t per_batch = std::size_t(config.batch_size);
  const std::size_t total_batches = (n_items + per_batch - 1) / per_batch;
  const std::size_t replay = std::min<std::size_t>(std::size_t(config.pool_size()), total_batches);
  BufferPool pool(int(replay), config.batch_size, pre.item_elements());
  SyntheticPreprocessor filler(std::numeric_limits<double>::infinity(), pre.item_elements());
  for (std::size_t b = 0; b < replay; ++b) {
    auto& buf = pool.buffer(b);
    buf.filled = buf.capacity;
    for (int i = 0; i < buf.capacity; ++i) {
      const std::size_t idx = b * per_batch + std::size_t(i);
      filler.fill(idx, buf.slot(i));
      buf.item_ids[std::size_t(i)] = idx;
    }
  }
  std::atomic<std::size_t> next_batch{0};
  std::atomic<std::size_t> executed{0};
  const auto t0 = Clock::now();
  std::vector<std::thread> consumers;
  for (int c = 0; c < config.consumer_count; ++c) {
    consumers.emplace_back([&] {
      std::vector<ItemOutput> out;
      out.reserve(per_batch);
      for (std::size_t b; (b = next_batch.fetch_add(1)) < total_batches;) {
        const auto& buf = pool.buffer(b % replay);
        const std::size_t items = std::min(per_batch, n_items - b * per_batch);
        out.clear();
        if (items == per_batch) {
          executor.run(buf, out);
        } else {
          BatchBuffer tail = buf;
          tail.filled = int(items);
          executor.run(tail, out);
        }
        executed += items;
      }
    });
  }
  for (auto& t : consumers) t.join();
  return detail::rate(executed.load(), detail::seconds_since(t0));
}

struct StageThroughputs {
  double preproc{0};
  double exec{0};
  double e2e{0};
  RunStats pipeline;
};

inline StageThroughputs measure_stage_throughputs(Preprocessor& pre, std::size_t n_items, Executor& executor,
                                                  const EngineConfig& config) {
  StageThroughputs r;
  r.preproc = measure_preproc_only(pre, n_items, config);
  r.exec = measure_exec_only(pre, n_items, executor, config);
  r.pipeline = run_pipeline(pre, n_items, executor, config);
  r.e2e = r.pipeline.e2e_throughput;
  r.pipeline.preproc_throughput = r.preproc;
  r.pipeline.exec_throughput = r.exec;
  return r;
}

inline StageThroughputs measure_stage_throughputs(const PlanConfig& plan, const DataSource& source, Executor& executor,
                                                  const EngineConfig& config) {
  GraphPreprocessor pre(plan.preproc_plan, source);
  return measure_stage_throughputs(pre, source.size(), executor, config);
}

// ---------------------------------------------------------------------------
// Cascades

struct CascadeResult {
  std::vector<std::string> labels;  // final output per item
  std::vector<int> exit_stage;
  std::vector<std::size_t> reached;  // items that ran each stage
};

// scores[j][i], labels[j][i]: stage j's confidence and output for item i.
// An item continues past stage j when its score is >= thresholds[j];
// otherwise it exits with stage j's output. The last stage is terminal.
inline CascadeResult cascade_execute(const std::vector<std::vector<double>>& scores,
                                     const std::vector<std::vector<std::string>>& labels,
                                     const std::vector<double>& thresholds) {
  const std::size_t k = labels.size();
  if (k == 0) throw std::invalid_argument("cascade needs at least one stage");
  if (scores.size() != k) throw std::invalid_argument("cascade: scores and labels must cover the same stages");
  if (thresholds.size() + 1 != k) throw std::invalid_argument("cascade: need one threshold per non-terminal stage");
  const std::size_t n = labels[0].size();
  for (std::size_t j = 0; j < k; ++j) {
    if (labels[j].size() != n || (j + 1 < k && scores[j].size() != n)) {
      throw std::invalid_argument("cascade: stage " + std::to_string(j) + " does not cover every item");
    }
  }
  CascadeResult r;
  r.labels.resize(n);
  r.exit_stage.resize(n);
  r.reached.assign(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = 0;
    for (;; ++j) {
      ++r.reached[j];
      if (j + 1 == k || scores[j][i] < thresholds[j]) break;
    }
    r.labels[i] = labels[j][i];
    r.exit_stage[i] = int(j);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Reporting

inline nlohmann::json to_json(const RunStats& s) {
  return {{"preproc_throughput", s.preproc_throughput},
          {"exec_throughput", s.exec_throughput},
          {"e2e_throughput", s.e2e_throughput},
          {"queue_occupancy_histogram", s.queue_occupancy_histogram},
          {"wall_seconds", s.wall_seconds},
          {"producer_busy_seconds", s.producer_busy_seconds},
          {"consumer_busy_seconds", s.consumer_busy_seconds},
          {"images_processed", s.images_processed},
          {"decode_failures", s.decode_failures},
          {"failed_items", s.failed_items},
          {"batches", s.batches},
          {"pool_size", s.pool_size},
          {"pool_high_water", s.pool_high_water},
          {"batch_allocations_after_warmup", s.batch_allocations_after_warmup}};
}

inline std::string to_csv(const RunStats& s) {
  std::string out = csv::format_row({"stage", "throughput_im_s"});
  const auto row = [&](const char* stage, double v) { out += csv::format_row({stage, std::to_string(v)}); };
  row("preprocess", s.preproc_throughput);
  row("execute", s.exec_throughput);
  row("end_to_end", s.e2e_throughput);
  return out;
}

}  // namespace visinf::engine
