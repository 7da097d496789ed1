#include "equiflow/kernels.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace equiflow::kernels {

#if defined(__x86_64__) || defined(_M_X64)
const Ops* avx2_ops_table();
#endif
#if defined(__aarch64__)
const Ops* neon_ops_table();
#endif

namespace {

const Ops* probe_best() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return avx2_ops_table();
#endif
#if defined(__aarch64__)
  return neon_ops_table();
#endif
  return &scalar_ops();
}

const Ops* select_initial() {
  if (const char* env = std::getenv("EQUIFLOW_KERNELS")) {
    if (const Ops* o = backend_by_name(env)) return o;
  }
  return probe_best();
}

std::atomic<const Ops*> g_active{nullptr};

const Ops* active() {
  const Ops* o = g_active.load(std::memory_order_acquire);
  if (!o) {
    o = select_initial();
    g_active.store(o, std::memory_order_release);
  }
  return o;
}

// Minimal fork-join pool. Jobs are short (sub-millisecond to a few ms), so a
// condvar wake per job is acceptable; the caller always runs chunk 0 itself.
class Pool {
 public:
  static Pool& instance() {
    static Pool pool;
    return pool;
  }

  void resize(int total_threads) {
    std::lock_guard<std::mutex> outer(resize_mutex_);
    stop_workers();
    threads_ = total_threads < 1 ? 1 : total_threads;
    start_workers(threads_ - 1);
  }

  int threads() const { return threads_; }

  void run(std::size_t total, const std::function<void(std::size_t, std::size_t)>& fn) {
    const int t = threads_;
    if (t <= 1 || total < 2) {
      fn(0, total);
      return;
    }
    const std::size_t chunks = static_cast<std::size_t>(t) < total ? t : total;
    {
      std::unique_lock<std::mutex> lock(mutex_);
      job_fn_ = &fn;
      job_total_ = total;
      job_chunks_ = chunks;
      pending_ = chunks - 1;  // chunk 0 runs on this thread
      ++generation_;
    }
    cv_.notify_all();
    run_chunk(0);
    std::unique_lock<std::mutex> lock(mutex_);
    done_cv_.wait(lock, [this] { return pending_ == 0; });
    job_fn_ = nullptr;
  }

 private:
  void run_chunk(std::size_t c) {
    const std::size_t per = job_total_ / job_chunks_;
    const std::size_t extra = job_total_ % job_chunks_;
    const std::size_t begin = c * per + (c < extra ? c : extra);
    const std::size_t end = begin + per + (c < extra ? 1 : 0);
    (*job_fn_)(begin, end);
  }

  void worker(std::size_t index) {
    std::uint64_t seen = 0;
    for (;;) {
      std::unique_lock<std::mutex> lock(mutex_);
      cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      const bool mine = index + 1 < job_chunks_;
      lock.unlock();
      if (mine) run_chunk(index + 1);
      lock.lock();
      if (--pending_ == 0) {
        lock.unlock();
        done_cv_.notify_one();
      }
    }
  }

  void start_workers(int count) {
    stop_ = false;
    for (int i = 0; i < count; ++i)
      workers_.emplace_back([this, i] { worker(static_cast<std::size_t>(i)); });
  }

  void stop_workers() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
    workers_.clear();
  }

  ~Pool() { stop_workers(); }

  std::mutex resize_mutex_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::vector<std::thread> workers_;
  int threads_ = 1;
  bool stop_ = false;
  std::uint64_t generation_ = 0;
  const std::function<void(std::size_t, std::size_t)>* job_fn_ = nullptr;
  std::size_t job_total_ = 0;
  std::size_t job_chunks_ = 1;
  std::size_t pending_ = 0;
};

}  // namespace

const Ops& ops() { return *active(); }

const Ops* backend_by_name(const std::string& name) {
  if (name == "scalar") return &scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
  if (name == "avx2" && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return avx2_ops_table();
#endif
#if defined(__aarch64__)
  if (name == "neon") return neon_ops_table();
#endif
  return nullptr;
}

std::string active_backend_name() { return active()->name; }

void force_backend(const std::string& name) {
  const Ops* o = backend_by_name(name);
  if (!o) throw std::runtime_error("kernel backend unavailable: " + name);
  g_active.store(o, std::memory_order_release);
}

void set_num_threads(int n) { Pool::instance().resize(n); }
int num_threads() { return Pool::instance().threads(); }

void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, double beta) {
  const Ops& o = ops();
  const int t = num_threads();
  // Threading splits output rows, which requires row-major row slices of A;
  // only the non-transposed-A cases qualify. Small problems stay serial.
  if (t > 1 && !ta && m >= 16 && m * n * k >= (std::size_t(1) << 16)) {
    Pool::instance().run(m, [&](std::size_t i0, std::size_t i1) {
      if (i0 == i1) return;
      o.gemm(false, tb, i1 - i0, n, k, a + i0 * k, b, c + i0 * n, beta);
    });
    return;
  }
  o.gemm(ta, tb, m, n, k, a, b, c, beta);
}

}  // namespace equiflow::kernels
