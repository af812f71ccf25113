#include "lawn/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lawn {

namespace {

thread_local bool t_in_worker = false;

int clamp_threads(int n) { return n < 1 ? 1 : n; }

int default_threads() {
  return clamp_threads(static_cast<int>(std::thread::hardware_concurrency()));
}

// Persistent pool. Workers park on a condition variable between jobs; all
// job bookkeeping happens under one mutex (jobs hand out a handful of chunks,
// so lock traffic is immaterial). run() does not return until every worker
// that joined the job has left it, so job state can be reset safely.
class Pool {
 public:
  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void run(int threads, int nchunks, const std::function<void(int)>& fn) {
    std::lock_guard<std::mutex> top(run_mutex_);
    {
      std::lock_guard<std::mutex> lk(mutex_);
      ensure_workers(threads - 1);
      fn_ = &fn;
      nchunks_ = nchunks;
      next_ = 0;
      done_ = 0;
      error_ = nullptr;
      ++generation_;
    }
    cv_.notify_all();
    work();
    {
      std::unique_lock<std::mutex> lk(mutex_);
      done_cv_.wait(lk, [&] { return done_ == nchunks_ && active_ == 0; });
      fn_ = nullptr;
      if (error_) {
        auto err = error_;
        error_ = nullptr;
        lk.unlock();
        std::rethrow_exception(err);
      }
    }
  }

 private:
  void ensure_workers(int n) {
    while (static_cast<int>(threads_.size()) < n) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  void worker_loop() {
    t_in_worker = true;
    uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(mutex_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        ++active_;
      }
      work();
      {
        std::lock_guard<std::mutex> lk(mutex_);
        --active_;
        if (done_ == nchunks_ && active_ == 0) done_cv_.notify_all();
      }
    }
  }

  void work() {
    for (;;) {
      int c;
      {
        std::lock_guard<std::mutex> lk(mutex_);
        if (next_ >= nchunks_) return;
        c = next_++;
      }
      try {
        (*fn_)(c);
      } catch (...) {
        std::lock_guard<std::mutex> lk(mutex_);
        if (!error_) error_ = std::current_exception();
      }
      {
        std::lock_guard<std::mutex> lk(mutex_);
        ++done_;
        if (done_ == nchunks_ && active_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::mutex run_mutex_;  // serializes top-level jobs
  std::mutex mutex_;
  std::condition_variable cv_, done_cv_;
  std::vector<std::thread> threads_;
  uint64_t generation_ = 0;
  bool stop_ = false;
  const std::function<void(int)>* fn_ = nullptr;
  int nchunks_ = 0;
  int next_ = 0;
  int done_ = 0;
  int active_ = 0;
  std::exception_ptr error_;
};

Pool& pool() {
  static Pool p;
  return p;
}

std::atomic<int> g_threads{0};  // 0 = unset, resolve from hardware

}  // namespace

int max_threads() {
  int n = g_threads.load(std::memory_order_relaxed);
  return n == 0 ? default_threads() : n;
}

void set_max_threads(int n) {
  g_threads.store(clamp_threads(n), std::memory_order_relaxed);
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  int threads = max_threads();
  if (threads > n) threads = static_cast<int>(n);
  // Nested calls from inside a worker run inline; the pool is not reentrant.
  if (threads <= 1 || t_in_worker) {
    fn(0, n);
    return;
  }
  // Contiguous chunks, one per running thread. Chunk boundaries depend only
  // on (n, threads); work inside a chunk never depends on which thread runs
  // it, and callers keep cross-chunk reduction order fixed.
  int64_t base = n / threads;
  int64_t extra = n % threads;
  std::vector<std::pair<int64_t, int64_t>> ranges(static_cast<size_t>(threads));
  int64_t begin = 0;
  for (int i = 0; i < threads; ++i) {
    int64_t len = base + (i < extra ? 1 : 0);
    ranges[static_cast<size_t>(i)] = {begin, begin + len};
    begin += len;
  }
  std::function<void(int)> chunk_fn = [&](int c) {
    auto [b, e] = ranges[static_cast<size_t>(c)];
    if (b < e) fn(b, e);
  };
  pool().run(threads, threads, chunk_fn);
}

void parallel_for_each(int64_t n, const std::function<void(int64_t)>& fn) {
  parallel_for(n, [&](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace lawn
