#include "lawn/tensor.hpp"

#include <mutex>
#include <new>
#include <unordered_map>

namespace lawn::nn::detail {

namespace {

constexpr size_t kAlign = 64;
constexpr size_t kMaxCachedBytes = 384u << 20;

struct BufferPool {
  std::mutex mutex;
  std::unordered_map<size_t, std::vector<void*>> buckets;
  size_t cached_bytes = 0;

  ~BufferPool() {
    for (auto& [bytes, list] : buckets)
      for (void* p : list) ::operator delete(p, std::align_val_t(kAlign));
  }

  void* take(size_t bytes) {
    std::lock_guard<std::mutex> lk(mutex);
    auto it = buckets.find(bytes);
    if (it == buckets.end() || it->second.empty()) return nullptr;
    void* p = it->second.back();
    it->second.pop_back();
    cached_bytes -= bytes;
    return p;
  }

  bool put(size_t bytes, void* p) {
    std::lock_guard<std::mutex> lk(mutex);
    if (cached_bytes + bytes > kMaxCachedBytes) return false;
    buckets[bytes].push_back(p);
    cached_bytes += bytes;
    return true;
  }
};

BufferPool& pool() {
  static BufferPool* p = new BufferPool;  // leaked deliberately: outlive statics
  return *p;
}

}  // namespace

float* pool_alloc_floats(size_t n) {
  const size_t bytes = (n * sizeof(float) + kAlign - 1) / kAlign * kAlign;
  if (void* p = pool().take(bytes)) return static_cast<float*>(p);
  return static_cast<float*>(::operator new(bytes, std::align_val_t(kAlign)));
}

void pool_free_floats(float* p, size_t n) noexcept {
  const size_t bytes = (n * sizeof(float) + kAlign - 1) / kAlign * kAlign;
  if (!pool().put(bytes, p)) ::operator delete(p, std::align_val_t(kAlign));
}

}  // namespace lawn::nn::detail
