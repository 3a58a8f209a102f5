#pragma once

#include <atomic>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace intsel {

// Error taxonomy for the pipeline surface. Callers map these to distinct
// exit codes, so keep the split: bad settings, bad/missing artifacts, and
// numeric divergence inside training.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// 64-bit FNV-1a. Used for content hashes in manifests and checkpoints so
// provenance checks stay portable and dependency-free.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}
inline uint64_t fnv1a(const std::string& s, uint64_t seed = 0xcbf29ce484222325ull) {
  return fnv1a(s.data(), s.size(), seed);
}
inline std::string hex64(uint64_t v) {
  char buf[17];
  snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline uint64_t mix64(uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic RNG wrapper. All sampling goes through these helpers rather
// than std::*_distribution, whose outputs are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}
  static Rng derive(uint64_t master, uint64_t stream, uint64_t index) {
    return Rng(mix64(master ^ mix64(stream * 0x9e3779b97f4a7c15ull + index)));
  }
  uint64_t u64() { return eng_(); }
  // uniform in [0, n)
  uint64_t below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do { v = eng_(); } while (v >= limit);
    return v % n;
  }
  long range(long lo, long hi) {  // inclusive
    return lo + static_cast<long>(below(static_cast<uint64_t>(hi - lo + 1)));
  }
  double real() {  // [0, 1)
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * real(); }
  bool chance(double p) { return real() < p; }
  // index into weights, proportional draw
  size_t weighted(const std::vector<double>& w) {
    double total = 0;
    for (double x : w) total += x;
    double r = real() * total;
    for (size_t i = 0; i < w.size(); ++i) {
      r -= w[i];
      if (r < 0) return i;
    }
    return w.size() - 1;
  }

 private:
  std::mt19937_64 eng_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

// Chunked parallel map over [0, n). Results are written by index, so the
// output is independent of the worker count.
template <typename Fn>
void parallel_for(size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<size_t> next{0};
  size_t chunk = std::max<size_t>(1, n / (static_cast<size_t>(workers) * 8));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        size_t start = next.fetch_add(chunk);
        if (start >= n) break;
        size_t end = std::min(n, start + chunk);
        for (size_t i = start; i < end; ++i) fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace intsel
