#include "creaseforge/rng.hpp"

namespace creaseforge {

namespace {
constexpr std::uint64_t kLabelTag = 0x6c6162656c000001ULL;
constexpr std::uint64_t kIndexTag = 0x696e646578000002ULL;

std::uint64_t derive(std::uint64_t parent, std::uint64_t tag, std::uint64_t value) {
  return mix64(parent ^ mix64(tag + mix64(value)));
}
}  // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RandomStream::RandomStream(std::uint64_t master_seed)
    : RandomStream(master_seed, mix64(master_seed), std::to_string(master_seed)) {}

RandomStream::RandomStream(std::uint64_t master, std::uint64_t key, std::string path)
    : master_(master), key_(key), path_(std::move(path)), engine_(key) {}

RandomStream RandomStream::child(std::string_view label) const {
  return RandomStream(master_, derive(key_, kLabelTag, fnv1a64(label)),
                      path_ + "/" + std::string(label));
}

RandomStream RandomStream::child(std::uint64_t index) const {
  return RandomStream(master_, derive(key_, kIndexTag, index), path_ + "/" + std::to_string(index));
}

double RandomStream::uniform() {
  // 53 high bits -> [0, 1)
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int RandomStream::uniform_int(int lo, int hi) {
  std::uniform_int_distribution<int> dist(lo, hi);
  return dist(engine_);
}

double RandomStream::normal() { return normal_(engine_); }

Eigen::VectorXd RandomStream::normal_vector(Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal_(engine_);
  return v;
}

}  // namespace creaseforge
