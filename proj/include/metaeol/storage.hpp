#ifndef METAEOL_STORAGE_HPP
#define METAEOL_STORAGE_HPP

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "metaeol/error.hpp"
#include "metaeol/format.hpp"
#include "metaeol/hash.hpp"

namespace metaeol {

struct CacheKey {
  std::string canonical;  // model_id|template_id|layer_index|sha256_hex(sentence)
  std::uint64_t digest = 0;

  bool operator==(const CacheKey& other) const { return canonical == other.canonical; }
};

inline CacheKey make_key(std::string canonical) {
  const auto digest = fnv1a64(canonical);
  return {std::move(canonical), digest};
}

inline CacheKey cache_key(const std::string& model_id, const std::string& template_id, int layer_index,
                          std::string_view sentence) {
  return make_key(model_id + "|" + template_id + "|" + std::to_string(layer_index) + "|" + sha256_hex(sentence));
}

struct EmbeddingRecord {
  std::string key;
  std::vector<float> values;
};

struct EmbeddingFile {
  std::uint8_t flags = 0;
  std::uint32_t dim = 0;
  std::vector<EmbeddingRecord> records;
};

inline constexpr char kMagic[4] = {'M', 'E', 'O', 'L'};
inline constexpr std::uint8_t kFormatVersion = 0x01;
inline constexpr std::size_t kHeaderSize = 4 + 1 + 1 + 4 + 8;

// Flag bits in the header.
inline constexpr std::uint8_t kFlagAggregated = 0x01;

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

inline std::uint32_t float_bits(float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, sizeof u);
  return u;
}

inline float bits_float(std::uint32_t u) {
  float f;
  std::memcpy(&f, &u, sizeof f);
  return f;
}

}  // namespace detail

inline std::string encode_embeddings(std::span<const EmbeddingRecord> records, std::uint32_t dim,
                                     std::uint8_t flags = 0) {
  std::unordered_set<std::string_view> seen;
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kFormatVersion));
  out.push_back(static_cast<char>(flags));
  detail::put_le<std::uint32_t>(out, dim);
  detail::put_le<std::uint64_t>(out, records.size());
  for (const auto& r : records) {
    if (r.values.size() != dim) {
      throw Error(ErrorKind::DimMismatch, "record '" + r.key + "' has " + std::to_string(r.values.size()) +
                                              " floats, file dim is " + std::to_string(dim));
    }
    if (r.key.size() > 0xffff) throw Error(ErrorKind::IoError, "key longer than 65535 bytes");
    if (!seen.insert(r.key).second) throw Error(ErrorKind::DuplicateKey, "'" + r.key + "'");
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(r.key.size()));
    out.append(r.key);
    for (float f : r.values) detail::put_le<std::uint32_t>(out, detail::float_bits(f));
  }
  return out;
}

inline EmbeddingFile decode_embeddings(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 4 || std::memcmp(p, kMagic, 4) != 0) throw Error(ErrorKind::BadMagic, "not an embedding file");
  if (n < 5) throw Error(ErrorKind::TruncatedFile, "header truncated at byte offset " + std::to_string(n));
  if (p[4] != kFormatVersion) throw Error(ErrorKind::UnsupportedVersion, "version " + std::to_string(p[4]));
  if (n < kHeaderSize) throw Error(ErrorKind::TruncatedFile, "header truncated at byte offset " + std::to_string(n));
  EmbeddingFile file;
  file.flags = p[5];
  file.dim = detail::get_le<std::uint32_t>(p + 6);
  const auto count = detail::get_le<std::uint64_t>(p + 10);
  std::size_t off = kHeaderSize;
  std::unordered_set<std::string> seen;
  auto truncated = [&](std::size_t need) {
    if (off + need > n) {
      throw Error(ErrorKind::TruncatedFile, "record " + std::to_string(file.records.size()) +
                                                " truncated at byte offset " + std::to_string(n) +
                                                " (needs " + std::to_string(off + need) + ")");
    }
  };
  for (std::uint64_t i = 0; i < count; ++i) {
    truncated(2);
    const auto key_len = detail::get_le<std::uint16_t>(p + off);
    off += 2;
    truncated(key_len);
    EmbeddingRecord rec;
    rec.key.assign(bytes.substr(off, key_len));
    off += key_len;
    truncated(4ULL * file.dim);
    rec.values.resize(file.dim);
    for (std::uint32_t j = 0; j < file.dim; ++j, off += 4) {
      rec.values[j] = detail::bits_float(detail::get_le<std::uint32_t>(p + off));
    }
    if (!seen.insert(rec.key).second) throw Error(ErrorKind::DuplicateKey, "'" + rec.key + "'");
    file.records.push_back(std::move(rec));
  }
  if (off != n) {
    throw Error(ErrorKind::DimMismatch, std::to_string(n - off) + " trailing bytes after " + std::to_string(count) +
                                            " records of dim " + std::to_string(file.dim));
  }
  return file;
}

inline void write_embeddings(const std::filesystem::path& path, std::span<const EmbeddingRecord> records,
                             std::uint32_t dim, std::uint8_t flags = 0) {
  const auto bytes = encode_embeddings(records, dim, flags);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

inline EmbeddingFile read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_embeddings(bytes);
}

// key<TAB>dim<TAB>first four floats, one line per record.
inline void dump_records(std::ostream& os, const EmbeddingFile& file) {
  for (const auto& r : file.records) {
    os << r.key << '\t' << r.values.size();
    for (std::size_t i = 0; i < r.values.size() && i < 4; ++i) os << '\t' << shortest(r.values[i]);
    os << '\n';
  }
}

// Per-prompt embedding cache backed by a directory of sealed segment files.
// Segments are never modified; new entries are buffered and sealed into a new
// segment by flush(). Writers serialize on an advisory lock in the directory.
class EmbeddingCache {
 public:
  // In-memory only; flush() is a no-op.
  EmbeddingCache() = default;

  explicit EmbeddingCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    std::vector<std::filesystem::path> segments;
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      if (entry.is_regular_file() && entry.path().extension() == ".meol") segments.push_back(entry.path());
    }
    std::sort(segments.begin(), segments.end());
    for (const auto& seg : segments) {
      for (auto& rec : read_embeddings(seg).records) index_insert(make_key(std::move(rec.key)), std::move(rec.values));
    }
  }

  EmbeddingCache(const EmbeddingCache&) = delete;
  EmbeddingCache& operator=(const EmbeddingCache&) = delete;

  ~EmbeddingCache() {
    try {
      flush();
    } catch (...) {
    }
  }

  std::optional<std::vector<float>> lookup(const CacheKey& key) const {
    std::shared_lock lock(mutex_);
    auto it = index_.find(key.digest);
    if (it != index_.end()) {
      for (const auto& [canonical, values] : it->second) {
        if (canonical == key.canonical) {
          ++hits_;
          return values;
        }
      }
    }
    ++misses_;
    return std::nullopt;
  }

  void insert(const CacheKey& key, std::vector<float> values) {
    std::unique_lock lock(mutex_);
    if (contains_unlocked(key)) return;
    if (!dir_.empty()) pending_.push_back({key.canonical, values});
    index_insert(key, std::move(values));
  }

  void flush() {
    std::vector<EmbeddingRecord> pending;
    {
      std::unique_lock lock(mutex_);
      pending.swap(pending_);
    }
    if (pending.empty() || dir_.empty()) return;
    std::map<std::size_t, std::vector<EmbeddingRecord>> by_dim;
    for (auto& r : pending) by_dim[r.values.size()].push_back(std::move(r));

    const auto lock_path = dir_ / ".lock";
    const int fd = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd < 0) throw Error(ErrorKind::IoError, "cannot open cache lock " + lock_path.string());
    ::flock(fd, LOCK_EX);
    try {
      for (const auto& [dim, records] : by_dim) {
        const auto name = segment_name();
        const auto tmp = dir_ / (name + ".tmp");
        write_embeddings(tmp, records, static_cast<std::uint32_t>(dim));
        std::filesystem::rename(tmp, dir_ / (name + ".meol"));
      }
    } catch (...) {
      ::flock(fd, LOCK_UN);
      ::close(fd);
      throw;
    }
    ::flock(fd, LOCK_UN);
    ::close(fd);
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return size_;
  }

  std::uint64_t hits() const noexcept { return hits_.load(); }
  std::uint64_t misses() const noexcept { return misses_.load(); }

  const std::filesystem::path& directory() const noexcept { return dir_; }

  // Snapshot of every entry, ordered by canonical key.
  std::vector<EmbeddingRecord> entries() const {
    std::vector<EmbeddingRecord> out;
    {
      std::shared_lock lock(mutex_);
      for (const auto& [digest, bucket] : index_) {
        for (const auto& [canonical, values] : bucket) out.push_back({canonical, values});
      }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
    return out;
  }

 private:
  bool contains_unlocked(const CacheKey& key) const {
    auto it = index_.find(key.digest);
    if (it == index_.end()) return false;
    for (const auto& entry : it->second) {
      if (entry.first == key.canonical) return true;
    }
    return false;
  }

  void index_insert(const CacheKey& key, std::vector<float> values) {
    if (contains_unlocked(key)) return;
    index_[key.digest].emplace_back(key.canonical, std::move(values));
    ++size_;
  }

  std::string segment_name() {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(now).count();
    return "seg-" + std::to_string(ns) + "-" + std::to_string(::getpid()) + "-" + std::to_string(sequence_++);
  }

  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::uint64_t, std::vector<std::pair<std::string, std::vector<float>>>> index_;
  std::vector<EmbeddingRecord> pending_;
  std::size_t size_ = 0;
  std::uint64_t sequence_ = 0;
  mutable std::atomic<std::uint64_t> hits_{0};
  mutable std::atomic<std::uint64_t> misses_{0};
};

}  // namespace metaeol

#endif  // METAEOL_STORAGE_HPP
