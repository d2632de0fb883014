#pragma once

// On-disk cache for minimal-action cost tables. One CSV file per table, named
// by a 64-bit FNV-1a hash of everything the table depends on.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <Eigen/Dense>

namespace geohj {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

struct CachedTable {
  Eigen::MatrixXd values;
  Eigen::MatrixXi status;  // 1 converged, 0 not
};

class CostCache {
 public:
  /// Cache rooted at GEOHJ_CACHE_DIR, or disabled when it is unset or empty.
  static CostCache from_environment() {
    const char* dir = std::getenv("GEOHJ_CACHE_DIR");
    return CostCache(dir && *dir ? std::filesystem::path(dir) : std::filesystem::path());
  }

  explicit CostCache(std::filesystem::path dir = {}) : dir_(std::move(dir)) {}

  bool enabled() const { return !dir_.empty(); }
  const std::filesystem::path& directory() const { return dir_; }

  static std::string hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  std::filesystem::path file_for(const std::string& key) const { return dir_ / ("cost-" + hex(fnv1a(key)) + ".csv"); }

  /// Returns the table stored under `key` if present with the right shape
  /// and a matching key line; any malformed file is treated as a miss.
  std::optional<CachedTable> load(const std::string& key, int rows, int cols) const {
    if (!enabled()) return std::nullopt;
    std::ifstream in(file_for(key));
    if (!in) return std::nullopt;
    std::string line;
    if (!std::getline(in, line) || line != "# hash=" + hex(fnv1a(key))) return std::nullopt;
    if (!std::getline(in, line) || line != "# key=" + key) return std::nullopt;
    if (!std::getline(in, line) || line.rfind("# spec=", 0) != 0) return std::nullopt;
    if (!std::getline(in, line) || line.rfind("# eps=", 0) != 0) return std::nullopt;
    if (!std::getline(in, line) || line != "row,col,D,converged") return std::nullopt;
    CachedTable t{Eigen::MatrixXd::Constant(rows, cols, std::nan("")), Eigen::MatrixXi::Constant(rows, cols, -1)};
    int seen = 0;
    while (std::getline(in, line)) {
      int i = 0, j = 0, s = 0;
      double v = 0.0;
      if (std::sscanf(line.c_str(), "%d,%d,%lf,%d", &i, &j, &v, &s) != 4) return std::nullopt;
      if (i < 0 || j < 0 || i >= rows || j >= cols || t.status(i, j) != -1) return std::nullopt;
      t.values(i, j) = v;
      t.status(i, j) = s;
      ++seen;
    }
    if (seen != rows * cols) return std::nullopt;
    return t;
  }

  /// Writes through a temporary file and renames it into place, so concurrent
  /// readers see either the old file or the complete new one.
  void store(const std::string& key, const std::string& spec, double eps, const CachedTable& t) const {
    if (!enabled()) return;
    std::lock_guard<std::mutex> lock(write_mutex());
    std::filesystem::create_directories(dir_);
    std::filesystem::path target = file_for(key);
    std::ostringstream tmpname;
    tmpname << target.string() << ".tmp" << std::hash<std::thread::id>{}(std::this_thread::get_id());
    std::filesystem::path tmp = tmpname.str();
    {
      std::ofstream out(tmp);
      if (!out) return;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", eps);
      out << "# hash=" << hex(fnv1a(key)) << "\n# key=" << key << "\n# spec=" << spec << "\n# eps=" << buf
          << "\nrow,col,D,converged\n";
      for (int i = 0; i < t.values.rows(); ++i)
        for (int j = 0; j < t.values.cols(); ++j) {
          std::snprintf(buf, sizeof buf, "%.17g", t.values(i, j));
          out << i << ',' << j << ',' << buf << ',' << t.status(i, j) << '\n';
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) std::filesystem::remove(tmp, ec);
  }

 private:
  static std::mutex& write_mutex() {
    static std::mutex m;
    return m;
  }

  std::filesystem::path dir_;
};

}  // namespace geohj
