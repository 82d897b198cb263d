#pragma once

// Self-describing little-endian binary container ("DDET") for snapshot sets,
// compressed models and run records.
//
//   magic "DDET" | u32 version | u32 kind
//   layout: i32 nx, ny, ng, num_steps | f64 dx, dy, t0, dt | str stacking
//   u32 metadata count, (str key, str value)...
//   u32 array count, (str name, u64 rows, u64 cols, rows*cols f64 column-major)...
//
// Strings are a u32 byte length followed by the bytes.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddet/drivers.hpp"
#include "ddet/lowrank.hpp"

namespace ddet::persistence {

inline constexpr std::uint32_t kFormatVersion = 1;

enum class ContainerKind : std::uint32_t {
  kSnapshotSet = 1,
  kPodModel = 2,
  kDmdModel = 3,
  kRunRecord = 4,
  kResults = 5,
  kPlaybackModel = 6,
};
std::string to_string(ContainerKind kind);

struct Layout {
  int nx = 0;
  int ny = 0;
  int ng = 0;
  int num_steps = 0;
  double dx = 0.0;
  double dy = 0.0;
  double t0 = 0.0;
  double dt = 0.0;
  std::string stacking = "group-major; boundary L,B,R,T";

  bool same_grid(const Layout& other) const;
  std::string describe() const;
};

struct NamedArray {
  std::string name;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<double> data;  ///< column-major
};

struct Container {
  ContainerKind kind = ContainerKind::kResults;
  Layout layout;
  std::map<std::string, std::string> metadata;
  std::vector<NamedArray> arrays;

  void add(const std::string& name, const Eigen::MatrixXd& m);
  void add(const std::string& name, const std::vector<double>& v);  ///< as a column
  /// Complex data as name_re / name_im.
  void add_complex(const std::string& name, const Eigen::MatrixXcd& m);

  bool has(const std::string& name) const;
  const NamedArray& find(const std::string& name) const;  ///< FormatError when absent
  Eigen::MatrixXd matrix(const std::string& name) const;
  std::vector<double> vector(const std::string& name) const;
  Eigen::MatrixXcd complex_matrix(const std::string& name) const;
  const std::string& meta(const std::string& key) const;  ///< FormatError when absent
};

std::vector<std::uint8_t> encode(const Container& c);
Container decode(const std::vector<std::uint8_t>& bytes);

/// Writes to a sibling temporary file and renames it into place.
void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

// Typed wrappers.
Container snapshots_to_container(const std::vector<lowrank::SnapshotMatrix>& set);
std::vector<lowrank::SnapshotMatrix> snapshots_from_container(const Container& c);

Container model_to_container(const std::string& matrix, const lowrank::CompressedModel& model,
                             const Layout& layout);
lowrank::CompressedModel model_from_container(const Container& c);

Container run_to_container(const drivers::RunRecord& run);
drivers::RunRecord run_from_container(const Container& c);

Layout layout_of(const drivers::RunRecord& run);
Layout layout_of(const lowrank::SnapshotMatrix& m);

}  // namespace ddet::persistence
