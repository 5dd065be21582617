#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lamcast/autodiff/tensor.hpp"

namespace lamcast::ad {

/// Named-array file used for checkpoints, graphs and datasets.
///
/// Layout: a text header, then a little-endian binary payload.
///
///     LAMCAST-CONTAINER <version>
///     kind <kind>
///     meta <key> <value to end of line>
///     array <name> <f64|i64> <offset> <nbytes> <rank> <dim>...
///     end <payload bytes>
///     <payload>
///
/// Array offsets are relative to the first payload byte. Entries keep
/// insertion order.
class Container {
 public:
  static constexpr int kVersion = 1;

  using IndexArray = std::vector<std::int64_t>;

  explicit Container(std::string kind = "generic") : kind_(std::move(kind)) {}

  const std::string& kind() const { return kind_; }

  void set_meta(const std::string& key, const std::string& value);
  std::optional<std::string> meta(const std::string& key) const;
  /// Throws CorruptFileError when missing.
  const std::string& require_meta(const std::string& key) const;
  const std::map<std::string, std::string>& metadata() const { return meta_; }

  void put(const std::string& name, Tensor t);
  void put_indices(const std::string& name, Shape shape, IndexArray values);

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  /// Throws CorruptFileError when missing or of the wrong dtype.
  const Tensor& tensor(const std::string& name) const;
  const IndexArray& indices(const std::string& name) const;
  const Shape& shape(const std::string& name) const;
  std::vector<std::string> names() const;

  void save(const std::filesystem::path& path) const;
  /// Throws VersionError on a version mismatch, CorruptFileError on any
  /// parse or size problem (including truncation).
  static Container load(const std::filesystem::path& path);

  /// Throws ContractError when the file kind differs from `expected`.
  void require_kind(const std::string& expected) const;

 private:
  struct Entry {
    std::string name;
    Shape shape;
    std::variant<Tensor, IndexArray> data;
  };

  std::string kind_;
  std::map<std::string, std::string> meta_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;

  const Entry& entry(const std::string& name) const;
  void insert(Entry e);
};

}  // namespace lamcast::ad
