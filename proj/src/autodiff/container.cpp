#include "lamcast/autodiff/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lamcast/errors.hpp"

namespace lamcast::ad {

namespace {

constexpr const char* kMagic = "LAMCAST-CONTAINER";

void write_le64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_le64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

bool valid_token(const std::string& s) {
  return !s.empty() && s.find_first_of(" \t\r\n") == std::string::npos;
}

}  // namespace

void Container::set_meta(const std::string& key, const std::string& value) {
  if (!valid_token(key) || value.find('\n') != std::string::npos) {
    throw ContractError("container: invalid metadata entry '" + key + "'");
  }
  meta_[key] = value;
}

std::optional<std::string> Container::meta(const std::string& key) const {
  auto it = meta_.find(key);
  if (it == meta_.end()) return std::nullopt;
  return it->second;
}

const std::string& Container::require_meta(const std::string& key) const {
  auto it = meta_.find(key);
  if (it == meta_.end()) throw CorruptFileError("container: missing metadata '" + key + "'");
  return it->second;
}

void Container::insert(Entry e) {
  if (!valid_token(e.name)) throw ContractError("container: invalid array name '" + e.name + "'");
  auto it = index_.find(e.name);
  if (it != index_.end()) {
    entries_[it->second] = std::move(e);
    return;
  }
  index_[e.name] = entries_.size();
  entries_.push_back(std::move(e));
}

void Container::put(const std::string& name, Tensor t) {
  Shape s = t.shape();
  insert(Entry{name, std::move(s), std::move(t)});
}

void Container::put_indices(const std::string& name, Shape shape, IndexArray values) {
  if (numel(shape) != values.size()) {
    throw DimensionError("container: index array '" + name + "' size does not match shape");
  }
  insert(Entry{name, std::move(shape), std::move(values)});
}

const Container::Entry& Container::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw CorruptFileError("container: missing array '" + name + "'");
  return entries_[it->second];
}

const Tensor& Container::tensor(const std::string& name) const {
  const Entry& e = entry(name);
  if (!std::holds_alternative<Tensor>(e.data)) {
    throw CorruptFileError("container: array '" + name + "' is not f64");
  }
  return std::get<Tensor>(e.data);
}

const Container::IndexArray& Container::indices(const std::string& name) const {
  const Entry& e = entry(name);
  if (!std::holds_alternative<IndexArray>(e.data)) {
    throw CorruptFileError("container: array '" + name + "' is not i64");
  }
  return std::get<IndexArray>(e.data);
}

const Shape& Container::shape(const std::string& name) const { return entry(name).shape; }

std::vector<std::string> Container::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

void Container::require_kind(const std::string& expected) const {
  if (kind_ != expected) {
    throw ContractError("container holds '" + kind_ + "', expected '" + expected + "'");
  }
}

void Container::save(const std::filesystem::path& path) const {
  std::string payload;
  std::ostringstream header;
  header << kMagic << ' ' << kVersion << '\n';
  header << "kind " << kind_ << '\n';
  for (const auto& [k, v] : meta_) header << "meta " << k << ' ' << v << '\n';
  for (const auto& e : entries_) {
    const std::size_t offset = payload.size();
    const char* dtype = "f64";
    if (const auto* t = std::get_if<Tensor>(&e.data)) {
      for (double v : t->values()) write_le64(payload, std::bit_cast<std::uint64_t>(v));
    } else {
      dtype = "i64";
      for (std::int64_t v : std::get<IndexArray>(e.data)) {
        write_le64(payload, static_cast<std::uint64_t>(v));
      }
    }
    header << "array " << e.name << ' ' << dtype << ' ' << offset << ' '
           << payload.size() - offset << ' ' << e.shape.size();
    for (std::size_t d : e.shape) header << ' ' << d;
    header << '\n';
  }
  header << "end " << payload.size() << '\n';

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  const std::string h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

Container Container::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  const std::string where = " in '" + path.string() + "'";

  std::string line;
  if (!std::getline(in, line)) throw CorruptFileError("empty container" + where);
  {
    std::istringstream ls(line);
    std::string magic;
    int version = 0;
    if (!(ls >> magic >> version) || magic != kMagic) {
      throw CorruptFileError("not a lamcast container" + where);
    }
    if (version != kVersion) {
      throw VersionError("container version " + std::to_string(version) + " (expected " +
                         std::to_string(kVersion) + ")" + where);
    }
  }

  struct Pending {
    std::string name, dtype;
    std::size_t offset = 0, nbytes = 0;
    Shape shape;
  };
  Container c;
  std::vector<Pending> pending;
  std::size_t payload_size = 0;
  bool ended = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "kind") {
      ls >> c.kind_;
    } else if (tag == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      c.meta_[key] = value;
    } else if (tag == "array") {
      Pending p;
      std::size_t rank = 0;
      if (!(ls >> p.name >> p.dtype >> p.offset >> p.nbytes >> rank)) {
        throw CorruptFileError("bad array header line" + where);
      }
      p.shape.resize(rank);
      for (auto& d : p.shape) {
        if (!(ls >> d)) throw CorruptFileError("bad array shape for '" + p.name + "'" + where);
      }
      if (numel(p.shape) * 8 != p.nbytes || (p.dtype != "f64" && p.dtype != "i64")) {
        throw CorruptFileError("inconsistent array entry '" + p.name + "'" + where);
      }
      pending.push_back(std::move(p));
    } else if (tag == "end") {
      if (!(ls >> payload_size)) throw CorruptFileError("bad end marker" + where);
      ended = true;
      break;
    } else {
      throw CorruptFileError("unknown header tag '" + tag + "'" + where);
    }
  }
  if (!ended) throw CorruptFileError("truncated header" + where);

  std::string payload(payload_size, '\0');
  in.read(payload.data(), static_cast<std::streamsize>(payload_size));
  if (static_cast<std::size_t>(in.gcount()) != payload_size) {
    throw CorruptFileError("truncated payload" + where);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CorruptFileError("trailing bytes after payload" + where);
  }

  for (auto& p : pending) {
    if (p.offset + p.nbytes > payload_size) {
      throw CorruptFileError("array '" + p.name + "' exceeds payload" + where);
    }
    const char* base = payload.data() + p.offset;
    const std::size_t n = p.nbytes / 8;
    if (p.dtype == "f64") {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = std::bit_cast<double>(read_le64(base + 8 * i));
      c.put(p.name, Tensor(p.shape, std::move(v)));
    } else {
      IndexArray v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::int64_t>(read_le64(base + 8 * i));
      c.put_indices(p.name, p.shape, std::move(v));
    }
  }
  return c;
}

}  // namespace lamcast::ad
