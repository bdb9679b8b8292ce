#include "kgzsl/features.hpp"

#include "kgzsl/digest.hpp"
#include "kgzsl/kg.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace kgzsl {

namespace {

constexpr char kMagic[8] = {'K', 'G', 'Z', 'S', 'L', 'F', 'E', 'A'};

[[noreturn]] void parse_fail(const std::string& source, std::size_t lineno, const std::string& what) {
  throw ParseError(source + ":" + std::to_string(lineno) + ": " + what);
}

}  // namespace

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kSeen: return "seen";
    case Provenance::kUnseen: return "unseen";
    case Provenance::kSynthetic: return "synthetic";
  }
  return "?";
}

Provenance provenance_from_name(const std::string& name) {
  if (name == "seen") return Provenance::kSeen;
  if (name == "unseen") return Provenance::kUnseen;
  if (name == "synthetic") return Provenance::kSynthetic;
  throw ParseError("unknown provenance '" + name + "'");
}

void FeatureSet::append(const FeatureSet& other) {
  if (other.rows() == 0) return;
  if (rows() == 0) {
    *this = other;
    return;
  }
  if (dim() != other.dim())
    throw StructuralError("feature dimensions differ: " + std::to_string(dim()) + " vs " +
                          std::to_string(other.dim()));
  MatXd merged(rows() + other.rows(), dim());
  merged << x, other.x;
  x = std::move(merged);
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  provenance.insert(provenance.end(), other.provenance.begin(), other.provenance.end());
}

void FeatureSet::validate() const {
  if (static_cast<Index>(labels.size()) != rows() ||
      static_cast<Index>(provenance.size()) != rows())
    throw ValidationError("feature set rows, labels, and provenance tags disagree");
}

std::string FeatureSet::digest() const {
  return Digest().update(features_to_text(*this)).hex();
}

std::vector<std::pair<std::string, std::vector<Index>>> FeatureSet::rows_by_label() const {
  std::map<std::string, std::vector<Index>> groups;
  for (Index i = 0; i < rows(); ++i) groups[labels[static_cast<std::size_t>(i)]].push_back(i);
  return {groups.begin(), groups.end()};
}

std::string features_to_text(const FeatureSet& fs) {
  fs.validate();
  std::ostringstream os;
  os << "features " << fs.rows() << ' ' << fs.dim() << '\n';
  for (Index r = 0; r < fs.rows(); ++r) {
    os << fs.labels[static_cast<std::size_t>(r)] << '\t'
       << provenance_name(fs.provenance[static_cast<std::size_t>(r)]) << '\t';
    for (Index c = 0; c < fs.dim(); ++c) {
      if (c) os << ',';
      os << format_real(fs.x(r, c));
    }
    os << '\n';
  }
  return os.str();
}

FeatureSet parse_features_text(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(source + ": empty feature file");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();

  long rows = -1, dim = -1;
  {
    std::istringstream header(line);
    std::string tag;
    header >> tag >> rows >> dim;
    if (tag != "features" || rows < 0 || dim < 0)
      parse_fail(source, lineno, "expected header 'features <rows> <dim>'");
  }

  FeatureSet fs;
  fs.x.resize(rows, dim);
  fs.labels.reserve(static_cast<std::size_t>(rows));
  fs.provenance.reserve(static_cast<std::size_t>(rows));

  Index r = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (r >= rows) parse_fail(source, lineno, "more rows than the header declares");
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos)
      parse_fail(source, lineno, "expected label<TAB>provenance<TAB>reals");
    fs.labels.push_back(line.substr(0, tab1));
    try {
      fs.provenance.push_back(provenance_from_name(line.substr(tab1 + 1, tab2 - tab1 - 1)));
    } catch (const ParseError& e) {
      parse_fail(source, lineno, e.what());
    }
    const char* p = line.data() + tab2 + 1;
    const char* end = line.data() + line.size();
    for (Index c = 0; c < dim; ++c) {
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) parse_fail(source, lineno, "malformed real");
      fs.x(r, c) = v;
      p = next;
      if (c + 1 < dim) {
        if (p == end || *p != ',') parse_fail(source, lineno, "expected ',' between reals");
        ++p;
      }
    }
    if (p != end) parse_fail(source, lineno, "trailing characters after the row");
    ++r;
  }
  if (r != rows)
    throw ParseError(source + ": header declares " + std::to_string(rows) + " rows, found " +
                     std::to_string(r));
  return fs;
}

namespace {

template <class T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T read_raw(std::istream& in, const std::string& source) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ParseError(source + ": truncated binary feature file");
  return v;
}

void save_features_binary(const FeatureSet& fs, std::ostream& out) {
  out.write(kMagic, sizeof kMagic);
  write_raw(out, static_cast<std::uint32_t>(fs.rows()));
  write_raw(out, static_cast<std::uint32_t>(fs.dim()));
  for (Index r = 0; r < fs.rows(); ++r) {
    const auto& label = fs.labels[static_cast<std::size_t>(r)];
    write_raw(out, static_cast<std::uint16_t>(label.size()));
    out.write(label.data(), static_cast<std::streamsize>(label.size()));
    write_raw(out, static_cast<std::uint8_t>(fs.provenance[static_cast<std::size_t>(r)]));
    for (Index c = 0; c < fs.dim(); ++c) write_raw(out, static_cast<float>(fs.x(r, c)));
  }
}

FeatureSet load_features_binary(std::istream& in, const std::string& source) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw ParseError(source + ": bad magic in binary feature file");
  const auto rows = read_raw<std::uint32_t>(in, source);
  const auto dim = read_raw<std::uint32_t>(in, source);
  FeatureSet fs;
  fs.x.resize(rows, dim);
  for (std::uint32_t r = 0; r < rows; ++r) {
    const auto len = read_raw<std::uint16_t>(in, source);
    std::string label(len, '\0');
    in.read(label.data(), len);
    if (!in) throw ParseError(source + ": truncated binary feature file");
    fs.labels.push_back(std::move(label));
    const auto prov = read_raw<std::uint8_t>(in, source);
    if (prov > 2) throw ParseError(source + ": bad provenance byte");
    fs.provenance.push_back(static_cast<Provenance>(prov));
    for (std::uint32_t c = 0; c < dim; ++c)
      fs.x(static_cast<Index>(r), static_cast<Index>(c)) = read_raw<float>(in, source);
  }
  return fs;
}

}  // namespace

void save_features(const FeatureSet& fs, const std::filesystem::path& path, bool binary) {
  fs.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write feature file '" + path.string() + "'");
  if (binary)
    save_features_binary(fs, out);
  else
    out << features_to_text(fs);
}

FeatureSet load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open feature file '" + path.string() + "'");
  char magic[8] = {};
  in.read(magic, sizeof magic);
  in.seekg(0);
  FeatureSet fs;
  if (std::memcmp(magic, kMagic, sizeof kMagic) == 0) {
    fs = load_features_binary(in, path.filename().string());
  } else {
    fs = parse_features_text(in, path.filename().string());
  }
  fs.validate();
  return fs;
}

}  // namespace kgzsl
