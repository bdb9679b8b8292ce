#include "kgzsl/embedding.hpp"

#include "kgzsl/kg.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace kgzsl {

VecXd ClassEmbeddingTable::embedding(const std::string& name) const {
  auto it = index.find(name);
  if (it == index.end()) throw ValidationError("no embedding for class '" + name + "'");
  VecXd out(dim());
  out.head(dim_c()) = class_view.row(it->second).transpose();
  out.tail(dim_a()) = attribute_view.row(it->second).transpose();
  return out;
}

MatXd ClassEmbeddingTable::full() const {
  MatXd out(size(), dim());
  out.leftCols(dim_c()) = class_view;
  out.rightCols(dim_a()) = attribute_view;
  return out;
}

void ClassEmbeddingTable::validate() const {
  if (class_view.rows() != size() || attribute_view.rows() != size())
    throw ValidationError("embedding table row counts disagree with the class list");
  if (static_cast<Index>(index.size()) != size())
    throw ValidationError("embedding table class names are not unique");
}

ClassEmbeddingTable make_embedding_table(std::vector<std::string> classes, MatXd class_view,
                                         MatXd attribute_view) {
  ClassEmbeddingTable t;
  t.classes = std::move(classes);
  t.class_view = std::move(class_view);
  t.attribute_view = std::move(attribute_view);
  for (Index i = 0; i < t.size(); ++i) t.index[t.classes[static_cast<std::size_t>(i)]] = i;
  t.validate();
  return t;
}

namespace {

void append_row_csv(std::ostringstream& os, const MatXd& m, Index row) {
  for (Index c = 0; c < m.cols(); ++c) {
    if (c) os << ',';
    os << format_real(m(row, c));
  }
}

Index parse_row_csv(const std::string& field, MatXd& m, Index row, const std::string& source,
                    std::size_t lineno) {
  if (field.empty()) return 0;
  const char* p = field.data();
  const char* end = field.data() + field.size();
  Index c = 0;
  while (true) {
    double v = 0.0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc())
      throw ParseError(source + ":" + std::to_string(lineno) + ": malformed real");
    if (c >= m.cols())
      throw ParseError(source + ":" + std::to_string(lineno) + ": too many values");
    m(row, c++) = v;
    p = next;
    if (p == end) break;
    if (*p != ',') throw ParseError(source + ":" + std::to_string(lineno) + ": expected ','");
    ++p;
  }
  return c;
}

}  // namespace

std::string embeddings_to_text(const ClassEmbeddingTable& table) {
  std::ostringstream os;
  os << "class_embeddings " << table.size() << ' ' << table.dim_c() << ' ' << table.dim_a()
     << '\n';
  for (Index i = 0; i < table.size(); ++i) {
    os << table.classes[static_cast<std::size_t>(i)] << '\t';
    append_row_csv(os, table.class_view, i);
    os << '\t';
    append_row_csv(os, table.attribute_view, i);
    os << '\n';
  }
  return os.str();
}

ClassEmbeddingTable parse_embeddings(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(source + ": empty embedding file");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();

  long n = -1, dim_c = -1, dim_a = -1;
  {
    std::istringstream header(line);
    std::string tag;
    header >> tag >> n >> dim_c >> dim_a;
    if (tag != "class_embeddings" || n < 0 || dim_c < 0 || dim_a < 0)
      throw ParseError(source + ":1: expected header 'class_embeddings <n> <dim_c> <dim_a>'");
  }

  std::vector<std::string> classes;
  MatXd gc(n, dim_c), ga(n, dim_a);
  Index row = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (row >= n) throw ParseError(source + ": more rows than the header declares");
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos)
      throw ParseError(source + ":" + std::to_string(lineno) +
                       ": expected name<TAB>gc<TAB>ga");
    classes.push_back(line.substr(0, tab1));
    const auto got_c = parse_row_csv(line.substr(tab1 + 1, tab2 - tab1 - 1), gc, row, source, lineno);
    const auto got_a = parse_row_csv(line.substr(tab2 + 1), ga, row, source, lineno);
    if (got_c != dim_c || got_a != dim_a)
      throw ParseError(source + ":" + std::to_string(lineno) + ": row dimensions disagree with header");
    ++row;
  }
  if (row != n)
    throw ParseError(source + ": header declares " + std::to_string(n) + " rows, found " +
                     std::to_string(row));
  return make_embedding_table(std::move(classes), std::move(gc), std::move(ga));
}

void save_embeddings(const ClassEmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write embedding file '" + path.string() + "'");
  out << embeddings_to_text(table);
}

ClassEmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open embedding file '" + path.string() + "'");
  return parse_embeddings(in, path.filename().string());
}

}  // namespace kgzsl
