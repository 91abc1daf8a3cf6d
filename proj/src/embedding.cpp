#include "memrl/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "memrl/errors.hpp"

namespace memrl {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

Vector token_unit_vector(const std::string& token, int d, std::uint64_t seed) {
  Rng rng(splitmix64(fnv1a64(token) ^ splitmix64(seed)));
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.gauss();
  double n = v.norm();
  if (n == 0.0) v[0] = 1.0;  // unreachable in practice, keeps the contract total
  else v /= n;
  return v;
}

}  // namespace

Vector embed_text(const std::string& text, int d, std::uint64_t seed) {
  if (d < 2) throw InvalidInputError("embed_text: dimension must be >= 2");

  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (is_space(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  if (tokens.empty()) throw InvalidInputError("embed_text: empty text");

  Vector acc = Vector::Zero(d);
  for (const auto& tok : tokens) acc += token_unit_vector(tok, d, seed);
  acc /= static_cast<double>(tokens.size());

  double n = acc.norm();
  if (n < 1e-12) {
    // Token vectors cancelled out; fall back to the first token's direction.
    acc = token_unit_vector(tokens.front(), d, seed);
    n = acc.norm();
  }
  return acc / n;
}

double cosine(const Vector& u, const Vector& v) {
  if (u.size() != v.size())
    throw InvalidInputError("cosine: length mismatch (" + std::to_string(u.size()) + " vs " +
                            std::to_string(v.size()) + ")");
  double nu = u.norm();
  double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw InvalidInputError("cosine: zero-norm input");
  double c = u.dot(v) / (nu * nv);
  return std::clamp(c, -1.0, 1.0);
}

const Vector& EmbeddingTable::at(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw NotFoundError("embedding table: unknown key '" + key + "'");
  return it->second;
}

void EmbeddingTable::insert(const std::string& key, const Vector& v) {
  if (entries_.count(key)) throw ConflictError("embedding table: duplicate key '" + key + "'");
  if (d_ == 0) d_ = static_cast<int>(v.size());
  if (v.size() != d_)
    throw InvalidInputError("embedding table: dimension mismatch for key '" + key + "'");
  entries_.emplace(key, v);
}

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding table: " + path);

  EmbeddingTable table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError(path + ":" + std::to_string(lineno) + ": missing tab separator", lineno);
    std::string key = line.substr(0, tab);
    if (table.entries_.count(key))
      throw ParseError(path + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'",
                       lineno);

    std::vector<double> vals;
    std::stringstream ss(line.substr(tab + 1));
    std::string field;
    while (std::getline(ss, field, ',')) {
      try {
        std::size_t pos = 0;
        double x = std::stod(field, &pos);
        while (pos < field.size() && is_space(field[pos])) ++pos;
        if (pos != field.size()) throw std::invalid_argument(field);
        vals.push_back(x);
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": bad float '" + field + "'",
                         lineno);
      }
    }
    if (vals.empty())
      throw ParseError(path + ":" + std::to_string(lineno) + ": empty vector", lineno);
    if (table.d_ != 0 && static_cast<int>(vals.size()) != table.d_)
      throw ParseError(path + ":" + std::to_string(lineno) + ": dimension " +
                           std::to_string(vals.size()) + " does not match table dimension " +
                           std::to_string(table.d_),
                       lineno);
    Vector v = Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    if (table.d_ == 0) table.d_ = static_cast<int>(vals.size());
    table.entries_.emplace(std::move(key), std::move(v));
  }
  return table;
}

void EmbeddingTable::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write embedding table: " + path);
  out << std::setprecision(17);
  for (const auto& [key, v] : entries_) {
    out << key << '\t';
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (i) out << ',';
      out << v[i];
    }
    out << '\n';
  }
}

}  // namespace memrl
