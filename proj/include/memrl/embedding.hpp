#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>

#include "memrl/rng.hpp"

namespace memrl {

using Vector = Eigen::VectorXd;

// Deterministic text embedder: each whitespace token is hashed to a
// pseudo-random unit vector, token vectors are averaged and the result is
// renormalized. Texts sharing tokens land closer in cosine than disjoint
// texts, which is all the engine needs from an embedding surrogate.
Vector embed_text(const std::string& text, int d, std::uint64_t seed);

// Cosine similarity, clamped to [-1, 1] against rounding. Throws on length
// mismatch or a zero-norm input.
double cosine(const Vector& u, const Vector& v);

// File-backed embedding table for injecting precomputed vectors. Immutable
// once loaded; safe for concurrent readers.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  int dimension() const { return d_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  const Vector& at(const std::string& key) const;

  void insert(const std::string& key, const Vector& v);

  // Format: one record per line, `key<TAB>v1,v2,...,vd`; '#' lines ignored.
  static EmbeddingTable load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::map<std::string, Vector> entries_;
  int d_ = 0;
};

}  // namespace memrl
