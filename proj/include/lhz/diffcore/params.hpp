#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>

#include "lhz/diffcore/graph.hpp"
#include "lhz/diffcore/tensor.hpp"

namespace lhz::diff {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Named parameters, iterated in lexicographic name order so optimizer steps
// and serialization are reproducible.
class ParamStore {
 public:
  using Map = std::map<std::string, Parameter>;

  Parameter& add(const std::string& name, Tensor init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.contains(name); }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }

  // Adds the gradients of this store's parameters reached by `g`'s last sweep.
  void accumulate_grads(const Graph& g);
  void zero_grad();

  // FNV-1a over names, shapes and value bits.
  std::uint64_t checksum() const;

 private:
  Map params_;
};

// Flat binary format: "LHZ1", u32 entry count, then per entry u32 name length,
// name bytes, u32 rank, u32 dims, f64 values. All little-endian.
void save_params(std::ostream& out, const ParamStore& store);
ParamStore load_params(std::istream& in);

}  // namespace lhz::diff
