#include "lhz/diffcore/params.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "lhz/diffcore/errors.hpp"

namespace lhz::diff {

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  if (params_.contains(name)) throw ContractError("duplicate parameter name: " + name);
  Tensor grad = Tensor::zeros_like(init);
  auto [it, _] = params_.emplace(name, Parameter{name, std::move(init), std::move(grad)});
  return it->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

void ParamStore::accumulate_grads(const Graph& g) {
  for (const auto& [param, grad] : g.param_grads()) {
    auto it = params_.find(param->name);
    if (it == params_.end() || &it->second != param) continue;
    Tensor& dst = it->second.grad;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += (*grad)[i];
  }
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.fill(0.0);
}

std::uint64_t ParamStore::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, p] : params_) {
    mix(name.data(), name.size());
    for (std::size_t d : p.value.shape()) mix(&d, sizeof d);
    mix(p.value.raw().data(), p.value.size() * sizeof(double));
  }
  return h;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "parameter serialization assumes a little-endian host");

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw ContractError("parameter file truncated");
  }
  return v;
}

}  // namespace

void save_params(std::ostream& out, const ParamStore& store) {
  out.write("LHZ1", 4);
  write_u32(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, p] : store) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) write_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(p.value.raw().data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing parameters");
}

ParamStore load_params(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "LHZ1", 4) != 0) {
    throw ContractError("bad parameter file magic");
  }
  ParamStore store;
  const std::uint32_t count = read_u32(in);
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t len = read_u32(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw ContractError("parameter file truncated");
    const std::uint32_t rank = read_u32(in);
    Shape shape(rank);
    for (auto& d : shape) d = read_u32(in);
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.raw().data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)))) {
      throw ContractError("parameter file truncated");
    }
    store.add(name, std::move(t));
  }
  return store;
}

}  // namespace lhz::diff
