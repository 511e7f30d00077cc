#include "evograd/params.hpp"

#include <stdexcept>

namespace evograd {

std::size_t ParamVector::total_dim() const {
  std::size_t n = 0;
  for (const auto& s : segments_) n += s.value.size();
  return n;
}

const Segment& ParamVector::by_name(std::string_view name) const {
  for (const auto& s : segments_)
    if (s.name == name) return s;
  throw std::out_of_range("param vector: no segment named " + std::string(name));
}

std::vector<double> ParamVector::flatten() const {
  std::vector<double> out;
  out.reserve(total_dim());
  for (const auto& s : segments_) out.insert(out.end(), s.value.raw().begin(), s.value.raw().end());
  return out;
}

ParamVector ParamVector::unflatten(std::span<const double> flat) const {
  if (flat.size() != total_dim())
    throw std::invalid_argument("param vector: flat size " + std::to_string(flat.size()) + " vs " +
                                std::to_string(total_dim()));
  ParamVector out;
  std::size_t off = 0;
  for (const auto& s : segments_) {
    const std::size_t n = s.value.size();
    out.add(s.name, Tensor(s.value.shape(), std::vector<double>(flat.begin() + off, flat.begin() + off + n)));
    off += n;
  }
  return out;
}

bool ParamVector::same_structure(const ParamVector& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < size(); ++i)
    if (segments_[i].name != other[i].name || segments_[i].value.shape() != other[i].value.shape()) return false;
  return true;
}

std::vector<Var> ParamVector::record(Tape& tape, LeafKind kind) const {
  std::vector<Var> out;
  out.reserve(size());
  for (const auto& s : segments_) out.push_back(tape.leaf(s.value, kind));
  return out;
}

Tensor flatten(std::span<const Tensor> parts) {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.raw().begin(), p.raw().end());
  return Tensor::vector(std::move(out));
}

}  // namespace evograd
