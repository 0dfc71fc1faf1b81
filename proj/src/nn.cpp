#include "relcp/nn.hpp"

#include <cstring>

namespace relcp::nn {

template <typename S>
std::uint64_t ParameterSet<S>::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : params_) {
    mix(p->name.data(), p->name.size());
    const std::uint64_t shape[2] = {p->value.rows(), p->value.cols()};
    mix(shape, sizeof(shape));
    mix(p->value.data(), p->value.size() * sizeof(S));
  }
  return h;
}

template <typename S>
nlohmann::json ParameterSet<S>::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : params_) {
    std::vector<float> values(p->value.flat().begin(), p->value.flat().end());
    arr.push_back({{"name", p->name},
                   {"shape", {p->value.rows(), p->value.cols()}},
                   {"values", values}});
  }
  return arr;
}

template <typename S>
void ParameterSet<S>::load_json(const nlohmann::json& j) {
  for (const auto& item : j) {
    const std::string name = item.at("name");
    auto& p = at(name);
    const auto shape = item.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != p.value.rows() || shape[1] != p.value.cols()) {
      throw std::invalid_argument("parameter " + name + ": shape mismatch in checkpoint");
    }
    const auto values = item.at("values").get<std::vector<float>>();
    if (values.size() != p.value.size()) throw std::invalid_argument("parameter " + name + ": size");
    for (std::size_t k = 0; k < values.size(); ++k) p.value.flat()[k] = static_cast<S>(values[k]);
  }
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace relcp::nn
