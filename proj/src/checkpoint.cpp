#include "csa/checkpoint.hpp"

#include <fstream>

#include "csa/errors.hpp"

namespace csa {

nlohmann::json checkpoint_to_json(const NamedParams& params) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [name, p] : params) {
    const Grid& g = p->value;
    doc[name] = {{"shape", {g.rows(), g.cols()}},
                 {"values", std::vector<double>(g.values().begin(), g.values().end())}};
  }
  return doc;
}

void checkpoint_from_json(const nlohmann::json& doc, const NamedParams& params) {
  for (const auto& [name, p] : params) {
    if (!doc.contains(name)) throw ShapeError("checkpoint is missing parameter '" + name + "'");
    const auto& entry = doc.at(name);
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != p->value.rows() || shape[1] != p->value.cols()) {
      throw ShapeError("checkpoint shape mismatch for '" + name + "'");
    }
    p->value = Grid(shape[0], shape[1], entry.at("values").get<std::vector<double>>());
  }
}

void save_checkpoint(const std::filesystem::path& path, const NamedParams& params) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(params).dump() << '\n';
}

void load_checkpoint(const std::filesystem::path& path, const NamedParams& params) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  checkpoint_from_json(nlohmann::json::parse(in), params);
}

}  // namespace csa
