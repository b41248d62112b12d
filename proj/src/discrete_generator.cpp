#include "shapecorr/discrete_generator.hpp"

#include <stdexcept>

namespace shapecorr {

DiscreteGenerator init_generator(const std::vector<TriMesh>& deformed_templates,
                                 const std::vector<LatentCode>& codes,
                                 const ShapeGraph& graph) {
  if (deformed_templates.empty())
    throw std::invalid_argument("init_generator: no templates");
  if (deformed_templates.size() != codes.size())
    throw std::invalid_argument("init_generator: template/code count mismatch");
  const auto& topology = deformed_templates[0].faces();
  const int n = deformed_templates[0].n();
  for (size_t s = 1; s < deformed_templates.size(); ++s) {
    if (deformed_templates[s].faces() != topology || deformed_templates[s].n() != n)
      throw std::invalid_argument("init_generator: template " + std::to_string(s) +
                                  " has mismatched topology");
  }
  DiscreteGenerator gen;
  gen.topology = topology;
  gen.codes = codes;
  gen.graph = graph;
  gen.vertex_sets.reserve(deformed_templates.size());
  for (const auto& t : deformed_templates) gen.vertex_sets.push_back(t.vertices());
  return gen;
}

}  // namespace shapecorr
