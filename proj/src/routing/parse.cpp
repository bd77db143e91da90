#include "capsgram/routing/parse.hpp"

#include <cstdio>
#include <sstream>

#include "capsgram/error.hpp"

namespace capsgram {

const ParseEdge& ParseForest::at(std::size_t in_type, std::size_t y, std::size_t x) const {
  if (in_type >= n_in || y >= height || x >= width) {
    throw ShapeError("parse forest index out of range");
  }
  return edges[(in_type * height + y) * width + x];
}

ParseForest extract_parse(const RoutingTrace& trace) {
  return extract_parse(trace.final_coefficients());
}

ParseForest extract_parse(const Tensor& coefficients) {
  if (coefficients.rank() != 4) {
    throw ShapeError("extract_parse: expected [n_in,n_out,H,W], got " +
                     shape_to_string(coefficients.shape()));
  }
  ParseForest forest;
  forest.n_in = coefficients.dim(0);
  forest.n_out = coefficients.dim(1);
  forest.height = coefficients.dim(2);
  forest.width = coefficients.dim(3);
  const std::size_t plane = forest.height * forest.width;
  const auto c = coefficients.data();
  forest.edges.reserve(forest.n_in * plane);
  for (std::size_t i = 0; i < forest.n_in; ++i) {
    for (std::size_t y = 0; y < forest.height; ++y) {
      for (std::size_t x = 0; x < forest.width; ++x) {
        const std::size_t g = y * forest.width + x;
        ParseEdge e{i, y, x, 0, c[(i * forest.n_out) * plane + g]};
        for (std::size_t j = 1; j < forest.n_out; ++j) {
          const Real v = c[(i * forest.n_out + j) * plane + g];
          if (v > e.strength) {
            e.parent = j;
            e.strength = v;
          }
        }
        forest.edges.push_back(e);
      }
    }
  }
  return forest;
}

namespace {

std::string label_or(const std::vector<std::string>& labels, std::size_t i, const char* prefix) {
  if (i < labels.size()) return labels[i];
  return prefix + std::to_string(i);
}

void write_edges(std::ostream& os, const ParseForest& forest, const ParseLabels& labels) {
  char strength[32];
  for (const auto& e : forest.edges) {
    std::snprintf(strength, sizeof strength, "%.6f", e.strength);
    os << "  \"" << label_or(labels.in, e.in_type, "in") << '@' << e.y << ',' << e.x
       << "\" -> \"" << label_or(labels.out, e.parent, "out") << '@' << e.y << ',' << e.x
       << "\" [label=\"" << strength << "\"];\n";
  }
}

}  // namespace

std::string parse_to_dot(const ParseForest& forest, const ParseLabels& labels) {
  std::ostringstream os;
  os << "digraph parse {\n  rankdir=BT;\n";
  write_edges(os, forest, labels);
  os << "}\n";
  return os.str();
}

std::string parse_layers_to_dot(const std::vector<ParseForest>& layers) {
  std::ostringstream os;
  os << "digraph parse {\n  rankdir=BT;\n";
  for (std::size_t l = 0; l < layers.size(); ++l) {
    ParseLabels labels;
    for (std::size_t i = 0; i < layers[l].n_in; ++i) {
      labels.in.push_back("L" + std::to_string(l) + ".t" + std::to_string(i));
    }
    for (std::size_t j = 0; j < layers[l].n_out; ++j) {
      labels.out.push_back("L" + std::to_string(l + 1) + ".t" + std::to_string(j));
    }
    os << "  subgraph cluster_" << l << " {\n    label=\"routing " << l << "\";\n";
    std::ostringstream body;
    write_edges(body, layers[l], labels);
    std::istringstream lines(body.str());
    for (std::string line; std::getline(lines, line);) os << "  " << line << '\n';
    os << "  }\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace capsgram
