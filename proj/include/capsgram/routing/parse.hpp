#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "capsgram/routing/routing.hpp"

namespace capsgram {

/// Strongest parent of input capsule `in_type` at grid position (y, x).
struct ParseEdge {
  std::size_t in_type = 0;
  std::size_t y = 0;
  std::size_t x = 0;
  std::size_t parent = 0;
  Real strength = 0.0;
};

/// One parent per (input type, position), ordered by (in_type, y, x).
struct ParseForest {
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<ParseEdge> edges;

  const ParseEdge& at(std::size_t in_type, std::size_t y, std::size_t x) const;
};

/// argmax over output types of the final coefficients; ties go to the
/// lowest output index.
ParseForest extract_parse(const RoutingTrace& trace);
ParseForest extract_parse(const Tensor& coefficients);

struct ParseLabels {
  std::vector<std::string> in;   // defaults to in<i>
  std::vector<std::string> out;  // defaults to out<j>
};

/// DOT digraph with one child -> parent edge per (i, g), labelled with the
/// coefficient.
std::string parse_to_dot(const ParseForest& forest, const ParseLabels& labels = {});

/// Several routed layers in one digraph; layer l's outputs are named
/// L<l+1>.<type> so they join layer l+1's inputs at the same position only
/// when grids coincide.
std::string parse_layers_to_dot(const std::vector<ParseForest>& layers);

}  // namespace capsgram
