#include "capsgram/grammar/grammar.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "capsgram/error.hpp"

namespace capsgram {

namespace {

enum class SymbolKind { kTerminal, kOr, kAnd, kUnknown };

SymbolKind kind_of(const SceneGrammar& g, const std::string& s) {
  if (g.terminals.count(s)) return SymbolKind::kTerminal;
  if (g.or_rules.count(s)) return SymbolKind::kOr;
  if (g.and_rules.count(s)) return SymbolKind::kAnd;
  return SymbolKind::kUnknown;
}

// The OR choices of a derivation resolved into a tree; placement is separate.
struct Node {
  std::string part;
  Offset offset;
  int jitter = 0;
  bool placed = false;  // root or AND child: gets a jitter draw
  int glyph = -1;
  std::vector<Node> children;
};

using OrChooser = std::function<std::size_t(const std::string&, const std::vector<OrAlternative>&)>;

Node resolve(const SceneGrammar& g, const std::string& symbol, const std::string& part, const OrChooser& choose) {
  Node node;
  node.part = part;
  switch (kind_of(g, symbol)) {
    case SymbolKind::kTerminal:
      node.glyph = g.terminals.at(symbol);
      break;
    case SymbolKind::kOr: {
      const auto& alts = g.or_rules.at(symbol);
      node.children.push_back(resolve(g, alts[choose(symbol, alts)].symbol, part, choose));
      break;
    }
    case SymbolKind::kAnd:
      for (const auto& child : g.and_rules.at(symbol)) {
        Node c = resolve(g, child.symbol, child.symbol, choose);
        c.offset = child.offset;
        c.jitter = child.jitter;
        c.placed = true;
        node.children.push_back(std::move(c));
      }
      break;
    case SymbolKind::kUnknown:
      throw DomainError("grammar '" + g.name + "': undefined symbol '" + symbol + "'");
  }
  return node;
}

void collect_placed(Node& node, std::vector<Node*>& out) {
  if (node.placed) out.push_back(&node);
  for (auto& c : node.children) collect_placed(c, out);
}

void layout(const SceneGrammar& g, const Node& node, int cy, int cx, const std::vector<Offset>& jitters,
            std::size_t& next,
            std::vector<ScenePart>& parts) {
  if (node.placed) {
    const Offset j = jitters[next++];
    cy += node.offset.dy + j.dy;
    cx += node.offset.dx + j.dx;
  }
  if (node.glyph >= 0) {
    const int half = static_cast<int>(kGlyphExtent) / 2;
    const Box b = glyph_bounds(g.glyphs.at(node.glyph));
    parts.push_back({node.part, node.glyph,
                     Box{cy - half + b.y0, cx - half + b.x0, cy - half + b.y1, cx - half + b.x1}});
  }
  for (const auto& c : node.children) layout(g, c, cy, cx, jitters, next, parts);
}

// Empty string when the placement is acceptable, else the reason.
std::string placement_problem(const std::vector<ScenePart>& parts, std::size_t canvas) {
  const int n = static_cast<int>(canvas);
  for (const auto& p : parts) {
    if (p.box.y0 < 0 || p.box.x0 < 0 || p.box.y1 > n || p.box.x1 > n) {
      return "part '" + p.name + "' leaves the canvas";
    }
  }
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (std::size_t j = i + 1; j < parts.size(); ++j) {
      const Real smaller = std::min(parts[i].box.area(), parts[j].box.area());
      if (intersection_area(parts[i].box, parts[j].box) > kMaxPartOverlap * smaller) {
        return "parts '" + parts[i].name + "' and '" + parts[j].name + "' overlap";
      }
    }
  }
  return {};
}

Scene render(const SceneGrammar& g, const Node& root, const Derivation& d, std::size_t canvas, int label) {
  Scene scene;
  scene.manifest.label = label;
  scene.manifest.derivation = d;
  std::size_t next = 0;
  const int centre = static_cast<int>(canvas) / 2;
  layout(g, root, centre, centre, d.jitters, next, scene.manifest.parts);
  scene.image = Tensor::zeros({1, canvas, canvas});
  for (const auto& p : scene.manifest.parts) {
    const auto& glyph = g.glyphs.at(p.glyph);
    const Box b = glyph_bounds(glyph);
    stamp(scene.image, glyph, p.box.y0 - b.y0, p.box.x0 - b.x0);
  }
  return scene;
}

}  // namespace

int intersection_area(const Box& a, const Box& b) {
  const int h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  const int w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  return h > 0 && w > 0 ? h * w : 0;
}

Box glyph_bounds(const Bitmap& glyph) {
  const int e = static_cast<int>(kGlyphExtent);
  Box b{e, e, 0, 0};
  for (int y = 0; y < e; ++y) {
    for (int x = 0; x < e; ++x) {
      if (glyph[static_cast<std::size_t>(y * e + x)] != 0.0) {
        b.y0 = std::min(b.y0, y);
        b.x0 = std::min(b.x0, x);
        b.y1 = std::max(b.y1, y + 1);
        b.x1 = std::max(b.x1, x + 1);
      }
    }
  }
  if (b.y1 == 0) return Box{};
  return b;
}

void SceneGrammar::validate() const {
  auto fail = [&](const std::string& why) { throw DomainError("grammar '" + name + "': " + why); };
  std::set<std::string> defined;
  auto define = [&](const std::string& s) {
    if (!defined.insert(s).second) fail("symbol '" + s + "' has more than one definition");
  };
  for (const auto& [s, glyph] : terminals) {
    define(s);
    if (!glyphs.count(glyph)) fail("terminal '" + s + "' uses unknown glyph " + std::to_string(glyph));
  }
  for (const auto& [s, alts] : or_rules) {
    define(s);
    if (alts.empty()) fail("OR rule '" + s + "' has no alternatives");
    Real total = 0.0;
    for (const auto& a : alts) {
      if (!(a.likelihood >= 0.0)) fail("OR rule '" + s + "' has a negative likelihood");
      total += a.likelihood;
    }
    if (std::abs(total - 1.0) > 1e-9) fail("likelihoods of OR rule '" + s + "' sum to " + std::to_string(total));
  }
  for (const auto& [s, children] : and_rules) {
    define(s);
    if (children.empty()) fail("AND rule '" + s + "' has no children");
    for (const auto& c : children) {
      if (c.jitter < 0) fail("AND rule '" + s + "' has a negative jitter");
    }
  }
  if (!defined.count(start)) fail("start symbol '" + start + "' is undefined");
  if (root_jitter < 0) fail("negative root jitter");
  for (const auto& [id, bitmap] : glyphs) {
    for (Real v : bitmap) {
      if (!(v >= 0.0 && v <= 1.0)) fail("glyph " + std::to_string(id) + " has a value outside [0,1]");
    }
    if (glyph_bounds(bitmap).area() == 0) fail("glyph " + std::to_string(id) + " is blank");
  }

  // depth-first search for undefined symbols and cycles
  std::map<std::string, int> state;  // 1 on stack, 2 finished
  std::function<void(const std::string&)> visit = [&](const std::string& s) {
    if (!defined.count(s)) fail("undefined symbol '" + s + "'");
    if (state[s] == 2) return;
    if (state[s] == 1) fail("rule graph has a cycle through '" + s + "'");
    state[s] = 1;
    if (auto it = or_rules.find(s); it != or_rules.end()) {
      for (const auto& a : it->second) visit(a.symbol);
    }
    if (auto it = and_rules.find(s); it != and_rules.end()) {
      for (const auto& c : it->second) visit(c.symbol);
    }
    state[s] = 2;
  };
  visit(start);
}

std::vector<int> SceneGrammar::glyph_ids() const {
  std::set<int> ids;
  std::set<std::string> seen;
  std::function<void(const std::string&)> visit = [&](const std::string& s) {
    if (!seen.insert(s).second) return;
    if (auto t = terminals.find(s); t != terminals.end()) ids.insert(t->second);
    if (auto it = or_rules.find(s); it != or_rules.end()) {
      for (const auto& a : it->second) visit(a.symbol);
    }
    if (auto it = and_rules.find(s); it != and_rules.end()) {
      for (const auto& c : it->second) visit(c.symbol);
    }
  };
  visit(start);
  return {ids.begin(), ids.end()};
}

Scene sample_scene(const SceneGrammar& grammar, Rng& rng, std::size_t canvas, int label) {
  Derivation d;
  OrChooser draw = [&](const std::string&, const std::vector<OrAlternative>& alts) {
    const Real u = rng.uniform();
    Real cumulative = 0.0;
    std::size_t pick = alts.size() - 1;
    for (std::size_t i = 0; i < alts.size(); ++i) {
      cumulative += alts[i].likelihood;
      if (u < cumulative) {
        pick = i;
        break;
      }
    }
    d.or_choices.push_back(pick);
    return pick;
  };
  Node root = resolve(grammar, grammar.start, grammar.start, draw);
  root.placed = true;
  root.jitter = grammar.root_jitter;
  std::vector<Node*> placed;
  collect_placed(root, placed);

  std::string problem;
  for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
    d.jitters.clear();
    for (const Node* n : placed) {
      Offset j;
      if (n->jitter > 0) {
        j.dy = static_cast<int>(rng.between(-n->jitter, n->jitter));
        j.dx = static_cast<int>(rng.between(-n->jitter, n->jitter));
      }
      d.jitters.push_back(j);
    }
    std::vector<ScenePart> parts;
    std::size_t next = 0;
    const int centre = static_cast<int>(canvas) / 2;
    layout(grammar, root, centre, centre, d.jitters, next, parts);
    problem = placement_problem(parts, canvas);
    if (problem.empty()) return render(grammar, root, d, canvas, label);
  }
  throw DomainError("sample_scene: no valid placement after " + std::to_string(kPlacementAttempts) +
                    " jitter draws on a " + std::to_string(canvas) + "x" + std::to_string(canvas) +
                    " canvas (" + problem + ")");
}

Scene replay(const SceneGrammar& grammar, const Derivation& derivation, std::size_t canvas, int label) {
  std::size_t next_choice = 0;
  OrChooser recorded = [&](const std::string& symbol, const std::vector<OrAlternative>& alts) {
    if (next_choice >= derivation.or_choices.size()) {
      throw DomainError("replay: derivation has too few OR choices");
    }
    const std::size_t pick = derivation.or_choices[next_choice++];
    if (pick >= alts.size()) {
      throw DomainError("replay: choice " + std::to_string(pick) + " out of range for '" + symbol + "'");
    }
    return pick;
  };
  Node root = resolve(grammar, grammar.start, grammar.start, recorded);
  root.placed = true;
  std::vector<Node*> placed;
  collect_placed(root, placed);
  if (next_choice != derivation.or_choices.size() || placed.size() != derivation.jitters.size()) {
    throw DomainError("replay: derivation does not match grammar '" + grammar.name + "'");
  }
  std::vector<ScenePart> parts;
  std::size_t next = 0;
  const int centre = static_cast<int>(canvas) / 2;
  layout(grammar, root, centre, centre, derivation.jitters, next, parts);
  for (const auto& p : parts) {
    if (p.box.y0 < 0 || p.box.x0 < 0 || p.box.y1 > static_cast<int>(canvas) ||
        p.box.x1 > static_cast<int>(canvas)) {
      throw DomainError("replay: part '" + p.name + "' leaves the canvas");
    }
  }
  return render(grammar, root, derivation, canvas, label);
}

}  // namespace capsgram
