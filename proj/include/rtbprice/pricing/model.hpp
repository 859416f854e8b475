#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "rtbprice/decimal.hpp"
#include "rtbprice/error.hpp"

namespace rtbprice::pricing {

enum class SplitKind { categorical, numeric };

inline std::string_view to_string(SplitKind k) {
  return k == SplitKind::categorical ? "categorical" : "numeric";
}

struct FeatureDecl {
  std::string name;
  SplitKind kind = SplitKind::categorical;
  int cardinality = 0;  // number of valid class indices; 0 = unbounded numeric

  friend bool operator==(const FeatureDecl&, const FeatureDecl&) = default;
};

struct FeatureSchema {
  std::vector<FeatureDecl> features;

  std::string canonical_text() const {
    std::string out;
    for (const auto& f : features) {
      out += f.name;
      out += '|';
      out += to_string(f.kind);
      out += '|';
      out += std::to_string(f.cardinality);
      out += '\n';
    }
    return out;
  }

  // FNV-1a 64 of the canonical text, as 16 hex digits.
  std::string hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : canonical_text()) {
      h ^= c;
      h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (features[i].name == name) return i;
    }
    return std::nullopt;
  }

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

struct TreeNode {
  bool leaf = true;
  // Internal nodes.
  int feature = 0;
  SplitKind kind = SplitKind::categorical;
  std::vector<int> values;  // categorical: members go left (sorted, unique)
  double threshold = 0;     // numeric: value <= threshold goes left
  int left = -1;
  int right = -1;
  // Leaves.
  int price_class = 0;
  Decimal value_usd;

  static TreeNode make_leaf(int cls, Decimal value) {
    TreeNode n;
    n.leaf = true;
    n.price_class = cls;
    n.value_usd = value;
    return n;
  }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

// Node 0 is the root.
struct DecisionTreeModel {
  std::vector<TreeNode> nodes;

  friend bool operator==(const DecisionTreeModel&, const DecisionTreeModel&) = default;
};

struct ModelMetadata {
  std::int64_t version = 1;
  std::int64_t trained_at = 0;  // UTC seconds
  Decimal mean_usd;             // seeds the client's rolling average

  friend bool operator==(const ModelMetadata&, const ModelMetadata&) = default;
};

// Majority vote over trees; ties go to the lower class index. A forest of
// one tree is a plain decision tree.
struct ForestModel {
  FeatureSchema schema;
  ModelMetadata meta;
  std::vector<DecisionTreeModel> trees;

  std::string schema_hash() const { return schema.hash(); }

  friend bool operator==(const ForestModel&, const ForestModel&) = default;
};

inline void validate_tree(const DecisionTreeModel& tree, const FeatureSchema& schema) {
  const auto& nodes = tree.nodes;
  if (nodes.empty()) throw InvariantError("tree has no nodes");
  std::vector<int> refs(nodes.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& n = nodes[i];
    if (n.leaf) {
      if (n.price_class < 0) throw InvariantError("leaf with negative class");
      if (n.value_usd.is_negative()) throw InvariantError("leaf with negative value");
      continue;
    }
    if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= schema.features.size()) {
      throw InvariantError("node references unknown feature id " + std::to_string(n.feature));
    }
    const FeatureDecl& decl = schema.features[static_cast<std::size_t>(n.feature)];
    if (decl.kind != n.kind) throw InvariantError("split kind differs from schema for " + decl.name);
    if (n.kind == SplitKind::categorical) {
      if (n.values.empty()) throw InvariantError("categorical split with empty value set");
      if (!std::is_sorted(n.values.begin(), n.values.end()) ||
          std::adjacent_find(n.values.begin(), n.values.end()) != n.values.end()) {
        throw InvariantError("categorical split values not sorted/unique");
      }
      for (int v : n.values) {
        if (v < 0 || (decl.cardinality > 0 && v >= decl.cardinality)) {
          throw InvariantError("categorical split value out of range for " + decl.name);
        }
      }
    }
    for (int child : {n.left, n.right}) {
      if (child <= 0 || static_cast<std::size_t>(child) >= nodes.size()) {
        throw InvariantError("dangling child reference " + std::to_string(child));
      }
      ++refs[static_cast<std::size_t>(child)];
    }
  }
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (refs[i] != 1) throw InvariantError("node " + std::to_string(i) + " is not referenced exactly once");
  }
  // Exactly-once references plus reachability from the root rule out cycles.
  std::vector<bool> seen(nodes.size(), false);
  std::vector<int> stack{0};
  std::size_t reached = 0;
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    if (seen[static_cast<std::size_t>(i)]) throw InvariantError("cycle in tree");
    seen[static_cast<std::size_t>(i)] = true;
    ++reached;
    const TreeNode& n = nodes[static_cast<std::size_t>(i)];
    if (!n.leaf) {
      stack.push_back(n.left);
      stack.push_back(n.right);
    }
  }
  if (reached != nodes.size()) throw InvariantError("tree has unreachable nodes");
}

inline void validate_forest(const ForestModel& model) {
  if (model.trees.empty()) throw InvariantError("forest has no trees");
  if (model.meta.mean_usd.is_negative()) throw InvariantError("negative mean price");
  std::set<std::string> names;
  for (const auto& f : model.schema.features) {
    if (f.name.empty() || !names.insert(f.name).second) {
      throw InvariantError("schema feature names must be unique and non-empty");
    }
    if (f.cardinality < 0) throw InvariantError("negative cardinality");
  }
  for (const auto& t : model.trees) validate_tree(t, model.schema);
}

// Renumbers nodes in pre-order (root, left subtree, right subtree).
inline DecisionTreeModel canonical_tree(const DecisionTreeModel& tree) {
  DecisionTreeModel out;
  out.nodes.reserve(tree.nodes.size());
  auto visit = [&](auto&& self, int old) -> int {
    const int id = static_cast<int>(out.nodes.size());
    out.nodes.push_back(tree.nodes[static_cast<std::size_t>(old)]);
    if (!out.nodes[static_cast<std::size_t>(id)].leaf) {
      const TreeNode src = tree.nodes[static_cast<std::size_t>(old)];
      const int l = self(self, src.left);
      const int r = self(self, src.right);
      out.nodes[static_cast<std::size_t>(id)].left = l;
      out.nodes[static_cast<std::size_t>(id)].right = r;
    }
    return id;
  };
  visit(visit, 0);
  return out;
}

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace detail

inline constexpr std::string_view kXmlDeclaration = R"(<?xml version="1.0" encoding="UTF-8"?>)";

// Canonical XML: fixed attribute order, nodes in pre-order, no whitespace
// between elements.
inline std::string serialize_model(const ForestModel& model) {
  validate_forest(model);
  std::string out(kXmlDeclaration);
  out += "<forest version=\"" + std::to_string(model.meta.version) + "\" schema-hash=\"" +
         model.schema_hash() + "\" trained-at=\"" + std::to_string(model.meta.trained_at) + "\" mean-usd=\"" +
         model.meta.mean_usd.to_string() + "\">";
  for (std::size_t i = 0; i < model.schema.features.size(); ++i) {
    const auto& f = model.schema.features[i];
    out += "<feature id=\"" + std::to_string(i) + "\" name=\"" + detail::xml_escape(f.name) +
           "\" kind=\"" + std::string(to_string(f.kind)) + "\" cardinality=\"" +
           std::to_string(f.cardinality) + "\"/>";
  }
  for (const auto& raw_tree : model.trees) {
    const DecisionTreeModel tree = canonical_tree(raw_tree);
    out += "<tree>";
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      const TreeNode& n = tree.nodes[i];
      const std::string id = std::to_string(i);
      if (n.leaf) {
        out += "<leaf id=\"" + id + "\" class=\"" + std::to_string(n.price_class) + "\" value-usd=\"" +
               n.value_usd.to_string() + "\"/>";
        continue;
      }
      out += "<node id=\"" + id + "\" feature=\"" + std::to_string(n.feature) + "\" kind=\"" +
             std::string(to_string(n.kind)) + "\" ";
      if (n.kind == SplitKind::categorical) {
        out += "values=\"";
        for (std::size_t v = 0; v < n.values.size(); ++v) {
          if (v) out += ' ';
          out += std::to_string(n.values[v]);
        }
        out += "\"";
      } else {
        out += "threshold=\"" + detail::shortest(n.threshold) + "\"";
      }
      out += " left=\"" + std::to_string(n.left) + "\" right=\"" + std::to_string(n.right) + "\"/>";
    }
    out += "</tree>";
  }
  out += "</forest>";
  return out;
}

namespace detail {

using boost::property_tree::ptree;

inline const std::string& attr(const ptree& el, const char* name, const char* element) {
  const auto attrs = el.get_child_optional("<xmlattr>");
  if (attrs) {
    if (const auto v = attrs->get_child_optional(name)) return v->data();
  }
  throw ParseError(std::string("<") + element + "> lacks attribute '" + name + "'");
}

inline std::int64_t to_int64(const std::string& s, const char* what) {
  std::int64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw ParseError(std::string("bad integer in ") + what + ": '" + s + "'");
  }
  return v;
}

inline int to_int(const std::string& s, const char* what) {
  const auto v = to_int64(s, what);
  if (v < INT32_MIN || v > INT32_MAX) throw ParseError(std::string("integer out of range in ") + what);
  return static_cast<int>(v);
}

inline SplitKind to_kind(const std::string& s) {
  if (s == "categorical") return SplitKind::categorical;
  if (s == "numeric") return SplitKind::numeric;
  throw ParseError("unknown split kind '" + s + "'");
}

}  // namespace detail

// Parses a model document. When `expected_schema_hash` is given and differs,
// throws VersionError so the caller keeps its fallback estimator.
inline ForestModel deserialize_model(std::string_view doc,
                                     std::optional<std::string> expected_schema_hash = std::nullopt) {
  using detail::ptree;
  ptree pt;
  try {
    std::istringstream in{std::string(doc)};
    boost::property_tree::read_xml(in, pt, boost::property_tree::xml_parser::no_comments);
  } catch (const boost::property_tree::xml_parser_error& e) {
    throw ParseError(std::string("malformed model XML: ") + e.what());
  }
  const auto root = pt.get_child_optional("forest");
  if (!root || pt.size() != 1) throw ParseError("model document root must be <forest>");

  ForestModel model;
  model.meta.version = detail::to_int64(detail::attr(*root, "version", "forest"), "forest version");
  model.meta.trained_at = detail::to_int64(detail::attr(*root, "trained-at", "forest"), "trained-at");
  const std::string declared_hash = detail::attr(*root, "schema-hash", "forest");
  if (const auto mean = root->get_optional<std::string>("<xmlattr>.mean-usd")) {
    const auto v = Decimal::parse(*mean);
    if (!v || v->is_negative()) throw ParseError("bad mean-usd attribute");
    model.meta.mean_usd = *v;
  }

  bool trees_started = false;
  for (const auto& [tag, el] : *root) {
    if (tag == "<xmlattr>" || tag == "<xmlcomment>") continue;
    if (tag == "feature") {
      if (trees_started) throw ParseError("<feature> after <tree>");
      const int id = detail::to_int(detail::attr(el, "id", "feature"), "feature id");
      if (id != static_cast<int>(model.schema.features.size())) {
        throw ParseError("feature ids must be dense and in order");
      }
      FeatureDecl f;
      f.name = detail::attr(el, "name", "feature");
      f.kind = detail::to_kind(detail::attr(el, "kind", "feature"));
      f.cardinality = detail::to_int(detail::attr(el, "cardinality", "feature"), "cardinality");
      model.schema.features.push_back(std::move(f));
    } else if (tag == "tree") {
      trees_started = true;
      DecisionTreeModel tree;
      std::map<int, int> index_of_id;
      std::vector<std::pair<int, int>> child_ids;  // per node, as written
      for (const auto& [ntag, nel] : el) {
        if (ntag == "<xmlattr>" || ntag == "<xmlcomment>") continue;
        const int id = detail::to_int(detail::attr(nel, "id", ntag.c_str()), "node id");
        if (!index_of_id.emplace(id, static_cast<int>(tree.nodes.size())).second) {
          throw ParseError("duplicate node id " + std::to_string(id));
        }
        TreeNode n;
        if (ntag == "leaf") {
          n.leaf = true;
          n.price_class = detail::to_int(detail::attr(nel, "class", "leaf"), "leaf class");
          const auto v = Decimal::parse(detail::attr(nel, "value-usd", "leaf"));
          if (!v) throw ParseError("bad leaf value-usd");
          n.value_usd = *v;
          child_ids.emplace_back(-1, -1);
        } else if (ntag == "node") {
          n.leaf = false;
          n.feature = detail::to_int(detail::attr(nel, "feature", "node"), "node feature");
          n.kind = detail::to_kind(detail::attr(nel, "kind", "node"));
          if (n.kind == SplitKind::categorical) {
            std::istringstream vs(detail::attr(nel, "values", "node"));
            for (std::string tok; vs >> tok;) n.values.push_back(detail::to_int(tok, "values"));
          } else {
            const std::string& t = detail::attr(nel, "threshold", "node");
            const auto r = std::from_chars(t.data(), t.data() + t.size(), n.threshold);
            if (t.empty() || r.ec != std::errc{} || r.ptr != t.data() + t.size()) {
              throw ParseError("bad threshold '" + t + "'");
            }
          }
          child_ids.emplace_back(detail::to_int(detail::attr(nel, "left", "node"), "left"),
                                 detail::to_int(detail::attr(nel, "right", "node"), "right"));
        } else {
          throw ParseError("unexpected element <" + ntag + "> in <tree>");
        }
        tree.nodes.push_back(std::move(n));
      }
      if (tree.nodes.empty()) throw ParseError("empty <tree>");
      for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        if (tree.nodes[i].leaf) continue;
        for (auto [id, slot] : {std::pair{child_ids[i].first, &tree.nodes[i].left},
                                std::pair{child_ids[i].second, &tree.nodes[i].right}}) {
          const auto it = index_of_id.find(id);
          if (it == index_of_id.end()) throw ParseError("dangling child reference " + std::to_string(id));
          *slot = it->second;
        }
      }
      // Node id 0 is the root wherever it appears in the document.
      const auto root = index_of_id.find(0);
      if (root == index_of_id.end()) throw ParseError("tree lacks node id 0");
      if (const int r = root->second; r != 0) {
        std::swap(tree.nodes[0], tree.nodes[static_cast<std::size_t>(r)]);
        for (auto& n : tree.nodes) {
          if (n.leaf) continue;
          for (int* c : {&n.left, &n.right}) {
            if (*c == 0) {
              *c = r;
            } else if (*c == r) {
              *c = 0;
            }
          }
        }
      }
      model.trees.push_back(std::move(tree));
    } else {
      throw ParseError("unexpected element <" + tag + "> in <forest>");
    }
  }

  if (declared_hash != model.schema_hash()) {
    throw ParseError("schema-hash attribute does not match the declared features");
  }
  try {
    validate_forest(model);
  } catch (const InvariantError& e) {
    throw ParseError(std::string("invalid model: ") + e.what());
  }
  for (auto& t : model.trees) t = canonical_tree(t);
  if (expected_schema_hash && *expected_schema_hash != declared_hash) {
    throw VersionError("model schema " + declared_hash + " does not match client schema " +
                       *expected_schema_hash);
  }
  return model;
}

}  // namespace rtbprice::pricing
