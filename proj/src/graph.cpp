#include "lmd/graph.hpp"

#include <algorithm>
#include <iterator>
#include <mutex>

#include "lmd/error.hpp"

namespace lmd {

namespace {

template <typename T>
void sort_unique(std::vector<T>& values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
}

template <typename T>
std::vector<T> sorted_union(const std::vector<T>& a, std::span<const T> b) {
  std::vector<T> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_mix(std::uint64_t& h, std::uint32_t value) {
  for (int i = 0; i < 4; ++i) {
    h ^= (value >> (8 * i)) & 0xFFu;
    h *= kFnvPrime;
  }
}

}  // namespace

std::string_view to_string(EntityKind kind) {
  switch (kind) {
    case EntityKind::kUserAccount: return "user-account";
    case EntityKind::kComputerAccount: return "computer-account";
    case EntityKind::kBuiltinAccount: return "built-in-account";
    case EntityKind::kComputer: return "computer";
    case EntityKind::kDomain: return "domain";
    case EntityKind::kTypeNode: return "type-node";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// RelationDescriptor

RelationDescriptor RelationDescriptor::auth(std::string package, std::string logon_type) {
  return {RelationKind::kAuth, std::move(package), std::move(logon_type), false};
}

RelationDescriptor RelationDescriptor::flow(std::string protocol, std::string port) {
  return {RelationKind::kFlow, std::move(protocol), std::move(port), false};
}

RelationDescriptor RelationDescriptor::simple(RelationKind kind) {
  return {kind, {}, {}, false};
}

RelationDescriptor RelationDescriptor::inverted() const {
  RelationDescriptor copy = *this;
  copy.inverse = !inverse;
  return copy;
}

std::string RelationDescriptor::to_string() const {
  std::string out;
  switch (kind) {
    case RelationKind::kAuth: out = "auth:" + first + ":" + second; break;
    case RelationKind::kFlow: out = "flow:" + first + ":" + second; break;
    case RelationKind::kFlowOther: out = "flow:other"; break;
    case RelationKind::kLogonFrom: out = "logon-from"; break;
    case RelationKind::kLogonTo: out = "logon-to"; break;
    case RelationKind::kHasType: out = "has-type"; break;
    case RelationKind::kMemberOf: out = "member-of"; break;
  }
  if (inverse) out += "~inv";
  return out;
}

std::size_t RelationDescriptorHash::operator()(const RelationDescriptor& d) const noexcept {
  std::size_t h = std::hash<std::string>{}(d.first);
  h = h * 31 + std::hash<std::string>{}(d.second);
  h = h * 31 + static_cast<std::size_t>(d.kind);
  return h * 2 + (d.inverse ? 1 : 0);
}

// ---------------------------------------------------------------------------
// Vocabulary

EntityId Vocabulary::intern_entity(std::string_view label, EntityKind kind) {
  {
    std::shared_lock lock(entity_mutex_);
    if (auto it = entity_index_.find(std::string(label)); it != entity_index_.end()) {
      const Entity& existing = entities_[raw(it->second)];
      if (existing.kind != kind) {
        throw Error(ErrorCode::kKindConflict,
                    "entity '" + existing.label + "' is a " +
                        std::string(to_string(existing.kind)) + ", not a " +
                        std::string(to_string(kind)));
      }
      return it->second;
    }
  }
  std::unique_lock lock(entity_mutex_);
  auto [it, inserted] =
      entity_index_.try_emplace(std::string(label), static_cast<EntityId>(entities_.size()));
  if (inserted) {
    entities_.push_back(Entity{it->second, std::string(label), kind});
  } else if (entities_[raw(it->second)].kind != kind) {
    throw Error(ErrorCode::kKindConflict, "entity '" + std::string(label) + "' kind mismatch");
  }
  return it->second;
}

std::optional<EntityId> Vocabulary::find_entity(std::string_view label) const {
  std::shared_lock lock(entity_mutex_);
  if (auto it = entity_index_.find(std::string(label)); it != entity_index_.end()) {
    return it->second;
  }
  return std::nullopt;
}

const Entity& Vocabulary::entity(EntityId id) const {
  std::shared_lock lock(entity_mutex_);
  if (raw(id) >= entities_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown entity id " + std::to_string(raw(id)));
  }
  return entities_[raw(id)];
}

std::size_t Vocabulary::entity_count() const {
  std::shared_lock lock(entity_mutex_);
  return entities_.size();
}

RelationId Vocabulary::intern_relation(const RelationDescriptor& descriptor) {
  {
    std::shared_lock lock(relation_mutex_);
    if (auto it = relation_index_.find(descriptor); it != relation_index_.end()) {
      return it->second;
    }
  }
  std::unique_lock lock(relation_mutex_);
  if (auto it = relation_index_.find(descriptor); it != relation_index_.end()) {
    return it->second;
  }
  const RelationDescriptor forward = descriptor.inverse ? descriptor.inverted() : descriptor;
  const auto forward_id = static_cast<RelationId>(relations_.size());
  const auto inverse_id = static_cast<RelationId>(relations_.size() + 1);
  relations_.push_back(Relation{forward_id, forward, inverse_id});
  relations_.push_back(Relation{inverse_id, forward.inverted(), forward_id});
  relation_index_.emplace(forward, forward_id);
  relation_index_.emplace(forward.inverted(), inverse_id);
  return descriptor.inverse ? inverse_id : forward_id;
}

std::optional<RelationId> Vocabulary::find_relation(const RelationDescriptor& descriptor) const {
  std::shared_lock lock(relation_mutex_);
  if (auto it = relation_index_.find(descriptor); it != relation_index_.end()) {
    return it->second;
  }
  return std::nullopt;
}

const Relation& Vocabulary::relation(RelationId id) const {
  std::shared_lock lock(relation_mutex_);
  if (raw(id) >= relations_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown relation id " + std::to_string(raw(id)));
  }
  return relations_[raw(id)];
}

RelationId Vocabulary::inverse_of(RelationId id) const { return relation(id).inverse; }

std::size_t Vocabulary::relation_count() const {
  std::shared_lock lock(relation_mutex_);
  return relations_.size();
}

EntityId Vocabulary::type_node(EntityKind kind) {
  return intern_entity("type:" + std::string(to_string(kind)), EntityKind::kTypeNode);
}

// ---------------------------------------------------------------------------
// WindowGraph

WindowGraph::WindowGraph(WindowIndex index, std::vector<Edge> edges)
    : index_(index), edges_(std::move(edges)) {
  sort_unique(edges_);
  nodes_.reserve(edges_.size() * 2);
  for (const Edge& e : edges_) {
    nodes_.push_back(e.src);
    nodes_.push_back(e.dst);
  }
  sort_unique(nodes_);

  std::vector<RelationId> rels;
  rels.reserve(edges_.size());
  for (const Edge& e : edges_) rels.push_back(e.rel);
  std::sort(rels.begin(), rels.end());
  for (std::size_t i = 0; i < rels.size();) {
    std::size_t j = i;
    while (j < rels.size() && rels[j] == rels[i]) ++j;
    relations_.push_back(rels[i]);
    theta_.emplace_back(rels[i], static_cast<std::uint32_t>(j - i));
    i = j;
  }
}

std::uint32_t WindowGraph::relation_count(RelationId rel) const {
  auto it = std::lower_bound(theta_.begin(), theta_.end(), rel,
                             [](const auto& entry, RelationId r) { return entry.first < r; });
  return (it != theta_.end() && it->first == rel) ? it->second : 0;
}

bool WindowGraph::contains_node(EntityId id) const {
  return std::binary_search(nodes_.begin(), nodes_.end(), id);
}

// ---------------------------------------------------------------------------
// ContextGraph

ContextGraph ContextGraph::from_parts(std::vector<EntityId> nodes, std::vector<Edge> edges,
                                      std::vector<RelationId> relations,
                                      std::vector<WindowIndex> source_windows) {
  ContextGraph g;
  sort_unique(edges);
  for (const Edge& e : edges) {
    nodes.push_back(e.src);
    nodes.push_back(e.dst);
    relations.push_back(e.rel);
  }
  sort_unique(nodes);
  sort_unique(relations);
  sort_unique(source_windows);

  g.nodes_ = std::move(nodes);
  g.edges_ = std::move(edges);
  g.relations_ = std::move(relations);
  g.source_windows_ = std::move(source_windows);
  g.edge_set_.reserve(g.edges_.size());
  g.edge_set_.insert(g.edges_.begin(), g.edges_.end());

  std::uint64_t h = kFnvOffset;
  fnv_mix(h, static_cast<std::uint32_t>(g.nodes_.size()));
  for (EntityId n : g.nodes_) fnv_mix(h, raw(n));
  fnv_mix(h, static_cast<std::uint32_t>(g.edges_.size()));
  for (const Edge& e : g.edges_) {
    fnv_mix(h, raw(e.src));
    fnv_mix(h, raw(e.rel));
    fnv_mix(h, raw(e.dst));
  }
  fnv_mix(h, static_cast<std::uint32_t>(g.relations_.size()));
  for (RelationId r : g.relations_) fnv_mix(h, raw(r));
  g.hash_ = h;
  return g;
}

bool ContextGraph::contains_node(EntityId id) const {
  return std::binary_search(nodes_.begin(), nodes_.end(), id);
}

bool ContextGraph::contains_relation(RelationId id) const {
  return std::binary_search(relations_.begin(), relations_.end(), id);
}

std::optional<std::size_t> ContextGraph::node_position(EntityId id) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id);
  if (it == nodes_.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - nodes_.begin());
}

ContextGraph unite(std::span<const WindowGraph* const> graphs) {
  if (graphs.empty()) {
    throw Error(ErrorCode::kEmptyUnion, "cannot unite an empty list of graphs");
  }
  std::vector<EntityId> nodes;
  std::vector<Edge> edges;
  std::vector<RelationId> relations;
  std::vector<WindowIndex> windows;
  for (const WindowGraph* g : graphs) {
    nodes.insert(nodes.end(), g->nodes().begin(), g->nodes().end());
    edges.insert(edges.end(), g->edges().begin(), g->edges().end());
    relations.insert(relations.end(), g->relations().begin(), g->relations().end());
    windows.push_back(g->index());
  }
  return ContextGraph::from_parts(std::move(nodes), std::move(edges), std::move(relations),
                                  std::move(windows));
}

ContextGraph unite(std::span<const WindowGraph> graphs) {
  std::vector<const WindowGraph*> pointers;
  pointers.reserve(graphs.size());
  for (const WindowGraph& g : graphs) pointers.push_back(&g);
  return unite(std::span<const WindowGraph* const>(pointers));
}

// ---------------------------------------------------------------------------
// UnionAccumulator

void UnionAccumulator::merge(const WindowGraph& graph) {
  nodes_ = sorted_union(nodes_, graph.nodes());
  edges_ = sorted_union(edges_, graph.edges());
  relations_ = sorted_union(relations_, graph.relations());
  windows_.push_back(graph.index());
  cached_.reset();
}

std::shared_ptr<const ContextGraph> UnionAccumulator::snapshot() {
  if (!cached_) {
    cached_ = std::make_shared<const ContextGraph>(
        ContextGraph::from_parts(nodes_, edges_, relations_, windows_));
  }
  return cached_;
}

}  // namespace lmd
