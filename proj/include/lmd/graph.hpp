#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace lmd {

/// Dense per-run identifiers. Ordering follows first interning.
enum class EntityId : std::uint32_t {};
enum class RelationId : std::uint32_t {};

using WindowIndex = std::uint32_t;

constexpr std::uint32_t raw(EntityId id) { return static_cast<std::uint32_t>(id); }
constexpr std::uint32_t raw(RelationId id) { return static_cast<std::uint32_t>(id); }

enum class EntityKind : std::uint8_t {
  kUserAccount,
  kComputerAccount,
  kBuiltinAccount,
  kComputer,
  kDomain,
  kTypeNode,
};

std::string_view to_string(EntityKind kind);

struct Entity {
  EntityId id;
  std::string label;
  EntityKind kind;
};

enum class RelationKind : std::uint8_t {
  kAuth,       // (authentication package, logon type)
  kFlow,       // (transport protocol, destination port)
  kFlowOther,  // every flow type outside the retained set
  kLogonFrom,
  kLogonTo,
  kHasType,
  kMemberOf,
};

/// Structured relation tag. `first`/`second` are only meaningful for kAuth
/// and kFlow; they are empty otherwise.
struct RelationDescriptor {
  RelationKind kind = RelationKind::kLogonFrom;
  std::string first;
  std::string second;
  bool inverse = false;

  static RelationDescriptor auth(std::string package, std::string logon_type);
  static RelationDescriptor flow(std::string protocol, std::string port);
  static RelationDescriptor simple(RelationKind kind);

  RelationDescriptor inverted() const;

  /// Human-readable form used in CSV output, e.g. "auth:NTLM:Network",
  /// "flow:6:445", "flow:other", "member-of", "logon-to~inv".
  std::string to_string() const;

  auto operator<=>(const RelationDescriptor&) const = default;
};

struct RelationDescriptorHash {
  std::size_t operator()(const RelationDescriptor& d) const noexcept;
};

struct Relation {
  RelationId id;
  RelationDescriptor descriptor;
  RelationId inverse;
};

/// Label <-> id interning for entities and relations. Reads may run
/// concurrently; interning takes an exclusive lock.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(const Vocabulary&) = delete;
  Vocabulary& operator=(const Vocabulary&) = delete;

  /// Returns the id for `label`, creating it with `kind` on first sight.
  /// Throws Error(kKindConflict) if the label was interned with another kind.
  EntityId intern_entity(std::string_view label, EntityKind kind);
  std::optional<EntityId> find_entity(std::string_view label) const;
  const Entity& entity(EntityId id) const;
  std::size_t entity_count() const;

  /// Interns a forward relation and its inverse. Passing an inverse
  /// descriptor returns the inverse id of the matching forward relation.
  RelationId intern_relation(const RelationDescriptor& descriptor);
  std::optional<RelationId> find_relation(const RelationDescriptor& descriptor) const;
  const Relation& relation(RelationId id) const;
  RelationId inverse_of(RelationId id) const;
  std::size_t relation_count() const;

  /// Node standing for an entity kind; linked to by HasType edges.
  EntityId type_node(EntityKind kind);

 private:
  mutable std::shared_mutex entity_mutex_;
  std::deque<Entity> entities_;
  std::unordered_map<std::string, EntityId> entity_index_;

  mutable std::shared_mutex relation_mutex_;
  std::deque<Relation> relations_;
  std::unordered_map<RelationDescriptor, RelationId, RelationDescriptorHash> relation_index_;
};

struct Edge {
  EntityId src;
  RelationId rel;
  EntityId dst;

  auto operator<=>(const Edge&) const = default;
};

struct EdgeHash {
  std::size_t operator()(const Edge& e) const noexcept {
    std::uint64_t h = (static_cast<std::uint64_t>(raw(e.src)) << 32) | raw(e.dst);
    h ^= static_cast<std::uint64_t>(raw(e.rel)) * 0x9E3779B97F4A7C15ULL;
    h ^= h >> 29;
    h *= 0xBF58476D1CE4E5B9ULL;
    h ^= h >> 32;
    return static_cast<std::size_t>(h);
  }
};

/// Knowledge graph of one time window. Edges are a set; nodes and relations
/// are derived from the edges, so every node is an edge endpoint.
class WindowGraph {
 public:
  WindowGraph() = default;
  WindowGraph(WindowIndex index, std::vector<Edge> edges);

  WindowIndex index() const { return index_; }
  std::span<const EntityId> nodes() const { return nodes_; }
  /// Sorted by (src, rel, dst), no duplicates.
  std::span<const Edge> edges() const { return edges_; }
  std::span<const RelationId> relations() const { return relations_; }
  /// (relation, count) pairs sorted by relation id.
  std::span<const std::pair<RelationId, std::uint32_t>> theta() const { return theta_; }
  std::uint32_t relation_count(RelationId rel) const;

  bool contains_node(EntityId id) const;
  bool empty() const { return edges_.empty(); }

 private:
  WindowIndex index_ = 0;
  std::vector<EntityId> nodes_;
  std::vector<Edge> edges_;
  std::vector<RelationId> relations_;
  std::vector<std::pair<RelationId, std::uint32_t>> theta_;
};

/// Union of window graphs that a scorer operates over. Immutable once built.
/// The ascending node order defines score-vector indexing.
class ContextGraph {
 public:
  ContextGraph() = default;

  /// Builds from arbitrary parts; sorts and deduplicates everything. Edge
  /// endpoints and relations are added to the node/relation sets.
  static ContextGraph from_parts(std::vector<EntityId> nodes, std::vector<Edge> edges,
                                 std::vector<RelationId> relations,
                                 std::vector<WindowIndex> source_windows);

  std::span<const EntityId> nodes() const { return nodes_; }
  std::span<const Edge> edges() const { return edges_; }
  std::span<const RelationId> relations() const { return relations_; }
  std::span<const WindowIndex> source_windows() const { return source_windows_; }

  bool contains_edge(const Edge& e) const { return edge_set_.contains(e); }
  bool contains_node(EntityId id) const;
  bool contains_relation(RelationId id) const;
  std::optional<std::size_t> node_position(EntityId id) const;

  bool empty() const { return edges_.empty(); }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  /// FNV-1a digest over nodes, edges and relations (not source windows).
  std::uint64_t content_hash() const { return hash_; }

 private:
  std::vector<EntityId> nodes_;
  std::vector<Edge> edges_;
  std::unordered_set<Edge, EdgeHash> edge_set_;
  std::vector<RelationId> relations_;
  std::vector<WindowIndex> source_windows_;
  std::uint64_t hash_ = 0;
};

/// Exact set union of window graphs. Throws Error(kEmptyUnion) on an empty list.
ContextGraph unite(std::span<const WindowGraph* const> graphs);
ContextGraph unite(std::span<const WindowGraph> graphs);

/// Incrementally maintained union; each merged graph is folded in once.
class UnionAccumulator {
 public:
  void merge(const WindowGraph& graph);
  /// Immutable snapshot of everything merged so far; cached until the next merge.
  std::shared_ptr<const ContextGraph> snapshot();
  bool empty() const { return edges_.empty(); }

 private:
  std::vector<EntityId> nodes_;
  std::vector<Edge> edges_;
  std::vector<RelationId> relations_;
  std::vector<WindowIndex> windows_;
  std::shared_ptr<const ContextGraph> cached_;
};

}  // namespace lmd
