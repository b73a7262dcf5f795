#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "derisk/knowledge/pipeline.hpp"

namespace derisk::knowledge {

inline constexpr std::size_t kEmbeddingDim = 128;
inline constexpr double kRrfK = 60.0;

using Embedding = std::array<double, kEmbeddingDim>;

std::uint64_t fnv1a64(std::string_view s) noexcept;

/// Hashed bag of words: lowercase alphanumeric tokens, dim = fnv1a64(token) mod 128,
/// weight += term frequency, then L2-normalized (all zeros when there are no tokens).
Embedding embed(std::string_view text);

struct Freshness {
    Timestamp ingested_at = 0;
    std::int64_t ttl_seconds = 0;
    bool operator==(const Freshness&) const = default;
};

struct KgEdge {
    std::string subject;
    std::string predicate;
    std::string object;
    auto operator<=>(const KgEdge&) const = default;
};

struct HybridIndex {
    std::map<std::string, EnrichedChunk> chunks;
    std::map<std::string, std::set<std::string>> doc_chunks;
    std::map<std::string, std::set<std::string>> kv;
    std::map<std::string, Embedding> vector;
    std::map<std::string, std::map<std::string, std::size_t>> fulltext;  ///< term -> chunk_id -> tf
    std::map<KgEdge, std::set<std::string>> kg;                           ///< edge -> provenance chunk ids
    std::map<std::string, std::set<std::string>> kg_nodes;                ///< entity -> chunk ids mentioning it
    std::map<std::string, Freshness> doc_freshness;

    bool operator==(const HybridIndex&) const = default;

    /// Versioned structured dump for golden comparisons.
    Json dump() const;
};

/// Every doc_id present in `enriched` first has all its prior chunks removed from all sub-indexes.
void index_upsert(HybridIndex& index, const std::vector<EnrichedChunk>& enriched);

/// Removes a document's chunks everywhere and forgets its freshness record.
void index_remove(HybridIndex& index, const std::string& doc_id);

void set_freshness(HybridIndex& index, const std::string& doc_id, Freshness freshness);

enum IndexMask : unsigned { kKv = 1, kVector = 2, kFulltext = 4, kAllIndexes = 7 };

struct RankedChunk {
    std::string chunk_id;
    double fused_score = 0.0;
    std::map<std::string, std::size_t> ranks;  ///< "kv" / "vector" / "fulltext" -> 1-based rank
    bool operator==(const RankedChunk&) const = default;
};

struct RetrievalResult {
    std::vector<RankedChunk> ranked;
    std::size_t k = 0;
};

/// kv: keys occurring in the query as whole words (case-insensitive), every hit at rank 1;
/// vector: every chunk by cosine descending; fulltext: chunks with a positive sum of query-term
/// frequencies, descending. Ties by chunk_id. Fused by reciprocal rank fusion (K = 60).
/// EmptyIndex when there are no chunks; PreconditionViolation when k == 0.
RetrievalResult retrieve(const HybridIndex& index, const std::string& query, std::size_t k,
                         unsigned indexes = kAllIndexes);

struct Neighbor {
    std::size_t hops = 0;
    std::set<std::string> provenance;  ///< chunk ids of the edges on the discovering frontier
    bool operator==(const Neighbor&) const = default;
};

/// Breadth-first closure along directed edges. UnknownEntity; PreconditionViolation when depth == 0.
std::map<std::string, Neighbor> kg_neighbors(const HybridIndex& index, const std::string& entity, std::size_t depth);

/// Documents with now - ingested_at > ttl, sorted.
std::vector<std::string> refresh_scan(const HybridIndex& index, Timestamp now);

/// Thread-safe holder: readers get immutable snapshots, writers copy-on-write.
class KnowledgeBase {
public:
    KnowledgeBase() : index_(std::make_shared<const HybridIndex>()) {}
    std::shared_ptr<const HybridIndex> snapshot() const;
    void upsert_document(const RawDocument& doc, const std::vector<EnrichedChunk>& enriched, std::int64_t ttl_seconds);
    void remove_document(const std::string& doc_id);

private:
    mutable std::shared_mutex mutex_;
    std::shared_ptr<const HybridIndex> index_;
};

struct CorpusOptions {
    ChunkStrategy strategy = ChunkStrategy::semantic;
    std::size_t max_tokens = kDefaultChunkTokens;
    std::size_t overlap_sentences = kDefaultOverlapSentences;
    std::int64_t default_ttl_seconds = 24 * 3600;
};

/// Ingests every regular file of `dir` except "*.meta.json" sidecars. A sidecar
/// "<file>.meta.json" may give {"doc_id", "ttl_hours", "glossary", "ingested_at", "metadata"}.
/// Files are processed in name order; ingested_at defaults to `now`.
void load_corpus(KnowledgeBase& kb, const std::filesystem::path& dir, Timestamp now, const CorpusOptions& options = {});

}  // namespace derisk::knowledge
