#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "derisk/common/json_util.hpp"
#include "derisk/common/time.hpp"

namespace derisk::knowledge {

enum class MediaKind { plain_text, markdown, log_file };
std::string_view to_string(MediaKind k) noexcept;

struct RawDocument {
    std::string doc_id;
    std::string source_uri;
    MediaKind media_kind = MediaKind::plain_text;
    std::string body;  ///< cleaned
    Timestamp ingested_at = 0;
    std::map<std::string, std::string> metadata;

    bool operator==(const RawDocument&) const = default;
};

/// CRLF/CR -> LF, control characters other than tab/newline removed, trailing whitespace
/// trimmed per line, runs of more than two blank lines collapsed to one.
std::string clean_body(std::string_view raw);

/// markdown when a heading or fence line exists; log_file when at least half of the
/// non-empty lines start with a timestamp; else plain_text.
MediaKind detect_media_kind(std::string_view body);

/// EmptyAfterCleaning when nothing printable remains.
RawDocument ingest_text(std::string doc_id, std::string source_uri, std::string_view raw, Timestamp ingested_at,
                        std::map<std::string, std::string> metadata = {});

/// UnreadableSource when the file cannot be read. doc_id defaults to the file name.
RawDocument ingest_file(const std::filesystem::path& path, Timestamp ingested_at,
                        std::map<std::string, std::string> metadata = {}, std::string doc_id = {});

enum class ChunkStrategy { semantic, structural, sentence };
std::string_view to_string(ChunkStrategy s) noexcept;
ChunkStrategy parse_chunk_strategy(std::string_view name);

struct Span {
    std::size_t start = 0;
    std::size_t end = 0;
    bool operator==(const Span&) const = default;
    auto operator<=>(const Span&) const = default;
};

struct Chunk {
    std::string chunk_id;  ///< "<doc_id>#<sem|str|sen>-NNNN"
    std::string doc_id;
    std::string text;
    ChunkStrategy strategy = ChunkStrategy::semantic;
    Span span;                     ///< own region; spans of one pass tile the body
    std::optional<Span> overlap;   ///< semantic only: carried sentences preceding `span`
    std::size_t token_count = 0;

    bool operator==(const Chunk&) const = default;
};

inline constexpr std::size_t kDefaultChunkTokens = 256;
inline constexpr std::size_t kDefaultOverlapSentences = 1;

std::vector<Chunk> chunk(const RawDocument& doc, ChunkStrategy strategy, std::size_t max_tokens = kDefaultChunkTokens,
                         std::size_t overlap_sentences = kDefaultOverlapSentences);

struct Entity {
    std::string surface;
    std::string type;  ///< "component", "phrase", "glossary" or provider-assigned
    bool operator==(const Entity&) const = default;
    auto operator<=>(const Entity&) const = default;
};

struct Relation {
    std::string subject;
    std::string predicate;
    std::string object;
    bool operator==(const Relation&) const = default;
    auto operator<=>(const Relation&) const = default;
};

struct FaqPair {
    std::string question;
    std::string answer;
    bool operator==(const FaqPair&) const = default;
};

struct EnrichedChunk {
    Chunk chunk;
    std::vector<FaqPair> faq_pairs;
    std::vector<Entity> entities;
    std::vector<Relation> relations;

    bool operator==(const EnrichedChunk&) const = default;
};

/// Prompt -> raw model output expected to hold {"faq_pairs","entities","relations"}.
using ExtractFn = std::function<std::string(const std::string&)>;

/// Fallback: CamelCase words and runs of two or more capitalized words, plus glossary hits;
/// (a, "co_occurs_with", b) for each ordered pair sharing a sentence; no FAQ pairs.
/// With `extractor`: one call per chunk, one repair retry, then ExtractionGrammarError.
/// PreconditionViolation on an empty chunk list.
std::vector<EnrichedChunk> enrich(const std::vector<Chunk>& chunks, const std::vector<std::string>& glossary = {},
                                  const ExtractFn& extractor = nullptr);

}  // namespace derisk::knowledge
