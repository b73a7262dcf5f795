#include "derisk/knowledge/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "derisk/common/error.hpp"
#include "derisk/common/text.hpp"
#include "derisk/llm/tokens.hpp"

namespace derisk::knowledge {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return is_space(c); });
}

bool is_heading(std::string_view line) {
    std::size_t n = 0;
    while (n < line.size() && line[n] == '#') ++n;
    return n >= 1 && n <= 6 && n < line.size() && line[n] == ' ';
}

bool is_fence(std::string_view line) {
    std::size_t b = 0;
    while (b < line.size() && (line[b] == ' ' || line[b] == '\t')) ++b;
    return line.substr(b, 3) == "```";
}

bool starts_with_timestamp(std::string_view line) {
    static const std::regex re(R"(^\[?\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2})");
    return std::regex_search(line.begin(), line.end(), re);
}

struct Line {
    std::size_t start;
    std::string_view text;  ///< without the newline
    std::size_t end;        ///< after the newline
};

std::vector<Line> lines_of(std::string_view body) {
    std::vector<Line> out;
    std::size_t pos = 0;
    while (pos < body.size()) {
        std::size_t nl = body.find('\n', pos);
        std::size_t stop = nl == std::string_view::npos ? body.size() : nl;
        std::size_t end = nl == std::string_view::npos ? body.size() : nl + 1;
        out.push_back({pos, body.substr(pos, stop - pos), end});
        pos = end;
    }
    return out;
}

/// Turns cut points into spans over the body, folding whitespace-only spans into a neighbour.
std::vector<Span> spans_from_cuts(std::string_view body, std::set<std::size_t> cuts) {
    cuts.insert(0);
    cuts.insert(body.size());
    std::vector<Span> raw;
    for (auto it = cuts.begin(); std::next(it) != cuts.end(); ++it)
        if (*it < *std::next(it)) raw.push_back({*it, *std::next(it)});
    std::vector<Span> out;
    std::optional<std::size_t> pending_start;
    for (const auto& s : raw) {
        if (blank(body.substr(s.start, s.end - s.start))) {
            if (!out.empty()) out.back().end = s.end;
            else if (!pending_start) pending_start = s.start;
            continue;
        }
        Span span = s;
        if (pending_start) {
            span.start = *pending_start;
            pending_start.reset();
        }
        out.push_back(span);
    }
    return out;
}

std::vector<Span> sentence_spans(std::string_view body) {
    std::set<std::size_t> cuts;
    for (std::size_t i = 0; i < body.size(); ++i) {
        char c = body[i];
        if (c == '\n') cuts.insert(i + 1);
        else if ((c == '.' || c == '?' || c == '!') && i + 1 < body.size() && is_space(body[i + 1]))
            cuts.insert(i + 1);
    }
    return spans_from_cuts(body, std::move(cuts));
}

std::vector<Span> structural_spans(std::string_view body) {
    std::set<std::size_t> cuts;
    bool in_fence = false;
    for (const auto& line : lines_of(body)) {
        if (in_fence) {
            if (is_fence(line.text)) {
                in_fence = false;
                cuts.insert(line.end);
            }
            continue;
        }
        if (is_fence(line.text)) {
            in_fence = true;
            cuts.insert(line.start);
        } else if (is_heading(line.text)) {
            cuts.insert(line.start);
        }
    }
    return spans_from_cuts(body, std::move(cuts));
}

std::string chunk_id(const std::string& doc_id, ChunkStrategy strategy, std::size_t n) {
    static const char* prefix[] = {"sem", "str", "sen"};
    char buf[16];
    std::snprintf(buf, sizeof buf, "-%04zu", n);
    return doc_id + "#" + prefix[static_cast<int>(strategy)] + buf;
}

Chunk make_chunk(const RawDocument& doc, ChunkStrategy strategy, std::size_t n, Span span,
                 std::optional<Span> overlap) {
    Chunk c;
    c.chunk_id = chunk_id(doc.doc_id, strategy, n);
    c.doc_id = doc.doc_id;
    c.strategy = strategy;
    c.span = span;
    c.overlap = overlap;
    std::size_t from = overlap ? overlap->start : span.start;
    c.text = text::trim(std::string_view(doc.body).substr(from, span.end - from));
    c.token_count = llm::count_tokens(c.text);
    return c;
}

// ---- enrichment -------------------------------------------------------------------------

struct Word {
    std::size_t pos;
    std::string text;
};

std::vector<Word> words_of(std::string_view s) {
    std::vector<Word> out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!is_alnum(s[i])) {
            ++i;
            continue;
        }
        std::size_t b = i;
        while (i < s.size() && is_alnum(s[i])) ++i;
        out.push_back({b, std::string(s.substr(b, i - b))});
    }
    return out;
}

bool is_camel(const std::string& w) {
    static const std::regex re("^[A-Z][a-z0-9]+(?:[A-Z][a-z0-9]*)+$");
    return std::regex_match(w, re);
}

bool is_capitalized(const std::string& w) {
    static const std::regex re("^[A-Z][a-z]+$");
    return std::regex_match(w, re);
}

bool whole_word_at(std::string_view hay, std::size_t pos, std::size_t len) {
    bool left = pos == 0 || !is_alnum(hay[pos - 1]);
    bool right = pos + len >= hay.size() || !is_alnum(hay[pos + len]);
    return left && right;
}

struct Mention {
    std::size_t pos;
    Entity entity;
};

std::vector<Mention> mentions(std::string_view sentence, const std::vector<std::string>& glossary) {
    std::vector<Mention> out;
    auto words = words_of(sentence);
    for (std::size_t i = 0; i < words.size();) {
        if (is_camel(words[i].text)) {
            out.push_back({words[i].pos, {words[i].text, "component"}});
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < words.size() && is_capitalized(words[j].text) &&
               (j == i || sentence.substr(words[j - 1].pos + words[j - 1].text.size(),
                                          words[j].pos - words[j - 1].pos - words[j - 1].text.size()) == " "))
            ++j;
        if (j - i >= 2) {
            std::size_t end = words[j - 1].pos + words[j - 1].text.size();
            out.push_back({words[i].pos, {std::string(sentence.substr(words[i].pos, end - words[i].pos)), "phrase"}});
            i = j;
        } else {
            ++i;
        }
    }
    const std::string lowered = text::to_lower(sentence);
    for (const auto& term : glossary) {
        if (term.empty()) continue;
        const std::string t = text::to_lower(term);
        for (std::size_t p = lowered.find(t); p != std::string::npos; p = lowered.find(t, p + 1)) {
            if (whole_word_at(lowered, p, t.size())) {
                out.push_back({p, {term, "glossary"}});
                break;
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const Mention& a, const Mention& b) { return a.pos < b.pos; });
    return out;
}

EnrichedChunk fallback_enrich(const Chunk& c, const std::vector<std::string>& glossary) {
    EnrichedChunk e;
    e.chunk = c;
    std::set<std::string> seen;
    std::set<Relation> rel_seen;
    for (const auto& sentence : text::sentences(c.text)) {
        std::vector<std::string> in_sentence;
        for (const auto& m : mentions(sentence, glossary)) {
            if (seen.insert(m.entity.surface).second) e.entities.push_back(m.entity);
            if (std::find(in_sentence.begin(), in_sentence.end(), m.entity.surface) == in_sentence.end())
                in_sentence.push_back(m.entity.surface);
        }
        for (std::size_t a = 0; a < in_sentence.size(); ++a)
            for (std::size_t b = a + 1; b < in_sentence.size(); ++b) {
                Relation r{in_sentence[a], "co_occurs_with", in_sentence[b]};
                if (rel_seen.insert(r).second) e.relations.push_back(r);
            }
    }
    return e;
}

const std::string& string_field(const Json& obj, const char* key) {
    if (!obj.is_object() || !obj.contains(key) || !obj.at(key).is_string())
        throw std::invalid_argument(std::string("missing string field '") + key + "'");
    return obj.at(key).get_ref<const std::string&>();
}

const Json& array_field(const Json& obj, const char* key) {
    if (!obj.contains(key) || !obj.at(key).is_array())
        throw std::invalid_argument(std::string("missing array '") + key + "'");
    return obj.at(key);
}

EnrichedChunk parse_extraction(const Chunk& c, const std::string& output) {
    auto b = output.find('{');
    auto e = output.rfind('}');
    if (b == std::string::npos || e == std::string::npos || e < b) throw std::invalid_argument("no JSON object");
    Json j = Json::parse(output.substr(b, e - b + 1));
    if (!j.is_object()) throw std::invalid_argument("not an object");
    EnrichedChunk out;
    out.chunk = c;
    std::set<std::string> surfaces;
    for (const auto& ent : array_field(j, "entities")) {
        Entity en{string_field(ent, "surface"), string_field(ent, "type")};
        if (en.surface.empty()) throw std::invalid_argument("empty entity surface");
        if (surfaces.insert(en.surface).second) out.entities.push_back(en);
    }
    for (const auto& rel : array_field(j, "relations")) {
        Relation r{string_field(rel, "subject"), string_field(rel, "predicate"), string_field(rel, "object")};
        if (!surfaces.count(r.subject) || !surfaces.count(r.object))
            throw std::invalid_argument("relation endpoint is not an extracted entity");
        if (r.predicate.empty()) throw std::invalid_argument("empty predicate");
        out.relations.push_back(r);
    }
    for (const auto& faq : array_field(j, "faq_pairs"))
        out.faq_pairs.push_back({string_field(faq, "question"), string_field(faq, "answer")});
    return out;
}

EnrichedChunk provider_enrich(const Chunk& c, const ExtractFn& extractor) {
    std::string prompt = "[extract chunk=" + c.chunk_id + "]\n" + c.text;
    try {
        return parse_extraction(c, extractor(prompt));
    } catch (const Error&) {
        throw;
    } catch (const std::exception& first) {
        std::string repair = "[extract chunk=" + c.chunk_id + " repair]\n" + c.text + "\nerror: " + first.what();
        try {
            return parse_extraction(c, extractor(repair));
        } catch (const Error&) {
            throw;
        } catch (const std::exception& second) {
            fail(Errc::ExtractionGrammarError, c.chunk_id + ": " + second.what());
        }
    }
}

}  // namespace

std::string_view to_string(MediaKind k) noexcept {
    switch (k) {
        case MediaKind::plain_text: return "plain_text";
        case MediaKind::markdown: return "markdown";
        case MediaKind::log_file: return "log_file";
    }
    return "plain_text";
}

std::string clean_body(std::string_view raw) {
    std::string normalized;
    normalized.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        unsigned char c = static_cast<unsigned char>(raw[i]);
        if (c == '\r') {
            normalized.push_back('\n');
            if (i + 1 < raw.size() && raw[i + 1] == '\n') ++i;
        } else if (c == '\n' || c == '\t' || (c >= 0x20 && c != 0x7F)) {
            normalized.push_back(static_cast<char>(c));
        }
    }
    std::string out;
    std::size_t blank_run = 0;
    for (const auto& line : lines_of(normalized)) {
        std::string l(line.text);
        while (!l.empty() && is_space(l.back())) l.pop_back();
        bool had_newline = line.end > line.start + line.text.size();
        if (l.empty()) {
            ++blank_run;
            continue;
        }
        if (blank_run > 2) blank_run = 1;
        out.append(blank_run, '\n');
        blank_run = 0;
        out += l;
        if (had_newline) out.push_back('\n');
    }
    if (blank_run > 2) blank_run = 1;
    out.append(blank_run, '\n');
    return out;
}

MediaKind detect_media_kind(std::string_view body) {
    std::size_t non_empty = 0, stamped = 0;
    for (const auto& line : lines_of(body)) {
        if (is_heading(line.text) || is_fence(line.text)) return MediaKind::markdown;
        if (blank(line.text)) continue;
        ++non_empty;
        if (starts_with_timestamp(line.text)) ++stamped;
    }
    if (non_empty > 0 && stamped * 2 >= non_empty) return MediaKind::log_file;
    return MediaKind::plain_text;
}

RawDocument ingest_text(std::string doc_id, std::string source_uri, std::string_view raw, Timestamp ingested_at,
                        std::map<std::string, std::string> metadata) {
    require(!doc_id.empty(), "doc_id must not be empty");
    RawDocument doc;
    doc.body = clean_body(raw);
    if (blank(doc.body)) fail(Errc::EmptyAfterCleaning, "document '" + doc_id + "' has no content");
    doc.doc_id = std::move(doc_id);
    doc.source_uri = std::move(source_uri);
    doc.media_kind = detect_media_kind(doc.body);
    doc.ingested_at = ingested_at;
    doc.metadata = std::move(metadata);
    return doc;
}

RawDocument ingest_file(const std::filesystem::path& path, Timestamp ingested_at,
                        std::map<std::string, std::string> metadata, std::string doc_id) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) fail(Errc::UnreadableSource, path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::UnreadableSource, path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) fail(Errc::UnreadableSource, path.string());
    if (doc_id.empty()) doc_id = path.filename().string();
    return ingest_text(std::move(doc_id), "file://" + path.string(), ss.str(), ingested_at, std::move(metadata));
}

std::string_view to_string(ChunkStrategy s) noexcept {
    switch (s) {
        case ChunkStrategy::semantic: return "semantic";
        case ChunkStrategy::structural: return "structural";
        case ChunkStrategy::sentence: return "sentence";
    }
    return "semantic";
}

ChunkStrategy parse_chunk_strategy(std::string_view name) {
    if (name == "semantic") return ChunkStrategy::semantic;
    if (name == "structural") return ChunkStrategy::structural;
    if (name == "sentence") return ChunkStrategy::sentence;
    fail(Errc::ConfigError, "unknown chunk strategy '" + std::string(name) + "'");
}

std::vector<Chunk> chunk(const RawDocument& doc, ChunkStrategy strategy, std::size_t max_tokens,
                         std::size_t overlap_sentences) {
    require(max_tokens > 0, "max_tokens must be positive");
    std::string_view body = doc.body;
    std::vector<Chunk> out;
    if (strategy == ChunkStrategy::sentence || strategy == ChunkStrategy::structural) {
        auto spans = strategy == ChunkStrategy::sentence ? sentence_spans(body) : structural_spans(body);
        for (const auto& s : spans) out.push_back(make_chunk(doc, strategy, out.size(), s, std::nullopt));
        return out;
    }
    auto sentences = sentence_spans(body);
    auto tokens_of = [&](std::size_t from, std::size_t to) {
        return llm::count_tokens(text::trim(body.substr(from, to - from)));
    };
    std::size_t next = 0;  // first sentence not yet owned by a chunk
    while (next < sentences.size()) {
        std::size_t carry = out.empty() ? 0 : std::min(overlap_sentences, next);
        std::size_t first = next - carry;
        std::size_t last = next;  // inclusive; always take at least one new sentence
        while (last + 1 < sentences.size() &&
               tokens_of(sentences[first].start, sentences[last + 1].end) <= max_tokens)
            ++last;
        Span own{sentences[next].start, sentences[last].end};
        std::optional<Span> overlap;
        if (carry > 0) overlap = Span{sentences[first].start, sentences[next].start};
        out.push_back(make_chunk(doc, strategy, out.size(), own, overlap));
        next = last + 1;
    }
    return out;
}

std::vector<EnrichedChunk> enrich(const std::vector<Chunk>& chunks, const std::vector<std::string>& glossary,
                                  const ExtractFn& extractor) {
    require(!chunks.empty(), "enrich needs at least one chunk");
    std::vector<EnrichedChunk> out;
    out.reserve(chunks.size());
    for (const auto& c : chunks) out.push_back(extractor ? provider_enrich(c, extractor) : fallback_enrich(c, glossary));
    return out;
}

}  // namespace derisk::knowledge
