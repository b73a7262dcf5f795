#include "derisk/knowledge/index.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>
#include <fstream>
#include <mutex>

#include "derisk/common/error.hpp"
#include "derisk/common/text.hpp"

namespace derisk::knowledge {

namespace {

void erase_from(std::map<std::string, std::set<std::string>>& m, const std::string& key, const std::string& id) {
    auto it = m.find(key);
    if (it == m.end()) return;
    it->second.erase(id);
    if (it->second.empty()) m.erase(it);
}

void remove_chunk(HybridIndex& index, const std::string& id) {
    auto it = index.chunks.find(id);
    if (it == index.chunks.end()) return;
    const EnrichedChunk& e = it->second;
    erase_from(index.kv, e.chunk.doc_id, id);
    for (const auto& ent : e.entities) {
        erase_from(index.kv, ent.surface, id);
        erase_from(index.kg_nodes, ent.surface, id);
    }
    for (const auto& r : e.relations) {
        erase_from(index.kg_nodes, r.subject, id);
        erase_from(index.kg_nodes, r.object, id);
        auto edge = index.kg.find({r.subject, r.predicate, r.object});
        if (edge != index.kg.end()) {
            edge->second.erase(id);
            if (edge->second.empty()) index.kg.erase(edge);
        }
    }
    for (const auto& term : text::tokenize(e.chunk.text)) {
        auto t = index.fulltext.find(term);
        if (t == index.fulltext.end()) continue;
        t->second.erase(id);
        if (t->second.empty()) index.fulltext.erase(t);
    }
    index.vector.erase(id);
    erase_from(index.doc_chunks, e.chunk.doc_id, id);
    index.chunks.erase(it);
}

void insert_chunk(HybridIndex& index, const EnrichedChunk& e) {
    const std::string& id = e.chunk.chunk_id;
    index.chunks[id] = e;
    index.doc_chunks[e.chunk.doc_id].insert(id);
    index.kv[e.chunk.doc_id].insert(id);
    for (const auto& ent : e.entities) {
        index.kv[ent.surface].insert(id);
        index.kg_nodes[ent.surface].insert(id);
    }
    for (const auto& r : e.relations) {
        index.kg_nodes[r.subject].insert(id);
        index.kg_nodes[r.object].insert(id);
        index.kg[{r.subject, r.predicate, r.object}].insert(id);
    }
    for (const auto& term : text::tokenize(e.chunk.text)) ++index.fulltext[term][id];
    index.vector[id] = embed(e.chunk.text);
}

bool whole_word_ci(const std::string& lowered_hay, const std::string& needle) {
    const std::string n = text::to_lower(needle);
    if (n.empty()) return false;
    auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    for (std::size_t p = lowered_hay.find(n); p != std::string::npos; p = lowered_hay.find(n, p + 1)) {
        bool left = p == 0 || !alnum(lowered_hay[p - 1]);
        bool right = p + n.size() >= lowered_hay.size() || !alnum(lowered_hay[p + n.size()]);
        if (left && right) return true;
    }
    return false;
}

using Scored = std::vector<std::pair<std::string, double>>;

/// Descending score, ties by chunk_id.
void order(Scored& s) {
    std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
}

Json chunk_json(const EnrichedChunk& e) {
    Json j;
    j["chunk_id"] = e.chunk.chunk_id;
    j["doc_id"] = e.chunk.doc_id;
    j["strategy"] = std::string(to_string(e.chunk.strategy));
    j["span"] = Json::array({e.chunk.span.start, e.chunk.span.end});
    j["overlap"] = e.chunk.overlap ? Json::array({e.chunk.overlap->start, e.chunk.overlap->end}) : Json();
    j["token_count"] = e.chunk.token_count;
    j["text"] = e.chunk.text;
    Json ents = Json::array();
    for (const auto& en : e.entities) ents.push_back({{"surface", en.surface}, {"type", en.type}});
    j["entities"] = ents;
    Json rels = Json::array();
    for (const auto& r : e.relations) rels.push_back(Json::array({r.subject, r.predicate, r.object}));
    j["relations"] = rels;
    Json faqs = Json::array();
    for (const auto& f : e.faq_pairs) faqs.push_back({{"question", f.question}, {"answer", f.answer}});
    j["faq_pairs"] = faqs;
    return j;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

Embedding embed(std::string_view text) {
    Embedding v{};
    for (const auto& tok : text::tokenize(text)) v[fnv1a64(tok) % kEmbeddingDim] += 1.0;
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
    }
    return v;
}

Json HybridIndex::dump() const {
    Json j;
    j["version"] = 1;
    Json cs = Json::array();
    for (const auto& [id, e] : chunks) cs.push_back(chunk_json(e));
    j["chunks"] = cs;
    Json kvj = Json::object();
    for (const auto& [k, ids] : kv) kvj[k] = Json(ids);
    j["kv"] = kvj;
    Json vec = Json::object();
    for (const auto& [id, v] : vector) {
        Json dims = Json::object();
        for (std::size_t d = 0; d < v.size(); ++d)
            if (v[d] != 0.0) dims[std::to_string(d)] = v[d];
        vec[id] = dims;
    }
    j["vector"] = vec;
    Json ft = Json::object();
    for (const auto& [term, postings] : fulltext) ft[term] = Json(postings);
    j["fulltext"] = ft;
    Json kgj = Json::array();
    for (const auto& [edge, ids] : kg)
        kgj.push_back({{"subject", edge.subject}, {"predicate", edge.predicate}, {"object", edge.object},
                       {"chunks", Json(ids)}});
    j["kg"] = kgj;
    Json fr = Json::object();
    for (const auto& [doc, f] : doc_freshness)
        fr[doc] = {{"ingested_at", format_timestamp(f.ingested_at)}, {"ttl_seconds", f.ttl_seconds}};
    j["doc_freshness"] = fr;
    return j;
}

void index_upsert(HybridIndex& index, const std::vector<EnrichedChunk>& enriched) {
    std::set<std::string> docs;
    for (const auto& e : enriched) docs.insert(e.chunk.doc_id);
    for (const auto& doc : docs) {
        auto it = index.doc_chunks.find(doc);
        if (it == index.doc_chunks.end()) continue;
        const std::set<std::string> prior = it->second;
        for (const auto& id : prior) remove_chunk(index, id);
    }
    for (const auto& e : enriched) {
        require(!e.chunk.chunk_id.empty() && !e.chunk.doc_id.empty(), "chunk without id");
        remove_chunk(index, e.chunk.chunk_id);
        insert_chunk(index, e);
    }
}

void index_remove(HybridIndex& index, const std::string& doc_id) {
    auto it = index.doc_chunks.find(doc_id);
    if (it != index.doc_chunks.end()) {
        const std::set<std::string> prior = it->second;
        for (const auto& id : prior) remove_chunk(index, id);
    }
    index.doc_freshness.erase(doc_id);
}

void set_freshness(HybridIndex& index, const std::string& doc_id, Freshness freshness) {
    index.doc_freshness[doc_id] = freshness;
}

RetrievalResult retrieve(const HybridIndex& index, const std::string& query, std::size_t k, unsigned indexes) {
    require(k > 0, "k must be positive");
    if (index.chunks.empty()) fail(Errc::EmptyIndex, "the index holds no chunks");
    std::map<std::string, RankedChunk> fused;
    auto credit = [&](const std::string& id, const char* name, std::size_t rank) {
        auto& r = fused[id];
        r.chunk_id = id;
        r.ranks[name] = rank;
        r.fused_score += 1.0 / (kRrfK + static_cast<double>(rank));
    };

    if (indexes & kKv) {
        const std::string lowered = text::to_lower(query);
        std::set<std::string> hits;
        for (const auto& [key, ids] : index.kv)
            if (whole_word_ci(lowered, key)) hits.insert(ids.begin(), ids.end());
        for (const auto& id : hits) credit(id, "kv", 1);
    }
    if (indexes & kVector) {
        const Embedding q = embed(query);
        Scored s;
        s.reserve(index.vector.size());
        for (const auto& [id, v] : index.vector) {
            double dot = 0.0;
            for (std::size_t d = 0; d < kEmbeddingDim; ++d) dot += q[d] * v[d];
            s.emplace_back(id, dot);
        }
        order(s);
        for (std::size_t i = 0; i < s.size(); ++i) credit(s[i].first, "vector", i + 1);
    }
    if (indexes & kFulltext) {
        auto terms = text::tokenize(query);
        std::set<std::string> unique(terms.begin(), terms.end());
        std::map<std::string, double> score;
        for (const auto& t : unique) {
            auto it = index.fulltext.find(t);
            if (it == index.fulltext.end()) continue;
            for (const auto& [id, tf] : it->second) score[id] += static_cast<double>(tf);
        }
        Scored s(score.begin(), score.end());
        order(s);
        for (std::size_t i = 0; i < s.size(); ++i) credit(s[i].first, "fulltext", i + 1);
    }

    RetrievalResult result;
    result.k = k;
    for (auto& [id, r] : fused) result.ranked.push_back(std::move(r));
    std::sort(result.ranked.begin(), result.ranked.end(), [](const RankedChunk& a, const RankedChunk& b) {
        if (a.fused_score != b.fused_score) return a.fused_score > b.fused_score;
        return a.chunk_id < b.chunk_id;
    });
    if (result.ranked.size() > k) result.ranked.resize(k);
    return result;
}

std::map<std::string, Neighbor> kg_neighbors(const HybridIndex& index, const std::string& entity, std::size_t depth) {
    require(depth > 0, "depth must be positive");
    if (!index.kg_nodes.count(entity)) fail(Errc::UnknownEntity, entity);
    std::map<std::string, std::vector<std::pair<std::string, const std::set<std::string>*>>> out_edges;
    for (const auto& [edge, ids] : index.kg) out_edges[edge.subject].push_back({edge.object, &ids});

    std::map<std::string, Neighbor> found;
    std::set<std::string> visited{entity};
    std::vector<std::string> frontier{entity};
    for (std::size_t hop = 1; hop <= depth && !frontier.empty(); ++hop) {
        std::map<std::string, Neighbor> level;
        for (const auto& node : frontier) {
            auto it = out_edges.find(node);
            if (it == out_edges.end()) continue;
            for (const auto& [target, ids] : it->second) {
                if (visited.count(target)) continue;
                auto& n = level[target];
                n.hops = hop;
                n.provenance.insert(ids->begin(), ids->end());
            }
        }
        frontier.clear();
        for (auto& [name, n] : level) {
            visited.insert(name);
            frontier.push_back(name);
            found.emplace(name, std::move(n));
        }
    }
    return found;
}

std::vector<std::string> refresh_scan(const HybridIndex& index, Timestamp now) {
    std::vector<std::string> stale;
    for (const auto& [doc, f] : index.doc_freshness)
        if (now - f.ingested_at > f.ttl_seconds) stale.push_back(doc);
    return stale;
}

std::shared_ptr<const HybridIndex> KnowledgeBase::snapshot() const {
    std::shared_lock lock(mutex_);
    return index_;
}

void KnowledgeBase::upsert_document(const RawDocument& doc, const std::vector<EnrichedChunk>& enriched,
                                    std::int64_t ttl_seconds) {
    std::unique_lock lock(mutex_);
    auto next = std::make_shared<HybridIndex>(*index_);
    index_remove(*next, doc.doc_id);
    index_upsert(*next, enriched);
    set_freshness(*next, doc.doc_id, {doc.ingested_at, ttl_seconds});
    index_ = std::move(next);
}

void KnowledgeBase::remove_document(const std::string& doc_id) {
    std::unique_lock lock(mutex_);
    auto next = std::make_shared<HybridIndex>(*index_);
    index_remove(*next, doc_id);
    index_ = std::move(next);
}

void load_corpus(KnowledgeBase& kb, const std::filesystem::path& dir, Timestamp now, const CorpusOptions& options) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) fail(Errc::UnreadableSource, dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.size() >= 10 && name.compare(name.size() - 10, 10, ".meta.json") == 0) continue;
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
        fs::path sidecar = file;
        sidecar += ".meta.json";
        Json meta = Json::object();
        if (fs::exists(sidecar)) {
            std::ifstream in(sidecar);
            try {
                meta = Json::parse(in);
            } catch (const Json::exception& e) {
                fail(Errc::ConfigError, sidecar.string() + ": " + e.what());
            }
        }
        std::string doc_id = meta.value("doc_id", file.filename().string());
        Timestamp ingested = meta.contains("ingested_at") ? parse_timestamp(meta.at("ingested_at").get<std::string>()) : now;
        std::int64_t ttl = meta.contains("ttl_hours")
                               ? static_cast<std::int64_t>(meta.at("ttl_hours").get<double>() * 3600.0)
                               : options.default_ttl_seconds;
        std::vector<std::string> glossary = meta.value("glossary", std::vector<std::string>{});
        std::map<std::string, std::string> metadata = meta.value("metadata", std::map<std::string, std::string>{});
        RawDocument doc = ingest_file(file, ingested, metadata, doc_id);
        auto chunks = chunk(doc, options.strategy, options.max_tokens, options.overlap_sentences);
        kb.upsert_document(doc, enrich(chunks, glossary), ttl);
    }
}

}  // namespace derisk::knowledge
