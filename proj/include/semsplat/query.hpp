#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "semsplat/core.hpp"
#include "semsplat/providers.hpp"
#include "semsplat/scene_io.hpp"
#include "semsplat/vecstore.hpp"

namespace semsplat {

/// Cosine threshold used for binary open-vocabulary retrieval.
inline constexpr float kDefaultCosineThreshold = 0.28f;

/// Text-to-vector provider. Real deployments paste externally computed text
/// vectors into a lookup table; synthetic mode falls back to synth_embedding
/// for unknown labels so fixture objects match their queries exactly.
class TextProvider {
public:
    enum class Mode { kStrictLookup, kSynthetic };

    static TextProvider synthetic(uint32_t dim) { return TextProvider(Mode::kSynthetic, dim); }

    static TextProvider strict(uint32_t dim) { return TextProvider(Mode::kStrictLookup, dim); }

    /// Lookup-table file: one `label<TAB>v1 v2 ... vD` entry per line.
    static TextProvider from_lookup_file(const std::string& path, uint32_t dim, Mode mode) {
        TextProvider provider(mode, dim);
        std::ifstream is(path);
        if (!is) throw IoError("cannot open lookup table: " + path);
        std::string line;
        size_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            if (line.empty() || line[0] == '#') continue;
            const size_t tab = line.find('\t');
            if (tab == std::string::npos)
                throw FormatError("lookup table: missing tab separator at line " + std::to_string(line_no));
            const std::string label = line.substr(0, tab);
            std::istringstream vs(line.substr(tab + 1));
            std::vector<float> vec;
            vec.reserve(dim);
            float v;
            while (vs >> v) vec.push_back(v);
            if (vec.size() != dim)
                throw DataError("lookup table: entry '" + label + "' has " + std::to_string(vec.size()) +
                                " components, expected " + std::to_string(dim));
            provider.table_[label] = std::move(vec);
        }
        return provider;
    }

    uint32_t dim() const { return dim_; }

    std::vector<float> encode(const std::string& text) const {
        auto it = table_.find(text);
        if (it != table_.end()) return it->second;
        if (mode_ == Mode::kSynthetic) return synth_embedding(text, dim_);
        throw LookupError("no lookup entry for label '" + text + "'");
    }

private:
    TextProvider(Mode mode, uint32_t dim) : mode_(mode), dim_(dim) {}

    Mode mode_;
    uint32_t dim_;
    std::unordered_map<std::string, std::vector<float>> table_;
};

inline std::vector<float> encode_text(const std::string& text, const TextProvider& provider) {
    return provider.encode(text);
}

struct QueryMode {
    enum class Kind { kTopK, kThreshold };
    Kind kind = Kind::kThreshold;
    size_t k = 0;
    float tau = kDefaultCosineThreshold;

    static QueryMode topk(size_t k) { return {Kind::kTopK, k, 0.0f}; }
    static QueryMode threshold(float tau) { return {Kind::kThreshold, 0, tau}; }
};

struct QueryMatch {
    uint32_t gaussian_id = 0;
    float similarity = 0.0f;
    Gaussian3D payload;
};

struct QueryResult {
    std::string text;
    std::vector<float> query_vector;
    QueryMode mode;
    std::vector<QueryMatch> matches; // similarity descending
};

/// encode_text + store search + payload assembly.
inline QueryResult run_query(const VectorStore& store, const std::string& text, const QueryMode& mode,
                             const TextProvider& provider) {
    QueryResult result;
    result.text = text;
    result.mode = mode;
    result.query_vector = encode_text(text, provider);

    std::vector<ScoredId> scored;
    if (store.count() > 0) {
        scored = (mode.kind == QueryMode::Kind::kTopK) ? query_topk(store, result.query_vector, mode.k)
                                                       : query_threshold(store, result.query_vector, mode.tau);
    }

    std::unordered_map<uint32_t, size_t> index_by_id;
    index_by_id.reserve(store.count());
    for (size_t i = 0; i < store.count(); ++i) index_by_id[store.id_at(i)] = i;
    result.matches.reserve(scored.size());
    for (const ScoredId& s : scored)
        result.matches.push_back({s.gaussian_id, s.similarity, store.payload_at(index_by_id.at(s.gaussian_id))});
    return result;
}

/// Writes the matched Gaussians in the scene PLY layout (ids reassigned by
/// record order, as in any saved scene).
inline void export_matches_ply(const QueryResult& result, const std::string& path) {
    std::vector<Gaussian3D> gaussians;
    gaussians.reserve(result.matches.size());
    for (const QueryMatch& m : result.matches) gaussians.push_back(m.payload);
    save_scene(GaussianScene(std::move(gaussians)), path);
}

} // namespace semsplat
