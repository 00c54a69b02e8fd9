#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mugat/corpus/config.hpp"
#include "mugat/corpus/document.hpp"
#include "mugat/corpus/markup.hpp"
#include "mugat/corpus/render.hpp"
#include "mugat/corpus/splits.hpp"
#include "mugat/parallel.hpp"

namespace mugat::corpus {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string pgm_name(std::size_t doc_id, std::size_t page_index)
{
    return "doc" + std::to_string(doc_id) + "_page" + std::to_string(page_index) + ".pgm";
}

/// Binary PGM ("P5", maxval 255): ink is black (0), background white (255).
inline std::string encode_pgm(const PageBitmap& page)
{
    std::string out = "P5\n" + std::to_string(page.width) + " " + std::to_string(page.height) + "\n255\n";
    out.reserve(out.size() + page.pixels.size());
    for (const auto p : page.pixels) out += static_cast<char>(p ? 0 : 255);
    return out;
}

inline PageBitmap decode_pgm(const std::string& bytes)
{
    std::istringstream in(bytes);
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || w == 0 || h == 0 || maxval != 255) throw DataError("not an 8-bit binary PGM");
    in.get();
    PageBitmap page = blank_page(h, w);
    std::string raw(w * h, '\0');
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw DataError("truncated PGM pixel data");
    for (std::size_t i = 0; i < raw.size(); ++i) page.pixels[i] = static_cast<unsigned char>(raw[i]) < 128 ? 1 : 0;
    return page;
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes through a temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes)
{
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline nlohmann::ordered_json to_json(const SampleDescriptor& s)
{
    return nlohmann::ordered_json{{"doc_id", s.doc_id},
                                  {"page_index", s.page_index},
                                  {"prev_available", s.prev_available},
                                  {"next_available", s.next_available},
                                  {"split", std::string(to_string(s.split))},
                                  {"markup", s.markup},
                                  {"pgm_path", s.pgm_path}};
}

inline SampleDescriptor sample_from_json(const nlohmann::json& j)
{
    SampleDescriptor s;
    s.doc_id = j.at("doc_id").get<std::size_t>();
    s.page_index = j.at("page_index").get<std::size_t>();
    s.prev_available = j.at("prev_available").get<bool>();
    s.next_available = j.at("next_available").get<bool>();
    s.split = parse_split(j.at("split").get<std::string>());
    s.markup = j.at("markup").get<std::string>();
    s.pgm_path = j.at("pgm_path").get<std::string>();
    return s;
}

/// JSON-lines manifest, one sample per line, train then val then test.
inline std::string encode_manifest(const SplitManifest& m)
{
    std::string out;
    for (Split split : {Split::train, Split::val, Split::test}) {
        for (const auto& s : m.get(split)) out += to_json(s).dump() + "\n";
    }
    return out;
}

inline SplitManifest decode_manifest(const std::string& text)
{
    SplitManifest m;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            SampleDescriptor s = sample_from_json(nlohmann::json::parse(line));
            m.get(s.split).push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return m;
}

/// An entire generated corpus held in memory.
struct Corpus {
    GenConfig config;
    std::uint64_t seed = 0;
    std::vector<DocumentSpec> documents;
    std::vector<PageBitmap> pages;  // grouped by document, in page order
    SplitManifest manifest;

    const PageBitmap& page(std::size_t doc_id, std::size_t page_index) const
    {
        auto it = index_.find({doc_id, page_index});
        if (it == index_.end()) {
            throw DataError("no page " + std::to_string(page_index) + " in document " + std::to_string(doc_id));
        }
        return pages[it->second];
    }

    bool contains(std::size_t doc_id, std::size_t page_index) const { return index_.count({doc_id, page_index}) != 0; }

    void reindex()
    {
        index_.clear();
        for (std::size_t i = 0; i < pages.size(); ++i) index_[{pages[i].doc_id, pages[i].page_index}] = i;
    }

private:
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> index_;
};

inline std::uint64_t document_seed(std::uint64_t corpus_seed, std::size_t doc_id)
{
    return derive_seed(corpus_seed, doc_id);
}

/// Layouts and rendered pages of one document.
inline std::vector<PageBitmap> render_document(const DocumentSpec& doc, const GenConfig& cfg)
{
    const auto layouts = paginate(doc, cfg.rows_per_page, cfg.summary_cells);
    const auto geo = TableGeometry::from(cfg);
    const auto style = Style::from_id(doc.style_id);
    std::vector<PageBitmap> pages;
    for (std::size_t i = 0; i < layouts.size(); ++i) {
        PageBitmap page = render_page(layouts[i], style, geo);
        page.markup = target_markup(layouts[i]);
        page.has_prev = i > 0;
        page.has_next = i + 1 < layouts.size();
        pages.push_back(std::move(page));
    }
    return pages;
}

/// Generates, renders and splits a corpus. The result is a pure function of
/// (seed, cfg); `workers` only changes how fast it is produced.
inline Corpus generate_corpus(std::uint64_t seed, const GenConfig& cfg, std::size_t workers = 1)
{
    cfg.validate();
    const Lexicons lex = build_lexicons(cfg);
    Corpus c;
    c.config = cfg;
    c.seed = seed;
    c.documents.resize(cfg.num_documents);
    std::vector<std::vector<PageBitmap>> rendered(cfg.num_documents);
    parallel_for(cfg.num_documents, workers, [&](std::size_t d) {
        c.documents[d] = generate_document(document_seed(seed, d), d, cfg, lex);
        rendered[d] = render_document(c.documents[d], cfg);
    });
    std::vector<PageRef> refs;
    for (auto& doc_pages : rendered) {
        for (auto& p : doc_pages) {
            refs.push_back(PageRef{p.doc_id, p.page_index, p.has_prev, p.has_next, p.markup, pgm_name(p.doc_id, p.page_index)});
            c.pages.push_back(std::move(p));
        }
    }
    c.manifest = make_splits(refs, cfg.split_ratios, cfg.scenario_quotas, seed);
    c.reindex();
    return c;
}

inline nlohmann::ordered_json corpus_config_json(const Corpus& c)
{
    nlohmann::json cfg = c.config;
    nlohmann::ordered_json j;
    j["seed"] = c.seed;
    j["gen_config"] = cfg;
    return j;
}

/// Layout on disk: gen_config.json, manifest.jsonl and one PGM per page.
inline void write_corpus(const Corpus& c, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    for (const auto& p : c.pages) write_file_atomic(dir / pgm_name(p.doc_id, p.page_index), encode_pgm(p));
    write_file_atomic(dir / "manifest.jsonl", encode_manifest(c.manifest));
    write_file_atomic(dir / "gen_config.json", corpus_config_json(c).dump(2) + "\n");
}

/// Reads a corpus directory back: pixels from the PGM files, markup from the
/// manifest. Document specs are not stored, so `documents` stays empty.
inline Corpus load_corpus(const std::filesystem::path& dir)
{
    if (!std::filesystem::exists(dir / "manifest.jsonl") || !std::filesystem::exists(dir / "gen_config.json")) {
        throw DataError("corpus directory " + dir.string() + " lacks manifest.jsonl or gen_config.json");
    }
    Corpus c;
    try {
        const auto j = nlohmann::json::parse(read_file(dir / "gen_config.json"));
        c.seed = j.at("seed").get<std::uint64_t>();
        c.config = j.at("gen_config").get<GenConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad gen_config.json: ") + e.what());
    }
    c.manifest = decode_manifest(read_file(dir / "manifest.jsonl"));
    std::map<std::pair<std::size_t, std::size_t>, const SampleDescriptor*> samples;
    for (Split s : {Split::train, Split::val, Split::test}) {
        for (const auto& d : c.manifest.get(s)) samples[{d.doc_id, d.page_index}] = &d;
    }
    for (const auto& [key, desc] : samples) {
        PageBitmap page = decode_pgm(read_file(dir / desc->pgm_path));
        page.doc_id = key.first;
        page.page_index = key.second;
        page.markup = desc->markup;
        c.pages.push_back(std::move(page));
    }
    for (auto& p : c.pages) {
        p.has_prev = samples.count({p.doc_id, p.page_index - 1}) && p.page_index > 0;
        p.has_next = samples.count({p.doc_id, p.page_index + 1}) != 0;
    }
    c.reindex();
    return c;
}

}  // namespace mugat::corpus
