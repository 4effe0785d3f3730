#include "mediavault/index.hpp"

#include <atomic>
#include <chrono>
#include <map>
#include <mutex>
#include <shared_mutex>

#include "json.hpp"

#include "mediavault/container.hpp"
#include "mediavault/io.hpp"

namespace mediavault {

namespace {

using nlohmann::json;

constexpr std::uint32_t kIndexFormatVersion = 1;
constexpr std::string_view kMainFile = "main.idx";
constexpr std::string_view kTransposeFile = "transpose.idx";
constexpr std::string_view kDegreeFile = "degree.idx";
constexpr std::string_view kMetaFile = "index.meta.json";

void put_field(std::vector<std::uint8_t>& out, std::string_view s) {
    std::uint32_t len = static_cast<std::uint32_t>(s.size());
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
    out.insert(out.end(), s.begin(), s.end());
}

void put_field_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    out.push_back(8);
    out.push_back(0);
    out.push_back(0);
    out.push_back(0);
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct FieldCursor {
    const std::vector<std::uint8_t>& data;
    std::size_t pos = 0;

    bool done() const { return pos == data.size(); }

    std::string_view next(std::string_view file) {
        if (pos + 4 > data.size())
            throw Error(std::string(file) + " is corrupt: truncated length prefix");
        std::uint32_t len = 0;
        for (int i = 3; i >= 0; --i)
            len = (len << 8) | data[pos + static_cast<std::size_t>(i)];
        pos += 4;
        if (pos + len > data.size())
            throw Error(std::string(file) + " is corrupt: field runs past end of file");
        std::string_view out(reinterpret_cast<const char*>(data.data()) + pos, len);
        pos += len;
        return out;
    }

    std::uint64_t next_u64(std::string_view file) {
        auto f = next(file);
        if (f.size() != 8)
            throw Error(std::string(file) + " is corrupt: expected an 8-byte count field");
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i)
            v = (v << 8) | static_cast<std::uint8_t>(f[static_cast<std::size_t>(i)]);
        return v;
    }
};

std::string next_epoch_token(std::uint64_t n) {
    auto now = std::chrono::system_clock::now().time_since_epoch();
    auto seconds = std::chrono::duration_cast<std::chrono::seconds>(now).count();
    return "epoch-" + std::to_string(n) + "-" + std::to_string(seconds);
}

} // namespace

std::string_view to_string(CmpOp op) {
    switch (op) {
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Eq: return "=";
    case CmpOp::Ge: return ">=";
    case CmpOp::Gt: return ">";
    }
    return "=";
}

ValuePredicate ValuePredicate::equals(std::string value) {
    ValuePredicate p;
    p.kind = Kind::Exact;
    p.exact = std::move(value);
    return p;
}

ValuePredicate ValuePredicate::numeric(CmpOp op, double threshold) {
    ValuePredicate p;
    p.kind = Kind::Numeric;
    p.op = op;
    p.threshold = threshold;
    return p;
}

bool ValuePredicate::matches(std::string_view value, std::uint64_t* numeric_skips) const {
    switch (kind) {
    case Kind::Exists:
        return true;
    case Kind::Exact:
        return value == exact;
    case Kind::Numeric: {
        auto parsed = parse_decimal(value);
        if (!parsed) {
            if (numeric_skips != nullptr)
                ++*numeric_skips;
            return false;
        }
        switch (op) {
        case CmpOp::Lt: return *parsed < threshold;
        case CmpOp::Le: return *parsed <= threshold;
        case CmpOp::Eq: return *parsed == threshold;
        case CmpOp::Ge: return *parsed >= threshold;
        case CmpOp::Gt: return *parsed > threshold;
        }
        return false;
    }
    }
    return false;
}

ColumnKey filepath_column() {
    return ColumnKey::make(ColumnKind::Metadata, "File", "filepath");
}

ColumnKey filesize_column() {
    return ColumnKey::make(ColumnKind::Metadata, "File", "filesize");
}

ColumnKey dataset_column() {
    return ColumnKey::make(ColumnKind::Metadata, "File", "dataset");
}

ColumnKey chunk_column() {
    return ColumnKey::make(ColumnKind::Metadata, "File", "chunk");
}

DocumentParseError::DocumentParseError(std::string doc_path, std::size_t byte_offset,
                                       const std::string& message)
    : ValidationError(message), doc_path_(std::move(doc_path)), byte_offset_(byte_offset) {}

struct IndexStore::Impl {
    mutable std::shared_mutex mutex;
    std::map<ContentHash, std::map<ColumnKey, std::string>> main;
    std::map<ColumnKey, std::map<ContentHash, std::string>> transpose;
    std::map<ColumnKey, std::uint64_t> degrees;
    std::uint64_t triples = 0;
    std::optional<std::filesystem::path> dir;
    mutable std::atomic<std::uint64_t> listings{0};

    void load();
    void persist() const;
};

void IndexStore::Impl::load() {
    auto main_path = *dir / kMainFile;
    if (!std::filesystem::exists(main_path))
        return;

    auto main_bytes = read_file_bytes(main_path);
    FieldCursor cur{main_bytes};
    while (!cur.done()) {
        auto row = ContentHash::from_hex(cur.next(kMainFile));
        auto column = parse_column(cur.next(kMainFile));
        main[row][column] = std::string(cur.next(kMainFile));
        ++triples;
    }

    auto transpose_bytes = read_file_bytes(*dir / kTransposeFile);
    FieldCursor tcur{transpose_bytes};
    std::uint64_t transpose_triples = 0;
    while (!tcur.done()) {
        auto column = parse_column(tcur.next(kTransposeFile));
        auto row = ContentHash::from_hex(tcur.next(kTransposeFile));
        transpose[column][row] = std::string(tcur.next(kTransposeFile));
        ++transpose_triples;
    }
    if (transpose_triples != triples)
        throw Error("index is corrupt: main and transpose tables disagree on size");

    auto degree_bytes = read_file_bytes(*dir / kDegreeFile);
    FieldCursor dcur{degree_bytes};
    while (!dcur.done()) {
        auto column = parse_column(dcur.next(kDegreeFile));
        degrees[column] = dcur.next_u64(kDegreeFile);
    }

    json meta = json::parse(read_file_text(*dir / kMetaFile), nullptr, false);
    if (meta.is_discarded() || !meta.is_object() || !meta.contains("triple_count") ||
        !meta["triple_count"].is_number_unsigned())
        throw Error("index.meta.json is corrupt");
    if (meta["triple_count"].get<std::uint64_t>() != triples)
        throw Error("index is corrupt: meta triple_count disagrees with main table");
}

void IndexStore::Impl::persist() const {
    std::filesystem::create_directories(*dir);

    std::vector<std::uint8_t> main_bytes;
    for (const auto& [row, cells] : main) {
        for (const auto& [column, value] : cells) {
            put_field(main_bytes, row.hex);
            put_field(main_bytes, render_column(column));
            put_field(main_bytes, value);
        }
    }
    std::vector<std::uint8_t> transpose_bytes;
    for (const auto& [column, cells] : transpose) {
        auto rendered = render_column(column);
        for (const auto& [row, value] : cells) {
            put_field(transpose_bytes, rendered);
            put_field(transpose_bytes, row.hex);
            put_field(transpose_bytes, value);
        }
    }
    std::vector<std::uint8_t> degree_bytes;
    for (const auto& [column, count] : degrees) {
        put_field(degree_bytes, render_column(column));
        put_field_u64(degree_bytes, count);
    }
    auto now_seconds = std::chrono::duration_cast<std::chrono::seconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
    json meta{{"format_version", kIndexFormatVersion},
              {"triple_count", triples},
              {"build_time", format_timestamp(now_seconds)}};

    // Stage everything, then swap names; a crash mid-write leaves the
    // previous files in place.
    auto stage = [&](std::string_view file, const std::vector<std::uint8_t>& bytes) {
        write_file_bytes(*dir / (std::string(file) + ".tmp"), bytes);
    };
    stage(kMainFile, main_bytes);
    stage(kTransposeFile, transpose_bytes);
    stage(kDegreeFile, degree_bytes);
    write_file_text(*dir / (std::string(kMetaFile) + ".tmp"), meta.dump(2) + "\n");
    for (std::string_view file : {kMainFile, kTransposeFile, kDegreeFile, kMetaFile})
        std::filesystem::rename(*dir / (std::string(file) + ".tmp"), *dir / file);
}

IndexStore::IndexStore() : impl_(std::make_unique<Impl>()) {}
IndexStore::~IndexStore() = default;
IndexStore::IndexStore(IndexStore&&) noexcept = default;
IndexStore& IndexStore::operator=(IndexStore&&) noexcept = default;

IndexStore IndexStore::in_memory() {
    return IndexStore();
}

IndexStore IndexStore::open(const std::filesystem::path& dir) {
    IndexStore store;
    store.impl_->dir = dir;
    store.impl_->load();
    return store;
}

IngestReport IndexStore::ingest_triples(std::vector<Triple> triples) {
    for (const auto& t : triples) {
        ContentHash::from_hex(t.row.hex);
        ColumnKey::make(t.column.kind, t.column.source, t.column.field);
        if (t.value.find('\0') != std::string::npos)
            throw ValidationError("cell value for " + render_column(t.column) +
                                  " contains a NUL byte");
    }

    std::unique_lock lock(impl_->mutex);

    struct Undo {
        ContentHash row;
        ColumnKey column;
        std::optional<std::string> old_value; // nullopt: the cell was absent
    };
    std::vector<Undo> undo;
    undo.reserve(triples.size());

    IngestReport report;
    for (auto& t : triples) {
        auto& row_cells = impl_->main[t.row];
        auto it = row_cells.find(t.column);
        if (it == row_cells.end()) {
            undo.push_back(Undo{t.row, t.column, std::nullopt});
            row_cells.emplace(t.column, t.value);
            impl_->transpose[t.column].emplace(t.row, std::move(t.value));
            impl_->degrees[t.column] += 1;
            impl_->triples += 1;
            report.inserted += 1;
        } else {
            undo.push_back(Undo{t.row, t.column, it->second});
            it->second = t.value;
            impl_->transpose[t.column][t.row] = std::move(t.value);
            report.overwritten += 1;
        }
    }

    if (impl_->dir) {
        try {
            impl_->persist();
        } catch (...) {
            // Put the in-memory state back in line with what is on disk.
            for (auto rit = undo.rbegin(); rit != undo.rend(); ++rit) {
                if (rit->old_value) {
                    impl_->main[rit->row][rit->column] = *rit->old_value;
                    impl_->transpose[rit->column][rit->row] = std::move(*rit->old_value);
                } else {
                    auto& cells = impl_->main[rit->row];
                    cells.erase(rit->column);
                    if (cells.empty())
                        impl_->main.erase(rit->row);
                    auto& mirror = impl_->transpose[rit->column];
                    mirror.erase(rit->row);
                    if (mirror.empty())
                        impl_->transpose.erase(rit->column);
                    auto dit = impl_->degrees.find(rit->column);
                    if (dit != impl_->degrees.end() && --dit->second == 0)
                        impl_->degrees.erase(dit);
                    impl_->triples -= 1;
                }
            }
            throw;
        }
    }
    return report;
}

std::vector<std::pair<ColumnKey, std::string>>
IndexStore::row_query(const ContentHash& row) const {
    std::shared_lock lock(impl_->mutex);
    std::vector<std::pair<ColumnKey, std::string>> out;
    auto it = impl_->main.find(row);
    if (it == impl_->main.end())
        return out;
    out.reserve(it->second.size());
    for (const auto& [column, value] : it->second)
        out.emplace_back(column, value);
    return out;
}

ColumnQueryResult IndexStore::column_query(const ColumnKey& column,
                                           const std::optional<ValuePredicate>& predicate) const {
    std::shared_lock lock(impl_->mutex);
    ColumnQueryResult result;
    auto it = impl_->transpose.find(column);
    if (it == impl_->transpose.end())
        return result;
    for (const auto& [row, value] : it->second) {
        ++result.cells_scanned;
        if (!predicate || predicate->matches(value, &result.numeric_skips))
            result.matches.push_back(CellMatch{row, value});
    }
    return result;
}

std::vector<std::pair<ColumnKey, std::uint64_t>>
IndexStore::column_prefix_query(ColumnKind kind, std::string_view source) const {
    std::shared_lock lock(impl_->mutex);
    std::vector<std::pair<ColumnKey, std::uint64_t>> out;
    ColumnKey probe{kind, std::string(source), ""};
    for (auto it = impl_->degrees.lower_bound(probe); it != impl_->degrees.end(); ++it) {
        if (it->first.kind != kind || it->first.source != source)
            break;
        out.emplace_back(it->first, it->second);
    }
    return out;
}

std::uint64_t IndexStore::degree(const ColumnKey& column) const {
    std::shared_lock lock(impl_->mutex);
    auto it = impl_->degrees.find(column);
    return it == impl_->degrees.end() ? 0 : it->second;
}

std::optional<std::string> IndexStore::get_cell(const ContentHash& row,
                                                const ColumnKey& column) const {
    std::shared_lock lock(impl_->mutex);
    auto it = impl_->main.find(row);
    if (it == impl_->main.end())
        return std::nullopt;
    auto cit = it->second.find(column);
    if (cit == it->second.end())
        return std::nullopt;
    return cit->second;
}

std::uint64_t IndexStore::triple_count() const {
    std::shared_lock lock(impl_->mutex);
    return impl_->triples;
}

std::uint64_t IndexStore::row_count() const {
    std::shared_lock lock(impl_->mutex);
    return impl_->main.size();
}

void IndexStore::for_each_cell(
    const std::function<void(const ContentHash&, const ColumnKey&, const std::string&)>& fn)
    const {
    std::shared_lock lock(impl_->mutex);
    for (const auto& [row, cells] : impl_->main)
        for (const auto& [column, value] : cells)
            fn(row, column, value);
}

Listing IndexStore::list_file_refs() const {
    std::shared_lock lock(impl_->mutex);
    std::uint64_t n = impl_->listings.fetch_add(1) + 1;

    Listing listing;
    listing.epoch = next_epoch_token(n);
    ColumnKey path_col = filepath_column();
    ColumnKey loc_col = chunk_column();
    for (const auto& [row, cells] : impl_->main) {
        auto pit = cells.find(path_col);
        auto lit = cells.find(loc_col);
        if (pit == cells.end() || lit == cells.end())
            continue;
        auto sep = lit->second.find(':');
        if (sep == std::string::npos)
            continue; // not locatable; locate() reports these individually
        listing.refs.push_back(FileRef{row, lit->second.substr(0, sep),
                                       lit->second.substr(sep + 1)});
    }
    return listing;
}

std::uint64_t IndexStore::listings_performed() const {
    return impl_->listings.load();
}

namespace {

std::string doc_label(const std::filesystem::path& chunk_file, std::string_view doc) {
    return chunk_file.filename().string() + ":" + std::string(doc);
}

// The document schemas are strict: objects where objects are expected,
// strings (or, for annotations, numbers and arrays) at the leaves.
const json& expect_object(const json& j, const std::string& doc, const std::string& what) {
    if (!j.is_object())
        throw DocumentParseError(doc, 0, doc + ": " + what + " must be a JSON object");
    return j;
}

std::string annotation_value(const json& v, const std::string& doc, const std::string& what) {
    if (v.is_string())
        return v.get<std::string>();
    if (v.is_number_integer())
        return std::to_string(v.get<std::int64_t>());
    if (v.is_number_unsigned())
        return std::to_string(v.get<std::uint64_t>());
    if (v.is_number_float())
        return format_decimal(v.get<double>());
    if (v.is_array())
        return v.dump();
    throw DocumentParseError(doc, 0,
                             doc + ": " + what +
                                 " must be a string, number, or array");
}

struct ChunkTriples {
    std::vector<Triple> triples;
    std::uint64_t doc_entries_skipped = 0;
};

ChunkTriples triples_for_chunk(const std::filesystem::path& chunk_file) {
    ChunkReader reader(std::make_shared<FileRandomAccessSource>(chunk_file));
    const ChunkManifest& manifest = reader.manifest();

    std::string chunk_id = chunk_file.filename().string();
    if (chunk_id.ends_with(kChunkFileSuffix))
        chunk_id.resize(chunk_id.size() - kChunkFileSuffix.size());

    std::map<std::string_view, const ManifestEntry*> by_path;
    ChunkTriples out;
    for (const auto& entry : manifest.entries) {
        by_path.emplace(entry.path, &entry);
        out.triples.push_back(Triple{entry.sha1, filepath_column(), entry.path});
        out.triples.push_back(
            Triple{entry.sha1, filesize_column(), std::to_string(entry.length)});
        out.triples.push_back(
            Triple{entry.sha1, chunk_column(), chunk_id + ":" + entry.path});
    }

    auto hash_of = [&](std::string_view path) -> const ContentHash* {
        auto it = by_path.find(path);
        return it == by_path.end() ? nullptr : &it->second->sha1;
    };

    if (auto doc_text = reader.read_metadata_doc()) {
        std::string doc = doc_label(chunk_file, kMetadataDocPath);
        json parsed;
        try {
            parsed = json::parse(*doc_text);
        } catch (const json::parse_error& e) {
            throw DocumentParseError(doc, e.byte, doc + ": " + e.what());
        }
        expect_object(parsed, doc, "document root");

        // defaults tag every file in the chunk; per-file entries override
        // by coming later in the triple batch (last write wins).
        if (parsed.contains("defaults")) {
            const json& defaults = expect_object(parsed["defaults"], doc, "defaults");
            for (const auto& [source, fields] : defaults.items()) {
                const json& fo = expect_object(fields, doc, "defaults." + source);
                for (const auto& [field, value] : fo.items()) {
                    if (!value.is_string())
                        throw DocumentParseError(doc, 0,
                                                 doc + ": defaults." + source + "." + field +
                                                     " must be a string");
                    ColumnKey column =
                        ColumnKey::make(ColumnKind::Metadata, source, field);
                    for (const auto& entry : manifest.entries)
                        out.triples.push_back(
                            Triple{entry.sha1, column, value.get<std::string>()});
                }
            }
        }
        if (parsed.contains("files")) {
            const json& files = expect_object(parsed["files"], doc, "files");
            for (const auto& [path, sources] : files.items()) {
                const ContentHash* row = hash_of(path);
                if (row == nullptr) {
                    ++out.doc_entries_skipped;
                    continue;
                }
                const json& so = expect_object(sources, doc, "files." + path);
                for (const auto& [source, fields] : so.items()) {
                    const json& fo =
                        expect_object(fields, doc, "files." + path + "." + source);
                    for (const auto& [field, value] : fo.items()) {
                        if (!value.is_string())
                            throw DocumentParseError(doc, 0,
                                                     doc + ": files." + path + "." + source +
                                                         "." + field + " must be a string");
                        out.triples.push_back(
                            Triple{*row, ColumnKey::make(ColumnKind::Metadata, source, field),
                                   value.get<std::string>()});
                    }
                }
            }
        }
    }

    if (auto doc_text = reader.read_annotations_doc()) {
        std::string doc = doc_label(chunk_file, kAnnotationsDocPath);
        json parsed;
        try {
            parsed = json::parse(*doc_text);
        } catch (const json::parse_error& e) {
            throw DocumentParseError(doc, e.byte, doc + ": " + e.what());
        }
        expect_object(parsed, doc, "document root");

        if (parsed.contains("files")) {
            const json& files = expect_object(parsed["files"], doc, "files");
            for (const auto& [path, kinds] : files.items()) {
                const ContentHash* row = hash_of(path);
                if (row == nullptr) {
                    ++out.doc_entries_skipped;
                    continue;
                }
                const json& ko = expect_object(kinds, doc, "files." + path);
                for (const auto& [kind_name, sources] : ko.items()) {
                    ColumnKind kind;
                    if (kind_name == "machine")
                        kind = ColumnKind::AnnotationMachine;
                    else if (kind_name == "human")
                        kind = ColumnKind::AnnotationHuman;
                    else
                        throw DocumentParseError(
                            doc, 0,
                            doc + ": files." + path + " key '" + kind_name +
                                "' must be 'machine' or 'human'");
                    const json& so =
                        expect_object(sources, doc, "files." + path + "." + kind_name);
                    for (const auto& [source, fields] : so.items()) {
                        const json& fo = expect_object(
                            fields, doc, "files." + path + "." + kind_name + "." + source);
                        for (const auto& [field, value] : fo.items()) {
                            out.triples.push_back(Triple{
                                *row, ColumnKey::make(kind, source, field),
                                annotation_value(value, doc,
                                                 "files." + path + "." + kind_name + "." +
                                                     source + "." + field)});
                        }
                    }
                }
            }
        }
    }
    return out;
}

} // namespace

ChunkBuildReport build_from_chunks(IndexStore& store,
                                   const std::vector<std::filesystem::path>& chunk_files) {
    ChunkBuildReport report;
    // Same hash, different declared size means two distinct byte sequences
    // collided; refuse rather than silently merge rows.
    std::map<ContentHash, std::uint64_t> sizes_seen;

    for (const auto& chunk_file : chunk_files) {
        ChunkTriples chunk = triples_for_chunk(chunk_file);

        ColumnKey size_col = filesize_column();
        for (const auto& t : chunk.triples) {
            if (t.column != size_col)
                continue;
            std::uint64_t size = std::stoull(t.value);
            auto [it, inserted] = sizes_seen.emplace(t.row, size);
            if (!inserted && it->second != size)
                throw Error("hash collision: " + t.row.hex + " appears with sizes " +
                            std::to_string(it->second) + " and " + std::to_string(size));
            auto stored = store.get_cell(t.row, size_col);
            if (stored && *stored != t.value)
                throw Error("hash collision: " + t.row.hex + " is indexed with size " +
                            *stored + " but " + chunk_file.filename().string() +
                            " carries it with size " + t.value);
        }

        IngestReport ingest = store.ingest_triples(std::move(chunk.triples));
        report.chunks_ingested += 1;
        report.inserted += ingest.inserted;
        report.overwritten += ingest.overwritten;
        report.doc_entries_skipped += chunk.doc_entries_skipped;
    }
    return report;
}

} // namespace mediavault
