#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mediavault/model.hpp"

namespace mediavault {

struct Triple {
    ContentHash row;
    ColumnKey column;
    std::string value;
};

struct IngestReport {
    std::uint64_t inserted = 0;
    std::uint64_t overwritten = 0;
};

enum class CmpOp { Lt, Le, Eq, Ge, Gt };

std::string_view to_string(CmpOp op);

// Cell filter: existence, exact string match, or a numeric comparison.
// Numeric comparison skips cells whose value does not parse as a decimal.
struct ValuePredicate {
    enum class Kind { Exists, Exact, Numeric };

    Kind kind = Kind::Exists;
    std::string exact;
    CmpOp op = CmpOp::Eq;
    double threshold = 0;

    static ValuePredicate exists() { return {}; }
    static ValuePredicate equals(std::string value);
    static ValuePredicate numeric(CmpOp op, double threshold);

    bool matches(std::string_view value, std::uint64_t* numeric_skips = nullptr) const;
};

struct CellMatch {
    ContentHash row;
    std::string value;
};

struct ColumnQueryResult {
    std::vector<CellMatch> matches; // ordered by row hash
    std::uint64_t cells_scanned = 0;
    std::uint64_t numeric_skips = 0;
};

// A file the store knows how to find: its hash plus the chunk that holds it.
struct FileRef {
    ContentHash hash;
    std::string chunk_id;
    std::string logical_path;

    auto operator<=>(const FileRef&) const = default;
};

struct Listing {
    std::vector<FileRef> refs; // ordered by hash
    std::string epoch;         // identifies this enumeration pass
};

// Well-known columns the ingest pipeline writes for every file.
ColumnKey filepath_column();
ColumnKey filesize_column();
ColumnKey dataset_column();
ColumnKey chunk_column();

class DocumentParseError : public ValidationError {
public:
    DocumentParseError(std::string doc_path, std::size_t byte_offset,
                       const std::string& message);
    const std::string& doc_path() const { return doc_path_; }
    std::size_t byte_offset() const { return byte_offset_; }

private:
    std::string doc_path_;
    std::size_t byte_offset_;
};

// Triple store keyed by content hash, with a column-to-row transpose and
// per-column distinct-row degree counts kept in lockstep. Writes are
// last-write-wins per cell. All reads may run concurrently; writes are
// exclusive.
class IndexStore {
public:
    static IndexStore in_memory();
    // Loads an existing persisted store, or starts an empty one that will
    // persist into `dir` on the next ingest.
    static IndexStore open(const std::filesystem::path& dir);

    ~IndexStore();
    IndexStore(IndexStore&&) noexcept;
    IndexStore& operator=(IndexStore&&) noexcept;

    // Applies a batch atomically: either every triple lands and the result
    // is persisted, or the store is left as it was.
    IngestReport ingest_triples(std::vector<Triple> triples);

    std::vector<std::pair<ColumnKey, std::string>> row_query(const ContentHash& row) const;
    ColumnQueryResult column_query(const ColumnKey& column,
                                   const std::optional<ValuePredicate>& predicate = {}) const;
    // All columns with the given kind and source, each with its degree.
    std::vector<std::pair<ColumnKey, std::uint64_t>>
    column_prefix_query(ColumnKind kind, std::string_view source) const;

    std::uint64_t degree(const ColumnKey& column) const;
    std::optional<std::string> get_cell(const ContentHash& row, const ColumnKey& column) const;

    std::uint64_t triple_count() const;
    std::uint64_t row_count() const;

    void for_each_cell(
        const std::function<void(const ContentHash&, const ColumnKey&, const std::string&)>& fn)
        const;

    // One full enumeration of every file the store can locate. Each call
    // counts as one listing pass; shard planning is expected to call this
    // once and share the result.
    Listing list_file_refs() const;
    std::uint64_t listings_performed() const;

private:
    IndexStore();
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct ChunkBuildReport {
    std::uint64_t chunks_ingested = 0;
    std::uint64_t inserted = 0;
    std::uint64_t overwritten = 0;
    std::uint64_t doc_entries_skipped = 0;
};

// Ingests the manifests and sidecar documents of the given chunks. Document
// entries naming files that are not present in the same chunk are skipped
// (a split partition carries its documents in every part). Two files with
// the same hash but different sizes abort the batch.
ChunkBuildReport build_from_chunks(IndexStore& store,
                                   const std::vector<std::filesystem::path>& chunk_files);

} // namespace mediavault
