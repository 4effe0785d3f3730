#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mediavault/io.hpp"
#include "mediavault/model.hpp"

namespace mediavault {

inline constexpr char kChunkMagic[8] = {'P', 'S', 'D', 'C', 'H', 'N', 'K', '1'};
inline constexpr std::uint32_t kChunkFormatVersion = 1;
inline constexpr std::uint64_t kBlobAlignment = 4096;
inline constexpr std::uint64_t kDefaultChunkTargetBytes = 512ull * 1024 * 1024;
inline constexpr std::string_view kMetadataDocPath = "_metadata.json";
inline constexpr std::string_view kAnnotationsDocPath = "_annotations.json";
inline constexpr std::string_view kChunkFileSuffix = ".chunk";

struct ManifestEntry {
    std::string path;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    ContentHash sha1;
};

// Parsed view of a chunk. entries lists data files only; the sidecar
// documents are exposed through the docs flags and the read_*_doc calls.
struct ChunkManifest {
    PartitionId partition;
    std::vector<ManifestEntry> entries;
    bool has_metadata_doc = false;
    bool has_annotations_doc = false;

    const ManifestEntry* find(std::string_view path) const;
};

class DuplicatePathError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class HashMismatchError : public ValidationError {
public:
    HashMismatchError(std::string path, ContentHash expected, ContentHash actual);
    const std::string& path() const { return path_; }
    const ContentHash& expected() const { return expected_; }
    const ContentHash& actual() const { return actual_; }

private:
    std::string path_;
    ContentHash expected_;
    ContentHash actual_;
};

class UnknownPathError : public Error {
public:
    UnknownPathError(std::string path, std::vector<std::string> neighbors);
    const std::string& path() const { return path_; }
    // Up to two lexicographically nearest stored paths, for error messages.
    const std::vector<std::string>& neighbors() const { return neighbors_; }

private:
    std::string path_;
    std::vector<std::string> neighbors_;
};

class CorruptContainerError : public Error {
public:
    using Error::Error;
};

// Streams files into one chunk. Every record must belong to `partition`,
// paths must be unique valid logical paths, and the two reserved document
// names cannot appear as data files. Byte counts are checked against the
// declared sizes and each stored blob is hashed while streaming.
ChunkManifest pack_chunk(const PartitionId& partition, std::vector<SourcedFile> files,
                         const std::optional<std::string>& metadata_doc,
                         const std::optional<std::string>& annotations_doc, ByteSink& sink);

struct HashFailure {
    std::string path;
    ContentHash expected;
    ContentHash actual;
};

struct VerifyReport {
    std::uint64_t entries_checked = 0;
    std::vector<HashFailure> hash_failures;

    bool ok() const { return hash_failures.empty(); }
};

class ChunkReader {
public:
    explicit ChunkReader(std::shared_ptr<RandomAccessSource> source);
    ~ChunkReader();
    ChunkReader(ChunkReader&&) noexcept;
    ChunkReader& operator=(ChunkReader&&) noexcept;

    const ChunkManifest& manifest() const;
    std::vector<std::uint8_t> read_entry(std::string_view path, bool verify = false) const;
    std::optional<std::string> read_metadata_doc() const;
    std::optional<std::string> read_annotations_doc() const;
    VerifyReport verify_chunk() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

ChunkManifest list_entries(const std::filesystem::path& chunk_file);
std::vector<std::uint8_t> read_entry(const std::filesystem::path& chunk_file,
                                     std::string_view path, bool verify = false);
VerifyReport verify_chunk(const std::filesystem::path& chunk_file);

// Splits one partition's records into chunk-sized groups: records are
// ordered by logical path, then cut greedily so a group is closed once its
// data bytes reach `target_bytes`. Every group gets at least one file, so a
// single file larger than the target still lands in its own group.
std::vector<std::vector<FileRecord>> plan_chunk_split(std::vector<FileRecord> records,
                                                      std::uint64_t target_bytes);

// "YYYY-MM" when the partition fits one chunk, "YYYY-MM.partN" otherwise
// (N is 1-based). part_index is 0-based into part_count.
std::string chunk_id_for(const PartitionId& partition, std::size_t part_index,
                         std::size_t part_count);

} // namespace mediavault
