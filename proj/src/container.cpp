#include "mediavault/container.hpp"

#include <algorithm>
#include <cstring>

#include "json.hpp"

namespace mediavault {

namespace {

using nlohmann::json;

constexpr std::uint64_t kHeaderBytes = 16;
constexpr std::uint64_t kFooterBytes = 24;
constexpr std::size_t kStreamBufferBytes = 256 * 1024;

void put_u32_le(std::uint8_t* out, std::uint32_t v) {
    out[0] = static_cast<std::uint8_t>(v);
    out[1] = static_cast<std::uint8_t>(v >> 8);
    out[2] = static_cast<std::uint8_t>(v >> 16);
    out[3] = static_cast<std::uint8_t>(v >> 24);
}

void put_u64_le(std::uint8_t* out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t get_u32_le(const std::uint8_t* in) {
    return static_cast<std::uint32_t>(in[0]) | (static_cast<std::uint32_t>(in[1]) << 8) |
           (static_cast<std::uint32_t>(in[2]) << 16) | (static_cast<std::uint32_t>(in[3]) << 24);
}

std::uint64_t get_u64_le(const std::uint8_t* in) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i)
        v = (v << 8) | in[i];
    return v;
}

bool is_reserved_path(std::string_view path) {
    return path == kMetadataDocPath || path == kAnnotationsDocPath;
}

std::uint64_t align_up(std::uint64_t offset, std::uint64_t alignment) {
    std::uint64_t rem = offset % alignment;
    return rem == 0 ? offset : offset + (alignment - rem);
}

} // namespace

const ManifestEntry* ChunkManifest::find(std::string_view path) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), path,
                               [](const ManifestEntry& e, std::string_view p) {
                                   return e.path < p;
                               });
    if (it == entries.end() || it->path != path)
        return nullptr;
    return &*it;
}

HashMismatchError::HashMismatchError(std::string path, ContentHash expected, ContentHash actual)
    : ValidationError("hash mismatch for " + path + ": expected " + expected.hex + ", got " +
                      actual.hex),
      path_(std::move(path)), expected_(std::move(expected)), actual_(std::move(actual)) {}

namespace {

std::string unknown_path_message(const std::string& path,
                                 const std::vector<std::string>& neighbors) {
    std::string msg = "no entry named " + path;
    if (!neighbors.empty()) {
        msg += "; nearest stored paths:";
        for (const auto& n : neighbors)
            msg += " " + n;
    }
    return msg;
}

} // namespace

UnknownPathError::UnknownPathError(std::string path, std::vector<std::string> neighbors)
    : Error(unknown_path_message(path, neighbors)), path_(std::move(path)),
      neighbors_(std::move(neighbors)) {}

namespace {

struct PendingRow {
    std::string path;
    ByteSource* source = nullptr;
    // Data rows carry the declared record; document rows do not.
    const FileRecord* record = nullptr;
};

ManifestEntry stream_row(PendingRow& row, ByteSink& sink, std::uint64_t offset) {
    ManifestEntry entry;
    entry.path = row.path;
    entry.offset = offset;

    Sha1Digest digest;
    std::vector<std::uint8_t> buf(kStreamBufferBytes);
    std::uint64_t total = 0;
    for (;;) {
        std::size_t n = row.source->read(buf);
        if (n == 0)
            break;
        std::span<const std::uint8_t> got(buf.data(), n);
        digest.update(got);
        sink.write(got);
        total += n;
    }
    entry.length = total;
    ContentHash computed = digest.finish();

    if (row.record != nullptr) {
        if (total != row.record->size_bytes)
            throw ValidationError(row.path + " streamed " + std::to_string(total) +
                                  " bytes but the record declares " +
                                  std::to_string(row.record->size_bytes));
        if (!row.record->hash.hex.empty() && row.record->hash != computed)
            throw HashMismatchError(row.path, row.record->hash, computed);
    }
    entry.sha1 = computed;
    return entry;
}

json manifest_to_json(const PartitionId& partition, const std::vector<ManifestEntry>& rows,
                      bool has_metadata, bool has_annotations) {
    json entries = json::array();
    for (const auto& e : rows) {
        entries.push_back(json{{"path", e.path},
                               {"offset", e.offset},
                               {"length", e.length},
                               {"sha1", e.sha1.hex}});
    }
    return json{{"partition", partition.render()},
                {"entries", std::move(entries)},
                {"docs", json{{"metadata", has_metadata}, {"annotations", has_annotations}}}};
}

} // namespace

ChunkManifest pack_chunk(const PartitionId& partition, std::vector<SourcedFile> files,
                         const std::optional<std::string>& metadata_doc,
                         const std::optional<std::string>& annotations_doc, ByteSink& sink) {
    std::vector<PendingRow> rows;
    rows.reserve(files.size() + 2);
    for (auto& f : files) {
        validate_logical_path(f.record.logical_path);
        if (is_reserved_path(f.record.logical_path))
            throw ValidationError(f.record.logical_path + " is a reserved document path");
        if (partition_of(f.record.capture_time) != partition)
            throw ValidationError(f.record.logical_path + " does not belong to partition " +
                                  partition.render());
        if (f.source == nullptr)
            throw ValidationError(f.record.logical_path + " has no byte source");
        rows.push_back(PendingRow{f.record.logical_path, f.source.get(), &f.record});
    }

    MemoryByteSource metadata_source(metadata_doc.value_or(""));
    MemoryByteSource annotations_source(annotations_doc.value_or(""));
    if (metadata_doc)
        rows.push_back(PendingRow{std::string(kMetadataDocPath), &metadata_source, nullptr});
    if (annotations_doc)
        rows.push_back(PendingRow{std::string(kAnnotationsDocPath), &annotations_source, nullptr});

    std::sort(rows.begin(), rows.end(),
              [](const PendingRow& a, const PendingRow& b) { return a.path < b.path; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].path == rows[i - 1].path)
            throw DuplicatePathError("duplicate logical path " + rows[i].path);
    }

    std::uint8_t header[kHeaderBytes];
    std::memcpy(header, kChunkMagic, 8);
    put_u32_le(header + 8, kChunkFormatVersion);
    put_u32_le(header + 12, 0);
    sink.write(std::span<const std::uint8_t>(header, sizeof(header)));
    std::uint64_t offset = kHeaderBytes;

    std::vector<ManifestEntry> stored;
    stored.reserve(rows.size());
    std::vector<std::uint8_t> zeros(kBlobAlignment, 0);
    for (auto& row : rows) {
        std::uint64_t aligned = align_up(offset, kBlobAlignment);
        if (aligned > offset) {
            sink.write(std::span<const std::uint8_t>(zeros.data(), aligned - offset));
            offset = aligned;
        }
        ManifestEntry entry = stream_row(row, sink, offset);
        offset += entry.length;
        stored.push_back(std::move(entry));
    }

    std::string manifest_text =
        manifest_to_json(partition, stored, metadata_doc.has_value(), annotations_doc.has_value())
            .dump();
    std::uint64_t manifest_offset = offset;
    sink.write(manifest_text);

    std::uint8_t footer[kFooterBytes];
    put_u64_le(footer, manifest_offset);
    put_u64_le(footer + 8, manifest_text.size());
    std::memcpy(footer + 16, kChunkMagic, 8);
    sink.write(std::span<const std::uint8_t>(footer, sizeof(footer)));
    sink.flush();

    ChunkManifest result;
    result.partition = partition;
    result.has_metadata_doc = metadata_doc.has_value();
    result.has_annotations_doc = annotations_doc.has_value();
    for (auto& e : stored) {
        if (!is_reserved_path(e.path))
            result.entries.push_back(std::move(e));
    }
    return result;
}

struct ChunkReader::Impl {
    std::shared_ptr<RandomAccessSource> source;
    ChunkManifest manifest;
    // Every stored row (data entries plus reserved documents), path-sorted.
    std::vector<ManifestEntry> rows;
    std::optional<ManifestEntry> metadata_entry;
    std::optional<ManifestEntry> annotations_entry;

    const ManifestEntry* find_row(std::string_view path) const {
        auto it = std::lower_bound(rows.begin(), rows.end(), path,
                                   [](const ManifestEntry& e, std::string_view p) {
                                       return e.path < p;
                                   });
        if (it == rows.end() || it->path != path)
            return nullptr;
        return &*it;
    }

    std::vector<std::string> neighbors_of(std::string_view path) const {
        auto it = std::lower_bound(rows.begin(), rows.end(), path,
                                   [](const ManifestEntry& e, std::string_view p) {
                                       return e.path < p;
                                   });
        std::vector<std::string> out;
        if (it != rows.begin())
            out.push_back(std::prev(it)->path);
        if (it != rows.end())
            out.push_back(it->path);
        return out;
    }

    std::vector<std::uint8_t> read_row(const ManifestEntry& entry, bool verify) const {
        std::vector<std::uint8_t> data(entry.length);
        if (!data.empty())
            source->pread(entry.offset, data);
        if (verify) {
            ContentHash actual = content_hash(data);
            if (actual != entry.sha1)
                throw HashMismatchError(entry.path, entry.sha1, actual);
        }
        return data;
    }
};

namespace {

[[noreturn]] void corrupt(const std::string& what) {
    throw CorruptContainerError("corrupt container: " + what);
}

ManifestEntry entry_from_json(const json& j) {
    if (!j.is_object() || !j.contains("path") || !j.contains("offset") ||
        !j.contains("length") || !j.contains("sha1") || !j["path"].is_string() ||
        !j["offset"].is_number_unsigned() || !j["length"].is_number_unsigned() ||
        !j["sha1"].is_string())
        corrupt("malformed manifest entry");
    ManifestEntry e;
    e.path = j["path"].get<std::string>();
    e.offset = j["offset"].get<std::uint64_t>();
    e.length = j["length"].get<std::uint64_t>();
    try {
        e.sha1 = ContentHash::from_hex(j["sha1"].get<std::string>());
    } catch (const ValidationError& err) {
        corrupt(std::string("bad entry hash: ") + err.what());
    }
    return e;
}

} // namespace

ChunkReader::ChunkReader(std::shared_ptr<RandomAccessSource> source)
    : impl_(std::make_unique<Impl>()) {
    impl_->source = std::move(source);
    auto& src = *impl_->source;

    std::uint64_t size = src.size();
    if (size < kHeaderBytes + kFooterBytes)
        corrupt("file shorter than header plus footer");

    std::uint8_t header[kHeaderBytes];
    src.pread(0, header);
    if (std::memcmp(header, kChunkMagic, 8) != 0)
        corrupt("bad header magic");
    std::uint32_t version = get_u32_le(header + 8);
    if (version != kChunkFormatVersion)
        corrupt("unsupported format version " + std::to_string(version));

    std::uint8_t footer[kFooterBytes];
    src.pread(size - kFooterBytes, footer);
    if (std::memcmp(footer + 16, kChunkMagic, 8) != 0)
        corrupt("bad footer magic");
    std::uint64_t manifest_offset = get_u64_le(footer);
    std::uint64_t manifest_length = get_u64_le(footer + 8);
    if (manifest_offset < kHeaderBytes || manifest_length > size ||
        manifest_offset + manifest_length > size - kFooterBytes)
        corrupt("manifest offset outside the file");

    std::string manifest_text(manifest_length, '\0');
    src.pread(manifest_offset,
              std::span<std::uint8_t>(reinterpret_cast<std::uint8_t*>(manifest_text.data()),
                                      manifest_text.size()));
    json doc = json::parse(manifest_text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        corrupt("manifest is not valid JSON");
    if (!doc.contains("partition") || !doc["partition"].is_string() ||
        !doc.contains("entries") || !doc["entries"].is_array() || !doc.contains("docs") ||
        !doc["docs"].is_object())
        corrupt("manifest is missing required fields");

    try {
        impl_->manifest.partition = PartitionId::parse(doc["partition"].get<std::string>());
    } catch (const ValidationError& err) {
        corrupt(std::string("bad partition: ") + err.what());
    }
    const json& docs = doc["docs"];
    if (!docs.contains("metadata") || !docs["metadata"].is_boolean() ||
        !docs.contains("annotations") || !docs["annotations"].is_boolean())
        corrupt("manifest docs flags malformed");
    impl_->manifest.has_metadata_doc = docs["metadata"].get<bool>();
    impl_->manifest.has_annotations_doc = docs["annotations"].get<bool>();

    for (const json& je : doc["entries"]) {
        ManifestEntry e = entry_from_json(je);
        if (e.offset < kHeaderBytes || e.length > size || e.offset + e.length > manifest_offset)
            corrupt("entry " + e.path + " lies outside the blob region");
        impl_->rows.push_back(std::move(e));
    }
    std::sort(impl_->rows.begin(), impl_->rows.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
    for (std::size_t i = 1; i < impl_->rows.size(); ++i) {
        if (impl_->rows[i].path == impl_->rows[i - 1].path)
            corrupt("duplicate entry path " + impl_->rows[i].path);
    }

    for (const auto& e : impl_->rows) {
        if (e.path == kMetadataDocPath)
            impl_->metadata_entry = e;
        else if (e.path == kAnnotationsDocPath)
            impl_->annotations_entry = e;
        else
            impl_->manifest.entries.push_back(e);
    }
    if (impl_->manifest.has_metadata_doc != impl_->metadata_entry.has_value())
        corrupt("metadata doc flag disagrees with stored entries");
    if (impl_->manifest.has_annotations_doc != impl_->annotations_entry.has_value())
        corrupt("annotations doc flag disagrees with stored entries");
}

ChunkReader::~ChunkReader() = default;
ChunkReader::ChunkReader(ChunkReader&&) noexcept = default;
ChunkReader& ChunkReader::operator=(ChunkReader&&) noexcept = default;

const ChunkManifest& ChunkReader::manifest() const {
    return impl_->manifest;
}

std::vector<std::uint8_t> ChunkReader::read_entry(std::string_view path, bool verify) const {
    const ManifestEntry* entry = impl_->find_row(path);
    if (entry == nullptr)
        throw UnknownPathError(std::string(path), impl_->neighbors_of(path));
    return impl_->read_row(*entry, verify);
}

std::optional<std::string> ChunkReader::read_metadata_doc() const {
    if (!impl_->metadata_entry)
        return std::nullopt;
    auto bytes = impl_->read_row(*impl_->metadata_entry, true);
    return std::string(bytes.begin(), bytes.end());
}

std::optional<std::string> ChunkReader::read_annotations_doc() const {
    if (!impl_->annotations_entry)
        return std::nullopt;
    auto bytes = impl_->read_row(*impl_->annotations_entry, true);
    return std::string(bytes.begin(), bytes.end());
}

VerifyReport ChunkReader::verify_chunk() const {
    VerifyReport report;
    for (const auto& entry : impl_->rows) {
        std::vector<std::uint8_t> data(entry.length);
        if (!data.empty())
            impl_->source->pread(entry.offset, data);
        ContentHash actual = content_hash(data);
        if (!is_reserved_path(entry.path))
            ++report.entries_checked;
        if (actual != entry.sha1)
            report.hash_failures.push_back(HashFailure{entry.path, entry.sha1, actual});
    }
    return report;
}

ChunkManifest list_entries(const std::filesystem::path& chunk_file) {
    ChunkReader reader(std::make_shared<FileRandomAccessSource>(chunk_file));
    return reader.manifest();
}

std::vector<std::uint8_t> read_entry(const std::filesystem::path& chunk_file,
                                     std::string_view path, bool verify) {
    ChunkReader reader(std::make_shared<FileRandomAccessSource>(chunk_file));
    return reader.read_entry(path, verify);
}

VerifyReport verify_chunk(const std::filesystem::path& chunk_file) {
    ChunkReader reader(std::make_shared<FileRandomAccessSource>(chunk_file));
    return reader.verify_chunk();
}

std::vector<std::vector<FileRecord>> plan_chunk_split(std::vector<FileRecord> records,
                                                      std::uint64_t target_bytes) {
    std::sort(records.begin(), records.end(),
              [](const FileRecord& a, const FileRecord& b) {
                  return a.logical_path < b.logical_path;
              });
    std::vector<std::vector<FileRecord>> groups;
    std::uint64_t group_bytes = 0;
    for (auto& r : records) {
        if (groups.empty() || group_bytes >= target_bytes) {
            groups.emplace_back();
            group_bytes = 0;
        }
        group_bytes += r.size_bytes;
        groups.back().push_back(std::move(r));
    }
    return groups;
}

std::string chunk_id_for(const PartitionId& partition, std::size_t part_index,
                         std::size_t part_count) {
    if (part_count == 0 || part_index >= part_count)
        throw ValidationError("part index " + std::to_string(part_index) +
                              " out of range for " + std::to_string(part_count) + " parts");
    std::string id = partition.render();
    if (part_count > 1)
        id += ".part" + std::to_string(part_index + 1);
    return id;
}

} // namespace mediavault
