#pragma once
// Core domain vocabulary shared by every subsystem: content hashes, the
// hierarchical column-key codec, temporal partitions, and file records.
// Everything here is a value type and every function is safe for
// unrestricted concurrent use.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "mediavault/errors.hpp"

namespace mediavault {

// 40-char lowercase hex SHA1 digest of a file's bytes. The universal row
// key: files are indexed by content, never by name or location, so equal
// bytes collapse onto one row. SHA1 acts as an identifier here, not a
// tamper-proof seal.
struct ContentHash {
    std::string hex;

    // Validates length and alphabet; uppercase digits are folded down.
    static ContentHash from_hex(std::string_view s);
    static ContentHash from_raw(std::span<const std::uint8_t, 20> digest);

    auto operator<=>(const ContentHash&) const = default;
};

ContentHash content_hash(std::span<const std::uint8_t> data);
ContentHash content_hash(std::string_view data);
std::array<std::uint8_t, 20> sha1_raw(std::span<const std::uint8_t> data);

// Incremental SHA1 for bytes that stream past exactly once. finish() and
// finish_raw() may be called a single time.
class Sha1Digest {
public:
    Sha1Digest();
    ~Sha1Digest();
    Sha1Digest(Sha1Digest&&) noexcept;
    Sha1Digest& operator=(Sha1Digest&&) noexcept;

    void update(std::span<const std::uint8_t> data);
    std::array<std::uint8_t, 20> finish_raw();
    ContentHash finish();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

enum class ColumnKind : std::uint8_t {
    Metadata = 0,
    AnnotationMachine = 1,
    AnnotationHuman = 2,
};

std::string_view to_string(ColumnKind kind);
std::optional<ColumnKind> column_kind_from(std::string_view name);

// Thrown by parse_column / ColumnKey::make; `part` names the offending
// piece ("kind", "source", "field", "separator").
class ColumnParseError : public ValidationError {
public:
    ColumnParseError(std::string part, const std::string& message);
    const std::string& part() const { return part_; }

private:
    std::string part_;
};

// Hierarchical column identity, rendered `KIND|SOURCE|FIELD`. The pipe is
// reserved: sources and fields may not contain it, or newlines. Ordering
// is (kind, source, field).
struct ColumnKey {
    ColumnKind kind = ColumnKind::Metadata;
    std::string source;
    std::string field;

    // Validating constructor-equivalent; throws ColumnParseError.
    static ColumnKey make(ColumnKind kind, std::string source, std::string field);

    auto operator<=>(const ColumnKey&) const = default;
};

std::string render_column(const ColumnKey& key);
ColumnKey parse_column(std::string_view s);

// Calendar-month bucket. `0000-00` is the reserved bucket for material
// with no usable capture time; no other partition may use month 0.
struct PartitionId {
    int year = 0;
    int month = 0;

    static PartitionId unknown() { return {}; }
    bool is_unknown() const { return year == 0 && month == 0; }

    std::string render() const; // zero-padded YYYY-MM
    static PartitionId parse(std::string_view s);

    auto operator<=>(const PartitionId&) const = default;
};

// UTC year-month of the capture instant; unknown() when absent. Instants
// outside years 0..9999 have no YYYY-MM rendering and also bucket to
// unknown().
PartitionId partition_of(std::optional<std::int64_t> capture_time_utc);

// One scanned file. `logical_path` is relative, uses `/` separators and
// contains no `.` or `..` segments; it mirrors where the file sat in the
// source tree.
struct FileRecord {
    std::string logical_path;
    std::uint64_t size_bytes = 0;
    ContentHash hash;
    std::optional<std::int64_t> capture_time; // UTC seconds since epoch
    std::string dataset_source;
};

void validate_logical_path(std::string_view path);

// Strict ISO-8601 `YYYY-MM-DDTHH:MM:SS` with `Z` or `+HH:MM`/`-HH:MM`
// offset. Offsets are normalized away: the same instant always yields the
// same epoch value.
std::int64_t parse_timestamp(std::string_view iso8601);
std::string format_timestamp(std::int64_t utc_seconds); // always renders Z

// Shortest round-trip decimal form; the index stores numeric values as
// strings produced by this.
std::string format_decimal(double value);
// Full-string strict parse; nullopt for anything that is not a decimal.
std::optional<double> parse_decimal(std::string_view s);

} // namespace mediavault
