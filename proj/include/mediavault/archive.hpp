#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mediavault/io.hpp"
#include "mediavault/model.hpp"

namespace mediavault {

inline constexpr char kVolumeMagic[8] = {'P', 'S', 'D', 'V', 'O', 'L', '0', '1'};
inline constexpr std::uint64_t kVolumeHeaderBytes = 24;
inline constexpr std::uint64_t kDefaultVolumeMaxBytes = 4'500'000'000ull;

struct ArchivedFile {
    std::string logical_path;
    std::uint64_t size_bytes = 0;
    ContentHash sha1;
};

struct VolumeInfo {
    std::uint32_t index = 0; // 1-based
    std::uint64_t payload_bytes = 0;
    std::uint32_t crc32c = 0;
};

struct VolumeSet {
    std::string name;
    std::uint64_t max_volume_bytes = 0;
    std::uint64_t stream_bytes = 0;
    ContentHash stream_sha1;
    std::vector<VolumeInfo> volumes;
    std::vector<ArchivedFile> files;
};

class MissingVolumeError : public Error {
public:
    MissingVolumeError(std::uint32_t index, const std::string& message);
    std::uint32_t index() const { return index_; }

private:
    std::uint32_t index_;
};

class VolumeCrcError : public Error {
public:
    VolumeCrcError(std::uint32_t index, const std::string& message);
    std::uint32_t index() const { return index_; }

private:
    std::uint32_t index_;
};

class StreamHashError : public Error {
public:
    using Error::Error;
};

// Volumes needed to hold a stream when each carries at most
// max_payload_bytes of it. A zero-byte stream still takes one volume.
std::uint64_t volume_count_for_stream(std::uint64_t stream_bytes,
                                      std::uint64_t max_payload_bytes);

// Serializes the files into one logical record stream and cuts it into
// numbered volumes under dest_dir ("<name>.vol1", "<name>.vol2", ...), plus
// the "<name>.volmeta.json" sidecar. Each volume holds at most
// max_volume_bytes of stream payload; the 24-byte volume header rides on
// top. Partial outputs are removed on failure.
VolumeSet write_volumes(std::vector<SourcedFile> files, std::uint64_t max_volume_bytes,
                        const std::filesystem::path& dest_dir, const std::string& name);

// Rebuilds the archived files under dest_dir from the sidecar and the
// volumes sitting next to it. Volumes are matched by the index stored in
// their headers, not by filename order. Per-volume checksums, the stream
// hash and every per-file hash are all re-verified.
VolumeSet restore_volumes(const std::filesystem::path& sidecar_file,
                          const std::filesystem::path& dest_dir);

enum class VolumeFindingKind {
    MissingVolume,
    ExtraVolume,
    HeaderMismatch,
    LengthMismatch,
    CrcMismatch,
    CountMismatch,
};

std::string_view to_string(VolumeFindingKind kind);

struct VolumeFinding {
    VolumeFindingKind kind;
    std::uint32_t index = 0; // 0 when the finding is not about one volume
    std::string detail;
};

struct VolumeVerifyReport {
    std::uint64_t volumes_checked = 0;
    std::vector<VolumeFinding> findings;

    bool ok() const { return findings.empty(); }
};

// Checks volume presence, headers, lengths and checksums against the
// sidecar without extracting anything.
VolumeVerifyReport verify_volumes(const std::filesystem::path& sidecar_file);

VolumeSet read_sidecar(const std::filesystem::path& sidecar_file);
void write_sidecar(const VolumeSet& set, const std::filesystem::path& sidecar_file);

} // namespace mediavault
