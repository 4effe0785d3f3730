#include "mediavault/archive.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <limits>
#include <map>
#include <set>

#include "json.hpp"

#include "mediavault/crc32c.hpp"

namespace mediavault {

namespace {

using nlohmann::json;

constexpr std::size_t kStreamBufferBytes = 256 * 1024;
constexpr std::string_view kSidecarSuffix = ".volmeta.json";
constexpr std::string_view kVolumeInfix = ".vol";

void put_u16_le(std::uint8_t* out, std::uint16_t v) {
    out[0] = static_cast<std::uint8_t>(v);
    out[1] = static_cast<std::uint8_t>(v >> 8);
}

void put_u32_le(std::uint8_t* out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

void put_u64_le(std::uint8_t* out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint16_t get_u16_le(const std::uint8_t* in) {
    return static_cast<std::uint16_t>(in[0] | (in[1] << 8));
}

std::uint32_t get_u32_le(const std::uint8_t* in) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
        v = (v << 8) | in[i];
    return v;
}

std::uint64_t get_u64_le(const std::uint8_t* in) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i)
        v = (v << 8) | in[i];
    return v;
}

std::filesystem::path volume_path(const std::filesystem::path& dir, const std::string& name,
                                  std::uint32_t index) {
    return dir / (name + std::string(kVolumeInfix) + std::to_string(index));
}

std::uint64_t record_overhead(const std::string& path) {
    return 2 + path.size() + 8 + 20;
}

struct VolumeHeader {
    std::uint32_t index = 0;
    std::uint32_t total = 0;
    std::uint64_t payload_bytes = 0;
};

std::array<std::uint8_t, kVolumeHeaderBytes> encode_header(const VolumeHeader& h) {
    std::array<std::uint8_t, kVolumeHeaderBytes> out{};
    std::memcpy(out.data(), kVolumeMagic, 8);
    put_u32_le(out.data() + 8, h.index);
    put_u32_le(out.data() + 12, h.total);
    put_u64_le(out.data() + 16, h.payload_bytes);
    return out;
}

std::optional<VolumeHeader> decode_header(std::span<const std::uint8_t, kVolumeHeaderBytes> in) {
    if (std::memcmp(in.data(), kVolumeMagic, 8) != 0)
        return std::nullopt;
    VolumeHeader h;
    h.index = get_u32_le(in.data() + 8);
    h.total = get_u32_le(in.data() + 12);
    h.payload_bytes = get_u64_le(in.data() + 16);
    return h;
}

// Cuts an append-only stream into fixed-payload volumes, tracking the
// per-volume crc and the whole-stream sha1 as bytes pass through.
class VolumeWriter {
public:
    VolumeWriter(std::filesystem::path dir, std::string name, std::uint64_t max_payload,
                 std::uint64_t stream_total)
        : dir_(std::move(dir)), name_(std::move(name)), max_payload_(max_payload),
          stream_total_(stream_total),
          total_volumes_(
              static_cast<std::uint32_t>(volume_count_for_stream(stream_total, max_payload))) {}

    void write(std::span<const std::uint8_t> data) {
        while (!data.empty()) {
            if (!sink_ || payload_written_ == max_payload_)
                open_next();
            std::uint64_t room = max_payload_ - payload_written_;
            std::size_t take = static_cast<std::size_t>(
                std::min<std::uint64_t>(room, data.size()));
            auto piece = data.first(take);
            sink_->write(piece);
            crc_.update(piece);
            stream_sha1_.update(piece);
            payload_written_ += take;
            stream_written_ += take;
            data = data.subspan(take);
        }
    }

    // Closes the open volume and returns the full ledger. stream_written
    // must equal the total declared at construction.
    std::vector<VolumeInfo> finish(ContentHash& stream_sha1_out) {
        if (stream_written_ != stream_total_)
            throw Error("archive stream came to " + std::to_string(stream_written_) +
                        " bytes, expected " + std::to_string(stream_total_));
        if (!sink_)
            open_next(); // zero-byte stream still gets one volume
        close_current();
        stream_sha1_out = stream_sha1_.finish();
        return std::move(volumes_);
    }

    const std::vector<std::filesystem::path>& created_files() const { return created_; }

private:
    void open_next() {
        close_current();
        std::uint32_t index = static_cast<std::uint32_t>(volumes_.size()) + 1;
        std::uint64_t payload =
            std::min<std::uint64_t>(max_payload_, stream_total_ - stream_written_);
        auto path = volume_path(dir_, name_, index);
        created_.push_back(path);
        sink_.emplace(path);
        auto header = encode_header(VolumeHeader{index, total_volumes_, payload});
        sink_->write(std::span<const std::uint8_t>(header.data(), header.size()));
        crc_ = Crc32c{};
        payload_written_ = 0;
        expected_payload_ = payload;
    }

    void close_current() {
        if (!sink_)
            return;
        if (payload_written_ != expected_payload_)
            throw Error("volume payload short: wrote " + std::to_string(payload_written_) +
                        " of " + std::to_string(expected_payload_));
        sink_->close();
        volumes_.push_back(VolumeInfo{static_cast<std::uint32_t>(volumes_.size()) + 1,
                                      payload_written_, crc_.value()});
        sink_.reset();
    }

    std::filesystem::path dir_;
    std::string name_;
    std::uint64_t max_payload_;
    std::uint64_t stream_total_;
    std::uint32_t total_volumes_;
    std::optional<FileByteSink> sink_;
    Crc32c crc_;
    Sha1Digest stream_sha1_;
    std::uint64_t payload_written_ = 0;
    std::uint64_t expected_payload_ = 0;
    std::uint64_t stream_written_ = 0;
    std::vector<VolumeInfo> volumes_;
    std::vector<std::filesystem::path> created_;
};

} // namespace

MissingVolumeError::MissingVolumeError(std::uint32_t index, const std::string& message)
    : Error(message), index_(index) {}

VolumeCrcError::VolumeCrcError(std::uint32_t index, const std::string& message)
    : Error(message), index_(index) {}

std::uint64_t volume_count_for_stream(std::uint64_t stream_bytes,
                                      std::uint64_t max_payload_bytes) {
    if (max_payload_bytes == 0)
        throw ValidationError("volume payload limit must be positive");
    if (stream_bytes == 0)
        return 1;
    return (stream_bytes - 1) / max_payload_bytes + 1;
}

std::string_view to_string(VolumeFindingKind kind) {
    switch (kind) {
    case VolumeFindingKind::MissingVolume: return "missing_volume";
    case VolumeFindingKind::ExtraVolume: return "extra_volume";
    case VolumeFindingKind::HeaderMismatch: return "header_mismatch";
    case VolumeFindingKind::LengthMismatch: return "length_mismatch";
    case VolumeFindingKind::CrcMismatch: return "crc_mismatch";
    case VolumeFindingKind::CountMismatch: return "count_mismatch";
    }
    return "unknown";
}

VolumeSet write_volumes(std::vector<SourcedFile> files, std::uint64_t max_volume_bytes,
                        const std::filesystem::path& dest_dir, const std::string& name) {
    if (files.empty())
        throw ValidationError("archive needs at least one file");
    if (max_volume_bytes <= kVolumeHeaderBytes)
        throw ValidationError("max volume size must exceed the " +
                              std::to_string(kVolumeHeaderBytes) + "-byte header");
    if (name.empty() || name.find('/') != std::string::npos)
        throw ValidationError("archive name must be a plain file name");

    std::uint64_t stream_total = 0;
    std::set<std::string_view> seen;
    for (const auto& f : files) {
        validate_logical_path(f.record.logical_path);
        if (!seen.insert(f.record.logical_path).second)
            throw ValidationError("duplicate logical path " + f.record.logical_path);
        if (f.source == nullptr)
            throw ValidationError(f.record.logical_path + " has no byte source");
        stream_total += record_overhead(f.record.logical_path) + f.record.size_bytes;
    }
    std::uint64_t count = volume_count_for_stream(stream_total, max_volume_bytes);
    if (count > std::numeric_limits<std::uint32_t>::max())
        throw ValidationError("stream would need " + std::to_string(count) + " volumes");

    VolumeSet set;
    set.name = name;
    set.max_volume_bytes = max_volume_bytes;
    set.stream_bytes = stream_total;

    VolumeWriter writer(dest_dir, name, max_volume_bytes, stream_total);
    try {
        std::vector<std::uint8_t> buf(kStreamBufferBytes);
        for (auto& f : files) {
            const auto& path = f.record.logical_path;
            std::vector<std::uint8_t> head(2 + path.size() + 8);
            put_u16_le(head.data(), static_cast<std::uint16_t>(path.size()));
            std::memcpy(head.data() + 2, path.data(), path.size());
            put_u64_le(head.data() + 2 + path.size(), f.record.size_bytes);
            writer.write(head);

            Sha1Digest file_sha1;
            std::uint64_t streamed = 0;
            for (;;) {
                std::size_t n = f.source->read(buf);
                if (n == 0)
                    break;
                std::span<const std::uint8_t> got(buf.data(), n);
                file_sha1.update(got);
                writer.write(got);
                streamed += n;
            }
            if (streamed != f.record.size_bytes)
                throw ValidationError(path + " streamed " + std::to_string(streamed) +
                                      " bytes but the record declares " +
                                      std::to_string(f.record.size_bytes));
            auto digest = file_sha1.finish_raw();
            writer.write(digest);

            ContentHash hash = ContentHash::from_raw(digest);
            if (!f.record.hash.hex.empty() && f.record.hash != hash)
                throw ValidationError("hash mismatch for " + path + ": expected " +
                                      f.record.hash.hex + ", got " + hash.hex);
            set.files.push_back(ArchivedFile{path, f.record.size_bytes, std::move(hash)});
        }
        set.volumes = writer.finish(set.stream_sha1);
    } catch (...) {
        std::error_code ec;
        for (const auto& p : writer.created_files())
            std::filesystem::remove(p, ec);
        throw;
    }

    write_sidecar(set, dest_dir / (name + std::string(kSidecarSuffix)));
    return set;
}

void write_sidecar(const VolumeSet& set, const std::filesystem::path& sidecar_file) {
    json volumes = json::array();
    for (const auto& v : set.volumes)
        volumes.push_back(
            json{{"index", v.index}, {"length", v.payload_bytes}, {"crc32c", v.crc32c}});
    json files = json::array();
    for (const auto& f : set.files)
        files.push_back(json{{"logical_path", f.logical_path},
                             {"size", f.size_bytes},
                             {"sha1", f.sha1.hex}});
    json doc{{"max_volume_bytes", set.max_volume_bytes},
             {"volume_count", set.volumes.size()},
             {"volumes", std::move(volumes)},
             {"stream_sha1", set.stream_sha1.hex},
             {"files", std::move(files)}};
    write_file_text(sidecar_file, doc.dump(2) + "\n");
}

VolumeSet read_sidecar(const std::filesystem::path& sidecar_file) {
    std::string text = read_file_text(sidecar_file);
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw ValidationError("sidecar is not valid JSON: " + sidecar_file.string());

    auto filename = sidecar_file.filename().string();
    VolumeSet set;
    if (filename.size() > kSidecarSuffix.size() &&
        filename.ends_with(kSidecarSuffix))
        set.name = filename.substr(0, filename.size() - kSidecarSuffix.size());
    else
        set.name = filename;

    try {
        set.max_volume_bytes = doc.at("max_volume_bytes").get<std::uint64_t>();
        set.stream_sha1 = ContentHash::from_hex(doc.at("stream_sha1").get<std::string>());
        std::uint64_t declared_count = doc.at("volume_count").get<std::uint64_t>();
        for (const json& jv : doc.at("volumes")) {
            VolumeInfo v;
            v.index = jv.at("index").get<std::uint32_t>();
            v.payload_bytes = jv.at("length").get<std::uint64_t>();
            v.crc32c = jv.at("crc32c").get<std::uint32_t>();
            set.volumes.push_back(v);
            set.stream_bytes += v.payload_bytes;
        }
        if (declared_count != set.volumes.size())
            throw ValidationError("sidecar volume_count disagrees with its volume list");
        for (const json& jf : doc.at("files")) {
            ArchivedFile f;
            f.logical_path = jf.at("logical_path").get<std::string>();
            f.size_bytes = jf.at("size").get<std::uint64_t>();
            f.sha1 = ContentHash::from_hex(jf.at("sha1").get<std::string>());
            set.files.push_back(std::move(f));
        }
    } catch (const json::exception& e) {
        throw ValidationError("sidecar " + sidecar_file.string() +
                              " is malformed: " + e.what());
    }
    for (std::size_t i = 0; i < set.volumes.size(); ++i) {
        if (set.volumes[i].index != i + 1)
            throw ValidationError("sidecar volume list is not 1..N in order");
    }
    return set;
}

namespace {

// Maps header index -> file path for every volume file sitting next to the
// sidecar. Files whose header cannot be read map under index 0.
struct DiscoveredVolumes {
    std::map<std::uint32_t, std::filesystem::path> by_index;
    std::vector<std::pair<std::filesystem::path, std::string>> rejected; // path, reason
    std::vector<std::pair<std::uint32_t, std::filesystem::path>> duplicates;
};

DiscoveredVolumes discover_volumes(const std::filesystem::path& dir, const std::string& name) {
    DiscoveredVolumes found;
    std::string prefix = name + std::string(kVolumeInfix);
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file())
            continue;
        std::string fn = entry.path().filename().string();
        if (!fn.starts_with(prefix) || fn.size() == prefix.size())
            continue;
        std::string_view rest = std::string_view(fn).substr(prefix.size());
        if (!std::all_of(rest.begin(), rest.end(),
                         [](unsigned char c) { return std::isdigit(c); }))
            continue;
        std::array<std::uint8_t, kVolumeHeaderBytes> raw{};
        try {
            FileRandomAccessSource src(entry.path());
            if (src.size() < kVolumeHeaderBytes) {
                found.rejected.emplace_back(entry.path(), "shorter than the volume header");
                continue;
            }
            src.pread(0, raw);
        } catch (const IoError& e) {
            found.rejected.emplace_back(entry.path(), e.what());
            continue;
        }
        auto header = decode_header(std::span<const std::uint8_t, kVolumeHeaderBytes>(raw));
        if (!header) {
            found.rejected.emplace_back(entry.path(), "bad volume magic");
            continue;
        }
        auto [it, inserted] = found.by_index.emplace(header->index, entry.path());
        if (!inserted)
            found.duplicates.emplace_back(header->index, entry.path());
    }
    return found;
}

// Sequential view of the logical stream: volume payloads chained in index
// order, each volume's crc checked as its last byte passes.
class VolumeChainSource : public ByteSource {
public:
    VolumeChainSource(std::vector<std::pair<VolumeInfo, std::filesystem::path>> parts)
        : parts_(std::move(parts)) {}

    std::size_t read(std::span<std::uint8_t> buf) override {
        while (current_ < parts_.size()) {
            if (!source_) {
                source_.emplace(parts_[current_].second);
                auto expected = parts_[current_].first.payload_bytes;
                if (source_->size() != kVolumeHeaderBytes + expected)
                    throw VolumeCrcError(parts_[current_].first.index,
                                         "volume " +
                                             std::to_string(parts_[current_].first.index) +
                                             " length does not match its ledger entry");
                pos_ = kVolumeHeaderBytes;
                remaining_ = expected;
                crc_ = Crc32c{};
            }
            if (remaining_ == 0) {
                finish_volume();
                continue;
            }
            std::size_t take = static_cast<std::size_t>(
                std::min<std::uint64_t>(remaining_, buf.size()));
            auto piece = buf.first(take);
            source_->pread(pos_, piece);
            crc_.update(piece);
            pos_ += take;
            remaining_ -= take;
            if (remaining_ == 0)
                finish_volume();
            return take;
        }
        return 0;
    }

private:
    void finish_volume() {
        const auto& info = parts_[current_].first;
        if (crc_.value() != info.crc32c)
            throw VolumeCrcError(info.index, "crc32c mismatch on volume " +
                                                 std::to_string(info.index));
        source_.reset();
        ++current_;
    }

    std::vector<std::pair<VolumeInfo, std::filesystem::path>> parts_;
    std::size_t current_ = 0;
    std::optional<FileRandomAccessSource> source_;
    std::uint64_t pos_ = 0;
    std::uint64_t remaining_ = 0;
    Crc32c crc_;
};

void read_exact(ByteSource& src, std::span<std::uint8_t> buf) {
    std::size_t done = 0;
    while (done < buf.size()) {
        std::size_t n = src.read(buf.subspan(done));
        if (n == 0)
            throw StreamHashError("archive stream ends before its declared contents do");
        done += n;
    }
}

} // namespace

VolumeSet restore_volumes(const std::filesystem::path& sidecar_file,
                          const std::filesystem::path& dest_dir) {
    VolumeSet set = read_sidecar(sidecar_file);
    auto dir = sidecar_file.parent_path();
    if (dir.empty())
        dir = ".";
    auto found = discover_volumes(dir, set.name);

    std::vector<std::pair<VolumeInfo, std::filesystem::path>> parts;
    for (const auto& info : set.volumes) {
        auto it = found.by_index.find(info.index);
        if (it == found.by_index.end())
            throw MissingVolumeError(info.index,
                                     "volume " + std::to_string(info.index) + " of " +
                                         std::to_string(set.volumes.size()) + " is missing");
        parts.emplace_back(info, it->second);
    }

    std::filesystem::create_directories(dest_dir);
    VolumeChainSource chain(std::move(parts));
    Sha1Digest stream_sha1;
    std::vector<std::uint8_t> buf(kStreamBufferBytes);

    auto pull = [&](std::span<std::uint8_t> out) {
        read_exact(chain, out);
        stream_sha1.update(out);
    };

    for (const auto& expected : set.files) {
        std::uint8_t len_raw[2];
        pull(len_raw);
        std::uint16_t path_len = get_u16_le(len_raw);
        std::string path(path_len, '\0');
        pull(std::span<std::uint8_t>(reinterpret_cast<std::uint8_t*>(path.data()), path_len));
        std::uint8_t size_raw[8];
        pull(size_raw);
        std::uint64_t size = get_u64_le(size_raw);
        if (path != expected.logical_path || size != expected.size_bytes)
            throw StreamHashError("archive stream does not match its sidecar at " + path);
        validate_logical_path(path);

        auto out_path = dest_dir / std::filesystem::path(path);
        std::filesystem::create_directories(out_path.parent_path());
        FileByteSink out(out_path);
        Sha1Digest file_sha1;
        std::uint64_t remaining = size;
        while (remaining > 0) {
            std::size_t take = static_cast<std::size_t>(
                std::min<std::uint64_t>(remaining, buf.size()));
            std::span<std::uint8_t> piece(buf.data(), take);
            pull(piece);
            file_sha1.update(piece);
            out.write(piece);
            remaining -= take;
        }
        out.close();

        std::array<std::uint8_t, 20> stored_digest{};
        pull(stored_digest);
        ContentHash stored = ContentHash::from_raw(stored_digest);
        ContentHash actual = file_sha1.finish();
        if (actual != stored || actual != expected.sha1)
            throw StreamHashError("restored bytes of " + path + " hash to " + actual.hex +
                                  ", stream says " + stored.hex + ", sidecar says " +
                                  expected.sha1.hex);
    }

    std::uint8_t probe;
    if (chain.read(std::span<std::uint8_t>(&probe, 1)) != 0)
        throw StreamHashError("archive stream continues past its declared contents");
    ContentHash actual_stream = stream_sha1.finish();
    if (actual_stream != set.stream_sha1)
        throw StreamHashError("stream sha1 is " + actual_stream.hex + ", sidecar says " +
                              set.stream_sha1.hex);
    return set;
}

VolumeVerifyReport verify_volumes(const std::filesystem::path& sidecar_file) {
    VolumeSet set = read_sidecar(sidecar_file);
    auto dir = sidecar_file.parent_path();
    if (dir.empty())
        dir = ".";
    auto found = discover_volumes(dir, set.name);

    VolumeVerifyReport report;
    for (const auto& [path, reason] : found.rejected)
        report.findings.push_back(
            VolumeFinding{VolumeFindingKind::HeaderMismatch, 0,
                          path.filename().string() + ": " + reason});
    for (const auto& [index, path] : found.duplicates)
        report.findings.push_back(
            VolumeFinding{VolumeFindingKind::ExtraVolume, index,
                          path.filename().string() + " repeats volume index " +
                              std::to_string(index)});
    for (const auto& [index, path] : found.by_index) {
        if (index == 0 || index > set.volumes.size())
            report.findings.push_back(
                VolumeFinding{VolumeFindingKind::ExtraVolume, index,
                              path.filename().string() + " claims volume index " +
                                  std::to_string(index) + " of " +
                                  std::to_string(set.volumes.size())});
    }

    for (const auto& info : set.volumes) {
        auto it = found.by_index.find(info.index);
        if (it == found.by_index.end()) {
            report.findings.push_back(
                VolumeFinding{VolumeFindingKind::MissingVolume, info.index,
                              "volume " + std::to_string(info.index) + " not found"});
            continue;
        }
        FileRandomAccessSource src(it->second);
        std::array<std::uint8_t, kVolumeHeaderBytes> raw{};
        src.pread(0, raw);
        auto header = decode_header(std::span<const std::uint8_t, kVolumeHeaderBytes>(raw));
        if (header->total != set.volumes.size()) {
            report.findings.push_back(
                VolumeFinding{VolumeFindingKind::CountMismatch, info.index,
                              "header says " + std::to_string(header->total) +
                                  " volumes, sidecar says " +
                                  std::to_string(set.volumes.size())});
        }
        if (header->payload_bytes != info.payload_bytes) {
            report.findings.push_back(
                VolumeFinding{VolumeFindingKind::HeaderMismatch, info.index,
                              "header payload length " +
                                  std::to_string(header->payload_bytes) +
                                  " disagrees with sidecar " +
                                  std::to_string(info.payload_bytes)});
            continue;
        }
        if (src.size() != kVolumeHeaderBytes + info.payload_bytes) {
            report.findings.push_back(
                VolumeFinding{VolumeFindingKind::LengthMismatch, info.index,
                              "file is " + std::to_string(src.size()) + " bytes, expected " +
                                  std::to_string(kVolumeHeaderBytes + info.payload_bytes)});
            continue;
        }

        Crc32c crc;
        std::vector<std::uint8_t> buf(kStreamBufferBytes);
        std::uint64_t pos = kVolumeHeaderBytes;
        std::uint64_t remaining = info.payload_bytes;
        while (remaining > 0) {
            std::size_t take = static_cast<std::size_t>(
                std::min<std::uint64_t>(remaining, buf.size()));
            std::span<std::uint8_t> piece(buf.data(), take);
            src.pread(pos, piece);
            crc.update(piece);
            pos += take;
            remaining -= take;
        }
        ++report.volumes_checked;
        if (crc.value() != info.crc32c)
            report.findings.push_back(
                VolumeFinding{VolumeFindingKind::CrcMismatch, info.index,
                              "payload crc32c mismatch on volume " +
                                  std::to_string(info.index)});
    }
    return report;
}

} // namespace mediavault
