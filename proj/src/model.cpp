#include "mediavault/model.hpp"

#include <openssl/evp.h>

#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstring>

namespace mediavault {

namespace {

constexpr char kHexChars[] = "0123456789abcdef";

std::string to_hex(std::span<const std::uint8_t> data) {
    std::string out;
    out.resize(data.size() * 2);
    for (std::size_t i = 0; i < data.size(); ++i) {
        out[i * 2] = kHexChars[data[i] >> 4];
        out[i * 2 + 1] = kHexChars[data[i] & 0x0f];
    }
    return out;
}

} // namespace

ContentHash ContentHash::from_hex(std::string_view s) {
    if (s.size() != 40)
        throw ValidationError("content hash must be 40 hex characters, got " +
                              std::to_string(s.size()));
    ContentHash h;
    h.hex.resize(40);
    for (std::size_t i = 0; i < 40; ++i) {
        char c = s[i];
        if (c >= 'A' && c <= 'F')
            c = static_cast<char>(c - 'A' + 'a');
        bool ok = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
        if (!ok)
            throw ValidationError(std::string("content hash has non-hex character '") + s[i] +
                                  "' at position " + std::to_string(i));
        h.hex[i] = c;
    }
    return h;
}

ContentHash ContentHash::from_raw(std::span<const std::uint8_t, 20> digest) {
    return ContentHash{to_hex(digest)};
}

struct Sha1Digest::Impl {
    EVP_MD_CTX* ctx = nullptr;
};

Sha1Digest::Sha1Digest() : impl_(std::make_unique<Impl>()) {
    impl_->ctx = EVP_MD_CTX_new();
    if (impl_->ctx == nullptr || EVP_DigestInit_ex(impl_->ctx, EVP_sha1(), nullptr) != 1)
        throw Error("sha1: digest context init failed");
}

Sha1Digest::~Sha1Digest() {
    if (impl_ && impl_->ctx != nullptr)
        EVP_MD_CTX_free(impl_->ctx);
}

Sha1Digest::Sha1Digest(Sha1Digest&&) noexcept = default;
Sha1Digest& Sha1Digest::operator=(Sha1Digest&&) noexcept = default;

void Sha1Digest::update(std::span<const std::uint8_t> data) {
    if (EVP_DigestUpdate(impl_->ctx, data.data(), data.size()) != 1)
        throw Error("sha1: digest update failed");
}

std::array<std::uint8_t, 20> Sha1Digest::finish_raw() {
    std::array<std::uint8_t, 20> out{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(impl_->ctx, out.data(), &len) != 1 || len != out.size())
        throw Error("sha1: digest finalization failed");
    return out;
}

ContentHash Sha1Digest::finish() {
    auto raw = finish_raw();
    return ContentHash::from_raw(raw);
}

ContentHash content_hash(std::span<const std::uint8_t> data) {
    Sha1Digest d;
    d.update(data);
    return d.finish();
}

ContentHash content_hash(std::string_view data) {
    return content_hash(
        std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(data.data()),
                                      data.size()));
}

std::array<std::uint8_t, 20> sha1_raw(std::span<const std::uint8_t> data) {
    Sha1Digest d;
    d.update(data);
    return d.finish_raw();
}

std::string_view to_string(ColumnKind kind) {
    switch (kind) {
    case ColumnKind::Metadata: return "METADATA";
    case ColumnKind::AnnotationMachine: return "ANNOTATION_MACHINE";
    case ColumnKind::AnnotationHuman: return "ANNOTATION_HUMAN";
    }
    return "METADATA";
}

std::optional<ColumnKind> column_kind_from(std::string_view name) {
    if (name == "METADATA")
        return ColumnKind::Metadata;
    if (name == "ANNOTATION_MACHINE")
        return ColumnKind::AnnotationMachine;
    if (name == "ANNOTATION_HUMAN")
        return ColumnKind::AnnotationHuman;
    return std::nullopt;
}

ColumnParseError::ColumnParseError(std::string part, const std::string& message)
    : ValidationError(message), part_(std::move(part)) {}

namespace {

void validate_column_part(std::string_view name, std::string_view value) {
    if (value.empty())
        throw ColumnParseError(std::string(name),
                               "empty " + std::string(name) + " part in column key");
    for (char c : value) {
        if (c == '|')
            throw ColumnParseError(std::string(name), "column " + std::string(name) +
                                                          " contains reserved separator '|'");
        if (c == '\n' || c == '\r' || c == '\0')
            throw ColumnParseError(std::string(name), "column " + std::string(name) +
                                                          " contains a control character");
    }
}

} // namespace

ColumnKey ColumnKey::make(ColumnKind kind, std::string source, std::string field) {
    validate_column_part("source", source);
    validate_column_part("field", field);
    return ColumnKey{kind, std::move(source), std::move(field)};
}

std::string render_column(const ColumnKey& key) {
    std::string out;
    auto kind = to_string(key.kind);
    out.reserve(kind.size() + key.source.size() + key.field.size() + 2);
    out.append(kind);
    out.push_back('|');
    out.append(key.source);
    out.push_back('|');
    out.append(key.field);
    return out;
}

ColumnKey parse_column(std::string_view s) {
    auto p1 = s.find('|');
    if (p1 == std::string_view::npos)
        throw ColumnParseError("separator", "column key needs two '|' separators: " +
                                                std::string(s));
    auto p2 = s.find('|', p1 + 1);
    if (p2 == std::string_view::npos)
        throw ColumnParseError("separator", "column key needs two '|' separators: " +
                                                std::string(s));
    if (s.find('|', p2 + 1) != std::string_view::npos)
        throw ColumnParseError("separator",
                               "column key has more than two '|' separators: " + std::string(s));
    auto kind_part = s.substr(0, p1);
    auto source_part = s.substr(p1 + 1, p2 - p1 - 1);
    auto field_part = s.substr(p2 + 1);
    auto kind = column_kind_from(kind_part);
    if (!kind)
        throw ColumnParseError("kind", "unknown column kind '" + std::string(kind_part) + "'");
    return ColumnKey::make(*kind, std::string(source_part), std::string(field_part));
}

std::string PartitionId::render() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
    return buf;
}

PartitionId PartitionId::parse(std::string_view s) {
    if (s.size() != 7 || s[4] != '-')
        throw ValidationError("partition must look like YYYY-MM: " + std::string(s));
    int year = 0;
    int month = 0;
    auto r1 = std::from_chars(s.data(), s.data() + 4, year);
    auto r2 = std::from_chars(s.data() + 5, s.data() + 7, month);
    if (r1.ec != std::errc{} || r1.ptr != s.data() + 4 || r2.ec != std::errc{} ||
        r2.ptr != s.data() + 7)
        throw ValidationError("partition must look like YYYY-MM: " + std::string(s));
    PartitionId p{year, month};
    bool valid = p.is_unknown() || (month >= 1 && month <= 12);
    if (!valid)
        throw ValidationError("partition month out of range: " + std::string(s));
    return p;
}

PartitionId partition_of(std::optional<std::int64_t> capture_time_utc) {
    if (!capture_time_utc)
        return PartitionId::unknown();
    using namespace std::chrono;
    sys_seconds t{seconds{*capture_time_utc}};
    year_month_day ymd{floor<days>(t)};
    int y = static_cast<int>(ymd.year());
    if (y < 0 || y > 9999)
        return PartitionId::unknown();
    return PartitionId{y, static_cast<int>(static_cast<unsigned>(ymd.month()))};
}

void validate_logical_path(std::string_view path) {
    if (path.empty())
        throw ValidationError("logical path is empty");
    if (path.size() > 65535)
        throw ValidationError("logical path longer than 65535 bytes");
    if (path.front() == '/')
        throw ValidationError("logical path must be relative: " + std::string(path));
    std::size_t seg_start = 0;
    for (std::size_t i = 0; i <= path.size(); ++i) {
        if (i < path.size()) {
            char c = path[i];
            if (c == '\\' || c == '\0' || c == '\n')
                throw ValidationError("logical path contains a forbidden character: " +
                                      std::string(path));
            if (c != '/')
                continue;
        }
        auto seg = path.substr(seg_start, i - seg_start);
        if (seg.empty())
            throw ValidationError("logical path has an empty segment: " + std::string(path));
        if (seg == "." || seg == "..")
            throw ValidationError("logical path must not contain '.' or '..' segments: " +
                                  std::string(path));
        seg_start = i + 1;
    }
}

namespace {

int read_digits(std::string_view s, std::size_t pos, std::size_t count) {
    if (pos + count > s.size())
        throw ValidationError("timestamp too short: " + std::string(s));
    int value = 0;
    for (std::size_t i = 0; i < count; ++i) {
        char c = s[pos + i];
        if (c < '0' || c > '9')
            throw ValidationError("timestamp has a non-digit where one is required: " +
                                  std::string(s));
        value = value * 10 + (c - '0');
    }
    return value;
}

} // namespace

std::int64_t parse_timestamp(std::string_view s) {
    // YYYY-MM-DDTHH:MM:SS followed by Z or +HH:MM / -HH:MM.
    if (s.size() < 20)
        throw ValidationError("timestamp too short: " + std::string(s));
    int year = read_digits(s, 0, 4);
    int month = read_digits(s, 5, 2);
    int day = read_digits(s, 8, 2);
    int hour = read_digits(s, 11, 2);
    int minute = read_digits(s, 14, 2);
    int second = read_digits(s, 17, 2);
    if (s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != 't') || s[13] != ':' ||
        s[16] != ':')
        throw ValidationError("timestamp must look like YYYY-MM-DDTHH:MM:SSZ: " + std::string(s));

    std::int64_t offset_seconds = 0;
    char tz = s[19];
    if (tz == 'Z' || tz == 'z') {
        if (s.size() != 20)
            throw ValidationError("trailing characters after timestamp: " + std::string(s));
    } else if (tz == '+' || tz == '-') {
        if (s.size() != 25 || s[22] != ':')
            throw ValidationError("timestamp offset must look like +HH:MM: " + std::string(s));
        int oh = read_digits(s, 20, 2);
        int om = read_digits(s, 23, 2);
        if (oh > 23 || om > 59)
            throw ValidationError("timestamp offset out of range: " + std::string(s));
        offset_seconds = static_cast<std::int64_t>(oh) * 3600 + om * 60;
        if (tz == '-')
            offset_seconds = -offset_seconds;
    } else {
        throw ValidationError("timestamp must end in Z or a +HH:MM offset: " + std::string(s));
    }

    using namespace std::chrono;
    year_month_day ymd{std::chrono::year{year}, std::chrono::month{unsigned(month)},
                       std::chrono::day{unsigned(day)}};
    if (!ymd.ok())
        throw ValidationError("timestamp names an invalid calendar day: " + std::string(s));
    if (hour > 23 || minute > 59 || second > 59)
        throw ValidationError("timestamp time-of-day out of range: " + std::string(s));
    auto days_since_epoch = sys_days{ymd}.time_since_epoch().count();
    std::int64_t local = static_cast<std::int64_t>(days_since_epoch) * 86400 + hour * 3600 +
                         minute * 60 + second;
    return local - offset_seconds;
}

std::string format_timestamp(std::int64_t utc_seconds) {
    using namespace std::chrono;
    sys_seconds t{seconds{utc_seconds}};
    auto dp = floor<days>(t);
    year_month_day ymd{dp};
    auto tod = t - dp;
    int h = static_cast<int>(duration_cast<hours>(tod).count());
    int m = static_cast<int>(duration_cast<minutes>(tod).count() % 60);
    int s = static_cast<int>(duration_cast<seconds>(tod).count() % 60);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", int(ymd.year()),
                  unsigned(ymd.month()), unsigned(ymd.day()), h, m, s);
    return buf;
}

std::string format_decimal(double value) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, r.ptr);
}

std::optional<double> parse_decimal(std::string_view s) {
    if (s.empty())
        return std::nullopt;
    double value = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), value);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        return std::nullopt;
    return value;
}

} // namespace mediavault
