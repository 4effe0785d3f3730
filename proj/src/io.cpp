#include "mediavault/io.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>

namespace mediavault {

namespace {

[[noreturn]] void throw_errno(const std::string& what, const std::filesystem::path& path) {
    throw IoError(what + " " + path.string() + ": " + std::strerror(errno));
}

} // namespace

struct FileByteSource::Impl {
    std::FILE* f = nullptr;
    std::filesystem::path path;
};

FileByteSource::FileByteSource(const std::filesystem::path& path)
    : impl_(std::make_unique<Impl>()) {
    impl_->path = path;
    impl_->f = std::fopen(path.c_str(), "rb");
    if (impl_->f == nullptr)
        throw_errno("cannot open", path);
}

FileByteSource::~FileByteSource() {
    if (impl_ && impl_->f != nullptr)
        std::fclose(impl_->f);
}

FileByteSource::FileByteSource(FileByteSource&&) noexcept = default;
FileByteSource& FileByteSource::operator=(FileByteSource&&) noexcept = default;

std::size_t FileByteSource::read(std::span<std::uint8_t> buf) {
    if (buf.empty())
        return 0;
    std::size_t n = std::fread(buf.data(), 1, buf.size(), impl_->f);
    if (n < buf.size() && std::ferror(impl_->f))
        throw_errno("read failed for", impl_->path);
    return n;
}

struct FileByteSink::Impl {
    std::FILE* f = nullptr;
    std::filesystem::path path;
    std::uint64_t written = 0;
};

FileByteSink::FileByteSink(const std::filesystem::path& path)
    : impl_(std::make_unique<Impl>()) {
    impl_->path = path;
    impl_->f = std::fopen(path.c_str(), "wb");
    if (impl_->f == nullptr)
        throw_errno("cannot create", path);
}

FileByteSink::~FileByteSink() {
    if (impl_ && impl_->f != nullptr)
        std::fclose(impl_->f);
}

FileByteSink::FileByteSink(FileByteSink&&) noexcept = default;
FileByteSink& FileByteSink::operator=(FileByteSink&&) noexcept = default;

void FileByteSink::write(std::span<const std::uint8_t> data) {
    if (impl_->f == nullptr)
        throw IoError("write after close: " + impl_->path.string());
    if (data.empty())
        return;
    std::size_t n = std::fwrite(data.data(), 1, data.size(), impl_->f);
    if (n != data.size())
        throw_errno("write failed for", impl_->path);
    impl_->written += n;
}

void FileByteSink::flush() {
    if (impl_->f != nullptr && std::fflush(impl_->f) != 0)
        throw_errno("flush failed for", impl_->path);
}

std::uint64_t FileByteSink::bytes_written() const {
    return impl_->written;
}

void FileByteSink::close() {
    if (impl_->f == nullptr)
        return;
    int rc = std::fclose(impl_->f);
    impl_->f = nullptr;
    if (rc != 0)
        throw_errno("close failed for", impl_->path);
}

struct FileRandomAccessSource::Impl {
    int fd = -1;
    std::uint64_t size = 0;
    std::filesystem::path path;
};

FileRandomAccessSource::FileRandomAccessSource(const std::filesystem::path& path)
    : impl_(std::make_unique<Impl>()) {
    impl_->path = path;
    impl_->fd = ::open(path.c_str(), O_RDONLY);
    if (impl_->fd < 0)
        throw_errno("cannot open", path);
    struct stat st{};
    if (::fstat(impl_->fd, &st) != 0) {
        ::close(impl_->fd);
        impl_->fd = -1;
        throw_errno("cannot stat", path);
    }
    impl_->size = static_cast<std::uint64_t>(st.st_size);
}

FileRandomAccessSource::~FileRandomAccessSource() {
    if (impl_ && impl_->fd >= 0)
        ::close(impl_->fd);
}

FileRandomAccessSource::FileRandomAccessSource(FileRandomAccessSource&&) noexcept = default;
FileRandomAccessSource& FileRandomAccessSource::operator=(FileRandomAccessSource&&) noexcept =
    default;

void FileRandomAccessSource::pread(std::uint64_t offset, std::span<std::uint8_t> buf) {
    std::size_t done = 0;
    while (done < buf.size()) {
        ssize_t n = ::pread(impl_->fd, buf.data() + done, buf.size() - done,
                            static_cast<off_t>(offset + done));
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw_errno("read failed for", impl_->path);
        }
        if (n == 0)
            throw IoError("read past end of " + impl_->path.string());
        done += static_cast<std::size_t>(n);
    }
}

std::uint64_t FileRandomAccessSource::size() const {
    return impl_->size;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    FileRandomAccessSource src(path);
    std::vector<std::uint8_t> out(src.size());
    if (!out.empty())
        src.pread(0, out);
    return out;
}

std::string read_file_text(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
    FileByteSink sink(path);
    sink.write(data);
    sink.close();
}

void write_file_text(const std::filesystem::path& path, std::string_view text) {
    write_file_bytes(path,
                     std::span<const std::uint8_t>(
                         reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace mediavault
