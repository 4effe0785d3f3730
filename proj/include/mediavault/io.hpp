#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mediavault/errors.hpp"
#include "mediavault/model.hpp"

namespace mediavault {

// Sequential reader. read() fills at most buf.size() bytes and returns the
// count; 0 means end of stream.
class ByteSource {
public:
    virtual ~ByteSource() = default;
    virtual std::size_t read(std::span<std::uint8_t> buf) = 0;
};

class ByteSink {
public:
    virtual ~ByteSink() = default;
    virtual void write(std::span<const std::uint8_t> data) = 0;
    virtual void flush() {}

    void write(std::string_view text) {
        write(std::span<const std::uint8_t>(
            reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }
};

// Positioned reader over an immutable byte range. pread() either fills the
// whole span or throws.
class RandomAccessSource {
public:
    virtual ~RandomAccessSource() = default;
    virtual void pread(std::uint64_t offset, std::span<std::uint8_t> buf) = 0;
    virtual std::uint64_t size() const = 0;
};

class FileByteSource : public ByteSource {
public:
    explicit FileByteSource(const std::filesystem::path& path);
    ~FileByteSource() override;
    FileByteSource(FileByteSource&&) noexcept;
    FileByteSource& operator=(FileByteSource&&) noexcept;

    std::size_t read(std::span<std::uint8_t> buf) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

class FileByteSink : public ByteSink {
public:
    explicit FileByteSink(const std::filesystem::path& path);
    ~FileByteSink() override;
    FileByteSink(FileByteSink&&) noexcept;
    FileByteSink& operator=(FileByteSink&&) noexcept;

    void write(std::span<const std::uint8_t> data) override;
    using ByteSink::write;
    void flush() override;
    std::uint64_t bytes_written() const;
    // Flushes and closes the underlying descriptor; write() afterwards throws.
    void close();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

class FileRandomAccessSource : public RandomAccessSource {
public:
    explicit FileRandomAccessSource(const std::filesystem::path& path);
    ~FileRandomAccessSource() override;
    FileRandomAccessSource(FileRandomAccessSource&&) noexcept;
    FileRandomAccessSource& operator=(FileRandomAccessSource&&) noexcept;

    void pread(std::uint64_t offset, std::span<std::uint8_t> buf) override;
    std::uint64_t size() const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

class MemoryByteSource : public ByteSource {
public:
    explicit MemoryByteSource(std::vector<std::uint8_t> data)
        : data_(std::move(data)) {}
    explicit MemoryByteSource(std::string_view text)
        : data_(text.begin(), text.end()) {}

    std::size_t read(std::span<std::uint8_t> buf) override {
        std::size_t n = std::min(buf.size(), data_.size() - pos_);
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(pos_), n, buf.begin());
        pos_ += n;
        return n;
    }

private:
    std::vector<std::uint8_t> data_;
    std::size_t pos_ = 0;
};

class MemoryByteSink : public ByteSink {
public:
    void write(std::span<const std::uint8_t> data) override {
        data_.insert(data_.end(), data.begin(), data.end());
    }
    using ByteSink::write;

    const std::vector<std::uint8_t>& bytes() const { return data_; }
    std::vector<std::uint8_t> take() { return std::move(data_); }

private:
    std::vector<std::uint8_t> data_;
};

class MemoryRandomAccessSource : public RandomAccessSource {
public:
    explicit MemoryRandomAccessSource(std::vector<std::uint8_t> data)
        : data_(std::move(data)) {}

    void pread(std::uint64_t offset, std::span<std::uint8_t> buf) override {
        if (offset + buf.size() > data_.size())
            throw IoError("read past end of in-memory source");
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(offset), buf.size(),
                    buf.begin());
    }

    std::uint64_t size() const override { return data_.size(); }

private:
    std::vector<std::uint8_t> data_;
};

// A file record paired with the open source its bytes stream from.
struct SourcedFile {
    FileRecord record;
    std::unique_ptr<ByteSource> source;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> data);
void write_file_text(const std::filesystem::path& path, std::string_view text);

} // namespace mediavault
