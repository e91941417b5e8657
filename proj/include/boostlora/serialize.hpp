#ifndef BOOSTLORA_SERIALIZE_HPP
#define BOOSTLORA_SERIALIZE_HPP

#include <cstdint>
#include <string>

#include "boostlora/linalg.hpp"

namespace boostlora {

/// Little-endian binary payload builder for the "BSTL" container:
/// magic, format version, payload, FNV-1a64 checksum of the payload.
class BinaryWriter {
  public:
    void u8(std::uint8_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void i64(std::int64_t v);
    void f64(double v);
    void str(const std::string& s);
    void vec(const Vector& v);
    void mat(const Matrix& m);

    /// Writes magic + version + payload + checksum; throws on I/O failure.
    void write_file(const std::string& path) const;

    const std::string& payload() const { return buf_; }

  private:
    std::string buf_;
};

/// Mirror of BinaryWriter. Verifies magic, version and checksum up front;
/// any read past the payload throws IntegrityError, so a truncated or
/// tampered file never yields partial state.
class BinaryReader {
  public:
    explicit BinaryReader(const std::string& path);

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    std::int64_t i64();
    double f64();
    std::string str();
    Vector vec();
    Matrix mat();

    bool at_end() const { return pos_ == buf_.size(); }

  private:
    void need(std::size_t bytes) const;
    std::string buf_;
    std::size_t pos_ = 0;
};

std::uint64_t fnv1a64(const void* data, std::size_t len);

} // namespace boostlora

#endif // BOOSTLORA_SERIALIZE_HPP
