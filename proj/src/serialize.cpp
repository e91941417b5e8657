#include "boostlora/serialize.hpp"

#include <cstring>
#include <fstream>

namespace boostlora {

namespace {

constexpr char kMagic[4] = {'B', 'S', 'T', 'L'};
constexpr std::uint32_t kVersion = 1;

} // namespace

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

void BinaryWriter::u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

void BinaryWriter::u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) {
        buf_.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
    }
}

void BinaryWriter::u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
        buf_.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
    }
}

void BinaryWriter::i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }

void BinaryWriter::f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    u64(bits);
}

void BinaryWriter::str(const std::string& s) {
    u64(s.size());
    buf_.append(s);
}

void BinaryWriter::vec(const Vector& v) {
    i64(v.size());
    for (Index i = 0; i < v.size(); ++i) {
        f64(v(i));
    }
}

void BinaryWriter::mat(const Matrix& m) {
    i64(m.rows());
    i64(m.cols());
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            f64(m(i, j));
        }
    }
}

void BinaryWriter::write_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IntegrityError("checkpoint: cannot write " + path);
    }
    out.write(kMagic, 4);
    std::uint32_t ver = kVersion;
    char vbuf[4];
    for (int b = 0; b < 4; ++b) {
        vbuf[b] = static_cast<char>((ver >> (8 * b)) & 0xff);
    }
    out.write(vbuf, 4);
    std::uint64_t len = buf_.size();
    char lbuf[8];
    for (int b = 0; b < 8; ++b) {
        lbuf[b] = static_cast<char>((len >> (8 * b)) & 0xff);
    }
    out.write(lbuf, 8);
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    const std::uint64_t sum = fnv1a64(buf_.data(), buf_.size());
    char sbuf[8];
    for (int b = 0; b < 8; ++b) {
        sbuf[b] = static_cast<char>((sum >> (8 * b)) & 0xff);
    }
    out.write(sbuf, 8);
    if (!out) {
        throw IntegrityError("checkpoint: short write to " + path);
    }
}

BinaryReader::BinaryReader(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IntegrityError("checkpoint: cannot open " + path);
    }
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (all.size() < 4 + 4 + 8 + 8) {
        throw IntegrityError("checkpoint: " + path + " is truncated");
    }
    if (std::memcmp(all.data(), kMagic, 4) != 0) {
        throw IntegrityError("checkpoint: " + path + " has wrong magic bytes");
    }
    std::uint32_t ver = 0;
    for (int b = 0; b < 4; ++b) {
        ver |= static_cast<std::uint32_t>(static_cast<unsigned char>(all[4 + b])) << (8 * b);
    }
    if (ver != kVersion) {
        throw IntegrityError("checkpoint: unsupported format version " + std::to_string(ver));
    }
    std::uint64_t len = 0;
    for (int b = 0; b < 8; ++b) {
        len |= static_cast<std::uint64_t>(static_cast<unsigned char>(all[8 + b])) << (8 * b);
    }
    if (all.size() != 4 + 4 + 8 + len + 8) {
        throw IntegrityError("checkpoint: " + path + " is truncated or padded");
    }
    buf_ = all.substr(16, len);
    std::uint64_t stored = 0;
    for (int b = 0; b < 8; ++b) {
        stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(all[16 + len + b]))
                  << (8 * b);
    }
    if (stored != fnv1a64(buf_.data(), buf_.size())) {
        throw IntegrityError("checkpoint: " + path + " failed its checksum");
    }
}

void BinaryReader::need(std::size_t bytes) const {
    if (pos_ + bytes > buf_.size()) {
        throw IntegrityError("checkpoint: payload ended early");
    }
}

std::uint8_t BinaryReader::u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
}

std::uint32_t BinaryReader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + b])) << (8 * b);
    }
    pos_ += 4;
    return v;
}

std::uint64_t BinaryReader::u64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + b])) << (8 * b);
    }
    pos_ += 8;
    return v;
}

std::int64_t BinaryReader::i64() { return static_cast<std::int64_t>(u64()); }

double BinaryReader::f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

std::string BinaryReader::str() {
    const std::uint64_t len = u64();
    need(len);
    std::string s = buf_.substr(pos_, len);
    pos_ += len;
    return s;
}

Vector BinaryReader::vec() {
    const std::int64_t n = i64();
    if (n < 0) {
        throw IntegrityError("checkpoint: negative vector length");
    }
    Vector v(n);
    for (Index i = 0; i < n; ++i) {
        v(i) = f64();
    }
    return v;
}

Matrix BinaryReader::mat() {
    const std::int64_t rows = i64();
    const std::int64_t cols = i64();
    if (rows < 0 || cols < 0) {
        throw IntegrityError("checkpoint: negative matrix shape");
    }
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            m(i, j) = f64();
        }
    }
    return m;
}

} // namespace boostlora
