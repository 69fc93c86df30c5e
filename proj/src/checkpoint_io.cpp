#include "relex/checkpoint_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "relex/errors.hpp"

namespace relex {

namespace {

constexpr char kMagic[8] = {'L', 'R', 'P', 'R', 'E', 'C', '0', '1'};

void append_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void append_f64_le(std::vector<unsigned char>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
}

}  // namespace

void write_checkpoint_file(const std::string& path, const nlohmann::json& header,
                           const std::vector<const Tensor*>& tensors) {
    std::vector<unsigned char> bytes;
    bytes.insert(bytes.end(), kMagic, kMagic + 8);
    const std::string header_text = header.dump();
    append_u32_le(bytes, static_cast<std::uint32_t>(header_text.size()));
    bytes.insert(bytes.end(), header_text.begin(), header_text.end());
    for (const Tensor* t : tensors) {
        for (std::size_t i = 0; i < t->size(); ++i) append_f64_le(bytes, (*t)[i]);
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open checkpoint path for writing: " + tmp);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError("short write to checkpoint: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw FormatError("cannot rename checkpoint into place: " + path);
    }
}

CheckpointReader::CheckpointReader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint: " + path);
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());

    if (bytes_.size() < 12 || std::memcmp(bytes_.data(), kMagic, 8) != 0) {
        throw FormatError("bad checkpoint magic at offset 0 in " + path);
    }
    std::uint32_t header_len = 0;
    for (int i = 0; i < 4; ++i) header_len |= static_cast<std::uint32_t>(bytes_[8 + i]) << (8 * i);
    if (bytes_.size() < 12 + static_cast<std::size_t>(header_len)) {
        throw FormatError("truncated checkpoint header at offset 12 in " + path);
    }
    const std::string header_text(bytes_.begin() + 12, bytes_.begin() + 12 + header_len);
    header_ = nlohmann::json::parse(header_text, nullptr, false);
    if (header_.is_discarded()) {
        throw FormatError("unparseable checkpoint header at offset 12 in " + path);
    }
    offset_ = 12 + header_len;
}

Tensor CheckpointReader::read_tensor(const std::vector<std::size_t>& shape) {
    std::size_t count = 1;
    for (std::size_t e : shape) count *= e;
    if (offset_ + 8 * count > bytes_.size()) {
        throw FormatError("truncated checkpoint payload at offset " + std::to_string(offset_) +
                          " in " + path_);
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            bits |= static_cast<std::uint64_t>(bytes_[offset_ + 8 * i + b]) << (8 * b);
        }
        std::memcpy(&values[i], &bits, sizeof(double));
    }
    offset_ += 8 * count;
    return Tensor(shape, std::move(values));
}

void CheckpointReader::expect_end() const {
    if (offset_ != bytes_.size()) {
        throw FormatError("trailing bytes at offset " + std::to_string(offset_) + " in " + path_);
    }
}

}  // namespace relex
