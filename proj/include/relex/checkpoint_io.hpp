#ifndef RELEX_CHECKPOINT_IO_HPP
#define RELEX_CHECKPOINT_IO_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "relex/tensor.hpp"

namespace relex {

// Checkpoint container: magic "LRPREC01", u32 little-endian header length,
// UTF-8 JSON header, then raw little-endian 64-bit floats per tensor.

void write_checkpoint_file(const std::string& path, const nlohmann::json& header,
                           const std::vector<const Tensor*>& tensors);

class CheckpointReader {
public:
    explicit CheckpointReader(const std::string& path);

    const nlohmann::json& header() const { return header_; }

    /// Next payload tensor, interpreted with the given shape. Throws
    /// FormatError with the byte offset if the file is short.
    Tensor read_tensor(const std::vector<std::size_t>& shape);

    /// Throws FormatError if payload bytes remain.
    void expect_end() const;

private:
    std::vector<unsigned char> bytes_;
    std::size_t offset_ = 0;
    nlohmann::json header_;
    std::string path_;
};

}  // namespace relex

#endif
