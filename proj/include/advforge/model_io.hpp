#pragma once

#include "advforge/model.hpp"

#include <cstdint>
#include <string>

namespace advforge {

struct ContainerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// `ADVZOO01` container: magic, u32-LE header length, UTF-8 JSON header,
/// concatenated little-endian f64 weight blobs in layer order, trailing
/// 8-byte little-endian CRC-64 of everything preceding.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

/// CRC-64/XZ (reflected ECMA-182 polynomial).
std::uint64_t crc64(const unsigned char* data, size_t len, std::uint64_t crc = 0);

}  // namespace advforge
