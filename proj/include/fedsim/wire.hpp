#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedsim/messages.hpp"

namespace fedsim::wire {

// Canonical wire encoding. All integers little-endian; scalars are float32
// little-endian; class/label ids are 2-byte unsigned. The layout is stable:
// test fixtures depend on it.
//
//   message        := tag:u8 body
//   WeightSnapshot := tag=0x01, n_layers:u16, {rows:u16 cols:u16}*n_layers,
//                     head_rows:u16, head_cols:u16,   (0,0 when absent)
//                     bias_len:u16,                   (0 when absent)
//                     payload: per layer weight row-major f32s then bias f32s,
//                              then head rows row-major, then head bias
//   ClassMeans     := tag=0x02, n_entries:u16, dim:u16,
//                     {class_id:u16 count:u32}*n_entries,
//                     payload: per entry dim f32s, ascending class id
//   FeatureSet     := tag=0x03, n_items:u32, dim:u16,
//                     payload: per item label:u16 then dim f32s
//
// Everything before the payload is the header. The symbolic byte formulas in
// the cost module count payloads only; labels inside FeatureSet items are
// payload (the 2-byte per-sample term).

struct MessageSize {
    std::uint64_t header_bytes = 0;
    std::uint64_t payload_bytes = 0;

    std::uint64_t total() const { return header_bytes + payload_bytes; }
};

std::vector<std::uint8_t> encode(const fed::RoundMessage& msg);
fed::RoundMessage decode(std::span<const std::uint8_t> bytes);

// Byte cost of the canonical encoding, computed without materializing it.
MessageSize measure(const fed::RoundMessage& msg);

}  // namespace fedsim::wire
