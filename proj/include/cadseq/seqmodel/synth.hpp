#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cadseq/rng.hpp"
#include "cadseq/seqmodel/codec.hpp"
#include "cadseq/seqmodel/command.hpp"

namespace cadseq::seq {

inline constexpr std::size_t kMinTargetLength = 60;
inline constexpr std::size_t kMaxTargetLength = 256;
inline constexpr std::size_t kLengthSlack = 8;

// Builds a valid sketch-and-extrude model whose true_length lies within
// kLengthSlack of length_target (clamped to 60..256). Loops are star-shaped
// polygons of lines and arcs closing at the loop start, optionally with circular
// holes, or stand-alone circles. The first extrude creates a new body that
// always contains a core ball around the origin; every later cut is placed on
// the far side of a plane that keeps that core intact, so the solid never
// vanishes. Throws OutOfRange if length_target is outside 60..256.
CadSequence synthesize_sequence(std::uint64_t seed, std::size_t length_target);

// Target length drawn to follow the long-sequence dataset histogram: 82.89% of
// models in 61..128 and the rest in 129..256, skewed towards the low end of each
// bucket so that the mean length is close to 99.
std::size_t sample_length_target(Rng& rng);

// `count` records with ids synth-000000, synth-000001, ...; record i draws its
// length target and then its own seed from one generator seeded with `seed`.
std::vector<SequenceRecord> synthesize_records(std::size_t count, std::uint64_t seed);

}  // namespace cadseq::seq
