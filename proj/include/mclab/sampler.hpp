#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "mclab/synth.hpp"
#include "mclab/tinynet.hpp"

namespace mclab {

struct Segment {
  std::vector<double> patch;   // input_size^3, [z][y][x]
  std::vector<double> target;  // output_size^3, same centre as the patch
  std::string case_id;
  int center_index = 0;
  std::array<int, 3> sampled{};  // voxel the segment was drawn around
  std::array<int, 3> center{};   // window centre after shifting inside the volume
  bool tumor_centered = false;
};

struct SegmentBatch {
  std::vector<Segment> segments;
};

/// Online class-balanced segment extraction over the pooled training cases of
/// one or more centres. Each case is equally likely to be drawn.
class SegmentSampler {
 public:
  SegmentSampler(std::vector<const CenterDataset*> centers, int input_size, int output_size);
  SegmentSampler(const CenterDataset& center, const NetworkDescriptor& desc)
      : SegmentSampler(std::vector<const CenterDataset*>{&center}, desc.input_size, desc.output_size) {}

  SegmentBatch sample(int batch_size, double p_tumor, std::mt19937_64& rng) const;
  std::size_t case_count() const { return cases_.size(); }

  static constexpr int kLesionRedrawCap = 32;

 private:
  struct Entry {
    const CaseRecord* record;
    int center_index;
    std::vector<std::uint32_t> lesion;      // voxel indices
    std::vector<std::uint32_t> background;  // in-brain, unlabelled
  };
  Segment extract(const Entry& e, std::uint32_t voxel, bool tumor) const;

  std::vector<Entry> cases_;
  int input_size_;
  int output_size_;
};

SegmentBatch sample_segments(const CenterDataset& center, int batch_size, double p_tumor, const NetworkDescriptor& desc,
                             std::mt19937_64& rng);

}  // namespace mclab
