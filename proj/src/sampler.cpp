#include "mclab/sampler.hpp"

#include <algorithm>

#include "mclab/error.hpp"

namespace mclab {

SegmentSampler::SegmentSampler(std::vector<const CenterDataset*> centers, int input_size, int output_size)
    : input_size_(input_size), output_size_(output_size) {
  if (input_size < output_size || (input_size - output_size) % 2 != 0)
    throw Error(ErrorCode::ShapeMismatch, "input and output sizes must differ by an even margin");
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (const auto& rec : centers[c]->train) {
      const Dims d = rec.image.dims();
      if (d.x < input_size || d.y < input_size || d.z < input_size)
        throw Error(ErrorCode::ShapeMismatch, "case '" + rec.case_id + "' is smaller than the network input");
      Entry e{&rec, static_cast<int>(c), {}, {}};
      const auto label = rec.label.mask_values();
      const auto brain = rec.brain_mask.mask_values();
      for (std::size_t i = 0; i < label.size(); ++i) {
        if (label[i])
          e.lesion.push_back(static_cast<std::uint32_t>(i));
        else if (brain[i])
          e.background.push_back(static_cast<std::uint32_t>(i));
      }
      cases_.push_back(std::move(e));
    }
  }
  if (cases_.empty()) throw Error(ErrorCode::EmptySplit, "no training cases to sample from");
}

Segment SegmentSampler::extract(const Entry& e, std::uint32_t voxel, bool tumor) const {
  const Volume& img = e.record->image;
  const Dims d = img.dims();
  const int x = static_cast<int>(voxel % d.x);
  const int y = static_cast<int>((voxel / d.x) % d.y);
  const int z = static_cast<int>(voxel / (static_cast<std::uint32_t>(d.x) * d.y));
  const int half = input_size_ / 2;
  const int margin = (input_size_ - output_size_) / 2;
  const int dims[3] = {d.x, d.y, d.z};
  const int at[3] = {x, y, z};
  std::array<int, 3> in_origin{}, out_origin{}, centre{};
  for (int a = 0; a < 3; ++a) {
    in_origin[a] = std::clamp(at[a] - half, 0, dims[a] - input_size_);
    out_origin[a] = in_origin[a] + margin;
    centre[a] = in_origin[a] + half;
  }

  Segment s;
  s.patch = extract_patch(img, out_origin, input_size_, margin);
  s.target.resize(static_cast<std::size_t>(output_size_) * output_size_ * output_size_);
  std::size_t k = 0;
  for (int dz = 0; dz < output_size_; ++dz)
    for (int dy = 0; dy < output_size_; ++dy)
      for (int dx = 0; dx < output_size_; ++dx)
        s.target[k++] = e.record->label.mask_at(out_origin[0] + dx, out_origin[1] + dy, out_origin[2] + dz);
  s.case_id = e.record->case_id;
  s.center_index = e.center_index;
  s.sampled = {x, y, z};
  s.center = centre;
  s.tumor_centered = tumor;
  return s;
}

SegmentBatch SegmentSampler::sample(int batch_size, double p_tumor, std::mt19937_64& rng) const {
  if (!(p_tumor >= 0.0 && p_tumor <= 1.0)) throw Error(ErrorCode::Config, "p_tumor must lie in [0, 1]");
  if (batch_size < 1) throw Error(ErrorCode::Config, "batch size must be >= 1");
  std::uniform_int_distribution<std::size_t> pick_case(0, cases_.size() - 1);
  SegmentBatch batch;
  batch.segments.reserve(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    const bool want_tumor = std::bernoulli_distribution(p_tumor)(rng);
    const Entry* e = &cases_[pick_case(rng)];
    if (want_tumor) {
      for (int redraw = 0; e->lesion.empty() && redraw < kLesionRedrawCap; ++redraw) e = &cases_[pick_case(rng)];
      if (!e->lesion.empty()) {
        const auto& v = e->lesion;
        batch.segments.push_back(extract(*e, v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)], true));
        continue;
      }
    }
    // Background; a case without free brain voxels falls back to any voxel.
    const auto& v = e->background.empty() ? e->lesion : e->background;
    if (v.empty()) {
      const auto n = static_cast<std::uint32_t>(e->record->image.size());
      batch.segments.push_back(extract(*e, std::uniform_int_distribution<std::uint32_t>(0, n - 1)(rng), false));
    } else {
      batch.segments.push_back(extract(*e, v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)], false));
    }
  }
  return batch;
}

SegmentBatch sample_segments(const CenterDataset& center, int batch_size, double p_tumor, const NetworkDescriptor& desc,
                             std::mt19937_64& rng) {
  return SegmentSampler(center, desc).sample(batch_size, p_tumor, rng);
}

}  // namespace mclab
