#include "gfnerf/sampler.h"

#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>

namespace gfnerf {

AliasTable::AliasTable(const std::vector<double>& weights) {
  const size_t n = weights.size();
  prob_.assign(n, 0.0);
  alias_.assign(n, 0u);
  total_ = 0.0;
  for (double w : weights) {
    GF_CHECK(w >= 0.0 && std::isfinite(w), "alias weights must be finite and nonnegative");
    total_ += w;
  }
  if (n == 0 || total_ <= 0.0) {
    total_ = 0.0;
    return;
  }
  std::vector<double> scaled(n);
  for (size_t i = 0; i < n; ++i) scaled[i] = weights[i] * double(n) / total_;
  std::deque<uint32_t> small, large;
  for (size_t i = 0; i < n; ++i) (scaled[i] < 1.0 ? small : large).push_back(uint32_t(i));
  while (!small.empty() && !large.empty()) {
    uint32_t s = small.front(), l = large.front();
    small.pop_front();
    large.pop_front();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = scaled[l] + scaled[s] - 1.0;
    (scaled[l] < 1.0 ? small : large).push_back(l);
  }
  for (uint32_t i : large) prob_[i] = 1.0;
  for (uint32_t i : small) prob_[i] = 1.0;  // numerical leftovers
}

size_t AliasTable::sample(Rng& rng) const {
  size_t i = rng.below(prob_.size());
  return rng.uniform() < prob_[i] ? i : alias_[i];
}

ErrorMapSet compute_error_maps(const FieldModel& model, const std::vector<Camera>& cameras,
                               const std::vector<ImageF>& images, const std::vector<int>& image_ids,
                               int downsample) {
  GF_CHECK(downsample >= 1, "downsample must be >= 1");
  ErrorMapSet set;
  set.downsample = downsample;
  for (int id : image_ids) {
    const Camera& cam = cameras[size_t(id)];
    const ImageF& gt = images[size_t(id)];
    RenderedView low = render_image(model, cam, downsample);
    ImageF gt_low = downsample_box(gt, downsample);
    ErrorMap m;
    m.image_id = id;
    m.low_w = low.color.width;
    m.low_h = low.color.height;
    m.low.resize(size_t(m.low_w) * m.low_h);
    for (int y = 0; y < m.low_h; ++y) {
      for (int x = 0; x < m.low_w; ++x) {
        float mae = 0.f;
        for (int c = 0; c < 3; ++c) mae += std::abs(low.color.at(x, y, c) - gt_low.at(x, y, c));
        m.low[size_t(y) * m.low_w + x] = mae / 3.f;
      }
    }
    m.full_w = cam.width;
    m.full_h = cam.height;
    m.full.resize(size_t(m.full_w) * m.full_h);
    for (int y = 0; y < m.full_h; ++y) {
      int sy = std::min(m.low_h - 1, y * m.low_h / m.full_h);
      for (int x = 0; x < m.full_w; ++x) {
        int sx = std::min(m.low_w - 1, x * m.low_w / m.full_w);
        m.full[size_t(y) * m.full_w + x] = m.low[size_t(sy) * m.low_w + sx];
      }
    }
    set.maps.push_back(std::move(m));
  }
  return set;
}

WeightedPixelSampler::WeightedPixelSampler(const ErrorMapSet& errs,
                                           const std::vector<int>& image_ids) {
  std::vector<double> weights;
  for (int id : image_ids) {
    const ErrorMap* m = errs.find(id);
    GF_CHECK(m != nullptr, "no error map for image " + std::to_string(id));
    spans_.push_back({id, m->full_w, m->full_h, weights.size()});
    weights.insert(weights.end(), m->full.begin(), m->full.end());
  }
  table_ = AliasTable(weights);
}

PixelEntry WeightedPixelSampler::draw(Rng& rng) const {
  size_t flat = table_.sample(rng);
  // spans are ordered by begin offset
  size_t lo = 0, hi = spans_.size();
  while (hi - lo > 1) {
    size_t mid = (lo + hi) / 2;
    if (spans_[mid].begin <= flat) lo = mid;
    else hi = mid;
  }
  const Span& s = spans_[lo];
  size_t off = flat - s.begin;
  PixelEntry e;
  e.image_id = s.image_id;
  e.px = int(off % size_t(s.w));
  e.py = int(off / size_t(s.w));
  e.weighted = true;
  return e;
}

PixelBatch sample_weighted(const ErrorMapSet& errs, const std::vector<int>& image_ids, int n,
                           Rng& rng) {
  GF_CHECK(n >= 1, "need n >= 1");
  WeightedPixelSampler sampler(errs, image_ids);
  PixelBatch batch;
  batch.entries.reserve(size_t(n));
  if (!sampler.valid()) {
    std::fprintf(stderr, "gfnerf: error mass is zero, weighted sampling falls back to uniform\n");
    std::vector<std::pair<int, std::pair<int, int>>> dims;
    for (int id : image_ids) {
      const ErrorMap* m = errs.find(id);
      dims.push_back({id, {m->full_w, m->full_h}});
    }
    PixelBatch fallback = sample_uniform(dims, n, rng);
    for (auto& e : fallback.entries) e.weighted = true;
    return fallback;
  }
  for (int i = 0; i < n; ++i) batch.entries.push_back(sampler.draw(rng));
  return batch;
}

PixelBatch sample_uniform(const std::vector<std::pair<int, std::pair<int, int>>>& image_dims,
                          int batch_size, Rng& rng) {
  GF_CHECK(batch_size >= 1, "batch_size must be >= 1");
  GF_CHECK(!image_dims.empty(), "need at least one candidate image");
  // uniform over (image, pixel) pairs, i.e. proportional to pixel counts
  std::vector<uint64_t> cumulative;
  uint64_t total = 0;
  for (const auto& [id, wh] : image_dims) {
    total += uint64_t(wh.first) * uint64_t(wh.second);
    cumulative.push_back(total);
  }
  PixelBatch batch;
  batch.entries.reserve(size_t(batch_size));
  for (int i = 0; i < batch_size; ++i) {
    uint64_t flat = rng.below(total);
    size_t img = 0;
    while (cumulative[img] <= flat) ++img;
    uint64_t off = flat - (img == 0 ? 0 : cumulative[img - 1]);
    PixelEntry e;
    e.image_id = image_dims[img].first;
    e.px = int(off % uint64_t(image_dims[img].second.first));
    e.py = int(off / uint64_t(image_dims[img].second.first));
    e.weighted = false;
    batch.entries.push_back(e);
  }
  return batch;
}

PixelBatch sample_uniform(const std::vector<Camera>& cameras, const std::vector<int>& image_ids,
                          int batch_size, Rng& rng) {
  std::vector<std::pair<int, std::pair<int, int>>> dims;
  for (int id : image_ids)
    dims.push_back({id, {cameras[size_t(id)].width, cameras[size_t(id)].height}});
  return sample_uniform(dims, batch_size, rng);
}

PixelBatch sample_hybrid(const ErrorMapSet& errs, const std::vector<Camera>& cameras,
                         const std::vector<int>& image_ids, int batch_size,
                         double weighted_fraction, Rng& rng) {
  GF_CHECK(weighted_fraction >= 0.0 && weighted_fraction <= 1.0,
           "weighted_fraction must be in [0,1]");
  const int n_weighted = int(std::llround(weighted_fraction * batch_size));
  PixelBatch batch;
  if (n_weighted > 0) batch = sample_weighted(errs, image_ids, n_weighted, rng);
  if (batch_size - n_weighted > 0) {
    PixelBatch uni = sample_uniform(cameras, image_ids, batch_size - n_weighted, rng);
    batch.entries.insert(batch.entries.end(), uni.entries.begin(), uni.entries.end());
  }
  return batch;
}

void save_error_maps(const std::string& dir, const ErrorMapSet& errs) {
  std::filesystem::create_directories(dir);
  for (const auto& m : errs.maps) {
    char name[64];
    std::snprintf(name, sizeof(name), "error_map_%04d", m.image_id);
    ImageF raw(m.full_w, m.full_h, 1);
    raw.data = m.full;
    write_raw(dir + "/" + name + ".raw", raw);
    write_colormapped_png(dir + "/" + name + ".png", m.full, m.full_w, m.full_h);
  }
}

}  // namespace gfnerf
