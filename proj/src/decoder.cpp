#include "gfnerf/decoder.h"

#include <cstring>

#include <json.hpp>

#include "gfnerf/serial.h"

namespace gfnerf {

void dir_encoding(const Vec3& d, std::span<float> out) {
  GF_CHECK(out.size() == kShDim, "dir_encoding span must have 16 entries");
  sh_encoding<float>(d.x, d.y, d.z, out.data());
}

namespace {

void he_uniform_init(Mlp<float>& mlp, Rng& rng) {
  // He-uniform everywhere, output layer included. The hash features start
  // near zero, so the initial field is still gray / low density, while the
  // table gradient keeps a healthy path through the output weights (a tiny
  // output init starves it and the density bias then collapses the field
  // to transparent before any geometry can form).
  for (auto& l : mlp.layers) {
    const float limit = std::sqrt(6.f / float(l.in));
    for (float& v : l.w) v = rng.uniformf(-limit, limit);
    std::fill(l.b.begin(), l.b.end(), 0.f);
  }
}

}  // namespace

RadianceDecoder make_decoder(const DecoderInit& init) {
  GF_CHECK(init.hidden_layers >= 1, "need at least one hidden layer");
  RadianceDecoder dec;
  dec.geo_feats = init.geo_feats;

  dec.density_mlp.add_layer(init.feature_dim, init.hidden, Activation::kRelu);
  for (int i = 1; i < init.hidden_layers; ++i)
    dec.density_mlp.add_layer(init.hidden, init.hidden, Activation::kRelu);
  dec.density_mlp.add_layer(init.hidden, 1 + init.geo_feats, Activation::kNone);

  dec.color_mlp.add_layer(init.geo_feats + kShDim, init.hidden, Activation::kRelu);
  for (int i = 1; i < init.hidden_layers; ++i)
    dec.color_mlp.add_layer(init.hidden, init.hidden, Activation::kRelu);
  dec.color_mlp.add_layer(init.hidden, 3, Activation::kNone);

  Rng rng(init.seed ^ 0xDEC0DE55ull);
  he_uniform_init(dec.density_mlp, rng);
  he_uniform_init(dec.color_mlp, rng);
  // start near-transparent (sigma = softplus(-3) ~ 0.05): empty space then
  // matches the background from step one and density only has to grow
  // where content demands it, instead of racing a global fog-removal
  // gradient that can overshoot into a dead transparent state
  dec.density_mlp.layers.back().b[0] = -3.f;
  return dec;
}

RadianceDecoder zero_like(const RadianceDecoder& dec) { return zero_like_t(dec); }

namespace {

void append_mlp(std::vector<uint8_t>& payload, const Mlp<float>& mlp) {
  for (const auto& l : mlp.layers) {
    const uint8_t* w = reinterpret_cast<const uint8_t*>(l.w.data());
    payload.insert(payload.end(), w, w + l.w.size() * sizeof(float));
    const uint8_t* b = reinterpret_cast<const uint8_t*>(l.b.data());
    payload.insert(payload.end(), b, b + l.b.size() * sizeof(float));
  }
}

nlohmann::json mlp_header(const Mlp<float>& mlp) {
  nlohmann::json dims = nlohmann::json::array();
  nlohmann::json acts = nlohmann::json::array();
  dims.push_back(mlp.layers.front().in);
  for (const auto& l : mlp.layers) {
    dims.push_back(l.out);
    acts.push_back(l.act == Activation::kRelu ? "relu" : "none");
  }
  return {{"dims", dims}, {"act", acts}};
}

Mlp<float> mlp_from_header(const nlohmann::json& h, const std::vector<uint8_t>& payload,
                           size_t& cursor) {
  Mlp<float> mlp;
  const auto& dims = h.at("dims");
  const auto& acts = h.at("act");
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    Activation a = acts[i].get<std::string>() == "relu" ? Activation::kRelu : Activation::kNone;
    mlp.add_layer(dims[i].get<int>(), dims[i + 1].get<int>(), a);
  }
  for (auto& l : mlp.layers) {
    size_t wn = l.w.size() * sizeof(float), bn = l.b.size() * sizeof(float);
    GF_CHECK(cursor + wn + bn <= payload.size(), "decoder payload truncated");
    std::memcpy(l.w.data(), payload.data() + cursor, wn);
    cursor += wn;
    std::memcpy(l.b.data(), payload.data() + cursor, bn);
    cursor += bn;
  }
  return mlp;
}

}  // namespace

void save_decoder(const std::string& path, const RadianceDecoder& dec) {
  nlohmann::json header = {{"density", mlp_header(dec.density_mlp)},
                           {"color", mlp_header(dec.color_mlp)},
                           {"geo_feats", dec.geo_feats},
                           {"frozen", dec.frozen}};
  std::vector<uint8_t> payload;
  append_mlp(payload, dec.density_mlp);
  append_mlp(payload, dec.color_mlp);
  write_blob(path, CheckpointBlob{"GFN-DEC1", header.dump(), std::move(payload)});
}

RadianceDecoder load_decoder(const std::string& path) {
  CheckpointBlob blob = read_blob(path, "GFN-DEC1");
  nlohmann::json header = nlohmann::json::parse(blob.header);
  RadianceDecoder dec;
  size_t cursor = 0;
  dec.density_mlp = mlp_from_header(header.at("density"), blob.payload, cursor);
  dec.color_mlp = mlp_from_header(header.at("color"), blob.payload, cursor);
  GF_CHECK(cursor == blob.payload.size(), "decoder payload size mismatch");
  dec.geo_feats = header.at("geo_feats").get<int>();
  dec.frozen = header.at("frozen").get<bool>();
  return dec;
}

}  // namespace gfnerf
