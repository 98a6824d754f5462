#include "hybrec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "hybrec/errors.hpp"
#include "hybrec/rng.hpp"

namespace hybrec {

namespace {

std::string item_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%04zu", i);
  return buf;
}

std::string session_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%05zu", i);
  return buf;
}

const char* const kColors[] = {"red", "blue", "green", "black", "white", "grey"};

}  // namespace

void SynthConfig::validate() const {
  if (items == 0 || clusters == 0 || items % clusters != 0 || items / clusters < 2) {
    throw ArgumentError("synth: items must split into clusters of at least 2");
  }
  if (p_successor < 0 || p_cluster < 0 || p_successor + p_cluster > 1) {
    throw ArgumentError("synth: transition probabilities out of range");
  }
  if (min_length < 1 || max_length < min_length) {
    throw ArgumentError("synth: invalid session length range");
  }
  if (sessions == 0) throw ArgumentError("synth: no sessions requested");
}

SynthData generate_synthetic(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t per = config.items / config.clusters;

  std::vector<ItemMeta> items;
  items.reserve(config.items);
  for (std::size_t i = 0; i < config.items; ++i) {
    const std::size_t c = i / per, j = i % per;
    ItemMeta m;
    m.item_id = item_name(i);
    m.locale = config.locale;
    m.title = "c" + std::to_string(c) + "a c" + std::to_string(c) + "b l" +
              std::to_string(c) + "x" + std::to_string(j) + " l" + std::to_string(c) +
              "x" + std::to_string((j + 1) % per);
    // cluster-level price band with item jitter
    const double base = 5.0 * std::pow(1.15, static_cast<double>(c));
    m.price = std::round(base * rng.uniform(0.8, 1.25) * 100) / 100;
    m.brand = "brand" + std::to_string(c);
    m.color = kColors[rng.below(std::size(kColors))];
    items.push_back(std::move(m));
  }

  // Zipf weights over a random popularity order.
  std::vector<std::size_t> order(config.items);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  std::vector<double> cdf(config.items);
  double total = 0;
  for (std::size_t r = 0; r < config.items; ++r) {
    total += 1.0 / std::pow(static_cast<double>(r + 1), config.zipf_exponent);
    cdf[r] = total;
  }
  auto zipf_item = [&] {
    const double u = rng.uniform() * total;
    auto r = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    return order[std::min(r, config.items - 1)];
  };
  auto step = [&](std::size_t cur) {
    const double u = rng.uniform();
    const std::size_t c = cur / per, j = cur % per;
    if (u < config.p_successor) return c * per + (j + 1) % per;
    if (u < config.p_successor + config.p_cluster) return c * per + rng.below(per);
    return zipf_item();
  };

  SynthData data;
  data.sessions.reserve(config.sessions);
  for (std::size_t s = 0; s < config.sessions; ++s) {
    const auto len = config.min_length + rng.below(config.max_length - config.min_length + 1);
    Session sess;
    sess.session_id = session_name(s);
    sess.locale = config.locale;
    std::size_t cur = zipf_item();
    sess.items.push_back(item_name(cur));
    for (std::size_t k = 1; k < len; ++k) {
      cur = step(cur);
      sess.items.push_back(item_name(cur));
    }
    sess.label = item_name(step(cur));
    data.sessions.push_back(std::move(sess));
  }
  data.catalog = Catalog(std::move(items));
  return data;
}

}  // namespace hybrec
