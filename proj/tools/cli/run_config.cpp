#include "run_config.hpp"

#include <cmath>
#include <cstdio>

#include "popform/errors.hpp"
#include "popform/io.hpp"

namespace popform::cli {

using nlohmann::json;

void RunConfig::validate() const {
  band.validate();
  if (k < 1) throw InvalidInput("config: k must be at least 1");
  if (restarts < 1) throw InvalidInput("config: restarts must be at least 1");
  if (copies_train < 1 || copies_test < 1) throw InvalidInput("config: copies must be at least 1");
  if (!(noise_fraction > 0.0 && std::isfinite(noise_fraction)))
    throw InvalidInput("config: noise_fraction must be positive");
  if (n_train < k) throw InvalidInput("config: n_train must be at least k");
  if (sweep_pct.empty()) throw InvalidInput("config: sweep grid is empty");
  for (double s : sweep_pct)
    if (!(s <= 0.0 && s >= -50.0)) throw InvalidInput("config: sweep shifts must lie in [-50, 0] %");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw InvalidInput("config: confidence must lie strictly between 0 and 1");
  if (grid_size < 2) throw InvalidInput("config: grid_size must be at least 2");
  if (trials < 1 || samples < 1) throw InvalidInput("config: trials and samples must be positive");
  if (band_samples < 2) throw InvalidInput("config: band_samples must be at least 2");
  if (max_em_iters < 1) throw InvalidInput("config: max_em_iters must be at least 1");
  if (sign != 1 && sign != -1) throw InvalidInput("config: sign must be +1 or -1");
}

json to_json(const RunConfig& c) {
  return {{"band", {c.band.low_hz, c.band.high_hz}},
          {"k", c.k},
          {"seed", c.seed},
          {"restarts", c.restarts},
          {"copies_train", c.copies_train},
          {"noise_fraction", c.noise_fraction},
          {"n_train", c.n_train},
          {"copies_test", c.copies_test},
          {"sweep_pct", c.sweep_pct},
          {"confidence", c.confidence},
          {"grid_size", c.grid_size},
          {"trials", c.trials},
          {"samples", c.samples},
          {"band_samples", c.band_samples},
          {"max_em_iters", c.max_em_iters},
          {"freeze_noise", c.freeze_noise},
          {"sign", c.sign}};
}

void merge_json(RunConfig& c, const json& j) {
  if (!j.is_object()) throw InvalidInput("config: expected a JSON object");
  const auto reject_unknown = to_json(c);
  for (const auto& [key, value] : j.items())
    if (!reject_unknown.contains(key)) throw InvalidInput("config: unknown key '" + key + "'");
  try {
    if (j.contains("band")) {
      const auto b = j.at("band").get<std::vector<double>>();
      if (b.size() != 2) throw InvalidInput("config: band needs [low, high]");
      c.band = {b[0], b[1]};
    }
    const auto take = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("k", c.k);
    take("seed", c.seed);
    take("restarts", c.restarts);
    take("copies_train", c.copies_train);
    take("noise_fraction", c.noise_fraction);
    take("n_train", c.n_train);
    take("copies_test", c.copies_test);
    take("sweep_pct", c.sweep_pct);
    take("confidence", c.confidence);
    take("grid_size", c.grid_size);
    take("trials", c.trials);
    take("samples", c.samples);
    take("band_samples", c.band_samples);
    take("max_em_iters", c.max_em_iters);
    take("freeze_noise", c.freeze_noise);
    take("sign", c.sign);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  const std::string text = io::read_text(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput("config '" + path.string() + "': " + e.what());
  }
  merge_json(base, j);
  return base;
}

std::string config_hash(const RunConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(config).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace popform::cli
