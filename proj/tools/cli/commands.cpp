#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "popform/errors.hpp"
#include "popform/io.hpp"
#include "popform/novelty.hpp"
#include "popform/omgp.hpp"
#include "popform/random.hpp"
#include "svg.hpp"

namespace popform::cli {

using nlohmann::json;

namespace {

json parse_file(const fs::path& path) {
  const std::string text = io::read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput("'" + path.string() + "': " + e.what());
  }
}

// Provenance block stamped into every JSON artifact.
json stamp(const RunConfig& config) {
  return {{"config", to_json(config)}, {"config_hash", config_hash(config)}, {"seed", config.seed}};
}

std::string csv_comment(const RunConfig& config) {
  return "config_hash=" + config_hash(config) + " seed=" + std::to_string(config.seed);
}

void write_json(const fs::path& path, const json& j, std::ostream& log) {
  io::write_text_atomic(path, j.dump(1) + "\n");
  log << "wrote " << path.string() << "\n";
}

void write_text(const fs::path& path, const std::string& text, std::ostream& log) {
  io::write_text_atomic(path, text);
  log << "wrote " << path.string() << "\n";
}

std::string safe_name(const std::string& id) {
  std::string out;
  for (char c : id) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out.empty() ? "member" : out;
}

omgp::FitConfig fit_config(const RunConfig& config) {
  omgp::FitConfig fc;
  fc.restarts = config.restarts;
  fc.max_em_iters = config.max_em_iters;
  fc.seed = config.seed;
  fc.sign = config.sign;
  return fc;
}

json diagnostics_json(const omgp::FitReport& report) {
  json out = json::array();
  for (const auto& d : report.restarts)
    out.push_back({{"restart", d.restart},
                   {"ok", d.ok},
                   {"final_elbo", d.ok ? json(d.final_elbo) : json(nullptr)},
                   {"em_iterations", d.em_iterations},
                   {"message", d.message}});
  return out;
}

struct LoadedThreshold {
  double value = 0.0;
  frf::FrequencyBand band;
};

LoadedThreshold load_threshold(const fs::path& path) {
  const json j = parse_file(path);
  try {
    LoadedThreshold t;
    t.value = j.at("threshold").get<double>();
    const auto b = j.at("band").get<std::vector<double>>();
    if (b.size() != 2) throw InvalidInput("threshold file: band needs two values");
    t.band = {b[0], b[1]};
    return t;
  } catch (const json::exception& e) {
    throw InvalidInput("threshold file '" + path.string() + "': " + e.what());
  }
}

bool same_band(const frf::FrequencyBand& a, const frf::FrequencyBand& b) {
  return a.low_hz == b.low_hz && a.high_hz == b.high_hz;
}

std::string band_text(const frf::FrequencyBand& b) {
  return io::format_double(b.low_hz) + "-" + io::format_double(b.high_hz) + " Hz";
}

void check_within(const frf::FrfDataset& data, const frf::FrequencyBand& band, const std::string& what) {
  for (const auto& rec : data.records)
    for (double f : rec.frequency_hz)
      if (!band.contains(f))
        throw InvalidInput(what + ": frequency " + io::format_double(f) + " Hz lies outside the band " +
                           band_text(band));
}

}  // namespace

int cmd_synth(const RunConfig& config, const SynthOptions& opts, std::ostream& log) {
  const auto specs = opts.specs ? io::specs_from_json(io::read_text(*opts.specs))
                                : frf::default_population(opts.second_mode);
  if (specs.empty()) throw InvalidInput("synth: the specs file lists no members");
  const auto clean = frf::synthesize_population(specs, config.band, config.grid_size);
  const auto noisy = frf::replicate_dataset(clean, config.copies_train, config.noise_fraction, config.seed);

  const std::string comment = csv_comment(config);
  write_text(opts.out_dir / "clean.csv", io::dataset_to_csv(clean, comment), log);
  write_text(opts.out_dir / "noisy.csv", io::dataset_to_csv(noisy, comment), log);
  write_text(opts.out_dir / "specs.json", io::specs_to_json(specs), log);

  json manifest = stamp(config);
  manifest["specs_source"] = opts.specs ? "file" : (opts.second_mode ? "default+second-mode" : "default");
  manifest["members"] = json::array();
  for (const auto& s : specs) manifest["members"].push_back(s.id);
  manifest["clean_records"] = clean.records.size();
  manifest["noisy_records"] = noisy.records.size();
  manifest["files"] = {"clean.csv", "noisy.csv", "specs.json"};
  write_json(opts.out_dir / "manifest.json", manifest, log);
  return 0;
}

int cmd_fit(const RunConfig& config, const FitOptions& opts, std::ostream& log) {
  const fs::path data_path = opts.data.value_or(opts.out_dir / "clean.csv");
  const auto data = io::dataset_from_csv(io::read_text(data_path));
  check_within(data, config.band, "fit data");
  const auto train = frf::build_training_set(data, config.copies_train, config.noise_fraction,
                                             config.n_train, config.seed);

  const omgp::FitConfig real_cfg = fit_config(config);
  log << "fitting real part (" << real_cfg.restarts << " restarts, N = " << train.size() << ")\n";
  const auto real = omgp::fit_with_report(train.inputs, train.targets_real, config.k, gp::Part::Real, real_cfg);

  omgp::FitConfig imag_cfg = real_cfg;
  imag_cfg.seed = derive_seed(config.seed, 1);
  imag_cfg.freeze_noise = config.freeze_noise;
  omgp::HyperSeed init{real.model.parameters(), real.model.sigma(), real.model.responsibilities()};
  log << "fitting imaginary part\n";
  const auto imag = omgp::fit_with_report(train.inputs, train.targets_imag, config.k, gp::Part::Imaginary,
                                          imag_cfg, init);

  novelty::FormPair form{real.model, imag.model, config.band};
  form.validate();
  json j = json::parse(io::form_to_json(form));
  j.update(stamp(config));
  j["data_file"] = data_path.filename().string();

  const auto map = omgp::map_train_labels(real.model);
  json training = {{"map_labels", map}};
  const bool labelled = std::none_of(train.labels.begin(), train.labels.end(),
                                     [](const std::string& s) { return s.empty(); });
  if (labelled) {
    std::vector<std::string> names;
    std::vector<std::size_t> truth;
    for (const auto& l : train.labels) {
      auto it = std::find(names.begin(), names.end(), l);
      if (it == names.end()) it = names.insert(names.end(), l);
      truth.push_back(static_cast<std::size_t>(it - names.begin()));
    }
    training["label_names"] = names;
    training["truth_labels"] = truth;
    if (std::max(names.size(), config.k) <= 9) {
      const double acc = omgp::permutation_accuracy(map, truth);
      training["map_accuracy"] = acc;
      log << "MAP label accuracy against the embedded truth: " << acc << "\n";
    }
  }
  j["training"] = training;
  j["restarts"] = json{{"real", diagnostics_json(real)}, {"imag", diagnostics_json(imag)}};
  j["best_restart"] = json{{"real", real.best_restart}, {"imag", imag.best_restart}};
  write_json(opts.out_dir / "form.json", j, log);
  return 0;
}

int cmd_threshold(const RunConfig& config, const ThresholdOptions& opts, std::ostream& log) {
  const auto form = io::form_from_json(io::read_text(opts.form.value_or(opts.out_dir / "form.json")));
  const auto pool = io::dataset_from_csv(io::read_text(opts.data.value_or(opts.out_dir / "clean.csv")));
  check_within(pool, form.band, "threshold pool");
  log << "threshold: " << config.trials << " trials x " << config.samples << " samples\n";
  const auto th = novelty::mc_threshold(form, pool, config.samples, config.trials, config.confidence,
                                        config.seed, config.noise_fraction);

  const auto [lo_it, hi_it] = std::minmax_element(th.indices.begin(), th.indices.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  constexpr std::size_t kBins = 50;
  const double width = hi > lo ? (hi - lo) / kBins : 1.0;
  std::vector<std::size_t> counts(kBins, 0);
  for (double v : th.indices) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    ++counts[std::min(b, kBins - 1)];
  }
  std::string hist = "# " + csv_comment(config) + "\nbin_low,bin_high,count\n";
  for (std::size_t b = 0; b < kBins; ++b)
    hist += io::format_double(lo + width * static_cast<double>(b)) + "," +
            io::format_double(lo + width * static_cast<double>(b + 1)) + "," + std::to_string(counts[b]) + "\n";
  write_text(opts.out_dir / "threshold_hist.csv", hist, log);

  json j = stamp(config);
  j["threshold"] = th.value;
  j["mean"] = th.mean;
  j["std_dev"] = th.std_dev;
  j["multiplier"] = th.multiplier;
  j["confidence"] = th.confidence;
  j["trials"] = th.trials;
  j["samples_per_trial"] = th.samples_per_trial;
  j["band"] = {form.band.low_hz, form.band.high_hz};
  j["index_min"] = lo;
  j["index_max"] = hi;
  write_json(opts.out_dir / "threshold.json", j, log);
  log << "threshold = " << th.value << " (mean " << th.mean << ", std " << th.std_dev << ", z "
      << th.multiplier << ")\n";
  return 0;
}

int cmd_sweep(const RunConfig& config, const SweepOptions& opts, std::ostream& log) {
  const auto form = io::form_from_json(io::read_text(opts.form.value_or(opts.out_dir / "form.json")));
  const auto specs = io::specs_from_json(io::read_text(opts.specs.value_or(opts.out_dir / "specs.json")));
  if (specs.empty()) throw InvalidInput("sweep: the specs file lists no members");
  const auto th = load_threshold(opts.threshold.value_or(opts.out_dir / "threshold.json"));
  if (!same_band(th.band, form.band))
    throw InvalidInput("sweep: threshold band " + band_text(th.band) + " differs from form band " +
                       band_text(form.band));
  if (!same_band(config.band, form.band))
    throw InvalidInput("sweep: configured band " + band_text(config.band) + " differs from form band " +
                       band_text(form.band));

  std::vector<double> shifts;
  for (double p : config.sweep_pct) shifts.push_back(p / 100.0);
  const auto grid = frf::linear_grid(form.band, config.grid_size);
  log << "sweep: " << specs.size() << " members x " << shifts.size() << " shifts x " << config.copies_test
      << " copies\n";
  const auto results = novelty::damage_sweep(form, specs, shifts, config.copies_test,
                                             config.noise_fraction, config.seed, grid, th.value);

  const std::string comment = csv_comment(config);
  std::string csv = "# " + comment + "\nmember,shift_pct,replica,index\n";
  json cells = json::array();
  std::map<std::string, std::vector<const novelty::SweepResult*>> by_member;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const double pct = config.sweep_pct[i % shifts.size()];
    for (std::size_t c = 0; c < r.indices.size(); ++c)
      csv += r.member + "," + io::format_double(pct) + "," + std::to_string(c) + "," +
             io::format_double(r.indices[c]) + "\n";
    cells.push_back({{"member", r.member},
                     {"shift_pct", pct},
                     {"mean", r.summary.mean},
                     {"q05", r.summary.q05},
                     {"q50", r.summary.q50},
                     {"q95", r.summary.q95},
                     {"threshold", th.value},
                     {"outlier_rate", r.summary.outlier_rate}});
    by_member[r.member].push_back(&r);
  }
  write_text(opts.out_dir / "sweep.csv", csv, log);
  json summary = stamp(config);
  summary["threshold"] = th.value;
  summary["cells"] = cells;
  write_json(opts.out_dir / "sweep_summary.json", summary, log);

  std::size_t colour = 0;
  for (const auto& spec : specs) {
    const auto& rows = by_member.at(spec.id);
    Plot plot;
    plot.title = "Novelty index vs frequency shift: " + spec.id;
    plot.x_label = "shift (%)";
    plot.y_label = "novelty index";
    plot.threshold = th.value;
    plot.comment = comment;
    ShadedBand spread;
    Series median{"median", {}, {}, palette(colour), true};
    Series mean{"mean", {}, {}, palette(colour + 1), false};
    spread.color = palette(colour);
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const double pct = config.sweep_pct[j];
      spread.x.push_back(pct);
      spread.lower.push_back(rows[j]->summary.q05);
      spread.upper.push_back(rows[j]->summary.q95);
      median.x.push_back(pct);
      median.y.push_back(rows[j]->summary.q50);
      mean.x.push_back(pct);
      mean.y.push_back(rows[j]->summary.mean);
    }
    plot.bands.push_back(spread);
    plot.series = {median, mean};
    write_text(opts.out_dir / ("sweep_" + safe_name(spec.id) + ".svg"), render_svg(plot), log);
    ++colour;
  }

  log << "magnitude band: " << config.band_samples << " samples per component\n";
  const auto bands = novelty::magnitude_band(form, grid, config.band_samples, config.seed);
  Plot plot;
  plot.title = "Form magnitude with 95% band";
  plot.x_label = "frequency (Hz)";
  plot.y_label = "|H|";
  plot.comment = comment;
  std::string band_csv = "# " + comment + "\nseries,frequency_hz,mean,lower,upper\n";
  for (const auto& b : bands) {
    const std::string name = "component " + std::to_string(b.component + 1);
    plot.bands.push_back({grid, b.lower, b.upper, palette(b.component)});
    plot.series.push_back({name, grid, b.mean, palette(b.component), false});
    for (std::size_t i = 0; i < grid.size(); ++i)
      band_csv += "component_" + std::to_string(b.component + 1) + "," + io::format_double(grid[i]) + "," +
                  io::format_double(b.mean[i]) + "," + io::format_double(b.lower[i]) + "," +
                  io::format_double(b.upper[i]) + "\n";
  }
  for (std::size_t m = 0; m < specs.size(); ++m) {
    const auto h = frf::accelerance_frf(specs[m].modes, grid);
    std::vector<double> mag(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) mag[i] = std::abs(h[i]);
    plot.series.push_back({specs[m].id, grid, mag, "#444444", false});
    for (std::size_t i = 0; i < grid.size(); ++i)
      band_csv += "member_" + safe_name(specs[m].id) + "," + io::format_double(grid[i]) + "," +
                  io::format_double(mag[i]) + ",,\n";
  }
  write_text(opts.out_dir / "band.csv", band_csv, log);
  write_text(opts.out_dir / "band.svg", render_svg(plot), log);
  return 0;
}

int cmd_score(const RunConfig& config, const ScoreOptions& opts, std::ostream& out, std::ostream& log) {
  const auto form = io::form_from_json(io::read_text(opts.form));
  const auto th = load_threshold(opts.threshold);
  if (!same_band(th.band, form.band))
    throw InvalidInput("score: threshold band " + band_text(th.band) + " differs from form band " +
                       band_text(form.band));
  const auto data = io::dataset_from_csv(io::read_text(opts.record));
  if (data.records.size() != 1)
    throw InvalidInput("score: expected exactly one record, found " + std::to_string(data.records.size()));
  const auto& record = data.records.front();
  check_within(data, form.band, "score record");

  const novelty::FormScorer scorer(form, record.frequency_hz);
  const auto report = scorer.report(record, th.value);
  json j = stamp(config);
  j["index"] = report.index;
  j["real_index"] = report.real_index;
  j["imag_index"] = report.imag_index;
  j["threshold"] = report.threshold;
  j["outlying"] = report.outlying;
  j["per_component_log_posterior"] = report.per_component_log_posterior;
  j["frequency_hz"] = record.frequency_hz;
  j["pointwise_trace"] = scorer.pointwise_trace(record);
  const json form_doc = parse_file(opts.form);
  if (form_doc.contains("config_hash")) j["form_config_hash"] = form_doc["config_hash"];
  if (form_doc.contains("seed")) j["form_seed"] = form_doc["seed"];

  const std::string text = j.dump(1) + "\n";
  out << text;
  if (opts.out) write_text(*opts.out, text, log);
  log << (report.outlying ? "outlying" : "inlying") << ": index " << report.index << " vs threshold "
      << th.value << "\n";
  return report.outlying ? 1 : 0;
}

namespace {

std::vector<double> parse_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < item.size() && item[used] == ' ') ++used;
    if (item.empty() || used != item.size())
      throw InvalidInput(std::string(flag) + ": '" + item + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw InvalidInput(std::string(flag) + ": empty list");
  return out;
}

struct Flags {
  std::optional<std::string> band, sweep;
  std::optional<std::size_t> k, restarts, copies, copies_test, n_train, grid_size, trials, samples,
      band_samples, max_em_iters;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise_frac, confidence;
  std::optional<int> sign;
  bool freeze_noise = false;
  std::optional<std::string> config;
  std::string out_dir = ".";
};

RunConfig effective_config(const Flags& f) {
  RunConfig c;
  if (f.config) c = load_config(*f.config, c);
  if (f.band) {
    const auto b = parse_list(*f.band, "--band");
    if (b.size() != 2) throw InvalidInput("--band: expected 'low,high'");
    c.band = {b[0], b[1]};
  }
  if (f.sweep) c.sweep_pct = parse_list(*f.sweep, "--sweep");
  if (f.k) c.k = *f.k;
  if (f.seed) c.seed = *f.seed;
  if (f.restarts) c.restarts = *f.restarts;
  if (f.copies) c.copies_train = *f.copies;
  if (f.copies_test) c.copies_test = *f.copies_test;
  if (f.noise_frac) c.noise_fraction = *f.noise_frac;
  if (f.n_train) c.n_train = *f.n_train;
  if (f.confidence) c.confidence = *f.confidence;
  if (f.grid_size) c.grid_size = *f.grid_size;
  if (f.trials) c.trials = *f.trials;
  if (f.samples) c.samples = *f.samples;
  if (f.band_samples) c.band_samples = *f.band_samples;
  if (f.max_em_iters) c.max_em_iters = *f.max_em_iters;
  if (f.sign) c.sign = *f.sign;
  if (f.freeze_noise) c.freeze_noise = true;
  c.validate();
  return c;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Population form fitting and FRF novelty scoring"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON config file (flags override it)");
  app.add_option("--band", f.band, "frequency band 'low,high' in Hz");
  app.add_option("--k", f.k, "number of mixture components");
  app.add_option("--seed", f.seed, "base random seed");
  app.add_option("--restarts", f.restarts, "random restarts per fit");
  app.add_option("--copies", f.copies, "noisy training copies per member");
  app.add_option("--copies-test", f.copies_test, "noisy test copies per sweep cell");
  app.add_option("--noise-frac", f.noise_frac, "noise level as a fraction of each part's peak");
  app.add_option("--n-train", f.n_train, "training points drawn from the noisy pool");
  app.add_option("--confidence", f.confidence, "threshold confidence level");
  app.add_option("--sweep", f.sweep, "frequency shifts in percent, comma separated");
  app.add_option("--grid-size", f.grid_size, "frequency points per synthesized record");
  app.add_option("--trials", f.trials, "Monte-Carlo threshold trials");
  app.add_option("--samples", f.samples, "records scored per threshold trial");
  app.add_option("--band-samples", f.band_samples, "posterior draws for the magnitude band");
  app.add_option("--max-em-iters", f.max_em_iters, "EM iteration cap per restart");
  app.add_option("--sign", f.sign, "mean-function sign, +1 or -1");
  app.add_flag("--freeze-noise", f.freeze_noise, "keep the real-part noise level for the imaginary fit");
  app.add_option("--out-dir", f.out_dir, "directory for artifacts");

  SynthOptions synth;
  std::string specs_path;
  auto* s_synth = app.add_subcommand("synth", "synthesize clean and noisy population datasets");
  s_synth->add_option("--specs", specs_path, "blade specs JSON");
  s_synth->add_flag("--second-mode", synth.second_mode, "give default members a weak second mode");

  std::string data_path, form_path, threshold_path, record_path, out_path;
  auto* s_fit = app.add_subcommand("fit", "fit the real and imaginary form");
  s_fit->add_option("--data", data_path, "clean dataset CSV");

  auto* s_threshold = app.add_subcommand("threshold", "Monte-Carlo novelty threshold");
  s_threshold->add_option("--form", form_path, "form JSON");
  s_threshold->add_option("--data", data_path, "normal-condition dataset CSV");

  auto* s_sweep = app.add_subcommand("sweep", "damage sweep and plots");
  s_sweep->add_option("--form", form_path, "form JSON");
  s_sweep->add_option("--specs", specs_path, "blade specs JSON");
  s_sweep->add_option("--threshold", threshold_path, "threshold JSON");

  auto* s_score = app.add_subcommand("score", "score one record; exit 1 when outlying");
  s_score->add_option("--form", form_path, "form JSON")->required();
  s_score->add_option("--threshold", threshold_path, "threshold JSON")->required();
  s_score->add_option("--record", record_path, "single-record CSV")->required();
  s_score->add_option("--out", out_path, "also write the verdict here");

  const auto opt_path = [](const std::string& s) -> std::optional<fs::path> {
    if (s.empty()) return std::nullopt;
    return fs::path(s);
  };

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    const RunConfig config = effective_config(f);
    err << "effective config: " << to_json(config).dump() << " (hash " << config_hash(config) << ")\n";
    const fs::path dir = f.out_dir;
    if (s_synth->parsed()) {
      synth.specs = opt_path(specs_path);
      synth.out_dir = dir;
      return cmd_synth(config, synth, err);
    }
    if (s_fit->parsed()) return cmd_fit(config, {opt_path(data_path), dir}, err);
    if (s_threshold->parsed())
      return cmd_threshold(config, {opt_path(form_path), opt_path(data_path), dir}, err);
    if (s_sweep->parsed())
      return cmd_sweep(config, {opt_path(form_path), opt_path(specs_path), opt_path(threshold_path), dir}, err);
    return cmd_score(config, {form_path, threshold_path, record_path, opt_path(out_path)}, out, err);
  } catch (const InvalidInput& e) {
    err << "input error: " << e.what() << "\n";
    return 2;
  } catch (const FitFailure& e) {
    err << "fit failure: " << e.what() << "\n";
    for (const auto& d : e.diagnostics()) err << "  " << d << "\n";
    return 3;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace popform::cli
