#include "popform/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "popform/errors.hpp"

namespace popform::io {

using nlohmann::json;

namespace {

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string(what) + ": malformed JSON at line " +
                       std::to_string(line_of(text, e.byte)) + ": " + e.what());
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw InvalidInput(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidInput(where + ": key '" + key + "' has the wrong type");
  }
}

double parse_number(const std::string& field, std::size_t line) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
  if (begin < end && *begin == '+') ++begin;
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw InvalidInput("dataset CSV line " + std::to_string(line) + ": '" + field +
                       "' is not a number");
  return v;
}

json bounds_json(const omgp::Bounds& b) { return json::array({b.lower, b.upper}); }

omgp::Bounds bounds_from(const json& j, const char* key) {
  const auto v = get<std::vector<double>>(j, key, "model boxes");
  if (v.size() != 2) throw InvalidInput(std::string("model boxes: '") + key + "' needs two values");
  return {v[0], v[1]};
}

json model_json(const omgp::OmgpModel& model) {
  json j;
  j["format"] = "popform-omgp";
  j["version"] = kModelFormatVersion;
  j["part"] = gp::to_string(model.part());
  j["k"] = model.k();
  j["n"] = model.n();
  j["sigma"] = model.sigma();
  json comps = json::array();
  for (const auto& c : model.components()) {
    const auto& p = c.params;
    comps.push_back({{"signal_variance", p.kernel.signal_variance},
                     {"lengthscale", p.kernel.lengthscale},
                     {"natural_frequency_hz", p.mean.natural_frequency_hz},
                     {"damping_ratio", p.mean.damping_ratio},
                     {"residue", p.mean.residue},
                     {"sign", p.mean.sign}});
  }
  j["components"] = comps;
  const auto& r = model.responsibilities();
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(r.size()));
  for (Eigen::Index i = 0; i < r.rows(); ++i)
    for (Eigen::Index k = 0; k < r.cols(); ++k) flat.push_back(r(i, k));
  j["responsibilities"] = flat;
  j["x"] = std::vector<double>(model.x().begin(), model.x().end());
  j["y"] = std::vector<double>(model.y().begin(), model.y().end());
  j["elbo"] = model.elbo();
  j["elbo_trace"] = model.elbo_trace();
  j["seed"] = model.seed();
  const auto& b = model.boxes();
  j["boxes"] = {{"signal_variance", bounds_json(b.signal_variance)},
                {"lengthscale", bounds_json(b.lengthscale)},
                {"natural_frequency_hz", bounds_json(b.natural_frequency_hz)},
                {"damping_ratio", bounds_json(b.damping_ratio)},
                {"residue", bounds_json(b.residue)},
                {"sigma", bounds_json(b.sigma)}};
  j["warnings"] = model.warnings();
  j["active_bounds"] = model.active_bounds();
  return j;
}

omgp::OmgpModel model_from(const json& j) {
  const std::string where = "model";
  if (get<std::string>(j, "format", where) != "popform-omgp")
    throw InvalidInput("model: unrecognised format tag");
  const int version = get<int>(j, "version", where);
  if (version != kModelFormatVersion)
    throw InvalidInput("model: unsupported format version " + std::to_string(version));
  gp::Part part;
  try {
    part = gp::part_from_string(get<std::string>(j, "part", where));
  } catch (const std::exception& e) {
    throw InvalidInput(std::string("model: ") + e.what());
  }
  const auto k = get<std::size_t>(j, "k", where);
  auto x = get<std::vector<double>>(j, "x", where);
  auto y = get<std::vector<double>>(j, "y", where);
  const auto flat = get<std::vector<double>>(j, "responsibilities", where);
  if (flat.size() != x.size() * k) throw InvalidInput("model: responsibilities must be N x K");

  std::vector<omgp::ComponentParams> comps;
  if (!j.at("components").is_array() || j.at("components").size() != k)
    throw InvalidInput("model: 'components' must hold K entries");
  for (std::size_t c = 0; c < k; ++c) {
    const json& cj = j.at("components")[c];
    const std::string cw = "model component " + std::to_string(c);
    omgp::ComponentParams p;
    p.kernel.signal_variance = get<double>(cj, "signal_variance", cw);
    p.kernel.lengthscale = get<double>(cj, "lengthscale", cw);
    p.mean.natural_frequency_hz = get<double>(cj, "natural_frequency_hz", cw);
    p.mean.damping_ratio = get<double>(cj, "damping_ratio", cw);
    p.mean.residue = get<double>(cj, "residue", cw);
    p.mean.sign = get<int>(cj, "sign", cw);
    p.mean.part = part;
    p.kernel.validate();
    p.mean.validate();
    comps.push_back(p);
  }

  omgp::Matrix resp(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t c = 0; c < k; ++c)
      resp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = flat[i * k + c];

  omgp::OmgpModel model(std::move(x), std::move(y), part, std::move(comps),
                        get<double>(j, "sigma", where), std::move(resp));
  model.set_trace(get<std::vector<double>>(j, "elbo_trace", where));
  model.set_seed(get<std::uint64_t>(j, "seed", where));
  const json& bj = j.at("boxes");
  omgp::HyperBoxes boxes;
  boxes.signal_variance = bounds_from(bj, "signal_variance");
  boxes.lengthscale = bounds_from(bj, "lengthscale");
  boxes.natural_frequency_hz = bounds_from(bj, "natural_frequency_hz");
  boxes.damping_ratio = bounds_from(bj, "damping_ratio");
  boxes.residue = bounds_from(bj, "residue");
  boxes.sigma = bounds_from(bj, "sigma");
  boxes.validate();
  model.set_boxes(boxes);
  for (const auto& w : get<std::vector<std::string>>(j, "warnings", where)) model.add_warning(w);
  model.set_active_bounds(get<std::vector<std::string>>(j, "active_bounds", where));
  return model;
}

novelty::FormPair form_from(const json& j) {
  if (get<std::string>(j, "format", "form") != "popform-form")
    throw InvalidInput("form: unrecognised format tag");
  novelty::FormPair form;
  form.band = {get<double>(j.at("band"), "low_hz", "form band"),
               get<double>(j.at("band"), "high_hz", "form band")};
  if (!j.contains("real") || !j.contains("imag"))
    throw InvalidInput("form: needs 'real' and 'imag' models");
  form.real_model = model_from(j.at("real"));
  form.imag_model = model_from(j.at("imag"));
  form.validate();
  return form;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string dataset_to_csv(const frf::FrfDataset& dataset, const std::string& comment) {
  if (comment.find('\n') != std::string::npos)
    throw InvalidInput("dataset CSV: comment must be a single line");
  std::string out = comment.empty() ? "" : "# " + comment + "\n";
  out += "frequency_hz,real,imag,label\n";
  for (const auto& rec : dataset.records) {
    const std::string label = rec.member_label.value_or("");
    if (label.find_first_of(",\"\n") != std::string::npos)
      throw InvalidInput("dataset CSV: label '" + label + "' contains a reserved character");
    for (std::size_t i = 0; i < rec.size(); ++i) {
      out += format_double(rec.frequency_hz[i]);
      out += ',';
      out += format_double(rec.real_part[i]);
      out += ',';
      out += format_double(rec.imag_part[i]);
      out += ',';
      out += label;
      out += '\n';
    }
  }
  return out;
}

frf::FrfDataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (!header && std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (line != "frequency_hz,real,imag,label")
      throw InvalidInput("dataset CSV line " + std::to_string(line_no) +
                         ": expected header 'frequency_hz,real,imag,label'");
    header = true;
  }
  if (!header) throw InvalidInput("dataset CSV: missing header");

  frf::FrfDataset ds;
  frf::FrfRecord current;
  bool open = false;
  std::string current_label;
  const auto close = [&] {
    if (!open) return;
    try {
      current.validate();
    } catch (const InvalidInput& e) {
      throw InvalidInput("dataset CSV record ending before line " + std::to_string(line_no) + ": " +
                         e.what());
    }
    ds.records.push_back(std::move(current));
    current = {};
    open = false;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != 4)
      throw InvalidInput("dataset CSV line " + std::to_string(line_no) + ": expected 4 fields, got " +
                         std::to_string(fields.size()));
    const double f = parse_number(fields[0], line_no);
    const double re = parse_number(fields[1], line_no);
    const double im = parse_number(fields[2], line_no);
    const std::string& label = fields[3];
    if (open && (label != current_label || !(f > current.frequency_hz.back()))) close();
    if (!open) {
      open = true;
      current_label = label;
      if (!label.empty()) current.member_label = label;
    }
    current.frequency_hz.push_back(f);
    current.real_part.push_back(re);
    current.imag_part.push_back(im);
  }
  ++line_no;
  close();
  if (ds.records.empty()) throw InvalidInput("dataset CSV: no records");
  double lo = ds.records.front().frequency_hz.front(), hi = ds.records.front().frequency_hz.back();
  for (const auto& r : ds.records) {
    lo = std::min(lo, r.frequency_hz.front());
    hi = std::max(hi, r.frequency_hz.back());
  }
  ds.band = {lo, hi};
  return ds;
}

std::string specs_to_json(const std::vector<frf::BladeSpec>& specs) {
  json arr = json::array();
  for (const auto& s : specs) {
    json modes = json::array();
    for (const auto& m : s.modes)
      modes.push_back({{"fn_hz", m.natural_frequency_hz}, {"zeta", m.damping_ratio},
                       {"residue", m.residue}});
    arr.push_back({{"id", s.id}, {"modes", modes}});
  }
  return arr.dump(2) + "\n";
}

std::vector<frf::BladeSpec> specs_from_json(const std::string& text) {
  json j = parse_json(text, "blade specs");
  if (j.is_object()) j = json::array({j});
  if (!j.is_array()) throw InvalidInput("blade specs: expected an array of specs");
  if (j.empty()) throw InvalidInput("blade specs: no specs given");
  std::vector<frf::BladeSpec> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string where = "blade spec " + std::to_string(i);
    frf::BladeSpec spec;
    spec.id = get<std::string>(j[i], "id", where);
    const json& modes = j[i].contains("modes") ? j[i]["modes"] : json();
    if (!modes.is_array()) throw InvalidInput(where + ": 'modes' must be an array");
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const std::string mw = where + " mode " + std::to_string(m);
      spec.modes.push_back({get<double>(modes[m], "fn_hz", mw), get<double>(modes[m], "zeta", mw),
                            get<double>(modes[m], "residue", mw)});
    }
    try {
      spec.validate();
    } catch (const InvalidInput& e) {
      throw InvalidInput(where + ": " + e.what());
    }
    out.push_back(std::move(spec));
  }
  return out;
}

std::string model_to_json(const omgp::OmgpModel& model) { return model_json(model).dump(1) + "\n"; }

omgp::OmgpModel model_from_json(const std::string& text) {
  const json j = parse_json(text, "model");
  try {
    return model_from(j);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("model: ") + e.what());
  }
}

std::string form_to_json(const novelty::FormPair& form) {
  json j;
  j["format"] = "popform-form";
  j["version"] = kModelFormatVersion;
  j["band"] = {{"low_hz", form.band.low_hz}, {"high_hz", form.band.high_hz}};
  j["real"] = model_json(form.real_model);
  j["imag"] = model_json(form.imag_model);
  return j.dump(1) + "\n";
}

novelty::FormPair form_from_json(const std::string& text) {
  const json j = parse_json(text, "form");
  try {
    return form_from(j);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("form: ") + e.what());
  }
}


std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace popform::io
