#pragma once

// File formats: datasets as CSV, blade specs and fitted models as JSON.
// Every writer goes through a temporary file and a rename.

#include <filesystem>
#include <string>
#include <vector>

#include "popform/frf_model.hpp"
#include "popform/novelty.hpp"
#include "popform/omgp.hpp"

namespace popform::io {

inline constexpr int kModelFormatVersion = 1;

// Header `frequency_hz,real,imag,label`. A new record starts whenever the
// label changes or the frequency fails to increase. Lines starting with '#'
// are comments; a non-empty `comment` is written as one above the header.
std::string dataset_to_csv(const frf::FrfDataset& dataset, const std::string& comment = "");
// The band is the frequency range spanned by the records.
frf::FrfDataset dataset_from_csv(const std::string& text);

// Array of `{"id", "modes": [{"fn_hz", "zeta", "residue"}]}`; a single
// object is accepted on input.
std::string specs_to_json(const std::vector<frf::BladeSpec>& specs);
std::vector<frf::BladeSpec> specs_from_json(const std::string& text);

std::string model_to_json(const omgp::OmgpModel& model);
omgp::OmgpModel model_from_json(const std::string& text);

std::string form_to_json(const novelty::FormPair& form);
novelty::FormPair form_from_json(const std::string& text);

std::string read_text(const std::filesystem::path& path);
// Writes to a sibling temporary and renames it over `path`.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

}  // namespace popform::io
