#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "popform/errors.hpp"
#include "popform/io.hpp"
#include "support/fixtures.hpp"

using namespace popform;

namespace {

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const InvalidInput& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("dataset CSV") {
  const auto ds = frf::replicate_dataset(
      frf::synthesize_population(frf::default_population(), {48.0, 56.0}, 30), 2, 0.05, 3);
  SUBCASE("round trip is exact") {
    const auto text = io::dataset_to_csv(ds, "config_hash=abc seed=3");
    CHECK(text.rfind("# config_hash=abc seed=3\nfrequency_hz,real,imag,label\n", 0) == 0);
    const auto back = io::dataset_from_csv(text);
    REQUIRE(back.records.size() == ds.records.size());
    for (std::size_t r = 0; r < ds.records.size(); ++r) {
      CHECK(back.records[r].frequency_hz == ds.records[r].frequency_hz);
      CHECK(back.records[r].real_part == ds.records[r].real_part);
      CHECK(back.records[r].imag_part == ds.records[r].imag_part);
      CHECK(back.records[r].member_label == ds.records[r].member_label);
    }
    CHECK(back.band.low_hz == 48.0);
    CHECK(back.band.high_hz == 56.0);
    CHECK(io::dataset_to_csv(back, "config_hash=abc seed=3") == text);
  }
  SUBCASE("errors carry line numbers") {
    const std::string truncated = "frequency_hz,real,imag,label\n48,1,2,a\n49,1\n";
    CHECK(message_of([&] { io::dataset_from_csv(truncated); }).find("line 3") != std::string::npos);
    const std::string garbage = "frequency_hz,real,imag,label\n48,1,2,a\n49,x,2,a\n";
    CHECK(message_of([&] { io::dataset_from_csv(garbage); }).find("line 3") != std::string::npos);
    CHECK_THROWS_AS(io::dataset_from_csv("freq,re,im\n"), InvalidInput);
    CHECK_THROWS_AS(io::dataset_from_csv(""), InvalidInput);
    CHECK_THROWS_AS(io::dataset_to_csv(ds, "two\nlines"), InvalidInput);
  }
  SUBCASE("comments are skipped anywhere") {
    const auto d = io::dataset_from_csv("# a\n\nfrequency_hz,real,imag,label\n48,1,2,a\n# b\n49,1,2,a\n");
    REQUIRE(d.records.size() == 1);
    CHECK(d.records[0].size() == 2);
  }
}

TEST_CASE("blade specs JSON") {
  const auto specs = frf::default_population(true);
  const auto back = io::specs_from_json(io::specs_to_json(specs));
  REQUIRE(back.size() == specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    CHECK(back[i].id == specs[i].id);
    REQUIRE(back[i].modes.size() == specs[i].modes.size());
    CHECK(back[i].modes[1].natural_frequency_hz == specs[i].modes[1].natural_frequency_hz);
    CHECK(back[i].modes[0].residue == specs[i].modes[0].residue);
  }
  const auto one = io::specs_from_json(R"({"id": "x", "modes": [{"fn_hz": 50, "zeta": 0.02, "residue": 1}]})");
  CHECK(one.size() == 1);
  CHECK_THROWS_AS(io::specs_from_json("[]"), InvalidInput);
  CHECK(message_of([] { io::specs_from_json("[\n{\"id\": \"x\",\n \"modes\": [}\n]"); }).find("line 3") !=
        std::string::npos);
  CHECK_THROWS_AS(io::specs_from_json(R"([{"id": "x", "modes": [{"fn_hz": 50, "zeta": 2, "residue": 1}]}])"),
                  InvalidInput);
}

TEST_CASE("model and form JSON") {
  const auto p = fixture::population(200, 4, 40);
  const auto form = fixture::truth_form(p);
  const auto grid = frf::linear_grid({48.0, 56.0}, 37);

  SUBCASE("model round trip keeps predictions bit-stable") {
    const auto& m = form.real_model;
    const auto back = io::model_from_json(io::model_to_json(m));
    CHECK(back.elbo() == m.elbo());
    CHECK(back.elbo_trace() == m.elbo_trace());
    CHECK(back.responsibilities() == m.responsibilities());
    const auto a = omgp::predict(m, grid);
    const auto b = omgp::predict(back, grid);
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK((a[k].mean - b[k].mean).cwiseAbs().maxCoeff() <= 1e-12 * a[k].mean.cwiseAbs().maxCoeff());
      CHECK((a[k].covariance - b[k].covariance).cwiseAbs().maxCoeff() <=
            1e-12 * a[k].covariance.cwiseAbs().maxCoeff());
    }
    CHECK(io::model_to_json(back) == io::model_to_json(m));
  }
  SUBCASE("form round trip") {
    const auto text = io::form_to_json(form);
    const auto back = io::form_from_json(text);
    CHECK(back.band.low_hz == 48.0);
    CHECK(back.imag_model.part() == gp::Part::Imaginary);
    CHECK(io::form_to_json(back) == text);
  }
  SUBCASE("bad documents") {
    CHECK_THROWS_AS(io::model_from_json("{}"), InvalidInput);
    CHECK_THROWS_AS(io::model_from_json("not json"), InvalidInput);
    auto text = io::model_to_json(form.real_model);
    const auto pos = text.find("\"version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 12, "\"version\": 9");
    CHECK(message_of([&] { io::model_from_json(text); }).find("version") != std::string::npos);
  }
}

TEST_CASE("atomic writes") {
  const auto dir = std::filesystem::temp_directory_path() / "popform_io_test";
  std::filesystem::remove_all(dir);
  const auto path = dir / "nested" / "out.txt";
  io::write_text_atomic(path, "first");
  io::write_text_atomic(path, "second");
  CHECK(io::read_text(path) == "second");
  CHECK_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  CHECK_THROWS_AS(io::read_text(dir / "missing"), InvalidInput);
  std::filesystem::remove_all(dir);
}

TEST_CASE("shortest round-trip formatting") {
  for (double v : {0.1, 1.0 / 3.0, 48.0, -1e-300, 6.02214076e23}) CHECK(std::stod(io::format_double(v)) == v);
  CHECK(io::format_double(48.0) == "48");
}
