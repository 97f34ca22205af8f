#include "doctest.h"

#include "ccml/ccml.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>

TEST_CASE("builtin structure handle") {
  ccml_structure* s = nullptr;
  REQUIRE(ccml_structure_builtin("heisenberg", &s) == CCML_OK);
  int n = 0, d = 0;
  CHECK(ccml_structure_dims(s, &n, &d) == CCML_OK);
  CHECK(n == 3);
  CHECK(d == 2);

  double x[3] = {0.2, -0.4, 0.1}, v[3] = {1.0, 0.0, 0.2}, value = 0;
  int finite = -1;
  CHECK(ccml_horizontal_norm(s, x, v, &value, &finite) == CCML_OK);
  CHECK(finite == 1);
  CHECK(value == doctest::Approx(1.0).epsilon(1e-12));
  double e3[3] = {0, 0, 1};
  CHECK(ccml_horizontal_norm(s, x, e3, &value, &finite) == CCML_OK);
  CHECK(finite == 0);
  CHECK(std::isinf(value));

  int r = 0, step = 0;
  CHECK(ccml_rank(s, x, &r) == CCML_OK);
  CHECK(r == 2);
  CHECK(ccml_hormander_step(s, x, 3, &step) == CCML_OK);
  CHECK(step == 2);
  CHECK(ccml_hormander_step(s, x, 1, &step) == CCML_OK);
  CHECK(step == 0);
  ccml_structure_free(s);
}

TEST_CASE("errors are reported through status codes and the last error") {
  ccml_structure* s = nullptr;
  CHECK(ccml_structure_builtin("klein", &s) == CCML_ERR_CONFIG);
  CHECK(std::string(ccml_last_error()).find("klein") != std::string::npos);
  CHECK(ccml_structure_builtin(nullptr, &s) == CCML_ERR_CONFIG);
  CHECK(ccml_structure_from_json("{not json", &s) == CCML_ERR_CONFIG);
  CHECK(ccml_structure_from_json(R"({"n":2,"fields":[[1,0],[0,1,2]]})", &s) == CCML_ERR_CONFIG);
  CHECK(std::string(ccml_last_error()).find("/fields/1") != std::string::npos);

  REQUIRE(ccml_structure_builtin("grushin", &s) == CCML_OK);
  CHECK(std::string(ccml_last_error()).empty());
  double x[2] = {0, 0}, y[2] = {0.5, 0}, value = 0;
  CHECK(ccml_cc_distance(s, x, y, R"({"K": 8, "bogus": 1})", &value, nullptr) == CCML_ERR_CONFIG);
  double far[2] = {0.5, 0}, eerr = 0;
  CHECK(ccml_cc_distance(s, x, far, R"({"K": 8, "restarts": 2})", &value, &eerr) == CCML_OK);
  CHECK(value == doctest::Approx(0.5).epsilon(0.02));
  CHECK(eerr < 1e-3);

  ccml_sequence* q = nullptr;
  CHECK(ccml_sequence_new(s, R"({"levels": 0})", &q) == CCML_ERR_CONFIG);
  ccml_structure_free(s);
}

TEST_CASE("custom structure and sequence handles") {
  const char* spec = R"({"name":"heis","n":3,"fields":[
      [1, 0, {"exps":[0,1,0],"coef":-0.5}],
      [0, 1, {"exps":[1,0,0],"coef":0.5}]]})";
  ccml_structure* s = nullptr;
  REQUIRE(ccml_structure_from_json(spec, &s) == CCML_OK);
  ccml_sequence* q = nullptr;
  REQUIRE(ccml_sequence_new(s, R"({"levels": 3})", &q) == CCML_OK);
  int levels = 0;
  CHECK(ccml_sequence_levels(q, &levels) == CCML_OK);
  CHECK(levels == 3);

  double x[3] = {0.1, 0.2, 0.3}, v[3] = {1, 0, -0.1}, rho = 0;
  int finite = 0;
  REQUIRE(ccml_horizontal_norm(s, x, v, &rho, &finite) == CCML_OK);
  double prev = 0.0;
  for (int l = 1; l <= 3; ++l) {
    double f = 0;
    CHECK(ccml_sequence_value(q, l, x, v, &f) == CCML_OK);
    CHECK(f > prev);
    CHECK(f < rho);
    prev = f;
  }
  double f = 0;
  CHECK(ccml_sequence_value(q, 4, x, v, &f) == CCML_ERR_CONFIG);
  double outside[3] = {2, 0, 0};
  CHECK(ccml_sequence_value(q, 1, outside, v, &f) == CCML_ERR_CONFIG);
  ccml_sequence_free(q);
  ccml_structure_free(s);
}

TEST_CASE("grid distance through the C API") {
  ccml_structure* s = nullptr;
  REQUIRE(ccml_structure_builtin("euclidean", &s) == CCML_OK);
  ccml_sequence* q = nullptr;
  REQUIRE(ccml_sequence_new(s, R"({"levels": 2})", &q) == CCML_OK);
  double x[2] = {-0.5, 0}, y[2] = {0.5, 0}, value = 0, err = -1;
  CHECK(ccml_grid_distance(q, 2, x, y, 0.05, 2, &value, &err) == CCML_OK);
  CHECK(value > 0.75);
  CHECK(value < 1.0);
  CHECK(err >= 0.0);
  CHECK(ccml_grid_distance(q, 2, x, y, -1.0, 2, &value, &err) == CCML_ERR_CONFIG);
  ccml_sequence_free(q);
  ccml_structure_free(s);
}

TEST_CASE("run through the C API") {
  auto out = (std::filesystem::temp_directory_path() / "ccml_test_capi_run").string();
  std::filesystem::remove_all(out);
  int code = -1;
  CHECK(ccml_run("info", R"({"structure":{"builtin":"grushin"}})", out.c_str(), 0, 1, &code) == CCML_OK);
  CHECK(code == 0);
  CHECK(std::filesystem::exists(std::filesystem::path(out) / "rank_map.csv"));
  CHECK(std::filesystem::exists(std::filesystem::path(out) / "config.resolved.json"));
  CHECK(ccml_run("info", "{", out.c_str(), 0, 1, &code) == CCML_OK);
  CHECK(code == 1);
  CHECK(ccml_run("info", "{}", out.c_str(), 0, 1, &code) == CCML_OK);
  CHECK(code == 1);
  CHECK(ccml_run_file("info", "/nonexistent/config.json", out.c_str(), 0, 1, &code) == CCML_OK);
  CHECK(code == 1);
  CHECK(ccml_run(nullptr, "{}", out.c_str(), 0, 1, &code) == CCML_ERR_CONFIG);
  CHECK(std::strlen(ccml_version()) > 0);
}
