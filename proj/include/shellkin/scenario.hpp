#pragma once

// Named, reproducible experiments: scenario files, parameter registry,
// validation with line numbers, and the runners that write fields.csv and
// summary.json.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"
#include "shellkin/energy.hpp"
#include "shellkin/error.hpp"
#include "shellkin/kinematics.hpp"
#include "shellkin/models.hpp"
#include "shellkin/stereo.hpp"
#include "shellkin/surface.hpp"
#include "shellkin/tracks.hpp"

namespace shellkin::scenario {

using OJ = nlohmann::ordered_json;

inline constexpr const char* kScenarioSchema = "shellkin-scenario/1";
inline constexpr const char* kFieldsSchema = "shellkin-fields/1";
inline constexpr const char* kSummarySchema = "shellkin-summary/1";

/// Scenario file is malformed or a parameter is out of range.
class ValidationError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// ---------------------------------------------------------------------------
// Parameter registry

enum class Check { positive, non_negative, fraction, colatitude, real, count, grid, integer, seed, text, flag, cameras };

struct Param {
  std::string path;  // dotted, e.g. "geometry.a"
  OJ value;          // default
  std::string unit;
  std::string help;
  Check check = Check::positive;
};

struct Builtin {
  std::string name;
  std::string pipeline;  // analytic | tracks | stereo
  std::string summary;
  std::vector<Param> params;
};

namespace detail {

inline std::vector<Param> common_params() {
  return {
      {"grid", 50, "points", "grid points per direction for the field table", Check::grid},
      {"seed", 1, "", "RNG seed for every random choice", Check::seed},
      {"material.E", 1.0, "N/mm^2", "Young's modulus", Check::positive},
      {"material.nu", 0.5, "", "Poisson ratio", Check::fraction},
      {"material.h", 0.3, "mm", "wall thickness", Check::positive},
  };
}

inline std::vector<Param> tube_params(double collapse) {
  return {
      {"geometry.a", 3.0, "mm", "tube radius", Check::positive},
      {"geometry.l0", 19.0, "mm", "unstrained length", Check::positive},
      {"geometry.l", 25.0, "mm", "mounted (pre-stretched) length, l >= l0", Check::positive},
      {"geometry.collapse", collapse, "", "fractional reduction of the minor half-width at mid-length",
       Check::fraction},
  };
}

inline std::vector<Param> dot_params() {
  return {
      {"dots.columns", 20, "", "dot columns along the axis, x1 = column * pitch", Check::count},
      {"dots.row_lo", -3, "", "first dot row, x2 = row * pitch (arc length from the face centre)", Check::integer},
      {"dots.row_hi", 3, "", "last dot row", Check::integer},
      {"dots.pitch", 1.0, "mm", "label spacing of the dot grid", Check::positive},
  };
}

inline Builtin make(std::string name, std::string pipeline, std::string summary, std::vector<Param> own) {
  Builtin b{std::move(name), std::move(pipeline), std::move(summary), std::move(own)};
  for (Param& p : common_params()) b.params.push_back(std::move(p));
  return b;
}

inline std::vector<Builtin> make_builtins() {
  std::vector<Builtin> out;
  out.push_back(make("sphere-inflate", "analytic", "sphere patch inflated from radius r0 to r1; the rotor is 1",
                     {{"geometry.r0", 3.0, "mm", "initial radius", Check::positive},
                      {"geometry.r1", 4.5, "mm", "final radius", Check::positive},
                      {"geometry.colatitude_lo", 45.0, "deg", "lower colatitude bound", Check::colatitude},
                      {"geometry.colatitude_hi", 135.0, "deg", "upper colatitude bound", Check::colatitude}}));
  out.push_back(make("plate-bend", "analytic", "flat plate rolled isometrically onto a cylinder",
                     {{"geometry.width", 10.0, "mm", "plate extent across the roll axis", Check::positive},
                      {"geometry.height", 10.0, "mm", "plate extent along the roll axis", Check::positive},
                      {"geometry.radius", 5.0, "mm", "roll radius", Check::positive}}));
  out.push_back(make("tube-squash", "analytic", "pre-stretched tube collapsing into a two-lobe section",
                     tube_params(0.7)));

  std::vector<Param> stereo = tube_params(0.5);
  for (Param& p : dot_params()) stereo.push_back(std::move(p));
  std::vector<Param> more = {
      {"dots.diameter", 0.7, "mm", "printed dot diameter", Check::positive},
      {"rig.distance", 200.0, "mm", "camera distance from the tube centre", Check::positive},
      {"rig.half_vergence", 10.0, "deg", "toe-in of each camera", Check::positive},
      {"camera.focal_length", 60.0, "mm", "lens focal length", Check::positive},
      {"camera.pixel_pitch", 0.02, "mm", "sensor pixel size", Check::positive},
      {"camera.width", 512, "px", "image width", Check::count},
      {"camera.height", 256, "px", "image height", Check::count},
      {"camera.k1", 0.0, "", "radial distortion coefficient", Check::real},
      {"cameras", nullptr, "", "two explicit camera objects; replaces rig.* and camera.*", Check::cameras},
      {"pairing.seeds", 10, "", "number of seed correspondences", Check::count},
      {"pairing.radius", 7.0, "px", "match radius after the homography", Check::positive},
      {"pairing.epipolar_tolerance", 1.5, "px", "symmetric epipolar distance bound, plus one quantization step", Check::positive},
      {"quantization", 0.0, "mm", "round detections to this object-space step (0: off)", Check::non_negative},
      {"fit.degree", 4, "", "polynomial degree per coordinate", Check::count},
  };
  for (Param& p : more) stereo.push_back(std::move(p));
  out.push_back(make("stereo-synthetic", "stereo",
                     "render, detect, pair and triangulate dots on the unstrained and squashed tube", stereo));

  std::vector<Param> tracks = tube_params(0.5);
  for (Param& p : dot_params()) tracks.push_back(std::move(p));
  std::vector<Param> track_more = {
      {"motion.amplitude", 0.2, "", "oscillation amplitude of the collapse fraction", Check::non_negative},
      {"motion.frequency", 500.0, "Hz", "oscillation frequency", Check::positive},
      {"sampling.rate", 12500.0, "Hz", "frame rate", Check::positive},
      {"sampling.duration", 0.0128, "s", "recording length", Check::positive},
      {"quantization", 0.1, "mm", "round positions to this step (0: off)", Check::non_negative},
      {"tracks.samples", "", "", "CSV of id,x1,x2,t,px,py,pz; empty: synthesize from the motion", Check::text},
      {"tracks.reference", "", "", "CSV of id,x1,x2,px,py,pz unstrained positions", Check::text},
      {"fit.terms", 8, "", "sinusoids per coordinate", Check::count},
      {"fit.phase", true, "", "fit a cosine partner for each sine", Check::flag},
      {"fit.degree", 4, "", "polynomial degree per coordinate", Check::count},
      {"time", 0.0006, "s", "evaluation time", Check::non_negative},
  };
  for (Param& p : track_more) tracks.push_back(std::move(p));
  out.push_back(make("tracks-replay", "tracks", "smooth dot tracks, fit surfaces, evaluate fields at one time",
                     tracks));
  return out;
}

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t next = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = row[j];
      row[j] = next;
    }
  }
  return row[b.size()];
}

/// Entries within a few edits of `name` or containing it, nearest first.
inline std::vector<std::string> closest(std::string_view name, const std::vector<std::string>& pool) {
  std::vector<std::pair<std::size_t, std::string>> hits;
  std::size_t limit = std::max<std::size_t>(2, name.size() / 4);
  for (const std::string& p : pool) {
    std::size_t d = edit_distance(name, p);
    if (d <= limit || (!name.empty() && p.find(name) != std::string::npos)) hits.emplace_back(d, p);
  }
  std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> out;
  for (auto& h : hits) out.push_back(std::move(h.second));
  return out;
}

}  // namespace detail

inline const std::vector<Builtin>& builtins() {
  static const std::vector<Builtin> all = detail::make_builtins();
  return all;
}

inline std::vector<std::string> builtin_names() {
  std::vector<std::string> out;
  for (const Builtin& b : builtins()) out.push_back(b.name);
  return out;
}

inline const Builtin* find_builtin(std::string_view name) {
  for (const Builtin& b : builtins()) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

/// Built-in names close to `name`; every name when none is close.
inline std::vector<std::string> suggestions(std::string_view name) {
  auto near = detail::closest(name, builtin_names());
  return near.empty() ? builtin_names() : near;
}

inline const Builtin& require_builtin(std::string_view name) {
  if (const Builtin* b = find_builtin(name)) return *b;
  std::string msg = fmt::format("unknown scenario '{}'; did you mean: ", name);
  auto s = suggestions(name);
  for (std::size_t k = 0; k < s.size(); ++k) msg += (k ? ", " : "") + s[k];
  throw ValidationError(msg);
}

inline std::string describe(const Builtin& b) {
  std::string out = fmt::format("{} ({} pipeline)\n  {}\n\nparameters:\n", b.name, b.pipeline, b.summary);
  std::size_t w = 0, wv = 0;
  auto shown = [](const Param& p) { return p.value.dump() + (p.unit.empty() ? "" : " " + p.unit); };
  for (const Param& p : b.params) {
    w = std::max(w, p.path.size());
    wv = std::max(wv, shown(p).size());
  }
  for (const Param& p : b.params) out += fmt::format("  {:<{}}  {:<{}}  {}\n", p.path, w, shown(p), wv, p.help);
  return out;
}

/// Complete scenario file with every default spelled out.
inline OJ default_config(const Builtin& b) {
  OJ j;
  j["schema"] = kScenarioSchema;
  j["scenario"] = b.name;
  j["pipeline"] = b.pipeline;
  j["name"] = b.name;
  j["output"] = "out/" + b.name;
  for (const Param& p : b.params) {
    if (p.value.is_null()) continue;
    OJ* node = &j;
    std::string_view rest = p.path;
    for (auto dot = rest.find('.'); dot != std::string_view::npos; dot = rest.find('.')) {
      node = &(*node)[std::string(rest.substr(0, dot))];
      rest.remove_prefix(dot + 1);
    }
    (*node)[std::string(rest)] = p.value;
  }
  return j;
}

/// JSON Schema (draft 2020-12) of scenario files, generated from the registry.
inline OJ json_schema() {
  auto leaf = [](const Param& p) {
    OJ t;
    switch (p.check) {
      case Check::positive: t = {{"type", "number"}, {"exclusiveMinimum", 0}}; break;
      case Check::non_negative: t = {{"type", "number"}, {"minimum", 0}}; break;
      case Check::fraction: t = {{"type", "number"}, {"minimum", 0}, {"exclusiveMaximum", 1}}; break;
      case Check::colatitude: t = {{"type", "number"}, {"exclusiveMinimum", 0}, {"exclusiveMaximum", 180}}; break;
      case Check::real: t = {{"type", "number"}}; break;
      case Check::count: t = {{"type", "integer"}, {"minimum", 1}}; break;
      case Check::grid: t = {{"type", "integer"}, {"minimum", 3}}; break;
      case Check::integer: t = {{"type", "integer"}}; break;
      case Check::seed: t = {{"type", "integer"}, {"minimum", 0}}; break;
      case Check::text: t = {{"type", "string"}}; break;
      case Check::flag: t = {{"type", "boolean"}}; break;
      case Check::cameras:
        t = {{"type", {"array", "null"}}, {"minItems", 2}, {"maxItems", 2}, {"items", {{"type", "object"}}}};
        break;
    }
    t["description"] = p.help + (p.unit.empty() ? "" : " [" + p.unit + "]");
    t["default"] = p.value;
    return t;
  };
  OJ variants = OJ::array();
  for (const Builtin& b : builtins()) {
    OJ props;
    props["schema"] = {{"const", kScenarioSchema}};
    props["scenario"] = {{"const", b.name}};
    props["pipeline"] = {{"const", b.pipeline}};
    props["name"] = {{"type", "string"}};
    props["output"] = {{"type", "string"}, {"description", "output directory, relative to the working directory"}};
    for (const Param& p : b.params) {
      OJ* node = &props;
      std::string_view rest = p.path;
      for (auto dot = rest.find('.'); dot != std::string_view::npos; dot = rest.find('.')) {
        OJ& group = (*node)[std::string(rest.substr(0, dot))];
        if (group.is_null()) group = {{"type", "object"}, {"additionalProperties", false}, {"properties", OJ::object()}};
        node = &group["properties"];
        rest.remove_prefix(dot + 1);
      }
      (*node)[std::string(rest)] = leaf(p);
    }
    variants.push_back({{"title", b.name},
                        {"description", b.summary},
                        {"type", "object"},
                        {"required", {"scenario"}},
                        {"additionalProperties", false},
                        {"properties", props}});
  }
  return {{"$schema", "https://json-schema.org/draft/2020-12/schema"},
          {"title", "shellkin scenario"},
          {"oneOf", variants}};
}

// ---------------------------------------------------------------------------
// Scenario files

namespace detail {

/// Line of every object key and of every object or array inside an array,
/// keyed by dotted path (array elements by index).
inline std::map<std::string, int> key_lines(std::string_view text) {
  struct Frame {
    bool object;
    std::string path;
    int index = 0;
  };
  std::map<std::string, int> out;
  std::vector<Frame> stack;
  std::string key;
  bool expect_key = false;
  int line = 1;
  auto child = [&](const Frame& f, const std::string& name) { return f.path.empty() ? name : f.path + "." + name; };
  auto here = [&]() -> std::string {
    if (stack.empty()) return "";
    const Frame& f = stack.back();
    return f.object ? child(f, key) : child(f, std::to_string(f.index));
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '\n') {
      ++line;
    } else if (c == '"') {
      std::string s;
      for (++i; i < text.size() && text[i] != '"'; ++i) {
        if (text[i] == '\\' && i + 1 < text.size()) ++i;
        if (text[i] == '\n') ++line;
        s += text[i];
      }
      if (expect_key && !stack.empty() && stack.back().object) {
        key = s;
        out.emplace(child(stack.back(), key), line);
        expect_key = false;
      }
    } else if (c == '{' || c == '[') {
      std::string path = here();
      if (!stack.empty() && !stack.back().object) out.emplace(path, line);
      stack.push_back({c == '{', path});
      expect_key = c == '{';
    } else if (c == '}' || c == ']') {
      if (!stack.empty()) stack.pop_back();
      expect_key = false;
    } else if (c == ',' && !stack.empty()) {
      if (stack.back().object) expect_key = true;
      else ++stack.back().index;
    }
  }
  return out;
}

inline void flatten(const nlohmann::json& j, const std::string& prefix, std::vector<std::string>& paths) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) flatten(*it, path, paths);
    else paths.push_back(path);
  }
}

inline const nlohmann::json* lookup(const nlohmann::json& j, std::string_view path) {
  const nlohmann::json* node = &j;
  while (true) {
    auto dot = path.find('.');
    std::string head(path.substr(0, dot));
    if (!node->is_object() || !node->contains(head)) return nullptr;
    node = &(*node)[head];
    if (dot == std::string_view::npos) return node;
    path.remove_prefix(dot + 1);
  }
}

}  // namespace detail

struct Scenario {
  const Builtin* builtin = nullptr;
  std::string name;
  std::string source = "<memory>";
  std::filesystem::path base_dir = ".";
  std::string output;
  std::map<std::string, OJ> values;  // every parameter, defaults filled in

  const std::string& kind() const { return builtin->name; }
  const std::string& pipeline() const { return builtin->pipeline; }
  double number(const std::string& path) const { return values.at(path).get<double>(); }
  int integer(const std::string& path) const { return values.at(path).get<int>(); }
  std::string text(const std::string& path) const { return values.at(path).get<std::string>(); }
  bool flag(const std::string& path) const { return values.at(path).get<bool>(); }
  const OJ& value(const std::string& path) const { return values.at(path); }

  void set(const std::string& path, OJ v) {
    if (!values.contains(path)) throw ValidationError("unknown parameter '" + path + "'");
    values[path] = std::move(v);
  }
};

namespace detail {

inline void check_value(const Param& p, const nlohmann::json& v, const std::string& where) {
  auto fail = [&](const std::string& what) {
    throw ValidationError(fmt::format("{}: {} {}", where, p.path, what));
  };
  auto number = [&]() {
    if (!v.is_number()) fail("must be a number");
    return v.get<double>();
  };
  auto whole = [&]() {
    if (!v.is_number_integer()) fail("must be an integer");
    return v.get<std::int64_t>();
  };
  switch (p.check) {
    case Check::positive:
      if (!(number() > 0.0)) fail("must be positive");
      break;
    case Check::non_negative:
      if (!(number() >= 0.0)) fail("must be non-negative");
      break;
    case Check::fraction: {
      double x = number();
      if (!(x >= 0.0 && x < 1.0)) fail("must lie in [0, 1)");
      break;
    }
    case Check::colatitude: {
      double x = number();
      if (!(x > 0.0 && x < 180.0)) fail("must lie strictly between 0 and 180 degrees");
      break;
    }
    case Check::count:
      if (whole() < 1) fail("must be at least 1");
      break;
    case Check::grid:
      if (whole() < 3) fail("must be at least 3");
      break;
    case Check::real:
      number();
      break;
    case Check::integer:
      whole();
      break;
    case Check::seed:
      if (whole() < 0) fail("must be non-negative");
      break;
    case Check::text:
      if (!v.is_string()) fail("must be a string");
      break;
    case Check::flag:
      if (!v.is_boolean()) fail("must be true or false");
      break;
    case Check::cameras:
      if (!v.is_null() && !(v.is_array() && v.size() == 2)) fail("must be an array of two camera objects");
      break;
  }
}

}  // namespace detail

/// Parses and validates a scenario file. Errors name the source and line.
inline Scenario parse_scenario(std::string_view text, const std::string& source = "<memory>",
                               const std::filesystem::path& base_dir = ".") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n'));
    std::string what = e.what();
    auto colon = what.rfind(": ");
    throw ValidationError(fmt::format("{}:{}: syntax error: {}", source, line,
                                      colon == std::string::npos ? what : what.substr(colon + 2)));
  }
  auto lines = detail::key_lines(text);
  auto where = [&](const std::string& path) {
    auto it = lines.find(path);
    return it == lines.end() ? source : fmt::format("{}:{}", source, it->second);
  };
  if (!j.is_object()) throw ValidationError(source + ":1: scenario file must hold a JSON object");
  if (!j.contains("scenario") || !j["scenario"].is_string()) {
    throw ValidationError(source + ": missing string field 'scenario'");
  }
  Scenario s;
  s.source = source;
  s.base_dir = base_dir;
  try {
    s.builtin = &require_builtin(j["scenario"].get<std::string>());
  } catch (const ValidationError& e) {
    throw ValidationError(where("scenario") + ": " + e.what());
  }
  if (j.contains("schema") && j["schema"] != kScenarioSchema) {
    throw ValidationError(fmt::format("{}: schema must be \"{}\"", where("schema"), kScenarioSchema));
  }
  if (j.contains("pipeline") && j["pipeline"] != s.pipeline()) {
    throw ValidationError(fmt::format("{}: scenario {} uses the {} pipeline", where("pipeline"), s.kind(), s.pipeline()));
  }
  for (const char* key : {"name", "output"}) {
    if (j.contains(key) && !j[key].is_string()) throw ValidationError(where(key) + ": " + key + " must be a string");
  }
  s.name = j.value("name", s.kind());
  s.output = j.value("output", "out/" + s.name);

  std::vector<std::string> known;
  for (const Param& p : s.builtin->params) {
    known.push_back(p.path);
    s.values[p.path] = p.value;
  }
  std::vector<std::string> given;
  nlohmann::json body = j;
  for (const char* key : {"schema", "scenario", "pipeline", "name", "output", "cameras"}) body.erase(key);
  detail::flatten(body, "", given);
  if (j.contains("cameras")) given.push_back("cameras");
  for (const std::string& path : given) {
    auto it = std::find_if(s.builtin->params.begin(), s.builtin->params.end(),
                           [&](const Param& p) { return p.path == path; });
    if (it == s.builtin->params.end()) {
      std::string msg = fmt::format("{}: unknown parameter '{}' for scenario {}", where(path), path, s.kind());
      auto near = detail::closest(path, known);
      if (!near.empty()) msg += " (did you mean " + near.front() + "?)";
      throw ValidationError(msg);
    }
    const nlohmann::json& v = *detail::lookup(j, path);
    detail::check_value(*it, v, where(path));
    s.values[path] = OJ::parse(v.dump());
  }

  // Cross-parameter rules.
  if (s.kind() == "sphere-inflate" && !(s.number("geometry.colatitude_lo") < s.number("geometry.colatitude_hi"))) {
    throw ValidationError(where("geometry.colatitude_hi") + ": colatitude_hi must exceed colatitude_lo");
  }
  if (s.values.contains("geometry.l0") && s.number("geometry.l") < s.number("geometry.l0")) {
    throw ValidationError(where("geometry.l") + ": geometry.l must be at least geometry.l0 (stretch >= 1)");
  }
  if (s.values.contains("dots.row_lo") && s.integer("dots.row_hi") <= s.integer("dots.row_lo")) {
    throw ValidationError(where("dots.row_hi") + ": dots.row_hi must exceed dots.row_lo");
  }
  if (s.values.contains("cameras") && !s.value("cameras").is_null()) {
    for (int k = 0; k < 2; ++k) {
      try {
        camera_from_json(nlohmann::json::parse(s.value("cameras")[k].dump()));
      } catch (const Error& e) {
        throw ValidationError(fmt::format("{}: {}", where("cameras." + std::to_string(k)), e.what()));
      }
    }
  }
  if (s.values.contains("tracks.samples")) {
    bool has_samples = !s.text("tracks.samples").empty(), has_ref = !s.text("tracks.reference").empty();
    if (has_samples != has_ref) {
      throw ValidationError(where(has_samples ? "tracks.samples" : "tracks.reference") +
                            ": tracks.samples and tracks.reference must be given together");
    }
    for (const char* key : {"tracks.samples", "tracks.reference"}) {
      if (s.text(key).empty()) continue;
      if (!std::filesystem::exists(base_dir / s.text(key))) {
        throw ValidationError(fmt::format("{}: file not found: {}", where(key), (base_dir / s.text(key)).string()));
      }
    }
  }
  return s;
}

inline Scenario load_scenario(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ValidationError("cannot open scenario file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), file.string(), file.parent_path().empty() ? "." : file.parent_path());
}

// ---------------------------------------------------------------------------
// Field evaluation

struct FieldRow {
  int i = 0, j = 0;
  Vec2 coords = Vec2::Zero();
  Vec3 position = Vec3::Zero();
  std::array<double, 2> strain{};      // principal Green-Lagrange strains
  std::array<Vec3, 2> strain_dir;      // spatial directions
  std::array<double, 2> curvature{};   // principal curvatures of the deformed surface
  std::array<Vec3, 2> curvature_dir;
  Mat2 h = Mat2::Zero();               // change of curvature, reference orthonormal frame
  double rotation_term = 0.0;          // max |component| of the term driven by dA
  double route_gap = 0.0;              // max |rotor route - classical route|
  TraceInvariants e, hh;
  EnergyDensity density;
  double theta = 0.0;
  Vec3 axis = Vec3::Zero();
  double weight = 0.0;                 // reference area represented by the point
  int flags = 0;                       // 1: rotor branch ambiguous, 2: reduced accuracy
};

inline const char* fields_header() {
  return "i,j,x1,x2,x,y,z,"
         "strain1,strain2,strain1_dx,strain1_dy,strain1_dz,strain2_dx,strain2_dy,strain2_dz,"
         "curvature1,curvature2,curvature1_dx,curvature1_dy,curvature1_dz,curvature2_dx,curvature2_dy,curvature2_dz,"
         "h11,h12,h22,rotation_term,route_gap,"
         "trE2,trE_sq,trH2,trH_sq,stretch_density,bend_density,"
         "theta,axis_x,axis_y,axis_z,area_weight,flags";
}

inline double max_abs(const Mat2& m) { return m.cwiseAbs().maxCoeff(); }

inline FieldRow field_row(const KinematicState& s, const Material& m) {
  FieldRow r;
  r.coords = s.coords;
  r.position = s.spatial.position;
  PrincipalDecomposition pe = principal_decomposition(TangentTensor{s.strain, s.reference.ortho});
  for (int k = 0; k < 2; ++k) {
    r.strain[k] = pe.values[k];
    r.strain_dir[k] = ga::apply_rotor(s.rotor, pe.vectors[k]);
  }
  PrincipalDecomposition pb = principal_decomposition(s.b_spatial);
  for (int k = 0; k < 2; ++k) {
    r.curvature[k] = pb.values[k];
    r.curvature_dir[k] = pb.vectors[k];
  }
  if (s.branch_ambiguous) {
    r.h = s.h_classical;
    r.flags |= 1;
  } else {
    r.h = 0.5 * (s.h_rotor.h + s.h_rotor.h.transpose());
    r.rotation_term = max_abs(s.h_rotor.rotation_term);
    r.route_gap = max_abs(s.h_rotor.h - s.h_classical);
  }
  if (s.reduced_accuracy) r.flags |= 2;
  r.e = trace_invariants(s.strain);
  r.hh = trace_invariants(r.h);
  r.density = koiter_density(r.e, r.hh, m);
  r.theta = s.a.norm();
  if (r.theta > 1e-12) r.axis = ga::dual_axis(s.a) / r.theta;
  return r;
}

struct FieldTable {
  int n1 = 0, n2 = 0;
  std::vector<FieldRow> rows;
  std::vector<bool> interior;
};

/// Fields on an n x n grid over the deformation's domain, with trapezoid
/// area weights (periodic directions weigh every point equally).
inline FieldTable evaluate_fields(const Deformation& def, int n, const Material& m, const KinematicOptions& opts = {}) {
  Grid2 grid(def.domain(), n, n);
  std::vector<KinematicState> states = evaluate_grid(def, grid, opts);
  FieldTable t{n, n, {}, {}};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const KinematicState& s = states[grid.index(i, j)];
      FieldRow r = field_row(s, m);
      r.i = i;
      r.j = j;
      double w = std::sqrt(s.reference.metric.determinant()) * grid.spacing(0) * grid.spacing(1);
      auto edge = [&](int k, int idx) { return !grid.domain().periodic[k] && (idx == 0 || idx == n - 1); };
      if (edge(0, i)) w *= 0.5;
      if (edge(1, j)) w *= 0.5;
      r.weight = w;
      t.rows.push_back(r);
      t.interior.push_back(grid.interior(i, j));
    }
  }
  return t;
}

inline void write_fields_csv(std::ostream& out, const FieldTable& t) {
  out << fields_header() << '\n';
  auto g = [](double v) { return fmt::format("{:.9g}", v == 0.0 ? 0.0 : v); };
  for (const FieldRow& r : t.rows) {
    std::string line = fmt::format("{},{}", r.i, r.j);
    auto add = [&](double v) {
      line += ',';
      line += g(v);
    };
    auto add3 = [&](const Vec3& v) {
      for (int k = 0; k < 3; ++k) add(v[k]);
    };
    add(r.coords.x());
    add(r.coords.y());
    add3(r.position);
    add(r.strain[0]);
    add(r.strain[1]);
    add3(r.strain_dir[0]);
    add3(r.strain_dir[1]);
    add(r.curvature[0]);
    add(r.curvature[1]);
    add3(r.curvature_dir[0]);
    add3(r.curvature_dir[1]);
    add(r.h(0, 0));
    add(r.h(0, 1));
    add(r.h(1, 1));
    add(r.rotation_term);
    add(r.route_gap);
    add(r.e.tr_sq);
    add(r.e.sq_tr);
    add(r.hh.tr_sq);
    add(r.hh.sq_tr);
    add(r.density.stretching);
    add(r.density.bending);
    add(r.theta);
    add3(r.axis);
    add(r.weight);
    line += fmt::format(",{}", r.flags);
    out << line << '\n';
  }
}

/// Area integrals and averages of the field table.
inline OJ integrate(const FieldTable& t) {
  double area = 0.0, s = 0.0, b = 0.0, e2 = 0.0, esq = 0.0, h2 = 0.0, hsq = 0.0;
  double gap = 0.0, hmax = 0.0, rot = 0.0;
  int ambiguous = 0;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const FieldRow& r = t.rows[k];
    area += r.weight;
    s += r.weight * r.density.stretching;
    b += r.weight * r.density.bending;
    e2 += r.weight * r.e.tr_sq;
    esq += r.weight * r.e.sq_tr;
    h2 += r.weight * r.hh.tr_sq;
    hsq += r.weight * r.hh.sq_tr;
    if (r.flags & 1) ++ambiguous;
    rot = std::max(rot, r.rotation_term);
    if (!t.interior[k]) continue;
    gap = std::max(gap, r.route_gap);
    hmax = std::max(hmax, max_abs(r.h));
  }
  OJ j;
  j["area"] = area;
  j["energy"] = {{"stretching", s},
                 {"bending", b},
                 {"stretch_density", s / area},
                 {"bend_density", b / area},
                 {"ratio", b > 0.0 ? OJ(s / b) : OJ(nullptr)}};
  j["averages"] = {{"trE2", e2 / area}, {"trE_sq", esq / area}, {"trH2", h2 / area}, {"trH_sq", hsq / area}};
  j["routes"] = {{"max_gap_interior", gap},
                 {"max_h_interior", hmax},
                 {"max_rotation_term", rot},
                 {"branch_ambiguous_points", ambiguous}};
  return j;
}

inline OJ to_json(const ScalingReport& r) {
  return {{"lambda", r.lambda},
          {"theta1", r.theta1},
          {"h_estimate", {r.d1theta1, r.d1theta2, r.d2theta2}},
          {"small_angle_exceeded", r.small_angle_exceeded},
          {"trE2", r.strain.tr_sq},
          {"trH2", r.curvature.tr_sq},
          {"stretch_density", r.magnitude.stretching},
          {"bend_density", r.magnitude.bending},
          {"ratio", r.ratio()},
          {"raw", {{"stretch_density", r.raw.stretching}, {"bend_density", r.raw.bending}, {"ratio", r.raw_ratio()}}}};
}

// ---------------------------------------------------------------------------
// Runners

struct RunOptions {
  std::optional<int> grid;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
};

struct RunResult {
  std::filesystem::path out_dir;
  FieldTable fields;
  OJ summary;
};

namespace detail {

inline Material material(const Scenario& s) {
  Material m{s.number("material.E"), s.number("material.nu"), s.number("material.h")};
  m.validate();
  return m;
}

inline models::TubeSquash tube(const Scenario& s) {
  return {s.number("geometry.a"), s.number("geometry.l0"), s.number("geometry.l"), s.number("geometry.collapse")};
}

inline std::vector<Vec2> dot_labels(const Scenario& s) {
  std::vector<Vec2> out;
  double pitch = s.number("dots.pitch");
  for (int c = 0; c < s.integer("dots.columns"); ++c) {
    for (int r = s.integer("dots.row_lo"); r <= s.integer("dots.row_hi"); ++r) out.emplace_back(c * pitch, r * pitch);
  }
  return out;
}

/// Chart coordinates (axial, angle) of a label (axial, arc length) on the
/// face of the tube that looks toward the cameras.
inline Vec2 face_chart(double a, double x1, double x2) { return {x1, 0.5 * std::numbers::pi + x2 / a}; }

/// Uniform index in [0, n) from a 64-bit engine, identical on every platform.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// The dot grid on the tube face, ids in label order.
inline DotPattern stereo_pattern(const Scenario& s) {
  const double a = s.number("geometry.a");
  auto labels = dot_labels(s);
  DotPattern pattern;
  pattern.diameter = s.number("dots.diameter");
  for (std::size_t k = 0; k < labels.size(); ++k) {
    Vec2 c = face_chart(a, labels[k].x(), labels[k].y());
    pattern.dots.push_back({static_cast<int>(k), labels[k].x(), labels[k].y(), c});
  }
  return pattern;
}

struct StereoState {
  std::map<int, Vec3> points;  // dot id -> triangulated position
  std::size_t visible[2]{};
  std::size_t detected[2]{};
  std::size_t truth_pairs = 0;
  std::size_t pairs = 0;
  std::size_t correct = 0;
  double rms = 0.0;
  double max_error = 0.0;
  double max_gap = 0.0;
};

inline OJ to_json(const StereoState& st) {
  return {{"visible", {st.visible[0], st.visible[1]}},
          {"detected", {st.detected[0], st.detected[1]}},
          {"pairable", st.truth_pairs},
          {"paired", st.pairs},
          {"correct", st.correct},
          {"pairing_accuracy", st.pairs ? OJ(double(st.correct) / double(st.pairs)) : OJ(nullptr)},
          {"pairing_coverage", st.truth_pairs ? OJ(double(st.correct) / double(st.truth_pairs)) : OJ(nullptr)},
          {"reconstruction_rms", st.rms},
          {"reconstruction_max", st.max_error},
          {"max_ray_gap", st.max_gap}};
}

/// Renders one state, detects, pairs from seeds and triangulates. Dot
/// identities come from the renderer (nearest projected centre), standing in
/// for the manual grid labelling of real footage.
inline StereoState reconstruct(const std::array<Camera, 2>& cams, const Chart& surface, const DotPattern& pattern,
                               const Scenario& s, std::mt19937_64& rng) {
  StereoState st;
  auto views = render_synthetic(cams, surface, pattern);
  std::array<std::vector<DotDetection>, 2> det;
  std::array<std::vector<int>, 2> label;
  std::map<int, Vec3> truth;
  double q = s.number("quantization");
  double step_max = 0.0;
  for (int k = 0; k < 2; ++k) {
    const View& v = views[k];
    st.visible[k] = v.dots.size();
    double sigma = 0.0;
    for (const ProjectedDot& d : v.dots) {
      sigma += d.sigma_px / static_cast<double>(v.dots.size());
      truth[d.id] = d.position;
    }
    det[k] = mexican_hat_detect(v.image, std::max(1.0, sigma));
    st.detected[k] = det[k].size();
    for (const DotDetection& d : det[k]) {
      int best = -1;
      double bd = 0.5 * v.dots.front().radius_px;
      for (const ProjectedDot& p : v.dots) {
        double e = (p.pixel - d.pixel).norm();
        if (e < bd) {
          bd = e;
          best = p.id;
        }
      }
      label[k].push_back(best);
    }
    if (q > 0.0) {
      Vec3 centre = Vec3::Zero();
      for (const ProjectedDot& d : v.dots) centre += d.position / static_cast<double>(v.dots.size());
      double step = q * cams[k].magnification(cams[k].to_camera(centre).z());
      step_max = std::max(step_max, step);
      Vec2 offset(step * uniform01(rng), step * uniform01(rng));
      for (DotDetection& d : det[k]) d.pixel = quantize(d.pixel, step, offset);
    }
  }
  std::map<int, int> in2;
  for (std::size_t j = 0; j < label[1].size(); ++j) {
    if (label[1][j] >= 0) in2[label[1][j]] = static_cast<int>(j);
  }
  std::vector<std::pair<int, int>> pool;
  for (std::size_t i = 0; i < label[0].size(); ++i) {
    auto it = in2.find(label[0][i]);
    if (label[0][i] >= 0 && it != in2.end()) pool.emplace_back(static_cast<int>(i), it->second);
  }
  st.truth_pairs = pool.size();
  auto n_seeds = static_cast<std::size_t>(s.integer("pairing.seeds"));
  if (pool.size() < n_seeds) {
    throw DegenerateGeometry(fmt::format("stereo: only {} dots visible in both views, {} seeds requested", pool.size(),
                                         n_seeds));
  }
  for (std::size_t k = 0; k < n_seeds; ++k) std::swap(pool[k], pool[k + uniform_index(rng, pool.size() - k)]);
  pool.resize(n_seeds);
  PairingOptions po;
  po.radius_px = s.number("pairing.radius");
  // Rounding moves each view's offset from a near-horizontal epipolar line by
  // up to half a step, so the tolerance grows by one step.
  po.epipolar_tolerance_px = s.number("pairing.epipolar_tolerance") + step_max;
  po.min_seeds = std::min<int>(po.min_seeds, static_cast<int>(n_seeds));
  Pairing p = pair_points(det[0], det[1], pool, cams[0], cams[1], po);
  st.pairs = p.pairs.size();
  double sq = 0.0;
  for (auto [i, j] : p.pairs) {
    int id = label[0][i];
    Triangulation tr = triangulate(cams[0], cams[1], det[0][i].pixel, det[1][j].pixel);
    st.max_gap = std::max(st.max_gap, tr.gap);
    if (id < 0 || label[1][j] != id) continue;
    ++st.correct;
    double e = (tr.point - truth.at(id)).norm();
    sq += e * e;
    st.max_error = std::max(st.max_error, e);
    st.points[id] = tr.point;
  }
  st.rms = st.correct ? std::sqrt(sq / static_cast<double>(st.correct)) : 0.0;
  return st;
}

inline std::array<Camera, 2> cameras(const Scenario& s) {
  if (!s.value("cameras").is_null()) {
    return {camera_from_json(nlohmann::json::parse(s.value("cameras")[0].dump())),
            camera_from_json(nlohmann::json::parse(s.value("cameras")[1].dump()))};
  }
  RigParams rig;
  rig.target = Vec3(0.5 * s.number("geometry.l"), 0.0, 0.0);
  rig.distance = s.number("rig.distance");
  rig.half_vergence_deg = s.number("rig.half_vergence");
  Camera& c = rig.intrinsics;
  c.focal_length = s.number("camera.focal_length");
  c.pixel_pitch = s.number("camera.pixel_pitch");
  c.width = s.integer("camera.width");
  c.height = s.integer("camera.height");
  c.principal_point = Vec2(0.5 * (c.width - 1), 0.5 * (c.height - 1));
  c.k1 = s.number("camera.k1");
  c.validate();
  return stereo_rig(rig);
}

inline Deformation analytic_deformation(const Scenario& s) {
  const std::string& k = s.kind();
  if (k == "sphere-inflate") {
    double deg = std::numbers::pi / 180.0;
    return models::sphere_inflate(s.number("geometry.r0"), s.number("geometry.r1"),
                                  s.number("geometry.colatitude_lo") * deg, s.number("geometry.colatitude_hi") * deg);
  }
  if (k == "plate-bend") {
    return models::plate_roll(s.number("geometry.width"), s.number("geometry.height"), s.number("geometry.radius"));
  }
  return models::tube_squash(tube(s));
}

inline Deformation fit_states(const std::map<int, Vec3>& ref, const std::map<int, Vec3>& spa,
                              const std::vector<Vec2>& labels, int degree) {
  std::vector<SurfacePoint> r, p;
  for (const auto& [id, x] : ref) {
    auto it = spa.find(id);
    if (it == spa.end()) continue;
    const Vec2& l = labels.at(static_cast<std::size_t>(id));
    r.push_back({l.x(), l.y(), x});
    p.push_back({l.x(), l.y(), it->second});
  }
  PolySurface fr = PolySurface::fit(r, degree);
  PolySurface fs = PolySurface::fit(p, degree, PolyBasis::per_coordinate, fr.domain());
  return {fr.chart("reference-fit"), fs.chart("spatial-fit")};
}

/// RMS over the grid of |E_fit - E_model| / RMS |E_model|, with labels
/// mapped onto the tube face.
inline double strain_error(const Deformation& fit, const Deformation& model, double a, int n) {
  Grid2 grid(fit.domain(), n, n);
  double num = 0.0, den = 0.0;
  for (int i = 1; i + 1 < n; ++i) {
    for (int j = 1; j + 1 < n; ++j) {
      Vec2 x = grid.coords(i, j);
      Vec2 c = face_chart(a, x.x(), x.y());
      Mat2 ef = strain(deformation_gradient(fit, x.x(), x.y()));
      Mat2 em = strain(deformation_gradient(model, c.x(), c.y()));
      num += (ef - em).squaredNorm();
      den += em.squaredNorm();
    }
  }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

}  // namespace detail

/// Runs a scenario and writes fields.csv and summary.json to the output
/// directory (the scenario's `output`, unless overridden).
inline RunResult run(Scenario s, const RunOptions& o = {}) {
  if (o.grid) {
    if (*o.grid < 3) throw ValidationError("--grid must be at least 3");
    s.set("grid", *o.grid);
  }
  if (o.seed) s.set("seed", *o.seed);
  RunResult res;
  res.out_dir = o.out ? *o.out : std::filesystem::path(s.output);
  const int n = s.integer("grid");
  const Material m = detail::material(s);
  std::mt19937_64 rng(s.value("seed").get<std::uint64_t>());

  OJ summary;
  summary["schema"] = kSummarySchema;
  summary["scenario"] = s.kind();
  summary["name"] = s.name;
  summary["pipeline"] = s.pipeline();
  OJ params;
  for (const Param& p : s.builtin->params) params[p.path] = s.value(p.path);
  summary["parameters"] = params;

  std::optional<Deformation> def;
  OJ extra;
  if (s.pipeline() == "analytic") {
    def = detail::analytic_deformation(s);
  } else if (s.pipeline() == "stereo") {
    auto cams = detail::cameras(s);
    const double a = s.number("geometry.a");
    auto labels = detail::dot_labels(s);
    DotPattern pattern = detail::stereo_pattern(s);
    models::TubeSquash t = detail::tube(s);
    Deformation model = models::tube_squash(t);
    detail::StereoState ref = detail::reconstruct(cams, model.reference(), pattern, s, rng);
    detail::StereoState spa = detail::reconstruct(cams, model.spatial(), pattern, s, rng);
    def = detail::fit_states(ref.points, spa.points, labels, s.integer("fit.degree"));
    extra["stereo"] = {{"cameras", {to_json(cams[0]), to_json(cams[1])}},
                       {"reference", detail::to_json(ref)},
                       {"spatial", detail::to_json(spa)},
                       {"strain_error_vs_model", detail::strain_error(*def, model, a, n)}};
  } else {
    const double a = s.number("geometry.a");
    std::vector<PointTrack> tracks;
    bool synthetic = s.text("tracks.samples").empty();
    models::TubeSquashMotion motion{detail::tube(s), s.number("motion.amplitude"), s.number("motion.frequency")};
    if (synthetic) {
      const double rate = s.number("sampling.rate");
      auto count = static_cast<std::size_t>(std::llround(s.number("sampling.duration") * rate));
      std::vector<double> times(count);
      std::vector<Deformation> frames;
      for (std::size_t k = 0; k < count; ++k) {
        times[k] = static_cast<double>(k) / rate;
        frames.push_back(models::tube_squash(motion.at(times[k])));
      }
      Chart ref = make_cylinder(a, s.number("geometry.l0"));
      auto pos = [&](double t, double x1, double x2) {
        auto k = static_cast<std::size_t>(std::llround(t * rate));
        Vec2 c = detail::face_chart(a, x1, x2);
        return frames[k].spatial().position(c.x(), c.y());
      };
      auto reference = [&](double x1, double x2) {
        Vec2 c = detail::face_chart(a, x1, x2);
        return ref.position(c.x(), c.y());
      };
      auto labels = detail::dot_labels(s);
      tracks = sample_tracks(pos, reference, labels, times, s.number("quantization"));
    } else {
      std::ifstream samples(s.base_dir / s.text("tracks.samples"));
      std::ifstream reference(s.base_dir / s.text("tracks.reference"));
      tracks = read_tracks_csv(samples, reference, s.text("tracks.samples"), s.text("tracks.reference"));
    }
    SinusoidOptions so;
    so.n_terms = s.integer("fit.terms");
    so.phase = s.flag("fit.phase");
    std::vector<TrackFit> fits;
    double resid = 0.0;
    for (const PointTrack& tr : tracks) {
      fits.push_back(fit_track(tr, so));
      for (int c = 0; c < 3; ++c) resid = std::max(resid, fits.back().component[c].residual_rms);
    }
    const double t = s.number("time");
    def = tracks_to_deformation(fits, t, s.integer("fit.degree"));
    extra["tracks"] = {{"count", tracks.size()},
                       {"samples", tracks.empty() ? 0 : tracks.front().t.size()},
                       {"synthetic", synthetic},
                       {"max_fit_residual_rms", resid}};
    if (synthetic) {
      extra["tracks"]["strain_error_vs_model"] =
          detail::strain_error(*def, models::tube_squash(motion.at(t)), a, n);
    }
  }

  res.fields = evaluate_fields(*def, n, m);
  summary["grid"] = {n, n};
  summary["fields"] = {{"file", "fields.csv"}, {"schema", kFieldsSchema}, {"rows", res.fields.rows.size()}};
  OJ totals = integrate(res.fields);
  for (auto& [k, v] : totals.items()) summary[k] = v;
  if (s.values.contains("geometry.l0")) {
    ScalingReport r = scaling_estimates({s.number("geometry.a"), s.number("geometry.l0"), s.number("geometry.l"), m});
    summary["scaling"] = to_json(r);
    const OJ& avg = summary["averages"];
    summary["comparison"] = {{"trE2_over_estimate", avg["trE2"].get<double>() / r.strain.tr_sq},
                             {"trH2_over_estimate", avg["trH2"].get<double>() / r.curvature.tr_sq}};
  } else {
    summary["scaling"] = nullptr;
  }
  for (auto& [k, v] : extra.items()) summary[k] = v;
  res.summary = summary;

  std::filesystem::create_directories(res.out_dir);
  {
    std::ofstream csv(res.out_dir / "fields.csv", std::ios::binary);
    write_fields_csv(csv, res.fields);
    if (!csv) throw Error("cannot write " + (res.out_dir / "fields.csv").string());
  }
  {
    std::ofstream js(res.out_dir / "summary.json", std::ios::binary);
    js << summary.dump(2) << '\n';
    if (!js) throw Error("cannot write " + (res.out_dir / "summary.json").string());
  }
  return res;
}

}  // namespace shellkin::scenario
