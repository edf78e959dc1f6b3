#include "maepde/bench/container.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

namespace maepde::bench {

using numkit::Shape;
using numkit::Tensor;

namespace {

constexpr char kMagic[5] = {'P', 'D', 'E', 'D', 'S'};

using Kind = DatasetError::Kind;

nlohmann::json forcing_json(const pdegen::ForcingParams& f) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : f.terms) terms.push_back({t.amp, t.omega, t.lx, t.ly, t.phase});
  return {{"length", f.length}, {"terms", terms}};
}

pdegen::ForcingParams forcing_from(const nlohmann::json& j) {
  pdegen::ForcingParams f;
  f.length = j.at("length").get<double>();
  for (const auto& t : j.at("terms")) {
    f.terms.push_back({t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<int>(), t.at(3).get<int>(),
                       t.at(4).get<double>()});
  }
  return f;
}

template <class T>
void put(std::string& out, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    out.append(bytes.data(), sizeof(T));
  } else {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    out.append(bytes, sizeof(T));
  }
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    char bytes[sizeof(T)];
    std::memcpy(bytes, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) throw DatasetError(Kind::Truncated, std::string("truncated payload while reading ") + what);
  }

  std::string data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(Kind::Io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json parse_header(Reader& r) {
  const std::string magic = r.bytes(sizeof(kMagic), "magic");
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) throw DatasetError(Kind::BadMagic, "bad magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kDatasetVersion) {
    throw DatasetError(Kind::VersionMismatch, "version mismatch: file has " + std::to_string(version) + ", reader expects " +
                                                  std::to_string(kDatasetVersion));
  }
  const auto len = r.get<std::uint32_t>("header length");
  return nlohmann::json::parse(r.bytes(len, "header"));
}

}  // namespace

nlohmann::json to_json(const PdeSpec& s) {
  nlohmann::json j = {{"family", pdegen::family_name(s.family)},
                      {"coeffs", s.coeffs},
                      {"bc", pdegen::boundary_name(s.bc)},
                      {"ic", forcing_json(s.ic)},
                      {"pulse_center", s.pulse_center},
                      {"seed", s.seed}};
  if (s.forcing) j["forcing"] = forcing_json(*s.forcing);
  return j;
}

PdeSpec spec_from_json(const nlohmann::json& j) {
  PdeSpec s;
  s.family = pdegen::family_from_name(j.at("family").get<std::string>());
  s.coeffs = j.at("coeffs").get<std::map<std::string, double>>();
  s.bc = pdegen::boundary_from_name(j.at("bc").get<std::string>());
  s.ic = forcing_from(j.at("ic"));
  s.pulse_center = j.at("pulse_center").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("forcing")) s.forcing = forcing_from(j.at("forcing"));
  return s;
}

nlohmann::json to_json(const Grid& g) {
  return {{"nt", g.nt}, {"nx", g.nx}, {"ny", g.ny}, {"t0", g.t0}, {"t1", g.t1}, {"x0", g.x0},
          {"x1", g.x1}, {"y0", g.y0}, {"y1", g.y1}, {"periodic", g.periodic}};
}

Grid grid_from_json(const nlohmann::json& j) {
  Grid g;
  g.nt = j.at("nt").get<std::size_t>();
  g.nx = j.at("nx").get<std::size_t>();
  g.ny = j.at("ny").get<std::size_t>();
  g.t0 = j.at("t0").get<double>();
  g.t1 = j.at("t1").get<double>();
  g.x0 = j.at("x0").get<double>();
  g.x1 = j.at("x1").get<double>();
  g.y0 = j.at("y0").get<double>();
  g.y1 = j.at("y1").get<double>();
  g.periodic = j.at("periodic").get<bool>();
  return g;
}

void quantize_f32(FieldSample& s) {
  for (double& v : s.u.values()) v = static_cast<double>(static_cast<float>(v));
}

nlohmann::json dataset_header(const Dataset& ds) {
  nlohmann::json h;
  std::string family;
  bool mixed = false;
  std::map<std::string, std::pair<double, double>> ranges;
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& s : ds.samples) {
    const std::string f = pdegen::family_name(s.spec.family);
    if (family.empty()) family = f;
    mixed = mixed || f != family;
    for (const auto& [k, v] : s.spec.coeffs) {
      auto [it, fresh] = ranges.try_emplace(k, v, v);
      if (!fresh) it->second = {std::min(it->second.first, v), std::max(it->second.second, v)};
    }
    for (double v : s.u.values()) {
      const double q = static_cast<float>(v);
      sum += q;
      sq += q * q;
    }
    n += s.u.size();
  }
  const double mean = n ? sum / static_cast<double>(n) : 0.0;
  const double var = n ? std::max(sq / static_cast<double>(n) - mean * mean, 0.0) : 0.0;
  h["family"] = mixed ? "mixed" : family;
  h["count"] = ds.samples.size();
  if (!ds.samples.empty()) h["grid"] = to_json(ds.samples.front().grid);
  bool multires = false;
  for (const auto& s : ds.samples) multires = multires || !(s.grid == ds.samples.front().grid);
  h["multires"] = multires;
  nlohmann::json cr = nlohmann::json::object();
  for (const auto& [k, r] : ranges) cr[k] = {r.first, r.second};
  h["coefficient_ranges"] = cr;
  h["standardization"] = {{"mean", mean}, {"std", var > 0.0 ? std::sqrt(var) : 1.0}};
  h["master_seed"] = ds.master_seed;
  h["config"] = ds.config;
  return h;
}

void dataset_write(const Dataset& ds, const std::string& path) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kDatasetVersion);
  const std::string header = dataset_header(ds).dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const auto& s : ds.samples) {
    if (s.u.shape() != s.grid.field_shape()) {
      throw DatasetError(Kind::Inconsistent, "sample shape " + numkit::shape_str(s.u.shape()) + " does not match its grid");
    }
    const std::string spec = to_json(s.spec).dump();
    const std::string grid = to_json(s.grid).dump();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.size()));
    out += spec;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(grid.size()));
    out += grid;
    put<std::uint64_t>(out, s.u.size());
    for (double v : s.u.values()) put<float>(out, static_cast<float>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DatasetError(Kind::Io, "cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DatasetError(Kind::Io, "write failed for " + path);
}

nlohmann::json dataset_read_header(const std::string& path) {
  Reader r(read_file(path));
  return parse_header(r);
}

Dataset dataset_read(const std::string& path) {
  Reader r(read_file(path));
  const nlohmann::json h = parse_header(r);
  Dataset ds;
  ds.master_seed = h.at("master_seed").get<std::uint64_t>();
  ds.config = h.at("config");
  ds.mean = h.at("standardization").at("mean").get<double>();
  ds.std = h.at("standardization").at("std").get<double>();
  const auto count = h.at("count").get<std::size_t>();
  const bool multires = h.value("multires", false);
  const Grid header_grid = count ? grid_from_json(h.at("grid")) : Grid{};
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    FieldSample s;
    s.spec = spec_from_json(nlohmann::json::parse(r.bytes(r.get<std::uint32_t>("record"), "spec")));
    s.grid = grid_from_json(nlohmann::json::parse(r.bytes(r.get<std::uint32_t>("record"), "grid")));
    if (!multires && !(s.grid == header_grid)) {
      throw DatasetError(Kind::Inconsistent, "record " + std::to_string(i) + " grid differs from the header grid");
    }
    const auto n = r.get<std::uint64_t>("record");
    const Shape shape = s.grid.field_shape();
    if (n != numkit::shape_size(shape)) {
      throw DatasetError(Kind::Inconsistent, "record " + std::to_string(i) + " value count does not match its grid");
    }
    s.u = Tensor(shape);
    for (double& v : s.u.values()) v = r.get<float>("values");
    ds.samples.push_back(std::move(s));
  }
  if (!r.at_end()) throw DatasetError(Kind::Inconsistent, "trailing bytes after " + std::to_string(count) + " records");
  return ds;
}

}  // namespace maepde::bench
